"""S-neuron networks, RBF baselines and their shared ridge/GCV output layer."""
from .io import load_model, save_model
from .neuron import activation, design_matrix, s_neuron, smoothing_from_stats
from .rbf import RBF2, RBFK, RBFConfig, RBFModel, predict_rbf, rbf_sigma, train_rbf
from .ridge import RidgeFit, fit_output_layer, gcv_score, optimize_lambda, ridge_solve
from .snn import SNNConfig, SNNModel, predict_snn, train_snn

__all__ = [
    "RBF2", "RBFK", "RBFConfig", "RBFModel", "RidgeFit", "SNNConfig", "SNNModel",
    "activation", "design_matrix", "fit_output_layer", "gcv_score", "load_model",
    "optimize_lambda", "predict_rbf", "predict_snn", "rbf_sigma", "ridge_solve",
    "s_neuron", "save_model", "smoothing_from_stats", "train_rbf", "train_snn",
]
