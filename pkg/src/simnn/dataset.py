"""Schemas, heterogeneous records and the Horse Colic tasks.

A :class:`Dataset` keeps its cells in a float matrix (``NaN`` marks a missing
cell, discrete cells hold the level index). Fuzzy variables additionally keep
their membership-function parameters in a side array. Single records are
exposed as :data:`Example` tuples of plain Python values for callers that
want to work one record at a time.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np


class SchemaError(ValueError):
    """Malformed or inconsistent schema descriptor."""


class DataError(ValueError):
    """Raw data that does not conform to its schema."""


class Kind(str, Enum):
    CONTINUOUS = "continuous"
    ORDINAL = "ordinal"
    CATEGORICAL = "categorical"
    FUZZY = "fuzzy"


class Role(str, Enum):
    PREDICTOR = "predictor"
    TARGET = "target"
    IGNORED = "ignored"


FUZZY_FAMILIES = {"triangular": 3, "trapezoidal": 4}


class _Missing:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MISSING"

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()


@dataclass(frozen=True)
class FuzzySet:
    """Trapezoidal membership function with corners ``a <= b <= c <= d``.

    A triangular set is the special case ``b == c``.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a <= self.b <= self.c <= self.d):
            raise DataError(f"fuzzy corners must be ordered, got {self.params()}")

    @classmethod
    def triangular(cls, left: float, peak: float, right: float) -> "FuzzySet":
        return cls(left, peak, peak, right)

    def params(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def membership(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        out[(u >= self.b) & (u <= self.c)] = 1.0
        if self.b > self.a:
            m = (u > self.a) & (u < self.b)
            out[m] = (u[m] - self.a) / (self.b - self.a)
        if self.d > self.c:
            m = (u > self.c) & (u < self.d)
            out[m] = (self.d - u[m]) / (self.d - self.c)
        return out


Value = Union[float, int, FuzzySet, _Missing]
Example = tuple  # tuple[Value, ...], aligned with the schema


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: Kind
    role: Role
    column: int
    levels: tuple[str, ...] = ()
    labels: tuple[str, ...] = ()
    missing_codes: tuple[str, ...] = ()
    aliases: tuple[tuple[str, str], ...] = ()
    family: str | None = None

    def __post_init__(self):
        if self.kind in (Kind.ORDINAL, Kind.CATEGORICAL):
            if not self.levels:
                raise SchemaError(f"{self.name}: {self.kind.value} variable needs levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"{self.name}: duplicate levels {list(self.levels)}")
            if self.labels and len(self.labels) != len(self.levels):
                raise SchemaError(f"{self.name}: labels and levels differ in length")
        elif self.levels:
            raise SchemaError(f"{self.name}: levels given for a {self.kind.value} variable")
        if self.kind is Kind.FUZZY and self.family not in FUZZY_FAMILIES:
            raise SchemaError(
                f"{self.name}: fuzzy family must be one of {sorted(FUZZY_FAMILIES)}, got {self.family!r}"
            )
        if self.column < 1:
            raise SchemaError(f"{self.name}: column index is 1-based, got {self.column}")

    @property
    def is_discrete(self) -> bool:
        return self.kind in (Kind.ORDINAL, Kind.CATEGORICAL)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level_index(self, code: str) -> int:
        code = dict(self.aliases).get(code, code)
        try:
            return self.levels.index(code)
        except ValueError:
            raise DataError(f"{self.name}: code {code!r} not in levels {list(self.levels)}") from None

    def with_role(self, role: Role) -> "VariableSpec":
        return VariableSpec(
            self.name, self.kind, role, self.column, self.levels, self.labels,
            self.missing_codes, self.aliases, self.family,
        )

    def to_dict(self) -> dict:
        d = {"name": self.name, "column": self.column, "kind": self.kind.value, "role": self.role.value}
        if self.levels:
            d["levels"] = list(self.levels)
        if self.labels:
            d["labels"] = list(self.labels)
        if self.missing_codes:
            d["missing_codes"] = list(self.missing_codes)
        if self.aliases:
            d["aliases"] = dict(self.aliases)
        if self.family:
            d["family"] = self.family
        return d


@dataclass(frozen=True)
class Schema:
    variables: tuple[VariableSpec, ...]
    name: str = ""
    # raw tokens per line; defaults to the highest column used
    width: int | None = None

    def __post_init__(self):
        names = [v.name for v in self.variables]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise SchemaError(f"duplicate variable names: {dup}")
        cols = [v.column for v in self.variables]
        if len(set(cols)) != len(cols):
            raise SchemaError("two variables share a raw column")
        if self.width is not None and cols and self.width < max(cols):
            raise SchemaError(f"width {self.width} is smaller than the highest column {max(cols)}")

    def __len__(self) -> int:
        return len(self.variables)

    def __iter__(self) -> Iterator[VariableSpec]:
        return iter(self.variables)

    def __getitem__(self, k: int) -> VariableSpec:
        return self.variables[k]

    def index(self, name: str) -> int:
        for k, v in enumerate(self.variables):
            if v.name == name:
                return k
        raise KeyError(name)

    @property
    def predictors(self) -> tuple[int, ...]:
        return tuple(k for k, v in enumerate(self.variables) if v.role is Role.PREDICTOR)

    @property
    def targets(self) -> tuple[int, ...]:
        return tuple(k for k, v in enumerate(self.variables) if v.role is Role.TARGET)

    @property
    def n_columns(self) -> int:
        if self.width is not None:
            return self.width
        return max(v.column for v in self.variables)

    def kind_counts(self, role: Role = Role.PREDICTOR) -> dict[str, int]:
        counts = {k.value: 0 for k in Kind}
        for v in self.variables:
            if v.role is role:
                counts[v.kind.value] += 1
        return counts

    def to_dict(self) -> dict:
        d = {"format": "simnn-schema", "version": 1, "name": self.name}
        if self.width is not None:
            d["width"] = self.width
        d["variables"] = [v.to_dict() for v in self.variables]
        return d


def _spec_from_entry(entry: Mapping, position: int) -> VariableSpec:
    if not isinstance(entry, Mapping):
        raise SchemaError(f"entry {position} is not an object")
    for key in ("name", "kind", "role", "column"):
        if key not in entry:
            raise SchemaError(f"entry {position} ({entry.get('name', '?')}): missing field {key!r}")
    try:
        kind = Kind(entry["kind"])
    except ValueError:
        raise SchemaError(f"{entry['name']}: unknown kind {entry['kind']!r}") from None
    try:
        role = Role(entry["role"])
    except ValueError:
        raise SchemaError(f"{entry['name']}: unknown role {entry['role']!r}") from None
    column = entry["column"]
    if not isinstance(column, int) or isinstance(column, bool):
        raise SchemaError(f"{entry['name']}: column must be an integer")
    aliases = entry.get("aliases", {})
    if not isinstance(aliases, Mapping):
        raise SchemaError(f"{entry['name']}: aliases must map codes to codes")
    return VariableSpec(
        name=str(entry["name"]),
        kind=kind,
        role=role,
        column=column,
        levels=tuple(str(x) for x in entry.get("levels", ())),
        labels=tuple(str(x) for x in entry.get("labels", ())),
        missing_codes=tuple(str(x) for x in entry.get("missing_codes", ())),
        aliases=tuple(sorted((str(k), str(v)) for k, v in aliases.items())),
        family=entry.get("family"),
    )


def schema_from_dict(doc: Mapping) -> Schema:
    if not isinstance(doc, Mapping) or not isinstance(doc.get("variables"), list):
        raise SchemaError("descriptor must be an object with a 'variables' list")
    specs = tuple(_spec_from_entry(e, i) for i, e in enumerate(doc["variables"]))
    if not specs:
        raise SchemaError("descriptor lists no variables")
    width = doc.get("width")
    if width is not None and (not isinstance(width, int) or isinstance(width, bool)):
        raise SchemaError("width must be an integer")
    return Schema(specs, name=str(doc.get("name", "")), width=width)


def parse_schema(text: str) -> Schema:
    """Parse a JSON schema descriptor (see ``docs/schema.md`` for the grammar)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed descriptor: {exc}") from None
    return schema_from_dict(doc)


def load_schema(path: str | Path) -> Schema:
    return parse_schema(Path(path).read_text())


def horse_colic_schema() -> Schema:
    return parse_schema(resources.files("simnn.data").joinpath("horse_colic_schema.json").read_text())


def horse_colic_files() -> list[Path]:
    """Paths to the shipped UCI files (300 training + 68 test records)."""
    root = resources.files("simnn.data")
    return [Path(str(root.joinpath("horse-colic.data"))), Path(str(root.joinpath("horse-colic.test")))]


# --------------------------------------------------------------------------
# Datasets
# --------------------------------------------------------------------------


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: Schema
    values: np.ndarray
    fuzzy: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape[1] != len(self.schema):
            raise DataError(f"values shape {values.shape} does not match schema of {len(self.schema)}")
        object.__setattr__(self, "values", values)
        fz = {}
        for k, v in enumerate(self.schema):
            if v.kind is Kind.FUZZY:
                arr = self.fuzzy.get(k)
                if arr is None:
                    arr = np.full((len(values), 4), np.nan)
                arr = _frozen(arr)
                if arr.shape != (len(values), 4):
                    raise DataError(f"{v.name}: fuzzy parameter array has shape {arr.shape}")
                fz[k] = arr
        object.__setattr__(self, "fuzzy", fz)
        for k, v in enumerate(self.schema):
            if v.is_discrete:
                col = values[:, k]
                ok = np.isnan(col) | ((col >= 0) & (col < v.n_levels) & (col == np.round(col)))
                if not ok.all():
                    raise DataError(f"{v.name}: level index out of range")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def example(self, i: int) -> Example:
        row = self.values[i]
        out = []
        for k, v in enumerate(self.schema):
            x = row[k]
            if math.isnan(x):
                out.append(MISSING)
            elif v.is_discrete:
                out.append(int(x))
            elif v.kind is Kind.FUZZY:
                out.append(FuzzySet(*(float(t) for t in self.fuzzy[k][i])))
            else:
                out.append(float(x))
        return tuple(out)

    def examples(self) -> Iterator[Example]:
        for i in range(len(self)):
            yield self.example(i)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.schema, self.values[idx], {k: a[idx] for k, a in self.fuzzy.items()})

    def select(self, columns: Sequence[int], schema: Schema) -> "Dataset":
        cols = list(columns)
        fz = {j: self.fuzzy[k] for j, k in enumerate(cols) if k in self.fuzzy}
        return Dataset(schema, self.values[:, cols], fz)

    @classmethod
    def from_examples(cls, schema: Schema, examples: Iterable[Sequence[Value]]) -> "Dataset":
        rows, fz = [], {k: [] for k, v in enumerate(schema) if v.kind is Kind.FUZZY}
        for ex in examples:
            if len(ex) != len(schema):
                raise DataError(f"example has {len(ex)} values, schema has {len(schema)}")
            row = []
            for k, (v, x) in enumerate(zip(schema, ex)):
                row.append(_cell(v, x))
                if k in fz:
                    fz[k].append(x.params() if isinstance(x, FuzzySet) else (np.nan,) * 4)
            rows.append(row)
        values = np.array(rows, dtype=float).reshape(len(rows), len(schema))
        return cls(schema, values, {k: np.array(a, dtype=float).reshape(-1, 4) for k, a in fz.items()})

    # -- targets --------------------------------------------------------

    @property
    def target_index(self) -> int:
        t = self.schema.targets
        if len(t) != 1:
            raise DataError(f"dataset has {len(t)} target variables, expected exactly one")
        return t[0]

    @property
    def classes(self) -> tuple[str, ...]:
        v = self.schema[self.target_index]
        return v.labels or v.levels

    def target_classes(self) -> np.ndarray:
        col = self.values[:, self.target_index]
        if np.isnan(col).any():
            raise DataError("target has missing values")
        return col.astype(int)

    def target_matrix(self) -> np.ndarray:
        """1-of-m indicator targets."""
        y = self.target_classes()
        Y = np.zeros((len(y), self.schema[self.target_index].n_levels))
        Y[np.arange(len(y)), y] = 1.0
        return Y


def _cell(v: VariableSpec, x: Value) -> float:
    if x is MISSING:
        return np.nan
    if v.is_discrete:
        if isinstance(x, bool) or not isinstance(x, (int, np.integer)):
            raise DataError(f"{v.name}: expected a level index, got {x!r}")
        if not 0 <= x < v.n_levels:
            raise DataError(f"{v.name}: level index {x} out of range")
        return float(x)
    if v.kind is Kind.FUZZY:
        if not isinstance(x, FuzzySet):
            raise DataError(f"{v.name}: expected a FuzzySet, got {x!r}")
        return 0.0
    if not isinstance(x, (int, float, np.floating, np.integer)) or isinstance(x, bool):
        raise DataError(f"{v.name}: expected a number, got {x!r}")
    if not math.isfinite(x):
        raise DataError(f"{v.name}: non-finite value")
    return float(x)


# --------------------------------------------------------------------------
# Raw files
# --------------------------------------------------------------------------


def parse_token(v: VariableSpec, token: str) -> Value:
    if token == "?" or token in v.missing_codes:
        return MISSING
    if v.is_discrete:
        return v.level_index(token)
    if v.kind is Kind.FUZZY:
        try:
            params = [float(t) for t in token.split(",")]
        except ValueError:
            raise DataError(f"{v.name}: cannot parse fuzzy token {token!r}") from None
        if len(params) != FUZZY_FAMILIES[v.family]:
            raise DataError(f"{v.name}: {v.family} token needs {FUZZY_FAMILIES[v.family]} numbers")
        return FuzzySet.triangular(*params) if len(params) == 3 else FuzzySet(*params)
    try:
        x = float(token)
    except ValueError:
        raise DataError(f"{v.name}: cannot parse number {token!r}") from None
    if not math.isfinite(x):
        raise DataError(f"{v.name}: non-finite value {token!r}")
    return x


def format_token(v: VariableSpec, x: Value) -> str:
    if x is MISSING:
        return "?"
    if v.is_discrete:
        return v.levels[x]
    if v.kind is Kind.FUZZY:
        p = x.params()
        if v.family == "triangular":
            p = (p[0], p[1], p[3])
        return ",".join(repr(float(t)) for t in p)
    return repr(float(x))


def parse_lines(lines: Iterable[str], schema: Schema, source: str = "<data>") -> list[Example]:
    cols = schema.n_columns
    out = []
    for lineno, line in enumerate(lines, 1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != cols:
            raise DataError(f"{source}:{lineno}: expected {cols} tokens, found {len(tokens)}")
        try:
            out.append(tuple(parse_token(v, tokens[v.column - 1]) for v in schema))
        except DataError as exc:
            raise DataError(f"{source}:{lineno}: {exc}") from None
    return out


def load_dataset(files: Sequence[str | Path], schema: Schema) -> Dataset:
    """Read whitespace-separated raw files and concatenate them in order."""
    examples: list[Example] = []
    for f in files:
        with open(f) as fh:
            examples.extend(parse_lines(fh, schema, source=str(f)))
    return Dataset.from_examples(schema, examples)


def format_example(schema: Schema, example: Example) -> str:
    tokens = ["?"] * schema.n_columns
    for v, x in zip(schema, example):
        tokens[v.column - 1] = format_token(v, x)
    return " ".join(tokens)


def write_dataset(path: str | Path, dataset: Dataset) -> None:
    with open(path, "w") as fh:
        for ex in dataset.examples():
            fh.write(format_example(dataset.schema, ex) + "\n")


def load_horse_colic() -> Dataset:
    return load_dataset(horse_colic_files(), horse_colic_schema())


# --------------------------------------------------------------------------
# Tasks
# --------------------------------------------------------------------------

TASKS = {"HC23": "outcome", "HC24": "surgical_lesion"}


def derive_task(dataset: Dataset, task: str) -> Dataset:
    """Keep the predictors plus one target; drop rows whose target is missing.

    ``task`` is ``"HC23"``, ``"HC24"`` or the name of any variable to use as
    the target.
    """
    target_name = TASKS.get(task, task)
    try:
        t = dataset.schema.index(target_name)
    except KeyError:
        raise SchemaError(f"target variable {target_name!r} absent from schema") from None
    target = dataset.schema[t]
    if not target.is_discrete:
        raise SchemaError(f"target {target_name!r} must be categorical or ordinal")
    cols = [k for k in dataset.schema.predictors if k != t] + [t]
    specs = [dataset.schema[k].with_role(Role.PREDICTOR) for k in cols[:-1]] + [target.with_role(Role.TARGET)]
    schema = Schema(tuple(specs), name=f"{dataset.schema.name}:{target_name}", width=dataset.schema.n_columns)
    keep = np.flatnonzero(~np.isnan(dataset.values[:, t]))
    return dataset.subset(keep).select(cols, schema)


def predictor_missing_fraction(dataset: Dataset) -> float:
    p = list(dataset.schema.predictors)
    return float(np.isnan(dataset.values[:, p]).mean()) if p else 0.0


# --------------------------------------------------------------------------
# 5x2 fold plans
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    replications: tuple[tuple[np.ndarray, np.ndarray], ...]
    seed: int

    def splits(self) -> Iterator[tuple[int, int, np.ndarray, np.ndarray]]:
        """Yield ``(replication, orientation, train, test)`` for the 10 cells."""
        for i, (a, b) in enumerate(self.replications):
            yield i, 0, a, b
            yield i, 1, b, a

    def to_dict(self) -> dict:
        return {"seed": self.seed, "replications": [[a.tolist(), b.tolist()] for a, b in self.replications]}


def make_fold_plan(dataset: Dataset, seed: int, replications: int = 5) -> FoldPlan:
    """Five stratified 50/50 splits drawn from ``seed``.

    Classes are shuffled independently in sorted-index order. Odd class sizes
    alternate their extra example between the two folds so that fold sizes
    never differ by more than one.
    """
    n = len(dataset)
    if n < 2:
        raise DataError("need at least 2 examples to split")
    try:
        labels = dataset.target_classes()
    except DataError:
        labels = np.zeros(n, dtype=int)
    streams = np.random.SeedSequence(seed).spawn(replications)
    reps = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        fold_a, fold_b = [], []
        extra_to_a = True
        for c in np.unique(labels):
            members = np.flatnonzero(labels == c)
            members = members[rng.permutation(len(members))]
            half = len(members) // 2
            if len(members) % 2:
                cut = half + 1 if extra_to_a else half
                extra_to_a = not extra_to_a
            else:
                cut = half
            fold_a.extend(members[:cut])
            fold_b.extend(members[cut:])
        a = np.sort(np.array(fold_a, dtype=int))
        b = np.sort(np.array(fold_b, dtype=int))
        a.setflags(write=False)
        b.setflags(write=False)
        reps.append((a, b))
    return FoldPlan(tuple(reps), int(seed))


# --------------------------------------------------------------------------
# Real-vector encoding for the RBF baselines
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Encoder:
    schema: Schema
    variables: tuple[int, ...]
    impute: tuple[float, ...]
    mean: np.ndarray
    std: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.mean)

    def to_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "impute": list(self.impute),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, schema: Schema, d: Mapping) -> "Encoder":
        return cls(schema, tuple(d["variables"]), tuple(d["impute"]), _frozen(d["mean"]), _frozen(d["std"]))


def _fuzzy_centre(params: np.ndarray) -> np.ndarray:
    return 0.5 * (params[:, 1] + params[:, 2])


def _raw_columns(schema: Schema, variables: Sequence[int], data: Dataset, impute=None) -> np.ndarray:
    blocks = []
    for j, k in enumerate(variables):
        v = schema[k]
        col = data.values[:, k].copy()
        if v.kind is Kind.FUZZY:
            col = np.where(np.isnan(col), np.nan, _fuzzy_centre(data.fuzzy[k]))
        if impute is not None:
            col = np.where(np.isnan(col), impute[j], col)
        if v.kind is Kind.CATEGORICAL:
            block = np.zeros((len(col), v.n_levels))
            ok = ~np.isnan(col)
            block[np.flatnonzero(ok), col[ok].astype(int)] = 1.0
            block[~ok] = np.nan
            blocks.append(block)
        elif v.kind is Kind.ORDINAL:
            blocks.append((col / max(v.n_levels - 1, 1))[:, None])
        else:
            blocks.append(col[:, None])
    return np.hstack(blocks) if blocks else np.zeros((len(data), 0))


def fit_encoder(train: Dataset) -> Encoder:
    """Fit imputation values and standardisation statistics on ``train``."""
    if len(train) == 0:
        raise DataError("cannot fit an encoder on an empty fold")
    schema = train.schema
    variables = schema.predictors
    impute = []
    for k in variables:
        v = schema[k]
        col = train.values[:, k]
        ok = ~np.isnan(col)
        if not ok.any():
            raise DataError(f"{v.name}: all values missing in the training fold")
        if v.kind is Kind.CATEGORICAL:
            counts = np.bincount(col[ok].astype(int), minlength=v.n_levels)
            impute.append(float(np.argmax(counts)))
        elif v.kind is Kind.FUZZY:
            impute.append(float(np.mean(_fuzzy_centre(train.fuzzy[k][ok]))))
        else:
            impute.append(float(np.mean(col[ok])))
    raw = _raw_columns(schema, variables, train, impute)
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    return Encoder(schema, tuple(variables), tuple(impute), _frozen(mean), _frozen(std))


def encode_dataset(encoder: Encoder, data: Dataset) -> np.ndarray:
    raw = _raw_columns(encoder.schema, encoder.variables, data, encoder.impute)
    scale = np.where(encoder.std > 0, encoder.std, 1.0)
    z = (raw - encoder.mean) / scale
    z[:, encoder.std <= 0] = 0.0
    return z


def encode(encoder: Encoder, example: Example) -> np.ndarray:
    return encode_dataset(encoder, Dataset.from_examples(encoder.schema, [example]))[0]
