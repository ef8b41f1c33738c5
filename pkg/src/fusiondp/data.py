"""Tabular datasets with a public/private column partition.

A :class:`FeatureSchema` splits the columns into a public set and a private
set; dropping the private columns is the projection used by the feature-level
privacy definition (see :meth:`FeatureSchema.project`).
"""

from __future__ import annotations

import csv
import io
import json
import math
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, special

from .rng import stream

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class DataError(ValueError):
    """Raised for malformed input files or invalid dataset operations."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = NUMERIC
    cardinality: int | None = None
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if self.cardinality is None or self.cardinality < 2:
                raise DataError(f"column {self.name!r}: categorical cardinality must be >= 2")
            if self.levels is not None and len(self.levels) > self.cardinality:
                raise DataError(
                    f"column {self.name!r}: {len(self.levels)} levels exceed cardinality {self.cardinality}"
                )

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered columns plus the disjoint private/public index partition."""

    columns: tuple[Column, ...]
    private_set: frozenset[int]
    label: str = "label"

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "private_set", frozenset(int(i) for i in self.private_set))
        d = len(self.columns)
        if any(i < 0 or i >= d for i in self.private_set):
            raise DataError("private_set holds an index outside the column range")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        if self.label in names:
            raise DataError(f"label {self.label!r} collides with a feature column")

    @property
    def public_set(self) -> frozenset[int]:
        return frozenset(range(len(self.columns))) - self.private_set

    @property
    def d(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def public_indices(self) -> list[int]:
        return sorted(self.public_set)

    @property
    def private_indices(self) -> list[int]:
        return sorted(self.private_set)

    @property
    def numeric_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.columns) if not c.is_categorical]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"no column named {name!r}") from None

    def project(self, features: np.ndarray) -> np.ndarray:
        """Public columns only; idempotent on its own output via :meth:`public_schema`."""
        return np.asarray(features)[..., self.public_indices]

    def public_schema(self) -> "FeatureSchema":
        return FeatureSchema(tuple(self.columns[i] for i in self.public_indices), frozenset(), self.label)

    def subset(self, keep: Sequence[int]) -> "FeatureSchema":
        keep = list(keep)
        remap = {old: new for new, old in enumerate(keep)}
        return FeatureSchema(
            tuple(self.columns[i] for i in keep),
            frozenset(remap[i] for i in self.private_set if i in remap),
            self.label,
        )

    def encoded_width(self, indices: Iterable[int] | None = None) -> int:
        idx = range(self.d) if indices is None else indices
        return sum(self.columns[i].cardinality if self.columns[i].is_categorical else 1 for i in idx)

    def encode(self, features: np.ndarray, indices: Sequence[int] | None = None) -> np.ndarray:
        """Model input: numerics pass through, categoricals become one-hot blocks.

        ``features`` holds the columns listed in ``indices`` (all columns by default).
        """
        X = np.atleast_2d(np.asarray(features, dtype=float))
        idx = list(range(self.d)) if indices is None else list(indices)
        if X.shape[1] != len(idx):
            raise DataError(f"expected {len(idx)} columns to encode, got {X.shape[1]}")
        blocks = []
        for j, i in enumerate(idx):
            col = self.columns[i]
            if col.is_categorical:
                blocks.append(np.eye(col.cardinality)[X[:, j].astype(np.int64)])
            else:
                blocks.append(X[:, j : j + 1])
        if not blocks:
            return np.zeros((X.shape[0], 0))
        return np.hstack(blocks)

    def to_dict(self) -> dict:
        cols = []
        for i, c in enumerate(self.columns):
            entry = {"name": c.name, "kind": c.kind, "private": i in self.private_set}
            if c.is_categorical:
                entry["cardinality"] = c.cardinality
                if c.levels is not None:
                    entry["levels"] = list(c.levels)
            cols.append(entry)
        return {"label": self.label, "columns": cols}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        try:
            cols, private = [], set()
            for i, entry in enumerate(doc["columns"]):
                levels = entry.get("levels")
                cols.append(
                    Column(
                        name=str(entry["name"]),
                        kind=entry.get("kind", NUMERIC),
                        cardinality=entry.get("cardinality"),
                        levels=tuple(str(v) for v in levels) if levels is not None else None,
                    )
                )
                if entry.get("private", False):
                    private.add(i)
            return cls(tuple(cols), frozenset(private), doc.get("label", "label"))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed schema document: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSchema":
        path = Path(path)
        if not path.exists():
            raise DataError(f"schema file not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise DataError(f"schema file {path} is not valid JSON: {exc}") from exc


@dataclass(frozen=True)
class Standardization:
    """Per-numeric-column (mean, std) used to standardize a dataset."""

    columns: tuple[int, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]

    def apply(self, features: np.ndarray) -> np.ndarray:
        out = np.array(features, dtype=float, copy=True)
        for i, m, s in zip(self.columns, self.means, self.stds):
            out[:, i] = (out[:, i] - m) / s
        return out

    def invert(self, features: np.ndarray) -> np.ndarray:
        out = np.array(features, dtype=float, copy=True)
        for i, m, s in zip(self.columns, self.means, self.stds):
            out[:, i] = out[:, i] * s + m
        return out

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "means": list(self.means), "stds": list(self.stds)}

    @classmethod
    def from_dict(cls, doc: dict) -> "Standardization":
        return cls(tuple(doc["columns"]), tuple(doc["means"]), tuple(doc["stds"]))


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    schema: FeatureSchema
    standardization: Standardization | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError(f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels")
        if self.features.shape[1] != self.schema.d:
            raise DataError(f"{self.features.shape[1]} feature columns but schema has {self.schema.d}")
        if not np.all(np.isin(self.labels, (0.0, 1.0))):
            raise DataError("labels must be 0 or 1")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def public_features(self, rows=None) -> np.ndarray:
        X = self.features if rows is None else self.features[rows]
        return X[:, self.schema.public_indices]

    def private_features(self, rows=None) -> np.ndarray:
        X = self.features if rows is None else self.features[rows]
        return X[:, self.schema.private_indices]

    def full_features(self, rows=None) -> np.ndarray:
        return self.features if rows is None else self.features[rows]

    def take(self, rows) -> "Dataset":
        return replace(self, features=self.features[rows], labels=self.labels[rows])

    def prevalence(self) -> float:
        return float(self.labels.mean()) if self.n else float("nan")


class AuditedView:
    """Read-only dataset view that counts every row whose private columns are read.

    Training code receives these instead of raw datasets so tests can assert
    that a code path never touched private values.
    """

    def __init__(self, ds: Dataset, name: str):
        self._ds = ds
        self.name = name
        self.private_reads = 0
        self.public_reads = 0

    @property
    def schema(self) -> FeatureSchema:
        return self._ds.schema

    @property
    def labels(self) -> np.ndarray:
        return self._ds.labels

    @property
    def n(self) -> int:
        return self._ds.n

    @property
    def d(self) -> int:
        return self._ds.d

    @property
    def standardization(self):
        return self._ds.standardization

    def _count(self, rows) -> int:
        if rows is None:
            return self._ds.n
        return len(np.arange(self._ds.n)[rows])

    def public_features(self, rows=None) -> np.ndarray:
        self.public_reads += self._count(rows)
        return self._ds.public_features(rows)

    def private_features(self, rows=None) -> np.ndarray:
        self.private_reads += self._count(rows)
        return self._ds.private_features(rows)

    def full_features(self, rows=None) -> np.ndarray:
        self.private_reads += self._count(rows)
        return self._ds.full_features(rows)

    def __getattr__(self, item):
        # raw matrix access bypasses the audit, so it is refused outright
        if item == "features":
            raise AttributeError("AuditedView hides .features; use public_features/full_features")
        raise AttributeError(item)


@dataclass(frozen=True)
class SplitSpec:
    support_frac: float = 0.1
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.1

    def __post_init__(self):
        fracs = self.fractions
        if any(not (0.0 < f <= 1.0) for f in fracs):
            raise DataError("every split fraction must lie in (0, 1]")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise DataError(f"split fractions sum to {sum(fracs)!r}, not 1")

    @property
    def fractions(self) -> tuple[float, float, float, float]:
        return (self.support_frac, self.train_frac, self.val_frac, self.test_frac)


# ---------------------------------------------------------------- ingestion


def _parse_float(cell: str) -> float:
    if cell.strip() == "":
        return float("nan")
    value = float(cell)
    if math.isinf(value):
        raise ValueError("infinite value")
    return value


def load_csv(
    path: str | Path,
    schema: FeatureSchema,
    training: bool = True,
    patient_column: str | None = None,
) -> Dataset:
    """Read a UTF-8 CSV whose header names the schema columns plus the label.

    Empty cells become NaN. Categorical strings map to integer codes in order of
    first appearance (training) or must match the schema's stored levels
    (``training=False``). With ``patient_column`` the file is treated as a long
    time series and collapsed to the last non-missing value per patient.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    expected = set(schema.names) | {schema.label}
    extra = {patient_column} if patient_column else set()
    if set(header) - extra != expected or len(header) != len(expected | extra):
        missing = sorted(expected - set(header))
        unexpected = sorted(set(header) - expected - extra)
        raise DataError(f"{path}: header mismatch (missing {missing}, unexpected {unexpected})")
    pos = {name: header.index(name) for name in header}

    levels: list[list[str]] = [
        list(c.levels) if c.levels is not None and not training else [] for c in schema.columns
    ]
    if not training:
        for c in schema.columns:
            if c.is_categorical and c.levels is None:
                raise DataError(f"column {c.name!r} has no stored levels for non-training ingestion")

    n = len(rows)
    X = np.full((n, schema.d), np.nan)
    y = np.zeros(n)
    pids: list[str] = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {r}: expected {len(header)} cells, found {len(row)}")
        for j, col in enumerate(schema.columns):
            cell = row[pos[col.name]].strip()
            if col.is_categorical:
                if cell == "":
                    continue
                if cell not in levels[j]:
                    if not training:
                        raise DataError(f"row {r}, column {col.name!r}: unknown categorical level {cell!r}")
                    levels[j].append(cell)
                    if len(levels[j]) > col.cardinality:
                        raise DataError(
                            f"row {r}, column {col.name!r}: more than {col.cardinality} levels"
                        )
                X[r, j] = levels[j].index(cell)
            else:
                try:
                    X[r, j] = _parse_float(cell)
                except ValueError:
                    raise DataError(f"row {r}, column {col.name!r}: cannot parse {cell!r} as a number") from None
        cell = row[pos[schema.label]].strip()
        try:
            y[r] = float(cell)
        except ValueError:
            raise DataError(f"row {r}, column {schema.label!r}: cannot parse label {cell!r}") from None
        if y[r] not in (0.0, 1.0):
            raise DataError(f"row {r}, column {schema.label!r}: label must be 0 or 1, got {cell!r}")
        if patient_column:
            pids.append(row[pos[patient_column]])

    columns = tuple(
        replace(c, levels=tuple(levels[j])) if c.is_categorical else c for j, c in enumerate(schema.columns)
    )
    schema = replace(schema, columns=columns)
    if patient_column:
        X, y = _collapse_last(X, y, pids)
    return Dataset(X, y, schema)


def _collapse_last(X: np.ndarray, y: np.ndarray, pids: list[str]) -> tuple[np.ndarray, np.ndarray]:
    order: dict[str, list[int]] = {}
    for r, pid in enumerate(pids):
        order.setdefault(pid, []).append(r)
    outX = np.full((len(order), X.shape[1]), np.nan)
    outy = np.zeros(len(order))
    for k, rows in enumerate(order.values()):
        block = X[rows]
        for j in range(X.shape[1]):
            present = np.flatnonzero(~np.isnan(block[:, j]))
            if present.size:
                outX[k, j] = block[present[-1], j]
        # a patient is positive if any of their rows is
        outy[k] = y[rows].max()
    return outX, outy


def preprocess(
    raw: Dataset,
    missing_threshold: float = 0.70,
    target_prevalence: float = 0.15,
    rng_seed: int = 0,
) -> Dataset:
    """Drop sparse columns, downsample negatives to a target prevalence, fill gaps.

    Negatives are kept ``round(n_pos * (1 - t) / t)`` at most, chosen without
    replacement; positives are never removed. Residual missing numerics get the
    column median, categoricals the column mode.
    """
    if not (0.0 < missing_threshold <= 1.0):
        raise DataError("missing_threshold must lie in (0, 1]")
    if not (0.0 < target_prevalence < 1.0):
        raise DataError("target_prevalence must lie in (0, 1)")
    pos = np.flatnonzero(raw.labels == 1)
    if pos.size == 0:
        raise DataError("dataset has no positive rows")

    missing = np.isnan(raw.features).mean(axis=0) if raw.n else np.zeros(raw.d)
    keep = [j for j in range(raw.d) if missing[j] <= missing_threshold]
    schema = raw.schema.subset(keep)
    X = raw.features[:, keep]

    neg = np.flatnonzero(raw.labels == 0)
    n_neg = int(round(pos.size * (1.0 - target_prevalence) / target_prevalence))
    if n_neg < neg.size:
        rng = stream(rng_seed, 0, "downsample")
        neg = np.sort(rng.choice(neg, size=n_neg, replace=False))
    rows = np.sort(np.concatenate([pos, neg]))
    X = X[rows].copy()
    y = raw.labels[rows]

    for j, col in enumerate(schema.columns):
        gaps = np.isnan(X[:, j])
        if not gaps.any():
            continue
        present = X[~gaps, j]
        if present.size == 0:
            fill = 0.0
        elif col.is_categorical:
            codes, counts = np.unique(present, return_counts=True)
            fill = codes[np.argmax(counts)]
        else:
            fill = float(np.median(present))
        X[gaps, j] = fill
    return Dataset(X, y, schema, raw.standardization)


def split(ds: Dataset, spec: SplitSpec, rng_seed: int) -> tuple[Dataset, Dataset, Dataset, Dataset]:
    """Shuffle rows into (support, train, val, test); floor sizes, remainder to train."""
    if ds.n < 10:
        raise DataError(f"need at least 10 rows to split, got {ds.n}")
    sizes = [int(math.floor(f * ds.n + 1e-9)) for f in spec.fractions]
    sizes[1] = ds.n - sizes[0] - sizes[2] - sizes[3]
    if min(sizes) < 1:
        raise DataError(f"split sizes {sizes} leave a split with fewer than 1 row")
    perm = stream(rng_seed, 0, "split").permutation(ds.n)
    bounds = np.cumsum([0] + sizes)
    return tuple(ds.take(np.sort(perm[a:b])) for a, b in zip(bounds[:-1], bounds[1:]))  # type: ignore[return-value]


def fit_standardization(ds: Dataset) -> Standardization:
    cols = tuple(ds.schema.numeric_indices)
    means, stds = [], []
    for i in cols:
        m = float(ds.features[:, i].mean())
        s = float(ds.features[:, i].std())
        means.append(m)
        stds.append(s if s > 0 else 1.0)
    return Standardization(cols, tuple(means), tuple(stds))


def standardize(ds: Dataset, st: Standardization) -> Dataset:
    return replace(ds, features=st.apply(ds.features), standardization=st)


def destandardize(ds: Dataset) -> Dataset:
    if ds.standardization is None:
        return ds
    return replace(ds, features=ds.standardization.invert(ds.features), standardization=None)


# ---------------------------------------------------------------- synthetic data

# column names loosely follow the PhysioNet 2019 sepsis challenge
_PUBLIC_VITALS_LABS = (
    "HR", "O2Sat", "Temp", "SBP", "MAP", "DBP", "Resp", "BaseExcess", "HCO3", "FiO2",
    "pH", "PaCO2", "BUN", "Calcium", "Chloride", "Creatinine", "Glucose", "Lactate",
    "Magnesium", "Phosphate", "Potassium", "Hct", "Hgb", "WBC", "Platelets",
)


def default_schema() -> FeatureSchema:
    """Sepsis-style schema: demographics private, vitals and labs public."""
    cols = [Column(name) for name in _PUBLIC_VITALS_LABS]
    cols += [
        Column("Age"),
        Column("Gender", CATEGORICAL, 2),
        Column("Unit", CATEGORICAL, 2),
        Column("HospAdmTime"),
        Column("ICULOS"),
    ]
    d = len(cols)
    return FeatureSchema(tuple(cols), frozenset(range(len(_PUBLIC_VITALS_LABS), d)))


def generate_synthetic(
    n: int,
    schema: FeatureSchema | None = None,
    coupling: float = 0.8,
    rng_seed: int = 0,
    prevalence: float = 0.15,
    public_noise: float = 0.3,
    latent_rank: int = 3,
) -> Dataset:
    """Draw a labelled dataset whose private columns depend on the public ones.

    A ``latent_rank``-dimensional Gaussian factor drives every column. Public
    numerics are unit-variance mixtures of the factor and idiosyncratic noise
    (noise share set by ``public_noise``), so the public block is a correlated
    Gaussian. Each private numeric is ``coupling * a(f) + sqrt(1 - coupling**2) * e``
    with ``a`` a unit-variance linear map of the factor; private categoricals take
    the argmax of analogous noisy scores. With ``public_noise=0`` and
    ``coupling=1`` the private columns are exact functions of the public ones.
    The label is Bernoulli of a logistic score over public and private columns,
    with the intercept solved so the mean probability equals ``prevalence``.
    """
    schema = default_schema() if schema is None else schema
    if n < 10:
        raise DataError("generate_synthetic needs n >= 10")
    if not schema.private_set or not schema.public_set:
        raise DataError("schema needs at least one private and one public column")
    if not 0.0 <= coupling <= 1.0:
        raise DataError("coupling must lie in [0, 1]")
    if public_noise < 0:
        raise DataError("public_noise must be >= 0")
    if latent_rank < 1:
        raise DataError("latent_rank must be >= 1")

    # structural draws depend only on the schema shape, so every seed shares one population
    rs = stream(0, schema.d, "synth")
    pub = schema.public_indices
    priv = schema.private_indices
    d_pub = len(pub)
    loadings = rs.normal(size=(d_pub, latent_rank))
    loadings /= np.linalg.norm(loadings, axis=1, keepdims=True)
    maps = {}
    for i in priv:
        k = schema.columns[i].cardinality if schema.columns[i].is_categorical else 1
        W = rs.normal(size=(latent_rank, k))
        maps[i] = W / np.linalg.norm(W, axis=0, keepdims=True)
    w_pub = rs.normal(size=d_pub)
    w_priv = {i: rs.choice([-1.0, 1.0]) * rs.uniform(0.8, 1.2) for i in priv}

    rng = stream(rng_seed, n, "synth")
    f = rng.normal(size=(n, latent_rank))
    Z = (f @ loadings.T + public_noise * rng.normal(size=(n, d_pub))) / math.sqrt(1.0 + public_noise**2)
    X = np.zeros((n, schema.d))
    for j, i in enumerate(pub):
        col = schema.columns[i]
        if col.is_categorical:
            cuts = np.quantile(Z[:, j], np.linspace(0, 1, col.cardinality + 1)[1:-1])
            X[:, i] = np.searchsorted(cuts, Z[:, j])
        else:
            X[:, i] = Z[:, j]

    cov = (loadings @ loadings.T + public_noise**2 * np.eye(d_pub)) / (1.0 + public_noise**2)
    score = 1.2 * (Z @ w_pub) / math.sqrt(w_pub @ cov @ w_pub)
    resid = math.sqrt(max(0.0, 1.0 - coupling**2))
    for i in priv:
        col = schema.columns[i]
        signal = f @ maps[i]
        noisy = coupling * signal + resid * rng.normal(size=signal.shape)
        if col.is_categorical:
            codes = np.argmax(noisy, axis=1)
            X[:, i] = codes
            if col.cardinality == 2:
                effect = np.where(codes == 0, 1.0, -1.0)
            else:
                effect = (codes - codes.mean()) / max(1, col.cardinality - 1)
            score += 0.9 * w_priv[i] * effect
        else:
            X[:, i] = noisy[:, 0]
            score += w_priv[i] * noisy[:, 0]

    intercept = optimize.brentq(lambda b: special.expit(score + b).mean() - prevalence, -50.0, 50.0)
    y = (rng.uniform(size=n) < special.expit(score + intercept)).astype(float)
    return Dataset(X, y, schema)


# ---------------------------------------------------------------- serialization


def _zip_member(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, payload)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def dataset_meta(ds: Dataset) -> dict:
    meta = {"schema": ds.schema.to_dict(), "standardization": None}
    if ds.standardization is not None:
        meta["standardization"] = ds.standardization.to_dict()
    return meta


def save_dataset(ds: Dataset, path: str | Path, extra_meta: dict | None = None) -> None:
    """Write a byte-stable zip of .npy arrays plus a JSON metadata member."""
    meta = dataset_meta(ds)
    if extra_meta:
        meta.update(extra_meta)
    with zipfile.ZipFile(path, "w") as zf:
        _zip_member(zf, "features.npy", _npy_bytes(ds.features))
        _zip_member(zf, "labels.npy", _npy_bytes(ds.labels))
        _zip_member(zf, "meta.json", json.dumps(meta, sort_keys=True).encode("utf-8"))


def read_dataset_archive(path: str | Path) -> tuple[np.ndarray, np.ndarray, dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            X = np.load(io.BytesIO(zf.read("features.npy")), allow_pickle=False)
            y = np.load(io.BytesIO(zf.read("labels.npy")), allow_pickle=False)
            meta = json.loads(zf.read("meta.json"))
    except (zipfile.BadZipFile, KeyError) as exc:
        raise DataError(f"{path}: not a dataset archive ({exc})") from exc
    return X, y, meta


def load_dataset(path: str | Path) -> Dataset:
    X, y, meta = read_dataset_archive(path)
    st = meta.get("standardization")
    return Dataset(X, y, FeatureSchema.from_dict(meta["schema"]), Standardization.from_dict(st) if st else None)
