"""Hybrid datasets: public columns kept, private columns replaced by estimates.

Imputers are fitted on the support split only and, when imputing, read nothing
but the public columns of the target rows. ``mask_gaussian`` builds the
noise-masked variant used by the public-only baselines.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import DataError, Dataset, FeatureSchema, Standardization, read_dataset_archive, save_dataset
from .rng import stream

KINDS = ("mean_mode", "knn", "external_file", "identity_test_only")


class ImputeError(DataError):
    pass


@dataclass
class HybridDataset(Dataset):
    imputed_mask: np.ndarray = field(default=None)  # type: ignore[assignment]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        super().__post_init__()
        if self.imputed_mask is None:
            self.imputed_mask = np.zeros(self.schema.d, dtype=bool)
            self.imputed_mask[self.schema.private_indices] = True
        self.imputed_mask = np.asarray(self.imputed_mask, dtype=bool)


def _schema_key(schema: FeatureSchema) -> tuple:
    return tuple((c.name, c.kind, c.cardinality) for c in schema.columns), schema.private_set


def _check_schema(expected: FeatureSchema, got: FeatureSchema) -> None:
    if _schema_key(expected) != _schema_key(got):
        raise ImputeError("dataset schema does not match the imputer's schema")


def _assemble(ds, private_values: np.ndarray, provenance: dict) -> HybridDataset:
    """Hybrid rows from the public columns of ``ds`` (never its private ones)."""
    schema = ds.schema
    X = np.zeros((ds.n, schema.d))
    X[:, schema.public_indices] = ds.public_features()
    X[:, schema.private_indices] = private_values
    return HybridDataset(X, np.array(ds.labels), schema, ds.standardization, provenance=provenance)


@dataclass(frozen=True)
class Imputer:
    kind: str = "mean_mode"
    k: int = 5
    path: str | None = None
    allow_test_imputer: bool = False
    schema: FeatureSchema | None = None
    # fitted state
    centers: np.ndarray | None = None  # mean_mode: one value per private column
    support_public: np.ndarray | None = None  # knn: encoded, scaled public matrix
    support_private: np.ndarray | None = None
    scaler: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ImputeError(f"unknown imputer kind {self.kind!r}")
        if self.kind == "knn" and self.k < 1:
            raise ImputeError("knn imputer needs k >= 1")
        if self.kind == "identity_test_only" and not self.allow_test_imputer:
            raise ImputeError("identity_test_only leaks private values; pass allow_test_imputer=True")

    @property
    def fitted(self) -> bool:
        return self.schema is not None

    def provenance(self) -> dict:
        doc = {"kind": self.kind}
        if self.kind == "knn":
            doc["k"] = self.k
        if self.kind == "external_file":
            doc["path"] = self.path
        return doc


def fit(imputer: Imputer, support: Dataset) -> Imputer:
    """Fit on the support split (its public and private columns)."""
    if support.n == 0:
        raise ImputeError("cannot fit an imputer on an empty support set")
    schema = support.schema
    if imputer.schema is not None:
        _check_schema(imputer.schema, schema)
    priv = support.private_features()
    if imputer.kind == "mean_mode":
        centers = []
        for j, i in enumerate(schema.private_indices):
            col = schema.columns[i]
            if col.is_categorical:
                codes, counts = np.unique(priv[:, j], return_counts=True)
                centers.append(codes[np.argmax(counts)])  # ties -> smallest code
            else:
                centers.append(priv[:, j].mean())
        return replace(imputer, schema=schema, centers=np.array(centers, dtype=float))
    if imputer.kind == "knn":
        if imputer.k > support.n:
            raise ImputeError(f"k={imputer.k} exceeds support size {support.n}")
        pub = support.public_features()
        mu, sd = _public_scaler(schema, pub)
        return replace(
            imputer,
            schema=schema,
            scaler=(mu, sd),
            support_public=_knn_space(schema, pub, mu, sd),
            support_private=np.array(priv),
        )
    return replace(imputer, schema=schema)


def _public_scaler(schema: FeatureSchema, pub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = np.zeros(pub.shape[1])
    sd = np.ones(pub.shape[1])
    for j, i in enumerate(schema.public_indices):
        if not schema.columns[i].is_categorical:
            mu[j] = pub[:, j].mean()
            s = pub[:, j].std()
            sd[j] = s if s > 0 else 1.0
    return mu, sd


def _knn_space(schema: FeatureSchema, pub: np.ndarray, mu: np.ndarray, sd: np.ndarray) -> np.ndarray:
    scaled = (pub - mu) / sd
    return schema.encode(scaled, schema.public_indices)


def _knn_predict(imputer: Imputer, query: np.ndarray, chunk: int = 256) -> np.ndarray:
    schema = imputer.schema
    S = imputer.support_public
    P = imputer.support_private
    k = imputer.k
    out = np.zeros((query.shape[0], P.shape[1]))
    cat = [schema.columns[i].is_categorical for i in schema.private_indices]
    for start in range(0, query.shape[0], chunk):
        Q = query[start : start + chunk]
        dist = ((Q[:, None, :] - S[None, :, :]) ** 2).sum(axis=-1)
        # stable sort: equal distances keep the lower support index first
        nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
        vals = P[nn]  # (chunk, k, n_priv)
        for j, is_cat in enumerate(cat):
            if is_cat:
                card = schema.columns[schema.private_indices[j]].cardinality
                codes = vals[:, :, j].astype(np.int64)
                counts = np.stack([(codes == c).sum(axis=1) for c in range(card)], axis=1)
                out[start : start + chunk, j] = np.argmax(counts, axis=1)
            else:
                out[start : start + chunk, j] = vals[:, :, j].mean(axis=1)
    return out


def impute(imputer: Imputer, ds) -> HybridDataset:
    """Replace the private columns of ``ds`` with imputations from its public columns.

    ``ds`` may be a :class:`Dataset` or an audited view; only
    ``ds.public_features()`` is read, except by the test-only identity imputer.
    """
    if not imputer.fitted:
        raise ImputeError("imputer is not fitted")
    _check_schema(imputer.schema, ds.schema)
    if imputer.kind == "external_file":
        if imputer.path is None:
            raise ImputeError("external_file imputer needs a path")
        return load_external_hybrid(ds, imputer.path)
    if imputer.kind == "identity_test_only":
        values = ds.private_features()
    elif imputer.kind == "mean_mode":
        values = np.tile(imputer.centers, (ds.n, 1))
    else:
        mu, sd = imputer.scaler
        values = _knn_predict(imputer, _knn_space(ds.schema, ds.public_features(), mu, sd))
    return _assemble(ds, values, imputer.provenance())


def export_hybrid_csv(hybrid: HybridDataset, path: str | Path) -> None:
    """Write the private columns of a hybrid dataset in the external-file layout."""
    schema = hybrid.schema
    priv = hybrid.private_features()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [schema.columns[i].name for i in schema.private_indices])
        for r in range(hybrid.n):
            cells = []
            for j, i in enumerate(schema.private_indices):
                v = priv[r, j]
                cells.append(str(int(v)) if schema.columns[i].is_categorical else repr(float(v)))
            w.writerow([r] + cells)


def load_external_hybrid(ds, path: str | Path) -> HybridDataset:
    """Hybrid dataset whose private columns come from an external CSV.

    Layout: header ``id,<private column names>``; ``id`` is the 0-based row index
    in ``ds``. Every row of ``ds`` must appear exactly once.
    """
    path = Path(path)
    if not path.exists():
        raise ImputeError(f"external imputation file not found: {path}")
    schema = ds.schema
    names = [schema.columns[i].name for i in schema.private_indices]
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ImputeError(f"{path}: empty file") from None
        rows = list(reader)
    if not header or header[0] != "id":
        raise ImputeError(f"{path}: first column must be 'id'")
    missing = [nm for nm in names if nm not in header[1:]]
    if missing:
        raise ImputeError(f"{path}: missing private columns {missing}")
    if len(rows) != ds.n:
        raise ImputeError(f"{path}: {len(rows)} rows but the target split has {ds.n}")
    pos = [header.index(nm) for nm in names]
    values = np.full((ds.n, len(names)), np.nan)
    seen = np.zeros(ds.n, dtype=bool)
    for r, row in enumerate(rows):
        try:
            rid = int(row[0])
        except (ValueError, IndexError):
            raise ImputeError(f"{path}: row {r} has an invalid id") from None
        if not 0 <= rid < ds.n or seen[rid]:
            raise ImputeError(f"{path}: row {r} id {rid} is out of range or duplicated")
        seen[rid] = True
        for j, p in enumerate(pos):
            try:
                v = float(row[p])
            except (ValueError, IndexError):
                raise ImputeError(f"{path}: row {r}, column {names[j]!r} is not a number") from None
            if not math.isfinite(v):
                raise ImputeError(f"{path}: row {r}, column {names[j]!r} is not finite")
            col = schema.columns[schema.private_indices[j]]
            if col.is_categorical and (v != int(v) or not 0 <= v < col.cardinality):
                raise ImputeError(f"{path}: row {r}, column {names[j]!r} is not a valid code")
            values[rid, j] = v
    return _assemble(ds, values, {"kind": "external_file", "path": str(path)})


def mask_gaussian(ds, rng_seed: int) -> HybridDataset:
    """Private numerics -> i.i.d. N(0, 1); private categoricals -> uniform codes."""
    schema = ds.schema
    rng = stream(rng_seed, 0, "mask")
    values = np.zeros((ds.n, len(schema.private_indices)))
    for j, i in enumerate(schema.private_indices):
        col = schema.columns[i]
        if col.is_categorical:
            values[:, j] = rng.integers(0, col.cardinality, size=ds.n)
        else:
            values[:, j] = rng.standard_normal(ds.n)
    return _assemble(ds, values, {"kind": "gaussian_mask", "seed": int(rng_seed)})


def save_hybrid(hybrid: HybridDataset, path: str | Path) -> None:
    save_dataset(
        hybrid,
        path,
        {"imputed_mask": hybrid.imputed_mask.astype(int).tolist(), "provenance": hybrid.provenance},
    )


def load_hybrid(path: str | Path) -> HybridDataset:
    X, y, meta = read_dataset_archive(path)
    if "imputed_mask" not in meta:
        raise ImputeError(f"{path} is a plain dataset, not a hybrid one")
    st = meta.get("standardization")
    return HybridDataset(
        X,
        y,
        FeatureSchema.from_dict(meta["schema"]),
        Standardization.from_dict(st) if st else None,
        imputed_mask=np.array(meta["imputed_mask"], dtype=bool),
        provenance=meta["provenance"],
    )
