"""Shared builders for the test suites."""

import numpy as np

from fusiondp import data, impute, train
from fusiondp import model as M
from fusiondp.rng import stream
from fusiondp.train import Batch


def standardized_splits(n: int, coupling: float = 0.8, seed: int = 0, **gen) -> train.Splits:
    ds = data.generate_synthetic(n, coupling=coupling, rng_seed=seed, **gen)
    parts = data.split(ds, data.SplitSpec(), seed)
    st = data.fit_standardization(parts[0])
    return train.Splits(*(data.standardize(p, st) for p in parts))


def hybrid_for(splits: train.Splits, imputer: impute.Imputer) -> train.HybridSplits:
    fitted = impute.fit(imputer, splits.support)
    return train.HybridSplits(impute.impute(fitted, splits.train), impute.impute(fitted, splits.val))


def encoded_train(splits: train.Splits, hybrid: train.HybridSplits) -> dict:
    schema = splits.train.schema
    return {
        "original": schema.encode(splits.train.features),
        "hybrid": schema.encode(hybrid.train.features),
        "masked": schema.encode(impute.mask_gaussian(splits.train, 0).features),
        "y": splits.train.labels,
    }


def step_batches(views: dict, cfg: train.TrainConfig, arch: M.Architecture, step: int, p: float = 0.05,
                 m_pub: int = 32):
    """Private and public batches for one step, drawn from the run's random streams."""
    spec = cfg.spec
    n = views["y"].size
    priv = pub = None
    if spec.private_loss:
        idx = np.flatnonzero(stream(cfg.seed, step, "private_sample").random(n) < p)
        priv = Batch(views["y"][idx], views["original"][idx],
                     views[spec.private_reference][idx] if spec.private_reference else None,
                     M.draw_masks(arch, idx.size, stream(cfg.seed, step, "private_dropout")))
    if spec.public_data:
        idx = np.sort(stream(cfg.seed, step, "public_sample").choice(n, m_pub, replace=False))
        pub = Batch(views["y"][idx], views[spec.public_data][idx],
                    masks=M.draw_masks(arch, idx.size, stream(cfg.seed, step, "public_dropout")))
    return priv, pub


TREND_METHODS = ("sgd_hybrid", "sgd_pub", "dpsgd", "feature_dp", "calibrated_fusion", "fusiondp")
TREND_EPSILONS = (0.1, 0.5, 1.0, 2.0)


def trend_experiment(seeds=(0, 1, 2), n: int = 20000, jobs: int = 1) -> dict:
    """Default-grid sweep on the synthetic task; seed-mean test AUPRC of each selected cell."""
    splits = standardized_splits(n, coupling=0.8, seed=0)
    hybrid = hybrid_for(splits, impute.Imputer("knn", k=5))
    grid = train.default_grid(TREND_METHODS, TREND_EPSILONS)
    sweep = train.grid_search(splits, hybrid, grid, seeds, jobs=jobs)
    means = {}
    for (method, eps), runs in sweep.best.items():
        means[(method, eps)] = float(np.mean([r.test_auprc for r in runs]))
    return {"means": means, "sweep": sweep}
