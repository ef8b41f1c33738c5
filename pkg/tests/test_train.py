import json
import zlib
from dataclasses import replace

import numpy as np
import pytest

from fusiondp import impute, train
from fusiondp import model as M
from fusiondp.rng import stream
from fusiondp.train import Batch, ConfigError, TrainConfig, TrainError
from helpers import encoded_train, hybrid_for, standardized_splits, step_batches
from oracles import torch_batch_grad, torch_fusion_step


# ---------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(method="nope")
    with pytest.raises(ConfigError):
        TrainConfig(method="dpsgd")  # neither epsilon nor sigma
    with pytest.raises(ConfigError):
        TrainConfig(method="calibrated_fusion", epsilon=1.0, beta=0.1)
    with pytest.raises(ConfigError):
        TrainConfig(method="fusiondp", epsilon=1.0, lam=0.5)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"method": "sgd_org", "momentum": 0.9})
    assert TrainConfig(method="naive_fusion", epsilon=1.0).mixing_lambda == 0.5
    assert TrainConfig(method="naive_fusion", epsilon=1.0, alpha=3.0, lam_from_alpha=True).mixing_lambda == 0.75


def test_config_round_trip(tmp_path):
    cfg = TrainConfig(method="fusiondp", epsilon=0.5, beta=0.2, alpha=5.0, hidden=(8, 8, 4))
    train.save_config(cfg, tmp_path / "c.json")
    assert train.load_config(tmp_path / "c.json") == cfg


def test_step_schedule():
    cfg = TrainConfig(method="sgd_org", lr=0.1, lr_schedule="step", lr_decay=0.5, lr_step_epochs=2)
    assert [cfg.lr_at(e) for e in range(5)] == [0.1, 0.1, 0.05, 0.05, 0.025]


def test_schedule_quantities():
    p, spe, T, m = train.schedule(TrainConfig(method="dpsgd", epsilon=1.0, epochs=3), 14000)
    assert p == 256 / 14000 and spe == 55 and T == 165 and m == 1024
    p, spe, T, m = train.schedule(TrainConfig(method="dpsgd", epsilon=1.0, sample_rate=0.25, public_batch_size=7), 100)
    assert (p, spe, m) == (0.25, 4, 7)


# ---------------------------------------------------------------- step-level checks


COUNTERPARTS = {
    "dpsgd": {},
    "naive_fusion": {"lam": 0.3},
    "naive_fusion_pub": {"lam": 0.7},
    "feature_dp": {"alpha": 2.0},
    "calibrated_fusion": {"alpha": 3.0},
    "fusiondp": {"alpha": 4.0, "beta": 0.5},
}


@pytest.mark.parametrize("method", sorted(COUNTERPARTS))
def test_degenerate_mechanism_equals_plain_sgd(method, small_splits, small_hybrid):
    pytest.importorskip("torch")
    data = encoded_train(small_splits, small_hybrid)
    cfg = TrainConfig(method=method, sigma=0.0, clip=1e9, hidden=(8, 8, 8), **COUNTERPARTS[method])
    arch = M.Architecture((data["original"].shape[1], 8, 8, 8, 1), cfg.dropout)
    model = M.init_model(arch, 0)
    for step in range(50):
        priv, pub = step_batches(data, cfg, arch, step)
        new, _ = train.train_step(model, priv, pub, cfg, 0.0, 0.05, stream(0, step, "noise"))

        spec = cfg.spec
        ref = priv.x_tilde if spec.private_loss != "naive" else None
        g_priv = torch_batch_grad(model, priv, ref, cfg.beta) if priv.size else np.zeros(arch.n_params)
        if spec.combine == "private_only":
            g = g_priv
        elif spec.combine == "lambda":
            g = cfg.lam * g_priv + (1 - cfg.lam) * torch_batch_grad(model, pub)
        else:
            g = torch_batch_grad(model, pub) + cfg.alpha * g_priv
        # compare the two updates taken from the same parameters
        assert np.max(np.abs((new.params - model.params) - (-0.05 * g))) < 1e-10
        model = new


def test_identity_hybrid_zeroes_fusion_private_gradient(small_splits):
    ident = hybrid_for(small_splits, impute.Imputer("identity_test_only", allow_test_imputer=True))
    data = encoded_train(small_splits, ident)
    for beta in (0.0, 0.3, 10.0):
        cfg = TrainConfig(method="fusiondp", sigma=0.0, beta=beta, alpha=5.0, clip=0.5, hidden=(8, 8, 8))
        arch = M.Architecture((data["original"].shape[1], 8, 8, 8, 1), cfg.dropout)
        model = M.init_model(arch, 0)
        for step in range(20):
            priv, pub = step_batches(data, cfg, arch, step)
            new, info = train.train_step(model, priv, pub, cfg, 0.0, 0.1, stream(0, step, "noise"))
            assert not np.any(info.private_grad)
            assert np.array_equal(new.params, model.params - 0.1 * info.public_grad)
            model = new


def test_identity_hybrid_run_equals_clean_public_sgd(small_splits):
    # zero private gradient plus common random numbers: fusiondp retraces sgd_org exactly
    ident = hybrid_for(small_splits, impute.Imputer("identity_test_only", allow_test_imputer=True))
    base = dict(epochs=2, hidden=(8, 8, 8), lr=0.05)
    a = train.train(small_splits, ident, TrainConfig(method="fusiondp", sigma=0.0, beta=0.7, **base))
    b = train.train(small_splits, None, TrainConfig(method="sgd_org", **base))
    assert a.history == [dict(h, epsilon_spent=float("inf")) for h in b.history]
    assert a.test == b.test


def test_single_step_matches_torch_oracle():
    pytest.importorskip("torch")
    rng = np.random.default_rng(0)
    arch = M.Architecture((5, 4, 4, 4, 1), 0.2)
    model = M.init_model(arch, 3)
    X, Xt = rng.normal(size=(2, 5)), rng.normal(size=(2, 5))
    y = np.array([1.0, 0.0])
    Xp, yp = rng.normal(size=(2, 5)), np.array([0.0, 1.0])
    pm = M.draw_masks(arch, 2, rng)
    qm = M.draw_masks(arch, 2, rng)
    cfg = TrainConfig(method="fusiondp", sigma=1.3, clip=0.05, alpha=2.0, beta=0.4)

    new, _ = train.train_step(model, Batch(y, X, Xt, pm), Batch(yp, Xp, masks=qm), cfg, 1.3, 0.1, stream(9, 4, "noise"))

    # the noise vector, drawn straight from the bit generator with the documented key
    seq = np.random.SeedSequence([9, 4, zlib.crc32(b"noise")])
    noise = np.random.Generator(np.random.Philox(seq)).normal(size=arch.n_params)
    want = torch_fusion_step(arch, model.params, {"x": X, "x_tilde": Xt, "y": y, "masks": pm},
                             {"x": Xp, "y": yp, "masks": qm}, 0.05, 1.3, 2.0, 0.4, 0.1, noise)
    assert np.max(np.abs(new.params - want)) < 1e-10


def test_empty_private_batch_still_releases_noise():
    arch = M.Architecture((3, 4, 4, 4, 1), 0.0)
    model = M.init_model(arch, 0)
    cfg = TrainConfig(method="dpsgd", sigma=2.0, clip=0.5, hidden=(4, 4, 4))
    empty = Batch(np.zeros(0), np.zeros((0, 3)))
    _, info = train.train_step(model, empty, None, cfg, 2.0, 0.1, stream(1, 0, "noise"))
    assert np.array_equal(info.private_grad, stream(1, 0, "noise").normal(size=arch.n_params) * 1.0)


# ---------------------------------------------------------------- full runs


FAST = dict(epochs=2, hidden=(16, 8, 8))


def test_runs_are_deterministic(small_splits, small_hybrid):
    cfg = TrainConfig(method="fusiondp", epsilon=1.0, beta=0.2, alpha=3.0, seed=4, **FAST)
    a, b = train.train(small_splits, small_hybrid, cfg), train.train(small_splits, small_hybrid, cfg)
    assert a.to_json() == b.to_json()
    assert a == b


def test_zero_epochs_reports_initial_model(small_splits, small_hybrid):
    cfg = TrainConfig(method="dpsgd", epsilon=1.0, epochs=0, hidden=(16, 8, 8))
    r = train.train(small_splits, small_hybrid, cfg)
    assert r.history == [] and r.best_epoch == 0 and r.achieved_epsilon == 0.0 and r.steps == 0
    init = M.init_model(M.Architecture((small_splits.test.schema.encoded_width(), 16, 8, 8, 1), cfg.dropout), 0)
    from fusiondp import metrics

    scores = M.predict_logits(init, small_splits.test.schema.encode(small_splits.test.features))
    assert r.test["auprc"] == metrics.auprc(scores, small_splits.test.labels)


def test_privacy_spent_is_monotone_and_within_budget(small_splits, small_hybrid):
    cfg = TrainConfig(method="calibrated_fusion", epsilon=0.5, alpha=2.0, epochs=3, hidden=(16, 8, 8))
    r = train.train(small_splits, small_hybrid, cfg)
    spent = [h["epsilon_spent"] for h in r.history]
    assert all(a < b for a, b in zip(spent, spent[1:]))
    assert spent[-1] == r.achieved_epsilon <= 0.5
    assert r.achieved_epsilon > 0.5 * (1 - 1e-2)


def test_closed_form_route(small_splits, small_hybrid):
    cfg = TrainConfig(method="dpsgd", epsilon=1.0, calibration="closed_form", **FAST)
    r = train.train(small_splits, small_hybrid, cfg)
    n = small_splits.train.n
    p, _, T, _ = train.schedule(cfg, n)
    from fusiondp.privacy import calibrate_sigma_closed_form

    assert r.sigma == calibrate_sigma_closed_form(1.0, n**-1.1, 1.0, p * n, n, T)


@pytest.mark.parametrize("method", ["sgd_hybrid", "sgd_pub"])
def test_public_baselines_never_read_private_columns(method, small_splits, small_hybrid):
    r = train.train(small_splits, small_hybrid, TrainConfig(method=method, **FAST))
    assert r.audit == {"train_private_reads": 0, "val_private_reads": 0}


def test_audit_counts_private_access(small_splits, small_hybrid):
    r = train.train(small_splits, small_hybrid, TrainConfig(method="dpsgd", epsilon=1.0, **FAST))
    assert r.audit["train_private_reads"] > 0


def test_missing_hybrid_is_an_error(small_splits):
    with pytest.raises(TrainError):
        train.train(small_splits, None, TrainConfig(method="fusiondp", epsilon=1.0, **FAST))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_with_config(small_splits):
    cfg = TrainConfig(method="sgd_org", lr=1e305, **FAST)
    with pytest.raises(TrainError, match='"lr": 1e\\+305'):
        train.train(small_splits, None, cfg)


def test_result_json_excludes_wall_clock(small_splits):
    r = train.train(small_splits, None, TrainConfig(method="sgd_org", **FAST))
    doc = json.loads(r.to_json())
    assert "wall_clock" not in doc and doc["method"] == "sgd_org"
    assert set(r.summary_row()) == set(train.SWEEP_COLUMNS)


@pytest.mark.slow
def test_clean_training_learns_the_synthetic_task():
    splits = standardized_splits(20000, coupling=0.8)
    r = train.train(splits, None, TrainConfig(method="sgd_org", lr=0.05))
    assert r.test["auprc"] >= splits.test.labels.mean() + 0.15


# ---------------------------------------------------------------- grid search


def test_default_grid_contents():
    grid = train.default_grid(["fusiondp"], [0.1, 1.0])
    cells = {c["epsilon"][0]: c for c in grid}
    assert cells[0.1]["clip"] == [0.1] and cells[0.1]["alpha"] == [5.0] and cells[0.1]["beta"] == [0.2]
    assert cells[1.0]["epochs"] == [7] and cells[1.0]["clip"] == [0.6] and cells[1.0]["alpha"] == [8.0]
    with pytest.raises(ConfigError):
        train.default_grid(["fusiondp"], [0.25])
    with pytest.raises(ConfigError):
        train.expand_grid([])


def test_expand_grid_cardinality():
    grid = [{"method": ["fusiondp"], "epsilon": [1.0], "alpha": [1.0, 2.0], "beta": [0.1, 0.2, 0.3]},
            {"method": ["sgd_org"], "lr": [0.01, 0.1]}]
    cfgs = train.expand_grid(grid, {"epochs": 1})
    assert len(cfgs) == 8
    assert all(c.epochs == 1 for c in cfgs)
    assert [c.epsilon for c in cfgs if c.method == "sgd_org"] == [None, None]


def test_single_cell_grid_equals_train(small_splits, small_hybrid):
    cfg = TrainConfig(method="feature_dp", epsilon=2.0, alpha=2.0, **FAST)
    sweep = train.grid_search(small_splits, small_hybrid, [{"method": ["feature_dp"], "epsilon": [2.0], "alpha": [2.0]}],
                              base=cfg)
    assert sweep.runs == [train.train(small_splits, small_hybrid, cfg)]
    assert sweep.best[("feature_dp", 2.0)] == sweep.runs


def test_zero_learning_rate_cell_is_not_selected(small_splits):
    sweep = train.grid_search(small_splits, None, [{"method": ["sgd_org"], "lr": [0.0, 0.05]}],
                              seeds=(0, 1), base=TrainConfig(method="sgd_org", **FAST))
    best = sweep.best[("sgd_org", None)]
    assert {r.config["lr"] for r in best} == {0.05} and [r.seed for r in best] == [0, 1]
    assert len(sweep.rows()) == 4 and len(sweep.rows(selected_only=True)) == 2


def test_parallel_sweep_matches_serial(small_splits):
    cfgs = train.expand_grid([{"method": ["sgd_org"], "lr": [0.01, 0.05]}], TrainConfig(method="sgd_org", **FAST))
    assert train.run_configs(small_splits, None, cfgs, jobs=2) == train.run_configs(small_splits, None, cfgs)


def test_sweep_csv_is_sorted(tmp_path, small_splits):
    cfgs = [replace(c, seed=s) for c in train.expand_grid([{"method": ["sgd_org"]}], TrainConfig(method="sgd_org", **FAST))
            for s in (2, 0, 1)]
    runs = train.run_configs(small_splits, None, cfgs)
    train.write_sweep_csv([r.summary_row() for r in runs], tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == ",".join(train.SWEEP_COLUMNS)
    assert [ln.split(",")[train.SWEEP_COLUMNS.index("seed")] for ln in lines[1:]] == ["0", "1", "2"]
