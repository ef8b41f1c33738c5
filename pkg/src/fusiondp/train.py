"""Two-branch private training loop and the baseline variants.

Each step draws a Poisson private batch and an independent uniform public
batch. The public branch is plain SGD on hybrid (or masked) rows; the private
branch clips per-sample gradients of the private loss and adds Gaussian noise.
The update is ``theta - lr * (g_pub + alpha * g_priv)``; the naive-fusion
baselines instead use ``lam * g_priv + (1 - lam) * g_pub``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import metrics
from .data import AuditedView, Dataset
from .impute import HybridDataset, mask_gaussian
from .model import (
    Architecture,
    MlpModel,
    batch_loss_grad,
    clipped_grad_sum,
    draw_masks,
    init_model,
    predict_logits,
)
from .privacy import (
    CalibrationError,
    PrivacyBudget,
    calibrate_sigma_accountant,
    calibrate_sigma_closed_form,
    noisy_sum_mean,
    poisson_sample,
    rdp_epsilon,
)
from .rng import stream


@dataclass(frozen=True)
class MethodSpec:
    private_loss: str | None  # None: no private branch
    private_reference: str | None  # data used as x~ in the private loss
    public_data: str | None  # data for the clean branch
    combine: str  # "alpha" | "lambda" | "private_only" | "public_only"


METHODS: dict[str, MethodSpec] = {
    "sgd_org": MethodSpec(None, None, "original", "public_only"),
    "sgd_hybrid": MethodSpec(None, None, "hybrid", "public_only"),
    "sgd_pub": MethodSpec(None, None, "masked", "public_only"),
    "dpsgd": MethodSpec("naive", None, None, "private_only"),
    "naive_fusion": MethodSpec("naive", None, "hybrid", "lambda"),
    "naive_fusion_pub": MethodSpec("naive", None, "masked", "lambda"),
    "feature_dp": MethodSpec("calibrated", "masked", "masked", "alpha"),
    "calibrated_fusion": MethodSpec("calibrated", "hybrid", "hybrid", "alpha"),
    "fusiondp": MethodSpec("fusiondp", "hybrid", "hybrid", "alpha"),
}
PRIVATE_METHODS = tuple(m for m, s in METHODS.items() if s.private_loss is not None)
# checkpoint selection for these methods may only see data they trained on
VALIDATION_DATA = {"sgd_hybrid": "hybrid", "sgd_pub": "masked"}


class TrainError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    method: str = "fusiondp"
    epochs: int = 13
    lr: float = 0.01
    lr_schedule: str = "constant"  # or "step"
    lr_decay: float = 0.5
    lr_step_epochs: int = 5
    clip: float = 1.0
    epsilon: float | None = None
    delta: float | None = None
    sigma: float | None = None
    calibration: str = "accountant"  # or "closed_form"
    closed_form_c: float = 1.0
    sample_rate: float | None = None
    private_batch_size: int = 256
    public_batch_size: int | None = None
    alpha: float = 1.0
    beta: float = 0.0
    lam: float | None = None
    lam_from_alpha: bool = False
    hidden: tuple[int, int, int] = (64, 32, 16)
    dropout: float = 0.15
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.lr_schedule not in ("constant", "step"):
            raise ConfigError("lr_schedule must be 'constant' or 'step'")
        if not self.clip > 0:
            raise ConfigError("clip must be positive")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.beta > 0 and self.method != "fusiondp":
            raise ConfigError("beta > 0 is only meaningful for fusiondp")
        naive = METHODS[self.method].combine == "lambda"
        if (self.lam is not None or self.lam_from_alpha) and not naive:
            raise ConfigError("lam is only used by naive_fusion / naive_fusion_pub")
        if self.lam is not None and not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must lie in [0, 1]")
        if self.calibration not in ("accountant", "closed_form"):
            raise ConfigError("calibration must be 'accountant' or 'closed_form'")
        if self.sample_rate is not None and not 0 < self.sample_rate <= 1:
            raise ConfigError("sample_rate must lie in (0, 1]")
        if self.is_private and self.sigma is None and self.epsilon is None:
            raise ConfigError(f"{self.method} needs either epsilon or an explicit sigma")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")

    @property
    def spec(self) -> MethodSpec:
        return METHODS[self.method]

    @property
    def is_private(self) -> bool:
        return self.spec.private_loss is not None

    @property
    def mixing_lambda(self) -> float:
        if self.lam is not None:
            return self.lam
        if self.lam_from_alpha:
            return self.alpha / (1.0 + self.alpha)
        return 0.5

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "step" and self.lr_step_epochs > 0:
            return self.lr * self.lr_decay ** (epoch // self.lr_step_epochs)
        return self.lr

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["hidden"] = list(self.hidden)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return cls(**doc)


def load_config(path: str | Path) -> TrainConfig:
    return TrainConfig.from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- one step


@dataclass
class Batch:
    """Encoded model inputs for one branch of one step."""

    y: np.ndarray
    x: np.ndarray | None = None  # original rows (private branch) or clean-branch rows
    x_tilde: np.ndarray | None = None
    masks: list[np.ndarray] | None = None

    @property
    def size(self) -> int:
        return self.y.shape[0]


@dataclass
class StepInfo:
    private_grad: np.ndarray | None
    public_grad: np.ndarray | None
    private_loss: float
    public_loss: float
    private_size: int


def train_step(model: MlpModel, private_batch: Batch | None, public_batch: Batch | None, config: TrainConfig,
               sigma: float, lr: float, noise_rng: np.random.Generator | None) -> tuple[MlpModel, StepInfo]:
    """One parameter update; returns the new model and the branch gradients."""
    spec = config.spec
    P = model.arch.n_params
    g_priv = g_pub = None
    priv_loss = pub_loss = 0.0
    size = 0

    if spec.private_loss is not None:
        if private_batch is None or noise_rng is None:
            raise TrainError(f"{config.method} needs a private batch and a noise stream")
        size = private_batch.size
        clipped_sum = np.zeros(P)
        if size:
            losses, clipped_sum, _ = clipped_grad_sum(
                spec.private_loss, model, private_batch.x, private_batch.y, config.clip,
                private_batch.x_tilde, config.beta, private_batch.masks,
            )
            priv_loss = float(losses.mean())
        g_priv = noisy_sum_mean(clipped_sum, config.clip, sigma, max(1, size), noise_rng)

    if spec.public_data is not None:
        if public_batch is None:
            raise TrainError(f"{config.method} needs a public batch")
        pub_loss, g_pub = batch_loss_grad(model, public_batch.x, public_batch.y, public_batch.masks)

    if spec.combine == "public_only":
        g = g_pub
    elif spec.combine == "private_only":
        g = g_priv
    elif spec.combine == "lambda":
        lam = config.mixing_lambda
        g = lam * g_priv + (1.0 - lam) * g_pub
    else:
        g = g_pub + config.alpha * g_priv

    new = model.with_params(model.params - lr * g)
    return new, StepInfo(g_priv, g_pub, priv_loss, pub_loss, size)


# ---------------------------------------------------------------- full run


@dataclass
class Splits:
    support: Dataset
    train: Dataset
    val: Dataset
    test: Dataset


@dataclass
class HybridSplits:
    train: HybridDataset
    val: HybridDataset


@dataclass
class RunResult:
    method: str
    seed: int
    epsilon: float | None
    delta: float | None
    achieved_epsilon: float
    sigma: float
    sample_rate: float
    steps: int
    steps_per_epoch: int
    public_batch_size: int
    history: list[dict]
    best_epoch: int
    val_auprc: float
    test: dict
    config: dict
    audit: dict
    wall_clock: float = field(default=0.0, compare=False)

    @property
    def test_auprc(self) -> float:
        return self.test["auprc"]

    def to_dict(self) -> dict:
        doc = asdict(self)
        # timing is not reproducible; it is recorded in the run manifest instead
        doc.pop("wall_clock")
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def summary_row(self) -> dict:
        cfg = self.config
        lam = cfg.get("lam")
        if METHODS[self.method].combine == "lambda":
            lam = TrainConfig.from_dict(cfg).mixing_lambda
        return {
            "method": self.method,
            "epsilon": "" if self.epsilon is None else self.epsilon,
            "epochs": cfg["epochs"],
            "lr": cfg["lr"],
            "C": cfg["clip"],
            "alpha": cfg["alpha"],
            "beta": cfg["beta"],
            "lambda": "" if lam is None else lam,
            "seed": self.seed,
            "val_auprc": self.val_auprc,
            "test_auprc": self.test["auprc"],
            "test_auroc": self.test["auroc"],
            "achieved_epsilon": self.achieved_epsilon,
        }


def _evaluate(model: MlpModel, X: np.ndarray, y: np.ndarray) -> dict:
    scores = predict_logits(model, X)
    if not np.all(np.isfinite(scores)):
        raise TrainError("non-finite logits during evaluation")
    preds = metrics.ScoredPredictions(scores, y)
    out = {"auprc": metrics.auprc(preds), "auroc": metrics.auroc(preds)}
    out.update(metrics.classification_report(preds, threshold=0.0))
    return out


def schedule(config: TrainConfig, n: int) -> tuple[float, int, int, int]:
    """(sample_rate, steps_per_epoch, total_steps, public_batch_size) for ``n`` training rows."""
    p = config.sample_rate if config.sample_rate is not None else min(1.0, config.private_batch_size / n)
    steps_per_epoch = int(math.ceil(1.0 / p - 1e-12))
    m_pub = config.public_batch_size or int(round(4 * p * n))
    return p, steps_per_epoch, config.epochs * steps_per_epoch, max(1, min(n, m_pub))


def resolve_sigma(config: TrainConfig, n: int, p: float, T: int) -> tuple[float, float | None]:
    """Noise multiplier and delta for a run (sigma 0 for non-private methods)."""
    if not config.is_private:
        return 0.0, None
    delta = config.delta if config.delta is not None else PrivacyBudget.default_delta(n)
    if config.sigma is not None:
        return float(config.sigma), delta
    if T == 0:
        return 0.0, delta
    try:
        if config.calibration == "closed_form":
            # the mechanism adds sigma * C noise, so the multiplier is the tau = 1 form
            sigma = calibrate_sigma_closed_form(config.epsilon, delta, 1.0, p * n, n, max(T, 2),
                                                config.closed_form_c)
            return sigma, delta
        return _cached_sigma(config.epsilon, delta, p, T), delta
    except CalibrationError as exc:
        raise CalibrationError(f"{exc}; config: {json.dumps(config.to_dict(), sort_keys=True)}") from None


_SIGMA_CACHE: dict[tuple, float] = {}


def _cached_sigma(eps: float, delta: float, p: float, T: int) -> float:
    key = (eps, delta, p, T)
    if key not in _SIGMA_CACHE:
        _SIGMA_CACHE[key] = calibrate_sigma_accountant(eps, delta, p, T)
    return _SIGMA_CACHE[key]


def _spent(sigma: float, p: float, t: int, delta: float | None) -> float:
    if delta is None or t == 0:
        return 0.0
    if sigma == 0:
        return math.inf
    return rdp_epsilon(sigma, p, t, delta)


def train(splits: Splits, hybrid: HybridSplits | None, config: TrainConfig) -> RunResult:
    """Run the full loop, select the best-validation-AUPRC epoch, report test metrics."""
    return train_model(splits, hybrid, config)[0]


def train_model(splits: Splits, hybrid: HybridSplits | None, config: TrainConfig) -> tuple[RunResult, MlpModel]:
    """Like :func:`train`, also returning the selected checkpoint."""
    started = time.perf_counter()
    spec = config.spec
    schema = splits.train.schema
    train_view = AuditedView(splits.train, "train")
    val_view = AuditedView(splits.val, "val")
    n = train_view.n

    val_kind = VALIDATION_DATA.get(config.method, "original")
    train_kinds = {k for k in (spec.public_data, spec.private_reference) if k is not None}
    if spec.private_loss is not None:
        train_kinds.add("original")
    if "hybrid" in train_kinds | {val_kind} and hybrid is None:
        raise TrainError(f"{config.method} needs hybrid (imputed) splits")

    def encoded(kind: str, view: AuditedView, which: str) -> np.ndarray:
        if kind == "original":
            return schema.encode(view.full_features())
        if kind == "hybrid":
            return schema.encode(getattr(hybrid, which).features)
        # masked rows are rebuilt from public columns only
        return schema.encode(mask_gaussian(view, config.seed + (0 if which == "train" else 1)).features)

    train_X = {k: encoded(k, train_view, "train") for k in sorted(train_kinds)}
    val_X = encoded(val_kind, val_view, "val")
    test_X = schema.encode(splits.test.features)
    y_train = train_view.labels

    arch = Architecture((test_X.shape[1], *config.hidden, 1), config.dropout)
    model = init_model(arch, config.seed)

    p, steps_per_epoch, T, m_pub = schedule(config, n)
    sigma, delta = resolve_sigma(config, n, p, T)

    history = []
    best = (-1.0, 0, model)
    if config.epochs == 0:
        val = _evaluate(model, val_X, val_view.labels)
        best = (val["auprc"], 0, model)

    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        for step in range(epoch * steps_per_epoch, (epoch + 1) * steps_per_epoch):
            priv = pub = None
            noise_rng = None
            if spec.private_loss is not None:
                idx = poisson_sample(n, p, stream(config.seed, step, "private_sample"))
                priv = Batch(
                    y_train[idx],
                    train_X["original"][idx],
                    train_X[spec.private_reference][idx] if spec.private_reference else None,
                    draw_masks(arch, idx.size, stream(config.seed, step, "private_dropout")),
                )
                noise_rng = stream(config.seed, step, "noise")
            if spec.public_data is not None:
                idx = np.sort(stream(config.seed, step, "public_sample").choice(n, m_pub, replace=False))
                pub = Batch(
                    y_train[idx],
                    train_X[spec.public_data][idx],
                    masks=draw_masks(arch, idx.size, stream(config.seed, step, "public_dropout")),
                )
            model, info = train_step(model, priv, pub, config, sigma, lr, noise_rng)
            if not (math.isfinite(info.private_loss) and math.isfinite(info.public_loss)
                    and np.all(np.isfinite(model.params))):
                raise TrainError(
                    f"non-finite loss at step {step} (private {info.private_loss}, public {info.public_loss}); "
                    f"config: {json.dumps(config.to_dict(), sort_keys=True)}"
                )
        val = _evaluate(model, val_X, val_view.labels)
        spent = _spent(sigma, p, (epoch + 1) * steps_per_epoch, delta)
        history.append({"epoch": epoch + 1, "val_auprc": val["auprc"], "val_auroc": val["auroc"],
                        "epsilon_spent": spent})
        if val["auprc"] > best[0]:
            best = (val["auprc"], epoch + 1, model)

    test = _evaluate(best[2], test_X, splits.test.labels)
    result = RunResult(
        method=config.method,
        seed=config.seed,
        epsilon=config.epsilon if config.is_private else None,
        delta=delta,
        achieved_epsilon=_spent(sigma, p, T, delta),
        sigma=sigma,
        sample_rate=p,
        steps=T,
        steps_per_epoch=steps_per_epoch,
        public_batch_size=m_pub if spec.public_data else 0,
        history=history,
        best_epoch=best[1],
        val_auprc=best[0],
        test=test,
        config=config.to_dict(),
        audit={"train_private_reads": train_view.private_reads, "val_private_reads": val_view.private_reads},
        wall_clock=time.perf_counter() - started,
    )
    return result, best[2]


# ---------------------------------------------------------------- grid search

# (method, epsilon, epochs, C, alpha, beta) for the tabular sepsis task; for the
# naive-fusion rows the alpha column is the averaging weight lam
SEPSIS_TABLE = (
    ("fusiondp", 0.1, 13, 0.1, 5.0, 0.2),
    ("fusiondp", 0.3, 7, 0.2, 8.0, 0.5),
    ("fusiondp", 0.5, 7, 0.5, 5.0, 0.2),
    ("fusiondp", 0.7, 7, 0.4, 10.0, 0.2),
    ("fusiondp", 1.0, 7, 0.6, 8.0, 0.2),
    ("fusiondp", 1.5, 13, 1.3, 3.0, 0.5),
    ("fusiondp", 2.0, 13, 1.8, 3.0, 0.5),
    ("dpsgd", 0.1, 7, 0.2, 0.0, 0.0),
    ("dpsgd", 0.3, 13, 0.5, 0.0, 0.0),
    ("dpsgd", 0.5, 13, 1.0, 0.0, 0.0),
    ("dpsgd", 0.7, 13, 1.5, 0.0, 0.0),
    ("dpsgd", 1.0, 13, 2.5, 0.0, 0.0),
    ("dpsgd", 1.5, 13, 2.5, 0.0, 0.0),
    ("dpsgd", 2.0, 13, 2.5, 0.0, 0.0),
    ("feature_dp", 0.1, 13, 0.05, 8.0, 0.0),
    ("feature_dp", 0.3, 13, 0.3, 3.0, 0.0),
    ("feature_dp", 0.5, 7, 1.0, 8.0, 0.0),
    ("feature_dp", 0.7, 13, 1.5, 5.0, 0.0),
    ("feature_dp", 1.0, 13, 1.8, 3.0, 0.0),
    ("feature_dp", 1.5, 7, 2.0, 5.0, 0.0),
    ("feature_dp", 2.0, 13, 2.5, 3.0, 0.0),
    ("calibrated_fusion", 0.1, 13, 0.05, 8.0, 0.0),
    ("calibrated_fusion", 0.3, 13, 0.1, 8.0, 0.0),
    ("calibrated_fusion", 0.5, 13, 0.3, 5.0, 0.0),
    ("calibrated_fusion", 0.7, 13, 0.5, 3.0, 0.0),
    ("calibrated_fusion", 1.0, 13, 1.0, 3.0, 0.0),
    ("calibrated_fusion", 1.5, 13, 1.2, 3.0, 0.0),
    ("calibrated_fusion", 2.0, 13, 1.0, 5.0, 0.0),
    ("naive_fusion", 0.1, 13, 0.1, 0.5, 0.0),
    ("naive_fusion", 0.3, 13, 0.5, 0.8, 0.0),
    ("naive_fusion", 0.5, 13, 1.5, 0.8, 0.0),
    ("naive_fusion", 0.7, 13, 2.0, 0.8, 0.0),
    ("naive_fusion", 1.0, 13, 2.2, 0.8, 0.0),
    ("naive_fusion", 1.5, 13, 2.5, 1.0, 0.0),
    ("naive_fusion", 2.0, 13, 3.0, 1.0, 0.0),
    ("naive_fusion_pub", 0.1, 13, 0.1, 0.5, 0.0),
    ("naive_fusion_pub", 0.3, 13, 0.5, 0.8, 0.0),
    ("naive_fusion_pub", 0.5, 13, 1.5, 0.8, 0.0),
    ("naive_fusion_pub", 0.7, 13, 2.0, 0.8, 0.0),
    ("naive_fusion_pub", 1.0, 13, 2.2, 0.8, 0.0),
    ("naive_fusion_pub", 1.5, 13, 2.5, 1.0, 0.0),
    ("naive_fusion_pub", 2.0, 13, 3.0, 1.0, 0.0),
)
NON_PRIVATE_EPOCHS = 13
# the table carries no step size; every method gets the same candidates
DEFAULT_LRS = (0.05, 0.1, 0.2)


def default_grid(methods: Iterable[str] | None = None, epsilons: Iterable[float] | None = None,
                 lrs: Sequence[float] = DEFAULT_LRS) -> list[dict]:
    """Grid cells from the table above, plus one cell per non-private baseline.

    Each cell maps TrainConfig field names to a list of candidate values.
    """
    methods = set(METHODS) if methods is None else set(methods)
    unknown = methods - set(METHODS)
    if unknown:
        raise ConfigError(f"unknown methods {sorted(unknown)}")
    eps_set = None if epsilons is None else {float(e) for e in epsilons}
    cells = []
    for m in METHODS:
        if m in methods and not METHODS[m].private_loss:
            cells.append({"method": [m], "epochs": [NON_PRIVATE_EPOCHS], "lr": list(lrs)})
    for method, eps, epochs, C, alpha, beta in SEPSIS_TABLE:
        if method not in methods or (eps_set is not None and eps not in eps_set):
            continue
        cell = {"method": [method], "epsilon": [eps], "epochs": [epochs], "clip": [C], "lr": list(lrs)}
        if METHODS[method].combine == "lambda":
            cell["lam"] = [alpha]
        elif METHODS[method].combine == "alpha":
            cell["alpha"] = [alpha]
            cell["beta"] = [beta]
        cells.append(cell)
    if eps_set is not None:
        missing = {(m, e) for m in methods if METHODS[m].private_loss for e in eps_set} - {
            (c["method"][0], c["epsilon"][0]) for c in cells if "epsilon" in c
        }
        if missing:
            raise ConfigError(f"no table entry for {sorted(missing)}")
    return cells


def expand_grid(grid: Sequence[dict], base: TrainConfig | dict | None = None) -> list[TrainConfig]:
    """Cartesian product of each cell's value lists, on top of ``base``."""
    if not grid:
        raise ConfigError("grid is empty")
    base_doc = base.to_dict() if isinstance(base, TrainConfig) else dict(base or {})
    base_doc.pop("method", None)
    out = []
    for cell in grid:
        keys = sorted(cell)
        values = [v if isinstance(v, (list, tuple)) else [v] for v in (cell[k] for k in keys)]
        for combo in itertools.product(*values):
            doc = dict(base_doc)
            doc.update(zip(keys, combo))
            if doc.get("method") is None:
                raise ConfigError("every grid cell needs a method")
            if not METHODS[doc["method"]].private_loss:
                doc["epsilon"] = None
            out.append(TrainConfig.from_dict(doc))
    return out


def _run_one(args):
    splits, hybrid, cfg = args
    return train(splits, hybrid, cfg)


def run_configs(splits: Splits, hybrid: HybridSplits | None, configs: Sequence[TrainConfig],
                jobs: int = 1) -> list[RunResult]:
    """Train every config; independent cells may run in worker processes."""
    if jobs <= 1:
        return [train(splits, hybrid, c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, [(splits, hybrid, c) for c in configs]))


def config_key(result: RunResult) -> tuple:
    """Hyperparameters of a run with the seed removed."""
    doc = dict(result.config)
    doc.pop("seed")
    return tuple(sorted((k, json.dumps(v)) for k, v in doc.items()))


@dataclass
class SweepResult:
    runs: list[RunResult]
    best: dict[tuple[str, float | None], list[RunResult]]

    def rows(self, selected_only: bool = False) -> list[dict]:
        runs = [r for rs in self.best.values() for r in rs] if selected_only else self.runs
        return sort_rows([r.summary_row() for r in runs])


def select_best(runs: Sequence[RunResult]) -> dict[tuple[str, float | None], list[RunResult]]:
    """Per (method, epsilon): the config with the highest seed-mean validation AUPRC.

    Ties keep the config that appears first.
    """
    groups: dict[tuple, dict[tuple, list[RunResult]]] = {}
    for r in runs:
        groups.setdefault((r.method, r.epsilon), {}).setdefault(config_key(r), []).append(r)
    best = {}
    for cell, by_cfg in groups.items():
        chosen = max(by_cfg.values(), key=lambda rs: float(np.mean([r.val_auprc for r in rs])))
        best[cell] = sorted(chosen, key=lambda r: r.seed)
    return best


def grid_search(splits: Splits, hybrid: HybridSplits | None, grid: Sequence[dict], seeds: Sequence[int] = (0,),
                base: TrainConfig | dict | None = None, jobs: int = 1) -> SweepResult:
    """Train every grid combination for every seed and select per (method, epsilon)."""
    configs = [replace(c, seed=s) for c in expand_grid(grid, base) for s in seeds]
    runs = run_configs(splits, hybrid, configs, jobs)
    return SweepResult(runs, select_best(runs))


SWEEP_COLUMNS = ("method", "epsilon", "epochs", "lr", "C", "alpha", "beta", "lambda", "seed",
                 "val_auprc", "test_auprc", "test_auroc", "achieved_epsilon")


def sort_rows(rows: Iterable[dict]) -> list[dict]:
    def key(r):
        eps = r["epsilon"]
        return (r["method"], -1.0 if eps in ("", None) else float(eps), int(r["seed"]))

    return sorted(rows, key=key)


def write_sweep_csv(rows: Iterable[dict], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in sort_rows(rows):
            w.writerow({k: r[k] for k in SWEEP_COLUMNS})
