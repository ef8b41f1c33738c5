"""Gaussian-mechanism primitives and privacy accounting.

Two calibration routes are offered: the closed-form noise scale of the
feature-DP guarantee (with its unspecified absolute constant ``c`` exposed),
and a Renyi-DP accountant for the Poisson-subsampled Gaussian mechanism,
which is the default.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

# Fine grid near 1 for large-noise regimes, long tail for tiny epsilons:
# with the classic conversion eps >= log(1/delta) / (alpha - 1), so eps = 0.1
# at delta ~ 1e-5 needs orders above 100.
DEFAULT_ORDERS = tuple(
    [1.0 + 0.25 * k for k in range(1, 37)]
    + list(range(11, 65))
    + [80, 96, 112, 128, 160, 192, 224, 256, 320, 384, 448, 512, 768, 1024]
)


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @staticmethod
    def default_delta(n: int) -> float:
        return float(n) ** -1.1

    @classmethod
    def for_dataset(cls, epsilon: float, n: int, delta: float | None = None) -> "PrivacyBudget":
        return cls(epsilon, cls.default_delta(n) if delta is None else delta)


@dataclass(frozen=True)
class NoiseParams:
    clip_norm: float
    noise_multiplier: float
    sample_rate: float
    steps: int
    n: int
    public_batch_size: int

    def __post_init__(self):
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if self.noise_multiplier < 0:
            raise ValueError("noise_multiplier must be nonnegative")
        if not 0 < self.sample_rate <= 1:
            raise ValueError("sample_rate must lie in (0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.sample_rate * self.n < 1:
            raise ValueError("expected private batch size p*n must be >= 1")
        if self.public_batch_size < 1:
            raise ValueError("public_batch_size must be >= 1")

    @property
    def expected_batch_size(self) -> float:
        return self.sample_rate * self.n

    @property
    def sensitivity(self) -> float:
        # post-clipping bound on one sample's contribution
        return self.clip_norm


# ---------------------------------------------------------------- mechanism


def clip(g: np.ndarray, C: float) -> np.ndarray:
    """Scale ``g`` by 1 / max(1, ||g|| / C)."""
    if not C > 0:
        raise ValueError("clip norm must be positive")
    g = np.asarray(g, dtype=float)
    return g / max(1.0, float(np.linalg.norm(g)) / C)


def clip_rows(G: np.ndarray, C: float) -> np.ndarray:
    """Row-wise :func:`clip` for a (B, P) matrix of per-sample gradients."""
    if not C > 0:
        raise ValueError("clip norm must be positive")
    G = np.asarray(G, dtype=float)
    if G.shape[0] == 0:
        return G.copy()
    norms = np.linalg.norm(G, axis=1)
    return G / np.maximum(1.0, norms / C)[:, None]


def noisy_private_mean(clipped: np.ndarray, C: float, sigma: float, divisor: int,
                       rng: np.random.Generator) -> np.ndarray:
    """(sum of clipped rows + N(0, sigma^2 C^2 I)) / divisor.

    Noise is drawn on every call, empty batch included, so each step releases
    the same mechanism regardless of the realized batch.
    """
    clipped = np.atleast_2d(np.asarray(clipped, dtype=float))
    return noisy_sum_mean(clipped.sum(axis=0), C, sigma, divisor, rng)


def noisy_sum_mean(clipped_sum: np.ndarray, C: float, sigma: float, divisor: int,
                   rng: np.random.Generator) -> np.ndarray:
    """:func:`noisy_private_mean` for an already reduced sum of clipped gradients."""
    if divisor < 1:
        raise ValueError("divisor must be >= 1")
    clipped_sum = np.asarray(clipped_sum, dtype=float)
    noise = rng.normal(0.0, 1.0, size=clipped_sum.shape[0]) * (sigma * C)
    return (clipped_sum + noise) / divisor


def poisson_sample(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Indices included independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("sampling probability must lie in [0, 1]")
    return np.flatnonzero(rng.random(n) < p)


# ---------------------------------------------------------------- closed form


def calibrate_sigma_closed_form(eps: float, delta: float, tau: float, m: float, n: int, T: int,
                                c: float = 1.0) -> float:
    """sigma = c * tau * m / (eps * n) * sqrt(T * ln(1/delta) * ln(T/delta))."""
    for name, v in (("eps", eps), ("delta", delta), ("tau", tau), ("m", m), ("n", n), ("T", T), ("c", c)):
        if not v > 0:
            raise CalibrationError(f"{name} must be positive, got {v}")
    if delta >= 1:
        raise CalibrationError("delta must be < 1")
    if T / delta <= 1:
        raise CalibrationError("T / delta must exceed 1")
    return c * tau * m / (eps * n) * math.sqrt(T * math.log(1.0 / delta) * math.log(T / delta))


# ---------------------------------------------------------------- Renyi accountant


def _log_add(a: float, b: float) -> float:
    lo, hi = min(a, b), max(a, b)
    if lo == -np.inf:
        return hi
    return hi + math.log1p(math.exp(lo - hi))


def _log_comb(n: float, k: float) -> float:
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    log_a = -np.inf
    log_q, log_1mq = math.log(q), math.log1p(-q)
    for i in range(alpha + 1):
        term = _log_comb(alpha, i) + i * log_q + (alpha - i) * log_1mq + (i * i - i) / (2 * sigma**2)
        log_a = _log_add(log_a, term)
    return log_a


def _log_erfc(x: float) -> float:
    return math.log(2.0) + special.log_ndtr(-x * math.sqrt(2.0))


def _log_sub(a: float, b: float) -> float:
    # log(exp(a) - exp(b)) for a >= b
    if b == -np.inf:
        return a
    if b >= a:
        return -np.inf
    return a + math.log1p(-math.exp(b - a))


def _log_a_frac(q: float, sigma: float, alpha: float, max_terms: int = 10000) -> float:
    # two-sided series split at z0 for non-integer orders; binom(alpha, i)
    # changes sign past i = alpha, so terms are added or subtracted
    log_a0 = log_a1 = -np.inf
    z0 = sigma**2 * math.log(1.0 / q - 1.0) + 0.5
    log_q, log_1mq = math.log(q), math.log1p(-q)
    for i in range(max_terms):
        coef = special.binom(alpha, i)
        if coef == 0:
            break
        log_coef = math.log(abs(coef))
        j = alpha - i
        t0 = log_coef + i * log_q + j * log_1mq
        t1 = log_coef + j * log_q + i * log_1mq
        e0 = math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2.0) * sigma))
        e1 = math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2.0) * sigma))
        s0 = t0 + (i * i - i) / (2 * sigma**2) + e0
        s1 = t1 + (j * j - j) / (2 * sigma**2) + e1
        if coef > 0:
            log_a0 = _log_add(log_a0, s0)
            log_a1 = _log_add(log_a1, s1)
        else:
            log_a0 = _log_sub(log_a0, s0)
            log_a1 = _log_sub(log_a1, s1)
        if i > alpha and max(s0, s1) < -30:
            return _log_add(log_a0, log_a1)
    return np.inf


def rdp_subsampled_gaussian(q: float, sigma: float, order: float) -> float:
    """Renyi divergence of one Poisson-subsampled Gaussian step at ``order``."""
    if q == 0:
        return 0.0
    if sigma == 0:
        return np.inf
    if q == 1.0:
        return order / (2 * sigma**2)
    if float(order).is_integer():
        log_a = _log_a_int(q, sigma, int(order))
    else:
        log_a = _log_a_frac(q, sigma, float(order))
    return log_a / (order - 1)


def rdp_epsilon(sigma: float, p: float, T: int, delta: float, orders=DEFAULT_ORDERS) -> float:
    """(eps, delta) of T composed subsampled Gaussian steps, minimized over orders.

    Uses the classic conversion eps = T * rdp(alpha) + ln(1/delta) / (alpha - 1).
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if T < 0:
        raise ValueError("T must be nonnegative")
    if T == 0:
        return 0.0
    best = np.inf
    for a, rdp in zip(orders, _rdp_vector(p, sigma, tuple(orders))):
        best = min(best, T * rdp + math.log(1.0 / delta) / (a - 1))
    return float(best)


@functools.lru_cache(maxsize=4096)
def _rdp_vector(q: float, sigma: float, orders: tuple) -> tuple[float, ...]:
    # per-step divergences do not depend on T, so trajectories reuse them
    return tuple(rdp_subsampled_gaussian(q, sigma, a) for a in orders)


def calibrate_sigma_accountant(eps: float, delta: float, p: float, T: int, rtol: float = 1e-3,
                               sigma_max: float = 1e6) -> float:
    """Smallest sigma (to relative tolerance ``rtol``) with rdp_epsilon(sigma) <= eps."""
    if not eps > 0:
        raise CalibrationError("eps must be positive")
    hi = 1.0
    while rdp_epsilon(hi, p, T, delta) > eps:
        hi *= 2.0
        if hi > sigma_max:
            raise CalibrationError(f"eps={eps} unreachable with sigma <= {sigma_max:g}")
    lo = hi / 2.0
    if rdp_epsilon(lo, p, T, delta) <= eps:
        lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if rdp_epsilon(mid, p, T, delta) <= eps:
            hi = mid
        else:
            lo = mid
    return hi
