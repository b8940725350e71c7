"""Auxiliary power series behind the sharp boundary-integrand bounds.

sqrt(1 - s^2) = 1 - sum_{k>=1} c_k s^(2k) with
c_k = binom(2k, k) / (2^(2k) (2k - 1)), all c_k > 0.  Two weighted variants
of the same coefficients appear as node weights in the verification
pipeline:

    series_f(s) = sum_{k>=1} (k/(k+1)) c_k s^(2(k-1))
    series_g(s) = 1/2 - sum_{k>=1} c_k s^(2k) / (2(k+1))

Both converge on |s| < 1; the lab truncates at a configurable K and only
evaluates for s <= s_max < 1, where the tail is provably tiny.  The exact
identities tying them together (derivative identity, cubic identity,
splitting identity, product bound) are exposed as residuals so that the
truncation error can be measured rather than trusted.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class SeriesConfig:
    truncation: int = 100
    s_max: float = 0.9

    def __post_init__(self):
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")
        if not 0.0 < self.s_max < 1.0:
            raise ValueError("s_max must lie in (0, 1)")


DEFAULT_CONFIG = SeriesConfig()


@lru_cache(maxsize=32)
def _coeff_table(kmax: int) -> np.ndarray:
    """c_1..c_kmax via the ratio recurrence c_(k+1) = c_k (2k-1)/(2k+2)."""
    c = np.empty(kmax + 1)
    c[0] = np.nan  # c_0 is not part of the series
    if kmax >= 1:
        c[1] = 0.5
    for k in range(1, kmax):
        c[k + 1] = c[k] * (2 * k - 1) / (2 * k + 2)
    c.setflags(write=False)
    return c


def coeff(k: int) -> float:
    """Coefficient c_k of s^(2k) in 1 - sqrt(1 - s^2); c_1 = 1/2."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(_coeff_table(k)[k])


def _check_s(s, cfg: SeriesConfig) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0) or np.any(s > cfg.s_max):
        bad = s[(s < 0.0) | (s > cfg.s_max)]
        raise ValueError(
            f"series argument outside [0, {cfg.s_max}]: worst {bad.flat[0]!r}"
        )
    return s


def sqrt_series(s, cfg: SeriesConfig = DEFAULT_CONFIG):
    """Truncated series for sqrt(1-s^2): 1 - sum_{k<=K} c_k s^(2k).

    All coefficients are positive, so truncation approaches the true square
    root monotonically from above.
    """
    s = _check_s(s, cfg)
    c = _coeff_table(cfg.truncation)
    s2 = s * s
    acc = np.zeros_like(s)
    p = np.ones_like(s)
    for k in range(1, cfg.truncation + 1):
        p = p * s2
        acc = acc + c[k] * p
    return 1.0 - acc


def series_f(s, cfg: SeriesConfig = DEFAULT_CONFIG):
    """sum_{k<=K} (k/(k+1)) c_k s^(2(k-1)); value 1/4 at s = 0."""
    s = _check_s(s, cfg)
    c = _coeff_table(cfg.truncation)
    s2 = s * s
    acc = np.zeros_like(s)
    p = np.ones_like(s)
    for k in range(1, cfg.truncation + 1):
        acc = acc + (k / (k + 1)) * c[k] * p
        p = p * s2
    return acc


def series_g(s, cfg: SeriesConfig = DEFAULT_CONFIG):
    """1/2 - sum_{k<=K} c_k s^(2k) / (2(k+1)); value 1/2 at s = 0."""
    s = _check_s(s, cfg)
    c = _coeff_table(cfg.truncation)
    s2 = s * s
    acc = np.zeros_like(s)
    p = np.ones_like(s)
    for k in range(1, cfg.truncation + 1):
        p = p * s2
        acc = acc + c[k] * p / (2 * (k + 1))
    return 0.5 - acc


@dataclass(frozen=True)
class IdentityResiduals:
    """Truncation residuals of the exact series identities at given s.

    deriv:          |sum 2k c_k s^(2(k-1)) sqrt(1-s^2) - 1|
    cubic:          |3 g(s) s^2 - (1 - (1-s^2)^(3/2))|
    split:          |2 g(s) - sqrt(1-s^2) - f(s) s^2|
    product_margin: max(f(s) sqrt(1-s^2) - 1/4, 0)

    The comparisons use the exact square root, never the truncated one, so
    each residual isolates the truncation tail of a single series.
    """

    deriv: np.ndarray
    cubic: np.ndarray
    split: np.ndarray
    product_margin: np.ndarray


def identity_residuals(s, cfg: SeriesConfig = DEFAULT_CONFIG) -> IdentityResiduals:
    s = _check_s(s, cfg)
    c = _coeff_table(cfg.truncation)
    s2 = s * s
    root = np.sqrt(1.0 - s2)

    deriv_sum = np.zeros_like(s)
    p = np.ones_like(s)
    for k in range(1, cfg.truncation + 1):
        deriv_sum = deriv_sum + 2 * k * c[k] * p
        p = p * s2
    deriv = np.abs(deriv_sum * root - 1.0)

    g = series_g(s, cfg)
    cubic = np.abs(3.0 * g * s2 - (1.0 - root**3))

    f = series_f(s, cfg)
    split = np.abs(2.0 * g - root - f * s2)

    product_margin = np.maximum(f * root - 0.25, 0.0)
    return IdentityResiduals(deriv=deriv, cubic=cubic, split=split,
                             product_margin=product_margin)
