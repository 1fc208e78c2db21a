"""Weighted treatment-effect functionals: means, distribution functions and
quantiles of the two reweighted outcome arms.

All estimators consume a fitted balance state (exogenous or instrumented).
Instrumented complier weights can be negative, so the complier outcome "CDFs"
need not be monotone; they are repaired by monotone rearrangement (sorting the
CDF values), which is exactly the identity whenever the raw curve is already a
proper CDF.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .data import Dataset
from .exceptions import DataValidationError

TAU_CLAMP = (0.01, 0.99)


class WeightedCdf(NamedTuple):
    """A right-continuous step function F(t) = E_n[w 1{y <= t}] on the sample
    support, optionally rearranged to be monotone and clipped to [0, 1]."""

    support: np.ndarray  # sorted outcome values
    values: np.ndarray   # F evaluated at each support point

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.support, t, side="right")
        out = np.where(idx > 0, self.values[np.maximum(idx - 1, 0)], 0.0)
        return out if out.ndim else float(out)

    def quantile(self, tau) -> np.ndarray:
        """Generalized inverse: smallest support point with F >= tau."""
        tau = np.asarray(tau, dtype=np.float64)
        if np.any((tau <= 0.0) | (tau >= 1.0)):
            raise DataValidationError("quantile levels must lie strictly in (0, 1)")
        idx = np.searchsorted(self.values, tau, side="left")
        idx = np.minimum(idx, self.support.size - 1)
        out = self.support[idx]
        return out if out.ndim else float(out)


def rearrange(values: np.ndarray) -> np.ndarray:
    """Monotone rearrangement of a would-be CDF: sort, then clip to [0, 1].

    Idempotent, and the identity for any already-monotone curve in [0, 1].
    """
    return np.clip(np.sort(np.asarray(values, dtype=np.float64)), 0.0, 1.0)


def weighted_cdf(y: np.ndarray, w: np.ndarray, monotone: bool = False) -> WeightedCdf:
    """One-pass weighted empirical CDF: sort y once, cumulate weights / n."""
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    order = np.argsort(y, kind="stable")
    ys = y[order]
    cum = np.cumsum(w[order]) / y.size
    # merge tied support points: F jumps once per distinct value
    keep = np.empty(ys.size, dtype=bool)
    keep[:-1] = ys[:-1] != ys[1:]
    keep[-1] = True
    support, values = ys[keep], cum[keep]
    if monotone:
        values = rearrange(values)
    return WeightedCdf(support=support, values=values)


def weighted_quantile(y: np.ndarray, w: np.ndarray, tau, monotone: bool = False):
    return weighted_cdf(y, w, monotone=monotone).quantile(tau)


@dataclass(frozen=True)
class EffectEstimate:
    """A point estimate of one effect functional, with per-arm ingredients
    retained for downstream variance computation."""

    kind: str                       # "ate" | "dte" | "qte" | "late" | "ldte" | "lqte"
    point: np.ndarray               # effect value(s); scalar kinds use shape ()
    at: Optional[np.ndarray] = None  # outcome grid (dte) or quantile levels (qte)
    arm1: Optional[np.ndarray] = None  # treated-arm summary at the same points
    arm0: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)


def _require_outcome(ds: Dataset) -> np.ndarray:
    if ds.y is None:
        raise DataValidationError("effect estimation requires an outcome column")
    return ds.y


def _mean_effect(ds: Dataset, w1: np.ndarray, w0: np.ndarray, kind: str) -> EffectEstimate:
    y = _require_outcome(ds)
    mu1 = float((w1 * y).mean())
    mu0 = float((w0 * y).mean())
    return EffectEstimate(
        kind=kind, point=np.float64(mu1 - mu0),
        arm1=np.float64(mu1), arm0=np.float64(mu0),
    )


def _dist_effect(ds, w1, w0, ygrid, kind, monotone) -> EffectEstimate:
    y = _require_outcome(ds)
    grid = np.atleast_1d(np.asarray(ygrid, dtype=np.float64))
    F1 = weighted_cdf(y, w1, monotone=monotone).evaluate(grid)
    F0 = weighted_cdf(y, w0, monotone=monotone).evaluate(grid)
    return EffectEstimate(kind=kind, point=F1 - F0, at=grid, arm1=F1, arm0=F0)


def _quantile_effect(ds, w1, w0, taus, kind, monotone) -> EffectEstimate:
    y = _require_outcome(ds)
    taus = np.atleast_1d(np.asarray(taus, dtype=np.float64))
    if np.any((taus <= 0.0) | (taus >= 1.0)):
        raise DataValidationError("quantile levels must lie strictly in (0, 1)")
    taus_c = np.clip(taus, *TAU_CLAMP)
    q1 = weighted_cdf(y, w1, monotone=monotone).quantile(taus_c)
    q0 = weighted_cdf(y, w0, monotone=monotone).quantile(taus_c)
    return EffectEstimate(
        kind=kind, point=q1 - q0, at=taus, arm1=q1, arm0=q0,
        extra={"tau_clamped": taus_c},
    )


def ate(ds: Dataset, state) -> EffectEstimate:
    """Average treatment effect: E_n[w1 Y] - E_n[w0 Y]."""
    return _mean_effect(ds, state.w1, state.w0, "ate")


def dte(ds: Dataset, state, ygrid) -> EffectEstimate:
    """Distributional treatment effect F1(y) - F0(y) on an outcome grid."""
    return _dist_effect(ds, state.w1, state.w0, ygrid, "dte", monotone=False)


def qte(ds: Dataset, state, taus) -> EffectEstimate:
    """Quantile treatment effect at levels tau (clamped to [0.01, 0.99])."""
    return _quantile_effect(ds, state.w1, state.w0, taus, "qte", monotone=False)


def late(ds: Dataset, state) -> EffectEstimate:
    """Local (complier) average treatment effect from instrumented weights."""
    return _mean_effect(ds, state.wlte1, state.wlte0, "late")


def ldte(ds: Dataset, state, ygrid) -> EffectEstimate:
    """Local distributional effect; complier CDFs are rearranged to be monotone."""
    return _dist_effect(ds, state.wlte1, state.wlte0, ygrid, "ldte", monotone=True)


def lqte(ds: Dataset, state, taus) -> EffectEstimate:
    """Local quantile effect from the rearranged complier outcome CDFs."""
    return _quantile_effect(ds, state.wlte1, state.wlte0, taus, "lqte", monotone=True)
