"""Asymptotic and bootstrap inference for the weighted effect estimators.

Plug-in standard errors follow the usual two-step GMM sandwich: the propensity
step contributes an estimated influence table l (one row per observation), the
effect step a moment g and a derivative G of the effect in the design
coefficient, and the variance is the sample variance of psi = g + l G.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import Dataset, DesignSpec, design_matrix
from .effects import weighted_cdf, weighted_quantile
from .exceptions import (
    ConvergenceError,
    DataValidationError,
    SeparationError,
    SingularInformationError,
    UnstableVarianceError,
    WeakInstrumentError,
)
from .kernels import BalanceKernel
from .propensity import _sigmoid

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class PsInfluence:
    """Estimated per-observation influence of the propensity-step coefficient:
    beta_hat - beta_0 ~ mean of the rows of l."""

    l: np.ndarray                      # n x m influence table
    C: Optional[np.ndarray] = None     # curvature (Jacobian) used to build it
    method: str = "kernel"

    @property
    def omega(self) -> np.ndarray:
        """Asymptotic variance of sqrt(n) (beta_hat - beta_0)."""
        return (self.l.T @ self.l) / self.l.shape[0]


def _guarded_solve(C: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(C)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularInformationError(
            f"{what} is numerically singular (condition number {cond:.3g})"
        )
    return np.linalg.solve(C, rhs)


def ps_influence(state, kernel: BalanceKernel) -> PsInfluence:
    """Influence table for the distribution-balancing fit.

    C = (2/n^2)(hdot1' K hdot1 + hdot0' K hdot0); the per-observation score is
    s_i = (2/n)[h1_i (K hdot1)_i + h0_i (K hdot0)_i]; l_i = -C^-1 s_i.
    """
    K = kernel.K
    n = K.shape[0]
    C = 2.0 / n**2 * (state.hdot1.T @ K @ state.hdot1 + state.hdot0.T @ K @ state.hdot0)
    C = 0.5 * (C + C.T)
    kh1 = K @ state.hdot1
    kh0 = K @ state.hdot0
    s = 2.0 / n * (state.h1[:, None] * kh1 + state.h0[:, None] * kh0)
    l = -_guarded_solve(C, s.T, "balance curvature matrix").T
    return PsInfluence(l=l, C=C, method="kernel")


def mle_influence(ds: Dataset, beta: np.ndarray, spec: DesignSpec = DesignSpec(),
                  response: str = "d") -> PsInfluence:
    """l_i = I^-1 x_i (a_i - p_i) for the logistic MLE."""
    xm = design_matrix(ds, spec)
    a = ds.d if response == "d" else ds.z
    p = _sigmoid(xm @ beta)
    info = (xm * (p * (1.0 - p))[:, None]).T @ xm / ds.n
    resid = (a - p)[:, None] * xm
    l = _guarded_solve(info, resid.T, "Fisher information").T
    return PsInfluence(l=l, C=info, method="mle")


def cbps_influence(ds: Dataset, beta: np.ndarray, spec: DesignSpec = DesignSpec(),
                   response: str = "d", clamp_eps: float = 1e-6) -> PsInfluence:
    """l_i = -J^-1 m_i for the just-identified moment-balancing fit."""
    xm = design_matrix(ds, spec)
    a = ds.d if response == "d" else ds.z
    p = np.clip(_sigmoid(xm @ beta), clamp_eps, 1.0 - clamp_eps)
    m = (a / p - (1.0 - a) / (1.0 - p))[:, None] * xm
    w = a * (1.0 - p) / p + (1.0 - a) * p / (1.0 - p)
    J = -(xm * w[:, None]).T @ xm / ds.n
    l = -_guarded_solve(J, m.T, "moment Jacobian").T
    return PsInfluence(l=l, C=J, method="cbps")


def density_at(y: np.ndarray, w: np.ndarray, points) -> np.ndarray:
    """Weighted Gaussian kernel density with the Silverman rule-of-thumb
    bandwidth 0.9 min(sd, IQR/1.34) n^(-1/5), all moments weight-adjusted."""
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    pts = np.atleast_1d(np.asarray(points, dtype=np.float64))
    n = y.size
    mu = float((w * y).mean())
    var = float((w * (y - mu) ** 2).mean())
    sd = np.sqrt(max(var, 0.0))
    q75 = weighted_quantile(y, w, 0.75, monotone=True)
    q25 = weighted_quantile(y, w, 0.25, monotone=True)
    iqr = float(q75 - q25)
    scale = min(sd, iqr / 1.34) if iqr > 0 else sd
    if scale <= 0.0:
        raise DataValidationError("degenerate outcome distribution: zero spread")
    bw = 0.9 * scale * n ** (-0.2)
    zsq = ((pts[:, None] - y[None, :]) / bw) ** 2
    f = (w[None, :] * np.exp(-0.5 * zsq)).mean(axis=1) / (bw * np.sqrt(2.0 * np.pi))
    return f


def _arm_weights(state):
    if hasattr(state, "w1"):
        return state.w1, state.w0
    return state.wlte1, state.wlte0


def effect_variance(
    kind: str,
    ds: Dataset,
    state,
    psinf: Optional[PsInfluence],
    at=None,
) -> np.ndarray:
    """Plug-in standard error(s) of one effect functional.

    ``psinf=None`` drops the first-step correction (treats the design
    coefficient as known).  Returns (se, psi): a scalar se and an n-vector psi
    for "ate"/"late", or a grid-length se array and a (grid, n) psi table.
    """
    y = ds.y
    if y is None:
        raise DataValidationError("variance estimation requires an outcome column")
    n = ds.n
    w1, w0 = _arm_weights(state)
    monotone = hasattr(state, "wlte1")

    def psi_from(g: np.ndarray, G: np.ndarray) -> np.ndarray:
        return g if psinf is None else g + psinf.l @ G

    def se_of(psi: np.ndarray) -> float:
        return float(np.sqrt(np.mean(psi**2) / n))

    if kind in ("ate", "late"):
        mu1 = float((w1 * y).mean())
        mu0 = float((w0 * y).mean())
        g = w1 * (y - mu1) - w0 * (y - mu0)
        G = ((state.hdot1 - state.hdot0) * y[:, None]).mean(axis=0)
        psi = psi_from(g, G)
        return np.float64(se_of(psi)), psi

    if kind in ("dte", "ldte"):
        grid = np.atleast_1d(np.asarray(at, dtype=np.float64))
        F1 = weighted_cdf(y, w1, monotone=monotone)
        F0 = weighted_cdf(y, w0, monotone=monotone)
        out = np.empty(grid.size)
        psis = np.empty((grid.size, n))
        for j, t in enumerate(grid):
            ind = (y <= t).astype(np.float64)
            g = w1 * (ind - F1.evaluate(t)) - w0 * (ind - F0.evaluate(t))
            G = ((state.hdot1 - state.hdot0) * ind[:, None]).mean(axis=0)
            psis[j] = psi_from(g, G)
            out[j] = se_of(psis[j])
        return out, psis

    if kind in ("qte", "lqte"):
        taus = np.clip(np.atleast_1d(np.asarray(at, dtype=np.float64)), 0.01, 0.99)
        q1 = weighted_quantile(y, w1, taus, monotone=monotone)
        q0 = weighted_quantile(y, w0, taus, monotone=monotone)
        f1 = density_at(y, w1, q1)
        f0 = density_at(y, w0, q0)
        low = np.minimum(f1, f0).min()
        if low < 1e-10:
            raise UnstableVarianceError(
                f"outcome density at an estimated quantile is {low:.3g}; "
                "the quantile variance is unstable"
            )
        out = np.empty(taus.size)
        psis = np.empty((taus.size, n))
        for j, tau in enumerate(taus):
            i1 = (y <= q1[j]).astype(np.float64)
            i0 = (y <= q0[j]).astype(np.float64)
            g = -w1 * (i1 - tau) / f1[j] + w0 * (i0 - tau) / f0[j]
            G = (
                -(state.hdot1 * i1[:, None]).mean(axis=0) / f1[j]
                + (state.hdot0 * i0[:, None]).mean(axis=0) / f0[j]
            )
            psis[j] = psi_from(g, G)
            out[j] = se_of(psis[j])
        return out, psis

    raise ValueError(f"unknown effect kind {kind!r}")


@dataclass
class BootstrapResult:
    se: np.ndarray
    reps_used: int
    reps_failed: int
    estimates: np.ndarray = field(repr=False, default=None)


_RECOVERABLE = (ConvergenceError, SeparationError, WeakInstrumentError)


def bootstrap_se(
    ds: Dataset,
    estimate_fn: Callable[[Dataset, np.ndarray], np.ndarray],
    B: int = 200,
    seed: int = 0,
    max_fail_frac: float = 0.05,
) -> BootstrapResult:
    """Nonparametric bootstrap standard errors.

    ``estimate_fn(resampled_ds, idx)`` returns a flat vector of effect values;
    ``idx`` is the resample's row-index vector into the original sample, so
    implementations may reuse precomputed per-row structures.  Replications
    that raise a recoverable fitting error are dropped and counted; more than
    ``max_fail_frac`` drops is an error.  Streams are seeded per replication,
    so results do not depend on execution order.
    """
    if B < 2:
        raise DataValidationError(f"bootstrap needs at least 2 replications, got {B}")
    n = ds.n
    rows = []
    failed = 0
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence((seed, b)))
        idx = rng.integers(0, n, size=n)
        try:
            ds_b = Dataset(
                d=ds.d[idx], x=ds.x[idx],
                y=None if ds.y is None else ds.y[idx],
                z=None if ds.z is None else ds.z[idx],
                names=ds.names,
            )
            rows.append(np.atleast_1d(np.asarray(estimate_fn(ds_b, idx), dtype=np.float64)))
        except _RECOVERABLE + (DataValidationError,):
            failed += 1
    if failed > max(1, int(np.ceil(max_fail_frac * B))):
        raise ConvergenceError(
            f"bootstrap discarded {failed}/{B} replications - refit too unstable"
        )
    est = np.vstack(rows)
    return BootstrapResult(
        se=est.std(axis=0, ddof=1),
        reps_used=est.shape[0],
        reps_failed=failed,
        estimates=est,
    )
