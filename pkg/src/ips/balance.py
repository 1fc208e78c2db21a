"""Stabilized balancing weights, moment functions h, and their analytic scores.

Everything here is an exact finite-sample derivative: the hdot tables are the
derivatives of the h vectors in beta with sample means replacing population
expectations, so finite differences must reproduce them to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, DesignSpec, design_matrix
from .exceptions import DataValidationError, IpsError, WeakInstrumentError
from .propensity import LogisticModel, _sigmoid

KAPPA_FLOOR = 1e-3


@dataclass(frozen=True)
class BalanceState:
    """Weights and moments for the exogenous (treatment) design at one beta."""

    p: np.ndarray
    w1: np.ndarray
    w0: np.ndarray
    h1: np.ndarray
    h0: np.ndarray
    hdot1: np.ndarray
    hdot0: np.ndarray
    n_clamped: int


@dataclass(frozen=True)
class LteBalanceState:
    """Weights and moments for the instrumented (complier) design at one beta."""

    q: np.ndarray
    kappa1: float
    kappa0: float
    kappa: float
    wlte1: np.ndarray
    wlte0: np.ndarray
    wlte: np.ndarray
    h1: np.ndarray
    h0: np.ndarray
    hdot1: np.ndarray
    hdot0: np.ndarray
    n_clamped: int


def balance_state(ds: Dataset, model: LogisticModel, spec: DesignSpec = DesignSpec()) -> BalanceState:
    xm = design_matrix(ds, spec)
    d = ds.d
    p_raw = _sigmoid(xm @ model.beta)
    p = np.clip(p_raw, model.clamp_eps, 1.0 - model.clamp_eps)
    n_clamped = int(np.sum(p != p_raw))
    pdot = (p_raw * (1.0 - p_raw))[:, None] * xm

    a1 = d / p
    a0 = (1.0 - d) / (1.0 - p)
    m1 = a1.mean()
    m0 = a0.mean()
    if m1 <= 0.0 or m0 <= 0.0:
        raise IpsError("internal invariant violation: zero mean inverse weight")
    w1 = a1 / m1
    w0 = a0 / m0

    # derivative of w1 = (D/p)/mean(D/p): quotient rule through both p-terms
    c1 = (w1 / p)[:, None] * pdot
    c0 = (w0 / (1.0 - p))[:, None] * pdot
    hdot1 = -c1 + w1[:, None] * c1.mean(axis=0)
    hdot0 = c0 - w0[:, None] * c0.mean(axis=0)

    return BalanceState(
        p=p, w1=w1, w0=w0, h1=w1 - 1.0, h0=w0 - 1.0,
        hdot1=hdot1, hdot0=hdot0, n_clamped=n_clamped,
    )


def _lte_ingredients(ds: Dataset, model: LogisticModel, spec: DesignSpec):
    if ds.z is None:
        raise DataValidationError("LTE balance requires an instrument column")
    xm = design_matrix(ds, spec)
    q_raw = _sigmoid(xm @ model.beta)
    q = np.clip(q_raw, model.clamp_eps, 1.0 - model.clamp_eps)
    n_clamped = int(np.sum(q != q_raw))
    qdot = (q_raw * (1.0 - q_raw))[:, None] * xm
    d, z = ds.d, ds.z
    t = z / q - (1.0 - z) / (1.0 - q)
    g = 1.0 - (1.0 - d) * z / q - d * (1.0 - z) / (1.0 - q)
    kappa1 = float((d * t).mean())
    kappa0 = float(((1.0 - d) * t).mean())
    kappa = float(g.mean())
    return xm, q, qdot, t, g, kappa1, kappa0, kappa, n_clamped


def complier_mass(ds: Dataset, model: LogisticModel, spec: DesignSpec = DesignSpec()):
    """(kappa_n, d kappa_n / d beta) - used by the fitter to steer away from
    regions where the estimated complier mass collapses."""
    xm, q, qdot, t, g, kappa1, kappa0, kappa, _ = _lte_ingredients(ds, model, spec)
    d, z = ds.d, ds.z
    r = d * (1.0 - z) / (1.0 - q) ** 2 - (1.0 - d) * z / q**2
    dkappa = -(r[:, None] * qdot).mean(axis=0)
    return kappa, dkappa


def lte_balance_state(
    ds: Dataset, model: LogisticModel, spec: DesignSpec = DesignSpec()
) -> LteBalanceState:
    xm, q, qdot, t, g, kappa1, kappa0, kappa, n_clamped = _lte_ingredients(ds, model, spec)
    d, z = ds.d, ds.z
    if kappa <= KAPPA_FLOOR or (kappa1 <= 0.0 and kappa0 <= 0.0):
        raise WeakInstrumentError(
            f"non-positive complier mass (kappa_n={kappa:.4g}, "
            f"kappa_n1={kappa1:.4g}, kappa_n0={kappa0:.4g})"
        )
    wlte1 = d * t / kappa1
    wlte0 = (1.0 - d) * t / kappa0
    wlte = g / kappa

    s = z / q**2 + (1.0 - z) / (1.0 - q) ** 2
    r = d * (1.0 - z) / (1.0 - q) ** 2 - (1.0 - d) * z / q**2
    sq1 = (d * s)[:, None] * qdot
    sq0 = ((1.0 - d) * s)[:, None] * qdot
    rq = r[:, None] * qdot
    dw1 = (-sq1 + wlte1[:, None] * sq1.mean(axis=0)) / kappa1
    dw0 = (-sq0 + wlte0[:, None] * sq0.mean(axis=0)) / kappa0
    dw = (-rq + wlte[:, None] * rq.mean(axis=0)) / kappa

    return LteBalanceState(
        q=q, kappa1=kappa1, kappa0=kappa0, kappa=kappa,
        wlte1=wlte1, wlte0=wlte0, wlte=wlte,
        h1=wlte1 - wlte, h0=wlte0 - wlte,
        hdot1=dw1 - dw, hdot0=dw0 - dw,
        n_clamped=n_clamped,
    )
