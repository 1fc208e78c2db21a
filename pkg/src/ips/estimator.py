"""Minimum-distance propensity fitting.

The design coefficient is chosen to balance the whole covariate distribution:
the objective is the kernel quadratic form

    Q(beta) = n^-2 [ h1(beta)' K h1(beta) + h0(beta)' K h0(beta) ]

with h_d the centred stabilized weights (exogenous mode) or the centred
complier weights (instrumented mode), and K a family-specific balance kernel.
Gradients are exact, so the driver is a multistart quasi-Newton method started
at the logistic MLE.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .balance import (
    KAPPA_FLOOR,
    balance_state,
    complier_mass,
    lte_balance_state,
)
from .data import Dataset, DesignSpec
from .exceptions import ConvergenceError, SeparationError, WeakInstrumentError
from .kernels import BalanceKernel, build_kernel
from .optim import FitResult, OptimOptions, multistart_minimize
from .propensity import LogisticModel, fit_mle, model_from_fit

_PENALTY_BASE = 1e6
_PENALTY_SLOPE = 1e6


def objective(state, kernel: BalanceKernel) -> float:
    """Q(beta) evaluated at a (balance or LTE-balance) state."""
    K = kernel.K
    n = K.shape[0]
    return float(state.h1 @ K @ state.h1 + state.h0 @ K @ state.h0) / n**2


def objective_gradient(state, kernel: BalanceKernel) -> np.ndarray:
    """dQ/dbeta = (2/n^2) [hdot1' K h1 + hdot0' K h0]."""
    K = kernel.K
    n = K.shape[0]
    return 2.0 / n**2 * (state.hdot1.T @ (K @ state.h1) + state.hdot0.T @ (K @ state.h0))


def _balance_x(ds: Dataset, spec: DesignSpec) -> np.ndarray:
    return ds.x[:, spec.columns(ds.k)]


def fit_ips(
    ds: Dataset,
    spec: DesignSpec = DesignSpec(),
    family: str = "projection",
    opts: OptimOptions = OptimOptions(),
    kernel: Optional[BalanceKernel] = None,
    clamp_eps: float = 1e-6,
) -> FitResult:
    """Distribution-balancing propensity fit for the exogenous design."""
    if kernel is None:
        kernel = build_kernel(_balance_x(ds, spec), family)
    elif kernel.n != ds.n:
        raise ValueError(f"kernel size {kernel.n} does not match sample size {ds.n}")

    def fun_grad(beta):
        model = LogisticModel(beta=beta, clamp_eps=clamp_eps)
        state = balance_state(ds, model, spec)
        return objective(state, kernel), objective_gradient(state, kernel)

    init = _mle_start(ds, spec, response="d")
    fit = multistart_minimize(fun_grad, init, opts)
    fit.family = kernel.family
    fit.mode = "exogenous"
    fit.extra = {"init": init, "clamp_eps": clamp_eps}
    return fit


def fit_lips(
    ds: Dataset,
    spec: DesignSpec = DesignSpec(),
    family: str = "projection",
    opts: OptimOptions = OptimOptions(),
    kernel: Optional[BalanceKernel] = None,
    clamp_eps: float = 1e-6,
) -> FitResult:
    """Distribution-balancing instrument-propensity fit (complier weights).

    Regions of the parameter space where the estimated complier mass kappa_n
    collapses make the weights explode; the objective is replaced there by a
    smooth penalty whose gradient pushes kappa_n back up.
    """
    if kernel is None:
        kernel = build_kernel(_balance_x(ds, spec), family)
    elif kernel.n != ds.n:
        raise ValueError(f"kernel size {kernel.n} does not match sample size {ds.n}")

    def fun_grad(beta):
        model = LogisticModel(beta=beta, clamp_eps=clamp_eps)
        try:
            state = lte_balance_state(ds, model, spec)
        except WeakInstrumentError:
            kappa, dkappa = complier_mass(ds, model, spec)
            f = _PENALTY_BASE + _PENALTY_SLOPE * (KAPPA_FLOOR - kappa)
            return f, -_PENALTY_SLOPE * dkappa
        return objective(state, kernel), objective_gradient(state, kernel)

    init = _mle_start(ds, spec, response="z")
    fit = multistart_minimize(fun_grad, init, opts)
    if fit.objective >= _PENALTY_BASE:
        raise WeakInstrumentError(
            "complier mass non-positive at every candidate minimum; "
            "the instrument appears too weak for complier balancing"
        )
    fit.family = kernel.family
    fit.mode = "lte"
    model = LogisticModel(beta=fit.beta, clamp_eps=clamp_eps)
    fit.extra = {
        "init": init,
        "clamp_eps": clamp_eps,
        "kappa": lte_balance_state(ds, model, spec).kappa,
    }
    return fit


def _mle_start(ds: Dataset, spec: DesignSpec, response: str) -> np.ndarray:
    try:
        return fit_mle(ds, spec, response=response).beta.copy()
    except (SeparationError, ConvergenceError) as err:
        best = getattr(err, "best", None)
        if best is not None and np.all(np.isfinite(best.beta)):
            return np.clip(best.beta, -10.0, 10.0)
        m = len(spec.columns(ds.k)) + int(spec.include_intercept)
        return np.zeros(m)


def fit_cbps_just(
    ds: Dataset,
    spec: DesignSpec = DesignSpec(),
    mode: str = "exogenous",
    clamp_eps: float = 1e-6,
    max_iter: int = 200,
    grad_tol: float = 1e-9,
) -> FitResult:
    """Just-identified covariate balancing fit: solve the first-moment system

        E_n[(A/p(X) - (1-A)/(1-p(X))) x] = 0

    by damped Newton, where A is the treatment (exogenous mode) or the
    instrument (lte mode).  Balances means exactly, unlike the MLE.
    """
    from .data import design_matrix

    if mode == "exogenous":
        a = ds.d
    elif mode == "lte":
        if ds.z is None:
            raise WeakInstrumentError("lte mode requires an instrument column")
        a = ds.z
    else:
        raise ValueError(f"unknown mode {mode!r}")
    xm = design_matrix(ds, spec)
    n, m = xm.shape

    from .propensity import _sigmoid

    def moments(beta):
        p = np.clip(_sigmoid(xm @ beta), clamp_eps, 1.0 - clamp_eps)
        e = a / p - (1.0 - a) / (1.0 - p)
        mvec = xm.T @ e / n
        w = a * (1.0 - p) / p + (1.0 - a) * p / (1.0 - p)
        jac = -(xm * w[:, None]).T @ xm / n
        return mvec, jac

    beta = _mle_start(ds, spec, response="d" if mode == "exogenous" else "z")
    mvec, jac = moments(beta)
    norm = float(np.max(np.abs(mvec)))
    it = 0
    for it in range(1, max_iter + 1):
        if norm < grad_tol:
            break
        try:
            step = np.linalg.solve(jac, -mvec)
        except np.linalg.LinAlgError:
            step = mvec
        lam = 1.0
        for _ in range(40):
            cand = beta + lam * step
            mc, jc = moments(cand)
            nc = float(np.max(np.abs(mc)))
            if nc < norm:
                break
            lam *= 0.5
        else:
            break
        beta, mvec, jac, norm = cand, mc, jc, nc
        if np.max(np.abs(beta)) > 1e4:
            raise SeparationError(
                "moment-balancing iterates diverged (coefficient max-norm > 1e4)"
            )
    if norm >= grad_tol:
        raise ConvergenceError(
            f"moment balancing did not converge in {it} iterations "
            f"(moment max-norm {norm:.2e})",
            best=FitResult(beta=beta, objective=norm, converged=False, iterations=it),
        )
    return FitResult(
        beta=beta,
        objective=float(mvec @ mvec),
        grad_norm=norm,
        converged=True,
        iterations=it,
        family=None,
        mode=f"cbps-{mode}",
        extra={"clamp_eps": clamp_eps},
    )


def balance_report(ds: Dataset, model: LogisticModel, spec: DesignSpec = DesignSpec()) -> dict:
    """Weighted vs unweighted covariate means - a quick diagnostic table."""
    state = balance_state(ds, model, spec)
    cols = spec.columns(ds.k)
    xb = ds.x[:, cols]
    return {
        "covariates": [ds.names[c] for c in cols],
        "mean_unweighted": (xb.mean(axis=0)).tolist(),
        "mean_treated_weighted": ((state.w1[:, None] * xb).mean(axis=0)).tolist(),
        "mean_control_weighted": ((state.w0[:, None] * xb).mean(axis=0)).tolist(),
    }
