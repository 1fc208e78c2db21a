"""Shared fit-result container and the multistart quasi-Newton driver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .exceptions import ConvergenceError


@dataclass(frozen=True)
class OptimOptions:
    starts: int = 5
    max_iter: int = 500
    tol: float = 1e-10          # relative objective-change tolerance
    grad_tol: float = 1e-8      # max-norm gradient tolerance
    seed: int = 0
    box: float = 50.0           # soft parameter box |beta_j| <= box
    start_sd: float = 0.5       # per-coordinate sd of start perturbations


@dataclass
class FitResult:
    beta: np.ndarray
    objective: float
    grad_norm: float = np.nan
    starts: int = 1
    best_start: int = 0
    converged: bool = True
    iterations: int = 0
    family: Optional[str] = None
    mode: str = "exogenous"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "objective": float(self.objective),
            "grad_norm": float(self.grad_norm),
            "starts": self.starts,
            "best_start": self.best_start,
            "converged": self.converged,
            "iterations": self.iterations,
            "family": self.family,
            "mode": self.mode,
        }


def _single_start(fun_grad, beta0, opts: OptimOptions):
    """One local minimization: L-BFGS-B with analytic gradient inside the box,
    Nelder-Mead fallback when the line search fails."""

    def fg(beta):
        f, g = fun_grad(beta)
        return f, np.asarray(g)

    bounds = [(-opts.box, opts.box)] * beta0.size
    res = minimize(
        fg,
        beta0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={
            "maxiter": opts.max_iter,
            "ftol": opts.tol,
            "gtol": opts.grad_tol,
            "maxls": 60,
        },
    )
    beta, fval, nit = res.x, float(res.fun), int(res.nit)
    ok = bool(res.success)
    if not ok and "ABNORMAL" in str(res.message).upper():
        # line-search failure: restart with a derivative-free simplex
        nm = minimize(
            lambda b: fun_grad(b)[0],
            beta,
            method="Nelder-Mead",
            options={"maxiter": 200 * beta0.size, "xatol": 1e-9, "fatol": 1e-12},
        )
        if nm.fun < fval:
            beta, fval = nm.x, float(nm.fun)
        nit += int(nm.nit)
        ok = bool(nm.success)
    f0, _ = fun_grad(beta0)
    if fval > f0:
        beta, fval = beta0.copy(), float(f0)
    gnorm = float(np.max(np.abs(fun_grad(beta)[1])))
    return beta, fval, gnorm, nit, ok or gnorm < 1e-6


def multistart_minimize(
    fun_grad: Callable[[np.ndarray], tuple],
    init: np.ndarray,
    opts: OptimOptions,
) -> FitResult:
    """Minimize from ``init`` plus seeded Gaussian perturbations of it.

    The winner has the lowest objective; exact ties go to the lexicographically
    smallest parameter vector.  Deterministic given (init, opts).
    """
    rng = np.random.default_rng(np.random.SeedSequence((opts.seed, 0x5741)))
    starts = [init.copy()]
    for _ in range(1, max(1, opts.starts)):
        starts.append(init + opts.start_sd * rng.standard_normal(init.size))

    best = None
    total_it = 0
    any_ok = False
    for s_idx, b0 in enumerate(starts):
        beta, fval, gnorm, nit, ok = _single_start(fun_grad, np.clip(b0, -opts.box, opts.box), opts)
        total_it += nit
        any_ok = any_ok or ok
        cand = (fval, tuple(beta), s_idx, beta, gnorm, ok)
        if best is None or cand[:2] < best[:2]:
            best = cand
    fval, _, s_idx, beta, gnorm, ok = best
    if not any_ok:
        raise ConvergenceError(
            "all multistarts failed line search and simplex fallback",
            best=FitResult(beta=beta, objective=fval, grad_norm=gnorm,
                           starts=len(starts), best_start=s_idx,
                           converged=False, iterations=total_it),
        )
    return FitResult(
        beta=beta,
        objective=fval,
        grad_norm=gnorm,
        starts=len(starts),
        best_start=s_idx,
        converged=ok,
        iterations=total_it,
    )
