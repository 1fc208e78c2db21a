"""Logistic propensity model: prediction, score, and maximum likelihood fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, DesignSpec, design_matrix
from .exceptions import DataValidationError, ConvergenceError, SeparationError
from .optim import FitResult

_SEPARATION_NORM = 1e4


@dataclass(frozen=True)
class LogisticModel:
    """Logistic link on a linear index; predictions clamped away from {0, 1}."""

    beta: np.ndarray
    clamp_eps: float = 1e-6

    def __post_init__(self):
        beta = np.ascontiguousarray(self.beta, dtype=np.float64)
        if not np.all(np.isfinite(beta)):
            raise DataValidationError("model coefficients must be finite")
        if not 0.0 < self.clamp_eps <= 0.01:
            raise DataValidationError("clamp_eps must lie in (0, 0.01]")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def m(self) -> int:
        return self.beta.shape[0]


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    # overflow-safe branches on the sign of the index
    out = np.empty_like(eta, dtype=np.float64)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def predict(model: LogisticModel, xrow: np.ndarray, clamp: bool = True) -> np.ndarray:
    """P(response = 1 | x) for one row or a stack of rows."""
    x = np.asarray(xrow, dtype=np.float64)
    if x.shape[-1] != model.m:
        raise DataValidationError(
            f"dimension mismatch: model has {model.m} coefficients, x has {x.shape[-1]}"
        )
    p = _sigmoid(x @ model.beta)
    if clamp:
        p = np.clip(p, model.clamp_eps, 1.0 - model.clamp_eps)
    return p


def score(model: LogisticModel, xrow: np.ndarray) -> np.ndarray:
    """dP/dbeta = p(1-p) x, with the unclamped probability."""
    x = np.asarray(xrow, dtype=np.float64)
    p = predict(model, x, clamp=False)
    return (p * (1.0 - p))[..., None] * x


def fit_mle(
    ds: Dataset,
    spec: DesignSpec = DesignSpec(),
    response: str = "d",
    clamp_eps: float = 1e-6,
    max_iter: int = 100,
    grad_tol: float = 1e-8,
) -> FitResult:
    """Newton-Raphson logistic MLE with step-halving.

    ``response`` selects the modelled indicator: "d" (treatment) or "z"
    (instrument).  Raises SeparationError when the iterates diverge while the
    likelihood keeps improving.
    """
    if response == "d":
        resp = ds.d
    elif response == "z":
        if ds.z is None:
            raise DataValidationError("dataset has no instrument column")
        resp = ds.z
    else:
        raise ValueError(f"unknown response {response!r}")
    xm = design_matrix(ds, spec)
    n, m = xm.shape

    def loglik(beta):
        eta = xm @ beta
        # log(1 + exp(eta)) evaluated stably
        return float(np.sum(resp * eta - np.logaddexp(0.0, eta))) / n

    beta = np.zeros(m)
    ll = loglik(beta)
    it = 0
    for it in range(1, max_iter + 1):
        p = _sigmoid(xm @ beta)
        grad = xm.T @ (resp - p) / n
        if np.max(np.abs(grad)) < grad_tol:
            break
        w = p * (1.0 - p)
        hess = (xm * w[:, None]).T @ xm / n
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad
        new_ll = -np.inf
        for _ in range(30):
            cand = beta + step
            new_ll = loglik(cand)
            if new_ll >= ll - 1e-14:
                break
            step = 0.5 * step
        beta, ll = beta + step, new_ll
        if np.max(np.abs(beta)) > _SEPARATION_NORM:
            raise SeparationError(
                "perfect separation suspected: coefficient max-norm exceeded "
                f"{_SEPARATION_NORM:g} with still-improving likelihood"
            )
    p = _sigmoid(xm @ beta)
    gnorm = float(np.max(np.abs(xm.T @ (resp - p) / n)))
    if np.max(np.abs(beta)) > 100.0 and np.max(np.abs(resp - p)) < 1e-4:
        # the gradient vanished only because the fitted probabilities saturated
        raise SeparationError(
            "perfect separation: fitted probabilities reached 0/1 on every "
            "observation with a diverging coefficient vector"
        )
    if gnorm >= grad_tol:
        raise ConvergenceError(
            f"logistic MLE did not converge in {max_iter} iterations "
            f"(gradient max-norm {gnorm:.2e})",
            best=FitResult(beta=beta, objective=-ll, converged=False, iterations=it),
        )
    return FitResult(
        beta=beta,
        objective=-ll,
        grad_norm=gnorm,
        converged=True,
        iterations=it,
        family=None,
        mode="mle",
        extra={"loglik": ll, "clamp_eps": clamp_eps, "response": response},
    )


def model_from_fit(fit: FitResult, clamp_eps: float = 1e-6) -> LogisticModel:
    return LogisticModel(beta=fit.beta, clamp_eps=clamp_eps)
