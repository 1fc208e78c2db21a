"""Balance kernels: the n x n tables that turn every CvM objective into a
quadratic form Q(beta) = n^-2 [h1' K h1 + h0' K h0].

Entry (i, j) is the integral of w(x_i; u) * conj(w(x_j; u)) over the
integrating measure of the family; the u-integral is done analytically
(exponential), by empirical-measure summation (indicator), or by the
closed-form measure of an intersection of two halfspaces on the unit sphere
(projection).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit, prange
from scipy.special import ndtr

from .exceptions import DataValidationError

FAMILIES = ("indicator", "projection", "exponential")


@dataclass(frozen=True)
class BalanceKernel:
    family: str
    K: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.K.shape[0]


def sphere_halfspace_measure(a: np.ndarray, b: np.ndarray) -> float:
    """Uniform-sphere probability of {gamma : gamma'a <= 0 and gamma'b <= 0}.

    For k >= 2 the measure depends only on the angle theta between a and b and
    equals (pi - theta) / (2 pi).  S_1 is the two-point set {-1, +1} with equal
    mass.  Zero vectors make a constraint vacuous.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DataValidationError("non-finite input to sphere_halfspace_measure")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.5
    if a.size == 1:
        sa, sb = float(a[0]), float(b[0])
        return 0.5 * (((sa <= 0.0) and (sb <= 0.0)) + ((sa >= 0.0) and (sb >= 0.0)))
    c = np.clip(float(a @ b) / (na * nb), -1.0, 1.0)
    return (np.pi - np.arccos(c)) / (2.0 * np.pi)


@njit(cache=True, parallel=True)
def _proj_accumulate(G, diag, K):
    """K[i,j] = sum_r A(x_i - x_r, x_j - x_r) from the Gram table, k >= 2."""
    n = G.shape[0]
    inv2pi = 1.0 / (2.0 * np.pi)
    for i in prange(n):
        for j in range(i, n):
            acc = 0.0
            gij = G[i, j]
            for r in range(n):
                grr = diag[r]
                d2i = diag[i] - 2.0 * G[i, r] + grr
                d2j = diag[j] - 2.0 * G[j, r] + grr
                if d2i <= 1e-24:
                    if d2j <= 1e-24:
                        acc += 1.0
                    else:
                        acc += 0.5
                elif d2j <= 1e-24:
                    acc += 0.5
                else:
                    c = (gij - G[i, r] - G[j, r] + grr) / np.sqrt(d2i * d2j)
                    if c > 1.0:
                        c = 1.0
                    elif c < -1.0:
                        c = -1.0
                    acc += (np.pi - np.arccos(c)) * inv2pi
            K[i, j] = acc
            K[j, i] = acc


@njit(cache=True, parallel=True)
def _proj_accumulate_1d(x, K):
    """k = 1 projection kernel: S_1 = {-1, +1} with equal mass."""
    n = x.shape[0]
    for i in prange(n):
        for j in range(i, n):
            acc = 0.0
            for r in range(n):
                a = x[i] - x[r]
                b = x[j] - x[r]
                if a == 0.0 and b == 0.0:
                    acc += 1.0
                elif a == 0.0 or b == 0.0:
                    acc += 0.5
                elif (a < 0.0) == (b < 0.0):
                    acc += 0.5
            K[i, j] = acc
            K[j, i] = acc


@njit(cache=True, parallel=True)
def _proj_table(G, diag, T):
    """T[r, i, j] = A(x_i - x_r, x_j - x_r); the per-support-point slices whose
    weighted average gives the projection kernel of any resampled dataset."""
    n = G.shape[0]
    inv2pi = 1.0 / (2.0 * np.pi)
    for r in prange(n):
        grr = diag[r]
        for i in range(n):
            d2i = diag[i] - 2.0 * G[i, r] + grr
            for j in range(i, n):
                d2j = diag[j] - 2.0 * G[j, r] + grr
                if d2i <= 1e-24:
                    a = 1.0 if d2j <= 1e-24 else 0.5
                elif d2j <= 1e-24:
                    a = 0.5
                else:
                    c = (G[i, j] - G[i, r] - G[j, r] + grr) / np.sqrt(d2i * d2j)
                    if c > 1.0:
                        c = 1.0
                    elif c < -1.0:
                        c = -1.0
                    a = (np.pi - np.arccos(c)) * inv2pi
                T[r, i, j] = a
                T[r, j, i] = a


def kernel_projection(x: np.ndarray) -> BalanceKernel:
    """Cramer-Wold family: indicators of one-dimensional projections, empirical
    measure over the projected sample points times the uniform sphere measure."""
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    n, k = x.shape
    K = np.empty((n, n))
    if k == 1:
        _proj_accumulate_1d(x[:, 0].copy(), K)
    else:
        G = x @ x.T
        _proj_accumulate(G, np.ascontiguousarray(np.diag(G)), K)
    K /= n
    return BalanceKernel(family="projection", K=K)


def projection_support_table(x: np.ndarray) -> np.ndarray:
    """Dense (n, n, n) halfspace-measure table T[r, i, j].

    kernel_projection(x).K == T.mean(axis=0); reweighting the r-axis by
    resample counts gives the projection kernel of a bootstrap resample over
    the original support.  Memory is 8 n^3 bytes - intended for n <= ~600.
    """
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    n, k = x.shape
    if k == 1:
        # reuse the generic path by embedding into 2-d with a zero column
        x = np.column_stack([x[:, 0], np.zeros(n)])
        # the 2-d angle formula agrees with sign enumeration except when one
        # difference is zero, which both paths send to 0.5/1.0 identically
    G = x @ x.T
    T = np.empty((n, n, n))
    _proj_table(G, np.ascontiguousarray(np.diag(G)), T)
    return T


def kernel_indicator(x: np.ndarray) -> BalanceKernel:
    """Joint-CDF family: K_ij = (1/n) #{r : x_i <= x_r and x_j <= x_r}, with
    the comparison coordinatewise and ties counting as satisfied."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    B = np.all(x[:, None, :] <= x[None, :, :], axis=2).astype(np.float64)
    K = (B @ B.T) / n
    return BalanceKernel(family="indicator", K=K)


def kernel_exponential(x: np.ndarray) -> BalanceKernel:
    """Characteristic-function family with standard-normal integrating measure:
    K_ij = exp(-||Phi(x_i~) - Phi(x_j~)||^2 / 2) on studentized covariates."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n, k = x.shape
    mu = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    bad = np.flatnonzero(sd <= 0.0)
    if bad.size:
        raise DataValidationError(
            f"zero-variance covariate column {int(bad[0])}: studentization degenerate"
        )
    phi = ndtr((x - mu) / sd)
    sq = np.sum(phi**2, axis=1)
    dist2 = sq[:, None] + sq[None, :] - 2.0 * (phi @ phi.T)
    np.maximum(dist2, 0.0, out=dist2)
    K = np.exp(-0.5 * dist2)
    np.fill_diagonal(K, 1.0)
    return BalanceKernel(family="exponential", K=K, meta={"mean": mu, "sd": sd})


_BUILDERS = {
    "indicator": kernel_indicator,
    "projection": kernel_projection,
    "exponential": kernel_exponential,
}


def build_kernel(x: np.ndarray, family: str) -> BalanceKernel:
    try:
        builder = _BUILDERS[family]
    except KeyError:
        raise ValueError(f"unknown kernel family {family!r}") from None
    return builder(x)


_MAGIC = b"IPSK"
_FAMILY_BYTE = {"indicator": 0, "projection": 1, "exponential": 2}
_BYTE_FAMILY = {v: k for k, v in _FAMILY_BYTE.items()}


def dump_kernel(kernel: BalanceKernel, path) -> None:
    """Binary dump: magic "IPSK", family byte, uint32 n, row-major float64."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BI", _FAMILY_BYTE[kernel.family], kernel.n))
        fh.write(np.ascontiguousarray(kernel.K, dtype="<f8").tobytes())


def load_kernel(path) -> BalanceKernel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise DataValidationError(f"{path}: not a kernel dump (bad magic)")
        fam_byte, n = struct.unpack("<BI", fh.read(5))
        K = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).copy()
    return BalanceKernel(family=_BYTE_FAMILY[fam_byte], K=K)
