"""Dataset container, CSV ingestion and design-matrix construction."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import DataValidationError, ParseError, SchemaError


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable (y, d, z, x) sample.

    y may be None for design-stage-only fitting; z is None in the exogenous
    setup.  d and z must be exactly 0/1 with both arms non-empty.
    """

    d: np.ndarray
    x: np.ndarray
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    names: Sequence[str] = field(default=())

    def __post_init__(self):
        d = _as_readonly(np.asarray(self.d))
        x = _as_readonly(np.atleast_2d(np.asarray(self.x)))
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "x", x)
        if self.y is not None:
            object.__setattr__(self, "y", _as_readonly(np.asarray(self.y)))
        if self.z is not None:
            object.__setattr__(self, "z", _as_readonly(np.asarray(self.z)))
        if not self.names:
            object.__setattr__(
                self, "names", tuple(f"x{j + 1}" for j in range(x.shape[1]))
            )
        else:
            object.__setattr__(self, "names", tuple(self.names))
        self._validate()

    def _validate(self):
        n = self.d.shape[0]
        if self.x.ndim != 2 or self.x.shape[0] != n:
            raise DataValidationError(
                f"x must be a 2-d table with {n} rows, got shape {self.x.shape}"
            )
        if n < 2:
            raise DataValidationError(f"need at least 2 observations, got {n}")
        if self.x.shape[1] < 1:
            raise DataValidationError("need at least one covariate column")
        if len(self.names) != self.x.shape[1]:
            raise DataValidationError("names length does not match covariate count")
        for label, col in [("y", self.y), ("d", self.d), ("z", self.z)] + [
            (self.names[j], self.x[:, j]) for j in range(self.x.shape[1])
        ]:
            if col is None:
                continue
            if col.shape != (n,) and label not in self.names:
                raise DataValidationError(f"column {label!r} has wrong length")
            if not np.all(np.isfinite(col)):
                i = int(np.flatnonzero(~np.isfinite(col))[0])
                raise DataValidationError(
                    f"non-finite value in column {label!r} at row {i}"
                )
        for label, col in [("d", self.d), ("z", self.z)]:
            if col is None:
                continue
            bad = np.flatnonzero((col != 0.0) & (col != 1.0))
            if bad.size:
                raise DataValidationError(
                    f"column {label!r} must be 0/1; offending row {int(bad[0])} "
                    f"has value {col[bad[0]]!r}"
                )
            s = int(col.sum())
            if s == 0 or s == n:
                raise DataValidationError(
                    f"both arms of {label!r} must be non-empty (sum={s}, n={n})"
                )

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class DesignSpec:
    """Which covariates enter the linear index, and whether to add an intercept."""

    include_intercept: bool = True
    covariate_subset: Optional[Sequence[int]] = None

    def columns(self, k: int) -> list[int]:
        if self.covariate_subset is None:
            return list(range(k))
        cols = list(self.covariate_subset)
        if not cols:
            raise DataValidationError("empty covariate selection")
        if len(set(cols)) != len(cols):
            raise DataValidationError("duplicate indices in covariate subset")
        for c in cols:
            if not 0 <= c < k:
                raise DataValidationError(f"covariate index {c} out of range [0, {k})")
        return cols


def design_matrix(ds: Dataset, spec: DesignSpec) -> np.ndarray:
    """n x m design table; intercept column of ones first when requested."""
    cols = spec.columns(ds.k)
    xm = ds.x[:, cols]
    if spec.include_intercept:
        xm = np.column_stack([np.ones(ds.n), xm])
    return np.ascontiguousarray(xm)


def load_csv(
    path,
    treatment: str,
    covariates: Sequence[str],
    outcome: Optional[str] = None,
    instrument: Optional[str] = None,
) -> Dataset:
    """Read a header-ed, comma-separated UTF-8 file into a validated Dataset.

    Binary columns (treatment/instrument) are accepted only as literal 0/1.
    """
    covariates = list(covariates)
    if not covariates:
        raise SchemaError("at least one covariate column is required")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        idx = {name: i for i, name in enumerate(header)}
        wanted = [treatment] + covariates
        if outcome is not None:
            wanted.append(outcome)
        if instrument is not None:
            wanted.append(instrument)
        for name in wanted:
            if name not in idx:
                raise SchemaError(f"{path}: missing column {name!r}")
        rows = list(reader)

    def column(name, row_offset=2):
        out = np.empty(len(rows))
        j = idx[name]
        for i, row in enumerate(rows):
            try:
                out[i] = float(row[j])
            except (ValueError, IndexError):
                cell = row[j] if j < len(row) else "<missing>"
                raise ParseError(
                    f"{path}: cannot parse {cell!r} in column {name!r}, "
                    f"row {i + row_offset}"
                ) from None
        return out

    def binary_column(name):
        j = idx[name]
        out = np.empty(len(rows))
        for i, row in enumerate(rows):
            cell = row[j] if j < len(row) else "<missing>"
            if cell not in ("0", "1"):
                raise DataValidationError(
                    f"{path}: column {name!r} must be literal 0/1, "
                    f"row {i + 2} has {cell!r}"
                )
            out[i] = float(cell)
        return out

    x = np.column_stack([column(c) for c in covariates])
    return Dataset(
        d=binary_column(treatment),
        x=x,
        y=None if outcome is None else column(outcome),
        z=None if instrument is None else binary_column(instrument),
        names=covariates,
    )


def write_csv(
    ds: Dataset,
    path,
    treatment: str = "d",
    outcome: str = "y",
    instrument: str = "z",
) -> None:
    """Write a Dataset so that load_csv round-trips it exactly (17 significant digits)."""
    header = []
    cols = []
    if ds.y is not None:
        header.append(outcome)
        cols.append(ds.y)
    header.append(treatment)
    cols.append(ds.d)
    if ds.z is not None:
        header.append(instrument)
        cols.append(ds.z)
    header.extend(ds.names)
    cols.extend(ds.x[:, j] for j in range(ds.k))

    def fmt(name, v):
        if name in (treatment, instrument):
            return str(int(v))
        return repr(float(v))

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            writer.writerow([fmt(name, col[i]) for name, col in zip(header, cols)])
