"""Shared fixtures: small simulated datasets and deterministic generators."""

import numpy as np
import pytest

from ips.simulation import dgp_kang_schafer, dgp_lte


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def exog_small():
    ds, _ = dgp_kang_schafer(80, (11, 0))
    return ds


@pytest.fixture
def exog_mid():
    ds, _ = dgp_kang_schafer(500, (12, 0))
    return ds


@pytest.fixture
def lte_small():
    ds, _ = dgp_lte(120, (13, 0))
    return ds


@pytest.fixture
def lte_mid():
    ds, _ = dgp_lte(500, (14, 0))
    return ds


def random_dataset(rng, n=40, k=3, with_z=False):
    """A small random dataset with a well-behaved design."""
    x = rng.standard_normal((n, k))
    d = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-x[:, 0]))).astype(float)
    # guarantee non-empty arms
    d[0], d[1] = 1.0, 0.0
    y = x[:, 0] + rng.standard_normal(n)
    z = None
    if with_z:
        z = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-x[:, 0]))).astype(float)
        z[0], z[1] = 1.0, 0.0
        d = d * z  # one-sided noncompliance keeps complier mass positive
        d[0] = 1.0
    from ips.data import Dataset

    return Dataset(d=d, x=x, y=y, z=z)
