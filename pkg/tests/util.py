"""Shared helpers for the test suite."""

from importlib.resources import as_file, files
from pathlib import Path

import numpy as np

from bilsyn import model


def fixture_path(name: str) -> Path:
    source = files("bilsyn.fixtures") / name
    with as_file(source) as path:
        return Path(path)


def load_fixture(name: str) -> model.Problem:
    return model.load_problem(fixture_path(name))


def random_region(rng: np.random.Generator, N: int) -> model.RegionSpec:
    a = rng.standard_normal((N, N))
    qz = -(a @ a.T + 0.3 * np.eye(N))
    sz = 0.2 * rng.standard_normal((N, 1))
    rz = float(rng.uniform(0.3, 2.0))
    return model.make_region(qz, sz, [[rz]])


def random_psd(rng: np.random.Generator, m: int) -> np.ndarray:
    a = rng.standard_normal((m, m))
    return a @ a.T


def region_sample(rng: np.random.Generator, region: model.RegionSpec,
                  inside: bool = True) -> np.ndarray:
    """Sample a point of the region (or of its complement).

    With Qz < 0 the region is the ellipsoid (z - zc)^T (-Qz) (z - zc) <= r^2
    around zc = -Qz^{-1} Sz, so both cases are direct draws.
    """
    E = -region.Qz
    zc = -np.linalg.solve(region.Qz, region.Sz).ravel()
    r2 = float((region.Rz - region.Sz.T @ np.linalg.solve(region.Qz, region.Sz))[0, 0])
    assert r2 > 0, "region is degenerate"
    L = np.linalg.cholesky(E)
    s = rng.standard_normal(region.N)
    s /= np.linalg.norm(s)
    scale = rng.uniform(0.0, 0.95) if inside else rng.uniform(1.05, 2.5)
    z = zc + scale * np.sqrt(r2) * np.linalg.solve(L.T, s)
    assert region.contains(z) == inside
    return z
