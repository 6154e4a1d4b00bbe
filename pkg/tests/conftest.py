"""Shared fixtures: solved presets and a seeded randomized instance pool."""

from __future__ import annotations

import numpy as np
import pytest

from edthreshold.params import ModelParams, derive, preset
from edthreshold.qbd import solve_params

RANDOM_SEED = 20240817
N_RANDOM = 20


def make_random_params(rng: np.random.Generator, max_h: int = 40) -> ModelParams:
    """Random stable scenario with sane simulation event rates.

    Keeps h = max(k, c) within ``max_h``, the urgent intensity in [0.1, 0.85],
    and total transition rates low enough that the simulation oracle stays
    fast. Economics are arbitrary positives.
    """
    while True:
        c_u = int(rng.integers(1, 7))
        c_n = int(rng.integers(1, 8))
        c = c_u + c_n
        k = int(rng.integers(2, 31))
        if max(k, c) > max_h:
            continue
        mu_u = float(rng.uniform(0.2, 2.5))
        mu_n = float(rng.uniform(0.2, 3.0))
        rho = float(rng.uniform(0.1, 0.85))
        p_u = float(rng.uniform(0.15, 0.9))
        lam_u = rho * c * mu_u
        lam = lam_u / p_u
        lam_n = lam - lam_u
        if lam > 12.0 or mu_u * c + mu_n * c_n > 30.0:
            continue
        # keep the non-urgent side from being hopelessly overloaded, so the
        # chain mixes and simulation estimates converge
        if lam_n > 2.5 * mu_n * c_n:
            continue
        theta = int(rng.integers(0, k))
        return ModelParams(
            lam=lam, p_u=p_u, mu_u=mu_u, mu_n=mu_n, c_u=c_u, c_n=c_n,
            k=k, theta=theta, p_a=float(rng.uniform(0.0, 1.0)),
            r_u_ed=float(rng.uniform(50, 3000)),
            r_n_ed=float(rng.uniform(20, 1000)),
            r_alt=float(rng.uniform(0, 500)),
            c_b=float(rng.uniform(0, 800)),
            cw_u=float(rng.uniform(0, 2000)),
            cw_n=float(rng.uniform(0, 200)),
        )


def random_instance_pool(n: int = N_RANDOM, seed: int = RANDOM_SEED,
                         max_h: int = 40):
    rng = np.random.default_rng(seed)
    return [make_random_params(rng, max_h=max_h) for _ in range(n)]


@pytest.fixture(scope="session")
def rural():
    return preset("rural")


@pytest.fixture(scope="session")
def urban():
    return preset("urban")


@pytest.fixture(scope="session")
def nvf():
    return preset("nested-vs-fixed")


@pytest.fixture(scope="session")
def rural_dist(rural):
    return solve_params(rural)


@pytest.fixture(scope="session")
def urban_dist(urban):
    return solve_params(urban)


@pytest.fixture(scope="session")
def nvf_dist(nvf):
    return solve_params(nvf)


@pytest.fixture(scope="session")
def random_pool():
    return random_instance_pool()


@pytest.fixture(scope="session")
def small_pool(random_pool):
    """The randomized instances small enough for the dense oracle."""
    return [p for p in random_pool if derive(p).h <= 10]
