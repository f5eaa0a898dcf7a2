"""Shared generators for randomized oracle tests."""

import numpy as np
import pytest

from episodic import BSplineHazard, EventSequence, ModelParams, SinusoidalHazard


def random_hazard(rng, family=None):
    if family is None:
        family = rng.choice(["sinusoidal", "bspline"])
    if family == "sinusoidal":
        q = int(rng.integers(0, 3))
        beta = np.concatenate(([rng.uniform(-2.5, 0.5)], rng.uniform(-1.5, 1.5, 2 * q)))
        return SinusoidalHazard(beta=tuple(beta))
    q = int(rng.integers(4, 8))
    return BSplineHazard(beta=tuple(rng.uniform(-2.5, 0.5, q)))


def random_params(rng, hazard_family=None, offspring=None):
    if offspring is None:
        offspring = rng.choice(["exponential", "weibull"])
    if offspring == "exponential":
        rho1 = float(rng.uniform(2.0, 20.0))
        rho0 = float(rng.uniform(2.0, 20.0))
    else:
        rho1 = (float(rng.uniform(0.6, 2.5)), float(rng.uniform(0.05, 0.5)))
        rho0 = (float(rng.uniform(0.6, 2.5)), float(rng.uniform(0.05, 0.5)))
    return ModelParams(
        alpha=float(rng.uniform(0.2, 0.8)),
        gamma=float(rng.uniform(0.05, 1.5)),
        mu1=float(rng.uniform(0.05, 1.5)),
        mu0=float(rng.uniform(0.05, 1.5)),
        rho1=rho1,
        rho0=rho0,
        hazard=random_hazard(rng, hazard_family),
        offspring=offspring,
    )


def random_window(rng, n_max=12, span=None, start=0.0, n_min=1):
    n = int(rng.integers(n_min, n_max + 1))
    if span is None:
        span = float(rng.uniform(1.0, 8.0))
    times = start + np.sort(rng.uniform(0.0, span, n))
    marks = rng.integers(0, 2, n)
    return EventSequence(window_start=start, window_end=start + span, times=times, marks=marks)


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
