"""Shared fixtures: random series builders and the desk-scale model."""

import math

import numpy as np
import pytest

from elltori.model import ModelSpec
from elltori.series import NormParameters, PoissonSeries


GOLDEN = 0.6180339887


def fixture_model_dict():
    """Two torus dofs, one transverse dof, golden-ratio-like frequencies."""
    return {
        "name": "golden-2p1",
        "n1": 2,
        "n2": 1,
        "omega0": [1.0, GOLDEN],
        "Omega0": ["2.5 + 0.1*w2"],
        "E_bound": 1.0,
        "terms": [
            {"coeff": 0.12, "k": [1, 0], "trig": "cos"},
            {"coeff": 0.08, "k": [1, 1], "trig": "cos"},
            {"coeff": 0.05, "k": [2, -1], "trig": "sin"},
            {"coeff": 0.10, "x": [1], "k": [1, 0], "trig": "cos"},
            {"coeff": 0.07, "y": [1], "k": [0, 1], "trig": "sin"},
            {"coeff": 0.06, "p": [1, 0], "k": [0, 1], "trig": "cos"},
            {"coeff": 0.05, "x": [2], "k": [1, -1], "trig": "cos"},
            {"coeff": 0.04, "p": [0, 1], "k": [2, 0], "trig": "cos"},
            {"coeff": 0.30, "p": [2, 0]},
            {"coeff": 0.20, "p": [1, 0], "x": [2]},
            {"coeff": 0.10, "x": [4]},
            {"coeff": 0.05, "x": [3], "k": [1, 0], "trig": "cos"},
            {"coeff": 0.04, "p": [0, 1], "x": [1], "k": [1, 1], "trig": "sin"},
        ],
    }


@pytest.fixture(scope="session")
def model_spec():
    return ModelSpec.from_dict(fixture_model_dict())


@pytest.fixture(scope="session")
def norm_params():
    return NormParameters(rho=0.25, sigma=0.5, R=0.25)


FIXTURE_GAMMA = 0.02
FIXTURE_TAU = 2.5
FIXTURE_K = 4


@pytest.fixture(scope="session")
def fixture_run(model_spec, norm_params):
    from elltori.normalization import normalize_model
    return normalize_model(model_spec, norm_params, gamma=FIXTURE_GAMMA,
                           tau=FIXTURE_TAU, K=FIXTURE_K, epsilon=1e-3,
                           r_max=4, s_max=8)


def random_series(rng, n1=2, n2=1, n_terms=6, deg_max=4, k_max=2,
                  ell=None, real=False):
    """Random sparse series; optionally class-homogeneous or realized."""
    terms = {}
    tries = 0
    while len(terms) < n_terms and tries < 200:
        tries += 1
        if ell is None:
            target = int(rng.integers(0, deg_max + 1))
        else:
            target = ell
        mtot = int(rng.integers(0, target // 2 + 1))
        m = _random_composition(rng, mtot, n1)
        rest = target - 2 * mtot
        lt = int(rng.integers(0, rest + 1))
        l = _random_composition(rng, lt, n2)
        lb = _random_composition(rng, rest - lt, n2)
        k = tuple(int(rng.integers(-k_max, k_max + 1)) for _ in range(n1))
        c = complex(rng.normal(), rng.normal())
        terms[m + l + lb + k] = c
    g = PoissonSeries(n1, n2, terms)
    if real:
        g = 0.5 * (g + g.conjugate_series())
    return g


def _random_composition(rng, total, parts):
    out = [0] * parts
    for _ in range(total):
        out[int(rng.integers(0, parts))] += 1
    return tuple(out)


def fd_bracket(f, g, p, q, z, w, h=1e-6):
    """Finite-difference Poisson bracket of the evaluated functions."""
    from elltori.series import evaluate

    def ev(s, pp, qq, zz, ww):
        return complex(evaluate(s, pp, qq, zz, ww))

    n1, n2 = f.n1, f.n2
    total = 0j
    for j in range(n1):
        ej = np.zeros(n1)
        ej[j] = h
        dfq = (ev(f, p, q + ej, z, w) - ev(f, p, q - ej, z, w)) / (2 * h)
        dgp = (ev(g, p + ej, q, z, w) - ev(g, p - ej, q, z, w)) / (2 * h)
        dfp = (ev(f, p + ej, q, z, w) - ev(f, p - ej, q, z, w)) / (2 * h)
        dgq = (ev(g, p, q + ej, z, w) - ev(g, p, q - ej, z, w)) / (2 * h)
        total += dfq * dgp - dfp * dgq
    for j in range(n2):
        ej = np.zeros(n2)
        ej[j] = h
        dfz = (ev(f, p, q, z + ej, w) - ev(f, p, q, z - ej, w)) / (2 * h)
        dgw = (ev(g, p, q, z, w + ej) - ev(g, p, q, z, w - ej)) / (2 * h)
        dfw = (ev(f, p, q, z, w + ej) - ev(f, p, q, z, w - ej)) / (2 * h)
        dgz = (ev(g, p, q, z + ej, w) - ev(g, p, q, z - ej, w)) / (2 * h)
        total += dfz * dgw - dfw * dgz
    return total


def random_phase_point(rng, n1=2, n2=1, scale=0.3):
    p = scale * rng.normal(size=n1) + 0j
    q = rng.uniform(0, 2 * math.pi, size=n1)
    z = scale * (rng.normal(size=n2) + 1j * rng.normal(size=n2))
    w = scale * (rng.normal(size=n2) + 1j * rng.normal(size=n2))
    return p, q, z, w
