"""Algebra layer: brackets, Lie series, norms, classes, reality."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from elltori.series import (Caps, ClassTag, DimensionMismatch,
                            NormParameters, PoissonSeries, average_q,
                            class_of, differentiate, evaluate,
                            homogeneous_parts, lie_derivative,
                            lie_series_apply, poisson_bracket, realify_check,
                            series_from_json, series_to_json, weighted_norm)

from conftest import fd_bracket, random_phase_point, random_series


N1, N2 = 2, 1


def mono(coeff, m=None, l=None, lbar=None, k=None):
    return PoissonSeries.monomial(N1, N2, coeff, m=m, l=l, lbar=lbar, k=k)


class TestBracketBasics:
    def test_exponential_vs_action(self):
        f = mono(1.0, k=(1, 0))
        g = mono(0.7, m=(1, 0))
        br = poisson_bracket(f, g)
        assert br.terms == {(0, 0, 0, 0, 1, 0): pytest.approx(0.7j)}

    def test_antisymmetry_self(self):
        rng = np.random.default_rng(11)
        f = random_series(rng)
        assert not poisson_bracket(f, f)

    def test_dimension_mismatch(self):
        f = PoissonSeries.monomial(1, 1, 1.0)
        g = mono(1.0)
        with pytest.raises(DimensionMismatch):
            poisson_bracket(f, g)

    def test_fd_oracle_zw_pair(self):
        # {z1 w1, z1 e^{i q1}} against a finite-difference bracket
        rng = np.random.default_rng(5)
        f = mono(1.0, l=(1,), lbar=(1,))
        g = mono(1.0, l=(1,), k=(1, 0))
        br = poisson_bracket(f, g)
        for _ in range(5):
            p, q, z, w = random_phase_point(rng)
            direct = complex(evaluate(br, p, q, z, w))
            approx = fd_bracket(f, g, p, q, z, w)
            assert abs(direct - approx) <= 1e-8 * max(1.0, abs(direct))

    def test_fd_oracle_random(self):
        rng = np.random.default_rng(7)
        for trial in range(4):
            f = random_series(rng, n_terms=4, deg_max=3, k_max=1)
            g = random_series(rng, n_terms=4, deg_max=3, k_max=1)
            br = poisson_bracket(f, g)
            for _ in range(5):
                p, q, z, w = random_phase_point(rng, scale=0.4)
                direct = complex(evaluate(br, p, q, z, w))
                approx = fd_bracket(f, g, p, q, z, w, h=1e-5)
                scale = max(1.0, abs(direct))
                assert abs(direct - approx) <= 1e-6 * scale


class TestBracketIdentities:
    def test_bilinearity(self):
        rng = np.random.default_rng(23)
        f, g, h = (random_series(rng, n_terms=5) for _ in range(3))
        a, b = 1.7 - 0.3j, 0.4 + 2.2j
        lhs = poisson_bracket(a * f + b * g, h)
        rhs = a * poisson_bracket(f, h) + b * poisson_bracket(g, h)
        assert (lhs - rhs).max_coeff() <= 1e-12 * max(lhs.max_coeff(), 1e-30)

    def test_jacobi(self):
        rng = np.random.default_rng(31)
        f, g, h = (random_series(rng, n_terms=4, deg_max=3, k_max=1)
                   for _ in range(3))
        total = poisson_bracket(f, poisson_bracket(g, h)) \
            + poisson_bracket(g, poisson_bracket(h, f)) \
            + poisson_bracket(h, poisson_bracket(f, g))
        biggest = max((poisson_bracket(f, poisson_bracket(g, h)).max_coeff(),
                       1e-30))
        assert total.max_coeff() <= 1e-9 * biggest

    def test_leibniz(self):
        from elltori.series import series_product
        rng = np.random.default_rng(47)
        f = random_series(rng, n_terms=3, deg_max=2, k_max=1)
        g = random_series(rng, n_terms=3, deg_max=2, k_max=1)
        h = random_series(rng, n_terms=3, deg_max=2, k_max=1)
        lhs = poisson_bracket(f, series_product(g, h))
        rhs = series_product(poisson_bracket(f, g), h) \
            + series_product(g, poisson_bracket(f, h))
        diff = lhs - rhs
        assert diff.max_coeff() <= 1e-10 * max(lhs.max_coeff(), 1e-30)

    def test_class_closure(self):
        rng = np.random.default_rng(53)
        for ell_f, ell_g in [(0, 2), (1, 2), (2, 2), (3, 2), (1, 1), (4, 3)]:
            f = random_series(rng, n_terms=4, ell=ell_f, k_max=2)
            g = random_series(rng, n_terms=4, ell=ell_g, k_max=3)
            br = poisson_bracket(f, g)
            if br:
                tag = class_of(br)
                assert tag.ell == ell_f + ell_g - 2
                assert tag.sK <= f.trig_cutoff + g.trig_cutoff


class TestLieSeries:
    def test_zero_generator(self):
        rng = np.random.default_rng(3)
        g = random_series(rng)
        chi = PoissonSeries.zero(N1, N2)
        assert not lie_derivative(chi, g)
        out = lie_series_apply(chi, g, scale=0.3, j_max=5)
        assert not (out - g)

    def test_rotation_term(self):
        # L_chi (w.p) for chi = c e^{i k.q} picks up i (k.w) c
        chi = mono(0.5, k=(1, 1))
        ham = mono(1.0, m=(1, 0)) + 0.618 * mono(1.0, m=(0, 1))
        out = lie_derivative(chi, ham)
        key = (0, 0, 0, 0, 1, 1)
        assert out.terms.keys() == {key}
        assert out.terms[key] == pytest.approx(0.5j * (1 + 0.618))

    def test_square_matches_composition(self):
        chi = mono(1.0, k=(1, 0))
        g = mono(1.0, m=(2, 0))
        once = poisson_bracket(chi, g)
        twice = poisson_bracket(chi, once)
        series = lie_series_apply(chi, g, scale=1.0, j_max=2)
        expect = g + once + 0.5 * twice
        assert not (series - expect)

    def test_flow_oracle(self):
        # exp(eps L_chi) g versus integrating the generator's flow
        rng = np.random.default_rng(91)
        chi = random_series(rng, n_terms=3, deg_max=2, k_max=1, real=True)
        g = random_series(rng, n_terms=2, deg_max=2, k_max=1, real=True)
        j_max = 6
        eps = 0.05
        app = lie_series_apply(chi, g, scale=eps, j_max=j_max)

        def rhs(_, state):
            p = state[0:N1].astype(complex)
            q = state[N1:2 * N1].astype(complex)
            z = state[2 * N1:2 * N1 + N2] + 1j * state[2 * N1 + N2:2 * N1 + 2 * N2]
            w = state[2 * N1 + 2 * N2:2 * N1 + 3 * N2] \
                + 1j * state[2 * N1 + 3 * N2:2 * N1 + 4 * N2]
            dp = np.array([complex(evaluate(differentiate(chi, "q", j),
                                            p, np.real(q), z, w))
                           for j in range(N1)])
            dq = np.array([-complex(evaluate(differentiate(chi, "p", j),
                                             p, np.real(q), z, w))
                           for j in range(N1)])
            dz = np.array([-complex(evaluate(differentiate(chi, "w", j),
                                             p, np.real(q), z, w))
                           for j in range(N2)])
            dw = np.array([complex(evaluate(differentiate(chi, "z", j),
                                            p, np.real(q), z, w))
                           for j in range(N2)])
            return np.concatenate([np.real(dp), np.real(dq), np.real(dz),
                                   np.imag(dz), np.real(dw), np.imag(dw)])

        for _ in range(3):
            p, q, z, w = random_phase_point(rng, scale=0.2)
            w = 1j * np.conj(z)  # real section keeps the flow real
            y0 = np.concatenate([np.real(p), q, np.real(z), np.imag(z),
                                 np.real(w), np.imag(w)])
            sol = solve_ivp(rhs, (0.0, eps), y0, rtol=1e-12, atol=1e-14,
                            method="DOP853")
            yf = sol.y[:, -1]
            pf = yf[0:N1].astype(complex)
            qf = yf[N1:2 * N1]
            zf = yf[2 * N1:2 * N1 + N2] + 1j * yf[2 * N1 + N2:2 * N1 + 2 * N2]
            wf = yf[2 * N1 + 2 * N2:2 * N1 + 3 * N2] \
                + 1j * yf[2 * N1 + 3 * N2:2 * N1 + 4 * N2]
            flow_val = complex(evaluate(g, pf, qf, zf, wf))
            series_val = complex(evaluate(app, p, q, z, w))
            assert abs(flow_val - series_val) <= 50 * eps ** (j_max + 1) + 1e-12


class TestAverageAndNorm:
    def test_average_examples(self):
        assert not average_q(mono(1.0, k=(1, 0)))
        g = mono(1.0, m=(1, 0)) + mono(1.0, m=(1, 0), k=(1, 0))
        avg = average_q(g)
        assert avg.terms == {(1, 0, 0, 0, 0, 0): 1.0 + 0j}

    def test_average_quadrature_oracle(self):
        rng = np.random.default_rng(13)
        g = random_series(rng, n_terms=6, deg_max=3, k_max=2)
        p, _, z, w = random_phase_point(rng)
        n_grid = 64
        qs = np.linspace(0.0, 2 * math.pi, n_grid, endpoint=False)
        total = 0j
        for q1 in qs:
            for q2 in qs:
                total += complex(evaluate(g, p, np.array([q1, q2]), z, w))
        quad = total / n_grid ** 2
        direct = complex(evaluate(average_q(g), p, np.zeros(2), z, w))
        assert abs(direct - quad) <= 1e-10 * max(1.0, abs(direct))

    def test_norm_single_harmonic(self):
        params = NormParameters(rho=0.3, sigma=0.4, R=0.2)
        g = mono(2.0 - 1.0j, k=(1, -1))
        expected = abs(2.0 - 1.0j) * math.exp(2 * 0.4)
        assert weighted_norm(g, params) == pytest.approx(expected)

    def test_norm_action(self):
        params = NormParameters(rho=0.3, sigma=0.4, R=0.2)
        assert weighted_norm(mono(1.0, m=(1, 0)), params) == pytest.approx(0.3)

    def test_norm_linearity_subadditivity(self):
        rng = np.random.default_rng(17)
        params = NormParameters(rho=0.3, sigma=0.4, R=0.2)
        f = random_series(rng)
        g = random_series(rng)
        assert weighted_norm(2.5 * f, params) == pytest.approx(
            2.5 * weighted_norm(f, params))
        assert weighted_norm(f + g, params) <= \
            weighted_norm(f, params) + weighted_norm(g, params) + 1e-12

    def test_log2_norm_matches(self):
        from elltori.series import log2_weighted_norm
        rng = np.random.default_rng(19)
        params = NormParameters(rho=0.3, sigma=0.4, R=0.2)
        f = random_series(rng)
        assert 2.0 ** log2_weighted_norm(f, params) == pytest.approx(
            weighted_norm(f, params))


class TestClassAndEval:
    def test_class_examples(self):
        g = mono(1.0, m=(1, 0), k=(3, 0))
        tag = class_of(g)
        assert tag == ClassTag(2, 3)
        mixed = mono(1.0, l=(1,)) + mono(1.0, m=(1, 0))
        assert class_of(mixed) == "mixed"
        parts = homogeneous_parts(mixed)
        assert set(parts) == {1, 2}

    def test_product_class_additive(self):
        from elltori.series import series_product
        rng = np.random.default_rng(29)
        f = random_series(rng, n_terms=3, ell=1, k_max=1)
        g = random_series(rng, n_terms=3, ell=3, k_max=2)
        prod = series_product(f, g)
        if prod:
            assert class_of(prod).ell == 4

    def test_evaluate_basics(self):
        zero = PoissonSeries.zero(N1, N2)
        assert complex(evaluate(zero, np.zeros(2), np.zeros(2),
                                np.zeros(1))) == 0j
        g = mono(1.0, m=(1, 0))
        assert complex(evaluate(g, np.array([2.0, 0.0]), np.zeros(2),
                                np.zeros(1))) == pytest.approx(2.0)

    def test_evaluate_linearity(self):
        rng = np.random.default_rng(37)
        f = random_series(rng)
        g = random_series(rng)
        for _ in range(5):
            p, q, z, w = random_phase_point(rng)
            lhs = complex(evaluate(f + g, p, q, z, w))
            rhs = complex(evaluate(f, p, q, z, w)) \
                + complex(evaluate(g, p, q, z, w))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    def test_evaluate_batched(self):
        rng = np.random.default_rng(41)
        g = random_series(rng)
        pts = [random_phase_point(rng) for _ in range(6)]
        P = np.stack([p for p, _, _, _ in pts])
        Q = np.stack([q for _, q, _, _ in pts])
        Z = np.stack([z for _, _, z, _ in pts])
        W = np.stack([w for _, _, _, w in pts])
        batch = evaluate(g, P, Q, Z, W)
        for i, (p, q, z, w) in enumerate(pts):
            assert batch[i] == pytest.approx(complex(evaluate(g, p, q, z, w)))


class TestReality:
    def test_cosine_real(self):
        g = 0.5 * (mono(1.0, k=(1, 0)) + mono(1.0, k=(-1, 0)))
        assert realify_check(g)

    def test_plain_exponential_not_real(self):
        assert not realify_check(mono(1j, k=(1, 0)))

    def test_realized_random(self):
        rng = np.random.default_rng(43)
        g = random_series(rng, real=True)
        assert realify_check(g)
        p, q, z, _ = random_phase_point(rng)
        val = complex(evaluate(g, np.real(p), q, z))
        assert abs(val.imag) <= 1e-10 * max(1.0, abs(val))


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(59)
        g = random_series(rng)
        back = series_from_json(series_to_json(g))
        assert not (back - g)
        assert back.trig_cutoff == g.trig_cutoff

    def test_accepts_unordered_and_duplicates(self):
        doc = {"n1": 1, "n2": 1, "trig_cutoff": 2,
               "entries": [
                   {"m": [0], "l": [0], "lbar": [0], "k": [2], "re": 1.0,
                    "im": 0.0},
                   {"m": [1], "l": [0], "lbar": [0], "k": [0], "re": 0.5,
                    "im": 0.0},
                   {"m": [1], "l": [0], "lbar": [0], "k": [0], "re": 0.25,
                    "im": 0.0}]}
        import json
        g = series_from_json(json.dumps(doc))
        assert g.terms[(1, 0, 0, 0)] == pytest.approx(0.75)

    def test_canonical_order(self):
        g = mono(1.0, k=(1, 0)) + mono(1.0, m=(1, 0)) + mono(1.0, l=(1,))
        keys = g.sorted_keys()
        degs = [g.degree_of(k) for k in keys]
        assert degs == sorted(degs)


class TestTruncation:
    def test_caps_respected(self):
        caps = Caps(deg_max=2, k_max=1)
        f = mono(1.0, k=(1, 0)) + mono(1.0, k=(0, 1))
        g = mono(1.0, m=(1, 0), k=(1, 0))
        br = poisson_bracket(f, g, caps)
        for key in br.terms:
            assert br.trig_of(key) <= 1
            assert br.degree_of(key) <= 2

    def test_prune_keeps_leading(self):
        g = mono(1.0) + mono(1e-320)
        assert len(g) == 1
