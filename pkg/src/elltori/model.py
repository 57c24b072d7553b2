"""Hamiltonian state, model ingestion and hypothesis checking.

A user model declares the integrable part through the torus frequencies
omega0 and a transverse-frequency map Omega0(omega0), plus perturbation
terms written in real variables (p, q, x, y).  Ingestion substitutes
x = (z + conj(z))/sqrt(2), y = -i (z - conj(z))/sqrt(2), splits every term
by class and assigns each harmonic to the lowest order s with |k| <= s*K.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .ledger import IndexList
from .series import (Caps, NormParameters, PoissonSeries, average_q, class_of,
                     log2_weighted_norm, series_product, weighted_norm)

SQRT2 = math.sqrt(2.0)


class ModelError(ValueError):
    pass


# -- safe arithmetic expressions for Omega0(omega0) --------------------------

_ALLOWED_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant,
                  ast.Name, ast.Load, ast.Add, ast.Sub, ast.Mult, ast.Div,
                  ast.Pow, ast.USub, ast.UAdd)


def compile_expression(text, n_vars):
    """Compile an arithmetic expression over w1..wn into a vector function.

    Only +, -, *, /, ** over numeric constants and the frequency components
    are accepted.
    """
    tree = ast.parse(text, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ModelError(f"disallowed syntax in expression: {text!r}")
        if isinstance(node, ast.Name) and node.id not in {
                f"w{i + 1}" for i in range(n_vars)}:
            raise ModelError(f"unknown variable {node.id!r} in {text!r}")
    code = compile(tree, "<frequency-map>", "eval")

    def fn(omega):
        env = {f"w{i + 1}": float(omega[i]) for i in range(n_vars)}
        return float(eval(code, {"__builtins__": {}}, env))

    return fn


@dataclass
class ModelSpec:
    """Declarative model: frequencies plus real perturbation monomials.

    Each entry of ``terms`` is a dict with integer vectors ``p``, ``x``,
    ``y``, ``k``, a real ``coeff`` and ``trig`` in {"cos", "sin"}, denoting
    coeff * p^p x^x y^y * trig(k.q).
    """

    n1: int
    n2: int
    omega0: np.ndarray
    omega0_exprs: list
    terms: list = field(default_factory=list)
    E_bound: float = 0.0
    name: str = "model"

    def __post_init__(self):
        self.omega0 = np.asarray(self.omega0, dtype=float)
        if self.omega0.shape != (self.n1,):
            raise ModelError("omega0 length must equal n1")
        if len(self.omega0_exprs) != self.n2:
            raise ModelError("need one Omega0 expression per transverse dof")
        self._omega_fns = [compile_expression(e, self.n1)
                           for e in self.omega0_exprs]

    def Omega0(self, omega=None):
        """Transverse frequencies at a torus-frequency vector."""
        omega = self.omega0 if omega is None else np.asarray(omega, float)
        return np.array([fn(omega) for fn in self._omega_fns])

    def with_omega0(self, omega):
        return ModelSpec(self.n1, self.n2, np.asarray(omega, float),
                         self.omega0_exprs, self.terms, self.E_bound,
                         self.name)

    @classmethod
    def from_dict(cls, data):
        return cls(n1=int(data["n1"]), n2=int(data["n2"]),
                   omega0=np.array(data["omega0"], dtype=float),
                   omega0_exprs=list(data["Omega0"]),
                   terms=list(data.get("terms", [])),
                   E_bound=float(data.get("E_bound", 0.0)),
                   name=data.get("name", "model"))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {"name": self.name, "n1": self.n1, "n2": self.n2,
                "omega0": [float(v) for v in self.omega0],
                "Omega0": list(self.omega0_exprs),
                "E_bound": self.E_bound, "terms": self.terms}


@dataclass
class HamiltonianState:
    """Expanded Hamiltonian after r normalization steps.

    ``terms[(ell, s)]`` holds the order-s class-ell perturbation (the
    implicit factor eps^s is never multiplied into the coefficients); the
    kernel omega.p + sum_j Omega_j z_j conj(z_j) is kept in the frequency
    vectors.  Constants discarded by the angle averages accumulate in
    ``energy_offset``.
    """

    n1: int
    n2: int
    r: int
    omega: np.ndarray
    Omega: np.ndarray
    terms: dict
    epsilon: float
    K: int
    energy_offset: complex = 0.0

    def term(self, ell, s):
        return self.terms.get((ell, s))

    def kernel_series(self):
        """omega.p + Omega z w / i as a series (w = i conj(z))."""
        out = PoissonSeries.zero(self.n1, self.n2)
        for j in range(self.n1):
            m = [0] * self.n1
            m[j] = 1
            out = out + PoissonSeries.monomial(self.n1, self.n2,
                                               self.omega[j], m=m)
        for j in range(self.n2):
            l = [0] * self.n2
            l[j] = 1
            # Omega_j z_j zbar_j written in (z, w): zbar = -i w
            out = out + PoissonSeries.monomial(self.n1, self.n2,
                                               -1j * self.Omega[j],
                                               l=l, lbar=l)
        return out

    def copy(self):
        return HamiltonianState(self.n1, self.n2, self.r,
                                self.omega.copy(), self.Omega.copy(),
                                dict(self.terms), self.epsilon, self.K,
                                self.energy_offset)

    def normal_form_defect(self):
        """Largest coefficient of a term that should vanish at step r."""
        worst = 0.0
        for (ell, s), g in self.terms.items():
            if ell <= 2 and s <= self.r:
                worst = max(worst, g.max_coeff())
        return worst

    def is_real(self, tol=1e-9):
        from .series import realify_check
        return all(realify_check(g, tol) for g in self.terms.values())


def _xy_series(n1, n2, j, which):
    """x_j or y_j as a 2-term series in (z, w)."""
    l = [0] * n2
    l[j] = 1
    if which == "x":
        # x = (z - i w)/sqrt(2)
        a = PoissonSeries.monomial(n1, n2, 1.0 / SQRT2, l=l)
        b = PoissonSeries.monomial(n1, n2, -1j / SQRT2, lbar=l)
    else:
        # y = (-i z + w)/sqrt(2)
        a = PoissonSeries.monomial(n1, n2, -1j / SQRT2, l=l)
        b = PoissonSeries.monomial(n1, n2, 1.0 / SQRT2, lbar=l)
    return a + b


def _term_to_series(spec, entry):
    """One real model monomial as a (z, w) series."""
    n1, n2 = spec.n1, spec.n2
    p = tuple(entry.get("p", [0] * n1))
    x = tuple(entry.get("x", [0] * n2))
    y = tuple(entry.get("y", [0] * n2))
    k = tuple(entry.get("k", [0] * n1))
    coeff = float(entry["coeff"])
    trig = entry.get("trig", "cos")
    if len(p) != n1 or len(k) != n1 or len(x) != n2 or len(y) != n2:
        raise ModelError(f"bad exponent lengths in term {entry}")

    out = PoissonSeries.monomial(n1, n2, coeff, m=p)
    for j in range(n2):
        for _ in range(x[j]):
            out = series_product(out, _xy_series(n1, n2, j, "x"))
        for _ in range(y[j]):
            out = series_product(out, _xy_series(n1, n2, j, "y"))

    if all(v == 0 for v in k):
        if trig == "sin":
            return PoissonSeries.zero(n1, n2)
        return out
    plus = PoissonSeries.monomial(n1, n2, 1.0, k=k)
    minus = PoissonSeries.monomial(n1, n2, 1.0, k=tuple(-v for v in k))
    if trig == "cos":
        wave = 0.5 * (plus + minus)
    elif trig == "sin":
        wave = -0.5j * (plus - minus)
    else:
        raise ModelError(f"trig must be cos or sin, got {trig!r}")
    return series_product(out, wave)


def ingest(spec, params, K, epsilon, caps=None):
    """Build the step-0 Hamiltonian state from a model.

    Every monomial of class ell and harmonic k goes to order
    s = ceil(|k|/K), floored at 1 for the classes ell <= 2 that carry an
    explicit epsilon factor; class >= 3 averages (k = 0) sit at s = 0.
    A harmonic outside every allowed budget is rejected.
    """
    n1, n2 = spec.n1, spec.n2
    if caps is None:
        caps = Caps(deg_max=64, k_max=64 * K)
    table = {}
    for entry in spec.terms:
        g = _term_to_series(spec, entry)
        for key, c in g.terms.items():
            ell = 2 * sum(key[:n1]) + sum(key[n1:n1 + 2 * n2])
            ktrig = sum(abs(v) for v in key[-n1:])
            if ktrig == 0:
                s = 0 if ell >= 3 else 1
            else:
                s = max(1, math.ceil(ktrig / K))
                if ell <= 2:
                    s = max(s, 1)
            if ktrig > caps.k_max or s * K > caps.k_max or ell > caps.deg_max:
                raise ModelError(
                    f"term with |k|={ktrig}, class {ell} exceeds every "
                    f"allowed budget (key {key})")
            bucket = table.setdefault((ell, s), {})
            bucket[key] = bucket.get(key, 0j) + c
    terms = {}
    for (ell, s), bucket in table.items():
        g = PoissonSeries(n1, n2, bucket, trig_cutoff=s * K,
                          ledger=IndexList())
        if g:
            terms[(ell, s)] = g
    return HamiltonianState(n1=n1, n2=n2, r=0,
                            omega=spec.omega0.copy(),
                            Omega=spec.Omega0(),
                            terms=terms, epsilon=epsilon, K=K)


def evaluate_model(spec, epsilon, p, q, x, y):
    """Direct evaluation of the model in real variables, kernel included.

    Class <= 2 terms and non-averaged class >= 3 terms carry the factor
    epsilon, averaged class >= 3 terms do not; this mirrors the order
    assignment used by ingest (all fixture harmonics fit one budget).
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    val = float(spec.omega0 @ p)
    Om = spec.Omega0()
    val += float((Om * (x ** 2 + y ** 2) / 2.0).sum())
    for entry in spec.terms:
        pe = np.array(entry.get("p", [0] * spec.n1))
        xe = np.array(entry.get("x", [0] * spec.n2))
        ye = np.array(entry.get("y", [0] * spec.n2))
        ke = np.array(entry.get("k", [0] * spec.n1))
        ell = 2 * pe.sum() + xe.sum() + ye.sum()
        mono = float(entry["coeff"]) * np.prod(p ** pe) * np.prod(x ** xe) \
            * np.prod(y ** ye)
        phase = float(ke @ q)
        mono *= math.sin(phase) if entry.get("trig", "cos") == "sin" else \
            math.cos(phase)
        averaged = ell >= 3 and not ke.any()
        val += mono if averaged else epsilon * mono
    return val


def evaluate_state(state, p, q, z, w=None, shift_orders=True):
    """Numerical value of kernel + sum_s eps^s f_(ell,s) at a phase point."""
    from .series import evaluate
    eps = state.epsilon
    total = evaluate(state.kernel_series(), p, q, z, w)
    for (ell, s), g in sorted(state.terms.items()):
        weight = eps ** s if shift_orders else 1.0
        total = total + weight * evaluate(g, p, q, z, w)
    return total


# -- hypothesis checking -------------------------------------------------------

def iter_harmonics(n, order):
    """All integer vectors k in Z^n with 0 < |k|_1 <= order."""
    def rec(prefix, remaining, dims):
        if dims == 1:
            for v in range(-remaining, remaining + 1):
                yield prefix + (v,)
            return
        for v in range(-remaining, remaining + 1):
            yield from rec(prefix + (v,), remaining - abs(v), dims - 1)

    for k in rec((), order, n):
        if any(k):
            yield k


def iter_transverse(n2, max_abs=2):
    """Integer vectors ell with 0 <= |ell|_1 <= max_abs."""
    yield from (k for k in iter_harmonics(n2, max_abs))
    yield (0,) * n2


def min_divisor(omega, Omega, order, include_zero_ell=True):
    """Exact minimum of |k.omega + ell.Omega| over the finite lattice."""
    omega = np.asarray(omega, float)
    Omega = np.asarray(Omega, float)
    best = math.inf
    best_pair = None
    for k in iter_harmonics(len(omega), order):
        base = float(np.dot(k, omega))
        for ell in iter_transverse(len(Omega)):
            if not include_zero_ell and not any(ell):
                continue
            d = abs(base + float(np.dot(ell, Omega)))
            if d < best:
                best, best_pair = d, (k, ell)
    return best, best_pair


def check_hypotheses(spec, grid, gamma, tau, K, params, Theta0,
                     state=None, epsilon=0.0, k_probe=None):
    """Runtime check of the preparation hypotheses on a frequency grid.

    Reports the worst divisor against 2*gamma/K^tau, the purely transverse
    divisors against 2*gamma, a finite-difference Jacobian bound of the
    transverse-frequency map, the convex-hull distances against 2*Theta0
    and the self-consistent term bound Ebar.  Failures are flagged in the
    report, never raised.
    """
    grid = np.atleast_2d(np.asarray(grid, float))
    n1, n2 = spec.n1, spec.n2
    report = {"gamma": gamma, "tau": tau, "K": K, "nodes": len(grid)}

    worst_div = math.inf
    worst_trans = math.inf
    for node in grid:
        Om = spec.Omega0(node)
        d, _ = min_divisor(node, Om, K)
        worst_div = min(worst_div, d)
        for ell in iter_harmonics(n2, 2):
            worst_trans = min(worst_trans, abs(float(np.dot(ell, Om))))
    report["min_divisor"] = worst_div
    report["divisor_floor"] = 2.0 * gamma / K ** tau
    report["nonresonant_ok"] = worst_div > report["divisor_floor"]
    report["min_transverse"] = worst_trans
    report["transverse_floor"] = 2.0 * gamma
    report["melnikov_ok"] = worst_trans > report["transverse_floor"]
    report["Omega_separated_ok"] = all(
        _omega_separated(spec.Omega0(node)) for node in grid)

    # finite-difference Jacobian of Omega0; the step is refined once from a
    # provisional extension radius computed with J0 = 0
    h_prov = _extension_radius(0.0, gamma, tau, K, params.sigma)
    J0 = _fd_jacobian_bound(spec, grid, h_prov / 10.0)
    report["J0"] = J0
    report["h0_step"] = h_prov / 10.0

    hull = convex_hull_distances(spec, grid, K, k_probe=k_probe)
    report["hull_min_distance"] = hull["min_distance"]
    report["hull_floor"] = 2.0 * Theta0
    report["hull_ok"] = hull["min_distance"] >= 2.0 * Theta0

    if state is not None:
        Ebar = 0.0
        for (ell, s), g in state.terms.items():
            Ebar = max(Ebar, 2.0 ** ell * weighted_norm(g, params))
        report["Ebar"] = Ebar
        report["term_bound_ok"] = all(
            weighted_norm(g, params) <= report["Ebar"] / 2.0 ** ell + 1e-15
            for (ell, s), g in state.terms.items())
    return report


def _omega_separated(Om):
    n2 = len(Om)
    if any(v == 0 for v in Om):
        return False
    return all(Om[i] != Om[j] for i in range(n2) for j in range(i + 1, n2))


def _extension_radius(J0, gamma, tau, K, sigma):
    eta = min(1.0 / K, sigma)
    return min(eta, 1.0 / (math.e * (J0 + 1.0 / sigma))) * gamma \
        / (8.0 * K ** tau)


def _fd_jacobian_bound(spec, grid, step):
    worst = 0.0
    for node in grid:
        for j in range(spec.n1):
            e = np.zeros(spec.n1)
            e[j] = step
            dO = (spec.Omega0(node + e) - spec.Omega0(node - e)) / (2 * step)
            worst = max(worst, float(np.max(np.abs(dO))))
    return worst


def simplex_distance(point, cloud, iters=400):
    """Euclidean distance from ``point`` to the convex hull of ``cloud``.

    Solves min |point - cloud^T lam| over the simplex by projected
    gradient; robust and dependency-free for the small dimensions used
    here.
    """
    cloud = np.atleast_2d(np.asarray(cloud, float))
    point = np.asarray(point, float)
    m = len(cloud)
    lam = np.full(m, 1.0 / m)
    G = cloud @ cloud.T
    b = cloud @ point
    lip = max(np.linalg.norm(G, 2), 1e-12)
    for _ in range(iters):
        grad = G @ lam - b
        lam = _project_simplex(lam - grad / lip)
    return float(np.linalg.norm(point - cloud.T @ lam))


def _project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, len(v) + 1)
    cond = u - (css - 1.0) / idx > 0
    rho = idx[cond][-1]
    theta = (css[cond][-1] - 1.0) / rho
    return np.maximum(v - theta, 0.0)


def convex_hull_distances(spec, grid, K, k_probe=None, step=None):
    """Distances from integer vectors to the hull of the gradient cloud.

    The gradient set of ell.Omega0 is sampled by finite differences on the
    grid for every 0 < |ell| <= 2.
    """
    grid = np.atleast_2d(np.asarray(grid, float))
    n1 = spec.n1
    if step is None:
        span = float(np.max(grid) - np.min(grid))
        step = max(span, 1.0) * 1e-5
    if k_probe is None:
        k_probe = list(iter_harmonics(n1, max(3 * K, 6)))
    result = {"min_distance": math.inf, "per_ell": {}}
    for ell in iter_harmonics(spec.n2, 2):
        cloud = []
        for node in grid:
            g = np.zeros(n1)
            for j in range(n1):
                e = np.zeros(n1)
                e[j] = step
                g[j] = float(np.dot(ell, (spec.Omega0(node + e)
                                          - spec.Omega0(node - e)))) \
                    / (2 * step)
            cloud.append(g)
        dmin = min(simplex_distance(np.array(k, float), cloud)
                   for k in k_probe)
        result["per_ell"][ell] = dmin
        result["min_distance"] = min(result["min_distance"], dmin)
    return result


def hamiltonian_total(state, params, shrink=1.0, epsilon=None):
    """Convergence diagnostic sum_s eps^s |f_(ell,s)| at a shrunk domain."""
    eps = state.epsilon if epsilon is None else epsilon
    if eps >= 1.0:
        raise ValueError("epsilon must be < 1")
    p = params.scaled(shrink)
    total = 0.0
    for (ell, s), g in state.terms.items():
        total += eps ** s * weighted_norm(g, p)
    return total


def log2_hamiltonian_total(state, params, shrink=1.0, epsilon=None):
    """log2-domain version of hamiltonian_total for tiny epsilon sweeps."""
    eps = state.epsilon if epsilon is None else epsilon
    p = params.scaled(shrink)
    logs = []
    for (ell, s), g in state.terms.items():
        ln = log2_weighted_norm(g, p)
        if ln > -math.inf:
            logs.append(s * math.log2(eps) + ln if eps > 0 else
                        (-math.inf if s else ln))
    logs = [x for x in logs if x > -math.inf]
    if not logs:
        return -math.inf
    top = max(logs)
    return top + math.log2(sum(2.0 ** (x - top) for x in logs))
