"""Explicit constants, threshold values and measured-versus-bound audits.

Every closed-form constant of the convergence analysis is evaluated here as
a pure function of the input parameters, and the inequalities the analysis
asserts are checked against quantities measured from an actual run.  All
comparisons happen in the log2 domain with a small relative slack, since
the bounds overflow doubles long before the algebra does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ledger import log2_value
from .series import log2_weighted_norm

LOG_SLACK = 1e-9


def delta_sequence(r_max):
    """Domain-restriction increments: delta_r = 1/(2 pi^2 r^2), delta_0 = 0."""
    return [0.0] + [1.0 / (2.0 * math.pi ** 2 * r * r)
                    for r in range(1, r_max + 1)]


def restriction_sequence(r_max):
    """Cumulative restrictions d_r = d_(r-1) + 3 delta_r, d_0 = 0; -> 1/4."""
    deltas = delta_sequence(r_max)
    out = [0.0]
    for r in range(1, r_max + 1):
        out.append(out[-1] + 3.0 * deltas[r])
    return out


def cauchy_factor(rho, sigma, R):
    """The bracket-estimate constant 2e/(rho sigma) + e^2/R^2."""
    return 2.0 * math.e / (rho * sigma) + math.e ** 2 / R ** 2


def zeta(ell):
    """Exponent defect in the per-step norm bounds."""
    return 3 - ell if ell <= 3 else 0


@dataclass
class EstimateReport:
    """All explicit constants for one parameter set."""

    Ebar: float
    gamma: float
    tau: float
    K: int
    rho: float
    sigma: float
    R: float
    J0: float
    Theta0: float
    n1: int
    n2: int
    D: float
    M: float = 0.0
    log2_M: float = 0.0
    calA: float = 0.0
    log2_calA: float = 0.0
    calB: float = 0.0
    eps_an: float = 0.0
    log2_eps_an: float = 0.0
    eps_ge: float = 0.0
    eps_star: float = 0.0
    eta: float = 0.0
    h: list = field(default_factory=list)
    d: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    measure_bound: float = 0.0
    measure_series_sum: float = 0.0
    measure_series_terms: int = 0
    box_measure: float = 0.0
    res_measure_condition: bool = False
    measure_divergent: bool = False

    def to_dict(self):
        out = {}
        for key, val in self.__dict__.items():
            if isinstance(val, (list, tuple)):
                out[key] = [float(v) for v in val]
            elif isinstance(val, (bool, int)):
                out[key] = val
            else:
                out[key] = float(val)
        return out


def compute_constants(params, r_seq=8, box_measure=None):
    """Evaluate every constant and threshold for a parameter set.

    ``params`` must provide Ebar, gamma, tau, K, rho, sigma, R, J0, Theta0,
    n1, n2 and D (sup-norm diameter of the frequency box).  The resonant
    measure series converges only for tau > n1; otherwise the bound is
    marked divergent.
    """
    p = dict(params)
    Ebar, gamma, tau = p["Ebar"], p["gamma"], p["tau"]
    K, rho, sigma, R = p["K"], p["rho"], p["sigma"], p["R"]
    J0, Theta0 = p["J0"], p["Theta0"]
    n1, n2, D = p["n1"], p["n2"], p["D"]
    if min(Ebar, gamma, K, rho, sigma, R, Theta0, D) <= 0:
        raise ValueError("all parameters must be positive")

    rep = EstimateReport(Ebar=Ebar, gamma=gamma, tau=tau, K=K, rho=rho,
                         sigma=sigma, R=R, J0=J0, Theta0=Theta0,
                         n1=n1, n2=n2, D=D)

    C = cauchy_factor(rho, sigma, R)
    M = max(1.0, 4.0 * math.pi ** 4 * Ebar * K ** tau / gamma * C)
    rep.M = M
    rep.log2_M = math.log2(M)
    rep.log2_calA = 3.0 * rep.log2_M + 56.0 + 12.0 * tau
    rep.calA = 2.0 ** rep.log2_calA if rep.log2_calA < 1020 else math.inf
    rep.log2_eps_an = -rep.log2_calA
    rep.eps_an = 2.0 ** rep.log2_eps_an

    rep.eta = min(1.0 / K, sigma)
    h0 = min(rep.eta, 1.0 / (math.e * (J0 + 1.0 / sigma))) \
        * gamma / (8.0 * K ** tau)
    rep.h = [h0]
    for _ in range(r_seq):
        rep.h.append(rep.h[-1] / 2.0 ** (tau + 2.0))
    rep.d = restriction_sequence(r_seq)
    rep.delta = delta_sequence(r_seq)

    rep.calB = min(h0 / (sigma * gamma), 2.0 ** (-tau))
    rep.eps_ge = min(1.0, h0 / (sigma * gamma)) \
        / (2.0 ** (tau + 3.0) * rep.calA)
    hull_cap = Theta0 * rep.calB / (2.0 ** 6 * rep.calA * (1.0 / sigma + J0))
    det_cap = rep.calB * math.log(2.0) / (16.0 * rep.calA * n1 ** 2)
    rep.eps_star = min(rep.eps_ge, hull_cap, det_cap)

    rep.box_measure = box_measure if box_measure is not None else D ** n1
    if tau <= n1:
        rep.measure_divergent = True
        rep.measure_bound = math.inf
        rep.res_measure_condition = False
    else:
        ssum, terms = _tail_summed_zeta(tau - n1 + 1.0)
        rep.measure_series_sum = ssum
        rep.measure_series_terms = terms
        c_n2 = (n2 + 1) * (2 * n2 + 1)
        rep.measure_bound = gamma * 2.0 ** (n1 + 3) * c_n2 * D ** (n1 - 1) \
            / (Theta0 * K ** (tau - n1)) * ssum
        rep.res_measure_condition = rep.measure_bound < rep.box_measure
    return rep


def _tail_summed_zeta(power, start=2, rel_tol=1e-12):
    """sum_{r >= start} r^-power, summed until the integral tail is tiny."""
    total = 0.0
    r = start
    while True:
        total += r ** (-power)
        tail = (r + 1) ** (1.0 - power) / (power - 1.0)
        if tail < rel_tol * total:
            return total, r - start + 1
        r += 1
        if r > 10 ** 8:
            raise RuntimeError("measure series failed to converge")


def lie_derivative_bound(chi_norm, g_norm, d, dprime, j, rho, sigma, R):
    """Right-hand side of the iterated Lie-derivative norm estimate.

    exp(-2) * (2e/(rho sigma) + e^2/R^2)^j * d^(-2j) * chi^j * g for the
    j-fold derivative measured after restricting the domain by d past the
    inputs' dprime.
    """
    if not (d > 0 and dprime >= 0 and d + dprime < 1):
        raise ValueError("need d > 0, dprime >= 0, d + dprime < 1")
    if j < 1:
        raise ValueError("j must be >= 1")
    C = cauchy_factor(rho, sigma, R)
    return math.exp(-2.0) * (C / d ** 2) ** j * chi_norm ** j * g_norm


# -- run audits ----------------------------------------------------------------


def _exceeds(measured_log2, bound_log2):
    if measured_log2 == -math.inf:
        return False
    slack = max(LOG_SLACK, LOG_SLACK * abs(bound_log2))
    return measured_log2 > bound_log2 + slack


def audit_step_bounds(run, est, nu):
    """Per-step audit of the iterative norm estimates.

    Checks, in log2 domain, the three generating-function bounds and every
    Hamiltonian-term bound

        |f_(ell,s)| at 1-d_r  <=  Ebar M^(3s-zeta_ell) 2^-ell V(ledger) nu[r][s]

    plus the per-step frequency-shift bound.  Violations are findings.
    """
    rows = []
    violations = 0
    tau = run.tau
    params = run.params
    C = cauchy_factor(params.rho, params.sigma, params.R)
    log2_C = math.log2(C)
    log2_E = math.log2(est.Ebar)
    log2_M = est.log2_M
    d = restriction_sequence(run.r_max)
    delta = delta_sequence(run.r_max)

    def push(row_id, r, measured, bound):
        bad = _exceeds(measured, bound)
        rows.append({"id": row_id, "r": r, "measured_log2": measured,
                     "bound_log2": bound, "ok": not bad})
        return bad

    for r in range(1, run.r_max + 1):
        gens = run.generators[r - 1]
        shrinks = (1.0 - d[r - 1], 1.0 - d[r - 1] - delta[r],
                   1.0 - d[r - 1] - 2.0 * delta[r])
        powers = (3 * r - 2, 3 * r - 1, 3 * r)
        counts = (nu.nu[r - 1][r], nu.nu_I[r][r], nu.nu_II[r][r])
        for stage in range(3):
            g = gens[stage]
            if not g.series:
                continue
            measured = (log2_C - 2.0 * math.log2(delta[r])
                        + log2_weighted_norm(g.series,
                                             params.scaled(shrinks[stage])))
            bound = (powers[stage] * log2_M + log2_value(g.ledger, tau)
                     + math.log2(counts[stage]))
            if push(f"chi{stage}", r, measured, bound):
                violations += 1

        state = run.states[r]
        for (ell, s), f in sorted(state.terms.items()):
            measured = log2_weighted_norm(f, params.scaled(1.0 - d[r]))
            bound = (log2_E + (3 * s - zeta(ell)) * log2_M - ell
                     + log2_value(f.ledger, tau)
                     + math.log2(nu.nu[r][s]))
            if push(f"f({ell},{s})", r, measured, bound):
                violations += 1

        rep = run.reports[r - 1]
        shift = max(float(np.max(np.abs(rep.shift_omega_coeff))) / params.sigma,
                    float(np.max(np.abs(rep.shift_Omega_coeff))))
        if shift > 0:
            measured = math.log2(shift)
            bound = (math.log2(run.gamma) + 3 * r * log2_M
                     + log2_value(rep.ledgers["chi2"], tau)
                     + math.log2(nu.nu[r][r]))
            if push("freq-shift", r, measured, bound):
                violations += 1

    return {"violations": violations, "checked": len(rows), "rows": rows}


def audit_uniform_bounds(run, est):
    """Audit of the uniform geometric bounds.

    Generating functions against calA^r, Hamiltonian terms against
    Ebar 2^-ell calA^s, frequency shifts against gamma sigma (eps calA)^r
    and gamma (eps calA)^r.  The epsilon power cancels exactly when the
    shifts are compared through their stored step coefficients.
    """
    rows = []
    violations = 0
    params = run.params
    C = cauchy_factor(params.rho, params.sigma, params.R)
    log2_C = math.log2(C)
    log2_E = math.log2(est.Ebar)
    log2_A = est.log2_calA
    gamma = run.gamma
    d = restriction_sequence(run.r_max)
    delta = delta_sequence(run.r_max)

    def push(row_id, r, measured, bound):
        bad = _exceeds(measured, bound)
        rows.append({"id": row_id, "r": r, "measured_log2": measured,
                     "bound_log2": bound, "ok": not bad})
        return bad

    for r in range(1, run.r_max + 1):
        gens = run.generators[r - 1]
        shrinks = (1.0 - d[r - 1], 1.0 - d[r - 1] - delta[r],
                   1.0 - d[r - 1] - 2.0 * delta[r])
        for stage in range(3):
            g = gens[stage]
            if not g.series:
                continue
            measured = (log2_C - 2.0 * math.log2(delta[r])
                        + log2_weighted_norm(g.series,
                                             params.scaled(shrinks[stage])))
            if push(f"chi{stage}", r, measured, r * log2_A):
                violations += 1

        state = run.states[r]
        for (ell, s), f in sorted(state.terms.items()):
            measured = log2_weighted_norm(f, params.scaled(1.0 - d[r]))
            if push(f"f({ell},{s})", r, measured,
                    log2_E - ell + s * log2_A):
                violations += 1

        rep = run.reports[r - 1]
        w = float(np.max(np.abs(rep.shift_omega_coeff)))
        if w > 0 and push("omega-shift", r, math.log2(w),
                          math.log2(gamma * params.sigma) + r * log2_A):
            violations += 1
        W = float(np.max(np.abs(rep.shift_Omega_coeff)))
        if W > 0 and push("Omega-shift", r, math.log2(W),
                          math.log2(gamma) + r * log2_A):
            violations += 1

    return {"violations": violations, "checked": len(rows), "rows": rows}


def convergence_summary(run, est, eps_values):
    """Per-step Hamiltonian differences against the Cauchy-sequence bound.

    For each epsilon the measured log2 of |H^(r) - H^(r-1)| at the 3/4
    domain is compared with log2 of
    (n1 gamma sigma rho + n2 gamma R^2 + 4 Ebar/(1 - eps calA)) (eps calA)^r
    whenever eps calA < 1, and the geometric decay exponent is fitted.
    """
    params34 = run.params.scaled(0.75)
    gamma = run.gamma
    rho, sigma, R = run.params.rho, run.params.sigma, run.params.R
    out = {"eps": {}, "r_max": run.r_max}
    diff_norm_logs = _state_diff_logs(run, params34)
    for eps in eps_values:
        log2_eps = math.log2(eps) if eps > 0 else -math.inf
        rows = []
        for r in range(1, run.r_max + 1):
            parts = []
            rep = run.reports[r - 1]
            for i in range(run.states[0].n1):
                c = abs(rep.shift_omega_coeff[i]) * 0.75 * rho
                if c > 0:
                    parts.append(math.log2(c) + r * log2_eps)
            for j in range(run.states[0].n2):
                c = abs(rep.shift_Omega_coeff[j]) * (0.75 * R) ** 2
                if c > 0:
                    parts.append(math.log2(c) + r * log2_eps)
            parts.extend(lg + s * log2_eps for s, lg in diff_norm_logs[r])
            measured = _log2_sum(parts)
            bound_ok = eps > 0 and math.isfinite(est.calA) \
                and eps * est.calA < 1.0
            if bound_ok:
                pref = (run.states[0].n1 * gamma * sigma * rho
                        + run.states[0].n2 * gamma * R ** 2
                        + 4.0 * est.Ebar / (1.0 - eps * est.calA))
                bound = math.log2(pref) + r * (log2_eps + est.log2_calA)
            else:
                bound = math.inf
            rows.append({"r": r, "measured_log2": measured,
                         "bound_log2": bound,
                         "ok": not _exceeds(measured, bound)})
        finite = [(row["r"], row["measured_log2"]) for row in rows
                  if math.isfinite(row["measured_log2"])]
        slope = _fit_slope(finite) if len(finite) >= 2 else None
        out["eps"][repr(eps)] = {"rows": rows, "decay_log2_per_step": slope}
    return out


def _state_diff_logs(run, params34):
    """log2 norms of f^(r,s) - f^(r-1,s) at 3/4, cached per step."""
    by_r = {}
    for r in range(1, run.r_max + 1):
        prev, cur = run.states[r - 1], run.states[r]
        slots = set(prev.terms) | set(cur.terms)
        entries = []
        for (ell, s) in sorted(slots):
            a, b = cur.term(ell, s), prev.term(ell, s)
            diff = (a - b) if (a is not None and b is not None) else (a or b)
            lg = log2_weighted_norm(diff, params34)
            if lg > -math.inf:
                entries.append((s, lg))
        by_r[r] = entries
    return by_r


def _log2_sum(logs):
    logs = [x for x in logs if x > -math.inf]
    if not logs:
        return -math.inf
    top = max(logs)
    return top + math.log2(sum(2.0 ** (x - top) for x in logs))


def _fit_slope(points):
    xs = np.array([p[0] for p in points], float)
    ys = np.array([p[1] for p in points], float)
    return float(np.polyfit(xs, ys, 1)[0])
