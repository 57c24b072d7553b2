"""The three-stage normalization step and the induced coordinate maps.

Step r removes the order-r perturbations of class 0, 1 and 2 through three
generating functions solved from homological equations, then absorbs the
surviving average of the class-2 term into the frequencies.  Each term of
the transformed Hamiltonian carries a divisor ledger built by the
union/heaviest-candidate calculus; the recursion is organized so that the
finite table up to the order budget is exact (classes never grow under the
brackets used here, orders only increase).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimates import delta_sequence, restriction_sequence
from .ledger import IndexList, pick_heaviest, union_power
from .model import HamiltonianState, ingest, iter_harmonics
from .series import (Caps, PoissonSeries, average_q, differentiate,
                     lie_derivative, weighted_norm)


class ZeroDivisor(RuntimeError):
    """A homological divisor fell under the hard floor: resonance."""

    def __init__(self, k, ell, value):
        self.k, self.ell, self.value = k, ell, value
        super().__init__(f"divisor {value:.3e} at k={k}, ell={ell}")


@dataclass
class GeneratingFunction:
    stage: int
    series: PoissonSeries
    step: int
    divisor_min: float
    ledger: IndexList


@dataclass
class StepReport:
    r: int
    chi_norms: dict = field(default_factory=dict)
    residual_rel: dict = field(default_factory=dict)
    divisor_min: dict = field(default_factory=dict)
    ledgers: dict = field(default_factory=dict)
    shift_omega_coeff: np.ndarray | None = None
    shift_Omega_coeff: np.ndarray | None = None
    shift_omega: np.ndarray | None = None
    shift_Omega: np.ndarray | None = None
    energy_increment: complex = 0.0
    worst_divisor: float = 0.0
    nonresonant: bool = True

    def to_dict(self):
        return {
            "r": self.r,
            "chi_norms": {str(k): v for k, v in self.chi_norms.items()},
            "residual_rel": {str(k): v for k, v in self.residual_rel.items()},
            "divisor_min": {str(k): v for k, v in self.divisor_min.items()},
            "ledgers": {str(k): list(v.entries)
                        for k, v in self.ledgers.items()},
            "shift_omega_coeff": _veclist(self.shift_omega_coeff),
            "shift_Omega_coeff": _veclist(self.shift_Omega_coeff),
            "shift_omega": _veclist(self.shift_omega),
            "shift_Omega": _veclist(self.shift_Omega),
            "energy_increment": [self.energy_increment.real,
                                 self.energy_increment.imag],
            "worst_divisor": self.worst_divisor,
            "nonresonant": self.nonresonant,
        }


def _veclist(v):
    return None if v is None else [float(x) for x in v]


# -- non-resonance -----------------------------------------------------------

def check_nonresonance(omega, Omega, r, gamma, tau, K):
    """Exact lattice minima of the step-r divisors.

    Returns (ok, worst, pair): the minimum of |k.omega + ell.Omega| over
    0 < |k| <= rK, |ell| <= 2 tested against gamma/(rK)^tau, and the purely
    transverse minimum over 0 < |ell| <= 2 tested against gamma.
    """
    omega = np.asarray(omega, float)
    Omega = np.asarray(Omega, float)
    order = r * K
    worst = math.inf
    pair = None
    for k in iter_harmonics(len(omega), order):
        base = float(np.dot(k, omega))
        for ell in _ells_with_zero(len(Omega)):
            d = abs(base + float(np.dot(ell, Omega)))
            if d < worst:
                worst, pair = d, (k, ell)
    trans = math.inf
    for ell in iter_harmonics(len(Omega), 2):
        trans = min(trans, abs(float(np.dot(ell, Omega))))
    ok = worst >= gamma / order ** tau and trans >= gamma
    return ok, worst, pair, trans


def _ells_with_zero(n2):
    yield (0,) * n2
    yield from iter_harmonics(n2, 2)


# -- homological solves -------------------------------------------------------

def _kernel_eigenvalue(key, n1, n2, omega, Omega):
    """Eigenvalue of g -> {g, omega.p + Omega z conj(z)} on a monomial.

    With the bracket orientation used by this package the eigenvalue is
    i*(k.omega - (l - lbar).Omega); its magnitude ranges over the same set
    of small divisors as the familiar k.omega + ell.Omega since k runs over
    a symmetric lattice.
    """
    k = key[-n1:]
    l = key[n1:n1 + n2]
    lb = key[n1 + n2:n1 + 2 * n2]
    val = sum(ki * wi for ki, wi in zip(k, omega))
    val -= sum((li - lbi) * Oi for li, lbi, Oi in zip(l, lb, Omega))
    return 1j * val


def _solve_homological(source, state, keep_predicate, r, gamma, tau, mode):
    """Divide the non-kept part of ``source`` by the kernel eigenvalues.

    Returns (chi, kept_part, divisor_min).  ``keep_predicate`` selects the
    monomials that stay in the Hamiltonian (averages, normal-form terms).
    Divisors under the hard resonance floor raise ZeroDivisor; in strict
    mode the Diophantine floor gamma/(rK)^tau is enforced as well.
    """
    n1, n2 = state.n1, state.n2
    omega, Omega = state.omega, state.Omega
    hard_floor = 1e-12 * max(np.max(np.abs(omega)), np.max(np.abs(Omega)))
    strict_floor = gamma / (r * state.K) ** tau
    chi_terms = {}
    kept = {}
    divisor_min = math.inf
    for key, c in source.terms.items():
        if keep_predicate(key):
            kept[key] = c
            continue
        eig = _kernel_eigenvalue(key, n1, n2, omega, Omega)
        mag = abs(eig)
        k = key[-n1:]
        lpart = tuple(a - b for a, b in
                      zip(key[n1:n1 + n2], key[n1 + n2:n1 + 2 * n2]))
        if mag < hard_floor:
            raise ZeroDivisor(k, lpart, mag)
        if mode == "strict" and mag < strict_floor:
            raise ZeroDivisor(k, lpart, mag)
        divisor_min = min(divisor_min, mag)
        chi_terms[key] = -c / eig
    chi = PoissonSeries(n1, n2, chi_terms, trig_cutoff=r * state.K)
    kept_series = source.copy_with(terms=kept)
    return chi, kept_series, divisor_min


def _is_average(key, n1):
    return all(v == 0 for v in key[-n1:])


def _is_normal_form_key(key, n1, n2):
    """k = 0 and (single p factor or diagonal z*w pair)."""
    if not _is_average(key, n1):
        return False
    m = key[:n1]
    l = key[n1:n1 + n2]
    lb = key[n1 + n2:n1 + 2 * n2]
    if sum(l) == 0 and sum(lb) == 0:
        return sum(m) == 1
    return sum(m) == 0 and l == lb and sum(l) == 1


def solve_chi0(state, gamma, tau, mode="exploratory"):
    """First-stage generator removing the class-0 order-r term.

    The angle average is returned separately: it is an additive constant
    routed to the energy offset.
    """
    r = state.r + 1
    source = state.term(0, r)
    n1 = state.n1
    if source is None or not source:
        empty = PoissonSeries.zero(state.n1, state.n2)
        return (GeneratingFunction(0, empty, r, math.inf,
                                   IndexList((r,))), 0j, empty)
    chi, kept, dmin = _solve_homological(
        source, state, lambda key: _is_average(key, n1), r, gamma, tau, mode)
    avg = complex(sum(kept.terms.values())) if kept else 0j
    chi = chi.copy_with(ledger=source.ledger.with_entry(r))
    residual = lie_derivative(chi, state.kernel_series()) + source \
        - PoissonSeries(state.n1, state.n2,
                        {(0,) * (2 * (state.n1 + state.n2)): avg}
                        if avg != 0j else {})
    return (GeneratingFunction(0, chi, r, dmin, chi.ledger), avg, residual)


def solve_chi1(state, gamma, tau, mode="exploratory"):
    """Second-stage generator removing the class-1 order-r term."""
    r = state.r + 1
    source = state.term(1, r)
    if source is None or not source:
        empty = PoissonSeries.zero(state.n1, state.n2)
        return (GeneratingFunction(1, empty, r, math.inf,
                                   IndexList((r,))), empty)
    chi, kept, dmin = _solve_homological(
        source, state, lambda key: False, r, gamma, tau, mode)
    # class-1 terms have no k = 0, l = lbar monomials: nothing is kept
    assert not kept
    chi = chi.copy_with(ledger=source.ledger.with_entry(r))
    residual = lie_derivative(chi, state.kernel_series()) + source
    return (GeneratingFunction(1, chi, r, dmin, chi.ledger), residual)


def solve_chi2(state, gamma, tau, mode="exploratory"):
    """Third-stage generator; returns (chi, Z, residual).

    Z collects the k = 0 monomials proportional to p_j or z_j w_j: the part
    that cannot be removed and is recollected in the frequencies.
    """
    r = state.r + 1
    source = state.term(2, r)
    n1, n2 = state.n1, state.n2
    if source is None or not source:
        empty = PoissonSeries.zero(n1, n2)
        return (GeneratingFunction(2, empty, r, math.inf,
                                   IndexList((r,))), empty, empty)
    chi, Z, dmin = _solve_homological(
        source, state, lambda key: _is_normal_form_key(key, n1, n2),
        r, gamma, tau, mode)
    chi = chi.copy_with(ledger=source.ledger.with_entry(r))
    Z = Z.copy_with(ledger=source.ledger)
    residual = lie_derivative(chi, state.kernel_series()) + source - Z
    return (GeneratingFunction(2, chi, r, dmin, chi.ledger), Z, residual)


# -- stage application ---------------------------------------------------------

def _push_table(terms, chi, r, s_max, caps, tau, gen_ledger, K,
                extra_chains=()):
    """Push every table entry through the truncated Lie exponential.

    Each source f at (ell, s) contributes (1/j!) L_chi^j f to the slot
    (ell + j*(class(chi) - 2), s + j*r) until the order budget is exceeded.
    ``extra_chains`` carries the kernel-derived chains as additional
    sources: tuples (slot, seed, sign, base_fact) entering with coefficient
    sign/(base_fact + i)! at chain depth i.  The ledger of a slot is the
    heaviest candidate among its summands.
    """
    delta = _class_shift(chi)
    n1, n2 = chi.n1, chi.n2
    buckets = {}
    cands = {}

    def contribute(target, series_terms, coeff, led):
        bucket = buckets.setdefault(target, {})
        for key, c in series_terms.items():
            cur = bucket.get(key, 0j) + coeff * c
            if cur == 0j:
                bucket.pop(key, None)
            else:
                bucket[key] = cur
        cands.setdefault(target, []).append(led)

    for (ell, s), f in sorted(terms.items()):
        power = f
        fact = 1.0
        j = 0
        while True:
            slot = (ell + (delta - 2) * j, s + j * r)
            if slot[1] > s_max or slot[0] < 0:
                break
            contribute(slot, power.terms, 1.0 / fact,
                       union_power(gen_ledger, j).union(f.ledger))
            j += 1
            fact *= j
            power = lie_derivative(chi, power, caps)
            if not power:
                break

    for (ell, s), seed, sign, base_fact in extra_chains:
        power = seed
        fact = math.factorial(base_fact)
        i = 0
        while True:
            slot = (ell + (delta - 2) * i, s + i * r)
            if slot[1] > s_max or slot[0] < 0:
                break
            contribute(slot, power.terms, sign / fact,
                       union_power(gen_ledger, i).union(seed.ledger))
            i += 1
            fact *= base_fact + i
            power = lie_derivative(chi, power, caps)
            if not power:
                break

    out = {}
    for slot, bucket in buckets.items():
        led = pick_heaviest(cands[slot], tau)
        cutoff = slot[1] * K
        if caps is not None:
            cutoff = min(cutoff, caps.k_max)
        g = PoissonSeries(n1, n2, {k: c for k, c in bucket.items() if c != 0j},
                          trig_cutoff=cutoff, ledger=led)
        if g:
            out[slot] = g
    return out, cands


def _class_shift(chi):
    from .series import class_of
    tag = class_of(chi)
    if tag == "mixed":
        raise ValueError("generating function must be class-homogeneous")
    return tag.ell


def apply_stage1(state, gen, gamma=None, caps=None, s_max=None, tau=0.0):
    """Transform by the first-stage generator per the order-r recursion.

    The class-0 order-r slot is zeroed exactly (its content is the solved
    homological identity) and its average is the caller's energy constant.
    """
    r = gen.step
    s_max = s_max if s_max is not None else _default_smax(state)
    chi = gen.series
    if not chi:
        new_terms = dict(state.terms)
        new_terms.pop((0, r), None)
        out = state.copy()
        out.terms = new_terms
        return out
    table, _ = _push_table(state.terms, chi, r, s_max, caps, tau,
                           gen.ledger, state.K)
    # homological cancellation: the chain of the kernel stops at one bracket
    # and exactly removes the (0, r) slot up to its average
    table.pop((0, r), None)
    out = state.copy()
    out.terms = table
    return out


def apply_stage2(state_I, gen, caps=None, s_max=None, tau=0.0):
    """Transform by the second-stage generator.

    The kernel chain contributes -1/2 L_chi1 f1 at (0, 2r); combined with
    the table push this yields the +1/2 L_chi1 f1 correction, and the
    (1, r) slot cancels exactly.
    """
    r = gen.step
    s_max = s_max if s_max is not None else _default_smax(state_I)
    chi = gen.series
    if not chi:
        return state_I.copy()
    f1 = state_I.term(1, r)
    chains = []
    if f1 is not None and f1:
        # kernel chain: (1/j!) L^j kernel = -(1/j!) L^(j-1) f1 for j >= 2,
        # seeded as L f1 at (0, 2r) with coefficient -1/(i+2)! at depth i
        seed = lie_derivative(chi, f1, caps)
        if seed:
            chains.append(((0, 2 * r), seed, -1.0, 2))
    table, _ = _push_table(state_I.terms, chi, r, s_max, caps, tau,
                           gen.ledger, state_I.K, extra_chains=chains)
    table.pop((1, r), None)
    out = state_I.copy()
    out.terms = table
    return out


def apply_stage3(state_II, gen, Z, caps=None, s_max=None, tau=0.0):
    """Transform by the third-stage generator and shift the frequencies.

    The kernel chain (1/j!) L^(j-1) (Z - f2) lands in the class-2 slots at
    every multiple of r; at (2, r) it leaves exactly Z, which is removed
    and recollected in the frequencies:

        omega_j   += eps^r * (coefficient of p_j in Z)
        Omega_j   += eps^r * i * (coefficient of z_j w_j in Z)

    Returns (new_state, shift_omega_coeff, shift_Omega_coeff).
    """
    r = gen.step
    s_max = s_max if s_max is not None else _default_smax(state_II)
    chi = gen.series
    n1, n2 = state_II.n1, state_II.n2
    f2 = state_II.term(2, r)
    chains = []
    if chi and f2 is not None and f2:
        # kernel chain: (1/j!) L^j kernel = (1/j!) L^(j-1) (Z - f2), seeded
        # at (2, r) with coefficient 1/(i+1)! at depth i
        seed = (Z - f2).copy_with(ledger=f2.ledger)
        if seed:
            chains.append(((2, r), seed, 1.0, 1))
    if chi:
        table, _ = _push_table(state_II.terms, chi, r, s_max, caps, tau,
                               gen.ledger, state_II.K, extra_chains=chains)
    else:
        table = dict(state_II.terms)
    table.pop((2, r), None)

    c_omega = np.zeros(n1)
    c_Omega = np.zeros(n2)
    imag_leak = 0.0
    for key, c in Z.terms.items():
        m = key[:n1]
        if sum(m) == 1:
            j = m.index(1)
            c_omega[j] += c.real
            imag_leak = max(imag_leak, abs(c.imag))
        else:
            j = key[n1:n1 + n2].index(1)
            shift = 1j * c
            c_Omega[j] += shift.real
            imag_leak = max(imag_leak, abs(shift.imag))

    out = state_II.copy()
    out.terms = table
    eps_r = state_II.epsilon ** r
    out.omega = state_II.omega + eps_r * c_omega
    out.Omega = state_II.Omega + eps_r * c_Omega
    out.r = r
    return out, c_omega, c_Omega, imag_leak


def _default_smax(state):
    return max((s for (_, s) in state.terms), default=0)


# -- full step ------------------------------------------------------------------

def normalization_step(state, gamma, tau, mode="exploratory", caps=None,
                       s_max=None, params=None):
    """One full order: three homological solves, three transforms.

    Returns (new_state, report, generators).  Residual norms are recorded
    relative to their sources; the normal-form slots of the new state are
    exactly empty.
    """
    r = state.r + 1
    s_max = s_max if s_max is not None else _default_smax(state)
    if caps is None:
        deg_max = max((ell for (ell, _) in state.terms), default=2)
        caps = Caps(deg_max=max(deg_max, 2), k_max=s_max * state.K)
    report = StepReport(r=r)

    ok, worst, pair, trans = check_nonresonance(
        state.omega, state.Omega, r, gamma, tau, state.K)
    report.worst_divisor = worst
    report.nonresonant = ok
    if mode == "strict" and not ok:
        raise ZeroDivisor(pair[0], pair[1], worst)

    dvals = delta_sequence(r)
    d_prev = restriction_sequence(r - 1)[-1]
    delta_r = dvals[-1]

    gen0, avg, res0 = solve_chi0(state, gamma, tau, mode)
    src0 = state.term(0, r)
    report.residual_rel[0] = _relative_residual(res0, src0, params)
    report.divisor_min[0] = gen0.divisor_min
    report.ledgers["chi0"] = gen0.ledger
    report.energy_increment = avg
    state_I = apply_stage1(state, gen0, caps=caps, s_max=s_max, tau=tau)
    state_I.energy_offset = state.energy_offset + avg

    gen1, res1 = solve_chi1(state_I, gamma, tau, mode)
    src1 = state_I.term(1, r)
    report.residual_rel[1] = _relative_residual(res1, src1, params)
    report.divisor_min[1] = gen1.divisor_min
    report.ledgers["chi1"] = gen1.ledger
    state_II = apply_stage2(state_I, gen1, caps=caps, s_max=s_max, tau=tau)

    gen2, Z, res2 = solve_chi2(state_II, gamma, tau, mode)
    src2 = state_II.term(2, r)
    report.residual_rel[2] = _relative_residual(res2, src2, params)
    report.divisor_min[2] = gen2.divisor_min
    report.ledgers["chi2"] = gen2.ledger
    new_state, c_om, c_Om, leak = apply_stage3(
        state_II, gen2, Z, caps=caps, s_max=s_max, tau=tau)
    report.shift_omega_coeff = c_om
    report.shift_Omega_coeff = c_Om
    report.shift_omega = new_state.omega - state.omega
    report.shift_Omega = new_state.Omega - state.Omega

    if params is not None:
        report.chi_norms[0] = weighted_norm(
            gen0.series, params.scaled(1.0 - d_prev))
        report.chi_norms[1] = weighted_norm(
            gen1.series, params.scaled(1.0 - d_prev - delta_r))
        report.chi_norms[2] = weighted_norm(
            gen2.series, params.scaled(1.0 - d_prev - 2 * delta_r))
    return new_state, report, (gen0, gen1, gen2)


def _relative_residual(residual, source, params):
    if source is None or not source:
        return 0.0
    if params is not None:
        s = weighted_norm(source, params)
        return weighted_norm(residual, params) / s if s else 0.0
    s = source.max_coeff()
    return residual.max_coeff() / s if s else 0.0


@dataclass
class RunData:
    """Everything produced by a normalization run at one frequency point."""

    spec: object
    params: object
    gamma: float
    tau: float
    K: int
    epsilon: float
    r_max: int
    s_max: int
    mode: str
    states: list = field(default_factory=list)
    generators: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    Ebar: float = 0.0
    aborted_at: int | None = None
    abort_info: dict | None = None

    @property
    def final_state(self):
        return self.states[-1]

    def all_generators(self):
        return [g for triple in self.generators for g in triple]

    def ledger_records(self):
        """Flat ledger records of the final tables and the generators."""
        records = []
        for r, state in enumerate(self.states):
            for (ell, s), f in sorted(state.terms.items()):
                records.append({"kind": "ham", "r": r, "s": s, "ell": ell,
                                "id": f"f({ell},{s})@{r}", "list": f.ledger})
        for triple in self.generators:
            for g in triple:
                records.append({"kind": "gen", "r": g.step, "stage": g.stage,
                                "ell": g.stage, "id": f"chi{g.stage}@{g.step}",
                                "list": g.ledger})
        return records


def normalize_model(spec, params, gamma, tau, K, epsilon, r_max,
                    s_max=None, mode="exploratory", caps=None):
    """Ingest a model and run the normalization to the requested order.

    Returns a RunData; a resonance abort in strict mode is recorded in
    ``aborted_at`` with the offending divisor rather than raised, so grid
    sweeps can carry on.
    """
    s_max = s_max if s_max is not None else 2 * r_max
    state0 = ingest(spec, params, K, epsilon,
                    caps=Caps(deg_max=64, k_max=s_max * K))
    deg_max = max((ell for (ell, _) in state0.terms), default=2)
    if caps is None:
        caps = Caps(deg_max=max(deg_max, 2), k_max=s_max * K)
    run = RunData(spec=spec, params=params, gamma=gamma, tau=tau, K=K,
                  epsilon=epsilon, r_max=r_max, s_max=s_max, mode=mode)
    run.states.append(state0)
    run.Ebar = max((2.0 ** ell * weighted_norm(f, params)
                    for (ell, _), f in state0.terms.items()), default=1.0)
    state = state0
    for r in range(1, r_max + 1):
        try:
            state, report, gens = normalization_step(
                state, gamma, tau, mode=mode, caps=caps, s_max=s_max,
                params=params)
        except ZeroDivisor as exc:
            run.aborted_at = r
            run.abort_info = {"k": list(exc.k), "ell": list(exc.ell),
                              "value": exc.value}
            run.r_max = r - 1
            break
        run.states.append(state)
        run.reports.append(report)
        run.generators.append(gens)
    return run


# -- monolithic oracle ------------------------------------------------------------

def monolithic_transform(state, chi, r, s_max, caps=None):
    """Blunt graded Lie transform of kernel + table by one generator.

    No case tables: the kernel enters as a class-2 order-0 source and
    everything is pushed through the truncated exponential.  Used as the
    independent oracle for the stagewise recursions.
    """
    sources = dict(state.terms)
    out = {}
    delta = _class_shift(chi) if chi else 2

    def add(slot, series, coeff):
        bucket = out.setdefault(slot, {})
        for key, c in series.terms.items():
            bucket[key] = bucket.get(key, 0j) + coeff * c

    kernel = state.kernel_series()
    chain = [((2, 0), kernel)] + [(slot, f) for slot, f in sorted(sources.items())]
    for (ell, s), f in chain:
        power = f
        fact = 1.0
        j = 0
        while True:
            slot = (ell + (delta - 2) * j, s + j * r)
            if slot[1] > s_max or slot[0] < 0:
                break
            add(slot, power, 1.0 / fact)
            j += 1
            fact *= j
            if not chi:
                break
            power = lie_derivative(chi, power, caps)
            if not power:
                break
    result = {}
    for slot, bucket in out.items():
        g = PoissonSeries(state.n1, state.n2,
                          {k: c for k, c in bucket.items() if c != 0j})
        if g:
            result[slot] = g
    return result


# -- point transforms ----------------------------------------------------------

def _coordinate_deformations(chi, scale, j_max, caps, n1, n2):
    """Deformation series of all coordinate functions under exp(scale L)."""
    base = []
    for j in range(n1):
        base.append(("p", j, differentiate(chi, "q", j)))
    for j in range(n1):
        base.append(("q", j, -1.0 * differentiate(chi, "p", j)))
    for j in range(n2):
        base.append(("z", j, -1.0 * differentiate(chi, "w", j)))
    for j in range(n2):
        base.append(("w", j, differentiate(chi, "z", j)))
    out = []
    for slot, j, first in base:
        total = PoissonSeries.zero(n1, n2)
        power = first
        fact = 1.0
        for i in range(1, j_max + 1):
            if not power:
                break
            total = total + (complex(scale) ** i / fact / i) * power
            fact *= i
            power = lie_derivative(chi, power, caps)
        out.append((slot, j, total))
    return out


def _apply_exponential(chi, scale, point, j_max, caps):
    """One Lie exponential applied to a phase point (p, q, z, w)."""
    from .series import evaluate
    p, q, z, w = point
    n1, n2 = len(p), len(z)
    defs = _coordinate_deformations(chi, scale, j_max, caps, n1, n2)
    p2, q2 = np.array(p, complex), np.array(q, complex)
    z2, w2 = np.array(z, complex), np.array(w, complex)
    for slot, j, series in defs:
        if not series:
            continue
        val = evaluate(series, p, np.real(q), z, w)
        if slot == "p":
            p2[..., j] += val
        elif slot == "q":
            q2[..., j] += val
        elif slot == "z":
            z2[..., j] += val
        else:
            w2[..., j] += val
    return p2, q2, z2, w2


def transform_point(generators, point, epsilon, direction="forward",
                    j_max=12, caps=None):
    """Composed near-identity change of coordinates on a phase point.

    ``point`` is (p, q, x, y) in real variables.  "forward" maps
    normalized coordinates to the original ones (the map whose pullback
    puts the Hamiltonian in normal form); "backward" applies the inverse:
    reversed order, negated generators.
    """
    p, q, x, y = (np.asarray(v, float) for v in point)
    z = (x + 1j * y) / math.sqrt(2.0)
    w = 1j * np.conj(z)
    state = (p.astype(complex), q.astype(complex), z, w)

    steps = {}
    for gen in generators:
        steps.setdefault(gen.step, {})[gen.stage] = gen
    order = sorted(steps)
    if direction == "forward":
        plan = [(r, stage, 1.0) for r in reversed(order)
                for stage in (2, 1, 0)]
    elif direction == "backward":
        plan = [(r, stage, -1.0) for r in order for stage in (0, 1, 2)]
    else:
        raise ValueError("direction must be forward or backward")

    for r, stage, sign in plan:
        gen = steps[r].get(stage)
        if gen is None or not gen.series:
            continue
        scale = sign * epsilon ** r
        state = _apply_exponential(gen.series, scale, state, j_max, caps)

    p2, q2, z2, w2 = state
    x2 = (z2 - 1j * w2) / math.sqrt(2.0)
    y2 = (-1j * z2 + w2) / math.sqrt(2.0)
    return (np.real(p2), np.real(q2), np.real(x2), np.real(y2))


def deformation_norms(gen, epsilon, params, d_prev, delta_r, caps=None,
                      j_max=12):
    """Weighted norms of the per-stage coordinate deformations.

    Measures |exp(eps^r L) x_i - x_i| at the shrunk domain matching the
    stage, for comparison against the delta_r*(rho, sigma, R) budget.
    """
    chi = gen.series
    n1, n2 = chi.n1, chi.n2
    r = gen.step
    stage = gen.stage
    if stage == 0:
        shrink = 0.75 - d_prev - delta_r
    elif stage == 1:
        shrink = 0.75 - d_prev - 2 * delta_r
    else:
        shrink = 0.75 - d_prev - 3 * delta_r
    pset = params.scaled(shrink)
    out = {}
    for slot, j, series in _coordinate_deformations(
            chi, epsilon ** r, j_max, caps, n1, n2):
        key = f"{slot}{j + 1}"
        out[key] = weighted_norm(series, pset)
    out["domain_shrink"] = shrink
    return out
