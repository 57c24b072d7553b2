"""Sparse truncated Taylor-Fourier series and their Poisson algebra.

A series lives in ``n1`` action-angle pairs ``(p, q)`` and ``n2`` conjugate
pairs ``(z, w)`` with ``w = i*conj(z)`` on real trajectories.  A monomial is

    c * p^m * z^l * w^lbar * exp(i k.q)

and is stored under the flat integer key ``m + l + lbar + k`` (tuple
concatenation).  The class index of a monomial is ``2|m| + |l| + |lbar|``
and its trigonometric degree is ``|k|`` (l1 norm).  Series are immutable
values: every operation returns a fresh object.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .ledger import IndexList

# Relative magnitude below which coefficients are dropped after binary
# operations.  Tight enough to only remove algebraic-cancellation residue.
PRUNE_REL = 1e-300


@dataclass(frozen=True)
class ClassTag:
    """Homogeneity tag: common class index and trigonometric budget."""

    ell: int
    sK: int


@dataclass(frozen=True)
class NormParameters:
    """Analyticity-domain radii for the weighted Fourier norm."""

    rho: float
    sigma: float
    R: float
    shrink: float = 1.0

    def __post_init__(self):
        if min(self.rho, self.sigma, self.R) <= 0 or not 0 < self.shrink <= 1:
            raise ValueError("norm radii must be positive, shrink in (0,1]")

    def scaled(self, factor):
        """Radii multiplied by ``factor`` (domain restriction)."""
        return NormParameters(self.rho * factor, self.sigma * factor,
                              self.R * factor, self.shrink)

    @property
    def effective(self):
        return (self.rho * self.shrink, self.sigma * self.shrink,
                self.R * self.shrink)


@dataclass(frozen=True)
class Caps:
    """Global truncation budget: polynomial degree and harmonic order."""

    deg_max: int
    k_max: int


class DimensionMismatch(ValueError):
    pass


def _key_deg(key, n1, n2):
    return 2 * sum(key[:n1]) + sum(key[n1:n1 + 2 * n2])


def _key_trig(key, n1):
    return sum(abs(v) for v in key[-n1:])


def canonical_sort_key(key, n1, n2):
    """Deterministic ordering: (deg, |k|, m, l, lbar, k)."""
    return (_key_deg(key, n1, n2), _key_trig(key, n1)) + key


class PoissonSeries:
    """Sparse complex-coefficient series over (p, q, z, w)."""

    __slots__ = ("n1", "n2", "terms", "trig_cutoff", "ledger",
                 "_eval_cache", "_pk_cache")

    def __init__(self, n1, n2, terms=None, trig_cutoff=0, ledger=None):
        self.n1 = n1
        self.n2 = n2
        self.terms = dict(terms) if terms else {}
        cutoff = int(trig_cutoff)
        for key in self.terms:
            cutoff = max(cutoff, _key_trig(key, n1))
        self.trig_cutoff = cutoff
        self.ledger = ledger if ledger is not None else IndexList()
        self._eval_cache = None
        self._pk_cache = None

    # -- constructors ----------------------------------------------------

    @classmethod
    def zero(cls, n1, n2):
        return cls(n1, n2)

    @classmethod
    def monomial(cls, n1, n2, coeff, m=None, l=None, lbar=None, k=None):
        m = tuple(m) if m is not None else (0,) * n1
        l = tuple(l) if l is not None else (0,) * n2
        lbar = tuple(lbar) if lbar is not None else (0,) * n2
        k = tuple(k) if k is not None else (0,) * n1
        if len(m) != n1 or len(k) != n1 or len(l) != n2 or len(lbar) != n2:
            raise DimensionMismatch("exponent vectors do not match (n1, n2)")
        if any(v < 0 for v in m + l + lbar):
            raise ValueError("polynomial exponents must be nonnegative")
        key = m + l + lbar + k
        return cls(n1, n2, {key: complex(coeff)})

    def copy_with(self, terms=None, ledger=None, trig_cutoff=None):
        out = PoissonSeries.__new__(PoissonSeries)
        out.n1, out.n2 = self.n1, self.n2
        out.terms = terms if terms is not None else dict(self.terms)
        out.trig_cutoff = (trig_cutoff if trig_cutoff is not None
                           else self.trig_cutoff)
        out.ledger = ledger if ledger is not None else self.ledger
        out._eval_cache = None
        out._pk_cache = None
        return out

    # -- basic protocol ---------------------------------------------------

    def __len__(self):
        return len(self.terms)

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        return (f"PoissonSeries(n1={self.n1}, n2={self.n2}, "
                f"{len(self.terms)} terms, |k|<={self.trig_cutoff})")

    def _check_dims(self, other):
        if self.n1 != other.n1 or self.n2 != other.n2:
            raise DimensionMismatch(
                f"({self.n1},{self.n2}) vs ({other.n1},{other.n2})")

    def __add__(self, other):
        if not isinstance(other, PoissonSeries):
            return NotImplemented
        self._check_dims(other)
        terms = dict(self.terms)
        for key, c in other.terms.items():
            acc = terms.get(key, 0j) + c
            if acc == 0j:
                terms.pop(key, None)
            else:
                terms[key] = acc
        out = self.copy_with(terms=_pruned(terms),
                             ledger=self.ledger.union(other.ledger),
                             trig_cutoff=max(self.trig_cutoff,
                                             other.trig_cutoff))
        return out

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        if isinstance(scalar, PoissonSeries):
            return series_product(self, scalar)
        c = complex(scalar)
        if c == 0j:
            return PoissonSeries(self.n1, self.n2, ledger=self.ledger)
        return self.copy_with(
            terms={k: v * c for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    # -- structure --------------------------------------------------------

    def degree_of(self, key):
        return _key_deg(key, self.n1, self.n2)

    def trig_of(self, key):
        return _key_trig(key, self.n1)

    def max_coeff(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def sorted_keys(self):
        n1, n2 = self.n1, self.n2
        return sorted(self.terms, key=lambda key: canonical_sort_key(key, n1, n2))

    def conjugate_series(self):
        """Complex conjugate as a function of real (p, q) and z, w=i*conj(z).

        Maps the monomial (m, l, lbar, k) to (m, lbar, l, -k) with coefficient
        conj(c) * (-i)^(|l|+|lbar|).
        """
        n1, n2 = self.n1, self.n2
        terms = {}
        for key, c in self.terms.items():
            m = key[:n1]
            l = key[n1:n1 + n2]
            lb = key[n1 + n2:n1 + 2 * n2]
            k = key[-n1:]
            new = m + lb + l + tuple(-v for v in k)
            terms[new] = terms.get(new, 0j) + c.conjugate() * (-1j) ** (sum(l) + sum(lb))
        return self.copy_with(terms=_pruned(terms))


def _pruned(terms, rel=PRUNE_REL):
    if not terms:
        return terms
    floor = rel * max(abs(c) for c in terms.values())
    return {k: c for k, c in terms.items() if abs(c) > floor}


# -- packed-key fast kernel ---------------------------------------------------
#
# Keys are packed into a single signed 64-bit code with one bit field per
# exponent (harmonics biased to stay nonnegative).  Key addition is then a
# single integer addition and the bracket becomes chunked outer sums plus a
# bincount reduction, all inside numpy.  Dimensions whose fields do not fit
# in 63 bits fall back to the plain dict loops.

_POLY_BITS = 6          # per polynomial exponent, sums must stay < 2^6
_TRIG_BITS = 10         # per harmonic, biased by 2^8, |k| <= 255
_TRIG_BIAS = 1 << (_TRIG_BITS - 2)
_CHUNK = 1 << 21


class _Codec:
    def __init__(self, n1, n2):
        self.n1, self.n2 = n1, n2
        self.d = 2 * (n1 + n2)
        widths = [_POLY_BITS] * (n1 + 2 * n2) + [_TRIG_BITS] * n1
        self.fits = sum(widths) <= 63
        if not self.fits:
            return
        shifts = []
        pos = 0
        for wbits in widths:
            shifts.append(pos)
            pos += wbits
        self.shifts = np.array(shifts, dtype=np.int64)
        self.widths = np.array(widths, dtype=np.int64)
        self.masks = (np.int64(1) << self.widths) - 1
        bias_vec = np.zeros(self.d, dtype=np.int64)
        bias_vec[n1 + 2 * n2:] = _TRIG_BIAS
        self.bias_vec = bias_vec
        self.bias_code = int((bias_vec << self.shifts).sum())

    def encode(self, expo):
        """Pack an [T, d] exponent matrix into int64 codes."""
        shifted = (expo + self.bias_vec) << self.shifts
        return shifted.sum(axis=1)

    def decode(self, codes):
        """Unpack codes into an [T, d] exponent matrix."""
        cols = (codes[:, None] >> self.shifts) & self.masks
        return cols - self.bias_vec

    def in_range(self, expo):
        poly = expo[:, :self.n1 + 2 * self.n2]
        trig = expo[:, self.n1 + 2 * self.n2:]
        return (poly.max(initial=0) < (1 << (_POLY_BITS - 1))
                and np.abs(trig).max(initial=0) < _TRIG_BIAS)


_CODECS = {}


def _codec_for(n1, n2):
    key = (n1, n2)
    if key not in _CODECS:
        _CODECS[key] = _Codec(n1, n2)
    return _CODECS[key]


def _packed(series):
    """(codes, coeffs, expo) arrays for the fast kernel, cached."""
    cache = getattr(series, "_pk_cache", None)
    if cache is not None:
        return cache
    codec = _codec_for(series.n1, series.n2)
    keys = list(series.terms.keys())
    expo = np.array(keys, dtype=np.int64).reshape(len(keys), codec.d)
    coeffs = np.fromiter((series.terms[k] for k in keys), dtype=np.complex128,
                         count=len(keys))
    if not codec.in_range(expo):
        raise OverflowError("series exponents exceed the packed-key range")
    codes = codec.encode(expo)
    series._pk_cache = (codes, coeffs, expo)
    return codes, coeffs, expo


def _packed_diff(codec, codes, coeffs, expo, col, is_trig, n1):
    """Packed partial derivative along one column."""
    if is_trig:
        kvals = expo[:, col]
        sel = kvals != 0
        return codes[sel], coeffs[sel] * (1j * kvals[sel])
    evals = expo[:, col]
    sel = evals > 0
    return codes[sel] - (np.int64(1) << codec.shifts[col]), \
        coeffs[sel] * evals[sel]


def _outer_products(code_chunks, pairs, bias_code):
    """Accumulate sum-of-products of code/coeff pairs into flat arrays."""
    for ca, va, cb, vb, sign in pairs:
        if len(ca) == 0 or len(cb) == 0:
            continue
        step = max(1, _CHUNK // max(len(cb), 1))
        for lo in range(0, len(ca), step):
            hi = min(lo + step, len(ca))
            cc = (ca[lo:hi, None] + cb[None, :]).ravel() - bias_code
            vv = (va[lo:hi, None] * vb[None, :]).ravel()
            if sign < 0:
                vv = -vv
            code_chunks.append((cc, vv))


def _reduce_terms(codec, code_chunks, caps, n1, n2):
    """Unique-code reduction, cap filtering and pruning into a dict."""
    if not code_chunks:
        return {}
    codes = np.concatenate([c for c, _ in code_chunks])
    vals = np.concatenate([v for _, v in code_chunks])
    uniq, inverse = np.unique(codes, return_inverse=True)
    acc = np.bincount(inverse, weights=vals.real, minlength=len(uniq)) \
        + 1j * np.bincount(inverse, weights=vals.imag, minlength=len(uniq))
    keep = acc != 0
    uniq, acc = uniq[keep], acc[keep]
    if len(uniq) == 0:
        return {}
    expo = codec.decode(uniq)
    if caps is not None:
        deg = 2 * expo[:, :n1].sum(axis=1) \
            + expo[:, n1:n1 + 2 * n2].sum(axis=1)
        trig = np.abs(expo[:, n1 + 2 * n2:]).sum(axis=1)
        keep = (deg <= caps.deg_max) & (trig <= caps.k_max)
        uniq, acc, expo = uniq[keep], acc[keep], expo[keep]
    if len(acc) == 0:
        return {}
    floor = PRUNE_REL * np.abs(acc).max()
    keep = np.abs(acc) > floor
    expo, acc = expo[keep], acc[keep]
    return {tuple(int(v) for v in row): complex(c)
            for row, c in zip(expo, acc)}


def _accumulate(acc, key, coeff, n1, n2, caps):
    if caps is not None:
        if _key_deg(key, n1, n2) > caps.deg_max or _key_trig(key, n1) > caps.k_max:
            return
    cur = acc.get(key, 0j) + coeff
    if cur == 0j:
        acc.pop(key, None)
    else:
        acc[key] = cur


def series_product(f, g, caps=None):
    """Plain product of two series (used by model ingestion and tests)."""
    f._check_dims(g)
    acc = {}
    n1, n2 = f.n1, f.n2
    for kf, cf in f.terms.items():
        for kg, cg in g.terms.items():
            key = tuple(a + b for a, b in zip(kf, kg))
            _accumulate(acc, key, cf * cg, n1, n2, caps)
    return PoissonSeries(f.n1, f.n2, _pruned(acc),
                         trig_cutoff=f.trig_cutoff + g.trig_cutoff,
                         ledger=f.ledger.union(g.ledger))


# -- partial derivatives --------------------------------------------------

def _diff_terms(series, slot, j):
    """Term list of a partial derivative.

    slot: 'p', 'q', 'z' or 'w'.  Differentiation w.r.t. q_j multiplies by
    i*k_j; the polynomial slots lower the exponent.
    """
    n1, n2 = series.n1, series.n2
    out = []
    if slot == "q":
        pos = n1 + 2 * n2 + j
        for key, c in series.terms.items():
            kj = key[pos]
            if kj:
                out.append((key, 1j * kj * c))
        return out
    if slot == "p":
        pos = j
    elif slot == "z":
        pos = n1 + j
    elif slot == "w":
        pos = n1 + n2 + j
    else:
        raise ValueError(slot)
    for key, c in series.terms.items():
        e = key[pos]
        if e:
            lowered = key[:pos] + (e - 1,) + key[pos + 1:]
            out.append((lowered, e * c))
    return out


def differentiate(series, slot, j):
    """Partial derivative along p_j, q_j, z_j or w_j as a new series."""
    terms = {}
    for key, c in _diff_terms(series, slot, j):
        terms[key] = terms.get(key, 0j) + c
    return PoissonSeries(series.n1, series.n2, _pruned(terms),
                         ledger=series.ledger)


# -- Poisson bracket and Lie series ----------------------------------------

def poisson_bracket(f, g, caps=None):
    """Canonical bracket extended to the conjugate pair (z, w).

    {f, g} = sum_j (df/dq_j dg/dp_j - df/dp_j dg/dq_j)
           + sum_j (df/dz_j dg/dw_j - df/dw_j dg/dz_j)

    The output carries the union of the input ledgers and, when both inputs
    are class-homogeneous, lands in class ell+ell'-2 with trig budget summed.
    """
    f._check_dims(g)
    n1, n2 = f.n1, f.n2
    codec = _codec_for(n1, n2)
    if codec.fits and f.terms and g.terms:
        try:
            terms = _bracket_fast(codec, f, g, caps)
        except OverflowError:
            terms = _bracket_slow(f, g, caps)
    else:
        terms = _bracket_slow(f, g, caps)
    return PoissonSeries(n1, n2, terms,
                         trig_cutoff=f.trig_cutoff + g.trig_cutoff,
                         ledger=f.ledger.union(g.ledger))


def _bracket_fast(codec, f, g, caps):
    n1, n2 = f.n1, f.n2
    cf, vf, ef = _packed(f)
    cg, vg, eg = _packed(g)
    kcol = n1 + 2 * n2
    pairs = []
    for j in range(n1):
        fq = _packed_diff(codec, cf, vf, ef, kcol + j, True, n1)
        gp = _packed_diff(codec, cg, vg, eg, j, False, n1)
        pairs.append((fq[0], fq[1], gp[0], gp[1], +1))
        fp = _packed_diff(codec, cf, vf, ef, j, False, n1)
        gq = _packed_diff(codec, cg, vg, eg, kcol + j, True, n1)
        pairs.append((fp[0], fp[1], gq[0], gq[1], -1))
    for j in range(n2):
        fz = _packed_diff(codec, cf, vf, ef, n1 + j, False, n1)
        gw = _packed_diff(codec, cg, vg, eg, n1 + n2 + j, False, n1)
        pairs.append((fz[0], fz[1], gw[0], gw[1], +1))
        fw = _packed_diff(codec, cf, vf, ef, n1 + n2 + j, False, n1)
        gz = _packed_diff(codec, cg, vg, eg, n1 + j, False, n1)
        pairs.append((fw[0], fw[1], gz[0], gz[1], -1))
    chunks = []
    _outer_products(chunks, pairs, codec.bias_code)
    return _reduce_terms(codec, chunks, caps, n1, n2)


def _bracket_slow(f, g, caps):
    n1, n2 = f.n1, f.n2
    acc = {}
    for j in range(n1):
        _bilinear(acc, _diff_terms(f, "q", j), _diff_terms(g, "p", j),
                  +1.0, n1, n2, caps)
        _bilinear(acc, _diff_terms(f, "p", j), _diff_terms(g, "q", j),
                  -1.0, n1, n2, caps)
    for j in range(n2):
        _bilinear(acc, _diff_terms(f, "z", j), _diff_terms(g, "w", j),
                  +1.0, n1, n2, caps)
        _bilinear(acc, _diff_terms(f, "w", j), _diff_terms(g, "z", j),
                  -1.0, n1, n2, caps)
    return _pruned(acc)


def _bilinear(acc, terms_a, terms_b, sign, n1, n2, caps):
    if not terms_a or not terms_b:
        return
    for ka, ca in terms_a:
        ca = sign * ca
        for kb, cb in terms_b:
            key = tuple(x + y for x, y in zip(ka, kb))
            _accumulate(acc, key, ca * cb, n1, n2, caps)


def lie_derivative(chi, g, caps=None):
    """L_chi g = {chi, g}."""
    return poisson_bracket(chi, g, caps)


def lie_series_apply(chi, g, scale=1.0, j_max=1, caps=None):
    """Truncated exponential of the Lie derivative.

    Returns sum_{j=0}^{j_max} (scale^j / j!) L_chi^j g with every power
    truncated by ``caps``.  The caller picks j_max so that discarded powers
    exceed the active order budget.
    """
    if j_max < 0:
        raise ValueError("j_max must be >= 0")
    out = g
    power = g
    fact = 1.0
    for j in range(1, j_max + 1):
        power = poisson_bracket(chi, power, caps)
        if not power:
            break
        fact *= j
        out = out + (complex(scale) ** j / fact) * power
    return out


def average_q(g):
    """Projection on the k = 0 harmonics."""
    n1 = g.n1
    terms = {key: c for key, c in g.terms.items()
             if all(v == 0 for v in key[-n1:])}
    return g.copy_with(terms=terms)


# -- norms, classes, evaluation --------------------------------------------

def weighted_norm(g, params):
    """Weighted Fourier norm with the coefficient-majorant polynomial bound.

    sum over terms of |c| rho^|m| R^(|l|+|lbar|) exp(|k| sigma), radii scaled
    by params.shrink.  Majorizes the polydisc sup, so every inequality audit
    built on it only gets stronger.
    """
    rho, sigma, R = params.effective
    n1, n2 = g.n1, g.n2
    total = 0.0
    for key, c in g.terms.items():
        pm = sum(key[:n1])
        zm = sum(key[n1:n1 + 2 * n2])
        km = sum(abs(v) for v in key[-n1:])
        total += abs(c) * rho ** pm * R ** zm * math.exp(km * sigma)
    return total


def log2_weighted_norm(g, params):
    """log2 of weighted_norm, stable when coefficients under/overflow."""
    rho, sigma, R = params.effective
    n1, n2 = g.n1, g.n2
    logs = []
    for key, c in g.terms.items():
        a = abs(c)
        if a == 0.0:
            continue
        pm = sum(key[:n1])
        zm = sum(key[n1:n1 + 2 * n2])
        km = sum(abs(v) for v in key[-n1:])
        logs.append(math.log2(a) + pm * math.log2(rho) + zm * math.log2(R)
                    + km * sigma / math.log(2.0))
    if not logs:
        return -math.inf
    top = max(logs)
    return top + math.log2(sum(2.0 ** (x - top) for x in logs))


def class_of(g):
    """Class tag (ell, sK) of a homogeneous series, or "mixed".

    The reported budget is the smallest one containing the support.
    """
    if not g.terms:
        return ClassTag(0, 0)
    n1, n2 = g.n1, g.n2
    degs = {_key_deg(key, n1, n2) for key in g.terms}
    if len(degs) > 1:
        return "mixed"
    return ClassTag(degs.pop(), max(_key_trig(key, n1) for key in g.terms))


def homogeneous_parts(g):
    """Decomposition into class-homogeneous pieces, keyed by ell."""
    n1, n2 = g.n1, g.n2
    parts = {}
    for key, c in g.terms.items():
        parts.setdefault(_key_deg(key, n1, n2), {})[key] = c
    return {ell: g.copy_with(terms=terms, trig_cutoff=0)
            for ell, terms in sorted(parts.items())}


def _compiled(g):
    if g._eval_cache is None:
        keys = g.sorted_keys()
        n1, n2 = g.n1, g.n2
        arr = np.array(keys, dtype=np.int64).reshape(len(keys), 2 * (n1 + n2))
        coeffs = np.array([g.terms[k] for k in keys], dtype=np.complex128)
        g._eval_cache = (arr[:, :n1], arr[:, n1:n1 + n2],
                         arr[:, n1 + n2:n1 + 2 * n2], arr[:, -n1:], coeffs)
    return g._eval_cache


def evaluate(g, p, q, z, w=None):
    """Numerical value of the series; broadcasts over leading axes.

    ``w`` defaults to i*conj(z), the value it takes on real trajectories.
    """
    n1, n2 = g.n1, g.n2
    p = np.asarray(p, dtype=np.complex128)
    q = np.asarray(q, dtype=np.float64)
    z = np.asarray(z, dtype=np.complex128)
    if p.shape[-1] != n1 or q.shape[-1] != n1 or z.shape[-1] != n2:
        raise DimensionMismatch("evaluation point does not match (n1, n2)")
    w = 1j * np.conj(z) if w is None else np.asarray(w, dtype=np.complex128)
    if not g.terms:
        return np.zeros(np.broadcast_shapes(p.shape[:-1], q.shape[:-1],
                                            z.shape[:-1]), dtype=np.complex128)
    M, L, Lb, K, C = _compiled(g)
    # value[..., t] = C[t] * prod p^M[t] * prod z^L[t] * prod w^Lb[t] * e^{i K[t].q}
    with np.errstate(divide="ignore", invalid="ignore"):
        pm = np.prod(np.power(p[..., None, :], M), axis=-1)
        zm = np.prod(np.power(z[..., None, :], L), axis=-1)
        wm = np.prod(np.power(w[..., None, :], Lb), axis=-1)
    phase = np.exp(1j * (q[..., None, :] * K).sum(axis=-1))
    vals = (C * pm * zm * wm * phase).sum(axis=-1)
    return vals


def realify_check(g, tol=1e-10):
    """True when the coefficients satisfy the reality pairing.

    A series with real values on real phase points (q real, w = i*conj(z))
    has c(m,l,lbar,k) = (-i)^(|l|+|lbar|) conj(c(m,lbar,l,-k)).
    """
    if not g.terms:
        return True
    n1, n2 = g.n1, g.n2
    scale = g.max_coeff()
    for key, c in g.terms.items():
        m = key[:n1]
        l = key[n1:n1 + n2]
        lb = key[n1 + n2:n1 + 2 * n2]
        k = key[-n1:]
        partner = m + lb + l + tuple(-v for v in k)
        expected = (-1j) ** (sum(l) + sum(lb)) * g.terms.get(partner, 0j).conjugate()
        if abs(c - expected) > tol * scale:
            return False
    return True


# -- serialization ----------------------------------------------------------

def series_to_dict(g):
    n1, n2 = g.n1, g.n2
    entries = []
    for key in g.sorted_keys():
        c = g.terms[key]
        entries.append({
            "m": list(key[:n1]),
            "l": list(key[n1:n1 + n2]),
            "lbar": list(key[n1 + n2:n1 + 2 * n2]),
            "k": list(key[-n1:]),
            "re": c.real,
            "im": c.imag,
        })
    return {"n1": n1, "n2": n2, "trig_cutoff": g.trig_cutoff,
            "ledger": list(g.ledger.entries), "entries": entries}


def series_from_dict(data):
    n1, n2 = data["n1"], data["n2"]
    terms = {}
    for e in data["entries"]:
        key = tuple(e["m"]) + tuple(e["l"]) + tuple(e["lbar"]) + tuple(e["k"])
        terms[key] = terms.get(key, 0j) + complex(e["re"], e["im"])
    return PoissonSeries(n1, n2, terms, trig_cutoff=data.get("trig_cutoff", 0),
                         ledger=IndexList(data.get("ledger", ())))


def series_to_json(g):
    return json.dumps(series_to_dict(g), sort_keys=True)


def series_from_json(text):
    return series_from_dict(json.loads(text))
