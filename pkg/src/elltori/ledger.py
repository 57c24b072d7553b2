"""Divisor-accumulation ledgers and summand-count tables.

Every series produced by the normalization carries a multiset of step
indices recording which homological divisors fed into it.  The multiset is
scored by the accumulation value prod_{s in S} s^(4+tau), worked with in
log2 throughout because the plain product overflows doubles quickly.  The
module also provides the exact integer tables counting the number of
summands generated by the three per-step recursions, and the audit that
checks recorded ledgers against the band-count selection rules.
"""

from __future__ import annotations

import math


class IndexList:
    """Immutable multiset of positive integer step indices."""

    __slots__ = ("entries",)

    def __init__(self, entries=()):
        entries = tuple(sorted(int(e) for e in entries))
        if entries and entries[0] < 1:
            raise ValueError("ledger entries must be >= 1")
        object.__setattr__(self, "entries", entries)

    def __setattr__(self, name, value):
        raise AttributeError("IndexList is immutable")

    def union(self, other):
        """Multiset union: concatenation with duplicates preserved."""
        if not other.entries:
            return self
        if not self.entries:
            return other
        return IndexList(self.entries + other.entries)

    def with_entry(self, s):
        return IndexList(self.entries + (int(s),))

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, IndexList) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"IndexList{self.entries}"


def log2_value(index_list, tau):
    """log2 of the accumulation value prod s^(4+tau); empty list scores 0."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return (4.0 + tau) * sum(math.log2(s) for s in index_list.entries)


def pick_heaviest(candidates, tau):
    """Candidate with the largest accumulation value.

    Ties broken by the lexicographically largest sorted entry tuple, so the
    selection is deterministic across platforms.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate list")
    return max(candidates, key=lambda S: (log2_value(S, tau), S.entries))


def band_count(index_list, k):
    """Number of entries s with 2^k <= s < 2^(k+1)."""
    if k < 0:
        raise ValueError("band index must be >= 0")
    lo, hi = 2 ** k, 2 ** (k + 1)
    return sum(1 for s in index_list.entries if lo <= s < hi)


# -- recursion rules ---------------------------------------------------------

def union_power(base, copies):
    """Multiset union of ``copies`` copies of ``base``."""
    if copies == 0 or not base.entries:
        return IndexList()
    return IndexList(base.entries * copies)


def stage_row_ledger(generator_ledger_, source_ledgers, tau):
    """Ledger of one recursion-row sum.

    ``source_ledgers`` maps the Lie-power j to the ledger of the source term
    it acts on; absent sources contribute no candidate.  Each candidate is j
    copies of the stage generator's ledger unioned with the source ledger,
    and the heaviest candidate is kept.
    """
    candidates = [union_power(generator_ledger_, j).union(src)
                  for j, src in sorted(source_ledgers.items())]
    if not candidates:
        return IndexList()
    return pick_heaviest(candidates, tau)


def chi_ledger(source_ledger, r):
    """Generating functions append the current step index to their source."""
    return source_ledger.with_entry(r)


# -- selection-rule audit -----------------------------------------------------

def _hamiltonian_band_bound(r, s, ell, k):
    """Band-count bound for a Hamiltonian-term ledger at step r."""
    if r < 1:
        return 0
    k_top = int(math.floor(math.log2(r)))
    if k > k_top:
        return 0
    base = 3 * (s // 2 ** k)
    if k == k_top and ell <= 3:
        return base - 3 + ell
    return base


def _generator_band_bound(r, j, k):
    """Band-count bound for a stage-j generating-function ledger."""
    k_top = int(math.floor(math.log2(r)))
    if k > k_top:
        return 0
    if k == k_top:
        return j + 1
    return 3 * (r // 2 ** k)


def audit_selection_rules(ledgers, r_max, s_max):
    """Check every recorded ledger against its band-count bound.

    ``ledgers`` is an iterable of records, each a dict with keys
    ``kind`` ("ham" for Hamiltonian terms of any stage, "gen" for the
    generating functions), ``r``, ``s`` (Hamiltonian) or ``stage``
    (generator), ``ell`` and ``list`` (IndexList).  Returns a report dict;
    violations are findings, not errors.
    """
    rows = []
    violations = 0
    for rec in ledgers:
        S = rec["list"]
        r = rec["r"]
        k_hi = max(0, int(math.floor(math.log2(max(r, 1)))))
        for k in range(0, k_hi + 2):
            count = band_count(S, k)
            if rec["kind"] == "gen":
                bound = _generator_band_bound(r, rec["stage"], k)
            else:
                bound = _hamiltonian_band_bound(r, rec["s"], rec["ell"], k)
            ok = count <= bound
            if not ok:
                violations += 1
            rows.append({"list_id": rec.get("id", ""), "r": r,
                         "s": rec.get("s", rec.get("stage")), "k": k,
                         "count": count, "bound": bound, "ok": ok})
    return {"r_max": r_max, "s_max": s_max, "checked": len(rows),
            "violations": violations, "rows": rows}


# -- summand-count tables ------------------------------------------------------

class SummandTable:
    """Exact counts of summands produced by the three per-step recursions.

    Triangular integer tables nu[r][s], nu_I[r][s], nu_II[r][s] built with
    Python integers, so the 2^(8s) bound can be checked exactly at any size.
    """

    def __init__(self, r_max, s_max):
        self.r_max = r_max
        self.s_max = s_max
        # the recursion for step r reads the s = r column, so the s axis
        # internally extends to max(s_max, r_max)
        width = max(s_max, r_max) + 1
        self.nu = [[0] * width for _ in range(r_max + 1)]
        self.nu_I = [[0] * width for _ in range(r_max + 1)]
        self.nu_II = [[0] * width for _ in range(r_max + 1)]
        for s in range(width):
            self.nu[0][s] = 1
        for r in range(1, r_max + 1):
            for s in range(width):
                self.nu_I[r][s] = sum(
                    self.nu[r - 1][r] ** j * self.nu[r - 1][s - j * r]
                    for j in range(s // r + 1))
            for s in range(width):
                self.nu_II[r][s] = sum(
                    self.nu_I[r][r] ** j * self.nu_I[r][s - j * r]
                    for j in range(s // r + 1))
            for s in range(width):
                self.nu[r][s] = sum(
                    self.nu_II[r][r] ** j * self.nu_II[r][s - j * r]
                    for j in range(s // r + 1))

    def check_bounds(self):
        """Verify nu_I <= nu_II <= nu, nu[r][s] <= nu[s][s] <= 2^(8s)."""
        bad = []
        for r in range(self.r_max + 1):
            for s in range(self.s_max + 1):
                v = self.nu[r][s]
                if r >= 1 and not (self.nu_I[r][s] <= self.nu_II[r][s] <= v):
                    bad.append(("order", r, s))
                if s <= self.r_max and v > self.nu[s][s]:
                    bad.append(("diag", r, s))
                if v > 2 ** (8 * s):
                    bad.append(("growth", r, s))
        return bad


def build_nu(r_max, s_max):
    """Build the summand tables up to (r_max, s_max)."""
    if r_max < 0 or s_max < 0:
        raise ValueError("table caps must be >= 0")
    return SummandTable(r_max, s_max)
