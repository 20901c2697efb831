"""Exact verification of the release mechanism's privacy claims on small universes.

Release probabilities are computed through the partition decomposition: for
a fixed output ``y`` the records of ``D`` are grouped by the geometric
bracket their generation probability falls in, and each group passes the
randomized test with a Laplace tail probability that depends only on its
size.  All sums run in extended precision (mpmath, 40 digits).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import mpmath

from .accounting import theorem1_params
from .data import Dataset
from .params import GenerativeModel
from .privacy import partition_number
from .structure import entropy, entropy_sensitivity
from .synthesis import record_probability

NUMERICAL_ZERO = 1e-12
_MP = mpmath.MPContext()
_MP.dps = 40

ProbFn = Callable[[Sequence[int], Sequence[int]], float]


def laplace_tail(x: float, eps0: float):
    """``Pr[L >= x]`` for ``L ~ Lap(1/eps0)``."""
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    if x >= 0:
        return 0.5 * math.exp(-eps0 * x)
    return 1.0 - 0.5 * math.exp(eps0 * x)


def _mp_tail(x, eps0):
    x = _MP.mpf(x)
    eps0 = _MP.mpf(eps0)
    if x >= 0:
        return _MP.exp(-eps0 * x) / 2
    return 1 - _MP.exp(eps0 * x) / 2


def pt_exact(count: int, k: int, eps0: float) -> float:
    """Probability that the randomized test passes when the seed's partition has ``count`` records."""
    if count < 0:
        raise ValueError("count must be non-negative")
    return laplace_tail(k - count, eps0)


def as_prob_fn(model: GenerativeModel | ProbFn, omega: int | None = None) -> ProbFn:
    if isinstance(model, GenerativeModel):
        if omega is None:
            raise ValueError("omega is required with a GenerativeModel")
        return lambda d, y: record_probability(model, d, y, omega)
    return model


@dataclass
class PartitionProfile:
    """Partition index -> record indices of ``D``, plus each record's ``p_d(y)``."""

    probs: list[float]
    members: dict[int, list[int]] = field(default_factory=dict)

    def size(self, i: int) -> int:
        return len(self.members.get(i, ()))

    def mass(self, i: int):
        return _MP.fsum(_MP.mpf(self.probs[s]) for s in self.members.get(i, ()))


def partition_profile(records: Sequence[Sequence[int]], y: Sequence[int], prob: ProbFn,
                      gamma: float) -> PartitionProfile:
    probs = [float(prob(d, y)) for d in records]
    prof = PartitionProfile(probs)
    for idx, p in enumerate(probs):
        if p > 0:
            prof.members.setdefault(partition_number(p, gamma), []).append(idx)
    return prof


def _rows(D) -> list[tuple[int, ...]]:
    if isinstance(D, Dataset):
        return [D.record(i) for i in range(D.n)]
    return [tuple(int(v) for v in r) for r in D]


def q_value(prof: PartitionProfile, i: int, k: int, eps0: float):
    """Probability mass of producing and releasing ``y`` from partition ``i`` (times |D|)."""
    if not prof.size(i):
        return _MP.mpf(0)
    return _mp_tail(k - prof.size(i), eps0) * prof.mass(i)


def release_prob_exact(D, y: Sequence[int], model: GenerativeModel | ProbFn, omega: int | None,
                       k: int, gamma: float, eps0: float, *, exact: bool = False):
    """``Pr[F(D) = y]`` for the mechanism with the randomized test and uncapped counting.

    ``model`` is a :class:`GenerativeModel` (used with ``omega``) or any
    callable ``(d, y) -> Pr[y = M(d)]``.  Returns a float, or an mpmath
    value when ``exact`` is set.
    """
    rows = _rows(D)
    prof = partition_profile(rows, y, as_prob_fn(model, omega), gamma)
    total = _MP.fsum(q_value(prof, i, k, eps0) for i in prof.members) / len(rows)
    return total if exact else float(total)


def universe(cardinalities: Sequence[int]) -> list[tuple[int, ...]]:
    return list(itertools.product(*(range(c) for c in cardinalities)))


@dataclass
class Theorem1Report:
    eps: float
    delta: float
    configurations: int = 0
    singleton_checks: int = 0
    set_checks: int = 0
    sandwich_checks: int = 0
    worst_margin: float = -math.inf
    worst_sandwich: float = -math.inf
    worst_monotonicity: float = -math.inf
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def merge(self, other: Theorem1Report) -> None:
        self.configurations += other.configurations
        self.singleton_checks += other.singleton_checks
        self.set_checks += other.set_checks
        self.sandwich_checks += other.sandwich_checks
        self.worst_margin = max(self.worst_margin, other.worst_margin)
        self.worst_sandwich = max(self.worst_sandwich, other.worst_sandwich)
        self.worst_monotonicity = max(self.worst_monotonicity, other.worst_monotonicity)
        self.violations.extend(other.violations)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "delta": self.delta,
            "configurations": self.configurations,
            "singleton_checks": self.singleton_checks,
            "set_checks": self.set_checks,
            "sandwich_checks": self.sandwich_checks,
            "worst_margin": self.worst_margin,
            "worst_sandwich_margin": self.worst_sandwich,
            "worst_monotonicity_margin": self.worst_monotonicity,
            "violations": len(self.violations),
        }


def check_theorem1(D, d_prime: Sequence[int], outcomes: Iterable[Sequence[int]],
                   model: GenerativeModel | ProbFn, omega: int | None, k: int, gamma: float,
                   eps0: float, t: int, *, eps: float | None = None,
                   delta: float | None = None) -> Theorem1Report:
    """Exhaustively check the DP inequality between ``D`` and ``D + [d_prime]``.

    Checks every singleton outcome in both directions, the outcome sets
    split by whether ``d_prime``'s partition in ``D`` has fewer than ``t``
    records, and the full outcome set.  Also checks the per-partition
    pass-probability sandwich and monotonicity of the per-partition release
    mass.  ``eps``/``delta`` override the theorem's values (negative controls).
    """
    rows = _rows(D)
    rows_p = rows + [tuple(int(v) for v in d_prime)]
    if len(rows) < k:
        raise ValueError(f"|D| = {len(rows)} < k = {k}")
    bound = theorem1_params(k, gamma, eps0, t)
    e = bound.eps if eps is None else eps
    dl = bound.delta if delta is None else delta
    rep = Theorem1Report(e, dl, configurations=1)
    prob = as_prob_fn(model, omega)
    ee = _MP.exp(_MP.mpf(e))
    dd = _MP.mpf(dl)
    e0 = _MP.exp(_MP.mpf(eps0))
    tol = NUMERICAL_ZERO

    def record(kind: str, margin, y=None) -> None:
        m = float(margin)
        rep.worst_margin = max(rep.worst_margin, m)
        if m > tol:
            rep.violations.append({"kind": kind, "y": y, "d_prime": tuple(d_prime), "margin": m})

    p_d: dict = {}
    p_dp: dict = {}
    small: list = []
    large: list = []
    for y in outcomes:
        y = tuple(int(v) for v in y)
        prof = partition_profile(rows, y, prob, gamma)
        prof_p = partition_profile(rows_p, y, prob, gamma)
        a = _MP.fsum(q_value(prof, i, k, eps0) for i in prof.members) / len(rows)
        b = _MP.fsum(q_value(prof_p, i, k, eps0) for i in prof_p.members) / len(rows_p)
        p_d[y], p_dp[y] = a, b
        rep.singleton_checks += 2
        record("D'->D", b - (ee * a + dd), y)
        record("D->D'", a - (ee * b + dd), y)

        for i in set(prof.members) | set(prof_p.members):
            lo = _mp_tail(k - prof.size(i), eps0)
            mid = _mp_tail(k - prof_p.size(i), eps0)
            s = float(max(lo - mid, mid - e0 * lo))
            rep.worst_sandwich = max(rep.worst_sandwich, s)
            rep.sandwich_checks += 1
            if s > tol:
                rep.violations.append({"kind": "sandwich", "y": y, "partition": i, "margin": s})
            c = float(q_value(prof, i, k, eps0) - q_value(prof_p, i, k, eps0))
            rep.worst_monotonicity = max(rep.worst_monotonicity, c)
            if c > tol:
                rep.violations.append({"kind": "monotonicity", "y": y, "partition": i, "margin": c})

        pd_ = prob(d_prime, y)
        j = partition_number(pd_, gamma) if pd_ > 0 else None
        (small if j is not None and prof.size(j) < t else large).append(y)

    for name, ys in (("Y_t-", small), ("Y_t+", large), ("Y", small + large)):
        if not ys:
            continue
        a = _MP.fsum(p_d[y] for y in ys)
        b = _MP.fsum(p_dp[y] for y in ys)
        rep.set_checks += 2
        record(f"{name} D'->D", b - (ee * a + dd))
        record(f"{name} D->D'", a - (ee * b + dd))
    return rep


@dataclass
class SensitivityResult:
    bins: int
    n: int
    max_observed: float
    bound: float
    pairs: int

    @property
    def ok(self) -> bool:
        return self.max_observed <= self.bound


def _compositions(n: int, bins: int):
    if bins == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, bins - 1):
            yield (first,) + rest


def sensitivity_bruteforce(bins: int, n: int) -> SensitivityResult:
    """Max entropy change over all histograms of ``n`` records and all one-record moves."""
    if bins < 1 or n < 1:
        raise ValueError("need bins >= 1 and n >= 1")
    # n = 1 only admits point masses; the closed form is still finite there
    bound = entropy_sensitivity(n) if n >= 2 else 2.0 + 1.0 / math.log(2.0)
    cache: dict[tuple[int, ...], float] = {}
    worst = 0.0
    pairs = 0
    for h in _compositions(n, bins):
        hv = cache.get(h)
        if hv is None:
            hv = cache[h] = entropy(h)
        for src in range(bins):
            if h[src] == 0:
                continue
            for dst in range(bins):
                if dst == src:
                    continue
                g = list(h)
                g[src] -= 1
                g[dst] += 1
                g = tuple(g)
                gv = cache.get(g)
                if gv is None:
                    gv = cache[g] = entropy(g)
                worst = max(worst, abs(hv - gv))
                pairs += 1
    return SensitivityResult(bins, n, worst, bound, pairs)
