"""Differentially private dependency-graph learning.

Parents are chosen per attribute by greedy correlation-based feature
selection.  Correlations are symmetrical-uncertainty coefficients computed
from Laplace-noised entropies; the noise scale comes from the entropy
sensitivity bound evaluated at a noised record count.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, Schema

LN2 = math.log(2.0)
DEFAULT_MAXCOST = 10_000


def entropy(hist: Sequence[float] | np.ndarray) -> float:
    """Shannon entropy in bits of a count histogram."""
    c = np.asarray(hist, dtype=np.float64).ravel()
    n = c.sum()
    if c.size == 0 or n <= 0:
        raise ValueError("entropy of an empty histogram")
    if (c < 0).any():
        raise ValueError("histogram counts must be non-negative")
    p = c[c > 0] / n
    return float(max(0.0, -(p * np.log2(p)).sum()))


def entropy_sensitivity(n: float) -> float:
    """Upper bound on |H(z) - H(z')| for neighbouring histograms over ``n`` records."""
    if n < 2:
        raise ValueError(f"entropy sensitivity needs n >= 2, got {n}")
    return (2.0 + 1.0 / LN2 + 2.0 * math.log2(n)) / n


def _laplace(rng: np.random.Generator, scale: float) -> float:
    # unit draw is always consumed so the stream layout does not depend on eps
    return float(rng.laplace(0.0, 1.0)) * scale


def noisy_entropy(h: float, delta_h: float, eps_h: float, rng: np.random.Generator) -> float:
    if not eps_h > 0:
        raise ValueError("eps_H must be positive")
    if not delta_h > 0:
        raise ValueError("entropy sensitivity must be positive")
    return h + _laplace(rng, delta_h / eps_h)


def noisy_record_count(n_t: int, eps_nt: float, rng: np.random.Generator) -> int:
    """Laplace-noised record count, rounded and floored at 2."""
    if not eps_nt > 0:
        raise ValueError("eps_nT must be positive")
    noisy = n_t + _laplace(rng, 1.0 / eps_nt)
    return max(2, int(round(noisy)))


def correlation(h_i: float, h_j: float, h_ij: float) -> float:
    """Symmetrical uncertainty ``2 - 2 H(i,j) / (H(i) + H(j))`` clamped to [0, 1]."""
    denom = h_i + h_j
    if not denom > 0:
        return 0.0
    su = 2.0 - 2.0 * h_ij / denom
    return min(1.0, max(0.0, su))


def merit(parent_set: Iterable[int], target: int, corr) -> float:
    """CFS merit of ``parent_set`` for ``target``; ``corr[a][b]`` is a correlation lookup."""
    parents = list(parent_set)
    if not parents:
        return 0.0
    num = sum(corr[target][j] for j in parents)
    inter = sum(corr[j][k] for j in parents for k in parents if j != k)
    radicand = len(parents) + inter
    if radicand <= 0:
        raise ValueError("non-positive merit denominator")
    return num / math.sqrt(radicand)


def cost(parent_set: Iterable[int], schema: Schema, cap: int | None = None) -> int:
    """Product of bucketized parent cardinalities; saturates just above ``cap``."""
    counts = schema.bucket_counts
    total = 1
    for j in parent_set:
        total *= counts[j]
        if cap is not None and total > cap:
            return cap + 1
    return total


@dataclass
class DependencyGraph:
    parents: tuple[tuple[int, ...], ...]
    sigma: tuple[int, ...]

    def __post_init__(self):
        m = len(self.parents)
        self.parents = tuple(tuple(sorted(int(j) for j in p)) for p in self.parents)
        self.sigma = tuple(int(s) for s in self.sigma)
        if sorted(self.sigma) != list(range(m)):
            raise ValueError("sigma is not a permutation of the attributes")
        pos = {a: r for r, a in enumerate(self.sigma)}
        for i, ps in enumerate(self.parents):
            for j in ps:
                if not 0 <= j < m or j == i:
                    raise ValueError(f"invalid parent {j} for attribute {i}")
                if pos[j] >= pos[i]:
                    raise ValueError(f"sigma is not topological: {j} -> {i}")

    @property
    def m(self) -> int:
        return len(self.parents)

    @classmethod
    def from_parents(cls, parents: Sequence[Iterable[int]]) -> DependencyGraph:
        ps = [tuple(p) for p in parents]
        return cls(tuple(ps), topological_order(ps))

    def children(self, i: int) -> list[int]:
        return [c for c, ps in enumerate(self.parents) if i in ps]

    def edges(self) -> list[tuple[int, int]]:
        return [(j, i) for i, ps in enumerate(self.parents) for j in ps]

    def to_text(self, schema: Schema) -> str:
        names = schema.names
        lines = [f"{names[i]} <- {','.join(names[j] for j in ps)}" for i, ps in enumerate(self.parents)]
        lines.append("sigma: " + ",".join(names[s] for s in self.sigma))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, schema: Schema) -> DependencyGraph:
        parents: dict[int, tuple[int, ...]] = {}
        sigma = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("sigma:"):
                sigma = tuple(schema.index_of(s.strip()) for s in line[6:].split(",") if s.strip())
                continue
            target, _, rest = line.partition("<-")
            parents[schema.index_of(target.strip())] = tuple(
                schema.index_of(s.strip()) for s in rest.split(",") if s.strip()
            )
        ps = tuple(parents.get(i, ()) for i in range(schema.m))
        if sigma is None:
            sigma = topological_order(ps)
        return cls(ps, sigma)


def topological_order(parents: Sequence[Iterable[int]]) -> tuple[int, ...]:
    """Kahn's algorithm, smallest ready index first; raises on a cycle."""
    m = len(parents)
    indeg = [len(set(p)) for p in parents]
    kids: list[list[int]] = [[] for _ in range(m)]
    for i, ps in enumerate(parents):
        for j in set(ps):
            kids[j].append(i)
    ready = [i for i in range(m) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        a = heapq.heappop(ready)
        order.append(a)
        for c in kids[a]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != m:
        raise ValueError("dependency graph has a cycle")
    return tuple(order)


def _is_ancestor(parents: list[set[int]], anc: int, node: int) -> bool:
    stack = [node]
    seen = set()
    while stack:
        x = stack.pop()
        if x == anc:
            return True
        for p in parents[x]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return False


@dataclass
class EntropyTable:
    """Noisy entropies used for structure learning.

    ``joint[i][j]`` (i != j) is the noisy entropy of ``(x_i, bu(x_j))``;
    the diagonal is unused.
    """

    raw: list[float]
    bucketed: list[float]
    joint: list[list[float]]
    n_tilde: int
    delta_h: float
    draws: int = field(default=0)

    def correlations(self) -> list[list[float]]:
        """``corr[i][j]``: symmetrical uncertainty of raw ``x_i`` vs bucketized ``x_j``."""
        m = len(self.raw)
        corr = [[0.0] * m for _ in range(m)]
        for i in range(m):
            corr[i][i] = 1.0
            for j in range(m):
                if i != j:
                    corr[i][j] = correlation(self.raw[i], self.bucketed[j], self.joint[i][j])
        return corr

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "bucketed": self.bucketed,
            "joint": self.joint,
            "n_tilde": self.n_tilde,
            "delta_h": self.delta_h,
            "draws": self.draws,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EntropyTable:
        return cls(list(d["raw"]), list(d["bucketed"]), [list(r) for r in d["joint"]],
                   int(d["n_tilde"]), float(d["delta_h"]), int(d.get("draws", 0)))


def exact_entropies(data: Dataset) -> tuple[list[float], list[float], list[list[float]]]:
    """Noise-free entropies in the canonical layout of :class:`EntropyTable`."""
    schema = data.schema
    m = schema.m
    recs = data.records
    card = schema.cardinalities
    bcount = schema.bucket_counts
    buck = [schema.bucket_map(j)[recs[:, j]] for j in range(m)]
    raw = [entropy(np.bincount(recs[:, i], minlength=card[i])) for i in range(m)]
    bucketed = [entropy(np.bincount(buck[i], minlength=bcount[i])) for i in range(m)]
    joint = [[math.nan] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            if i != j:
                codes = recs[:, i] * bcount[j] + buck[j]
                joint[i][j] = entropy(np.bincount(codes, minlength=card[i] * bcount[j]))
    return raw, bucketed, joint


def noisy_entropy_table(data: Dataset, eps_h: float, eps_nt: float,
                        rng: np.random.Generator) -> EntropyTable:
    """Draw the m(m+1) noisy entropies plus the noisy record count.

    Draw order is fixed: record count, raw singles, bucketized singles, then
    ordered pairs row-major.
    """
    if data.n < 2:
        raise ValueError("structure learning needs at least 2 records")
    m = data.schema.m
    n_tilde = noisy_record_count(data.n, eps_nt, rng)
    delta_h = entropy_sensitivity(n_tilde)
    raw, bucketed, joint = exact_entropies(data)
    draws = 0
    raw_n = []
    for h in raw:
        raw_n.append(noisy_entropy(h, delta_h, eps_h, rng))
        draws += 1
    buck_n = []
    for h in bucketed:
        buck_n.append(noisy_entropy(h, delta_h, eps_h, rng))
        draws += 1
    joint_n = [[0.0] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            if i != j:
                joint_n[i][j] = noisy_entropy(joint[i][j], delta_h, eps_h, rng)
                draws += 1
    return EntropyTable(raw_n, buck_n, joint_n, n_tilde, delta_h, draws)


def greedy_parents(corr, schema: Schema, maxcost: int) -> tuple[tuple[int, ...], ...]:
    """Greedy CFS over targets in index order, keeping the global graph acyclic."""
    m = schema.m
    parents: list[set[int]] = [set() for _ in range(m)]
    for target in range(m):
        chosen: list[int] = []
        score = 0.0
        while True:
            best, best_score = None, score
            for cand in range(m):
                if cand == target or cand in parents[target]:
                    continue
                trial = chosen + [cand]
                if cost(trial, schema, cap=maxcost) > maxcost:
                    continue
                if _is_ancestor(parents, target, cand):
                    continue
                s = merit(trial, target, corr)
                if s > best_score:
                    best, best_score = cand, s
            if best is None:
                break
            chosen.append(best)
            parents[target].add(best)
            score = best_score
    return tuple(tuple(sorted(p)) for p in parents)


def learn_structure(d_t: Dataset, eps_h: float, eps_nt: float, maxcost: int = DEFAULT_MAXCOST,
                    rng: np.random.Generator | None = None) -> tuple[DependencyGraph, EntropyTable]:
    """Learn a DP dependency graph from the structure-learning subset."""
    if d_t.n == 0:
        raise ValueError("empty structure-learning dataset")
    if maxcost < 1:
        raise ValueError("maxcost must be at least 1")
    if rng is None:
        rng = np.random.default_rng()
    table = noisy_entropy_table(d_t, eps_h, eps_nt, rng)
    parents = greedy_parents(table.correlations(), d_t.schema, maxcost)
    return DependencyGraph.from_parents(parents), table
