"""Lazy, differentially private conditional probability tables.

Each table is learned the first time its configuration is requested.  The
Laplace noise for a configuration comes from an RNG seeded with a stable
hash of ``(attribute, parent buckets, model seed)``, so every worker and
every run computes bit-identical tables.
"""

from __future__ import annotations

import bisect
import json
import math
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, Schema
from .structure import DependencyGraph

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes, h: int = FNV64_OFFSET) -> int:
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class ConfigurationKey:
    """Attribute index plus bucketized parent values, ordered by parent index.

    An empty ``parent_values`` addresses the attribute's marginal.
    """

    attribute: int
    parent_values: tuple[int, ...] = ()

    def encode(self) -> bytes:
        return struct.pack(f"<I{len(self.parent_values)}I", self.attribute, *self.parent_values)


def stable_hash(model_seed: int, key: ConfigurationKey) -> int:
    return fnv1a_64(key.encode() + struct.pack("<Q", model_seed & _MASK64))


@dataclass(frozen=True)
class ConditionalTable:
    key: ConfigurationKey
    alpha: np.ndarray
    noisy_counts: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        for arr in (self.alpha, self.noisy_counts, self.probs):
            arr.setflags(write=False)
        cdf = np.cumsum(self.probs)
        object.__setattr__(self, "cdf", cdf)
        object.__setattr__(self, "_cdf_list", cdf.tolist())

    def draw(self, rng: np.random.Generator) -> int:
        c = self._cdf_list
        return min(bisect.bisect_right(c, rng.random() * c[-1]), len(c) - 1)

    def to_dict(self) -> dict:
        return {
            "attribute": self.key.attribute,
            "parents": list(self.key.parent_values),
            "noisy_counts": [float(x) for x in self.noisy_counts],
        }


def count_vector(data: Dataset, key: ConfigurationKey, graph: DependencyGraph) -> np.ndarray:
    """Counts of each value of the key's attribute among records matching its configuration."""
    schema = data.schema
    i = key.attribute
    recs = data.records
    mask = np.ones(data.n, dtype=bool)
    if key.parent_values:
        ps = graph.parents[i]
        if len(ps) != len(key.parent_values):
            raise ValueError(f"key {key} does not match parents {ps} of attribute {i}")
        for j, b in zip(ps, key.parent_values):
            mask &= schema.bucket_map(j)[recs[:, j]] == b
    return np.bincount(recs[mask, i], minlength=schema.cardinalities[i]).astype(np.int64)


def noisy_count_vector(n: Sequence[float] | np.ndarray, eps_p: float, rng: np.random.Generator) -> np.ndarray:
    """``max(0, n + Lap(1/eps_p))`` per component, kept real-valued."""
    if not eps_p > 0:
        raise ValueError("eps_p must be positive")
    n = np.asarray(n, dtype=np.float64)
    noise = rng.laplace(0.0, 1.0, size=n.shape) * (1.0 / eps_p)
    return np.maximum(0.0, n + noise)


def posterior_probs(alpha, noisy_counts) -> np.ndarray:
    """Posterior-mean multinomial parameters ``(alpha + n) / sum(alpha + n)``."""
    a = np.asarray(alpha, dtype=np.float64)
    c = np.asarray(noisy_counts, dtype=np.float64)
    if (a <= 0).any():
        raise ValueError("Dirichlet hyper-parameters must be positive")
    w = a + c
    return w / w.sum()


def sample_dirichlet(concentration, rng: np.random.Generator) -> np.ndarray:
    """One Dirichlet draw via normalized Gamma variates."""
    c = np.asarray(concentration, dtype=np.float64)
    if (c <= 0).any() or not np.isfinite(c).all():
        raise ValueError("Dirichlet concentration parameters must be positive and finite")
    g = rng.standard_gamma(c)
    s = g.sum()
    if s <= 0:  # all draws underflowed; only possible for tiny concentrations
        g = np.zeros_like(c)
        g[rng.choice(c.size, p=c / c.sum())] = 1.0
        s = 1.0
    return g / s


class GenerativeModel:
    """Dependency graph plus lazily learned DP conditional tables.

    ``eps_p = math.inf`` disables noise (useful for oracles and tests).
    """

    def __init__(self, schema: Schema, graph: DependencyGraph, d_p: Dataset, eps_p: float,
                 model_seed: int, alpha: float | Sequence[float] = 1.0):
        if graph.m != schema.m:
            raise ValueError("graph and schema disagree on attribute count")
        if not eps_p > 0:
            raise ValueError("eps_p must be positive")
        self.schema = schema
        self.graph = graph
        self.eps_p = float(eps_p)
        self.model_seed = int(model_seed)
        self._alpha_spec = alpha
        self._d_p = d_p
        self._cache: dict[ConfigurationKey, ConditionalTable] = {}
        self._lock = threading.Lock()
        self._codes: dict[int, np.ndarray] = {}
        self._m = schema.m
        # per attribute: (parent index, bucket map as a list) for fast key lookups
        self._parent_maps = [tuple((j, schema.bucket_map(j).tolist()) for j in graph.parents[i])
                             for i in range(schema.m)]
        self._radix = []
        bc = schema.bucket_counts
        for i in range(schema.m):
            r = []
            mult = 1
            for j in reversed(graph.parents[i]):
                r.append(mult)
                mult *= bc[j]
            self._radix.append(tuple(reversed(r)))

    @property
    def sigma(self) -> tuple[int, ...]:
        return self.graph.sigma

    @property
    def m(self) -> int:
        return self._m

    def alpha_for(self, attr: int) -> np.ndarray:
        card = self.schema.cardinalities[attr]
        a = self._alpha_spec
        if np.isscalar(a):
            return np.full(card, float(a))
        arr = np.asarray(a, dtype=np.float64)
        if arr.shape != (card,):
            raise ValueError(f"alpha vector has shape {arr.shape}, expected ({card},)")
        return arr

    def key_for(self, attr: int, record: Sequence[int]) -> ConfigurationKey:
        """Configuration key of ``attr`` with parents read from ``record``."""
        return ConfigurationKey(attr, tuple(bmap[record[j]] for j, bmap in self._parent_maps[attr]))

    def _config_codes(self, attr: int) -> np.ndarray:
        codes = self._codes.get(attr)
        if codes is None:
            recs = self._d_p.records
            codes = np.zeros(self._d_p.n, dtype=np.int64)
            for j, r in zip(self.graph.parents[attr], self._radix[attr]):
                codes += self.schema.bucket_map(j)[recs[:, j]] * r
            self._codes[attr] = codes
        return codes

    def counts(self, key: ConfigurationKey) -> np.ndarray:
        i = key.attribute
        recs = self._d_p.records
        card = self.schema.cardinalities[i]
        if not key.parent_values:
            return np.bincount(recs[:, i], minlength=card).astype(np.int64)
        ps = self.graph.parents[i]
        if len(ps) != len(key.parent_values):
            raise ValueError(f"key {key} does not match parents {ps} of attribute {i}")
        bc = self.schema.bucket_counts
        code = 0
        for j, b, r in zip(ps, key.parent_values, self._radix[i]):
            if not 0 <= b < bc[j]:
                raise ValueError(f"bucket {b} out of range for parent {j}")
            code += b * r
        mask = self._config_codes(i) == code
        return np.bincount(recs[mask, i], minlength=card).astype(np.int64)

    def _build(self, key: ConfigurationKey, noisy: np.ndarray | None = None) -> ConditionalTable:
        alpha = self.alpha_for(key.attribute)
        if noisy is None:
            n = self.counts(key).astype(np.float64)
            if math.isinf(self.eps_p):
                noisy = n
            else:
                rng = np.random.default_rng(stable_hash(self.model_seed, key))
                noisy = noisy_count_vector(n, self.eps_p, rng)
        return ConditionalTable(key, alpha, np.asarray(noisy, dtype=np.float64), posterior_probs(alpha, noisy))

    def get_table(self, key: ConfigurationKey) -> ConditionalTable:
        table = self._cache.get(key)
        if table is not None:
            return table
        if not 0 <= key.attribute < self.m:
            raise ValueError(f"attribute {key.attribute} out of range")
        built = self._build(key)
        with self._lock:
            return self._cache.setdefault(key, built)

    def conditional(self, attr: int, record: Sequence[int]) -> np.ndarray:
        """Probabilities of each value of ``attr`` given parents read from ``record``."""
        return self.get_table(self.key_for(attr, record)).probs

    def marginal(self, attr: int) -> np.ndarray:
        return self.get_table(ConfigurationKey(attr, ())).probs

    def cached_keys(self) -> list[ConfigurationKey]:
        return sorted(self._cache, key=lambda k: (k.attribute, len(k.parent_values), k.parent_values))

    def save_cache(self, path: str | Path) -> int:
        """Write one JSON line per cached table (noisy counts only)."""
        keys = self.cached_keys()
        with open(path, "w", encoding="utf-8") as fh:
            for k in keys:
                fh.write(json.dumps(self._cache[k].to_dict(), sort_keys=True) + "\n")
        return len(keys)

    def load_cache(self, path: str | Path) -> int:
        n = 0
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                key = ConfigurationKey(int(d["attribute"]), tuple(int(b) for b in d["parents"]))
                table = self._build(key, np.asarray(d["noisy_counts"], dtype=np.float64))
                with self._lock:
                    self._cache[key] = table
                n += 1
        return n

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_lock"] = None
        state["_cache"] = {}
        state["_codes"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()
