"""Plausible-deniability privacy tests and the release mechanism."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, Record
from .params import GenerativeModel, fnv1a_64
from .synthesis import (SynthesisParams, record_probability, resampled_probability, retained_match_mask,
                        synthesize)

# relative slack toward the upper bracket edge, absorbs log/pow rounding
_PARTITION_RTOL = 1e-12

DEFAULT_MAX_PLAUSIBLE = 100
DEFAULT_MAX_CHECK_PLAUSIBLE = 50_000


class PrivacyTestError(RuntimeError):
    pass


@dataclass(frozen=True)
class PrivacyParams:
    k: int
    gamma: float
    eps0: float = 1.0
    max_plausible: int | None = None
    max_check_plausible: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.gamma > 1:
            raise ValueError("gamma must be > 1")
        if not self.eps0 > 0:
            raise ValueError("eps0 must be > 0")
        if self.max_plausible is not None and self.max_plausible < self.k:
            raise ValueError("max_plausible below k would make every candidate fail")
        if self.max_check_plausible is not None and self.max_check_plausible < 1:
            raise ValueError("max_check_plausible must be >= 1")

    @property
    def uncapped(self) -> PrivacyParams:
        return PrivacyParams(self.k, self.gamma, self.eps0)


@dataclass
class ReleaseDecision:
    candidate: Record
    seed_index: int
    omega_used: int
    partition: int
    plausible_count: int
    threshold: float
    passed: bool
    capped: bool = False
    seed_hash: int = field(default=0, repr=False)

    def audit_line(self) -> str:
        verdict = "pass" if self.passed else ("capped-fail" if self.capped else "fail")
        return (f"{self.seed_hash:016x}\t{self.omega_used}\t{self.partition}\t"
                f"{self.plausible_count}\t{self.threshold:.6f}\t{verdict}")


def partition_number(p: float, gamma: float) -> int:
    """The unique ``i >= 0`` with ``gamma**-(i+1) < p <= gamma**-i``."""
    if not 0 < p <= 1:
        raise ValueError(f"probability {p} outside (0, 1]")
    if not gamma > 1:
        raise ValueError("gamma must be > 1")
    x = -math.log(p) / math.log(gamma)
    return max(0, math.floor(x * (1 + _PARTITION_RTOL)))


def partition_numbers(probs: np.ndarray, gamma: float) -> np.ndarray:
    """Vectorized :func:`partition_number`; zero probabilities map to -1."""
    probs = np.asarray(probs, dtype=np.float64)
    out = np.full(probs.shape, -1, dtype=np.int64)
    pos = probs > 0
    if pos.any():
        x = -np.log(probs[pos]) / math.log(gamma)
        out[pos] = np.maximum(0, np.floor(x * (1 + _PARTITION_RTOL))).astype(np.int64)
    return out


def _records(d: Dataset | np.ndarray) -> np.ndarray:
    return d.records if isinstance(d, Dataset) else np.asarray(d)


def count_plausible_seeds(D: Dataset | np.ndarray, y: Sequence[int], i: int, omega: int,
                          model: GenerativeModel, params: PrivacyParams,
                          rng: np.random.Generator | None = None, *,
                          shared_p: float | None = None) -> tuple[int, bool]:
    """Count records of ``D`` whose probability of generating ``y`` lies in partition ``i``.

    Records are examined in a random order; counting stops once
    ``max_plausible`` plausible seeds were found or ``max_check_plausible``
    records were examined.  Returns ``(count, capped)``.

    Every record that agrees with ``y`` on the retained attributes generates
    ``y`` with the same probability and all others have probability 0, so the
    count is the number of such records when that shared probability falls in
    partition ``i``, else 0.  ``shared_p`` skips recomputing it.
    """
    recs = _records(D)
    n = recs.shape[0]
    limit = params.max_check_plausible
    if limit is not None and limit < n:
        if rng is None:
            raise ValueError("an rng is required when max_check_plausible < |D|")
        recs = recs[rng.permutation(n)[:limit]]
        check_capped = True
    else:
        check_capped = False
    found = int(np.count_nonzero(retained_match_mask(model, recs, y, omega)))
    if found:
        p = resampled_probability(model, y, omega) if shared_p is None else shared_p
        if p <= 0 or partition_number(p, params.gamma) != i:
            found = 0
    cap = params.max_plausible
    if cap is not None and found >= cap:
        return cap, True
    return found, check_capped


def _decide(D, d, y, model, params, omega, rng, threshold, seed_index) -> ReleaseDecision:
    p = record_probability(model, d, y, omega)
    if p <= 0:
        raise PrivacyTestError("candidate has zero probability under its own seed")
    i = partition_number(p, params.gamma)
    kp, capped = count_plausible_seeds(D, y, i, omega, model, params, rng, shared_p=p)
    passed = kp >= threshold
    return ReleaseDecision(tuple(int(v) for v in y), seed_index, omega, i, kp, float(threshold), passed,
                           capped and not passed, seed_hash=record_hash(d))


def privacy_test_deterministic(D, d: Sequence[int], y: Sequence[int], model: GenerativeModel,
                               params: PrivacyParams, omega: int,
                               rng: np.random.Generator | None = None,
                               seed_index: int = -1) -> tuple[bool, ReleaseDecision]:
    """Pass iff at least ``k`` records (the seed included) are plausible seeds of ``y``."""
    dec = _decide(D, d, y, model, params, omega, rng, params.k, seed_index)
    return dec.passed, dec


def privacy_test_randomized(D, d: Sequence[int], y: Sequence[int], model: GenerativeModel,
                            params: PrivacyParams, omega: int, rng: np.random.Generator,
                            seed_index: int = -1) -> tuple[bool, ReleaseDecision]:
    """Like the deterministic test, against a threshold ``k + Lap(1/eps0)`` drawn per call."""
    k_tilde = params.k + float(rng.laplace(0.0, 1.0 / params.eps0))
    dec = _decide(D, d, y, model, params, omega, rng, k_tilde, seed_index)
    return dec.passed, dec


def record_hash(record: Sequence[int]) -> int:
    return fnv1a_64(struct.pack(f"<{len(record)}I", *(int(v) for v in record)))


def mechanism_step(d_s: Dataset, model: GenerativeModel, synth: SynthesisParams, params: PrivacyParams,
                   test_kind: str, rng: np.random.Generator) -> tuple[Record | None, ReleaseDecision]:
    """Sample a seed uniformly, synthesize a candidate, release it iff the privacy test passes."""
    n = d_s.n
    if n < params.k:
        raise ValueError(f"|D| = {n} is smaller than k = {params.k}")
    if test_kind not in ("randomized", "deterministic"):
        raise ValueError(f"unknown privacy test {test_kind!r}")
    idx = int(rng.integers(n))
    seed = d_s.record(idx)
    omega = synth.draw(rng)
    y = synthesize(seed, omega, model, rng)
    if test_kind == "randomized":
        passed, dec = privacy_test_randomized(d_s, seed, y, model, params, omega, rng, seed_index=idx)
    else:
        passed, dec = privacy_test_deterministic(d_s, seed, y, model, params, omega, rng, seed_index=idx)
    return (y if passed else None), dec
