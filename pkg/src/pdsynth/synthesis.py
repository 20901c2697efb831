"""Seed-based record synthesis and exact generation probabilities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Record
from .params import ConfigurationKey, GenerativeModel


@dataclass(frozen=True)
class SynthesisParams:
    """Number of resampled attributes: a fixed ``omega`` or a uniform range ``[lo, hi]``."""

    omega_lo: int
    omega_hi: int | None = None

    @property
    def hi(self) -> int:
        return self.omega_lo if self.omega_hi is None else self.omega_hi

    def validate(self, m: int) -> None:
        if not 1 <= self.omega_lo <= self.hi <= m:
            raise ValueError(f"omega range [{self.omega_lo}, {self.hi}] not within 1..{m}")

    def draw(self, rng: np.random.Generator) -> int:
        if self.omega_hi is None or self.omega_hi == self.omega_lo:
            return self.omega_lo
        return int(rng.integers(self.omega_lo, self.omega_hi + 1))

    @classmethod
    def parse(cls, text: str | int) -> SynthesisParams:
        s = str(text).strip()
        if "-" in s:
            lo, hi = s.split("-", 1)
            return cls(int(lo), int(hi))
        return cls(int(s))

    def __str__(self) -> str:
        return str(self.omega_lo) if self.hi == self.omega_lo else f"{self.omega_lo}-{self.hi}"


def _check_omega(model: GenerativeModel, omega: int) -> None:
    if not 1 <= omega <= model.m:
        raise ValueError(f"omega={omega} outside 1..{model.m}")


def synthesize(seed: Sequence[int], omega: int, model: GenerativeModel,
               rng: np.random.Generator) -> Record:
    """Copy the first ``m - omega`` attributes in sigma order from ``seed`` and resample the rest.

    Each resampled attribute is drawn from its conditional given the current
    parent values, which are seed values for retained parents and fresh
    values for parents resampled earlier.
    """
    _check_omega(model, omega)
    out = [int(v) for v in seed]
    for attr in model.sigma[model.m - omega:]:
        out[attr] = model.get_table(model.key_for(attr, out)).draw(rng)
    return tuple(out)


def synthesize_marginal(model: GenerativeModel, rng: np.random.Generator) -> Record:
    """Baseline: every attribute drawn independently from its noisy marginal."""
    return tuple(model.get_table(ConfigurationKey(attr, ())).draw(rng) for attr in range(model.m))


def resampled_probability(model: GenerativeModel, y: Sequence[int], omega: int) -> float:
    """Product of conditionals over the resampled attributes, parents read from ``y``."""
    p = 1.0
    for attr in model.sigma[model.m - omega:]:
        p *= float(model.conditional(attr, y)[y[attr]])
    return p


def record_probability(model: GenerativeModel, d: Sequence[int], y: Sequence[int], omega: int) -> float:
    """Exact ``Pr[y = M(d)]`` for the seed-based synthesizer with the given ``omega``."""
    _check_omega(model, omega)
    if len(d) != model.m or len(y) != model.m:
        raise ValueError("record length does not match schema")
    for attr in model.sigma[: model.m - omega]:
        if d[attr] != y[attr]:
            return 0.0
    return resampled_probability(model, y, omega)


def retained_match_mask(model: GenerativeModel, records: np.ndarray, y: Sequence[int], omega: int) -> np.ndarray:
    """Rows of ``records`` that agree with ``y`` on every retained attribute."""
    _check_omega(model, omega)
    mask = np.ones(records.shape[0], dtype=bool)
    for attr in model.sigma[: model.m - omega]:
        mask &= records[:, attr] == y[attr]
    return mask


def record_probabilities(model: GenerativeModel, records: np.ndarray, y: Sequence[int], omega: int) -> np.ndarray:
    """``record_probability(model, d, y, omega)`` for every row ``d`` of ``records``.

    Rows that disagree with ``y`` on a retained attribute get 0; all others
    share the same value, computed once.
    """
    mask = retained_match_mask(model, records, y, omega)
    out = np.zeros(records.shape[0], dtype=np.float64)
    if mask.any():
        out[mask] = resampled_probability(model, y, omega)
    return out
