"""Differential-privacy budget arithmetic."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable

DEFAULT_DELTA = 2.0 ** -30


class InfeasibleBudget(ValueError):
    pass


@dataclass(frozen=True)
class DpBudget:
    eps: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if not 0 <= self.delta <= 1:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")

    def as_dict(self) -> dict:
        return {"eps": self.eps, "delta": self.delta}


def theorem1_params(k: int, gamma: float, eps0: float, t: int) -> DpBudget:
    """(eps, delta) of the mechanism with the randomized test, for a trade-off integer ``t``."""
    if not 1 <= t < k:
        raise ValueError(f"need 1 <= t < k, got t={t}, k={k}")
    if not gamma > 1 or not eps0 > 0:
        raise ValueError("need gamma > 1 and eps0 > 0")
    return DpBudget(eps0 + math.log1p(gamma / t), math.exp(-eps0 * (k - t)))


def max_t_for_delta(k: int, eps0: float, n: int, c: float) -> int:
    """Largest ``t`` keeping ``exp(-eps0 (k - t)) <= n**-c``; 0 if none exists."""
    t = math.floor(k - c * math.log(n) / eps0)
    return max(0, min(t, k - 1))


def seq_compose(budgets: Iterable[DpBudget]) -> DpBudget:
    items = list(budgets)
    if not items:
        raise ValueError("nothing to compose")
    return DpBudget(math.fsum(b.eps for b in items), min(1.0, math.fsum(b.delta for b in items)))


def _kexpm1(count: float, eps: float) -> float:
    try:
        return count * eps * math.expm1(eps)
    except OverflowError:
        return math.inf


def adv_compose(eps: float, delta: float, count: int, delta_slack: float) -> DpBudget:
    """Advanced composition of ``count`` (eps, delta)-DP mechanisms."""
    if not eps >= 0 or count < 1:
        raise ValueError("need eps >= 0 and count >= 1")
    if not 0 < delta_slack < 1:
        raise ValueError(f"delta slack must be in (0, 1), got {delta_slack}")
    e = eps * math.sqrt(2 * count * math.log(1 / delta_slack)) + _kexpm1(count, eps)
    return DpBudget(e, min(1.0, count * delta + delta_slack))


def amplify(eps: float, delta: float, p: float) -> DpBudget:
    """Privacy amplification by Poisson subsampling with rate ``p``."""
    if not delta < p < 1:
        raise ValueError(f"sampling rate must satisfy delta < p < 1, got p={p}")
    try:
        e = math.log1p(p * math.expm1(eps))
    except OverflowError:
        e = eps + math.log(p)  # log(1 + p(e^eps - 1)) for huge eps
    return DpBudget(e, p * delta)


def structure_budget(m: int, eps_h: float, eps_nt: float, delta_l: float = DEFAULT_DELTA) -> DpBudget:
    entropies = adv_compose(eps_h, 0.0, m * (m + 1), delta_l)
    return DpBudget(eps_nt + entropies.eps, entropies.delta)


def parameter_budget(m: int, eps_p: float, delta_p: float = DEFAULT_DELTA) -> DpBudget:
    return adv_compose(eps_p, 0.0, m, delta_p)


def model_budget(structure: DpBudget, parameter: DpBudget, sampling_p: float | None = None) -> DpBudget:
    """Max over the disjoint structure/parameter subsets, optionally amplified by sampling."""
    b = DpBudget(max(structure.eps, parameter.eps), max(structure.delta, parameter.delta))
    if sampling_p is not None:
        b = amplify(b.eps, b.delta, sampling_p)
    return b


def check_delta(delta: float, n: int, what: str = "delta") -> bool:
    """Warn when ``delta`` is not well below ``1/n``."""
    ok = n <= 0 or delta < 1.0 / n
    if not ok:
        warnings.warn(f"{what}={delta:g} is not much smaller than 1/n = {1.0 / n:g}", stacklevel=2)
    return ok


def _bisect(f, target: float, rtol: float = 1e-9) -> float:
    lo, hi = 0.0, 1e-6
    while f(hi) < target:
        lo, hi = hi, hi * 2
        if hi > 1e6:
            raise InfeasibleBudget("solve_per_query: target unreachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) <= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return lo


@dataclass(frozen=True)
class PerQueryEpsilons:
    eps_h: float
    eps_nt: float
    eps_p: float
    delta_l: float
    delta_p: float


def solve_per_query(target: DpBudget, m: int, sampling_p: float | None = None) -> PerQueryEpsilons:
    """Per-query epsilons whose model budget meets ``target`` (to ~1e-9 relative, never above).

    The structure side (with ``eps_nT = eps_H``) and the parameter side are
    solved separately so that each reaches the target on its own; their max
    is then the target.
    """
    if not (target.eps > 0 and math.isfinite(target.eps)):
        raise InfeasibleBudget(f"solve_per_query: target eps must be positive and finite, got {target.eps}")
    if not target.delta > 0:
        raise InfeasibleBudget("solve_per_query: target delta must be positive")
    if m < 1:
        raise ValueError("need at least one attribute")
    if sampling_p is None:
        pre_eps, delta = target.eps, target.delta
    else:
        if not 0 < sampling_p < 1:
            raise ValueError("sampling rate must be in (0, 1)")
        # invert eps' = log(1 + p(e^eps - 1)) and delta' = p delta
        try:
            pre_eps = math.log1p(math.expm1(target.eps) / sampling_p)
        except OverflowError:
            pre_eps = target.eps - math.log(sampling_p)
        delta = target.delta / sampling_p
    delta = min(delta, 0.5)
    if not delta < (1.0 if sampling_p is None else sampling_p) or delta <= 0:
        raise InfeasibleBudget("solve_per_query: delta target not attainable")

    def struct_eps(s: float) -> float:
        return structure_budget(m, s, s, delta).eps

    def param_eps(s: float) -> float:
        return parameter_budget(m, s, delta).eps

    s_l = _bisect(struct_eps, pre_eps)
    s_p = _bisect(param_eps, pre_eps)
    if s_l <= 0 or s_p <= 0:
        raise InfeasibleBudget("solve_per_query: no positive solution")
    return PerQueryEpsilons(s_l, s_l, s_p, delta, delta)


def budget_report(eps: PerQueryEpsilons, m: int, sampling_p: float | None = None) -> dict:
    s = structure_budget(m, eps.eps_h, eps.eps_nt, eps.delta_l)
    p = parameter_budget(m, eps.eps_p, eps.delta_p)
    total = model_budget(s, p, sampling_p)
    return {
        "per_query": {"eps_H": eps.eps_h, "eps_nT": eps.eps_nt, "eps_p": eps.eps_p},
        "structure": s.as_dict(),
        "parameters": p.as_dict(),
        "sampling_p": sampling_p,
        "model": total.as_dict(),
    }
