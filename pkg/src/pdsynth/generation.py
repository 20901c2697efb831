"""Parallel candidate generation with worker-count independent results.

Candidate ``i`` always uses the RNG stream ``(seed, i)``, so its outcome does
not depend on which worker evaluates it.  Batches of consecutive indices are
farmed out and merged in index order; the run keeps the first ``count``
released candidates.
"""

from __future__ import annotations

import time
from concurrent.futures import FIRST_COMPLETED, Future, ProcessPoolExecutor, wait
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Record
from .params import GenerativeModel
from .privacy import PrivacyParams, ReleaseDecision, mechanism_step
from .synthesis import SynthesisParams

GENERATION_STREAM = 2

_WORKER: dict = {}


def candidate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), GENERATION_STREAM, int(index)])


@dataclass
class GenerationResult:
    released: list[Record] = field(default_factory=list)
    decisions: list[ReleaseDecision] = field(default_factory=list)
    examined: int = 0
    timed_out: bool = False

    @property
    def counts(self) -> dict[str, int]:
        passed = sum(d.passed for d in self.decisions)
        capped = sum(d.capped for d in self.decisions)
        return {"candidates": len(self.decisions), "pass": passed,
                "fail": len(self.decisions) - passed - capped, "capped_fail": capped}


def run_batch(model: GenerativeModel, d_s: Dataset, synth: SynthesisParams, params: PrivacyParams,
              test_kind: str, seed: int, start: int, stop: int) -> list[tuple[Record | None, ReleaseDecision]]:
    return [mechanism_step(d_s, model, synth, params, test_kind, candidate_rng(seed, i))
            for i in range(start, stop)]


def _init_worker(model, d_s, synth, params, test_kind, seed) -> None:
    _WORKER.update(model=model, d_s=d_s, synth=synth, params=params, test_kind=test_kind, seed=seed)


def _worker_batch(start: int, stop: int):
    w = _WORKER
    return run_batch(w["model"], w["d_s"], w["synth"], w["params"], w["test_kind"], w["seed"], start, stop)


class _Merger:
    def __init__(self, count: int):
        self.count = count
        self.result = GenerationResult()

    @property
    def done(self) -> bool:
        return len(self.result.released) >= self.count

    def add(self, items) -> None:
        for y, dec in items:
            if self.done:
                return
            self.result.decisions.append(dec)
            self.result.examined += 1
            if y is not None:
                self.result.released.append(y)


def generate(model: GenerativeModel, d_s: Dataset, synth: SynthesisParams, params: PrivacyParams,
             test_kind: str, count: int, seed: int, workers: int = 1, batch: int = 64,
             time_budget: float | None = None, max_candidates: int | None = None) -> GenerationResult:
    """Run the release mechanism until ``count`` records are released.

    Stops early on ``time_budget`` seconds or after ``max_candidates``
    candidates; only those stops make the output depend on timing.
    """
    if d_s.n < params.k:
        raise ValueError(f"|D_S| = {d_s.n} is smaller than k = {params.k}")
    synth.validate(model.m)
    merger = _Merger(count)
    if count == 0:
        return merger.result
    t0 = time.monotonic()
    limit = max_candidates if max_candidates is not None else np.iinfo(np.int64).max

    def out_of_time() -> bool:
        return time_budget is not None and time.monotonic() - t0 > time_budget

    if workers == 1:
        nxt = 0
        while not merger.done and nxt < limit:
            if out_of_time():
                merger.result.timed_out = True
                break
            stop = min(nxt + batch, limit)
            merger.add(run_batch(model, d_s, synth, params, test_kind, seed, nxt, stop))
            nxt = stop
        return merger.result

    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(model, d_s, synth, params, test_kind, seed)) as pool:
        pending: dict[int, Future] = {}
        ready: dict[int, list] = {}
        nxt_start = 0
        nxt_merge = 0
        in_flight = 2 * workers
        while not merger.done:
            while len(pending) < in_flight and nxt_start < limit:
                stop = min(nxt_start + batch, limit)
                pending[nxt_start] = pool.submit(_worker_batch, nxt_start, stop)
                nxt_start = stop
            if not pending:
                break
            finished, _ = wait(pending.values(), return_when=FIRST_COMPLETED)
            for start in [s for s, f in pending.items() if f in finished]:
                ready[start] = pending.pop(start).result()
            while nxt_merge in ready and not merger.done:
                items = ready.pop(nxt_merge)
                merger.add(items)
                nxt_merge += len(items)
            if out_of_time():
                merger.result.timed_out = True
                break
        for f in pending.values():
            f.cancel()
    return merger.result
