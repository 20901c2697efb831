"""Shared builders for toy schemas, datasets and models."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from pdsynth.data import Dataset, Schema, parse_schema, write_dataset
from pdsynth.params import GenerativeModel
from pdsynth.structure import DependencyGraph

DESK_CARDS = (8, 6, 5, 4, 10, 3, 7, 2, 6, 4, 12)

# filled by the acceptance suite, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def int_schema(cards, widths=None) -> Schema:
    """Attributes ``a0..`` with values ``0..c-1``; optional fixed-width bucketing per attribute."""
    parts = []
    for i, c in enumerate(cards):
        parts.append(f"[a{i}]\nvalues = 0..{c - 1}\n")
        if widths and widths[i] and widths[i] > 1:
            parts.append(f"bucketizer = width:{widths[i]},origin:0\n")
    return parse_schema("".join(parts))


def chain_dataset(cards, n: int, rng: np.random.Generator, concentration: float = 0.3,
                  second_parent: bool = True) -> Dataset:
    """Records from a random network where ``a_i`` depends on ``a_{i-1}`` (and ``a_{i-2}``).

    Low Dirichlet concentration makes the conditionals peaked, i.e. strong
    pairwise dependence.
    """
    schema = int_schema(cards)
    m = len(cards)
    recs = np.zeros((n, m), dtype=np.int64)
    recs[:, 0] = rng.choice(cards[0], size=n, p=rng.dirichlet(np.ones(cards[0])))
    for i in range(1, m):
        pa = [i - 1] + ([i - 2] if second_parent and i >= 2 else [])
        shape = tuple(cards[j] for j in pa)
        cpt = rng.dirichlet(np.full(cards[i], concentration), size=int(np.prod(shape))).reshape(*shape, cards[i])
        cdf = np.cumsum(cpt[tuple(recs[:, j] for j in pa)], axis=1)
        u = rng.random(n)[:, None]
        recs[:, i] = np.minimum((u > cdf).sum(axis=1), cards[i] - 1)
    return Dataset(schema, recs)


def exact_model(schema: Schema, parents, records, eps_p: float = math.inf, seed: int = 0,
                alpha: float = 1.0) -> GenerativeModel:
    d = records if isinstance(records, Dataset) else Dataset.from_records(schema, records)
    return GenerativeModel(schema, DependencyGraph.from_parents(parents), d, eps_p, seed, alpha)


def write_project(root, cards=(4, 3, 5, 2, 3), n: int = 3000, seed: int = 0, **sections) -> Path:
    """Write schema.ini, data.csv and config.ini under ``root``; returns the config path.

    ``sections`` maps section names to dicts of extra keys, e.g.
    ``privacy={"k": 5}``.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    d = chain_dataset(cards, n, np.random.default_rng(seed))
    (root / "schema.ini").write_text(d.schema.dumps(), encoding="utf-8")
    write_dataset(root / "data.csv", d)
    conf = {
        "data": {"schema": "schema.ini", "dataset": "data.csv", "seed": "7"},
        "model": {"eps_target": "1.0"},
        "privacy": {"k": "10", "gamma": "4", "eps0": "1", "omega": f"1-{len(cards)}"},
        "generation": {"count": "50", "out": "out", "batch": "16"},
    }
    for sec, kv in sections.items():
        conf.setdefault(sec, {}).update({k: str(v) for k, v in kv.items()})
    text = "".join(f"[{sec}]\n" + "".join(f"{k} = {v}\n" for k, v in kv.items()) for sec, kv in conf.items())
    path = root / "config.ini"
    path.write_text(text, encoding="utf-8")
    return path
