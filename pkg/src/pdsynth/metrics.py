"""Statistical utility measures: total-variation distances and model error."""

from __future__ import annotations

import itertools

import numpy as np

from .data import Dataset
from .params import ConfigurationKey, GenerativeModel


def tv_distance(p, q) -> float:
    """Half the L1 distance between two distributions on the same support."""
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise ValueError(f"support mismatch: {p.shape} vs {q.shape}")
    for v in (p, q):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError("input is not a probability vector")
    return float(0.5 * np.abs(p - q).sum())


def attr_distributions(d: Dataset) -> tuple[list[np.ndarray], dict[tuple[int, int], np.ndarray]]:
    """Empirical distribution of each attribute and of each pair ``(i, j)``, ``i < j``.

    Pair distributions are 2-D arrays indexed by raw value indices.
    """
    if d.n == 0:
        raise ValueError("empty dataset")
    card = d.schema.cardinalities
    recs = d.records
    singles = [np.bincount(recs[:, i], minlength=card[i]) / d.n for i in range(d.schema.m)]
    pairs = {}
    for i, j in itertools.combinations(range(d.schema.m), 2):
        codes = recs[:, i] * card[j] + recs[:, j]
        pairs[(i, j)] = (np.bincount(codes, minlength=card[i] * card[j]) / d.n).reshape(card[i], card[j])
    return singles, pairs


def tv_tables(reference: Dataset, candidate: Dataset) -> tuple[list[float], dict[tuple[int, int], float]]:
    if reference.schema.names != candidate.schema.names or \
            reference.schema.cardinalities != candidate.schema.cardinalities:
        raise ValueError("datasets have different schemas")
    rs, rp = attr_distributions(reference)
    cs, cp = attr_distributions(candidate)
    return [tv_distance(a, b) for a, b in zip(rs, cs)], {k: tv_distance(rp[k], cp[k]) for k in rp}


def conditional_column(model: GenerativeModel, attr: int, records: np.ndarray) -> np.ndarray:
    """``Pr[x_attr = r[attr] | parents(r)]`` for every row ``r``."""
    schema = model.schema
    parents = model.graph.parents[attr]
    n = records.shape[0]
    if not parents:
        return model.get_table(ConfigurationKey(attr, ())).probs[records[:, attr]]
    buckets = np.stack([schema.bucket_map(j)[records[:, j]] for j in parents], axis=1)
    uniq, inv = np.unique(buckets, axis=0, return_inverse=True)
    inv = inv.reshape(n)
    out = np.empty(n, dtype=np.float64)
    for u, row in enumerate(uniq):
        sel = inv == u
        probs = model.get_table(ConfigurationKey(attr, tuple(int(b) for b in row))).probs
        out[sel] = probs[records[sel, attr]]
    return out


def most_likely_values(model: GenerativeModel, attr: int, records: np.ndarray) -> np.ndarray:
    """Argmax over values of ``attr`` of the joint with every other attribute fixed.

    Only the factors that involve ``attr`` are evaluated; ties go to the
    smallest value index.
    """
    card = model.schema.cardinalities[attr]
    involved = [attr] + model.graph.children(attr)
    scores = np.empty((records.shape[0], card))
    trial = records.copy()
    with np.errstate(divide="ignore"):
        for v in range(card):
            trial[:, attr] = v
            s = np.zeros(records.shape[0])
            for a in involved:
                s += np.log(conditional_column(model, a, trial))
            scores[:, v] = s
    return np.argmax(scores, axis=1)


def model_error(model: GenerativeModel, test: Dataset) -> list[float]:
    """Per-attribute fraction of records whose most likely value is not the true one."""
    if test.n == 0:
        raise ValueError("empty test set")
    recs = test.records
    return [float(np.mean(most_likely_values(model, i, recs) != recs[:, i])) for i in range(model.m)]
