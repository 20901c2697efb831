"""Command line entry point: ``pdsynth learn|generate|verify|metrics``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .accounting import (DpBudget, InfeasibleBudget, budget_report, check_delta,
                         max_t_for_delta, seq_compose, solve_per_query, theorem1_params)
from .config import ConfigError, RunConfig, load_config
from .data import Dataset, DatasetError, SchemaError, load_dataset, load_schema, partition_dataset, parse_schema, \
    write_dataset
from .generation import GENERATION_STREAM, generate
from .metrics import model_error, tv_tables
from .oracle import Theorem1Report, check_theorem1, sensitivity_bruteforce, universe
from .params import GenerativeModel
from .structure import DependencyGraph, learn_structure

log = logging.getLogger("pdsynth")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_VERIFY = 4

PARTITION_STREAM = 0
STRUCTURE_STREAM = 1
VERIFY_STREAM = 3


class VerificationFailure(RuntimeError):
    pass


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(p: Path | None, what: str) -> Path:
    if p is None:
        raise ConfigError(f"config is missing {what}")
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _load_inputs(cfg: RunConfig):
    schema = load_schema(_require(cfg.schema, "[data] schema"))
    data = load_dataset(_require(cfg.dataset, "[data] dataset"), schema)
    return schema, data


def _split(cfg: RunConfig, data: Dataset):
    return partition_dataset(data, cfg.fractions, np.random.default_rng([cfg.seed, PARTITION_STREAM]))


def resolve_t(cfg: RunConfig, n_s: int) -> int | None:
    """Configured ``t``, else the largest ``t`` with ``delta <= 1/|D_S|``; None if no valid t exists."""
    if cfg.t is not None:
        return cfg.t
    t = max_t_for_delta(cfg.k, cfg.eps0, max(n_s, 2), 1.0)
    return t if t >= 1 else None


def _privacy_block(cfg: RunConfig, n_s: int) -> dict:
    t = resolve_t(cfg, n_s)
    thm = theorem1_params(cfg.k, cfg.gamma, cfg.eps0, t).as_dict() if t is not None else None
    return {
        "k": cfg.k, "gamma": cfg.gamma, "eps0": cfg.eps0, "t": t, "omega": str(cfg.omega),
        "test": cfg.test, "max_plausible": cfg.max_plausible,
        "max_check_plausible": cfg.max_check_plausible, "theorem1": thm,
    }


def _cross_release(privacy: dict, released: int) -> dict | None:
    """Sequential composition over all releases: a loose upper bound, reported as such."""
    thm = privacy["theorem1"]
    if thm is None or released == 0:
        return None
    b = seq_compose([DpBudget(thm["eps"], thm["delta"])] * released)
    return {"kind": "sequential composition upper bound", "releases": released, **b.as_dict()}


def _seeds(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "partition_stream": [cfg.seed, PARTITION_STREAM],
        "structure_stream": [cfg.seed, STRUCTURE_STREAM],
        "candidate_stream": [cfg.seed, GENERATION_STREAM, "<index>"],
        "table_seed": cfg.seed,
    }


def cmd_learn(cfg: RunConfig) -> dict:
    schema, data = _load_inputs(cfg)
    d_s, d_t, d_p = _split(cfg, data)
    if d_t.n < 2:
        raise DatasetError("structure-learning subset has fewer than 2 records")
    sampling_p = max(cfg.fractions[1], cfg.fractions[2]) if cfg.amplify else None
    per = solve_per_query(DpBudget(cfg.eps_target, cfg.delta_target), schema.m, sampling_p)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        check_delta(cfg.delta_target, data.n, "delta_target")
    for w in caught:
        log.warning("%s", w.message)
    graph, table = learn_structure(d_t, per.eps_h, per.eps_nt, cfg.maxcost,
                                   np.random.default_rng([cfg.seed, STRUCTURE_STREAM]))
    artifact = {
        "tool_version": __version__,
        "schema": schema.dumps(),
        "dataset_sha256": _sha256(cfg.dataset),
        "fractions": list(cfg.fractions),
        "subset_sizes": {"S": d_s.n, "T": d_t.n, "P": d_p.n, "dropped_rows": data.dropped},
        "maxcost": cfg.maxcost,
        "alpha": cfg.alpha,
        "parents": [list(p) for p in graph.parents],
        "sigma": list(graph.sigma),
        "entropy_table": table.to_dict(),
        "per_query": {"eps_H": per.eps_h, "eps_nT": per.eps_nt, "eps_p": per.eps_p,
                      "delta_L": per.delta_l, "delta_P": per.delta_p},
        "budget": budget_report(per, schema.m, sampling_p),
        "target": {"eps": cfg.eps_target, "delta": cfg.delta_target, "amplify": cfg.amplify},
        "privacy": _privacy_block(cfg, d_s.n),
        "seeds": _seeds(cfg),
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg.out / "model.json", artifact)
    (cfg.out / "graph.txt").write_text(graph.to_text(schema), encoding="utf-8")
    log.info("learned structure with %d edges; model eps=%.6g", len(graph.edges()),
             artifact["budget"]["model"]["eps"])
    return artifact


def _model_path(cfg: RunConfig) -> Path:
    return cfg.model if cfg.model is not None else cfg.out / "model.json"


def load_model(cfg: RunConfig) -> tuple[dict, Dataset, GenerativeModel]:
    """Rebuild ``(artifact, D_S, model)`` from a learned artifact and the configured inputs."""
    path = _model_path(cfg)
    if not path.exists():
        raise ConfigError(f"model artifact not found: {path} (run 'pdsynth learn' first)")
    art = json.loads(path.read_text(encoding="utf-8"))
    schema, data = _load_inputs(cfg)
    if schema.dumps() != art["schema"]:
        raise SchemaError("configured schema differs from the one the model was learned with")
    if _sha256(cfg.dataset) != art["dataset_sha256"]:
        raise DatasetError("configured dataset differs from the one the model was learned with")
    if art["seeds"]["seed"] != cfg.seed or tuple(art["fractions"]) != tuple(cfg.fractions):
        raise ConfigError("seed or fractions differ from the learned model; re-run learn")
    d_s, _, d_p = _split(cfg, data)
    graph = DependencyGraph([tuple(p) for p in art["parents"]], tuple(art["sigma"]))
    model = GenerativeModel(schema, graph, d_p, art["per_query"]["eps_p"], cfg.seed, art["alpha"])
    return art, d_s, model


def cmd_generate(cfg: RunConfig) -> dict:
    art, d_s, model = load_model(cfg)
    if d_s.n < cfg.k:
        raise DatasetError(f"|D_S| = {d_s.n} is smaller than k = {cfg.k}")
    cfg.omega.validate(model.m)
    t0 = time.monotonic()
    res = generate(model, d_s, cfg.omega, cfg.privacy, cfg.test, cfg.count, cfg.seed,
                   workers=cfg.workers, batch=cfg.batch, time_budget=cfg.time_budget)
    wall = time.monotonic() - t0
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(out / "synthetic.csv", schema=model.schema, records=res.released)
    with open(out / "audit.log", "w", encoding="utf-8") as fh:
        fh.write("seed_hash\tomega\tpartition\tplausible\tthreshold\tverdict\n")
        for dec in res.decisions:
            fh.write(dec.audit_line() + "\n")
    privacy = _privacy_block(cfg, d_s.n)
    meta = {
        "tool_version": __version__,
        "cross_release": _cross_release(privacy, len(res.released)),
        "released": len(res.released),
        "requested": cfg.count,
        "counts": res.counts,
        "timed_out": res.timed_out,
        "privacy": privacy,
        "per_query": art["per_query"],
        "budget": art["budget"],
        "seeds": _seeds(cfg),
        "batch": cfg.batch,
    }
    _dump_json(out / "metadata.json", meta)
    _dump_json(out / "timing.json", {"wall_seconds": wall, "workers": cfg.workers,
                                      "candidates_per_minute": 60 * res.examined / wall if wall > 0 else None})
    if cfg.save_tables:
        model.save_cache(out / "tables.jsonl")
    log.info("released %d of %d candidates in %.1fs", len(res.released), res.examined, wall)
    return meta


def verify_model(cardinalities, records) -> GenerativeModel:
    """Noise-free chain model ``x_0 -> x_1 -> ...`` fitted on ``records``."""
    text = "".join(f"[a{i}]\nvalues = 0..{c - 1}\n" for i, c in enumerate(cardinalities))
    schema = parse_schema(text)
    m = len(cardinalities)
    graph = DependencyGraph.from_parents([() if i == 0 else (i - 1,) for i in range(m)])
    return GenerativeModel(schema, graph, Dataset.from_records(schema, records), math.inf, 0)


def cmd_verify(cfg: RunConfig) -> dict:
    vc = cfg.verify
    t0 = time.monotonic()
    sens = []
    for bins in range(1, vc.sensitivity_bins + 1):
        for n in range(1, vc.sensitivity_n + 1):
            r = sensitivity_bruteforce(bins, n)
            sens.append({"bins": bins, "n": n, "max_observed": r.max_observed, "bound": r.bound, "ok": r.ok})
    sens_viol = sum(not s["ok"] for s in sens)

    uni = universe(vc.cardinalities)
    if vc.records is not None:
        D = [tuple(r) for r in vc.records]
    else:
        rng = np.random.default_rng([cfg.seed, VERIFY_STREAM])
        D = [uni[i] for i in rng.integers(len(uni), size=vc.size)]
    model = verify_model(vc.cardinalities, D)
    sweeps = []
    total = None
    for k, gamma, eps0, t in itertools.product(vc.k, vc.gamma, vc.eps0, vc.t):
        if not t < k or len(D) < k:
            continue
        rep = None
        for dp in uni:
            r = check_theorem1(D, dp, uni, model, vc.omega, k, gamma, eps0, t,
                               eps=vc.eps_override, delta=vc.delta_override)
            if rep is None:
                rep = r
            else:
                rep.merge(r)
        sweeps.append({"k": k, "gamma": gamma, "eps0": eps0, "t": t, **rep.to_dict()})
        if total is None:
            total = Theorem1Report(math.nan, math.nan)
        total.merge(rep)
    report = {
        "tool_version": __version__,
        "privacy": _privacy_block(cfg, len(D)) if cfg.t is not None else None,
        "seeds": {**_seeds(cfg), "verify_stream": [cfg.seed, VERIFY_STREAM]},
        "sensitivity": {"cases": len(sens), "violations": sens_viol,
                        "max_ratio": max(s["max_observed"] / s["bound"] for s in sens) if sens else None},
        "theorem1": {
            "universe": list(vc.cardinalities), "records": [list(r) for r in D], "omega": vc.omega,
            "configurations": total.configurations if total else 0,
            "violations": len(total.violations) if total else 0,
            "worst_margin": total.worst_margin if total else None,
            "worst_sandwich_margin": total.worst_sandwich if total else None,
            "worst_monotonicity_margin": total.worst_monotonicity if total else None,
            "eps_override": vc.eps_override, "delta_override": vc.delta_override,
            "sweeps": sweeps,
        },
        "ok": sens_viol == 0 and (total is None or total.ok),
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg.out / "verify_report.json", report)
    log.info("verification %s in %.1fs", "passed" if report["ok"] else "FAILED", time.monotonic() - t0)
    if not report["ok"]:
        raise VerificationFailure(
            f"{sens_viol} sensitivity and {report['theorem1']['violations']} privacy violations")
    return report


def cmd_metrics(cfg: RunConfig) -> list[tuple[str, str, float]]:
    schema = load_schema(_require(cfg.schema, "[data] schema"))
    ref = load_dataset(_require(cfg.reference, "[metrics] reference"), schema)
    cand = load_dataset(_require(cfg.candidate, "[metrics] candidate"), schema)
    singles, pairs = tv_tables(ref, cand)
    names = schema.names
    rows = [(names[i], "tv_single", v) for i, v in enumerate(singles)]
    rows += [(f"{names[i]}|{names[j]}", "tv_pair", v) for (i, j), v in sorted(pairs.items())]
    if cfg.test_set is not None:
        test = load_dataset(_require(cfg.test_set, "[metrics] test"), schema)
        _, _, model = load_model(cfg)
        rows += [(names[i], "model_error", v) for i, v in enumerate(model_error(model, test))]
    rows.append(("*", "mean_tv_single", float(np.mean(singles))))
    if pairs:
        rows.append(("*", "mean_tv_pair", float(np.mean(list(pairs.values())))))
    cfg.out.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg.out / "metrics_meta.json", {
        "tool_version": __version__, "reference": str(cfg.reference), "candidate": str(cfg.candidate),
        "test": None if cfg.test_set is None else str(cfg.test_set),
        "reference_rows": ref.n, "candidate_rows": cand.n})
    with open(cfg.out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["attribute", "metric", "value"])
        for a, m, v in rows:
            w.writerow([a, m, f"{v:.10g}"])
    return rows


COMMANDS = {"learn": cmd_learn, "generate": cmd_generate, "verify": cmd_verify, "metrics": cmd_metrics}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdsynth", description="Plausibly deniable synthetic data generation.")
    p.add_argument("--version", action="version", version=f"pdsynth {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="run configuration (INI)")
    p.add_argument("--seed", type=int, help="override [data] seed")
    p.add_argument("--workers", type=int, help="override [generation] workers")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.workers, args.out)
        COMMANDS[args.command](cfg)
    except InfeasibleBudget as exc:
        print(f"error: infeasible budget: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except VerificationFailure as exc:
        print(f"error: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ConfigError, SchemaError, DatasetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
