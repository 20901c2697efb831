"""Run configuration: an INI file with [data], [model], [privacy], [generation], [verify] and [metrics]."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .accounting import DEFAULT_DELTA
from .data import DEFAULT_FRACTIONS
from .privacy import DEFAULT_MAX_CHECK_PLAUSIBLE, DEFAULT_MAX_PLAUSIBLE, PrivacyParams
from .structure import DEFAULT_MAXCOST
from .synthesis import SynthesisParams


class ConfigError(ValueError):
    pass


_KNOWN = {
    "data": {"schema", "dataset", "fractions", "seed"},
    "model": {"maxcost", "alpha", "eps_target", "delta_target", "amplify"},
    "privacy": {"k", "gamma", "eps0", "t", "omega", "max_plausible", "max_check_plausible", "test"},
    "generation": {"count", "workers", "out", "time_budget", "batch", "model", "save_tables"},
    "verify": {"cardinalities", "records", "size", "omega", "k", "gamma", "eps0", "t",
               "sensitivity_bins", "sensitivity_n", "eps_override", "delta_override"},
    "metrics": {"reference", "candidate", "test", "model"},
}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _optional_cap(text: str | None, default: int) -> int | None:
    if text is None:
        return default
    if text.strip().lower() in ("none", "off", "inf"):
        return None
    return int(text)


@dataclass
class VerifyConfig:
    cardinalities: tuple[int, ...] = (2, 2, 2)
    records: tuple[tuple[int, ...], ...] | None = None
    size: int = 6
    omega: int = 2
    k: tuple[int, ...] = (3, 5)
    gamma: tuple[float, ...] = (2.0, 4.0)
    eps0: tuple[float, ...] = (0.5, 1.0)
    t: tuple[int, ...] = (1, 2)
    sensitivity_bins: int = 4
    sensitivity_n: int = 12
    eps_override: float | None = None
    delta_override: float | None = None


@dataclass
class RunConfig:
    base_dir: Path = field(default_factory=Path.cwd)
    schema: Path | None = None
    dataset: Path | None = None
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    seed: int = 0
    maxcost: int = DEFAULT_MAXCOST
    alpha: float = 1.0
    eps_target: float = 1.0
    delta_target: float = DEFAULT_DELTA
    amplify: bool = True
    k: int = 50
    gamma: float = 4.0
    eps0: float = 1.0
    t: int | None = None
    omega: SynthesisParams = field(default_factory=lambda: SynthesisParams(5, 11))
    max_plausible: int | None = DEFAULT_MAX_PLAUSIBLE
    max_check_plausible: int | None = DEFAULT_MAX_CHECK_PLAUSIBLE
    test: str = "randomized"
    count: int = 1000
    workers: int = 1
    out: Path = Path("out")
    time_budget: float | None = None
    batch: int = 64
    model: Path | None = None
    save_tables: bool = False
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    reference: Path | None = None
    candidate: Path | None = None
    test_set: Path | None = None

    @property
    def privacy(self) -> PrivacyParams:
        return PrivacyParams(self.k, self.gamma, self.eps0, self.max_plausible, self.max_check_plausible)

    def with_overrides(self, seed: int | None = None, workers: int | None = None,
                       out: str | Path | None = None) -> RunConfig:
        c = self
        if seed is not None:
            c = replace(c, seed=int(seed))
        if workers is not None:
            if workers < 1:
                raise ConfigError("workers must be >= 1")
            c = replace(c, workers=int(workers))
        if out is not None:
            c = replace(c, out=Path(out))
        return c


def parse_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for sec in cp.sections():
        if sec not in _KNOWN:
            raise ConfigError(f"unknown section [{sec}]")
        unknown = set(cp[sec]) - _KNOWN[sec]
        if unknown:
            raise ConfigError(f"unknown keys in [{sec}]: {', '.join(sorted(unknown))}")

    base = Path(base_dir)

    def get(sec: str, key: str) -> str | None:
        return cp.get(sec, key, fallback=None)

    def path(sec: str, key: str) -> Path | None:
        v = get(sec, key)
        return None if v is None else base / v

    c = RunConfig(base_dir=base)
    try:
        c.schema = path("data", "schema")
        c.dataset = path("data", "dataset")
        if (v := get("data", "fractions")) is not None:
            f = _floats(v)
            if len(f) != 3:
                raise ConfigError("fractions needs three values (S, T, P)")
            c.fractions = f  # type: ignore[assignment]
        if (v := get("data", "seed")) is not None:
            c.seed = int(v)

        if (v := get("model", "maxcost")) is not None:
            c.maxcost = int(v)
        if (v := get("model", "alpha")) is not None:
            c.alpha = float(v)
        if (v := get("model", "eps_target")) is not None:
            c.eps_target = float(v)
        if (v := get("model", "delta_target")) is not None:
            c.delta_target = float(v)
        if cp.has_option("model", "amplify"):
            c.amplify = cp.getboolean("model", "amplify")

        if (v := get("privacy", "k")) is not None:
            c.k = int(v)
        if (v := get("privacy", "gamma")) is not None:
            c.gamma = float(v)
        if (v := get("privacy", "eps0")) is not None:
            c.eps0 = float(v)
        if (v := get("privacy", "t")) is not None and v.strip().lower() != "auto":
            c.t = int(v)
        if (v := get("privacy", "omega")) is not None:
            c.omega = SynthesisParams.parse(v)
        c.max_plausible = _optional_cap(get("privacy", "max_plausible"), DEFAULT_MAX_PLAUSIBLE)
        c.max_check_plausible = _optional_cap(get("privacy", "max_check_plausible"),
                                              DEFAULT_MAX_CHECK_PLAUSIBLE)
        if (v := get("privacy", "test")) is not None:
            if v not in ("randomized", "deterministic"):
                raise ConfigError(f"test must be randomized or deterministic, got {v!r}")
            c.test = v

        if (v := get("generation", "count")) is not None:
            c.count = int(v)
        if (v := get("generation", "workers")) is not None:
            c.workers = int(v)
        if (v := get("generation", "out")) is not None:
            c.out = base / v
        if (v := get("generation", "time_budget")) is not None and v.strip().lower() not in ("", "none", "off"):
            c.time_budget = float(v)
        if (v := get("generation", "batch")) is not None:
            c.batch = int(v)
        c.model = path("generation", "model")
        if cp.has_option("generation", "save_tables"):
            c.save_tables = cp.getboolean("generation", "save_tables")

        vc = VerifyConfig()
        if (v := get("verify", "cardinalities")) is not None:
            vc.cardinalities = _ints(v)
        if (v := get("verify", "records")) is not None:
            vc.records = tuple(_ints(r) for r in v.split(";") if r.strip())
        if (v := get("verify", "size")) is not None:
            vc.size = int(v)
        if (v := get("verify", "omega")) is not None:
            vc.omega = int(v)
        for key, conv in (("k", _ints), ("gamma", _floats), ("eps0", _floats), ("t", _ints)):
            if (v := get("verify", key)) is not None:
                setattr(vc, key, conv(v))
        if (v := get("verify", "sensitivity_bins")) is not None:
            vc.sensitivity_bins = int(v)
        if (v := get("verify", "sensitivity_n")) is not None:
            vc.sensitivity_n = int(v)
        if (v := get("verify", "eps_override")) is not None:
            vc.eps_override = float(v)
        if (v := get("verify", "delta_override")) is not None:
            vc.delta_override = float(v)
        c.verify = vc

        c.reference = path("metrics", "reference")
        c.candidate = path("metrics", "candidate")
        c.test_set = path("metrics", "test")
        if (v := get("metrics", "model")) is not None:
            c.model = base / v
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    if c.workers < 1 or c.count < 0 or c.batch < 1 or c.maxcost < 1:
        raise ConfigError("workers, batch and maxcost must be >= 1 and count >= 0")
    if c.t is not None and not 1 <= c.t < c.k:
        raise ConfigError(f"t must satisfy 1 <= t < k, got t={c.t}, k={c.k}")
    try:
        c.privacy  # noqa: B018 - validates k, gamma, eps0 and caps
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return c


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, p.parent)
