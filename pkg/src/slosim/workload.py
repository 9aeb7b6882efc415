"""Synthetic trace generation and JSONL trace ingestion.

Traces model a mixed-prompt serving workload: Poisson arrivals, a majority
of short prompts, a configurable fraction of long prompts, and per-request
SLOs. Online requests carry a time-to-first-token and a time-between-tokens
deadline; offline requests carry a whole-job completion deadline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cost_model import ModelProfile, iteration_time, opt_13b_like
from .errors import ConfigError, TraceParseError, ValidationError

DEFAULT_LONG_PROMPT_THRESHOLD = 4096

# Typical reader speed in seconds per generated token; the default TBT SLO
# is this value times a per-request scale.
READING_SPEED_S_PER_TOKEN = 0.1875

TTFT_BUCKET_TOKENS = 512


class SLOKind(Enum):
    ONLINE = "online"
    OFFLINE = "offline"


@dataclass(frozen=True)
class SLOSpec:
    """Deadline specification attached to a request.

    Online requests carry ttft_slo and tbt_slo; offline requests carry
    jct_slo; never both sets.
    """

    kind: SLOKind
    ttft_slo: float | None = None
    tbt_slo: float | None = None
    jct_slo: float | None = None

    def __post_init__(self):
        if self.kind is SLOKind.ONLINE:
            if self.ttft_slo is None or self.tbt_slo is None:
                raise ValidationError("online SLO requires ttft_slo and tbt_slo")
            if self.jct_slo is not None:
                raise ValidationError("online SLO must not carry jct_slo")
            if self.ttft_slo <= 0:
                raise ValidationError("ttft_slo must be > 0")
            if self.tbt_slo <= 0:
                raise ValidationError("tbt_slo must be > 0")
        else:
            if self.jct_slo is None:
                raise ValidationError("offline SLO requires jct_slo")
            if self.ttft_slo is not None or self.tbt_slo is not None:
                raise ValidationError("offline SLO must not carry ttft_slo/tbt_slo")
            if self.jct_slo <= 0:
                raise ValidationError("jct_slo must be > 0")


@dataclass(frozen=True)
class RequestSpec:
    """One inference job as seen by the simulator."""

    id: int
    arrival_time: float
    prompt_len: int
    output_len: int
    slo: SLOSpec
    predicted_output_len: int | None = None

    def __post_init__(self):
        if self.prompt_len < 1:
            raise ValidationError(f"prompt_len must be >= 1 (request {self.id})")
        if self.output_len < 1:
            raise ValidationError(f"output_len must be >= 1 (request {self.id})")
        if self.arrival_time < 0:
            raise ValidationError(f"arrival_time must be >= 0 (request {self.id})")
        if self.predicted_output_len is None:
            object.__setattr__(self, "predicted_output_len", self.output_len)
        elif self.predicted_output_len < 1:
            raise ValidationError(f"predicted_output_len must be >= 1 (request {self.id})")

    def is_long(self, threshold: int = DEFAULT_LONG_PROMPT_THRESHOLD) -> bool:
        return self.prompt_len >= threshold


@dataclass(frozen=True)
class LengthDist:
    """Discrete token-length distribution.

    kinds: "uniform" (inclusive integer range), "log_uniform" (integer range,
    log-spaced density), "choice" (weighted values), "mixture" (weighted
    sub-distributions).
    """

    kind: str
    lo: int = 0
    hi: int = 0
    values: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()
    parts: tuple["LengthDist", ...] = ()

    def __post_init__(self):
        if self.kind in ("uniform", "log_uniform"):
            if self.hi < self.lo or self.lo < 1:
                raise ConfigError(f"empty length distribution [{self.lo}, {self.hi}]")
        elif self.kind == "choice":
            if not self.values:
                raise ConfigError("choice distribution with no values")
        elif self.kind == "mixture":
            if not self.parts:
                raise ConfigError("mixture distribution with no parts")
        else:
            raise ConfigError(f"unknown length distribution kind: {self.kind}")

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "uniform":
            return int(rng.integers(self.lo, self.hi + 1))
        if self.kind == "log_uniform":
            return int(math.floor(math.exp(rng.uniform(math.log(self.lo),
                                                       math.log(self.hi + 1)))))
        if self.kind == "choice":
            weights = self.weights or None
            if weights is not None:
                p = np.asarray(weights, dtype=float)
                p = p / p.sum()
                return int(rng.choice(self.values, p=p))
            return int(rng.choice(self.values))
        # mixture
        w = self.weights or tuple(1.0 for _ in self.parts)
        p = np.asarray(w, dtype=float)
        p = p / p.sum()
        idx = int(rng.choice(len(self.parts), p=p))
        return self.parts[idx].sample(rng)


@dataclass(frozen=True)
class ScaleRule:
    """SLO scale multiplier: drawn from a finite set or a continuous range."""

    kind: str  # "choice" | "range"
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "choice" and not self.values:
            raise ConfigError("scale choice rule with no values")
        if self.kind == "range" and len(self.values) != 2:
            raise ConfigError("scale range rule needs (lo, hi)")
        if self.kind not in ("choice", "range"):
            raise ConfigError(f"unknown scale rule kind: {self.kind}")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "choice":
            return float(rng.choice(self.values))
        return float(rng.uniform(self.values[0], self.values[1]))


def default_short_dist() -> LengthDist:
    # Emulates an Alpaca-like / ShareGPT-like short-prompt mixture.
    return LengthDist(kind="mixture", parts=(
        LengthDist(kind="uniform", lo=10, hi=500),
        LengthDist(kind="uniform", lo=10, hi=2048),
    ))


def default_long_dist() -> LengthDist:
    # Emulates a BookCorpus-like heavy tail of long prompts.
    return LengthDist(kind="log_uniform", lo=4096, hi=100000)


@dataclass(frozen=True)
class TraceConfig:
    """Parameters of a generated trace."""

    num_requests: int = 1000
    arrival_rate: float = 8.0
    long_fraction: float = 0.35
    short_len_dist: LengthDist = field(default_factory=default_short_dist)
    long_len_dist: LengthDist = field(default_factory=default_long_dist)
    output_len_dist: LengthDist = field(default_factory=lambda: LengthDist(kind="uniform", lo=1, hi=2048))
    ttft_scale_range: tuple[float, float] = (0.5, 1.5)
    tbt_scale: ScaleRule = field(default_factory=lambda: ScaleRule(kind="range", values=(0.75, 1.25)))
    offline_fraction: float = 0.0
    jct_scale_range: tuple[float, float] = (2.0, 6.0)
    seed: int = 0
    profile: ModelProfile = field(default_factory=opt_13b_like)
    long_prompt_threshold: int = DEFAULT_LONG_PROMPT_THRESHOLD

    def __post_init__(self):
        if self.num_requests < 0:
            raise ConfigError("num_requests must be >= 0")
        if self.arrival_rate <= 0:
            raise ConfigError("arrival_rate must be > 0")
        if not (0.0 <= self.long_fraction <= 1.0):
            raise ConfigError("long_fraction must be in [0, 1]")
        if not (0.0 <= self.offline_fraction <= 1.0):
            raise ConfigError("offline_fraction must be in [0, 1]")
        if self.ttft_scale_range[0] <= 0 or self.ttft_scale_range[1] < self.ttft_scale_range[0]:
            raise ConfigError("ttft_scale_range must be a positive (lo, hi) interval")


def base_ttft(prompt_len: int, profile: ModelProfile) -> float:
    """Reference prompt-processing latency for a prompt's length bucket.

    Prompts are grouped into 512-token buckets; the bucket's latency is the
    cost model's iteration time at the bucket midpoint.
    """
    bucket = (prompt_len - 1) // TTFT_BUCKET_TOKENS
    representative = bucket * TTFT_BUCKET_TOKENS + TTFT_BUCKET_TOKENS // 2
    return iteration_time(representative, profile)


def generate_trace(cfg: TraceConfig) -> list[RequestSpec]:
    """Generate a synthetic trace; pure in cfg (same seed, same trace)."""
    rng = np.random.default_rng(cfg.seed)
    requests = []
    t = 0.0
    for i in range(cfg.num_requests):
        t += float(rng.exponential(1.0 / cfg.arrival_rate))
        is_long = bool(rng.random() < cfg.long_fraction)
        dist = cfg.long_len_dist if is_long else cfg.short_len_dist
        prompt_len = dist.sample(rng)
        if is_long:
            prompt_len = max(prompt_len, cfg.long_prompt_threshold)
        else:
            prompt_len = min(prompt_len, cfg.long_prompt_threshold - 1)
        output_len = cfg.output_len_dist.sample(rng)
        offline = bool(rng.random() < cfg.offline_fraction)
        if offline:
            scale = float(rng.uniform(*cfg.jct_scale_range))
            jct = (base_ttft(prompt_len, cfg.profile)
                   + output_len * READING_SPEED_S_PER_TOKEN) * scale
            slo = SLOSpec(kind=SLOKind.OFFLINE, jct_slo=jct)
        else:
            ttft = base_ttft(prompt_len, cfg.profile) * float(rng.uniform(*cfg.ttft_scale_range))
            tbt = READING_SPEED_S_PER_TOKEN * cfg.tbt_scale.sample(rng)
            slo = SLOSpec(kind=SLOKind.ONLINE, ttft_slo=ttft, tbt_slo=tbt)
        requests.append(RequestSpec(
            id=i, arrival_time=t, prompt_len=prompt_len, output_len=output_len, slo=slo))
    return requests


def _slo_to_json(slo: SLOSpec) -> dict:
    if slo.kind is SLOKind.ONLINE:
        return {"kind": "online", "ttft": slo.ttft_slo, "tbt": slo.tbt_slo}
    return {"kind": "offline", "jct": slo.jct_slo}


def _slo_from_json(raw: dict) -> SLOSpec:
    kind = raw.get("kind")
    if kind == "online":
        return SLOSpec(kind=SLOKind.ONLINE, ttft_slo=raw.get("ttft"), tbt_slo=raw.get("tbt"))
    if kind == "offline":
        return SLOSpec(kind=SLOKind.OFFLINE, jct_slo=raw.get("jct"))
    raise ValidationError(f"slo.kind must be 'online' or 'offline', got {kind!r}")


def save_trace(requests: Iterable[RequestSpec], path: str | Path) -> None:
    """Write one JSON record per line, in the given order."""
    with open(path, "w") as fh:
        for req in requests:
            record = {
                "id": req.id,
                "arrival": req.arrival_time,
                "prompt": req.prompt_len,
                "output": req.output_len,
                "predicted_output": req.predicted_output_len,
                "slo": _slo_to_json(req.slo),
            }
            fh.write(json.dumps(record) + "\n")


def load_trace(path: str | Path) -> list[RequestSpec]:
    """Parse a JSONL trace; returns requests sorted by arrival time."""
    path = Path(path)
    if not path.exists():
        raise TraceParseError(f"trace file not found: {path}")
    requests = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            try:
                requests.append(RequestSpec(
                    id=int(raw["id"]),
                    arrival_time=float(raw["arrival"]),
                    prompt_len=int(raw["prompt"]),
                    output_len=int(raw["output"]),
                    predicted_output_len=(int(raw["predicted_output"])
                                          if raw.get("predicted_output") is not None else None),
                    slo=_slo_from_json(raw.get("slo", {})),
                ))
            except KeyError as exc:
                raise TraceParseError(f"line {lineno}: missing field {exc.args[0]!r}") from exc
            except ValidationError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
    requests.sort(key=lambda r: (r.arrival_time, r.id))
    return requests


def trace_summary(requests: Sequence[RequestSpec],
                  threshold: int = DEFAULT_LONG_PROMPT_THRESHOLD) -> dict:
    """Counts used by the CLI after generating or loading a trace."""
    n = len(requests)
    if n == 0:
        return {"count": 0, "long_fraction": 0.0, "empirical_rate": 0.0}
    long_count = sum(1 for r in requests if r.is_long(threshold))
    span = requests[-1].arrival_time - requests[0].arrival_time
    rate = (n - 1) / span if span > 0 else float("inf")
    return {"count": n, "long_fraction": long_count / n, "empirical_rate": rate}
