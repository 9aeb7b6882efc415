"""Analytic compute and memory cost model for one transformer forward pass.

Operation counts per transformer layer, forward size ``s_f`` tokens and
model dimension ``hidden``:

* fully connected stack (QKV, attention out, FC1, FC2): ``24 * s_f * hidden**2``
* attention: ``4 * s_f**2 * hidden``

Iteration latency is a linear model calibrated at a single pivot point
(``pivot_forward_size`` tokens take ``pivot_time_s`` seconds), plus an
optional fixed per-iteration overhead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

from .errors import ConfigError, ValidationError

PROFILE_KEYS = (
    "hidden_size",
    "num_layers",
    "pivot_forward_size",
    "pivot_time_s",
    "bytes_per_element",
    "fixed_overhead_s",
    "kvc_capacity_tokens",
)


@dataclass(frozen=True)
class ModelProfile:
    """Calibrated cost parameters for one served model."""

    hidden_size: int
    num_layers: int
    pivot_forward_size: int
    pivot_time_s: float
    bytes_per_element: int = 2
    fixed_overhead_s: float = 0.0
    kvc_capacity_tokens: int = 0

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ValidationError("hidden_size must be >= 1")
        if self.num_layers < 1:
            raise ValidationError("num_layers must be >= 1")
        if self.pivot_forward_size < 1:
            raise ValidationError("pivot_forward_size must be >= 1")
        if self.pivot_time_s <= 0:
            raise ValidationError("pivot_time_s must be > 0")
        if self.fixed_overhead_s < 0:
            raise ValidationError("fixed_overhead_s must be >= 0")
        if self.bytes_per_element < 1:
            raise ValidationError("bytes_per_element must be >= 1")


@dataclass(frozen=True)
class GpuProfile:
    """Hardware envelope used when deriving a pivot size from first principles."""

    peak_flops: float
    saturation_efficiency: float = 1.0
    kvc_capacity_tokens: int = 0

    def __post_init__(self):
        if self.peak_flops <= 0:
            raise ValidationError("peak_flops must be > 0")
        if not (0.0 < self.saturation_efficiency <= 1.0):
            raise ValidationError("saturation_efficiency must be in (0, 1]")


def fcl_ops(s_f: int, hidden: int) -> int:
    """FLOPs of the fully connected layers for ``s_f`` tokens."""
    return 24 * s_f * hidden * hidden


def attention_ops(s_f: int, hidden: int) -> int:
    """FLOPs of the attention layer for ``s_f`` tokens."""
    return 4 * s_f * s_f * hidden


def layer_ops(s_f: int, hidden: int) -> int:
    """Total FLOPs of one transformer layer; exactly fcl + attention."""
    return fcl_ops(s_f, hidden) + attention_ops(s_f, hidden)


def per_token_ops(profile: ModelProfile) -> int:
    """FLOPs to push a single token through the whole model."""
    return layer_ops(1, profile.hidden_size) * profile.num_layers


def kvc_bytes_per_token(profile: ModelProfile) -> int:
    """KV storage bytes per cached token (keys and values, every layer)."""
    return 2 * profile.bytes_per_element * profile.num_layers * profile.hidden_size


def iteration_time(s_f: int, profile: ModelProfile) -> float:
    """Batch execution time for forward size ``s_f``.

    Linear through the calibration point: exact at ``s_f == pivot_forward_size``
    and monotone nondecreasing in ``s_f``.
    """
    if s_f < 0:
        raise ValidationError("forward size must be >= 0")
    return profile.fixed_overhead_s + profile.pivot_time_s * s_f / profile.pivot_forward_size


def derive_pivot(hidden_size: int, num_layers: int, gpu: GpuProfile) -> int:
    """Pivot forward size implied by hardware peak throughput.

    Used only when a measured pivot is not supplied in the profile file.
    """
    x = layer_ops(1, hidden_size) * num_layers
    if x <= 0:
        raise ConfigError("per-token operation count is zero; check hidden_size/num_layers")
    return math.floor(gpu.saturation_efficiency * gpu.peak_flops / x)


def derive_pivot_time(pivot_forward_size: int, hidden_size: int, num_layers: int,
                      gpu: GpuProfile) -> float:
    """Pivot batch time from the saturated hardware throughput."""
    ops = layer_ops(pivot_forward_size, hidden_size) * num_layers
    return ops / (gpu.saturation_efficiency * gpu.peak_flops)


def opt_13b_like() -> ModelProfile:
    """Desk-scale stand-in for a 13B-parameter decoder on one accelerator.

    Pivot time calibrated against a 126.96 TFLOP/s saturated throughput;
    cache capacity corresponds to a 12 GiB KV pool.
    """
    return ModelProfile(
        hidden_size=5120,
        num_layers=40,
        pivot_forward_size=768,
        pivot_time_s=0.156,
        bytes_per_element=2,
        fixed_overhead_s=0.0,
        kvc_capacity_tokens=15728,
    )


def opt_175b_like() -> ModelProfile:
    """Desk-scale stand-in for a 175B-parameter model sharded over 8 GPUs."""
    return ModelProfile(
        hidden_size=12288,
        num_layers=96,
        pivot_forward_size=1280,
        pivot_time_s=0.45,
        bytes_per_element=2,
        fixed_overhead_s=0.0,
        kvc_capacity_tokens=30720,
    )


BUILTIN_PROFILES = {
    "opt-13b": opt_13b_like,
    "opt-175b": opt_175b_like,
}


def load_profile(path_or_name: str | Path) -> ModelProfile:
    """Load a profile from a JSON file, or resolve a built-in profile name."""
    name = str(path_or_name)
    if name in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[name]()
    path = Path(path_or_name)
    if not path.exists():
        raise ConfigError(f"profile not found: {path}")
    raw = json.loads(path.read_text())
    missing = [k for k in ("hidden_size", "num_layers", "pivot_forward_size", "pivot_time_s")
               if k not in raw]
    if missing:
        raise ConfigError(f"profile {path} missing keys: {', '.join(missing)}")
    unknown = [k for k in raw if k not in PROFILE_KEYS]
    if unknown:
        raise ConfigError(f"profile {path} has unknown keys: {', '.join(unknown)}")
    return ModelProfile(**raw)


def save_profile(profile: ModelProfile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(asdict(profile), indent=2) + "\n")


def load_gpu_profile(path: str | Path) -> GpuProfile:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"gpu profile not found: {path}")
    raw = json.loads(path.read_text())
    if "peak_flops" not in raw:
        raise ConfigError(f"gpu profile {path} missing keys: peak_flops")
    return GpuProfile(**raw)
