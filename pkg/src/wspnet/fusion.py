"""Level-weighted fusion of features tapped at different network depths.

Each tap carries a level index k: the number of modules between that tap
and the output layer along the serial forward path.  Weighted fusion gives
tap i the raw weight 1/p**k_i and normalizes the weights to sum to one, so
deeper-in-the-stack (low-k) features dominate for p > 1 and all taps
contribute equally for p = 1.  The classic baselines (equal average,
elementwise sum, channel concatenation) share the same entry point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from wspnet.autodiff import Tensor, add, concat, mul
from wspnet.errors import ConfigurationError, ContractError, DimensionError

__all__ = [
    "FUSION_MODES",
    "FeatureTap",
    "FusionSpec",
    "FusedFeature",
    "fusion_weights",
    "weighted_stack",
    "fuse",
]

FUSION_MODES = ("weighted_stacked", "equal_average", "elementwise_sum", "concat")


@dataclass(frozen=True)
class FeatureTap:
    """A named tap: which layer it reads and how far that layer sits from the output."""

    id: str
    source: str
    level_k: int

    def __post_init__(self):
        if self.level_k < 0:
            raise ConfigurationError(f"tap {self.id!r} has negative level {self.level_k}")


@dataclass(frozen=True)
class FusionSpec:
    mode: str
    p: float
    taps: tuple[FeatureTap, ...]
    common_width: int

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ConfigurationError(f"unknown fusion mode {self.mode!r}; expected one of {FUSION_MODES}")
        if self.p < 1.0:
            raise ConfigurationError(f"weight decay factor must be >= 1.0, got {self.p}")
        if len(self.taps) < 1:
            raise ConfigurationError("fusion requires at least one tap")
        ids = [t.id for t in self.taps]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"tap ids must be unique, got {ids}")
        if self.common_width < 1:
            raise ConfigurationError(f"common width must be >= 1, got {self.common_width}")
        object.__setattr__(self, "taps", tuple(self.taps))


@dataclass
class FusedFeature:
    tensor: Tensor
    weights: list[float] = field(default_factory=list)


def fusion_weights(taps: Sequence[FeatureTap], p: float) -> list[float]:
    """Normalized per-tap weights: raw 1/p**k, divided by their sum."""
    if p < 1.0:
        raise ConfigurationError(f"weight decay factor must be >= 1.0, got {p}")
    if not taps:
        raise ContractError("fusion_weights requires at least one tap")
    raw = [1.0 / p**t.level_k for t in taps]
    total = sum(raw)
    return [w / total for w in raw]


def weighted_stack(features: Sequence[Tensor], weights: Sequence[float]) -> Tensor:
    """Elementwise combination sum_i w_i * f_i over equal-shaped features."""
    if len(features) != len(weights):
        raise ContractError(
            f"got {len(features)} features but {len(weights)} weights"
        )
    if not features:
        raise ContractError("weighted_stack requires at least one feature")
    ref = features[0].shape
    for f in features[1:]:
        if f.shape != ref:
            raise DimensionError(f"stacked features disagree in shape: {ref} vs {f.shape}")
    out = mul(features[0], float(weights[0]))
    for f, w in zip(features[1:], weights[1:]):
        out = add(out, mul(f, float(w)))
    return out


def _check_widths(spec: FusionSpec, feats: Sequence[Tensor]) -> None:
    for tap, f in zip(spec.taps, feats):
        if f.shape[-1] != spec.common_width:
            raise DimensionError(
                f"tap {tap.id!r} has width {f.shape[-1]}, fusion expects {spec.common_width}"
            )


def fuse(spec: FusionSpec, features: Mapping[str, Tensor]) -> FusedFeature:
    """Combine tapped features according to the fusion mode.

    ``features`` maps tap id to tensor; entries not named by the spec are
    ignored so callers can pass every tap a model produced.
    """
    missing = [t.id for t in spec.taps if t.id not in features]
    if missing:
        raise ContractError(f"fusion taps missing from features: {missing}")
    feats = [features[t.id] for t in spec.taps]

    if spec.mode == "concat":
        return FusedFeature(concat(feats, axis=-1), [1.0] * len(feats))

    _check_widths(spec, feats)
    if spec.mode == "weighted_stacked":
        weights = fusion_weights(spec.taps, spec.p)
    elif spec.mode == "equal_average":
        weights = fusion_weights(spec.taps, 1.0)
    else:  # elementwise_sum: unnormalized
        weights = [1.0] * len(feats)
    return FusedFeature(weighted_stack(feats, weights), weights)
