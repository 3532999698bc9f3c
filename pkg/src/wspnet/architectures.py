"""Model builders: serial baselines, shortcut variants, pyramid networks.

Every model maps Tensor[B,T,d_in] -> Tensor[B,T,d_out] through a stack of
sequence layers, a fusion of tapped intermediate features, and a single
affine output head.  Baselines are expressed as degenerate fusions over the
final layer only, so one forward path covers the whole family.

Encoder-decoder models run non-autoregressively: the decoder consumes the
same positionally-encoded input projection as the encoder, which keeps
training and inference identical for sequence-to-sequence regression.

Checkpoints are single-file binary: magic, format version, the ArchSpec as
canonical JSON, then named little-endian float64 parameter blobs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from wspnet.autodiff import Tensor, add, concat, slice_axis
from wspnet.errors import ConfigurationError, ContractError, NumericError
from wspnet.fusion import FeatureTap, FusionSpec, fuse
from wspnet.layers import (
    DecoderUnit,
    EncoderUnit,
    GAUnit,
    Linear,
    LSTMParams,
    Module,
    decoder_unit,
    encoder_unit,
    ga_unit,
    lstm_layer,
    positional_encoding,
    relu,
)

__all__ = [
    "ARCH_KINDS",
    "ArchSpec",
    "Model",
    "SeparatedNetSpec",
    "SeparatedModel",
    "build",
    "build_separated",
    "param_count",
    "match_capacity",
    "save_checkpoint",
    "load_checkpoint",
    "sliding_window",
]

ARCH_KINDS = (
    "lstm_baseline",
    "transformer_baseline",
    "mlp_baseline",
    "lstm_variant_1",
    "lstm_variant_2",
    "lstm_variant_3",
    "lstm_variant_4",
    "tf_variant_1",
    "tf_variant_2",
    "tf_variant_3",
    "tf_variant_4",
    "tf_variant_5",
    "pyramid_lstm",
    "pyramid_transformer",
    "pyramid_ga",
    "separated",
)

# Recurrent variants: (depth, tapped layer indices).  Level k of tap h_j is
# depth - j, counted along the serial path to the output head.
_LSTM_VARIANTS = {
    "lstm_variant_1": (1, (1,)),
    "lstm_variant_2": (2, (1, 2)),
    "lstm_variant_3": (3, (1, 2, 3)),
    "lstm_variant_4": (3, (2, 3)),
}

# Transformer variants: tapped unit names out of enc1..enc2 / dec1..dec4.
_TF_VARIANTS = {
    "tf_variant_1": ("dec3", "dec4"),
    "tf_variant_2": ("dec2", "dec4"),
    "tf_variant_3": ("dec2", "dec3", "dec4"),
    "tf_variant_4": ("dec1", "dec2", "dec3", "dec4"),
    "tf_variant_5": ("enc1", "enc2", "dec1", "dec2", "dec3", "dec4"),
}

_TRANSFORMER_KINDS = (
    "transformer_baseline",
    "tf_variant_1",
    "tf_variant_2",
    "tf_variant_3",
    "tf_variant_4",
    "tf_variant_5",
    "pyramid_transformer",
    "pyramid_ga",
)

_RECURRENT_KINDS = (
    "lstm_baseline",
    "lstm_variant_1",
    "lstm_variant_2",
    "lstm_variant_3",
    "lstm_variant_4",
    "pyramid_lstm",
)


@dataclass(frozen=True)
class ArchSpec:
    """Complete, JSON-serializable description of a buildable model.

    ``depth`` is the recurrent layer count (or MLP hidden-layer count); for
    the fixed-depth shortcut variants it must match the variant's depth.
    ``d_ff`` defaults to 2*d_model and ``n_heads`` must divide d_model.
    """

    kind: str
    d_in: int = 1
    d_out: int = 1
    d_model: int = 16
    depth: int = 0  # 0 -> kind default, resolved at construction
    n_enc: int = 2
    n_dec: int = 4
    n_heads: int = 4
    d_ff: int = 0  # 0 -> 2 * d_model
    window: int = 16
    fusion_mode: str = "weighted_stacked"
    p: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ARCH_KINDS:
            raise ConfigurationError(f"unknown architecture kind {self.kind!r}")
        for name in ("d_in", "d_out", "d_model", "n_enc", "n_dec", "n_heads", "window"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.p < 1.0:
            raise ConfigurationError(f"weight decay factor must be >= 1.0, got {self.p}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 2 * self.d_model)
        if self.d_ff < 1:
            raise ConfigurationError(f"d_ff must be >= 1, got {self.d_ff}")
        if self.kind in _TRANSFORMER_KINDS and self.d_model % self.n_heads != 0:
            raise ConfigurationError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if self.kind in _LSTM_VARIANTS or self.kind == "pyramid_lstm":
            fixed = _LSTM_VARIANTS.get(self.kind, _LSTM_VARIANTS["lstm_variant_2"])[0]
            if self.depth == 0:
                object.__setattr__(self, "depth", fixed)
            elif self.depth != fixed:
                raise ConfigurationError(
                    f"{self.kind} has fixed depth {fixed}, got depth={self.depth}"
                )
        elif self.depth == 0:
            object.__setattr__(self, "depth", 2)
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if self.kind in _TF_VARIANTS or self.kind in ("pyramid_transformer", "pyramid_ga"):
            if self.n_enc != 2 or self.n_dec != 4:
                raise ConfigurationError(
                    f"{self.kind} uses the fixed 2-encoder/4-decoder layout, "
                    f"got n_enc={self.n_enc}, n_dec={self.n_dec}"
                )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown ArchSpec fields: {sorted(extra)}")
        return cls(**d)

    def fusion_spec(self) -> FusionSpec:
        """Tap table for this kind, with the spec's fusion mode and decay factor."""
        taps = _tap_table(self)
        return FusionSpec(
            mode=self.fusion_mode, p=self.p, taps=tuple(taps), common_width=self.d_model
        )


def _tap_table(spec: ArchSpec) -> list[FeatureTap]:
    kind = spec.kind
    if kind in _LSTM_VARIANTS:
        depth, tapped = _LSTM_VARIANTS[kind]
    elif kind == "pyramid_lstm":
        depth, tapped = _LSTM_VARIANTS["lstm_variant_2"]
    elif kind in ("lstm_baseline", "mlp_baseline"):
        depth, tapped = spec.depth, (spec.depth,)
    elif kind == "transformer_baseline":
        return [FeatureTap(f"dec{spec.n_dec}", f"dec{spec.n_dec}", 0)]
    elif kind in _TF_VARIANTS or kind in ("pyramid_transformer", "pyramid_ga"):
        names = _TF_VARIANTS[kind] if kind in _TF_VARIANTS else _TF_VARIANTS["tf_variant_5"]
        taps = []
        for name in names:
            if name.startswith("dec"):
                k = spec.n_dec - int(name[3:])
            else:
                k = spec.n_dec + spec.n_enc - int(name[3:])
            taps.append(FeatureTap(name, name, k))
        return taps
    else:
        raise ConfigurationError(f"kind {kind!r} has no serial tap table")
    return [FeatureTap(f"h{j}", f"h{j}", depth - j) for j in tapped]


def _ensure_finite(arr: np.ndarray, where: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {where}")


class Model(Module):
    """A built network: named parameters plus a deterministic forward."""

    def __init__(self, spec: ArchSpec):
        self._spec = spec  # underscore-prefixed plain attr, skipped by parameters()

    @property
    def spec(self) -> ArchSpec:
        return self._spec

    def forward(self, x: Tensor):
        raise NotImplementedError

    def __call__(self, x: Tensor):
        return self.forward(x)


def _head_width(fusion: FusionSpec) -> int:
    if fusion.mode == "concat":
        return fusion.common_width * len(fusion.taps)
    return fusion.common_width


class _RecurrentModel(Model):
    def __init__(self, spec: ArchSpec, rng: np.random.Generator):
        super().__init__(spec)
        self.layers = [
            LSTMParams(spec.d_in if i == 0 else spec.d_model, spec.d_model, rng)
            for i in range(spec.depth)
        ]
        self.fusion = spec.fusion_spec()
        self.head = Linear(_head_width(self.fusion), spec.d_out, rng)

    def forward(self, x: Tensor):
        _ensure_finite(x.data, "model input")
        tap_ids = {t.id for t in self.fusion.taps}
        taps = {}
        h = x
        for i, layer in enumerate(self.layers, start=1):
            h = lstm_layer(h, layer)
            _ensure_finite(h.data, f"lstm layer {i}")
            if f"h{i}" in tap_ids:
                taps[f"h{i}"] = h
        fused = fuse(self.fusion, taps)
        y = self.head(fused.tensor)
        _ensure_finite(y.data, "output head")
        return y, taps


class _TransformerModel(Model):
    def __init__(self, spec: ArchSpec, rng: np.random.Generator):
        super().__init__(spec)
        self.in_proj = Linear(spec.d_in, spec.d_model, rng)
        self.encoders = [
            EncoderUnit(spec.d_model, spec.n_heads, spec.d_ff, rng) for _ in range(spec.n_enc)
        ]
        unit_cls = GAUnit if spec.kind == "pyramid_ga" else DecoderUnit
        self.decoders = [
            unit_cls(spec.d_model, spec.n_heads, spec.d_ff, rng) for _ in range(spec.n_dec)
        ]
        self.fusion = spec.fusion_spec()
        self.head = Linear(_head_width(self.fusion), spec.d_out, rng)

    def forward(self, x: Tensor):
        _ensure_finite(x.data, "model input")
        spec = self.spec
        T = x.shape[1]
        tap_ids = {t.id for t in self.fusion.taps}
        taps = {}
        proj = self.in_proj(x)
        pe = positional_encoding(T, spec.d_model)
        src = add(proj, Tensor(np.broadcast_to(pe.data, proj.shape)))
        h = src
        for i, unit in enumerate(self.encoders, start=1):
            h = encoder_unit(h, unit)
            _ensure_finite(h.data, f"encoder unit {i}")
            if f"enc{i}" in tap_ids:
                taps[f"enc{i}"] = h
        memory = h
        d = src
        for i, unit in enumerate(self.decoders, start=1):
            if spec.kind == "pyramid_ga":
                d = ga_unit(d, memory, unit)
            else:
                d = decoder_unit(d, memory, unit)
            _ensure_finite(d.data, f"decoder unit {i}")
            if f"dec{i}" in tap_ids:
                taps[f"dec{i}"] = d
        fused = fuse(self.fusion, taps)
        y = self.head(fused.tensor)
        _ensure_finite(y.data, "output head")
        return y, taps


def sliding_window(x: Tensor, window: int) -> Tensor:
    """Causal history windows: output channel block j holds x shifted back
    window-1-j steps (zero-padded), so block window-1 is the current step."""
    if window < 1:
        raise ConfigurationError(f"window must be >= 1, got {window}")
    B, T, d = x.shape
    parts = []
    for j in range(window):
        shift = window - 1 - j
        if shift == 0:
            parts.append(x)
        elif shift >= T:
            parts.append(Tensor(np.zeros((B, T, d))))
        else:
            pad = Tensor(np.zeros((B, shift, d)))
            parts.append(concat([pad, slice_axis(x, 1, 0, T - shift)], axis=1))
    if len(parts) == 1:
        return parts[0]
    return concat(parts, axis=-1)


class _MLPModel(Model):
    """Per-time-step MLP over a sliding causal history window."""

    def __init__(self, spec: ArchSpec, rng: np.random.Generator):
        super().__init__(spec)
        widths = [spec.window * spec.d_in] + [spec.d_model] * spec.depth
        self.hidden = [Linear(widths[i], widths[i + 1], rng) for i in range(spec.depth)]
        self.fusion = spec.fusion_spec()
        self.head = Linear(_head_width(self.fusion), spec.d_out, rng)

    def forward(self, x: Tensor):
        _ensure_finite(x.data, "model input")
        h = sliding_window(x, self.spec.window)
        for i, lin in enumerate(self.hidden, start=1):
            h = relu(lin(h))
            _ensure_finite(h.data, f"mlp layer {i}")
        taps = {f"h{self.spec.depth}": h}
        fused = fuse(self.fusion, taps)
        y = self.head(fused.tensor)
        _ensure_finite(y.data, "output head")
        return y, taps


def build(spec: ArchSpec) -> Model:
    """Construct a model with seed-deterministic initial parameters."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "separated":
        raise ConfigurationError(
            "kind 'separated' is built via build_separated(SeparatedNetSpec)"
        )
    if spec.kind in _RECURRENT_KINDS:
        return _RecurrentModel(spec, rng)
    if spec.kind in _TRANSFORMER_KINDS:
        return _TransformerModel(spec, rng)
    if spec.kind == "mlp_baseline":
        return _MLPModel(spec, rng)
    raise ConfigurationError(f"unknown architecture kind {spec.kind!r}")


@dataclass(frozen=True)
class SeparatedNetSpec:
    """Extractor plus per-depth probe heads fed by gradient-detached taps."""

    extractor: str = "lstm"
    depth: int = 3
    d_in: int = 1
    d_out: int = 1
    d_model: int = 16
    n_heads: int = 4
    d_ff: int = 0
    p: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.extractor not in ("lstm", "transformer"):
            raise ConfigurationError(f"extractor must be lstm or transformer, got {self.extractor!r}")
        if self.depth < 2:
            raise ConfigurationError(f"separated network needs depth >= 2, got {self.depth}")
        for name in ("d_in", "d_out", "d_model", "n_heads"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.p < 1.0:
            raise ConfigurationError(f"weight decay factor must be >= 1.0, got {self.p}")
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 2 * self.d_model)
        if self.extractor == "transformer" and self.d_model % self.n_heads != 0:
            raise ConfigurationError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SeparatedNetSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown SeparatedNetSpec fields: {sorted(extra)}")
        return cls(**d)


class SeparatedModel(Module):
    """Extractor trained through its live head; probes see detached features.

    ``forward_all`` returns the live prediction, one prediction per probe
    depth, and a multi-level prediction from the weighted fusion of all
    detached probe features.  Because every probe input passes through
    detach, probe and multi-level losses contribute exactly zero gradient
    to extractor parameters.
    """

    def __init__(self, spec: SeparatedNetSpec):
        rng = np.random.default_rng(spec.seed)
        self._spec = spec
        if spec.extractor == "lstm":
            self.layers = [
                LSTMParams(spec.d_in if i == 0 else spec.d_model, spec.d_model, rng)
                for i in range(spec.depth)
            ]
        else:
            self.in_proj = Linear(spec.d_in, spec.d_model, rng)
            self.encoders = [
                EncoderUnit(spec.d_model, spec.n_heads, spec.d_ff, rng) for _ in range(2)
            ]
            self.decoders = [
                DecoderUnit(spec.d_model, spec.n_heads, spec.d_ff, rng)
                for _ in range(spec.depth)
            ]
        self.live_head = Linear(spec.d_model, spec.d_out, rng)
        self.probe_heads = [Linear(spec.d_model, spec.d_out, rng) for _ in range(spec.depth)]
        self.multi_head = Linear(spec.d_model, spec.d_out, rng)
        taps = [
            FeatureTap(self._tap_name(j), self._tap_name(j), spec.depth - j)
            for j in range(1, spec.depth + 1)
        ]
        self.fusion = FusionSpec(
            mode="weighted_stacked", p=spec.p, taps=tuple(taps), common_width=spec.d_model
        )

    @property
    def spec(self) -> SeparatedNetSpec:
        return self._spec

    def _tap_name(self, j: int) -> str:
        return f"h{j}" if self._spec.extractor == "lstm" else f"dec{j}"

    def extractor_parameters(self):
        heads = {"live_head", "probe_heads", "multi_head"}
        return [(n, p) for n, p in self.parameters() if n.split(".")[0] not in heads]

    def _extract(self, x: Tensor) -> dict:
        spec = self._spec
        _ensure_finite(x.data, "model input")
        taps = {}
        if spec.extractor == "lstm":
            h = x
            for i, layer in enumerate(self.layers, start=1):
                h = lstm_layer(h, layer)
                _ensure_finite(h.data, f"lstm layer {i}")
                taps[f"h{i}"] = h
        else:
            proj = self.in_proj(x)
            pe = positional_encoding(x.shape[1], spec.d_model)
            src = add(proj, Tensor(np.broadcast_to(pe.data, proj.shape)))
            h = src
            for i, unit in enumerate(self.encoders, start=1):
                h = encoder_unit(h, unit)
                _ensure_finite(h.data, f"encoder unit {i}")
            d = src
            for i, unit in enumerate(self.decoders, start=1):
                d = decoder_unit(d, h, unit)
                _ensure_finite(d.data, f"decoder unit {i}")
                taps[f"dec{i}"] = d
        return taps

    def forward_all(self, x: Tensor):
        spec = self._spec
        taps = self._extract(x)
        final = taps[self._tap_name(spec.depth)]
        live = self.live_head(final)
        detached = {name: t.detach() for name, t in taps.items()}
        probes = {
            self._tap_name(j): head(detached[self._tap_name(j)])
            for j, head in enumerate(self.probe_heads, start=1)
        }
        fused = fuse(self.fusion, detached)
        multi = self.multi_head(fused.tensor)
        return live, probes, multi, taps

    def forward(self, x: Tensor):
        live, _, _, taps = self.forward_all(x)
        return live, taps

    def __call__(self, x: Tensor):
        return self.forward(x)


def build_separated(spec: SeparatedNetSpec) -> SeparatedModel:
    return SeparatedModel(spec)


def param_count(model: Module) -> int:
    return model.param_count()


def match_capacity(
    spec_a: ArchSpec, kind_b: str, tolerance: float = 0.10, max_width: int = 512
) -> int:
    """Hidden width for kind_b whose parameter count is within +-tolerance
    of spec_a's; searches widths up to max_width (multiples of n_heads for
    attention models) and returns the closest match."""
    target = param_count(build(spec_a))
    step = spec_a.n_heads if kind_b in _TRANSFORMER_KINDS else 1
    best_width, best_diff = 0, float("inf")
    for width in range(step, max_width + 1, step):
        candidate = ArchSpec(
            kind=kind_b,
            d_in=spec_a.d_in,
            d_out=spec_a.d_out,
            d_model=width,
            n_heads=spec_a.n_heads if kind_b in _TRANSFORMER_KINDS else spec_a.n_heads,
            seed=spec_a.seed,
        )
        count = param_count(build(candidate))
        diff = abs(count - target) / target
        if diff < best_diff:
            best_width, best_diff = width, diff
        if count > target * (1.0 + tolerance) and diff > best_diff:
            break
    if best_diff > tolerance:
        raise ConfigurationError(
            f"no {kind_b} width within {tolerance:.0%} of {target} parameters "
            f"(best width {best_width} is off by {best_diff:.1%})"
        )
    return best_width


_MAGIC = b"WSPN"
_CKPT_VERSION = 1


def save_checkpoint(model: Model, path: str) -> None:
    header = model.spec.to_json().encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _CKPT_VERSION, len(header)))
        f.write(header)
        for name, p in model.parameters():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", p.ndim))
            f.write(struct.pack(f"<{p.ndim}q", *p.shape))
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> Model:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise ContractError(f"{path} is not a model checkpoint (bad magic)")
    version, header_len = struct.unpack_from("<II", blob, 4)
    if version != _CKPT_VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    off = 12
    spec = ArchSpec.from_dict(json.loads(blob[off : off + header_len].decode("utf-8")))
    off += header_len
    model = build(spec)
    params = dict(model.parameters())
    seen = set()
    while off < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{ndim}q", blob, off)
        off += 8 * ndim
        n = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(dims)
        off += 8 * n
        if name not in params:
            raise ContractError(f"checkpoint parameter {name!r} unknown to rebuilt model")
        if params[name].shape != tuple(dims):
            raise ContractError(
                f"checkpoint parameter {name!r} has shape {tuple(dims)}, "
                f"model expects {params[name].shape}"
            )
        params[name].data[...] = arr
        seen.add(name)
    missing = set(params) - seen
    if missing:
        raise ContractError(f"checkpoint missing parameters: {sorted(missing)}")
    return model
