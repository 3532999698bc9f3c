"""Dataset assembly: simulate, normalize, split, and persist.

Case recipes (input -> output, all equal-length series):

- boucwen      band-limited ground acceleration -> 5 inter-story drifts of a
               nonlinear shear building (length 500, splits 37/13/50).
- gmp_1..4     synthesized cyclic strain -> steel stress under four
               documented parameter sets spanning strong hardening (gmp_1),
               mild hardening (gmp_2), near-elastoplastic (gmp_3), and low
               transition curvature with fast degradation (gmp_4)
               (length 1000, splits 4000/1000/1000).
- brace_like   synthesized axial displacement -> restoring force of a
               hysteretic brace-style element (length 2000, splits 320/40/40).

Per-channel min/max statistics come from the training split only and map
its extremes exactly to [-1, 1]; validation/test values outside the
training range stay outside without clipping.

On disk a dataset is a directory: manifest.json plus one raw binary per
split (little-endian float32, [samples, time, channels_in + channels_out],
input channels first).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from wspnet.errors import ConfigurationError, ContractError, DegenerateRangeError
from wspnet.hysteresis import (
    BoucWenParams,
    GMPParams,
    MDOFSystem,
    band_limited_noise,
    gmp_stress,
    simulate_boucwen,
    sine_synthesis,
)

__all__ = [
    "DATASET_SCHEMA_VERSION",
    "CASES",
    "Sample",
    "NormalizationRecord",
    "Dataset",
    "minmax_normalize",
    "normalize_series",
    "denormalize",
    "build_dataset",
    "save_dataset",
    "load_dataset",
    "import_csv",
    "assemble_dataset",
]

DATASET_SCHEMA_VERSION = 1

CASES = ("boucwen", "gmp_1", "gmp_2", "gmp_3", "gmp_4", "brace_like")

_GMP_SETS = {
    "gmp_1": GMPParams(E0=2.0e5, fy=400.0, b=0.08, R0=15.0, cR1=0.925, cR2=0.15),
    "gmp_2": GMPParams(E0=2.0e5, fy=400.0, b=0.02, R0=20.0, cR1=0.925, cR2=0.15),
    "gmp_3": GMPParams(E0=2.0e5, fy=400.0, b=0.005, R0=10.0, cR1=0.925, cR2=0.15),
    "gmp_4": GMPParams(E0=2.0e5, fy=400.0, b=0.03, R0=12.0, cR1=0.90, cR2=0.08),
}

_DEFAULTS = {
    "boucwen": {"length": 500, "counts": (37, 13, 50), "dt": 0.02},
    "gmp_1": {"length": 1000, "counts": (4000, 1000, 1000), "dt": 0.01},
    "gmp_2": {"length": 1000, "counts": (4000, 1000, 1000), "dt": 0.01},
    "gmp_3": {"length": 1000, "counts": (4000, 1000, 1000), "dt": 0.01},
    "gmp_4": {"length": 1000, "counts": (4000, 1000, 1000), "dt": 0.01},
    "brace_like": {"length": 2000, "counts": (320, 40, 40), "dt": 0.01},
}


@dataclass
class Sample:
    """One input/output series pair; rows are time, columns are channels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.y.ndim != 2:
            raise ConfigurationError(
                f"sample series must be [time, channels], got {self.x.shape} and {self.y.shape}"
            )
        if self.x.shape[0] != self.y.shape[0]:
            raise ConfigurationError(
                f"input and output lengths differ: {self.x.shape[0]} vs {self.y.shape[0]}"
            )


@dataclass
class NormalizationRecord:
    """Per-channel affine map fitted on training extremes: x -> [-1, 1]."""

    in_min: list
    in_max: list
    out_min: list
    out_max: list

    def to_dict(self) -> dict:
        return {
            "in_min": list(self.in_min),
            "in_max": list(self.in_max),
            "out_min": list(self.out_min),
            "out_max": list(self.out_max),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationRecord":
        return cls(
            in_min=list(d["in_min"]),
            in_max=list(d["in_max"]),
            out_min=list(d["out_min"]),
            out_max=list(d["out_max"]),
        )


@dataclass
class Dataset:
    train: list
    valid: list
    test: list
    record: NormalizationRecord | None = None
    meta: dict = field(default_factory=dict)

    def splits(self):
        return {"train": self.train, "valid": self.valid, "test": self.test}

    @property
    def length(self) -> int:
        return self.train[0].x.shape[0] if self.train else 0

    @property
    def channels_in(self) -> int:
        return self.train[0].x.shape[1] if self.train else 0

    @property
    def channels_out(self) -> int:
        return self.train[0].y.shape[1] if self.train else 0


def _channel_extremes(samples, attr: str):
    stacked = np.concatenate([getattr(s, attr) for s in samples], axis=0)
    return stacked.min(axis=0), stacked.max(axis=0)


def _affine_to_unit(arr: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return -1.0 + 2.0 * (arr - lo) / (hi - lo)


def _affine_from_unit(arr: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return lo + (arr + 1.0) * (hi - lo) / 2.0


def minmax_normalize(dataset: Dataset) -> tuple[Dataset, NormalizationRecord]:
    """Fit per-channel min/max on the training split and map every split
    to [-1, 1]; a constant training channel is a degenerate range."""
    if not dataset.train:
        raise ContractError("normalization requires a non-empty training split")
    in_lo, in_hi = _channel_extremes(dataset.train, "x")
    out_lo, out_hi = _channel_extremes(dataset.train, "y")
    for name, lo, hi in (("input", in_lo, in_hi), ("output", out_lo, out_hi)):
        flat = np.nonzero(hi - lo <= 0.0)[0]
        if flat.size:
            raise DegenerateRangeError(
                f"{name} channel(s) {flat.tolist()} are constant over the training split"
            )
    record = NormalizationRecord(
        in_min=in_lo.tolist(),
        in_max=in_hi.tolist(),
        out_min=out_lo.tolist(),
        out_max=out_hi.tolist(),
    )
    normalized = Dataset(
        train=[Sample(_affine_to_unit(s.x, in_lo, in_hi), _affine_to_unit(s.y, out_lo, out_hi)) for s in dataset.train],
        valid=[Sample(_affine_to_unit(s.x, in_lo, in_hi), _affine_to_unit(s.y, out_lo, out_hi)) for s in dataset.valid],
        test=[Sample(_affine_to_unit(s.x, in_lo, in_hi), _affine_to_unit(s.y, out_lo, out_hi)) for s in dataset.test],
        record=record,
        meta=dict(dataset.meta, normalized=True),
    )
    return normalized, record


def normalize_series(record: NormalizationRecord, series: np.ndarray, kind: str = "output") -> np.ndarray:
    lo, hi = _record_bounds(record, kind)
    return _affine_to_unit(np.asarray(series, dtype=np.float64), lo, hi)


def denormalize(record: NormalizationRecord, series: np.ndarray, kind: str = "output") -> np.ndarray:
    """Invert the min-max map for a [time, channels] series."""
    lo, hi = _record_bounds(record, kind)
    return _affine_from_unit(np.asarray(series, dtype=np.float64), lo, hi)


def _record_bounds(record: NormalizationRecord, kind: str):
    if kind == "input":
        return np.asarray(record.in_min), np.asarray(record.in_max)
    if kind == "output":
        return np.asarray(record.out_min), np.asarray(record.out_max)
    raise ConfigurationError(f"kind must be 'input' or 'output', got {kind!r}")


def _gen_boucwen_sample(length: int, dt: float, rng: np.random.Generator, system: MDOFSystem) -> Sample:
    amp = rng.uniform(0.5, 3.0)
    ag = band_limited_noise(length, dt, (0.1, 10.0), amp, rng)
    drift = simulate_boucwen(ag, system, dt, substeps=10)
    return Sample(ag[:, None], drift)


def _gen_gmp_sample(length: int, dt: float, rng: np.random.Generator, params: GMPParams) -> Sample:
    amp = rng.uniform(1.0, 6.0) * params.yield_strain
    strain = sine_synthesis(length, dt, 6, (0.2, 2.0), amp, rng)
    stress = gmp_stress(strain, params)
    return Sample(strain[:, None], stress[:, None])


_BRACE_BW = BoucWenParams(A=1.0, beta=50.0, gamma=25.0, n_exp=1.5)
_BRACE_STIFFNESS = 200.0
_BRACE_ALPHA = 0.15


def _gen_brace_sample(length: int, dt: float, rng: np.random.Generator) -> Sample:
    amp = rng.uniform(0.01, 0.05)
    disp = sine_synthesis(length, dt, 4, (0.1, 1.0), amp, rng)
    z = simulate_boucwen(disp, _BRACE_BW, dt, substeps=10)
    force = _BRACE_ALPHA * _BRACE_STIFFNESS * disp + (1.0 - _BRACE_ALPHA) * _BRACE_STIFFNESS * z
    return Sample(disp[:, None], force[:, None])


def _scaled_counts(counts, scale: float):
    if scale <= 0.0:
        raise ConfigurationError(f"scale must be positive, got {scale}")
    return tuple(max(1, int(round(c * scale))) for c in counts)


def build_dataset(
    case: str,
    counts: tuple[int, int, int] | None = None,
    length: int | None = None,
    seed: int = 0,
    scale: float = 1.0,
    normalize: bool = True,
) -> Dataset:
    """Generate, split, and (by default) normalize one synthetic case.

    ``scale`` multiplies the default split counts for desk-sized runs.
    Sample simulation uses independently spawned per-sample seeds, so split
    membership and content are deterministic in ``seed`` and independent of
    generation order.
    """
    if case not in CASES:
        raise ConfigurationError(f"unknown case {case!r}; expected one of {CASES}")
    defaults = _DEFAULTS[case]
    counts = _scaled_counts(counts if counts is not None else defaults["counts"], scale)
    if any(c < 1 for c in counts):
        raise ConfigurationError(f"split counts must be positive, got {counts}")
    length = int(length if length is not None else defaults["length"])
    if length < 2:
        raise ConfigurationError(f"series length must be >= 2, got {length}")
    dt = defaults["dt"]
    total = sum(counts)
    children = np.random.SeedSequence(seed).spawn(total + 1)

    if case == "boucwen":
        system = MDOFSystem.shear_building()
        gen = lambda rng: _gen_boucwen_sample(length, dt, rng, system)
        generator_meta = {
            "excitation": {"kind": "band_limited_noise", "band": [0.1, 10.0], "amplitude": [0.5, 3.0]},
            "system": {
                "n_story": system.n_story,
                "mass": system.masses[0],
                "stiffness": system.stiffnesses[0],
                "alpha": system.alphas[0],
                "bouc_wen": {"A": system.bw.A, "beta": system.bw.beta, "gamma": system.bw.gamma, "n_exp": system.bw.n_exp},
                "rayleigh": [system.a0, system.a1],
            },
        }
    elif case in _GMP_SETS:
        params = _GMP_SETS[case]
        gen = lambda rng: _gen_gmp_sample(length, dt, rng, params)
        generator_meta = {
            "excitation": {"kind": "sine_synthesis", "n_components": 6, "freq_range": [0.2, 2.0], "amplitude_yield_multiples": [1.0, 6.0]},
            "material": {"E0": params.E0, "fy": params.fy, "b": params.b, "R0": params.R0, "cR1": params.cR1, "cR2": params.cR2},
        }
    else:
        gen = lambda rng: _gen_brace_sample(length, dt, rng)
        generator_meta = {
            "excitation": {"kind": "sine_synthesis", "n_components": 4, "freq_range": [0.1, 1.0], "amplitude": [0.01, 0.05]},
            "element": {
                "stiffness": _BRACE_STIFFNESS,
                "alpha": _BRACE_ALPHA,
                "bouc_wen": {"A": _BRACE_BW.A, "beta": _BRACE_BW.beta, "gamma": _BRACE_BW.gamma, "n_exp": _BRACE_BW.n_exp},
            },
        }

    samples = [gen(np.random.default_rng(children[i])) for i in range(total)]
    perm = np.random.default_rng(children[total]).permutation(total)
    ordered = [samples[i] for i in perm]
    n_train, n_valid, n_test = counts
    raw = Dataset(
        train=ordered[:n_train],
        valid=ordered[n_train : n_train + n_valid],
        test=ordered[n_train + n_valid :],
        meta={
            "case": case,
            "length": length,
            "dt": dt,
            "seed": seed,
            "counts": list(counts),
            "generator": generator_meta,
            "normalized": False,
        },
    )
    if not normalize:
        return raw
    normalized, _ = minmax_normalize(raw)
    return normalized


def assemble_dataset(
    samples: list, counts: tuple[int, int, int], seed: int = 0, case: str = "imported",
    dt: float = 0.0, normalize: bool = True,
) -> Dataset:
    """Split (and optionally normalize) externally produced samples."""
    if sum(counts) != len(samples):
        raise ConfigurationError(
            f"counts {counts} sum to {sum(counts)} but {len(samples)} samples were given"
        )
    lengths = {s.x.shape[0] for s in samples}
    if len(lengths) > 1:
        raise ConfigurationError(f"samples disagree in series length: {sorted(lengths)}")
    perm = np.random.default_rng(seed).permutation(len(samples))
    ordered = [samples[i] for i in perm]
    n_train, n_valid, _ = counts
    raw = Dataset(
        train=ordered[:n_train],
        valid=ordered[n_train : n_train + n_valid],
        test=ordered[n_train + n_valid :],
        meta={"case": case, "length": samples[0].x.shape[0] if samples else 0,
              "dt": dt, "seed": seed, "counts": list(counts), "generator": {},
              "normalized": False},
    )
    if not normalize:
        return raw
    normalized, _ = minmax_normalize(raw)
    return normalized


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write manifest.json plus per-split float32 binaries into ``path``."""
    os.makedirs(path, exist_ok=True)
    manifest = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "case": dataset.meta.get("case", "unknown"),
        "length": dataset.length,
        "dt": dataset.meta.get("dt", 0.0),
        "seed": dataset.meta.get("seed", 0),
        "splits": {name: len(split) for name, split in dataset.splits().items()},
        "channels_in": dataset.channels_in,
        "channels_out": dataset.channels_out,
        "normalized": dataset.meta.get("normalized", False),
        "normalization": dataset.record.to_dict() if dataset.record else None,
        "generator": dataset.meta.get("generator", {}),
        "files": {name: f"{name}.bin" for name in ("train", "valid", "test")},
        "layout": "little-endian float32 [samples, time, channels_in + channels_out], inputs first",
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    for name, split in dataset.splits().items():
        if split:
            arr = np.stack([np.concatenate([s.x, s.y], axis=1) for s in split])
        else:
            arr = np.zeros((0, dataset.length, dataset.channels_in + dataset.channels_out))
        with open(os.path.join(path, f"{name}.bin"), "wb") as f:
            f.write(arr.astype("<f4").tobytes())


def load_dataset(path: str) -> Dataset:
    manifest_path = os.path.join(path, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise ContractError(f"{path} is not a dataset directory (missing manifest.json)")
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("schema_version") != DATASET_SCHEMA_VERSION:
        raise ContractError(
            f"unsupported dataset schema version {manifest.get('schema_version')}"
        )
    length = manifest["length"]
    c_in = manifest["channels_in"]
    c_out = manifest["channels_out"]
    splits = {}
    for name in ("train", "valid", "test"):
        n = manifest["splits"][name]
        file_path = os.path.join(path, manifest["files"][name])
        raw = np.fromfile(file_path, dtype="<f4")
        expect = n * length * (c_in + c_out)
        if raw.size != expect:
            raise ContractError(
                f"{file_path} holds {raw.size} floats, manifest implies {expect}"
            )
        arr = raw.astype(np.float64).reshape(n, length, c_in + c_out)
        splits[name] = [Sample(a[:, :c_in], a[:, c_in:]) for a in arr]
    record = (
        NormalizationRecord.from_dict(manifest["normalization"])
        if manifest.get("normalization")
        else None
    )
    return Dataset(
        train=splits["train"],
        valid=splits["valid"],
        test=splits["test"],
        record=record,
        meta={
            "case": manifest["case"],
            "length": length,
            "dt": manifest.get("dt", 0.0),
            "seed": manifest.get("seed", 0),
            "counts": [manifest["splits"][n] for n in ("train", "valid", "test")],
            "generator": manifest.get("generator", {}),
            "normalized": manifest.get("normalized", False),
        },
    )


def import_csv(pairs: list[tuple[str, str]]) -> list:
    """Read samples from (input_csv, output_csv) path pairs.

    Each CSV holds one series: plain numeric text, rows are timesteps,
    comma-separated columns are channels, no header.
    """
    samples = []
    for x_path, y_path in pairs:
        x = np.loadtxt(x_path, delimiter=",", ndmin=2)
        y = np.loadtxt(y_path, delimiter=",", ndmin=2)
        if x.shape[0] != y.shape[0]:
            raise ContractError(
                f"{x_path} has {x.shape[0]} rows but {y_path} has {y.shape[0]}"
            )
        samples.append(Sample(x, y))
    return samples
