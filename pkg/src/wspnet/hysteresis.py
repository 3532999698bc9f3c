"""Synthetic hysteretic ground truth.

Three families of generator:

- Bouc-Wen single path: displacement series -> hysteretic variable z, with
  dz/dt = A*dx/dt - beta*|dx/dt|*|z|^(n-1)*z - gamma*(dx/dt)*|z|^n.
- Bouc-Wen shear building: ground acceleration -> per-story inter-story
  drift for a lumped-mass chain with per-story hysteretic restoring force
  alpha*k*drift + (1-alpha)*k*z and Rayleigh damping a0*M + a1*K_elastic.
- Cyclic steel stress: strain path -> stress with smooth elastic-plastic
  transitions whose curvature degrades with plastic excursion.

All integration is fixed-step RK4 with sub-stepping between input samples;
state blow-up surfaces as StabilityError.  Excitation synthesis (band
limited noise, random sine sums) is deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from wspnet import backend
from wspnet.errors import ConfigurationError, NumericError, StabilityError

__all__ = [
    "BoucWenParams",
    "MDOFSystem",
    "GMPParams",
    "simulate_boucwen",
    "gmp_stress",
    "gen_excitation",
    "band_limited_noise",
    "sine_synthesis",
    "rayleigh_coefficients",
]


@dataclass(frozen=True)
class BoucWenParams:
    """Hysteretic evolution constants; n_exp controls transition sharpness."""

    A: float = 1.0
    beta: float = 75.0
    gamma: float = 25.0
    n_exp: float = 1.0

    def __post_init__(self):
        if self.n_exp < 1.0:
            raise ConfigurationError(f"n_exp must be >= 1, got {self.n_exp}")

    def ultimate_bound(self) -> float:
        """Largest |z| reachable from rest: the fixed point of the z-equation."""
        if self.beta + self.gamma <= 0.0:
            raise ConfigurationError(
                f"ultimate bound requires beta + gamma > 0, got {self.beta + self.gamma}"
            )
        return (self.A / (self.beta + self.gamma)) ** (1.0 / self.n_exp)


def rayleigh_coefficients(masses, stiffnesses, damping_ratio: float) -> tuple[float, float]:
    """Mass/stiffness damping factors giving ``damping_ratio`` at the first
    two natural modes of the elastic shear building."""
    m = np.asarray(masses, dtype=np.float64)
    k = np.asarray(stiffnesses, dtype=np.float64)
    n = m.shape[0]
    K = np.zeros((n, n))
    for i in range(n):
        K[i, i] += k[i]
        if i + 1 < n:
            K[i, i] += k[i + 1]
            K[i, i + 1] -= k[i + 1]
            K[i + 1, i] -= k[i + 1]
    inv_sqrt_m = 1.0 / np.sqrt(m)
    sym = K * inv_sqrt_m[:, None] * inv_sqrt_m[None, :]
    eigs = np.linalg.eigvalsh(sym)
    omega = np.sqrt(np.maximum(eigs, 0.0))
    w1, w2 = omega[0], omega[1]
    if w1 <= 0.0:
        raise ConfigurationError("shear building has a zero-frequency mode; check stiffnesses")
    a0 = 2.0 * damping_ratio * w1 * w2 / (w1 + w2)
    a1 = 2.0 * damping_ratio / (w1 + w2)
    return float(a0), float(a1)


@dataclass(frozen=True)
class MDOFSystem:
    """Lumped-mass shear building with shared Bouc-Wen story constants.

    Every story uses the same BoucWenParams; alpha is the elastic
    (post-yield) share of each story's restoring force.
    """

    masses: tuple
    stiffnesses: tuple
    alphas: tuple
    bw: BoucWenParams
    a0: float
    a1: float

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(v) for v in self.masses))
        object.__setattr__(self, "stiffnesses", tuple(float(v) for v in self.stiffnesses))
        object.__setattr__(self, "alphas", tuple(float(v) for v in self.alphas))
        n = len(self.masses)
        if n < 1:
            raise ConfigurationError("system needs at least one story")
        if len(self.stiffnesses) != n or len(self.alphas) != n:
            raise ConfigurationError(
                f"per-story arrays disagree in length: {n} masses, "
                f"{len(self.stiffnesses)} stiffnesses, {len(self.alphas)} alphas"
            )
        if any(v <= 0 for v in self.masses) or any(v <= 0 for v in self.stiffnesses):
            raise ConfigurationError("masses and stiffnesses must be positive")
        if any(not 0.0 <= v <= 1.0 for v in self.alphas):
            raise ConfigurationError("alpha must lie in [0, 1]")

    @property
    def n_story(self) -> int:
        return len(self.masses)

    @classmethod
    def shear_building(
        cls,
        n_story: int = 5,
        mass: float = 1.0,
        stiffness: float = 500.0,
        alpha: float = 0.1,
        bw: BoucWenParams | None = None,
        damping_ratio: float = 0.02,
    ) -> "MDOFSystem":
        masses = (mass,) * n_story
        ks = (stiffness,) * n_story
        a0, a1 = rayleigh_coefficients(masses, ks, damping_ratio)
        return cls(
            masses=masses,
            stiffnesses=ks,
            alphas=(alpha,) * n_story,
            bw=bw if bw is not None else BoucWenParams(),
            a0=a0,
            a1=a1,
        )


@dataclass(frozen=True)
class GMPParams:
    """Cyclic steel constants.

    b is the hardening ratio (b=1 collapses the transition to a straight
    elastic line and is allowed for degenerate checks); R0/cR1/cR2 set the
    elastic-plastic transition curvature and its cyclic degradation.
    """

    E0: float = 2.0e5
    fy: float = 400.0
    b: float = 0.08
    R0: float = 15.0
    cR1: float = 0.925
    cR2: float = 0.15

    def __post_init__(self):
        if self.E0 <= 0.0 or self.fy <= 0.0:
            raise ConfigurationError(f"E0 and fy must be positive, got {self.E0}, {self.fy}")
        if not 0.0 <= self.b <= 1.0:
            raise ConfigurationError(f"hardening ratio must lie in [0, 1], got {self.b}")
        if self.R0 <= 0.0:
            raise ConfigurationError(f"R0 must be positive, got {self.R0}")

    @property
    def yield_strain(self) -> float:
        return self.fy / self.E0


def _check_series(series: np.ndarray, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(series, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise ConfigurationError(f"{name} must be a 1-D series of length >= 2, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NumericError(f"{name} contains non-finite values")
    return arr


def simulate_boucwen(
    excitation: np.ndarray,
    params: BoucWenParams | MDOFSystem,
    dt: float,
    integrator: str = "rk4",
    substeps: int = 10,
) -> np.ndarray:
    """Integrate a Bouc-Wen model along a sampled excitation.

    With BoucWenParams the excitation is a displacement path and the result
    is the hysteretic variable z (same length).  With MDOFSystem the
    excitation is ground acceleration and the result is inter-story drift,
    shaped [T, n_story].  Both start from rest.
    """
    if integrator != "rk4":
        raise ConfigurationError(f"unknown integrator {integrator!r}; only 'rk4' is available")
    if dt <= 0.0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if substeps < 1:
        raise ConfigurationError(f"substeps must be >= 1, got {substeps}")
    exc = _check_series(excitation, "excitation")
    if isinstance(params, BoucWenParams):
        z, status = backend.boucwen_z_path(
            exc, params.A, params.beta, params.gamma, params.n_exp, dt, substeps
        )
        if status != 0:
            raise StabilityError(
                "Bouc-Wen integration diverged (|state| > 1e9); "
                "try a smaller dt, more substeps, or a weaker excitation"
            )
        return z
    if isinstance(params, MDOFSystem):
        drift, status = backend.boucwen_mdof(
            exc,
            np.asarray(params.masses),
            np.asarray(params.stiffnesses),
            np.asarray(params.alphas),
            params.bw.A,
            params.bw.beta,
            params.bw.gamma,
            params.bw.n_exp,
            params.a0,
            params.a1,
            dt,
            substeps,
        )
        if status != 0:
            raise StabilityError(
                "shear-building integration diverged (|state| > 1e9); "
                "try a smaller dt, more substeps, or a weaker excitation"
            )
        return drift
    raise ConfigurationError(f"params must be BoucWenParams or MDOFSystem, got {type(params)!r}")


def gmp_stress(strain: np.ndarray, params: GMPParams) -> np.ndarray:
    """Path-dependent cyclic steel stress along a strain series."""
    eps = _check_series(strain, "strain")
    return backend.gmp_stress(
        eps, params.E0, params.fy, params.b, params.R0, params.cR1, params.cR2
    )


def _nyquist(dt: float) -> float:
    return 0.5 / dt


def band_limited_noise(
    length: int,
    dt: float,
    band: tuple[float, float],
    amplitude: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Gaussian noise with spectral power only inside ``band``, peak-scaled."""
    lo, hi = float(band[0]), float(band[1])
    if length < 2:
        raise ConfigurationError(f"length must be >= 2, got {length}")
    if dt <= 0.0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if not 0.0 < lo < hi <= _nyquist(dt):
        raise ConfigurationError(
            f"band ({lo}, {hi}) must satisfy 0 < lo < hi <= Nyquist {_nyquist(dt)}"
        )
    if amplitude <= 0.0:
        raise ConfigurationError(f"amplitude must be positive, got {amplitude}")
    white = rng.standard_normal(length)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(length, d=dt)
    keep = (freqs >= lo) & (freqs <= hi)
    if not keep.any():
        raise ConfigurationError(f"band ({lo}, {hi}) contains no frequency bins at length {length}")
    spectrum[~keep] = 0.0
    x = np.fft.irfft(spectrum, n=length)
    peak = np.abs(x).max()
    if peak == 0.0:
        raise NumericError("band-limited noise collapsed to zero; widen the band")
    return x * (amplitude / peak)


def sine_synthesis(
    length: int,
    dt: float,
    n_components: int,
    freq_range: tuple[float, float],
    amplitude: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sum of randomly drawn sinusoids, peak-scaled to ``amplitude``."""
    lo, hi = float(freq_range[0]), float(freq_range[1])
    if length < 2:
        raise ConfigurationError(f"length must be >= 2, got {length}")
    if dt <= 0.0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if n_components < 1:
        raise ConfigurationError(f"n_components must be >= 1, got {n_components}")
    if not 0.0 < lo <= hi <= _nyquist(dt):
        raise ConfigurationError(
            f"freq_range ({lo}, {hi}) must satisfy 0 < lo <= hi <= Nyquist {_nyquist(dt)}"
        )
    if amplitude <= 0.0:
        raise ConfigurationError(f"amplitude must be positive, got {amplitude}")
    freqs = rng.uniform(lo, hi, size=n_components)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_components)
    amps = rng.uniform(0.5, 1.0, size=n_components)
    t = np.arange(length) * dt
    x = np.zeros(length)
    for f, ph, a in zip(freqs, phases, amps):
        x += a * np.sin(2.0 * np.pi * f * t + ph)
    peak = np.abs(x).max()
    if peak == 0.0:
        raise NumericError("sine synthesis collapsed to zero")
    return x * (amplitude / peak)


def gen_excitation(spec: Mapping, seed: int) -> np.ndarray:
    """Dispatch excitation synthesis from a config mapping; deterministic per seed.

    band_limited_noise keys: length (or duration), dt, band [lo, hi], amplitude.
    sine_synthesis keys: length (or duration), dt, n_components, freq_range, amplitude.
    """
    kind = spec.get("kind")
    dt = float(spec.get("dt", 0.0))
    if dt <= 0.0:
        raise ConfigurationError("excitation spec requires a positive dt")
    if "length" in spec:
        length = int(spec["length"])
    elif "duration" in spec:
        length = int(round(float(spec["duration"]) / dt))
    else:
        raise ConfigurationError("excitation spec requires 'length' or 'duration'")
    rng = np.random.default_rng(seed)
    if kind == "band_limited_noise":
        return band_limited_noise(
            length, dt, tuple(spec["band"]), float(spec["amplitude"]), rng
        )
    if kind == "sine_synthesis":
        return sine_synthesis(
            length,
            dt,
            int(spec["n_components"]),
            tuple(spec["freq_range"]),
            float(spec["amplitude"]),
            rng,
        )
    raise ConfigurationError(
        f"unknown excitation kind {kind!r}; expected band_limited_noise or sine_synthesis"
    )
