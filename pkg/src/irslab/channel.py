"""Source -> IRS -> destination cascade: channel draws and gains.

Counter layout of a trial's random stream (``M`` elements):

* ``[0, 2M)``   source -> element coefficients ``h``
* ``[2M, 4M)``  element -> destination coefficients ``g``
* ``[4M, ...)`` scheme-specific draws (phases, perturbations)

Every simulator follows this layout, so ``draw_channel(params,
RngStream(seed, i))`` reproduces exactly the channel seen by trial ``i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .rng import RngStream

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SystemParams:
    """Physical link parameters, linear units."""

    m_elements: int
    tx_power: float
    noise_var: float = 1.0
    var_h: float = 1.0
    var_g: float = 1.0

    def __post_init__(self):
        if int(self.m_elements) != self.m_elements or self.m_elements < 1:
            raise ValueError("m_elements must be a positive integer")
        for name in ("tx_power", "noise_var", "var_h", "var_g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def sigma_sq(self) -> float:
        return self.var_h * self.var_g

    @property
    def snr(self) -> float:
        """Transmit SNR ``P / sigma_n^2``."""
        return self.tx_power / self.noise_var


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        if self.h.shape != self.g.shape or self.h.ndim != 1:
            raise ValueError("h and g must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.g))):
            raise ValueError("channel coefficients must be finite")

    @property
    def m_elements(self) -> int:
        return self.h.size

    @property
    def cascade(self) -> np.ndarray:
        return self.h * self.g


@dataclass(frozen=True)
class PhaseConfig:
    phases: np.ndarray
    amplitudes: np.ndarray = field(default=None)

    def __post_init__(self):
        phases = np.mod(np.asarray(self.phases, dtype=float), TWO_PI)
        amps = (np.ones_like(phases) if self.amplitudes is None
                else np.asarray(self.amplitudes, dtype=float))
        if amps.shape != phases.shape:
            raise ValueError("phases and amplitudes must have equal length")
        if np.any((amps < 0) | (amps > 1)):
            raise ValueError("amplitudes must lie in [0, 1]")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def random(cls, stream: RngStream, m_elements: int, offset: int | None = None) -> "PhaseConfig":
        """Uniform phases from ``stream``; default counters follow the channel block."""
        offset = 4 * m_elements if offset is None else offset
        return cls(TWO_PI * stream.uniforms(offset, m_elements))


# ---------------------------------------------------------------------------
# draws
# ---------------------------------------------------------------------------

def draw_channels(params: SystemParams, seed: int, trial_ids) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised draw of ``(h, g)``, each of shape ``(n_trials, M)``."""
    m = params.m_elements
    h = _rng.complex_normals(seed, trial_ids, 0, m)
    g = _rng.complex_normals(seed, trial_ids, 2 * m, m)
    h *= math.sqrt(params.var_h)
    g *= math.sqrt(params.var_g)
    return h, g


def draw_channel(params: SystemParams, rng: RngStream) -> ChannelRealization:
    """One draw of ``h_i ~ CN(0, var_h)`` and ``g_i ~ CN(0, var_g)``, complex Box-Muller."""
    h, g = draw_channels(params, rng.seed, [rng.stream_id])
    return ChannelRealization(h[0], g[0])


def random_phases(seed: int, trial_ids, offset: int, m_elements: int) -> np.ndarray:
    """Uniform phases on [0, 2pi), shape ``(n_trials, m_elements)``."""
    return np.mod(TWO_PI * _rng.uniforms(seed, trial_ids, offset, m_elements), TWO_PI)


def draw_estimated_cascades(params: SystemParams, sigma_e_sq: float, seed: int,
                            trial_ids) -> np.ndarray:
    """Vectorised :func:`draw_estimated_cascade`, shape ``(n_trials, M)``."""
    if not 0.0 <= sigma_e_sq < 1.0:
        raise ValueError("sigma_e_sq must lie in [0, 1)")
    h, g = draw_channels(params, seed, trial_ids)
    # each Rayleigh factor scaled by (1 - sigma_e^2)^(1/4): product scale s = sigma^2 (1 - sigma_e^2)
    return np.abs(h * g) * math.sqrt(1.0 - sigma_e_sq)


def draw_estimated_cascade(params: SystemParams, sigma_e_sq: float, rng: RngStream) -> np.ndarray:
    """Magnitudes ``|hat(h_i g_i)|`` under imperfect CSI.

    Each magnitude is double-Rayleigh with scale ``s = sigma^2 (1 - sigma_e^2)``,
    i.e. density ``(4x/s) K0(2x/sqrt(s))``. The same counters as
    :func:`draw_channel` are used, so ``sigma_e_sq = 0`` reproduces ``|h_i g_i|``.
    """
    return draw_estimated_cascades(params, sigma_e_sq, rng.seed, [rng.stream_id])[0]


# ---------------------------------------------------------------------------
# gains
# ---------------------------------------------------------------------------

def gains(cascade: np.ndarray, phases: np.ndarray, amplitudes=None) -> np.ndarray:
    """``|sum_i beta_i c_i exp(j phi_i)|^2`` along the last axis."""
    rot = np.exp(1j * phases)
    if amplitudes is not None:
        rot = rot * amplitudes
    field_ = np.sum(cascade * rot, axis=-1)
    return field_.real ** 2 + field_.imag ** 2


def channel_gain(ch: ChannelRealization, cfg: PhaseConfig) -> float:
    """Channel gain ``|sum_i beta_i h_i g_i exp(j phi_i)|^2``."""
    if cfg.phases.shape != ch.h.shape:
        raise ValueError(f"phase config has {cfg.phases.size} entries, channel has {ch.h.size}")
    return float(gains(ch.cascade, cfg.phases, cfg.amplitudes))


def beamforming_gain(ch: ChannelRealization) -> float:
    """Phase-aligned gain ``(sum_i |h_i||g_i|)^2``."""
    return float(np.sum(np.abs(ch.h) * np.abs(ch.g)) ** 2)


# ---------------------------------------------------------------------------
# correlation across channel uses
# ---------------------------------------------------------------------------

def gain_pairs(params: SystemParams, trials: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two gains per trial: one channel, two independent random phase configurations."""
    m = params.m_elements
    ids = np.arange(trials)
    h, g = draw_channels(params, seed, ids)
    c = h * g
    first = gains(c, random_phases(seed, ids, 4 * m, m))
    second = gains(c, random_phases(seed, ids, 5 * m, m))
    return first, second


def pearson_with_se(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Sample Pearson correlation and its influence-function standard error.

    The standard error makes no normality assumption, which matters for the
    heavy-tailed gains.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    zx = (x - x.mean()) / x.std()
    zy = (y - y.mean()) / y.std()
    r = float(np.mean(zx * zy))
    influence = zx * zy - 0.5 * r * (zx ** 2 + zy ** 2)
    return r, float(influence.std(ddof=1) / math.sqrt(n))


def empirical_gain_correlation(params: SystemParams, trials: int, rng_base: int) -> float:
    """Sample correlation between two channel uses with independent random phases."""
    if trials < 10_000:
        raise ValueError("trials must be >= 1e4")
    first, second = gain_pairs(params, trials, rng_base)
    return pearson_with_se(first, second)[0]
