"""Monte Carlo simulators for the six transmission schemes.

Trials are processed in fixed blocks of ``CHUNK`` consecutive trial ids.
Each block is a pure function of ``(request, block index)`` and the block
statistics are reduced in block order, so the result does not depend on
the number of worker threads.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import analytic
from . import channel as ch
from . import rng
from .analytic import CodingConfig, SelectionConfig
from .channel import SystemParams

CHUNK = 1 << 16
Z95 = 1.959963984540054
WILSON_MIN_COUNT = 10


class Scheme(str, enum.Enum):
    RANDOM = "Random"
    RRC = "RRC"
    OBF = "OBF"
    TD = "TD"
    ATD = "ATD"
    CT = "CT"


class MetricKind(str, enum.Enum):
    OUTAGE = "outage"
    RATE = "rate"
    ENERGY_EFFICIENCY = "energy_efficiency"
    FEEDBACK_BITS = "feedback_bits"
    MEAN_SNR = "mean_snr"


@dataclass(frozen=True)
class MetricEstimate:
    value: float
    half_width_95: float
    trials: int
    kind: MetricKind

    def __post_init__(self):
        if not self.half_width_95 >= 0:
            raise ValueError("half_width_95 must be non-negative")
        if self.kind is MetricKind.OUTAGE and not 0.0 <= self.value <= 1.0:
            raise ValueError("outage estimate outside [0, 1]")

    @property
    def std_error(self) -> float:
        return self.half_width_95 / Z95


@dataclass(frozen=True)
class SimRequest:
    """One simulation job.

    ``rho`` is the outage threshold. ``sigma_e_sq`` overrides the CT
    estimation error that would otherwise follow from ``coding.tau_training``
    and ``training_power``.
    """

    scheme: Scheme
    sp: SystemParams
    trials: int
    seed: int
    rho: float = 1.0
    coding: Optional[CodingConfig] = None
    selection: Optional[SelectionConfig] = None
    training_power: float = 0.0
    sigma_e_sq: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.rho >= 0:
            raise ValueError("rho must be non-negative")
        if self.training_power < 0:
            raise ValueError("training_power must be non-negative")
        s = self.scheme
        if s in (Scheme.RRC, Scheme.OBF) and self.coding is None:
            raise ValueError(f"{s.value} needs a CodingConfig")
        if s in (Scheme.TD, Scheme.ATD):
            if self.selection is None:
                raise ValueError(f"{s.value} needs a SelectionConfig")
            if self.selection.total_elements != self.sp.m_elements:
                raise ValueError("m*N must equal M")
        if s is Scheme.CT and self.sigma_e_sq is None and self.coding is None:
            raise ValueError("CT needs a CodingConfig (tau) or an explicit sigma_e_sq")

    def ct_error_variance(self) -> float:
        if self.sigma_e_sq is not None:
            return self.sigma_e_sq
        return analytic.sigma_e_sq(self.coding.tau_training, self.training_power,
                                   self.sp.m_elements)


@dataclass
class SimResult:
    outage: MetricEstimate
    rate: MetricEstimate
    feedback_bits: Optional[MetricEstimate] = None
    mean_snr: Optional[MetricEstimate] = None
    trajectory: Optional[np.ndarray] = None
    acceptance_rate: Optional[float] = None
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def wilson_half_width(successes: int, n: int) -> float:
    """Largest distance from ``k/n`` to the 95% Wilson interval bounds."""
    p = successes / n
    z2 = Z95 * Z95
    centre = (p + z2 / (2 * n)) / (1 + z2 / n)
    spread = Z95 * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n)
    return max(p - (centre - spread), (centre + spread) - p)


def _from_moments(n: int, total: float, total_sq: float, kind: MetricKind) -> MetricEstimate:
    mean = total / n
    if kind is MetricKind.OUTAGE:
        k = int(round(total))
        if min(k, n - k) < WILSON_MIN_COUNT:
            return MetricEstimate(mean, wilson_half_width(k, n), n, kind)
        return MetricEstimate(mean, Z95 * math.sqrt(mean * (1 - mean) / n), n, kind)
    if n < 2:
        return MetricEstimate(mean, 0.0, n, kind)
    var = max(total_sq - n * mean * mean, 0.0) / (n - 1)
    return MetricEstimate(mean, Z95 * math.sqrt(var / n), n, kind)


def estimate(values, kind: MetricKind = MetricKind.RATE) -> MetricEstimate:
    """Mean with a normal-approximation 95% half-width.

    Outage indicators with fewer than ten events (or non-events) get the
    Wilson half-width instead.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need at least one value")
    return _from_moments(x.size, math.fsum(x), math.fsum(x * x), MetricKind(kind))


class _Accumulator:
    """Ordered reduction of per-block sums."""

    def __init__(self):
        self.n = 0
        self.sums: dict[str, list] = {}

    def add(self, n: int, stats: dict[str, np.ndarray]):
        self.n += n
        for key, vals in stats.items():
            vals = np.asarray(vals, dtype=float)
            self.sums.setdefault(key, []).append((float(np.sum(vals)), float(np.sum(vals * vals))))

    def total(self, key: str) -> float:
        return math.fsum(p[0] for p in self.sums[key])

    def metric(self, key: str, kind: MetricKind) -> MetricEstimate:
        parts = self.sums[key]
        return _from_moments(self.n, math.fsum(p[0] for p in parts),
                             math.fsum(p[1] for p in parts), kind)


def _blocks(trials: int):
    return [np.arange(lo, min(lo + CHUNK, trials), dtype=np.int64)
            for lo in range(0, trials, CHUNK)]


def _run_blocks(kernel: Callable[[np.ndarray], dict], trials: int, workers: int) -> list[dict]:
    blocks = _blocks(trials)
    if workers <= 1 or len(blocks) == 1:
        return [kernel(ids) for ids in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(kernel, blocks))


def _rate(snr: np.ndarray) -> np.ndarray:
    return np.log2(1.0 + snr)


# ---------------------------------------------------------------------------
# per-block kernels
# ---------------------------------------------------------------------------

def _random_block(req: SimRequest, ids: np.ndarray) -> dict:
    sp, m = req.sp, req.sp.m_elements
    h, g = ch.draw_channels(sp, req.seed, ids)
    snr = sp.snr * ch.gains(h * g, ch.random_phases(req.seed, ids, 4 * m, m))
    rate = _rate(snr)
    return {"outage": rate <= req.rho, "rate": rate, "snr": snr}


def _rrc_block(req: SimRequest, ids: np.ndarray) -> dict:
    sp, m, T = req.sp, req.sp.m_elements, req.coding.t_channel_uses
    h, g = ch.draw_channels(sp, req.seed, ids)
    c = h * g
    total = np.zeros(ids.size)
    for t in range(T):
        total += _rate(sp.snr * ch.gains(c, ch.random_phases(req.seed, ids, (4 + t) * m, m)))
    rate = total / T
    return {"outage": rate <= req.rho, "rate": rate}


def obf_paths(req: SimRequest, ids: np.ndarray, keep_paths: bool = False) -> dict:
    """One-bit feedback training for the given trial ids.

    Counters: initial phases at ``[4M, 5M)``, the step-``t`` perturbation
    (t = 2..tau) at ``[(3 + t) M, (4 + t) M)``. Returns per-trial sum-rate
    per use, final accepted SNR, accept count, the per-step sums of the
    accepted SNR and, with ``keep_paths``, the full ``(n, tau)`` accepted-SNR
    paths together with the beamforming SNR bound.
    """
    sp, m = req.sp, req.sp.m_elements
    cc = req.coding
    tau, T, step = max(cc.tau_training, 1), cc.t_channel_uses, cc.max_step
    h, g = ch.draw_channels(sp, req.seed, ids)
    c = h * g
    phi0 = ch.random_phases(req.seed, ids, 4 * m, m)
    best = sp.snr * ch.gains(c, phi0)
    sum_rate = _rate(best)
    accepted = np.zeros(ids.size)
    traj = np.empty(tau)
    traj[0] = math.fsum(best)
    paths = np.empty((ids.size, tau)) if keep_paths else None
    if keep_paths:
        paths[:, 0] = best
    for t in range(2, tau + 1):
        u = rng.uniforms(req.seed, ids, (3 + t) * m, m)
        proposal = phi0 + step * (2.0 * u - 1.0)
        snr = sp.snr * ch.gains(c, proposal)
        sum_rate += _rate(snr)
        better = snr > best
        phi0 = np.where(better[:, None], proposal, phi0)
        best = np.where(better, snr, best)
        accepted += better
        traj[t - 1] = math.fsum(best)
        if keep_paths:
            paths[:, t - 1] = best
    sum_rate += (T - tau) * _rate(best)
    out = {"rate": sum_rate / T, "final_snr": best, "accepted": accepted, "trajectory": traj}
    if keep_paths:
        out["paths"] = paths
        out["bf_snr"] = sp.snr * np.sum(np.abs(c), axis=1) ** 2
    return out


def _obf_block(req: SimRequest, ids: np.ndarray) -> dict:
    res = obf_paths(req, ids)
    return {"outage": res["rate"] <= req.rho, "rate": res["rate"], "snr": res["final_snr"],
            "accepted": res["accepted"], "_trajectory": res["trajectory"]}


def _subsurface_snrs(req: SimRequest, ids: np.ndarray) -> np.ndarray:
    sp, M = req.sp, req.sp.m_elements
    sel = req.selection
    h, g = ch.draw_channels(sp, req.seed, ids)
    c = (h * g).reshape(ids.size, sel.n_subsurfaces, sel.elements_per_subsurface)
    phases = ch.random_phases(req.seed, ids, 4 * M, M).reshape(c.shape)
    return sp.snr * ch.gains(c, phases)


def _td_block(req: SimRequest, ids: np.ndarray) -> dict:
    snr = _subsurface_snrs(req, ids).max(axis=1)
    rate = _rate(snr)
    return {"outage": rate <= req.rho, "rate": rate, "snr": snr}


def _atd_block(req: SimRequest, ids: np.ndarray) -> dict:
    n_sub = req.selection.n_subsurfaces
    rates = _rate(_subsurface_snrs(req, ids))
    ok = rates[:, :-1] >= req.selection.threshold_psi
    any_ok = ok.any(axis=1)
    first = np.where(any_ok, ok.argmax(axis=1), n_sub - 1)
    chosen = rates[np.arange(ids.size), first]
    bits = np.minimum(first + 1, n_sub - 1).astype(float)
    return {"outage": chosen <= req.rho, "rate": chosen, "bits": bits}


def _ct_block(req: SimRequest, ids: np.ndarray) -> dict:
    sp = req.sp
    err = req.ct_error_variance()
    mags = ch.draw_estimated_cascades(sp, err, req.seed, ids)
    snr = sp.tx_power / (sp.noise_var + err) * np.sum(mags, axis=1) ** 2
    rate = _rate(snr)
    return {"outage": rate <= req.rho, "rate": rate, "snr": snr}


_KERNELS = {
    Scheme.RANDOM: _random_block,
    Scheme.RRC: _rrc_block,
    Scheme.OBF: _obf_block,
    Scheme.TD: _td_block,
    Scheme.ATD: _atd_block,
    Scheme.CT: _ct_block,
}


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def simulate(req: SimRequest, workers: int = 1) -> SimResult:
    """Run ``req`` and return its metric estimates; ``workers`` never changes the result."""
    kernel = _KERNELS[req.scheme]
    outputs = _run_blocks(lambda ids: kernel(req, ids), req.trials, workers)
    acc = _Accumulator()
    trajectory = None
    for ids, out in zip(_blocks(req.trials), outputs):
        traj = out.pop("_trajectory", None)
        if traj is not None:
            trajectory = traj if trajectory is None else trajectory + traj
        acc.add(ids.size, out)
    result = SimResult(acc.metric("outage", MetricKind.OUTAGE),
                       acc.metric("rate", MetricKind.RATE))
    if "snr" in acc.sums:
        result.mean_snr = acc.metric("snr", MetricKind.MEAN_SNR)
    if req.scheme is Scheme.TD:
        bits = float(math.ceil(math.log2(req.selection.n_subsurfaces)))
        result.feedback_bits = MetricEstimate(bits, 0.0, req.trials, MetricKind.FEEDBACK_BITS)
    if req.scheme is Scheme.ATD:
        result.feedback_bits = acc.metric("bits", MetricKind.FEEDBACK_BITS)
    if req.scheme is Scheme.OBF:
        result.trajectory = trajectory / req.trials
        proposals = req.trials * (max(req.coding.tau_training, 1) - 1)
        result.acceptance_rate = acc.total("accepted") / proposals if proposals else math.nan
    return result


def _checked(req: SimRequest, scheme: Scheme, workers: int) -> SimResult:
    if req.scheme is not scheme:
        req = replace(req, scheme=scheme)
    return simulate(req, workers)


def simulate_random(req: SimRequest, workers: int = 1) -> SimResult:
    return _checked(req, Scheme.RANDOM, workers)


def simulate_rrc(req: SimRequest, workers: int = 1) -> SimResult:
    """One channel per trial, ``T`` independent phase draws; outage on the average rate."""
    return _checked(req, Scheme.RRC, workers)


def simulate_obf(req: SimRequest, workers: int = 1) -> SimResult:
    return _checked(req, Scheme.OBF, workers)


def simulate_td(req: SimRequest, workers: int = 1) -> SimResult:
    return _checked(req, Scheme.TD, workers)


def simulate_atd(req: SimRequest, workers: int = 1) -> SimResult:
    return _checked(req, Scheme.ATD, workers)


def simulate_ct(req: SimRequest, workers: int = 1) -> SimResult:
    return _checked(req, Scheme.CT, workers)
