"""Closed-form and semi-analytic performance expressions.

Outage probabilities take a rate threshold (a :class:`RateThreshold` or a
plain float ``rho`` in bits/s/Hz) and a :class:`~irslab.channel.SystemParams`.
Selection-scheme functions additionally take a :class:`SelectionConfig`
whose ``m * N`` must equal ``params.m_elements``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from .channel import SystemParams
from .numerics import (QuadratureSpec, SeriesSpec, gil_pelaez_series_tail,
                       integrate_adaptive, log_bessel_k_int, nested_integral)

LN2 = math.log(2.0)
RATE_TAIL_TOL = 1e-8

_RATE_QUAD = QuadratureSpec(node_count=16, max_subdivisions=400, abs_tol=1e-12, rel_tol=1e-10)
_RRC_QUAD = QuadratureSpec(node_count=12, max_subdivisions=300, abs_tol=1e-16, rel_tol=1e-8)
_CT_QUAD = QuadratureSpec(node_count=16, max_subdivisions=400, abs_tol=1e-13, rel_tol=1e-10)
_CT_RATE_QUAD = QuadratureSpec(node_count=12, max_subdivisions=100, abs_tol=1e-7, rel_tol=1e-7)


@dataclass(frozen=True)
class RateThreshold:
    rho: float

    def __post_init__(self):
        if not self.rho >= 0:
            raise ValueError("rho must be non-negative")

    @property
    def theta(self) -> float:
        return 2.0 ** self.rho - 1.0


@dataclass(frozen=True)
class SelectionConfig:
    n_subsurfaces: int
    elements_per_subsurface: int
    threshold_psi: float = 0.0

    def __post_init__(self):
        if self.n_subsurfaces < 1 or self.elements_per_subsurface < 1:
            raise ValueError("N and m must be positive integers")
        if not self.threshold_psi >= 0:
            raise ValueError("psi must be non-negative")

    @property
    def total_elements(self) -> int:
        return self.n_subsurfaces * self.elements_per_subsurface


@dataclass(frozen=True)
class CodingConfig:
    t_channel_uses: int = 1
    tau_training: int = 0
    max_step: float = math.pi
    kappa: float = 1.0

    def __post_init__(self):
        if self.t_channel_uses < 1:
            raise ValueError("T must be >= 1")
        if not 0 <= self.tau_training <= self.t_channel_uses:
            raise ValueError("tau must satisfy 0 <= tau <= T")
        if not 0 < self.max_step <= math.pi:
            raise ValueError("max_step must lie in (0, pi]")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")


@dataclass(frozen=True)
class DiversityResult:
    order: float
    coding_gain: float


Threshold = Union[RateThreshold, float]


def _rho(rt: Threshold) -> float:
    rho = rt.rho if isinstance(rt, RateThreshold) else float(rt)
    if not rho >= 0:
        raise ValueError("rho must be non-negative")
    return rho


def _theta(rt: Threshold) -> float:
    return 2.0 ** _rho(rt) - 1.0


def _check_selection(sel: SelectionConfig, sp: SystemParams) -> None:
    if sel.total_elements != sp.m_elements:
        raise ValueError(f"m*N = {sel.total_elements} but params have M = {sp.m_elements}")


def _sub_params(sel: SelectionConfig, sp: SystemParams) -> SystemParams:
    _check_selection(sel, sp)
    return SystemParams(sel.elements_per_subsurface, sp.tx_power, sp.noise_var, sp.var_h, sp.var_g)


# ---------------------------------------------------------------------------
# distribution of the random-phase gain H (M elements)
# ---------------------------------------------------------------------------

_SERIES_SWITCH = 0.5


def _cdf_small(a: np.ndarray, m: int) -> np.ndarray:
    """CDF of H / sigma^2 at small ``a`` from the ascending series of K_m.

    Avoids the ``1 - (1 - eps)`` cancellation of the closed form.
    """
    out = np.zeros_like(a)
    lgm = math.lgamma(m)
    for k in range(1, m):
        coef = math.exp(math.lgamma(m - k) - lgm - math.lgamma(k + 1))
        out += (-1) ** (k + 1) * coef * a ** k
    log_a = np.log(a)
    tail = np.zeros_like(a)
    for k in range(40):
        log_c = (m + k) * log_a - lgm - math.lgamma(k + 1) - math.lgamma(m + k + 1)
        tail += (log_a - special.digamma(k + 1) - special.digamma(m + k + 1)) * np.exp(log_c)
    out += (-1) ** m * tail
    return out


def _log_ccdf(a: np.ndarray, m: int) -> np.ndarray:
    return (LN2 - math.lgamma(m) + 0.5 * m * np.log(a)
            + log_bessel_k_int(m, 2.0 * np.sqrt(a)))


def _ccdf_norm(a, m: int) -> np.ndarray:
    """``P{H > a sigma^2}``: ``(2/Gamma(m)) a^(m/2) K_m(2 sqrt(a))``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    out = np.ones_like(a)
    pos = a > 0
    small = pos & (a <= _SERIES_SWITCH)
    large = a > _SERIES_SWITCH
    if np.any(small):
        out[small] = 1.0 - _cdf_small(a[small], m)
    if np.any(large):
        out[large] = np.exp(_log_ccdf(a[large], m))
    return np.clip(out, 0.0, 1.0)


def _cdf_norm(a, m: int) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    out = np.zeros_like(a)
    small = (a > 0) & (a <= _SERIES_SWITCH)
    large = a > _SERIES_SWITCH
    if np.any(small):
        out[small] = _cdf_small(a[small], m)
    if np.any(large):
        out[large] = -np.expm1(_log_ccdf(a[large], m))
    return np.clip(out, 0.0, 1.0)


def _scalar_or_array(value, like):
    return float(value[0]) if np.ndim(like) == 0 else value


def cascade_cdf(x, m: int, sigma_sq: float):
    """CDF of ``H = |sum_{i<=m} h_i g_i exp(j phi_i)|^2``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    return _scalar_or_array(_cdf_norm(x / sigma_sq, m), x)


def cascade_ccdf(x, m: int, sigma_sq: float):
    """Complementary CDF of H, accurate in both tails."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    return _scalar_or_array(_ccdf_norm(x / sigma_sq, m), x)


def cascade_pdf(x, m: int, sigma_sq: float):
    """Density ``(2/Gamma(m)) x^((m-1)/2) sigma^-(m+1) K_{m-1}(2 sqrt(x/sigma^2))``."""
    x_in = np.asarray(x, dtype=float)
    x = np.atleast_1d(x_in)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    out = np.empty_like(x)
    zero = x == 0
    out[zero] = math.inf if m == 1 else 1.0 / ((m - 1) * sigma_sq)
    pos = ~zero
    if np.any(pos):
        xp = x[pos]
        log_f = (LN2 - math.lgamma(m) + 0.5 * (m - 1) * np.log(xp)
                 - 0.5 * (m + 1) * math.log(sigma_sq)
                 + log_bessel_k_int(m - 1, 2.0 * np.sqrt(xp / sigma_sq)))
        out[pos] = np.exp(log_f)
    return _scalar_or_array(out, x_in)


# ---------------------------------------------------------------------------
# random rotation, one channel use
# ---------------------------------------------------------------------------

def outage_random(rt: Threshold, sp: SystemParams) -> float:
    """Outage of a random rotation over one channel use."""
    theta = _theta(rt)
    if theta == 0:
        return 0.0
    return float(_cdf_norm(theta / (sp.sigma_sq * sp.snr), sp.m_elements)[0])


def _ccdf_in_rate(rho: np.ndarray, m: int, scale: float) -> np.ndarray:
    """``1 - Pi(rho, 1)`` vectorised over rho; ``scale = sigma^2 P / sigma_n^2``."""
    return _ccdf_norm(np.expm1(rho * LN2) / scale, m)


def _semi_infinite_rate(survival, start: float = 1.0) -> float:
    """``int_0^inf survival(rho) d rho`` truncated where survival < RATE_TAIL_TOL."""
    hi = start
    while survival(np.array([hi]))[0] >= RATE_TAIL_TOL:
        hi *= 2.0
        if hi > 1e4:
            raise RuntimeError("rate integrand does not decay")
    return integrate_adaptive(survival, 0.0, hi, _RATE_QUAD)[0]


def rate_random(sp: SystemParams) -> float:
    """Expected rate ``int_0^inf (1 - Pi(rho, 1)) d rho``; equals the RRC rate for every T."""
    scale = sp.sigma_sq * sp.snr
    return _semi_infinite_rate(lambda r: _ccdf_in_rate(r, sp.m_elements, scale))


def expected_bf_snr(sp: SystemParams) -> float:
    """Mean beamforming SNR ``(P/sigma_n^2)(sigma^2 M + C(M,2) sigma^2 pi^2 / 8)``."""
    m = sp.m_elements
    return sp.snr * sp.sigma_sq * (m + math.comb(m, 2) * math.pi ** 2 / 8.0)


# ---------------------------------------------------------------------------
# RRC over T channel uses
# ---------------------------------------------------------------------------

def _rrc_nested(rho: float, sp: SystemParams, t_uses: int, cdf, pdf, prefactor: float,
                quad: QuadratureSpec) -> float:
    c = 2.0 ** (rho * t_uses)
    inv_snr = 1.0 / sp.snr

    def upper(outer):
        return c / math.prod(outer) if outer else c

    def integrand(w):
        prod_w = np.prod(w, axis=1)
        big_theta = inv_snr * np.maximum(c / prod_w - 1.0, 0.0)
        val = cdf(big_theta)
        for k in range(w.shape[1]):
            val = val * pdf(inv_snr * (w[:, k] - 1.0))
        return val

    return prefactor * nested_integral(t_uses - 1, upper, integrand, quad)


def outage_rrc_ind(rt: Threshold, sp: SystemParams, T: int,
                   quad: QuadratureSpec = _RRC_QUAD) -> float:
    """RRC outage with the channel uses treated as independent (T-1 fold integral)."""
    if not 1 <= T <= 7:
        raise ValueError("T must lie in [1, 7]")
    rho = _rho(rt)
    if T == 1 or rho == 0:
        return outage_random(rho, sp)
    m, s2 = sp.m_elements, sp.sigma_sq
    return _rrc_nested(rho, sp, T,
                       lambda x: _cdf_norm(x / s2, m),
                       lambda x: np.atleast_1d(cascade_pdf(x, m, s2)),
                       (1.0 / sp.snr) ** (T - 1), quad)


def outage_rrc_clt(rt: Threshold, sp: SystemParams, T: int,
                   quad: QuadratureSpec = _RRC_QUAD) -> float:
    """RRC outage with exponential (CLT) channel gains of mean ``sigma^2 M``."""
    if not 1 <= T <= 7:
        raise ValueError("T must lie in [1, 7]")
    rho = _rho(rt)
    if rho == 0:
        return 0.0
    mean = sp.sigma_sq * sp.m_elements
    if T == 1:
        return float(-math.expm1(-_theta(rho) / (sp.snr * mean)))
    # pdf written as exp(-x/mean); the 1/mean factors sit in the prefactor
    return _rrc_nested(rho, sp, T,
                       lambda x: -np.expm1(-x / mean),
                       lambda x: np.exp(-x / mean),
                       (1.0 / (sp.snr * mean)) ** (T - 1), quad)


# ---------------------------------------------------------------------------
# one-bit feedback
# ---------------------------------------------------------------------------

def rate_obf_bound(t: int, cc: CodingConfig, sp: SystemParams) -> float:
    """Jensen upper-bound rate at channel use ``t`` with ``b = kappa t`` useful bits.

    Mirrors the published expression, which uses ``M + C(M,2) pi^2/8`` without
    the ``sigma^2`` factor.
    """
    m = sp.m_elements
    if m < 2:
        raise ValueError("the feedback-bit rate approximation needs M >= 2")
    if t < 1:
        raise ValueError("t must be >= 1")
    gain = m + math.comb(m, 2) * math.pi ** 2 / 8.0
    frac = -math.expm1(-LN2 * cc.kappa * t / (m - 1))
    return math.log2(1.0 + sp.snr * gain * frac)


def rate_obf_approx(cc: CodingConfig, sp: SystemParams) -> float:
    """Per-use rate approximation ``(1/T)(sum_{t<=tau} R(t) + (T - tau) R(tau))``."""
    tau, T = cc.tau_training, cc.t_channel_uses
    if tau < 1:
        return rate_obf_bound(1, cc, sp)
    training = math.fsum(rate_obf_bound(t, cc, sp) for t in range(1, tau + 1))
    return (training + (T - tau) * rate_obf_bound(tau, cc, sp)) / T


# ---------------------------------------------------------------------------
# selection schemes
# ---------------------------------------------------------------------------

def outage_td(rt: Threshold, sel: SelectionConfig, sp: SystemParams) -> float:
    """Best-of-N sub-surface outage ``Pi(rho, 1)^N`` with ``M = m``."""
    return outage_random(rt, _sub_params(sel, sp)) ** sel.n_subsurfaces


def outage_td_clt(rt: Threshold, sel: SelectionConfig, sp: SystemParams) -> float:
    """CLT approximation ``(1 - exp(-theta sigma_n^2 / (sigma^2 m P)))^N``."""
    _check_selection(sel, sp)
    x = _theta(rt) / (sp.snr * sp.sigma_sq * sel.elements_per_subsurface)
    return (-math.expm1(-x)) ** sel.n_subsurfaces


def outage_td_gumbel(rt: Threshold, sel: SelectionConfig, sp: SystemParams) -> float:
    """Gumbel limit ``exp(-N exp(-theta sigma_n^2 / (sigma^2 m P)))``."""
    _check_selection(sel, sp)
    x = _theta(rt) / (sp.snr * sp.sigma_sq * sel.elements_per_subsurface)
    return math.exp(-sel.n_subsurfaces * math.exp(-x))


def _gain_integral(sp: SystemParams, m: int, lower: float, weight_power: int = 0) -> float:
    """``int_lower^inf log2(1 + snr h) F(h)^k f(h) dh`` over the m-element gain; k = weight_power.

    Integrated in ``u = sqrt(h)`` so the m = 1 log singularity is tamed.
    """
    s2 = sp.sigma_sq
    u_lo = math.sqrt(lower)
    u_hi = max(2.0 * u_lo, math.sqrt(s2 * m))
    while cascade_ccdf(u_hi ** 2, m, s2) > 1e-15:
        u_hi *= 1.5

    def integrand(u):
        h = u * u
        val = np.log2(1.0 + sp.snr * h) * np.atleast_1d(cascade_pdf(h, m, s2)) * 2.0 * u
        if weight_power:
            val = val * _cdf_norm(h / s2, m) ** weight_power
        return val

    return integrate_adaptive(integrand, u_lo, u_hi, _RATE_QUAD)[0]


def rate_td(sel: SelectionConfig, sp: SystemParams) -> float:
    """Expected rate of the best sub-surface, ``N int log2(1+Ph) F^(N-1) f dh``."""
    _check_selection(sel, sp)
    n = sel.n_subsurfaces
    return n * _gain_integral(sp, sel.elements_per_subsurface, 0.0, n - 1)


def outage_atd(rt: Threshold, sel: SelectionConfig, sp: SystemParams) -> float:
    """Outage of sequential threshold selection with threshold ``psi``."""
    sub = _sub_params(sel, sp)
    rho, psi, n = _rho(rt), sel.threshold_psi, sel.n_subsurfaces
    p_rho = outage_random(rho, sub)
    p_psi = outage_random(psi, sub)
    value = p_psi ** (n - 1) * p_rho
    if rho > psi:
        value += (p_rho - p_psi) * math.fsum(p_psi ** k for k in range(n - 1))
    return value


def atd_feedback_bits(psi: float, sel: SelectionConfig, sp: SystemParams) -> float:
    """Published average feedback cost ``1 + (N - 2) Pi(psi, 1)``.

    For N >= 4 this differs from the expectation of a stop-at-first-success
    protocol; see :func:`atd_feedback_bits_sequential`. N = 1 needs no feedback.
    """
    n = sel.n_subsurfaces
    if n == 1:
        return 0.0
    return 1.0 + (n - 2) * outage_random(psi, _sub_params(sel, sp))


def atd_feedback_bits_sequential(psi: float, sel: SelectionConfig, sp: SystemParams) -> float:
    """Expected bits when tests stop at the first success: ``sum_{k<=N-2} Pi(psi,1)^k``."""
    n = sel.n_subsurfaces
    if n == 1:
        return 0.0
    p = outage_random(psi, _sub_params(sel, sp))
    return math.fsum(p ** k for k in range(n - 1))


def rate_atd(sel: SelectionConfig, sp: SystemParams) -> float:
    """ATD expected rate; the inner lower limit is the gain ``(2^psi - 1) sigma_n^2 / P``."""
    sub = _sub_params(sel, sp)
    psi, n, m = sel.threshold_psi, sel.n_subsurfaces, sel.elements_per_subsurface
    p_psi = outage_random(psi, sub)
    h_psi = (2.0 ** psi - 1.0) / sp.snr
    full = _gain_integral(sp, m, 0.0)
    if n == 1:
        return full
    above = full if h_psi == 0 else _gain_integral(sp, m, h_psi)
    return math.fsum(p_psi ** k for k in range(n - 1)) * above + p_psi ** (n - 1) * full


# ---------------------------------------------------------------------------
# diversity order and coding gain
# ---------------------------------------------------------------------------

def diversity_rrc(T: int, M: int, rt: Threshold, sp: SystemParams) -> DiversityResult:
    """Order ``min(T, M)``; coding gain from the CLT expansion (defined for T <= M)."""
    rho = _rho(rt)
    if T > M:
        return DiversityResult(float(M), math.nan)
    log_c = rho * T * LN2
    series = math.fsum((-1) ** t / math.factorial(t) * log_c ** t for t in range(T))
    gain = (sp.noise_var / (sp.sigma_sq * M)) ** T * (-1) ** T * (1.0 - math.exp(log_c) * series)
    return DiversityResult(float(min(T, M)), gain)


def diversity_td(N: int, m: int, rt: Threshold, sp: SystemParams) -> DiversityResult:
    gain = (sp.noise_var * _theta(rt) / (sp.sigma_sq * m)) ** N
    return DiversityResult(float(N), gain)


def diversity_atd(N: int, m: int, rt: Threshold, psi: float, sp: SystemParams) -> DiversityResult:
    """Order N with ``rho <= psi``; order 1 otherwise (the mis-selection term dominates)."""
    rho = _rho(rt)
    base = sp.noise_var / (sp.sigma_sq * m)
    th_rho, th_psi = _theta(rho), _theta(psi)
    if rho <= psi:
        return DiversityResult(float(N), base ** N * th_psi ** (N - 1) * th_rho)
    return DiversityResult(1.0, base * (th_rho - th_psi))


# ---------------------------------------------------------------------------
# coherent transmission with imperfect CSI
# ---------------------------------------------------------------------------

def sigma_e_sq(tau: float, P_o: float, M: int) -> float:
    """MMSE estimation-error variance ``1 / (1 + tau P_o / M)``."""
    if tau < 0 or P_o < 0 or M < 1:
        raise ValueError("need tau >= 0, P_o >= 0, M >= 1")
    if math.isinf(tau):
        return 0.0
    return 1.0 / (1.0 + tau * P_o / M)


def cascade_magnitude_cf(t, s: float) -> np.ndarray:
    """Characteristic function of one double-Rayleigh magnitude with scale ``s``."""
    t = np.asarray(t, dtype=float)
    rs = math.sqrt(s)
    q = s * t * t + 4.0
    num = 4.0 * np.sqrt(q) + 2j * rs * t * (math.pi + 2j * np.arcsinh(0.5 * rs * t))
    return num / q ** 1.5


def outage_ct(rt: Threshold, sp: SystemParams, sigma_e_sq: float,
              quad: QuadratureSpec = _CT_QUAD) -> float:
    """Coherent-transmission outage under imperfect CSI (Gil-Pelaez, series from 2M)."""
    if not 0.0 <= sigma_e_sq < 1.0:
        raise ValueError("sigma_e_sq must lie in [0, 1)")
    theta = _theta(rt)
    if theta == 0:
        return 0.0
    m = sp.m_elements
    s = sp.sigma_sq * (1.0 - sigma_e_sq)
    x = math.sqrt(theta * (sp.noise_var + sigma_e_sq) / sp.tx_power)
    return gil_pelaez_series_tail(lambda t: cascade_magnitude_cf(t, s) ** m, x, 2 * m,
                                  SeriesSpec(2 * m), quad)


def rate_ct(sp: SystemParams, sigma_e_sq: float) -> float:
    """``int_0^inf (1 - Pi_CT(rho)) d rho``."""
    qspec = QuadratureSpec(12, 200, 1e-12, 1e-8)

    def survival(rhos):
        return np.array([1.0 - outage_ct(float(r), sp, sigma_e_sq, qspec) for r in rhos])

    hi = 1.0
    while survival([hi])[0] >= RATE_TAIL_TOL:
        hi *= 2.0
    return integrate_adaptive(survival, 0.0, hi, _CT_RATE_QUAD)[0]
