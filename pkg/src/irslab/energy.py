"""Power consumption and energy efficiency for each scheme.

All inputs are linear (W, bits/s/Hz); efficiencies are in bits/Joule/Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from . import analytic
from .analytic import CodingConfig, SelectionConfig
from .channel import SystemParams
from .simulate import Scheme


@dataclass(frozen=True)
class PowerModel:
    amp_efficiency: float = 1.2
    p_source: float = 10 ** 0.9
    p_dest: float = 0.01
    p_element: float = 0.01
    p_pilot: float = 0.0

    def __post_init__(self):
        if not self.amp_efficiency > 0:
            raise ValueError("amp_efficiency must be positive")
        for name in ("p_source", "p_dest", "p_element", "p_pilot"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")


def active_elements(scheme: Scheme, sp: SystemParams,
                    selection: Optional[SelectionConfig] = None) -> int:
    scheme = Scheme(scheme)
    if scheme in (Scheme.TD, Scheme.ATD):
        if selection is None:
            raise ValueError(f"{scheme.value} needs a SelectionConfig")
        if selection.total_elements != sp.m_elements:
            raise ValueError("m*N must equal M")
        return selection.elements_per_subsurface
    return sp.m_elements


def total_power(scheme: Scheme, sp: SystemParams, pm: PowerModel,
                coding: Optional[CodingConfig] = None,
                selection: Optional[SelectionConfig] = None) -> float:
    """Denominator of the efficiency, in W.

    For CT this is the training-weighted consumption
    ``(1 - tau/T)(P/xi + M P_E) + tau M P_o / T + P_S + P_D``.
    """
    scheme = Scheme(scheme)
    p_irs = active_elements(scheme, sp, selection) * pm.p_element
    static = pm.p_source + pm.p_dest
    if scheme is Scheme.CT:
        frac = _training_fraction(coding)
        return ((1.0 - frac) * (sp.tx_power / pm.amp_efficiency + p_irs)
                + frac * sp.m_elements * pm.p_pilot + static)
    return sp.tx_power / pm.amp_efficiency + static + p_irs


def _training_fraction(coding: Optional[CodingConfig]) -> float:
    if coding is None:
        return 0.0
    return coding.tau_training / coding.t_channel_uses


def energy_efficiency(rate: float, scheme: Scheme, sp: SystemParams, pm: PowerModel,
                      coding: Optional[CodingConfig] = None,
                      selection: Optional[SelectionConfig] = None) -> float:
    """Expected rate per consumed power; CT scales its rate by ``1 - tau/T``."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    scheme = Scheme(scheme)
    useful = rate
    if scheme is Scheme.CT:
        useful = (1.0 - _training_fraction(coding)) * rate
    return useful / total_power(scheme, sp, pm, coding, selection)


@dataclass(frozen=True)
class SchemeSummary:
    """One column of the scheme comparison table.

    ``diversity`` and ``signaling_bits`` hold the symbolic expressions;
    the ``*_value`` fields hold them evaluated at the supplied parameters.
    """

    diversity: str
    signaling_bits: str
    active_elements: int
    has_training: bool
    prelog: float
    diversity_value: float
    signaling_bits_value: float

    def __post_init__(self):
        if not 0.0 <= self.prelog <= 1.0:
            raise ValueError("prelog must lie in [0, 1]")


def atd_prelog(rho_psi_outage: float, n_sub: int, coding: Optional[CodingConfig]) -> float:
    """``1 - (tau / (N T)) sum_{k<N} Pi(psi,1)^k``: sub-surface k+1 is trained only after k misses.

    ``tau`` is the training length for all N sub-surfaces, so each costs ``tau/N``.
    """
    frac = _training_fraction(coding)
    expected_trained = math.fsum(rho_psi_outage ** k for k in range(n_sub))
    return 1.0 - frac * expected_trained / n_sub


def scheme_summary(scheme: Scheme, sp: SystemParams, coding: Optional[CodingConfig] = None,
                   selection: Optional[SelectionConfig] = None, rho: float = 1.0) -> SchemeSummary:
    scheme = Scheme(scheme)
    M = sp.m_elements
    T = coding.t_channel_uses if coding else 1
    tau = coding.tau_training if coding else 0
    if scheme is Scheme.RANDOM:
        return SchemeSummary("1", "0", M, False, 1.0, 1.0, 0.0)
    if scheme is Scheme.RRC:
        return SchemeSummary("min(T,M)", "0", M, False, 1.0, float(min(T, M)), 0.0)
    if scheme is Scheme.OBF:
        return SchemeSummary("min(tau,M)", "tau", M, False, 1.0, float(min(tau, M)), float(tau))
    if scheme is Scheme.CT:
        return SchemeSummary("M", "kM", M, True, 1.0 - _training_fraction(coding),
                             float(M), math.nan)
    if selection is None:
        raise ValueError(f"{scheme.value} needs a SelectionConfig")
    n, m = selection.n_subsurfaces, selection.elements_per_subsurface
    if scheme is Scheme.TD:
        bits = float(math.ceil(math.log2(n)))
        return SchemeSummary("N", "ceil(log2(N))", m, True, 1.0 - _training_fraction(coding),
                             float(n), bits)
    psi = selection.threshold_psi
    div = analytic.diversity_atd(n, m, rho, psi, sp).order
    bits = analytic.atd_feedback_bits(psi, selection, sp)
    sub = SystemParams(m, sp.tx_power, sp.noise_var, sp.var_h, sp.var_g)
    prelog = atd_prelog(analytic.outage_random(psi, sub), n, coding)
    return SchemeSummary("N if rho <= psi else 1", "1+(N-2)*Pi(psi,1)", m, True, prelog,
                         div, bits)
