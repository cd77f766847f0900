"""Special functions and quadrature engines.

Everything here is pure and reentrant. Integrands are expected to be
vectorised: they receive a 1-D ``ndarray`` of abscissae and return an array
of the same length.
"""
from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import special


class ConvergenceError(RuntimeError):
    """Raised when an integration or series budget is exhausted.

    The best available estimate is kept on ``estimate``.
    """

    def __init__(self, message: str, estimate: float = math.nan):
        super().__init__(message)
        self.estimate = estimate


class ClampWarning(RuntimeWarning):
    """A probability had to be clamped to [0, 1] by more than the tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    node_count: int = 16
    max_subdivisions: int = 400
    abs_tol: float = 1e-13
    rel_tol: float = 1e-10

    def __post_init__(self):
        if self.node_count < 2:
            raise ValueError("node_count must be >= 2")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("abs_tol and rel_tol must be positive")


@dataclass(frozen=True)
class SeriesSpec:
    start_index: int = 0
    max_terms: int = 400
    term_tol: float = 1e-17

    def __post_init__(self):
        if self.start_index < 0:
            raise ValueError("start_index must be non-negative")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if not self.term_tol > 0:
            raise ValueError("term_tol must be positive")


# ---------------------------------------------------------------------------
# Bessel K of integer order
# ---------------------------------------------------------------------------

def log_bessel_k_int(order: int, x):
    """Natural log of K_order(x) for integer ``order >= 0``.

    Upward recurrence on the ratios ``K_{n+1}/K_n``, seeded with the
    exponentially scaled K0 and K1, so neither large orders nor tiny
    arguments overflow.
    """
    order = int(order)
    if order < 0:
        raise ValueError("order must be non-negative")
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("bessel_k_int requires x > 0")
    k0 = special.k0e(x)
    log_k = np.log(k0) - x
    if order == 0:
        return log_k if log_k.ndim else float(log_k)
    ratio = special.k1e(x) / k0
    log_k = log_k + np.log(ratio)
    for n in range(1, order):
        ratio = 1.0 / ratio + 2.0 * n / x
        log_k = log_k + np.log(ratio)
    return log_k if log_k.ndim else float(log_k)


def bessel_k_int(order: int, x):
    """Modified Bessel function of the second kind, integer order.

    Returns ``inf`` where the value exceeds the double range; use
    :func:`log_bessel_k_int` in that regime.
    """
    with np.errstate(over="ignore"):
        out = np.exp(log_bessel_k_int(order, x))
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# One-dimensional adaptive Gauss-Legendre
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _gauss_legendre(n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _panel(f, a, b, n):
    nodes, weights = _gauss_legendre(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    quarter = 0.5 * half
    # whole panel and both halves in a single vectorised call
    x = np.concatenate([mid + half * nodes,
                        (a + quarter) + quarter * nodes,
                        (mid + quarter) + quarter * nodes])
    y = np.asarray(f(x), dtype=float)
    whole = half * np.dot(weights, y[:n])
    left = quarter * np.dot(weights, y[n:2 * n])
    right = quarter * np.dot(weights, y[2 * n:])
    return left + right, abs(left + right - whole)


def integrate_adaptive(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                       spec: QuadratureSpec = QuadratureSpec()) -> tuple[float, float]:
    """Globally adaptive Gauss-Legendre quadrature of ``f`` over [a, b].

    Panels are bisected largest-error first until the summed error estimate
    meets ``max(abs_tol, rel_tol * |value|)``. Returns ``(value, error)``.
    """
    if not b > a:
        return 0.0, 0.0
    n = spec.node_count
    value, err = _panel(f, a, b, n)
    heap = [(-err, a, b, value)]
    total, total_err = value, err
    splits = 0
    while total_err > max(spec.abs_tol, spec.rel_tol * abs(total)):
        if splits >= spec.max_subdivisions:
            raise ConvergenceError(
                f"adaptive quadrature on [{a}, {b}] did not converge "
                f"(error {total_err:.3e} after {splits} subdivisions)", total)
        neg_err, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        v1, e1 = _panel(f, lo, mid, n)
        v2, e2 = _panel(f, mid, hi, n)
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
        total += v1 + v2 - val
        total_err += e1 + e2 + neg_err
        splits += 1
    # re-sum to shed the incremental rounding drift
    total = math.fsum(item[3] for item in heap)
    return total, total_err


def nested_integral(dim: int, upper_limit_fn: Callable[[Sequence[float]], float],
                    integrand: Callable[[np.ndarray], np.ndarray],
                    spec: QuadratureSpec = QuadratureSpec(), lower: float = 1.0) -> float:
    """Iterated integral over a region with variable upper limits.

    Axis ``k`` runs from ``lower`` to ``upper_limit_fn(outer)``, where
    ``outer`` holds the values of axes ``0..k-1`` (outermost first). Slices
    whose upper limit falls below ``lower`` contribute zero. ``integrand``
    receives an ``(n, dim)`` array of points and returns ``n`` values.
    """
    if not 1 <= dim <= 6:
        raise ValueError("nested_integral supports 1 <= dim <= 6")

    def level(k: int, outer: tuple) -> float:
        hi = upper_limit_fn(outer)
        if not hi > lower:
            return 0.0
        if k == dim - 1:
            prefix = np.asarray(outer, dtype=float)

            def inner(x):
                pts = np.empty((x.size, dim))
                pts[:, :k] = prefix
                pts[:, k] = x
                return integrand(pts)

            return integrate_adaptive(inner, lower, hi, spec)[0]

        def slab(xs):
            return np.array([level(k + 1, outer + (float(v),)) for v in xs])

        return integrate_adaptive(slab, lower, hi, spec)[0]

    return level(0, ())


# ---------------------------------------------------------------------------
# Semi-infinite oscillatory integrals
# ---------------------------------------------------------------------------

def _wynn_epsilon(partial_sums: Sequence[float]) -> float:
    """Wynn's epsilon extrapolation of a sequence of partial sums."""
    s = list(partial_sums)
    n = len(s)
    if n < 3:
        return s[-1]
    prev = [0.0] * (n + 1)
    cur = list(s)
    best = s[-1]
    for k in range(1, n):
        nxt = []
        for i in range(len(cur) - 1):
            diff = cur[i + 1] - cur[i]
            if diff == 0.0:
                # sequence already converged at this depth
                return cur[i + 1]
            nxt.append(prev[i + 1] + 1.0 / diff)
        prev, cur = cur, nxt
        if k % 2 == 0 and cur:
            best = cur[-1]
        if len(cur) < 2:
            break
    return best


def oscillatory_tail(f: Callable[[np.ndarray], np.ndarray], a: float, half_period: float,
                     spec: QuadratureSpec = QuadratureSpec(), max_panels: int = 4000,
                     min_panels: int = 6) -> float:
    """Integrate ``f`` over [a, inf) in half-period panels.

    The alternating panel sums are accelerated with Wynn's epsilon
    algorithm; the loop stops once two consecutive accelerated estimates
    agree to tolerance.
    """
    if not half_period > 0:
        raise ValueError("half_period must be positive")
    partial = []
    total = 0.0
    last = math.nan
    stable = 0
    for k in range(max_panels):
        lo = a + k * half_period
        val, _ = integrate_adaptive(f, lo, lo + half_period, spec)
        total += val
        partial.append(total)
        if k + 1 < min_panels:
            continue
        est = _wynn_epsilon(partial[-12:])
        tol = max(spec.abs_tol, spec.rel_tol * abs(est))
        if abs(est - last) <= tol or abs(val) <= 0.1 * spec.abs_tol:
            stable += 1
            if stable >= 2:
                return est
        else:
            stable = 0
        last = est
    raise ConvergenceError(f"oscillatory tail did not converge in {max_panels} panels", last)


# ---------------------------------------------------------------------------
# Gil-Pelaez inversion in shifted-series form
# ---------------------------------------------------------------------------

def _exp_series(z: np.ndarray, first: int, stop: int | None, spec: SeriesSpec) -> np.ndarray:
    """Sum of ``(-j z)^i / i!`` for ``first <= i < stop`` (``stop=None``: to infinity).

    Open-ended sums stop once ``|term| < term_tol * |partial|`` holds
    for three consecutive terms (or the term budget runs out).
    """
    z = np.asarray(z, dtype=float)
    term = (-1j * z) ** first / math.factorial(first)
    total = np.zeros(z.shape, dtype=complex)
    quiet = np.zeros(z.shape, dtype=int)
    i = first
    n_terms = spec.max_terms if stop is None else stop - first
    for _ in range(n_terms):
        total += term
        if stop is None:
            small = np.abs(term) <= spec.term_tol * np.abs(total)
            quiet = np.where(small, quiet + 1, 0)
            if np.all(quiet >= 3):
                return total
        i += 1
        term = term * (-1j * z) / i
    if stop is None:
        raise ConvergenceError("exponential tail series did not converge")
    return total


def gil_pelaez_series_tail(cf: Callable[[np.ndarray], np.ndarray], x: float,
                           start_index: int, spec: SeriesSpec = SeriesSpec(),
                           quad: QuadratureSpec = QuadratureSpec()) -> float:
    """CDF at ``x`` from a characteristic function, shifted-series form.

    Evaluates ``-(1/pi) int_0^inf Im{cf(t) sum_{i>=start} (-j t x)^i / i!} dt / t``,
    which is the Gil-Pelaez CDF once the first ``start_index`` terms of the
    exponential series integrate to zero (the density and its first
    ``start_index - 2`` derivatives vanish at the origin).

    The shifted series is summed directly on ``t x <= 1``, where it is
    tiny and well conditioned. Beyond that cut the series is replaced by
    ``exp(-j t x)`` minus its leading terms; the leading-term integral over
    the far range equals minus its near-range integral (plus the 1/2 from
    ``i = 0``), so no slowly decaying polynomial tail is ever integrated.
    """
    if x <= 0:
        return 0.0
    if start_index < 1:
        raise ValueError("start_index must be >= 1")
    series = SeriesSpec(start_index, spec.max_terms, spec.term_tol)
    cut = 1.0 / x

    def near(t):
        tail = _exp_series(t * x, start_index, None, series)
        return -(tail * cf(t)).imag / (np.pi * t)

    def leading(t):
        head = _exp_series(t * x, 0, start_index, series)
        return -(head * cf(t)).imag / (np.pi * t)

    def far(t):
        return -(np.exp(-1j * t * x) * cf(t)).imag / (np.pi * t)

    near_part, _ = integrate_adaptive(near, 0.0, cut, quad)
    leading_part, _ = integrate_adaptive(leading, 0.0, cut, quad)
    far_part = oscillatory_tail(far, cut, np.pi / x, quad)
    value = near_part + (0.5 + leading_part) + far_part
    clamped = min(max(value, 0.0), 1.0)
    if abs(clamped - value) > 10.0 * max(quad.abs_tol, quad.rel_tol):
        warnings.warn(f"Gil-Pelaez value {value:.3e} clamped to [0, 1]", ClampWarning,
                      stacklevel=2)
    return clamped
