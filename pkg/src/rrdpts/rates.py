"""Closed-form yields, symbol-error decomposition and the secret key rate.

Per delay ``r`` every quantity has the shape

    (1 - p_d)**(4W - 1) * exp(-W*eta*mu) * W * (signal term + dark term)

with W the number of interference windows per time-bit layout (see
:func:`rrdpts.core.window_count`). Error type I is a phase error, II a time
error and III a phase-and-time error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np
from scipy.special import pdtrc

from . import bound
from .core import Basis, ParameterError, ProtocolParams, check_delay, valid_delays

MU_MIN = 1e-4
MU_MAX = 1.0
MU_GRID_POINTS = 60
GOLDEN_TOL = 1e-6  # in log10(mu)


@dataclass(frozen=True)
class RateSummary:
    q_x: float
    q_z_even: float
    q_z_odd: float
    q_total: float
    e_I: float
    e_II: float
    e_III: float
    h_ab: float
    e_src: float | None = None
    iae_upper: float | None = None
    key_rate_per_pulse: float | None = None
    v_th: int | None = None
    mu_used: float | None = None

    @property
    def e_total(self) -> float:
        return self.e_I + self.e_II + self.e_III

    def phase_share(self) -> float:
        return self.e_I / self.e_total if self.e_total > 0 else float("nan")


def _prefactor(p, n_dark_windows, W):
    eta_mu = p.eta * p.mu
    return (1.0 - p.p_d) ** (n_dark_windows - 1) * math.exp(-W * eta_mu) * W


def yield_x(params: ProtocolParams, r: int) -> float:
    """Single-click probability per packet for X-basis delay 2r."""
    check_delay(Basis.X, r, params.L)
    W = params.L - r
    return _prefactor(params, 4 * W, W) * (0.5 * params.eta * params.mu + 4 * params.p_d)


def errors_x(params: ProtocolParams, r: int) -> tuple[float, float, float]:
    """Joint probabilities (E_I*Q, E_II*Q, E_III*Q) for X-basis delay 2r."""
    check_delay(Basis.X, r, params.L)
    W = params.L - r
    pre = _prefactor(params, 4 * W, W)
    e1 = pre * (params.eta * params.mu * 0.5 * params.e_mis + params.p_d)
    e2 = pre * params.p_d
    return e1, e2, e2


def _z_windows(L, r):
    # the dark-count exponent differs by parity: 2L-2r-1 (even), 2L-2r+1 (odd)
    if r % 2 == 0:
        return L / 2 - r / 2, 2 * L - 2 * r
    return L / 2 - (r - 1) / 2, 2 * L - 2 * r + 2


def yield_z(params: ProtocolParams, r: int) -> float:
    """Single-click probability per packet for Z-basis delay 2r-1, r >= 2."""
    check_delay(Basis.Z, r, params.L)
    W, n_dark = _z_windows(params.L, r)
    return _prefactor(params, n_dark, W) * (params.eta * params.mu * 0.5 + 4 * params.p_d)


def errors_z(params: ProtocolParams, r: int) -> tuple[float, float, float]:
    check_delay(Basis.Z, r, params.L)
    W, n_dark = _z_windows(params.L, r)
    pre = _prefactor(params, n_dark, W)
    e1 = pre * (params.eta * params.mu * 0.5 * params.e_mis + params.p_d)
    e2 = pre * params.p_d
    return e1, e2, e2


def cell_rates(params: ProtocolParams, basis: Basis | str, r: int) -> tuple[float, float, float, float]:
    """(Q, E_I*Q, E_II*Q, E_III*Q) for one basis and delay."""
    if Basis(basis) is Basis.X:
        return (yield_x(params, r), *errors_x(params, r))
    return (yield_z(params, r), *errors_z(params, r))


def delay_classes(L: int) -> dict[str, tuple[Basis, tuple[int, ...]]]:
    """Delays grouped the way they are averaged: X, Z with even r, Z with odd r."""
    z = valid_delays(Basis.Z, L)
    return {
        "x": (Basis.X, valid_delays(Basis.X, L)),
        "z_even": (Basis.Z, tuple(r for r in z if r % 2 == 0)),
        "z_odd": (Basis.Z, tuple(r for r in z if r % 2 == 1)),
    }


CLASS_WEIGHTS = {"x": 0.5, "z_even": 0.25, "z_odd": 0.25}


def mix_classes(q: dict[str, float], eq: dict[str, tuple[float, float, float]]):
    """Combine per-class mean yields and mean joint error rates.

    Returns (q_total, (e_I, e_II, e_III)) where each class's conditional
    error rate is its mean E*Q over its mean Q.
    """
    q_total = sum(CLASS_WEIGHTS[c] * q[c] for c in CLASS_WEIGHTS)
    errs = [0.0, 0.0, 0.0]
    for c, w in CLASS_WEIGHTS.items():
        if q[c] > 0:
            for i in range(3):
                errs[i] += w * eq[c][i] / q[c]
    return q_total, tuple(errs)


def aggregate(params: ProtocolParams) -> RateSummary:
    """Average over delays and bases; fills the yield, error and entropy fields."""
    q, eq = {}, {}
    for name, (basis, rs) in delay_classes(params.L).items():
        cells = [cell_rates(params, basis, r) for r in rs]
        n = len(rs)
        q[name] = math.fsum(c[0] for c in cells) / n
        eq[name] = tuple(math.fsum(c[i] for c in cells) / n for i in (1, 2, 3))
    q_total, (e1, e2, e3) = mix_classes(q, eq)
    return RateSummary(
        q_x=q["x"], q_z_even=q["z_even"], q_z_odd=q["z_odd"], q_total=q_total,
        e_I=e1, e_II=e2, e_III=e3, h_ab=conditional_entropy(e1, e2, e3), mu_used=params.mu,
    )


def _plog4(v):
    return v * math.log2(v) / 2.0 if v > 0 else 0.0


def conditional_entropy(e_I: float, e_II: float, e_III: float) -> float:
    """Four-symbol entropy in log4 units from the three error probabilities."""
    if min(e_I, e_II, e_III) < 0:
        raise ValueError("error probabilities must be non-negative")
    e = e_I + e_II + e_III
    if e > 1 + 1e-12:
        raise ValueError(f"total error probability {e} exceeds 1")
    return -_plog4(max(1.0 - e, 0.0)) - _plog4(e_I) - _plog4(e_II) - _plog4(e_III)


def e_src(L: int, mu: float, v_th: int) -> float:
    """Probability the source exceeds v_th photons per packet.

    Mixes Poisson(L*mu) and Poisson(L*mu/2) tails with equal weight. The
    upper tails are taken directly so deep tails keep full relative precision.
    """
    if v_th < 0:
        raise ParameterError(f"v_th must be >= 0, got {v_th}")
    if mu < 0:
        raise ParameterError(f"mu must be >= 0, got {mu}")
    if mu == 0:
        return 0.0
    return 0.5 * (float(pdtrc(v_th, L * mu)) + float(pdtrc(v_th, L * mu / 2)))


def key_rate_from(summary: RateSummary, L: int, e_source: float, iae: float) -> float:
    """Per-pulse key rate, negative values clamped to zero."""
    Q = summary.q_total
    LR = 2.0 * (Q * (1.0 - summary.h_ab) - e_source - (Q - e_source) * iae)
    return max(LR / L, 0.0)


def _check_vth(L, v_th):
    if isinstance(v_th, bool) or not isinstance(v_th, (int, np.integer)) or not 1 <= v_th <= L // 2 - 1:
        raise ParameterError(f"v_th must be an integer in [1, L/2-1] = [1, {L // 2 - 1}], got {v_th!r}")


def rate_summary(params: ProtocolParams, v_th: int, summary: RateSummary | None = None) -> RateSummary:
    """Complete summary for one operating point and photon-number threshold."""
    _check_vth(params.L, v_th)
    summary = summary or aggregate(params)
    es = e_src(params.L, params.mu, v_th)
    iae = bound.iae_upper(params.L, int(v_th)).iae_upper
    R = key_rate_from(summary, params.L, es, iae)
    return replace(summary, e_src=es, iae_upper=iae, key_rate_per_pulse=R, v_th=int(v_th), mu_used=params.mu)


def secret_key_rate(params: ProtocolParams, v_th: int) -> float:
    return rate_summary(params, v_th).key_rate_per_pulse


class RateModel(Protocol):
    """Seam for protocol key-rate models used by :func:`optimize_keyrate`.

    Only the round-robin phase-time model ships here; a phase-only baseline
    can be added by implementing these two methods.
    """

    name: str

    def thresholds(self, L: int) -> range: ...

    def summarize(self, params: ProtocolParams, v_th: int, base: RateSummary | None = None) -> RateSummary: ...


class RRDPTSModel:
    name = "rrdpts"

    def thresholds(self, L: int) -> range:
        return range(1, L // 2)

    def summarize(self, params, v_th, base=None):
        return rate_summary(params, v_th, base)


@dataclass(frozen=True)
class Optimum:
    key_rate: float
    mu: float
    v_th: int
    summary: RateSummary


def _golden_max(fun, a, b, tol=GOLDEN_TOL):
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


def optimize_keyrate(params: ProtocolParams, model: RateModel | None = None,
                     mu_grid: np.ndarray | None = None) -> Optimum:
    """Maximise the key rate over mu and the photon-number threshold.

    ``params.mu`` is ignored. mu is scanned on a log grid over [1e-4, 1] and
    refined by golden-section search between the neighbours of the best grid
    point; every threshold is tried. Ties go to the smaller threshold, then
    the smaller mu.
    """
    model = model or RRDPTSModel()
    grid = np.logspace(math.log10(MU_MIN), math.log10(MU_MAX), MU_GRID_POINTS) if mu_grid is None else mu_grid
    thresholds = list(model.thresholds(params.L))
    bases = [aggregate(params.replace(mu=float(m))) for m in grid]

    best = None
    for v in thresholds:
        rates = [model.summarize(params.replace(mu=float(m)), v, bases[i]).key_rate_per_pulse
                 for i, m in enumerate(grid)]
        i = int(np.argmax(rates))
        mu_v, r_v = float(grid[i]), rates[i]
        if r_v > 0:
            lo = math.log10(grid[max(i - 1, 0)])
            hi = math.log10(grid[min(i + 1, len(grid) - 1)])

            def rate_at(lm, v=v):
                return model.summarize(params.replace(mu=10.0 ** lm), v).key_rate_per_pulse

            lm, r_ref = _golden_max(rate_at, lo, hi)
            if r_ref > r_v:
                mu_v, r_v = 10.0 ** lm, r_ref
        if best is None or r_v > best[0]:
            best = (r_v, mu_v, v)

    r_star, mu_star, v_star = best
    if r_star <= 0:
        mu_star, v_star = float(grid[0]), thresholds[0]
    summary = model.summarize(params.replace(mu=mu_star), v_star)
    return Optimum(summary.key_rate_per_pulse, mu_star, v_star, summary)
