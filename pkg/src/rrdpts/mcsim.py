"""Seeded Monte Carlo of the full packet loop: prepare, detect, announce, sift, tally.

Generative model for a packet whose bases match, with W interference
windows per time-bit layout and eta*mu the detected mean per pulse:

* signal photons n_s ~ Poisson(W*eta*mu); a lone photon lands in a valid
  interference window with probability 1/2, otherwise the packet is lost to
  an invalid window;
* each of the 4W detector-windows (2 detectors x 2W windows) dark-clicks
  with probability p_d; a dark click in the signal's own detector-window
  merges with it;
* a valid signal click reads the correct phase with probability 1 - e_mis
  and always the correct time bit; a dark click reads a uniform symbol.

The single-click probability is then exactly the closed-form yield, see
docs/mc_model.md.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import rates
from .core import (
    Basis,
    ParameterError,
    ProtocolParams,
    decode_time_bit,
    interference_windows,
    interfering_indices,
    observed_windows,
    valid_delays,
    window_count,
)

Z_THRESHOLD = 4.0
CHUNK = 1 << 18
DEFAULT_SHARDS = 16
COUNT_FIELDS = (
    "sifted_count", "correct_count", "err_phase", "err_time", "err_both",
    "discarded_zero_click", "discarded_multi_click", "discarded_invalid_window",
    "discarded_basis_mismatch",
)


@dataclass(frozen=True)
class SimConfig:
    params: ProtocolParams
    n_packets: int
    seed: int = 0
    basis_prob_alice: float = 0.5  # probability of X
    basis_prob_bob: float = 0.5
    shards: int = DEFAULT_SHARDS

    def __post_init__(self):
        if self.n_packets < 1:
            raise ParameterError("n_packets must be >= 1")
        if self.shards < 1:
            raise ParameterError("shards must be >= 1")
        for p in (self.basis_prob_alice, self.basis_prob_bob):
            if not 0 <= p <= 1:
                raise ParameterError(f"basis probabilities must lie in [0, 1], got {p}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")


@dataclass
class CellCounts:
    sifted_count: int = 0
    correct_count: int = 0
    err_phase: int = 0
    err_time: int = 0
    err_both: int = 0
    discarded_zero_click: int = 0
    discarded_multi_click: int = 0
    discarded_invalid_window: int = 0
    discarded_basis_mismatch: int = 0

    @property
    def matched(self) -> int:
        """Packets in this cell whose bases agreed."""
        return (self.sifted_count + self.discarded_zero_click
                + self.discarded_multi_click + self.discarded_invalid_window)

    @property
    def total(self) -> int:
        return self.matched + self.discarded_basis_mismatch

    def __iadd__(self, other: "CellCounts"):
        for name in COUNT_FIELDS:
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self


def cell_keys(L: int) -> list[tuple[Basis, int]]:
    return [(Basis.X, r) for r in valid_delays(Basis.X, L)] + [(Basis.Z, r) for r in valid_delays(Basis.Z, L)]


@dataclass
class SimTally:
    params: ProtocolParams
    n_packets: int
    seed: int
    shards: int
    cells: dict[tuple[Basis, int], CellCounts] = field(default_factory=dict)

    def total_packets(self) -> int:
        return sum(c.total for c in self.cells.values())

    def merge(self, other: "SimTally") -> None:
        for key, counts in other.cells.items():
            self.cells.setdefault(key, CellCounts())
            self.cells[key] += counts

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "n_packets": self.n_packets,
            "seed": self.seed,
            "shards": self.shards,
            "cells": [
                {"basis": b.value, "r": r, **asdict(self.cells[(b, r)])}
                for b, r in cell_keys(self.params.L)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SimTally":
        cells = {
            (Basis(c["basis"]), int(c["r"])): CellCounts(**{k: int(c[k]) for k in COUNT_FIELDS})
            for c in d["cells"]
        }
        return cls(ProtocolParams(**d["params"]), int(d["n_packets"]), int(d["seed"]), int(d["shards"]), cells)

    @classmethod
    def from_json(cls, text: str) -> "SimTally":
        return cls.from_dict(json.loads(text))


def shard_sizes(n_packets: int, shards: int) -> list[int]:
    base, extra = divmod(n_packets, shards)
    return [base + (i < extra) for i in range(shards)]


def shard_rng(seed: int, shard: int) -> np.random.Generator:
    """Counter-based stream for one shard; independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(shard,))))


class _Layout:
    """Per-cell lookup tables for one L, shared by every chunk."""

    def __init__(self, L: int):
        self.L = L
        self.keys = cell_keys(L)
        self.index = {k: i for i, k in enumerate(self.keys)}
        self.n_cells = len(self.keys)
        self.x_delays = np.array(valid_delays(Basis.X, L))
        self.z_delays = np.array(valid_delays(Basis.Z, L))
        self.W = np.array([window_count(b, r, L) for b, r in self.keys])
        # signal click bins per (cell, time bit), in window order
        self.signal_bins = {
            (i, tb): sorted(interference_windows(b, tb, r, L)) for i, (b, r) in enumerate(self.keys) for tb in (0, 1)
        }
        self.dark_windows = [observed_windows(b, r, L) for b, r in self.keys]


def _sift(layout, cell, alice_tb, phase_bits, click_bin, bob_phase):
    """Bob announces (a, b) from his click; Alice classifies the symbol."""
    basis, r = layout.keys[cell]
    bob_tb = decode_time_bit(basis, r, click_bin, layout.L)
    a, b = interfering_indices(basis, bob_tb, r, click_bin, layout.L)
    rel = int(phase_bits[a - 1]) ^ int(phase_bits[b - 1])
    return int(bob_phase != rel) + 2 * int(bob_tb != alice_tb)  # 0 ok, 1 phase, 2 time, 3 both


def _simulate_chunk(rng, n, config, layout, out):
    p = config.params
    L = p.L
    eta_mu = p.eta * p.mu

    alice_x = rng.random(n) < config.basis_prob_alice
    alice_tb = rng.integers(0, 2, n, dtype=np.int8)
    phase = rng.integers(0, 2, (n, L), dtype=np.int8)
    bob_x = rng.random(n) < config.basis_prob_bob
    u_delay = rng.random(n)
    n_x, n_z = len(layout.x_delays), len(layout.z_delays)
    cell = np.where(
        bob_x,
        np.minimum((u_delay * n_x).astype(np.int64), n_x - 1),
        n_x + np.minimum((u_delay * n_z).astype(np.int64), n_z - 1),
    )
    W = layout.W[cell]
    n_sig = rng.poisson(W * eta_mu)
    valid_coin = rng.random(n) < 0.5
    valid = (n_sig == 1) & valid_coin
    n_dark = rng.binomial(4 * W - valid, p.p_d)
    u_window = rng.random(n)
    flip = rng.random(n) < p.e_mis
    dark_phase = rng.integers(0, 2, n, dtype=np.int8)

    matched = alice_x == bob_x
    invalid = matched & (n_sig == 1) & ~valid_coin
    sig_click = matched & valid & (n_dark == 0)
    dark_click = matched & (n_sig == 0) & (n_dark == 1)
    zero = matched & (n_sig == 0) & (n_dark == 0)
    multi = matched & ~invalid & ~sig_click & ~dark_click & ~zero

    nc = layout.n_cells
    out["discarded_basis_mismatch"] += np.bincount(cell[~matched], minlength=nc)
    out["discarded_invalid_window"] += np.bincount(cell[invalid], minlength=nc)
    out["discarded_zero_click"] += np.bincount(cell[zero], minlength=nc)
    out["discarded_multi_click"] += np.bincount(cell[multi], minlength=nc)

    outcome_counts = np.zeros((nc, 4), dtype=np.int64)
    for i in np.flatnonzero(sig_click):
        c, tb = int(cell[i]), int(alice_tb[i])
        bins = layout.signal_bins[(c, tb)]
        click_bin = bins[min(int(u_window[i] * len(bins)), len(bins) - 1)]
        # true relative phase of the pulses that met, possibly flipped by misalignment
        basis, r = layout.keys[c]
        a, b = interference_windows(basis, tb, r, L)[click_bin]
        bob_phase = (int(phase[i, a - 1]) ^ int(phase[i, b - 1])) ^ int(flip[i])
        outcome_counts[c, _sift(layout, c, tb, phase[i], click_bin, bob_phase)] += 1
    for i in np.flatnonzero(dark_click):
        c = int(cell[i])
        windows = layout.dark_windows[c]
        click_bin, _ = windows[min(int(u_window[i] * len(windows)), len(windows) - 1)]
        outcome_counts[c, _sift(layout, c, int(alice_tb[i]), phase[i], click_bin, int(dark_phase[i]))] += 1

    for k, name in enumerate(("correct_count", "err_phase", "err_time", "err_both")):
        out[name] += outcome_counts[:, k]
    out["sifted_count"] += outcome_counts.sum(axis=1)


def _run_shard(config: SimConfig, shard: int, n: int) -> dict[str, np.ndarray]:
    layout = _Layout(config.params.L)
    rng = shard_rng(config.seed, shard)
    out = {name: np.zeros(layout.n_cells, dtype=np.int64) for name in COUNT_FIELDS}
    done = 0
    while done < n:
        m = min(CHUNK, n - done)
        _simulate_chunk(rng, m, config, layout, out)
        done += m
    return out


def simulate(config: SimConfig, workers: int = 1) -> SimTally:
    """Run the packet loop. The result depends on (seed, n_packets, params, shards) only."""
    sizes = shard_sizes(config.n_packets, config.shards)
    jobs = [(config, s, n) for s, n in enumerate(sizes) if n]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_shard, *zip(*jobs)))
    else:
        parts = [_run_shard(*job) for job in jobs]

    keys = cell_keys(config.params.L)
    tally = SimTally(config.params, config.n_packets, config.seed, config.shards,
                     {k: CellCounts() for k in keys})
    for part in parts:
        for i, key in enumerate(keys):
            tally.cells[key] += CellCounts(**{name: int(part[name][i]) for name in COUNT_FIELDS})
    return tally


# ----------------------------------------------------------------- estimation

def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for k successes in n trials; [0, 1] when n = 0."""
    if n == 0:
        return 0.0, 1.0
    phat = k / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class CellEstimate:
    basis: Basis
    r: int
    trials: int
    q: float
    q_ci: tuple[float, float]
    joint_errors: tuple[float, float, float]  # E_i * Q per matched packet
    cond_errors: tuple[float, float, float]  # E_i given a sifted event
    cond_ci: tuple[tuple[float, float], ...]
    flagged: bool


@dataclass(frozen=True)
class EmpiricalSummary:
    cells: tuple[CellEstimate, ...]
    q_x: float
    q_z_even: float
    q_z_odd: float
    q_total: float
    e_I: float
    e_II: float
    e_III: float
    e_ci: tuple[tuple[float, float], ...]
    h_ab: float
    params: ProtocolParams


def _cell_estimate(basis, r, c: CellCounts) -> CellEstimate:
    n, s = c.matched, c.sifted_count
    errs = (c.err_phase, c.err_time, c.err_both)
    return CellEstimate(
        basis=basis, r=r, trials=n,
        q=s / n if n else 0.0,
        q_ci=wilson_interval(s, n),
        joint_errors=tuple(e / n if n else 0.0 for e in errs),
        cond_errors=tuple(e / s if s else 0.0 for e in errs),
        cond_ci=tuple(wilson_interval(e, s) for e in errs),
        flagged=s == 0,
    )


def estimate(tally: SimTally) -> EmpiricalSummary:
    """Empirical counterpart of :func:`rrdpts.rates.aggregate` with 95% Wilson intervals.

    The aggregate error intervals are Wilson intervals on the pooled counts of
    sifted events; they ignore the unequal class weights.
    """
    cells = tuple(_cell_estimate(b, r, tally.cells[(b, r)]) for b, r in cell_keys(tally.params.L))
    q, eq = {}, {}
    for name, (basis, rs) in rates.delay_classes(tally.params.L).items():
        sel = [c for c in cells if c.basis is basis and c.r in rs]
        q[name] = sum(c.q for c in sel) / len(sel)
        eq[name] = tuple(sum(c.joint_errors[i] for c in sel) / len(sel) for i in range(3))
    q_total, (e1, e2, e3) = rates.mix_classes(q, eq)
    sifted = sum(c.sifted_count for c in tally.cells.values())
    pooled = [sum(getattr(c, f) for c in tally.cells.values()) for f in ("err_phase", "err_time", "err_both")]
    return EmpiricalSummary(
        cells=cells, q_x=q["x"], q_z_even=q["z_even"], q_z_odd=q["z_odd"], q_total=q_total,
        e_I=e1, e_II=e2, e_III=e3, e_ci=tuple(wilson_interval(k, sifted) for k in pooled),
        h_ab=rates.conditional_entropy(e1, e2, e3), params=tally.params,
    )


# ----------------------------------------------------------------- crosscheck

QUANTITIES = ("Q", "E_I*Q", "E_II*Q", "E_III*Q")


@dataclass(frozen=True)
class ZRow:
    basis: Basis
    r: int
    quantity: str
    count: int
    trials: int
    empirical: float
    analytic: float
    stderr: float
    z: float
    z_exact: float

    @property
    def flagged(self) -> bool:
        return abs(self.z_exact) > Z_THRESHOLD


@dataclass(frozen=True)
class CrosscheckReport:
    rows: tuple[ZRow, ...]
    threshold: float = Z_THRESHOLD

    @property
    def passed(self) -> bool:
        return not any(row.flagged for row in self.rows)

    @property
    def max_abs_z(self) -> float:
        return max((abs(row.z) for row in self.rows), default=0.0)

    def format_table(self) -> str:
        lines = [f"{'basis':<5} {'r':>3} {'quantity':<8} {'count':>9} {'empirical':>12} "
                 f"{'analytic':>12} {'z':>8} {'z_exact':>8} flag"]
        for row in self.rows:
            lines.append(
                f"{row.basis.value:<5} {row.r:>3} {row.quantity:<8} {row.count:>9d} "
                f"{row.empirical:>12.6g} {row.analytic:>12.6g} {row.z:>8.3f} {row.z_exact:>8.3f} "
                f"{'!!' if row.flagged else ''}"
            )
        return "\n".join(lines)


def exact_z(k: int, n: int, p: float) -> float:
    """Normal score of k under Binomial(n, p), from the exact mid-p tail.

    Agrees with the Wald score for large expected counts but stays honest
    when only a handful of events are expected.
    """
    if p <= 0:
        return 0.0 if k == 0 else math.inf
    if p >= 1:
        return 0.0 if k == n else -math.inf
    half = 0.5 * stats.binom.pmf(k, n, p)
    below = stats.binom.cdf(k - 1, n, p) + half if k > 0 else half
    if below <= 0.5:
        return float(stats.norm.ppf(max(below, 1e-300)))
    above = stats.binom.sf(k, n, p) + half
    return float(-stats.norm.ppf(max(above, 1e-300)))


def crosscheck(tally: SimTally, params: ProtocolParams, *, perturb_mu: float = 1.0) -> CrosscheckReport:
    """z-scores of every per-cell count against the closed forms.

    ``params`` must equal the simulated parameters; ``perturb_mu`` scales mu
    in the analytic side only, as a sensitivity probe.
    """
    if params != tally.params:
        raise ParameterError(f"crosscheck parameters {params} do not match simulated {tally.params}")
    analytic_params = params.replace(mu=params.mu * perturb_mu)
    rows = []
    for basis, r in cell_keys(params.L):
        c = tally.cells[(basis, r)]
        n = c.matched
        if n == 0:
            continue
        expected = rates.cell_rates(analytic_params, basis, r)
        counts = (c.sifted_count, c.err_phase, c.err_time, c.err_both)
        for name, k, p in zip(QUANTITIES, counts, expected):
            se = math.sqrt(p * (1 - p) / n)
            emp = k / n
            z = (emp - p) / se if se > 0 else (0.0 if emp == p else math.inf)
            rows.append(ZRow(basis, r, name, k, n, emp, p, se, z, exact_z(k, n, p)))
    return CrosscheckReport(tuple(rows))
