"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s`` to see the
verdict lines inline; they are also collected into the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy import optimize

import transcriptions as tr
from rrdpts import bound
from rrdpts.core import ParameterError, ProtocolParams
from rrdpts.mcsim import SimConfig, crosscheck, simulate
from rrdpts.rates import aggregate, e_src, errors_x, errors_z, optimize_keyrate, yield_x, yield_z

VERDICTS = []

MC_PARAMS = ProtocolParams(L=8, mu=0.05, loss_db=3, eta_d=0.85, p_d=1e-5, e_mis=0.03)
MC_PACKETS = 10**7
MC_SEED = 20240601
FIG_PARAMS = dict(eta_d=0.85, p_d=1.6e-8)
FIG_L = (8, 16, 32)


def verdict(number, title, ok, detail):
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    VERDICTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def mc_runs():
    cfg = SimConfig(MC_PARAMS, MC_PACKETS, seed=MC_SEED)
    t0 = time.perf_counter()
    first = simulate(cfg)
    elapsed = time.perf_counter() - t0
    second = simulate(cfg)
    return first, second, elapsed


def test_criterion_1_bound_below_one():
    t0 = time.perf_counter()
    worst = 0.0
    for L in (4, 8, 16, 32):
        for N in range(1, L // 2):
            worst = max(worst, bound.iae_upper.__wrapped__(L, N).iae_upper)
    elapsed = time.perf_counter() - t0
    verdict(1, "bound below one for all L, N <= L/2-1", worst < 1 and elapsed < 60,
            f"max I_AE={worst:.6f}, {elapsed:.1f}s")


def _scalar_max(fun):
    """Maximize a concave function of x1 on [0, 2] with x2 = 2 - x1."""
    res = optimize.minimize_scalar(lambda a: -fun(a, 2 - a), bounds=(0, 2), method="bounded",
                                   options={"xatol": 1e-12})
    return max(-res.fun, fun(0.0, 2.0), fun(2.0, 0.0))


def test_criterion_2_single_photon_consistency():
    t0 = time.perf_counter()
    gaps = []
    for L in (4, 8, 16, 32):
        xv = _scalar_max(lambda a, b: tr.single_photon_x(L, a, b))
        yv = _scalar_max(lambda a, b: tr.single_photon_y(L, a, b))
        direct = (xv + yv) / ((L - 1) / 2 + (L / 2 - 1) / 2)
        gaps.append(abs(bound.iae_upper(L, 1).iae_upper - direct))
    oracle_gap = abs(bound.iae_upper(4, 1).iae_upper - bound.grid_oracle(4, 1, 0.005).iae_upper)
    elapsed = time.perf_counter() - t0
    ok = max(gaps) < 1e-9 and oracle_gap < 1e-4 and elapsed < 30
    verdict(2, "N=1 transcriptions agree and optimizer matches grid oracle", ok,
            f"max transcription gap={max(gaps):.2e}, oracle gap={oracle_gap:.2e}, {elapsed:.1f}s")


def test_criterion_3_mc_matches_analytic(mc_runs):
    first, second, elapsed = mc_runs
    report = crosscheck(first, MC_PARAMS)
    worst = max(abs(r.z) for r in report.rows)
    identical = first.to_json() == second.to_json()
    ok = worst <= 4 and identical and elapsed < 300
    verdict(3, "Monte Carlo within 4 SE of closed forms, repeat byte-identical", ok,
            f"{len(report.rows)} comparisons, max |z|={worst:.2f}, identical={identical}, {elapsed:.1f}s")


def test_criterion_4_dark_count_symmetry(mc_runs):
    rng = np.random.default_rng(4)
    exact = True
    for _ in range(1000):
        p = ProtocolParams(L=int(rng.choice([4, 8, 16, 32])), mu=float(10 ** rng.uniform(-4, 0)),
                           loss_db=float(rng.uniform(0, 60)), p_d=float(10 ** rng.uniform(-9, -2)),
                           e_mis=float(rng.uniform(0, 0.5)))
        s = aggregate(p)
        exact &= s.e_II == s.e_III
    tally = mc_runs[0]
    n2 = sum(c.err_time for c in tally.cells.values())
    n3 = sum(c.err_both for c in tally.cells.values())
    # conditional on n2 + n3 the split is Binomial(n2 + n3, 1/2) under equality
    z = (n2 - n3) / math.sqrt(n2 + n3)
    verdict(4, "analytic e_II == e_III exactly, empirical counts indistinguishable", exact and abs(z) < 4,
            f"n_time={n2}, n_both={n3}, z={z:.2f}")


def _cutoff(rates, grid):
    """First grid value after which the rate stays at zero, or None."""
    for i, x in enumerate(grid):
        if all(r == 0 for r in rates[i:]):
            return x
    return None


def test_criterion_5_loss_scan():
    t0 = time.perf_counter()
    losses = np.arange(0, 81, 1.0)
    notes, ok = [], True
    cutoffs = {}
    for e_mis in (0.015, 0.15):
        for L in FIG_L:
            base = ProtocolParams(L=L, e_mis=e_mis, **FIG_PARAMS)
            rs = [optimize_keyrate(base.replace(loss_db=float(d))).key_rate for d in losses]
            monotone = all(a >= b for a, b in zip(rs, rs[1:]))
            cutoffs[(L, e_mis)] = _cutoff(rs, losses)
            ok &= monotone and cutoffs[(L, e_mis)] is not None
            if e_mis == 0.015:
                ok &= rs[10] > 0 and rs[20] > 0
    for L in FIG_L:
        lo, hi = cutoffs[(L, 0.15)], cutoffs[(L, 0.015)]
        ok &= lo is not None and hi is not None and lo < hi
        notes.append(f"L={L}: {hi:g}->{lo:g} dB")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    verdict(5, "loss scan positive at 10/20 dB, non-increasing, cutoff shrinks with e_mis", ok,
            f"cutoffs {'; '.join(notes)}, {elapsed:.1f}s")


def test_criterion_6_misalignment_scan():
    grid = np.round(np.arange(0, 0.5001, 0.01), 10)
    ok, notes, switching = True, [], False
    for L in FIG_L:
        base = ProtocolParams(L=L, loss_db=10, **FIG_PARAMS)
        opts = [optimize_keyrate(base.replace(e_mis=float(e))) for e in grid]
        rs = [o.key_rate for o in opts]
        zero_at = _cutoff(rs, grid)
        ok &= all(a >= b for a, b in zip(rs, rs[1:])) and zero_at is not None
        v_seen = [o.v_th for o, r in zip(opts, rs) if r > 0]
        changes = sum(a != b for a, b in zip(v_seen, v_seen[1:]))
        if L in (16, 32):
            switching |= changes > 0
        notes.append(f"L={L}: zero at {zero_at}, {changes} v_th switches")
    verdict(6, "misalignment scan non-increasing, reaches zero, v_th* switches", ok and switching,
            "; ".join(notes))


def test_criterion_7_error_decomposition():
    base = ProtocolParams(L=4, mu=0.03, loss_db=9.2, eta_d=0.85, e_mis=0.03)

    def share(pd):
        return aggregate(base.replace(p_d=pd)).phase_share()

    pds = np.logspace(-7, -4, 301)
    shares = np.array([share(float(pd)) for pd in pds])
    continuous = np.max(np.abs(np.diff(shares))) < 0.01
    spans = shares.min() < 0.70 < shares.max()
    pd_star = optimize.brentq(lambda pd: share(pd) - 0.70, 1e-7, 1e-4, xtol=1e-16)
    s = aggregate(base.replace(p_d=pd_star))
    parts = np.array([s.e_I, s.e_II, s.e_III]) / s.e_total
    ok = continuous and spans and abs(parts[0] - 0.70) <= 0.05 and np.all(np.abs(parts[1:] - 0.15) <= 0.05)
    verdict(7, "phase share spans 70% with time-type shares near 15%", ok,
            f"p_d*={pd_star:.3g}, shares={parts[0]:.3f}/{parts[1]:.3f}/{parts[2]:.3f}")


def test_criterion_8_transcription_audit():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        L = int(rng.choice([4, 6, 8, 16, 32]))
        eta_d, mu = float(rng.uniform(0.05, 1)), float(10 ** rng.uniform(-4, 0.3))
        loss, pd, em = float(rng.uniform(0, 60)), float(10 ** rng.uniform(-9, -2)), float(rng.uniform(0, 0.5))
        p = ProtocolParams(L=L, mu=mu, loss_db=loss, eta_d=eta_d, p_d=pd, e_mis=em)
        eta = p.eta
        rx, rz, v = int(rng.integers(1, L)), int(rng.integers(2, L)), int(rng.integers(0, 8))
        zq, ze = (tr.Qz_even, tr.EQz_even) if rz % 2 == 0 else (tr.Qz_odd, tr.EQz_odd)
        s = aggregate(p)
        Q, e = tr.summary(L, eta, mu, pd, em)
        diffs = [
            yield_x(p, rx) - tr.Qx(L, rx, eta, mu, pd),
            *np.subtract(errors_x(p, rx), tr.EQx(L, rx, eta, mu, pd, em)),
            yield_z(p, rz) - zq(L, rz, eta, mu, pd),
            *np.subtract(errors_z(p, rz), ze(L, rz, eta, mu, pd, em)),
            s.q_total - Q,
            *np.subtract((s.e_I, s.e_II, s.e_III), e),
            s.h_ab - tr.H(*e),
            e_src(L, mu, v) - tr.esrc(L, mu, v),
        ]
        x, y = rng.uniform(0, 20, 2)
        diffs.append(bound.f_entropy(x, y) - tr.f15(x, y))
        worst = max(worst, max(abs(d) for d in diffs))
    verdict(8, "closed forms match independent transcriptions at 1000 points", worst < 1e-12,
            f"max abs diff={worst:.2e}")


def test_threshold_rejection_is_explicit():
    with pytest.raises(ParameterError):
        bound.iae_upper(8, 4)
