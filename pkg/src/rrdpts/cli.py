"""Command-line front end.

Subcommands: ``bound``, ``rate``, ``scan``, ``simulate``, ``crosscheck``.
Every subcommand accepts ``--config FILE`` (flat ``key=value`` lines, ``#``
comments); explicit flags win over file values. Without ``--config`` the
file named by ``$RRDPTS_CONFIG`` is used when set.

Exit codes: 0 success, 2 bad usage or parameters, 3 crosscheck failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bound, mcsim, rates
from .core import ParameterError, ProtocolParams

CONFIG_ENV = "RRDPTS_CONFIG"
EXIT_OK, EXIT_USAGE, EXIT_CROSSCHECK = 0, 2, 3
SCAN_COLUMNS = ("R", "mu", "v_th", "Q", "e_I", "e_II", "e_III", "H", "e_src", "iae_upper")
_DEFAULTS = ProtocolParams()


class UsageError(Exception):
    pass


def read_config(path: str | os.PathLike) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _add_params(p: argparse.ArgumentParser, *, mu=True) -> None:
    g = p.add_argument_group("protocol parameters")
    g.add_argument("--L", type=int, default=_DEFAULTS.L, help="pulses per packet (even, >= 4)")
    if mu:
        g.add_argument("--mu", type=float, default=_DEFAULTS.mu, help="mean photons per pulse")
    g.add_argument("--loss-db", type=float, default=_DEFAULTS.loss_db)
    g.add_argument("--eta-d", type=float, default=_DEFAULTS.eta_d, help="detector efficiency")
    g.add_argument("--p-d", type=float, default=_DEFAULTS.p_d, help="dark-count probability per bin")
    g.add_argument("--e-mis", type=float, default=_DEFAULTS.e_mis, help="misalignment (1 - V)/2")
    g.add_argument("--tau-ps", type=float, default=_DEFAULTS.tau_ps, help="time-bin width, informational")


def _params(args, **override) -> ProtocolParams:
    kw = dict(L=args.L, mu=getattr(args, "mu", _DEFAULTS.mu), loss_db=args.loss_db, eta_d=args.eta_d,
              p_d=args.p_d, e_mis=args.e_mis, tau_ps=args.tau_ps)
    kw.update(override)
    return ProtocolParams(**kw)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="rrdpts", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="cmd", required=True)
    subs = {}

    def add(name, **kw):
        p = sub.add_parser(name, **kw)
        p.add_argument("--config", help=f"key=value file (default: ${CONFIG_ENV})")
        subs[name] = p
        return p

    p = add("bound", help="maximise the information bound for (L, N)")
    p.add_argument("--L", type=int)
    p.add_argument("--N", type=int, help="photon-number threshold")
    p.add_argument("--oracle-step", type=float, default=None,
                   help="also report a lattice oracle with this spacing")

    p = add("rate", help="key rate summary at one operating point (JSON)")
    _add_params(p)
    p.add_argument("--v-th", type=int, default=None, help="photon-number threshold; omit to optimise")
    p.add_argument("--optimize", action="store_true", help="optimise mu and v_th")

    p = add("scan", help="key rate over a grid of loss or misalignment (CSV)")
    _add_params(p)
    p.add_argument("--variable", choices=("loss_db", "e_mis"), default="loss_db")
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=60.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--no-optimize", dest="optimize", action="store_false",
                   help="use --mu and --v-th as given")
    p.add_argument("--v-th", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write CSV here instead of stdout")

    for name, desc in (("simulate", "Monte Carlo packet simulation (JSON tally)"),
                       ("crosscheck", "simulate and compare to the closed forms")):
        p = add(name, help=desc)
        _add_params(p)
        p.add_argument("--packets", type=float, default=1e6)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--shards", type=int, default=mcsim.DEFAULT_SHARDS)
        p.add_argument("--basis-prob-alice", type=float, default=0.5)
        p.add_argument("--basis-prob-bob", type=float, default=0.5)
        p.add_argument("--out", help="write output here instead of stdout")
    subs["crosscheck"].add_argument("--perturb-mu", type=float, default=1.0,
                                    help="scale mu on the analytic side only")
    subs["crosscheck"].add_argument("--tally", help="check an existing tally JSON instead of simulating")
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        try:
            cfg = read_config(path)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        sp = subs[args.cmd]
        known = {a.dest for a in sp._actions}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError(f"unknown config keys for {args.cmd}: {', '.join(sorted(unknown))}")
        types = {a.dest: a.type for a in sp._actions if a.dest in cfg}
        sp.set_defaults(**{k: (types[k](v) if types[k] else v) for k, v in cfg.items()})
        args = parser.parse_args(argv)
    if args.cmd == "bound":
        # required, but may come from the config file
        missing = [f"--{k}" for k in ("L", "N") if getattr(args, k) is None]
        if missing:
            subs["bound"].error(f"the following arguments are required: {', '.join(missing)}")
    return args


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".10g")


def cmd_bound(args) -> int:
    res = bound.iae_upper(args.L, args.N)
    payload = res.to_dict()
    if args.oracle_step:
        oracle = bound.grid_oracle(args.L, args.N, args.oracle_step)
        payload["oracle"] = oracle.to_dict() | {"step": args.oracle_step}
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _summary_dict(s: rates.RateSummary) -> dict:
    return asdict(s)


def cmd_rate(args) -> int:
    params = _params(args)
    if args.optimize or args.v_th is None:
        opt = rates.optimize_keyrate(params)
        summary = opt.summary
    else:
        summary = rates.rate_summary(params, args.v_th)
    print(json.dumps({"params": asdict(params) | {"mu": summary.mu_used}, "summary": _summary_dict(summary)},
                     indent=2))
    return EXIT_OK


def scan_grid(start: float, stop: float, step: float) -> list[float]:
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)):
        raise UsageError("scan bounds must be finite")
    if step <= 0:
        raise UsageError("--step must be > 0")
    if start > stop:
        raise UsageError("--start must not exceed --stop")
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + k * step, 12) for k in range(n + 1)]


def scan_row(params: ProtocolParams, optimize: bool, v_th: int) -> tuple:
    if optimize:
        s = rates.optimize_keyrate(params).summary
    else:
        s = rates.rate_summary(params, v_th)
    return (s.key_rate_per_pulse, s.mu_used, s.v_th, s.q_total, s.e_I, s.e_II, s.e_III, s.h_ab,
            s.e_src, s.iae_upper)


def run_scan(base: ProtocolParams, variable: str, values, optimize: bool, v_th: int, workers: int = 1):
    points = [base.replace(**{variable: v}) for v in values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(scan_row, points, [optimize] * len(points), [v_th] * len(points)))
    else:
        rows = [scan_row(p, optimize, v_th) for p in points]
    return rows


def format_scan_csv(variable: str, values, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((variable, *SCAN_COLUMNS))
    for v, row in zip(values, rows):
        w.writerow((_fmt(v), *(_fmt(x) for x in row)))
    return buf.getvalue()


def cmd_scan(args) -> int:
    values = scan_grid(args.start, args.stop, args.step)
    base = _params(args)
    base.replace(**{args.variable: values[-1]})  # validate the far end up front
    rows = run_scan(base, args.variable, values, args.optimize, args.v_th, args.workers)
    _emit(format_scan_csv(args.variable, values, rows), args.out)
    return EXIT_OK


def _sim_config(args) -> mcsim.SimConfig:
    n = args.packets
    if n != int(n) or n < 1:
        raise UsageError(f"--packets must be a positive integer, got {n}")
    return mcsim.SimConfig(_params(args), int(n), args.seed, args.basis_prob_alice, args.basis_prob_bob,
                           args.shards)


def cmd_simulate(args) -> int:
    tally = mcsim.simulate(_sim_config(args), workers=args.threads)
    _emit(tally.to_json(), args.out)
    return EXIT_OK


def cmd_crosscheck(args) -> int:
    if args.tally:
        tally = mcsim.SimTally.from_json(Path(args.tally).read_text(encoding="utf-8"))
        params = _params(args)
    else:
        config = _sim_config(args)
        tally = mcsim.simulate(config, workers=args.threads)
        params = config.params
    report = mcsim.crosscheck(tally, params, perturb_mu=args.perturb_mu)
    text = report.format_table() + (
        f"\nmax |z| = {report.max_abs_z:.3f}; threshold {report.threshold:g}; "
        f"{'PASS' if report.passed else 'FAIL'}\n"
    )
    _emit(text, args.out)
    return EXIT_OK if report.passed else EXIT_CROSSCHECK


COMMANDS = {"bound": cmd_bound, "rate": cmd_rate, "scan": cmd_scan,
            "simulate": cmd_simulate, "crosscheck": cmd_crosscheck}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.cmd](args)
    except (UsageError, ParameterError, ValueError) as exc:
        print(f"rrdpts: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
