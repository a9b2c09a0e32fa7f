"""Command-line experiment runner.

    qsrc decompose --ensemble five_state
    qsrc compress --ensemble zero_plus --n 4,8,16 --rate 0.4,0.8 --out runs/
    qsrc hybrid --ensemble two_block --n 8,16,32 --mode mc --samples 10000 --seed 1
    qsrc bounds --check chi-continuity --trials 1000 --seed 7
    qsrc infodist --ensemble zero_plus
    qsrc report --ensemble zero_plus --n 2,4,8

Exit codes: 0 success, 2 unreadable or malformed input, 3 input violates an
invariant, 4 a checked bound was violated.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import bounds, codecs
from .channels import controlled_rotation_leak, load_instrument
from .ensembles import (Ensemble, bundled_fixtures, chain, decompose, entropy, load_ensemble, load_fixture,
                        min_overlap)
from .qcore import InvalidStateError
from .reports import (BOUND_COLUMNS, SCHEME_COLUMNS, VIOLATION, bound_row, csv_text, summarize, to_json)

log = logging.getLogger("qsrc")

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT, EXIT_VIOLATION = 0, 2, 3, 4


class InputError(Exception):
    """Unreadable or malformed input file."""


# -- argument handling ---------------------------------------------------------

def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--ensemble", help="ensemble JSON file or bundled fixture name")
    common.add_argument("--n", type=_ints, help="comma-separated block lengths")
    common.add_argument("--rate", type=_floats, help="comma-separated rates (qubits/signal)")
    common.add_argument("--eps-typ", type=float, help="typicality parameter")
    common.add_argument("--trials", type=int, default=100)
    common.add_argument("--seed", type=int, help="RNG seed (falls back to $QSRC_SEED, then 0)")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", help="directory for CSV/JSON artifacts")
    common.add_argument("--tol", type=float, default=1e-9, help="overlap tolerance")
    common.add_argument("--rank-tol", type=float, default=1e-9)
    common.add_argument("--mode", choices=["auto", "exact", "mc"], default="auto")
    common.add_argument("--samples", type=int, default=10_000)
    common.add_argument("--config", help="JSON file whose keys override the flags")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qsrc", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("decompose", parents=[common], help="orthogonal block decomposition and chains")
    sub.add_parser("compress", parents=[common], help="Schumacher compression fidelity/resources")
    h = sub.add_parser("hybrid", parents=[common], help="measure block labels, compress blocks")
    h.add_argument("--c", type=float, default=2.0, help="per-block budget constant")
    b = sub.add_parser("bounds", parents=[common], help="seeded inequality sweeps")
    b.add_argument("--check", required=True,
                   choices=sorted(bounds.SWEEPS) + ["typical"])
    b.add_argument("--dist", type=_floats, default=[0.3, 0.7], help="distribution for --check typical")
    b.add_argument("--eps", type=float, default=0.1, help="eps for --check typical")
    i = sub.add_parser("infodist", parents=[common], help="environment information vs disturbance")
    i.add_argument("--eps-grid", type=_floats, help="target eps values (default 13 log-spaced in [1e-4, 0.1])")
    r = sub.add_parser("report", parents=[common], help="resource/fidelity gap for schemes")
    r.add_argument("--instrument", help="instrument JSON acting on n-strings (uses the first --n)")
    return p


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if not args.config:
        return args
    cfg = _read_json(args.config)
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or dest in ("command", "config"):
            raise InputError(f"unknown config key {key!r}")
        if dest == "n" and isinstance(val, int):
            val = [val]
        if dest == "rate" and isinstance(val, (int, float)):
            val = [float(val)]
        setattr(args, dest, val)
    return args


def _validate(args: argparse.Namespace) -> None:
    if args.n is not None and any(n < 1 for n in args.n):
        raise ValueError("--n values must be >= 1")
    if args.rate is not None and any(r < 0 for r in args.rate):
        raise ValueError("--rate must be nonnegative")
    if args.eps_typ is not None and not args.eps_typ > 0:
        raise ValueError("--eps-typ must be positive")
    if args.trials < 0 or args.jobs < 1 or args.samples < 2:
        raise ValueError("--trials >= 0, --jobs >= 1 and --samples >= 2 required")
    if not 0 < args.rank_tol < 1e-3:
        raise ValueError("--rank-tol must lie in (0, 1e-3)")
    if not args.tol > 0:
        raise ValueError("--tol must be positive")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("QSRC_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"QSRC_SEED must be an integer, got {env!r}") from None
    return 0


def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from exc


def _ensemble(args, default: str | None = None) -> Ensemble:
    name = args.ensemble or default
    if name is None:
        raise InputError("--ensemble is required")
    path = Path(name)
    if not path.exists():
        if path.stem in bundled_fixtures() and path.suffix in ("", ".json"):
            return load_fixture(path.stem)
        raise InputError(f"no ensemble file {name!r} and no bundled fixture of that name "
                         f"(available: {', '.join(bundled_fixtures())})")
    _read_json(path)  # surface JSON syntax errors as input errors
    try:
        return load_ensemble(path)
    except InvalidStateError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# -- output -------------------------------------------------------------------------

def _write(args, name: str, text: str, comment: bool = True) -> None:
    if not args.out:
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    header = f"# qsrc {args.command} generated {stamp}\n" if comment else ""
    (out / name).write_text(header + text)


def _mode(args, K: int, n: int) -> str:
    if args.mode != "auto":
        return args.mode
    return "exact" if K ** n <= codecs.MAX_EXACT_STRINGS else "mc"


def _scheme_table(args, reports) -> int:
    rows = [r.row() for r in reports]
    text = csv_text(rows, SCHEME_COLUMNS)
    print(text, end="")
    _write(args, f"{args.command}.csv", text)
    gaps = [codecs.resource_gap(r) for r in reports]
    summary = {"command": args.command, "rows": len(rows),
               "resource_bound": summarize(gaps), "resource_bound_slacks": [g.slack for g in gaps]}
    _write(args, f"{args.command}_summary.json", to_json(summary), comment=False)
    bad = [g for g in gaps if g.status == VIOLATION]
    for g in bad:
        print(f"resource bound violated: {g.extra} slack={g.slack:.3g}", file=sys.stderr)
    return EXIT_VIOLATION if bad else EXIT_OK


# -- commands ---------------------------------------------------------------------------

def cmd_decompose(args) -> int:
    e = _ensemble(args)
    d = decompose(e, args.tol)
    print(f"components: {d.L}")
    for l, (mem, a, S) in enumerate(zip(d.members, d.weights, d.block_entropies)):
        print(f"  block {l}: signals {mem} weight {a:.6g} entropy {S:.6g} dim {d.bases[l].shape[1]}")
    mo = min_overlap(e, args.tol) if e.K > 1 else None
    print(f"min overlap: {'none (all orthogonal)' if mo is None else f'{mo:.6g}'}")
    rows = []
    print("chains:")
    for i in range(e.K):
        for j in range(i + 1, e.K):
            c = chain(e, i, j, args.tol)
            rows.append({"i": i, "j": j, "length": "" if c is None else len(c),
                         "chain": "" if c is None else "-".join(map(str, c))})
            print(f"  {i} -> {j}: " + ("disconnected" if c is None else f"{len(c)} members {c}"))
    for i, j, g in d.borderline:
        print(f"warning: overlap |<{i}|{j}>| = {g:.3g} is close to tol {args.tol:g}")
    summary = {"components": d.L, "members": d.members, "weights": d.weights,
               "block_entropies": d.block_entropies, "entropy": entropy(e), "min_overlap": mo,
               "borderline": d.borderline, "tol": args.tol}
    _write(args, "chains.csv", csv_text(rows, ["i", "j", "length", "chain"]))
    _write(args, "decompose.json", to_json(summary), comment=False)
    return EXIT_OK


def cmd_compress(args) -> int:
    e = _ensemble(args)
    ns = args.n or [1]
    if args.rate is None and args.eps_typ is None:
        raise ValueError("compress needs --rate or --eps-typ")
    seed = _seed(args)
    reports = []
    for n in ns:
        param_sets = [{"rate": r} for r in args.rate] if args.rate is not None else [{"eps_typ": args.eps_typ}]
        for params in param_sets:
            codec = codecs.build_schumacher(e, n, **params)
            reports.append(codec.evaluate(_mode(args, e.K, n), args.samples, seed, args.jobs, args.rank_tol))
    return _scheme_table(args, reports)


def cmd_hybrid(args) -> int:
    e = _ensemble(args)
    seed = _seed(args)
    reports = []
    for n in args.n or [8]:
        h = codecs.build_hybrid(e, n, args.eps_typ or 0.1, block_rates=args.rate, c=args.c, tol=args.tol)
        mode = args.mode if args.mode != "auto" else "exact"
        if mode == "exact":
            try:
                reports.append(h.evaluate("exact", rank_tol=args.rank_tol))
                continue
            except ValueError:
                if args.mode == "exact":
                    raise
        reports.append(h.evaluate("mc", args.samples, seed, args.jobs, args.rank_tol))
    return _scheme_table(args, reports)


def cmd_bounds(args) -> int:
    seed = _seed(args)
    if args.check == "typical":
        ns = args.n or [20]
        res = bounds.typical_set_mass(args.dist, max(ns), args.eps)
        rows = [{"check": "typical", "trial": m, "lhs": f"{res.masses[m]:.12g}", "rhs": f"{1 - args.eps:.12g}",
                 "slack": f"{res.masses[m] - (1 - args.eps):.12g}",
                 "status": "pass" if res.masses[m] > 1 - args.eps else "below", "seed": ""}
                for m in sorted(res.masses)]
        text = csv_text(rows, BOUND_COLUMNS)
        summary = {"check": "typical", "dist": args.dist, "eps": args.eps, "n": max(ns), "n0": res.n0,
                   "violations": 0 if res.n0 is not None else 1}
        print(to_json(summary))
        _write(args, "typical.csv", text)
        _write(args, "typical_summary.json", to_json(summary), comment=False)
        return EXIT_OK if res.n0 is not None else EXIT_VIOLATION
    reports = bounds.run_sweep(args.check, args.trials, seed, args.jobs)
    extra_cols = {"chi-continuity": ["eps", "eps_trace", "d"], "product-mi": ["n", "d"],
                  "chi-monotone": ["d"], "markov": ["mean", "eps", "A"]}[args.check]
    rows = [bound_row(r, r.extra.get("trial", t), seed, extra_cols) for t, r in enumerate(reports)]
    if args.check == "chi-continuity":
        for row, r in zip(rows, reports):
            a2 = r.extra["a2"]
            row.update(a2_rhs=f"{a2.rhs:.12g}", a2_slack=f"{a2.slack:.12g}", a2_status=a2.status)
        extra_cols = extra_cols + ["a2_rhs", "a2_slack", "a2_status"]
    summary = {"check": args.check, "seed": seed, **summarize(reports)}
    if args.check == "chi-continuity":
        summary["a2"] = summarize([r.extra["a2"] for r in reports])
    print(to_json(summary))
    _write(args, f"{args.check}.csv", csv_text(rows, BOUND_COLUMNS + extra_cols))
    _write(args, f"{args.check}_summary.json", to_json(summary), comment=False)
    return EXIT_VIOLATION if summary["violations"] else EXIT_OK


def cmd_infodist(args) -> int:
    e = _ensemble(args, default="zero_plus")
    grid = args.eps_grid or list(np.logspace(-4, -1, 13))
    if any(not 0 < g < 0.5 for g in grid):
        raise ValueError("--eps-grid values must lie in (0, 0.5)")
    # for the {|0>,|+>} fixture eps(t) = (1 - cos t) / 4; other sources just use the same t grid
    ts = [math.acos(1 - 4 * g) for g in grid]
    curve = bounds.info_disturbance_sweep(e, controlled_rotation_leak, ts, name="controlled-rotation-leak")
    fit = bounds.fit_disturbance(curve)
    rows = [dict(r, fit=f"{float(fit([r['eps']])[0]):.12g}", t=f"{r['t']:.12g}", eps=f"{r['eps']:.12g}",
                 chi_env=f"{r['chi_env']:.12g}") for r in curve.rows()]
    text = csv_text(rows, ["t", "eps", "chi_env", "fit"])
    print(text, end="")
    chi = curve.chi_env
    summary = {"family": curve.family, "ensemble_digest": curve.ensemble_digest,
               "fit_A": fit.A, "fit_B": fit.B, "fit_rms": fit.rms_residual, "fit_min_ratio": fit.min_ratio,
               "fit_note": "empirical constants for chi ~ A sqrt(eps) + B sqrt(eps) log2(1/sqrt(eps))",
               "strictly_increasing_in_t": bool(np.all(np.diff(chi) > 0))}
    print(to_json(summary))
    _write(args, "infodist.csv", text)
    _write(args, "infodist_summary.json", to_json(summary), comment=False)
    return EXIT_OK


def cmd_report(args) -> int:
    e = _ensemble(args)
    ns = args.n or [2, 4, 8]
    seed = _seed(args)
    reports, extra = [], {}
    if args.instrument:
        _read_json(args.instrument)
        try:
            ins = load_instrument(args.instrument)
        except InvalidStateError:
            raise
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        n = ns[0]
        reports.append(codecs.InstrumentScheme(ins, e, n, "instrument").evaluate(rank_tol=args.rank_tol))
        if n == 1:
            x = bounds.check_xenc(ins, e)
            extra["xenc"] = {"lhs": x.lhs, "rhs": x.rhs, "status": x.status}
    else:
        for n in ns:
            for scheme in bundled_schemes(e, n, args.rate or [0.4, 0.8]):
                if isinstance(scheme, (codecs.SchumacherCodec, codecs.HybridCodec)):
                    mode = _mode(args, e.K, n)
                    if isinstance(scheme, codecs.HybridCodec) and args.mode == "auto":
                        mode = "exact"
                    reports.append(scheme.evaluate(mode, args.samples, seed, args.jobs, args.rank_tol))
                else:
                    reports.append(scheme.evaluate(rank_tol=args.rank_tol))
    code = _scheme_table(args, reports)
    if extra:
        print(to_json(extra))
        if extra["xenc"]["status"] == VIOLATION:
            code = EXIT_VIOLATION
    return code


def bundled_schemes(e: Ensemble, n: int, rates=(0.4, 0.8)) -> list:
    """Identity, Schumacher at each rate, hybrid and measure-and-replace at block length n."""
    out = [codecs.identity_scheme(e, n)]
    out += [codecs.build_schumacher(e, n, rate=r) for r in rates]
    out.append(codecs.build_hybrid(e, n, 0.1))
    out.append(codecs.measure_and_replace_scheme(e, n))
    return out


COMMANDS = {"decompose": cmd_decompose, "compress": cmd_compress, "hybrid": cmd_hybrid,
            "bounds": cmd_bounds, "infodist": cmd_infodist, "report": cmd_report}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_config(args)
        _validate(args)
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidStateError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
