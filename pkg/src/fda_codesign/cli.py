"""Command-line entry point: ``fda-codesign design|evaluate|compare|selftest``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .scenario import InfeasibleScenario, ScenarioError, load_scenario

log = logging.getLogger("fda_codesign")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
MODE_FLAGS = {"joint": "joint", "waveform": "waveform_only", "weight": "weight_only",
              "baseline": "baseline"}


def _thread_limit():
    """Cap BLAS/OpenMP pools from FDA_CODESIGN_THREADS (0 or unset = library default)."""
    raw = os.environ.get("FDA_CODESIGN_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        log.warning("ignoring non-integer FDA_CODESIGN_THREADS=%r", raw)
        n = 0
    if n <= 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _load(path: str):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"scenario file not found: {p}")
    return load_scenario(p)


def _apply_overrides(scn, args):
    changes = {}
    if args.seed is not None:
        changes["rng_seed"] = args.seed
    if args.iters is not None:
        changes["max_iters"] = args.iters
    if args.trials is not None:
        changes["n_randomizations"] = args.trials
    return scn.with_controls(**changes) if changes else scn


def _manifest(args, scn, mode: str) -> dict:
    return {"scenario_path": str(args.scenario), "mode": mode, "seed": scn.controls.rng_seed,
            "iters": scn.controls.max_iters, "trials": scn.controls.n_randomizations,
            "out_dir": str(args.out), "tool_version": __version__,
            "verbatim_similarity": bool(getattr(args, "verbatim_similarity", False))}


def _write_timings(out: Path, wall: float) -> None:
    # kept out of summary.json so that file stays byte-reproducible
    (out / "timings.json").write_text(json.dumps({"wall_time_s": wall}, indent=2) + "\n")


def cmd_design(args) -> int:
    from .analysis import report
    from .codesign import run_mode

    scn = _apply_overrides(_load(args.scenario), args)
    mode = MODE_FLAGS[args.mode]
    t0 = time.perf_counter()
    result = run_mode(scn, mode, verbatim_similarity=args.verbatim_similarity)
    summary = report(result, scn, args.out, manifest=_manifest(args, scn, mode),
                     extra={"scenario": scn.to_dict()})
    _write_timings(Path(args.out), time.perf_counter() - t0)
    print(f"mode={mode} sinr_db={summary['sinr_db']:.4f} feasible={summary['feasible']} "
          f"out={args.out}")
    for b in summary["bands"]:
        print(f"  band[{b['index']}] E={b['energy']:.6g} eta={b['eta']:.6g} "
              f"{'ok' if b['satisfied'] else 'VIOLATED'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .analysis import report
    from .codesign import run_mode

    scn = _apply_overrides(_load(args.scenario), args)
    wscn = _apply_overrides(_load(args.waveform_scenario), args) if args.waveform_scenario else scn
    out = Path(args.out)
    t0 = time.perf_counter()
    table = {}
    for mode in ("baseline", "weight_only", "waveform_only", "joint"):
        use = wscn if mode == "waveform_only" else scn
        res = run_mode(use, mode, verbatim_similarity=args.verbatim_similarity)
        report(res, use, out / mode, manifest=_manifest(args, use, mode),
               extra={"scenario": use.to_dict()})
        table[mode] = {"sinr_db": res.sinr_db, "feasible": res.feasible,
                       "band_energies": res.band_energies, "band_limits": res.band_limits}
        print(f"{mode:14s} {res.sinr_db:8.4f} dB  feasible={res.feasible}")
    summary = {"schema": 1, "modes": table,
               "manifest": {**_manifest(args, scn, "compare"),
                            "waveform_scenario_path": args.waveform_scenario}}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_timings(out, time.perf_counter() - t0)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .analysis import report
    from .codesign import evaluate_design, load_weights
    from .signal_model import WaveformSet

    d = Path(args.design)
    scn = _load(args.scenario)
    try:
        stored = json.loads((d / "summary.json").read_text())
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"design summary not found: {d / 'summary.json'}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{d / 'summary.json'}: invalid JSON ({exc})") from exc
    if stored.get("schema") != 1:
        raise ValueError(f"{d / 'summary.json'}: unsupported schema {stored.get('schema')!r}")
    w = load_weights(d / "weights.csv")
    S = WaveformSet.from_csv(d / "waveforms.csv")
    res = evaluate_design(scn, S.vec_waveform, w, mode=stored.get("mode", "evaluate"),
                          seeds=stored.get("seeds"))
    ok = True
    checks = [("sinr_db", res.sinr_db, stored["sinr_db"], 1e-9)]
    for b, band in enumerate(stored.get("bands", [])):
        checks.append((f"band[{b}].energy", res.band_energies[b], band["energy"], 1e-9))
    for name, got, want, tol in checks:
        good = abs(got - want) <= tol * max(1.0, abs(want))
        ok &= good
        print(f"{'PASS' if good else 'FAIL'} {name}: recomputed={got:.12g} stored={want:.12g}")
    if args.out:
        report(res, scn, args.out, manifest={"evaluated_from": str(d), "tool_version": __version__})
    return EXIT_OK if ok else EXIT_ERROR


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest(verbose=True) else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fda-codesign",
                                description="FDA-MIMO radar transmit weight / waveform co-design")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp):
        sp.add_argument("--scenario", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--iters", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--out", required=True)
        sp.add_argument("--verbatim-similarity", action="store_true",
                        help="use Tr((I - r r^H) X) <= bound instead of the exact phase-free lift")

    d = sub.add_parser("design", help="run one design mode and write the report")
    run_flags(d)
    d.add_argument("--mode", choices=sorted(MODE_FLAGS), default="joint")
    d.set_defaults(func=cmd_design)

    c = sub.add_parser("compare", help="run every mode and tabulate SINRs")
    run_flags(c)
    c.add_argument("--waveform-scenario", help="scenario used for the waveform-only mode")
    c.set_defaults(func=cmd_compare)

    e = sub.add_parser("evaluate", help="recompute a stored design")
    e.add_argument("--design", required=True)
    e.add_argument("--scenario", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("selftest", help="reduced-size invariant checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except InfeasibleScenario as exc:
        print(f"infeasible scenario: {exc} [constraint: {exc.constraint}]", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, ScenarioError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
