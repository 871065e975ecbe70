"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` or directly as a script.  Each
``criterion_k`` returns ``(passed, detail)``; the tests print the line and
then assert, so an unmet criterion shows up red with its measured numbers.
"""

from __future__ import annotations

import functools
import shutil
import statistics
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from fda_codesign import cli
from fda_codesign.analysis import receive_beampattern
from fda_codesign.codesign import (DesignContext, build_waveform_sdp, build_weight_sdp,
                                   randomize_waveform, randomize_weights, run_mode)
from fda_codesign.interference import channel_powers, simulate_interferer_channels
from fda_codesign.receiver import ReceiverModel
from fda_codesign.scenario import (STANDARD_INTERFERERS, InterfererSpec, SharedBandSpec, load_scenario,
                                   normalize_band, standard_scenario, reduced_scenario)
from fda_codesign.sdp import SdpProblem, solve
from fda_codesign.signal_model import commutation_matrix
from fda_codesign.spectral import band_energy, esd_band_energy, frequency_gram, h_b_matrix, i_tilde_matrix

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
SEEDS = (0, 1, 2, 3, 4)


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _db(x):
    return 10 * np.log10(x)


# ------------------------------------------------------------- shared designs

@functools.cache
def standard_runs() -> tuple[dict, float]:
    """Joint, weight-only and waveform-only designs at the standard setup for every seed."""
    t0 = time.perf_counter()
    runs = {}
    for seed in SEEDS:
        runs[("joint", seed)] = run_mode(standard_scenario("joint", rng_seed=seed), "joint")
        runs[("weight_only", seed)] = run_mode(standard_scenario("joint", rng_seed=seed), "weight_only")
        runs[("waveform_only", seed)] = run_mode(standard_scenario("waveform", rng_seed=seed),
                                                 "waveform_only")
    return runs, time.perf_counter() - t0


def _size_scenarios():
    return [
        reduced_scenario(),
        reduced_scenario(n_tx=2, n_rx=3, n_samples=8),
        reduced_scenario(n_tx=4, n_rx=2, n_samples=12,
                         interferers=(InterfererSpec(10003e6, -20.0, 15.0),)),
        reduced_scenario(n_tx=5, n_rx=3, n_samples=10, interferers=STANDARD_INTERFERERS),
        standard_scenario(),
    ]


# ------------------------------------------------------------------ criteria

def criterion_1():
    scn = load_scenario(SCENARIOS / "interference_free.json")
    t0 = time.perf_counter()
    res = run_mode(scn, "joint")
    dt = time.perf_counter() - t0
    ceiling = _db(scn.target.snr * scn.array.n_rx)
    ok = abs(res.sinr_db - 6.0206) <= 0.1 and dt < 10.0
    return ok, (f"SINR {res.sinr_db:.4f} dB (ceiling {ceiling:.4f} dB, target 6.0206 +/- 0.1), "
                f"runtime {dt:.1f} s (< 10 s)")


def criterion_2():
    runs, dt = standard_runs()
    med = {mode: statistics.median(runs[(mode, s)].sinr_db for s in SEEDS)
           for mode in ("joint", "weight_only", "waveform_only")}
    joint_ok = 5.0 <= med["joint"] <= 6.03
    gap = med["joint"] - med["weight_only"]
    wf_gap = abs(med["joint"] - med["waveform_only"])
    ok = joint_ok and gap >= 2.5 and wf_gap <= 1.0 and dt <= 1800
    return ok, (f"median joint {med['joint']:.4f} dB [5.0, 6.03] {'ok' if joint_ok else 'FAIL'}; "
                f"joint-weight {gap:.4f} dB (>= 2.5) {'ok' if gap >= 2.5 else 'FAIL'}; "
                f"|joint-waveform| {wf_gap:.4f} dB (<= 1.0) {'ok' if wf_gap <= 1.0 else 'FAIL'}; "
                f"runtime {dt:.0f} s")


def criterion_3():
    runs, _ = standard_runs()
    worst_excess, worst_rel = -np.inf, 0.0
    floor_ok = True
    e2_min = np.inf
    for (mode, seed), res in runs.items():
        scn = standard_scenario("waveform" if mode == "waveform_only" else "joint")
        S = res.waveform.samples
        for b, band in enumerate(scn.band_indexing):
            e = band_energy(S, res.weights, band)
            eta = scn.shared_bands[b].eta
            worst_excess = max(worst_excess, e - eta)
            quad = esd_band_energy(S, res.weights, band, n_grid=4096)
            worst_rel = max(worst_rel, abs(quad - e) / max(e, 1e-12))
        if mode == "waveform_only":
            e2 = res.band_energies[1]
            e2_min = min(e2_min, e2)
            floor_ok &= e2 >= 1 / scn.array.n_tx - 1e-12
    ok = worst_excess <= 1e-8 and worst_rel <= 1e-4 and floor_ok
    return ok, (f"max E_b - eta_b {worst_excess:.2e} (<= 0); quadrature rel diff {worst_rel:.2e} "
                f"(<= 1e-4); waveform-only min E_2 {e2_min:.6f} (>= 1/6)")


def criterion_4():
    rng = np.random.default_rng(4)
    worst = 0.0
    for scn in _size_scenarios():
        rx = ReceiverModel.for_scenario(scn)
        cfg = scn.array
        for _ in range(10):
            s = _crandn(rng, cfg.n_tx * cfg.n_samples)
            w = _crandn(rng, cfg.n_tx)
            a = np.vdot(s, rx.psi_w(w) @ s).real
            b = np.vdot(w, rx.psi_s(s) @ w).real
            worst = max(worst, abs(a - b) / max(abs(a), 1e-30))
    return worst <= 1e-10, f"50 pairs over 5 sizes, max rel diff {worst:.2e} (<= 1e-10)"


def criterion_5():
    rng = np.random.default_rng(5)
    cfg = standard_scenario().array
    L = cfg.n_samples
    T = commutation_matrix(cfg.n_tx, L)
    specs = [SharedBandSpec(0.02, 0.12, 1.0),    # same channel
             SharedBandSpec(0.073, 0.200, 1.0),  # adjacent channels
             SharedBandSpec(0.556, 0.884, 1.0),  # spans an interior channel
             SharedBandSpec(0.35, 0.45, 1.0),
             SharedBandSpec(0.10, 0.95, 1.0)]
    cases = set()
    worst = 0.0
    for k in range(30):
        band = normalize_band(specs[k % len(specs)], cfg)
        cases.add(band.case)
        S = _crandn(rng, cfg.n_tx, L)
        w = _crandn(rng, cfg.n_tx)
        direct = band_energy(S, w, band)
        via_w = np.vdot(w, i_tilde_matrix(S, band) @ w).real
        via_s = np.vdot(T @ S.flatten(order="F"), h_b_matrix(w, band, L)
                        @ (T @ S.flatten(order="F"))).real
        worst = max(worst, abs(direct - via_w) / direct, abs(direct - via_s) / direct)
    ident = np.max(np.abs(frequency_gram(0.0, 1.0, L) - np.eye(L)))
    ok = worst <= 1e-10 and ident <= 1e-12 and len(cases) == 3
    return ok, (f"max rel diff {worst:.2e} (<= 1e-10), cases {sorted(cases)}, "
                f"|K(0,1) - I| {ident:.1e} (<= 1e-12)")


def criterion_6():
    rng = np.random.default_rng(6)
    worst_gain, beaten = 0.0, 0
    for scn in _size_scenarios():
        rx = ReceiverModel.for_scenario(scn)
        cfg = scn.array
        s = _crandn(rng, cfg.n_tx * cfg.n_samples)
        w = _crandn(rng, cfg.n_tx)
        v = rx.mvdr(s, w)
        worst_gain = max(worst_gain, abs(np.vdot(v, rx.a_of_w(w) @ s) - 1))
        best = rx.sinr_with(v, s, w)
        for _ in range(100):
            vr = _crandn(rng, v.size)
            if rx.sinr_with(vr, s, w) > best * (1 + 1e-12):
                beaten += 1
    ok = worst_gain <= 1e-10 and beaten == 0
    return ok, f"max |v^H A s - 1| {worst_gain:.1e} (<= 1e-10); random v beating MVDR: {beaten}/500"


def criterion_7():
    cfg = standard_scenario().array
    worst_off, worst_diag = 0.0, 0.0
    for i, intf in enumerate(STANDARD_INTERFERERS):
        C = simulate_interferer_channels(intf, cfg, 10_000, seed=70 + i)
        P = channel_powers(intf, cfg).powers
        d = np.real(np.diag(C))
        worst_off = max(worst_off, np.max(np.abs(C - np.diag(np.diag(C)))) / d.max())
        hot = P > 0
        worst_diag = max(worst_diag, np.max(np.abs(d[hot] - P[hot]) / P[hot]),
                         np.max(np.abs(d[~hot])) / P.max())
    ok = worst_off < 0.05 and worst_diag <= 0.10
    return ok, f"off/diag {worst_off:.2e} (< 0.05), diagonal error {worst_diag:.2%} (<= 10%)"


def criterion_8():
    rng = np.random.default_rng(8)
    worst = 0.0
    for k in range(20):
        n = 3 + k % 4
        G = _crandn(rng, n, n)
        C = 0.5 * (G + G.conj().T)
        sol = solve(SdpProblem(C, eq_constraints=[(np.eye(n), 1.0)]), tol=1e-7)
        lam = np.linalg.eigvalsh(C)[-1]
        worst = max(worst, abs(sol.objective_value - lam) / (1 + abs(lam)))
    lam_ok = worst <= 1e-7

    gaps, feas = [], True
    # weight half-step at the standard setup, waveform half-step on a banded reduced case
    scn = standard_scenario()
    ctx = DesignContext(scn)
    sol = solve(build_weight_sdp(ctx.s_ref, ctx))
    r = randomize_weights(sol.x_opt, ctx.s_ref, ctx, 1000, np.random.default_rng(81))
    feas &= not r.exhausted and ctx.feasible(ctx.s_ref, r.vector)
    gaps.append((sol.objective_value - r.objective) / sol.objective_value)

    scn = reduced_scenario(bands=(SharedBandSpec(0.05, 0.2, 0.05),))
    ctx = DesignContext(scn)
    w = ctx.w_ref.astype(complex)
    sol = solve(build_waveform_sdp(w, ctx))
    r = randomize_waveform(sol.x_opt, w, ctx, 1000, np.random.default_rng(82))
    feas &= not r.exhausted and ctx.feasible(r.vector, w)
    gaps.append((sol.objective_value - r.objective) / sol.objective_value)
    within = all(g >= -1e-6 for g in gaps)
    ok = lam_ok and feas and within
    return ok, (f"lambda_max max error {worst:.1e} (<= 1e-7); rounded vectors feasible={feas}; "
                f"relative relaxation gaps {', '.join(f'{g:.2e}' for g in gaps)}")


def criterion_9():
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        argv = ["design", "--scenario", str(SCENARIOS / "standard.json"), "--mode", "joint",
                "--seed", "0", "--out", str(out)]
        snaps = []
        for _ in range(2):
            if out.exists():
                shutil.rmtree(out)
            code = cli.main(argv)
            if code != 0:
                return False, f"design run exited with {code}"
            snaps.append({p.name: p.read_bytes() for p in sorted(out.iterdir())
                          if p.suffix in (".csv", ".json") and p.name != "timings.json"})
    same = snaps[0] == snaps[1]
    diff = sorted(k for k in snaps[0] if snaps[0][k] != snaps[1].get(k))
    return same, (f"{len(snaps[0])} CSV/JSON artifacts compared, "
                  f"{'all byte-identical' if same else 'differing: ' + ', '.join(diff)}")


def criterion_10():
    runs, _ = standard_runs()
    scn = standard_scenario()
    res = runs[("joint", 0)]
    s = res.waveform.vec_snapshot
    probe = receive_beampattern(res.mvdr, s, res.weights, scn.array, scn.target.range_m,
                                [40.0, 10.0, 60.0])
    lv = {th: _db(p / probe[0]) for th, p in zip((10, 60), probe[1:])}
    ok = all(v <= -20.0 for v in lv.values())
    return ok, (f"P_R relative to 40 deg: 10 deg {lv[10]:.2f} dB, 60 deg {lv[60]:.2f} dB "
                f"(both <= -20 dB)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


def _line(k, ok, detail):
    return f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("k", range(1, len(CRITERIA) + 1))
def test_criterion(k, capsys):
    ok, detail = CRITERIA[k - 1]()
    with capsys.disabled():
        print("\n" + _line(k, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for k, fn in enumerate(CRITERIA, start=1):
        ok, detail = fn()
        results.append(ok)
        print(_line(k, ok, detail), flush=True)
    sys.exit(0 if all(results) else 1)
