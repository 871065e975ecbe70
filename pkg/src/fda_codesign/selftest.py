"""Reduced-size invariant suite behind ``fda-codesign selftest``."""

from __future__ import annotations

import time

import numpy as np

from .codesign import run_mode, seed_streams
from .interference import assemble_qbar, channel_powers, simulate_interferer_channels
from .receiver import ReceiverModel
from .scenario import InterfererSpec, SharedBandSpec, normalize_band, reduced_scenario
from .sdp import SdpProblem, solve
from .signal_model import commutation_matrix
from .spectral import band_energy, frequency_gram, h_b_matrix, i_tilde_matrix


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def check_duality(rng) -> tuple[bool, str]:
    scn = reduced_scenario()
    cfg = scn.array
    rx = ReceiverModel.for_scenario(scn)
    worst = 0.0
    for _ in range(10):
        s = _crandn(rng, cfg.n_tx * cfg.n_samples)
        w = _crandn(rng, cfg.n_tx)
        a = np.vdot(s, rx.psi_w(w) @ s).real
        b = np.vdot(w, rx.psi_s(s) @ w).real
        worst = max(worst, abs(a - b) / max(abs(a), 1e-30))
    return worst <= 1e-10, f"max rel diff {worst:.2e}"


def check_band_energy(rng) -> tuple[bool, str]:
    scn = reduced_scenario()
    cfg = scn.array
    L = cfg.n_samples
    T = commutation_matrix(cfg.n_tx, L)
    bands = [SharedBandSpec(0.05, 0.25, 1.0), SharedBandSpec(0.2, 0.45, 1.0),
             SharedBandSpec(0.1, 0.9, 1.0)]
    worst = 0.0
    for spec in bands:
        band = normalize_band(spec, cfg)
        S = _crandn(rng, cfg.n_tx, L)
        w = _crandn(rng, cfg.n_tx)
        direct = band_energy(S, w, band)
        via_w = np.vdot(w, i_tilde_matrix(S, band) @ w).real
        s_T = T @ S.flatten(order="F")
        via_s = np.vdot(s_T, h_b_matrix(w, band, L) @ s_T).real
        worst = max(worst, abs(direct - via_w) / direct, abs(direct - via_s) / direct)
    ident = np.max(np.abs(frequency_gram(0.0, 1.0, L) - np.eye(L)))
    return worst <= 1e-10 and ident <= 1e-12, f"max rel diff {worst:.2e}, |K(0,1)-I| {ident:.1e}"


def check_mvdr(rng) -> tuple[bool, str]:
    scn = reduced_scenario()
    cfg = scn.array
    rx = ReceiverModel.for_scenario(scn)
    s = _crandn(rng, cfg.n_tx * cfg.n_samples)
    w = _crandn(rng, cfg.n_tx)
    v = rx.mvdr(s, w)
    gain = np.vdot(v, rx.a_of_w(w) @ s)
    return abs(gain - 1) <= 1e-10, f"|v^H A s - 1| = {abs(gain - 1):.1e}"


def check_monte_carlo(seed) -> tuple[bool, str]:
    scn = reduced_scenario()
    cfg = scn.array
    intf = InterfererSpec(10001e6, 20.0, 10.0)
    C = simulate_interferer_channels(intf, cfg, 1000, seed=seed)
    P = channel_powers(intf, cfg).powers
    d = np.real(np.diag(C))
    off = np.max(np.abs(C - np.diag(np.diag(C)))) / d.max()
    k = int(np.argmax(P))
    rel = abs(d[k] - P[k]) / P[k]
    return off < 0.05 and rel < 0.10, f"off/diag {off:.2e}, diag error {rel:.2%}"


def check_sdp(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(5):
        G = _crandn(rng, 4, 4)
        C = G @ G.conj().T
        sol = solve(SdpProblem(C, eq_constraints=[(np.eye(4), 1.0)]), tol=1e-7)
        lam = np.linalg.eigvalsh(C)[-1]
        worst = max(worst, abs(sol.objective_value - lam) / lam)
    return worst <= 1e-6, f"max rel error vs lambda_max {worst:.1e}"


def check_design() -> tuple[bool, str]:
    scn = reduced_scenario(bands=(SharedBandSpec(0.05, 0.2, 0.05),))
    t0 = time.perf_counter()
    res = run_mode(scn, "joint")
    dt = time.perf_counter() - t0
    return res.feasible and dt < 60, f"{res.sinr_db:.3f} dB, feasible={res.feasible}, {dt:.1f} s"


def run_selftest(verbose: bool = True, seed: int = 0) -> bool:
    rng = np.random.default_rng(seed_streams(seed)["monte_carlo"])
    checks = [
        ("dual-form SINR identity", lambda: check_duality(rng)),
        ("band energy three-way consistency", lambda: check_band_energy(rng)),
        ("MVDR distortionless", lambda: check_mvdr(rng)),
        ("channelized interference Monte-Carlo", lambda: check_monte_carlo(seed)),
        ("SDP lambda_max specialization", lambda: check_sdp(rng)),
        ("reduced joint design", check_design),
    ]
    all_ok = True
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name:40s} {detail}")
    return all_ok
