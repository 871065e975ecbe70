"""Alternating transmit-weight / waveform co-design by semidefinite relaxation.

Each half-step lifts a quadratic program to an SDP, solves it, and rounds
the relaxed matrix back to a vector by Gaussian randomization.  A candidate
replaces the incumbent only if it satisfies every constraint and improves
the output SINR, so the reported trace never decreases.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky, eigh

from . import sdp
from .receiver import ReceiverModel, to_db
from .scenario import InfeasibleScenario, ScenarioConfig
from .signal_model import StructuralMatrices, WaveformSet
from .spectral import band_energy, h_b_matrix, i_tilde_matrix

log = logging.getLogger(__name__)

MODES = ("joint", "waveform_only", "weight_only", "baseline")
RANK_ONE_RATIO = 1e-8
ENERGY_TOL = 1e-10
BAND_TOL = 1e-8
INEQ_TOL = 1e-8


# ---------------------------------------------------------------- constraints

def similarity_lift(ref: np.ndarray, norm2: float, bound: float, verbatim: bool = False):
    """Linear-in-X form of ``||x - ref||^2 <= bound`` for vectors with ``||x||^2 = norm2``.

    Since the objective and the spectral terms are blind to a global phase, the
    constraint is taken over the best phase of ``x``, which turns it into
    ``|ref_hat^H x| >= c`` with ``c = (norm2 + ||ref||^2 - bound) / (2 ||ref||)``.
    Lifted, that is ``Tr((I - ref_hat ref_hat^H) X) <= norm2 - c^2``.  Returns
    ``None`` when the constraint is vacuous (``c <= 0``).  With
    ``verbatim=True`` the unnormalized ``Tr((I - ref ref^H) X) <= bound`` is
    returned instead.
    """
    ref = np.asarray(ref, dtype=complex)
    n = ref.size
    if verbatim:
        return np.eye(n) - np.outer(ref, ref.conj()), float(bound)
    r = np.linalg.norm(ref)
    c = (norm2 + r**2 - bound) / (2 * r)
    if c <= 0:
        return None
    rh = ref / r
    return np.eye(n) - np.outer(rh, rh.conj()), float(norm2 - c**2)


def _align(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Rotate the last axis of ``x`` so ``ref^H x`` is real and nonnegative."""
    ip = x @ ref.conj()
    ph = np.where(np.abs(ip) > 0, ip / np.where(np.abs(ip) > 0, np.abs(ip), 1), 1)
    return x * np.conj(ph)[..., None] if x.ndim > 1 else x * np.conj(ph)


class DesignContext:
    """Scenario-derived quantities shared by both half-steps."""

    def __init__(self, scn: ScenarioConfig, verbatim_similarity: bool = False):
        self.scn = scn
        self.cfg = scn.array
        self.n_tx, self.L = self.cfg.n_tx, self.cfg.n_samples
        self.struct = StructuralMatrices(self.cfg)
        self.T = self.struct.commutation
        self.rx = ReceiverModel.for_scenario(scn)
        self.bands = scn.band_indexing
        self.etas = np.array([b.eta for b in scn.shared_bands])
        self.w_ref = self.cfg.w_ref
        self.s_ref = self.struct.reference_waveform
        self.gammas = np.array(self.cfg.inband_tolerance)
        self.verbatim = verbatim_similarity
        # per-channel in-band Gram blocks
        self.inband_blocks = [B[m * self.L:(m + 1) * self.L, m * self.L:(m + 1) * self.L]
                              for m, B in enumerate(self.struct.bandwidth_grams)]

    # vector conversions
    def snapshot(self, s_T: np.ndarray) -> np.ndarray:
        return self.T.T @ s_T

    def samples(self, s_T: np.ndarray) -> np.ndarray:
        return np.asarray(s_T).reshape(self.n_tx, self.L)

    def sinr(self, s_T: np.ndarray, w: np.ndarray) -> float:
        return self.rx.sinr(self.snapshot(s_T), w)

    def band_energies(self, s_T: np.ndarray, w: np.ndarray) -> np.ndarray:
        S = self.samples(s_T)
        return np.array([band_energy(S, w, b) for b in self.bands])

    def residuals(self, s_T: np.ndarray, w: np.ndarray) -> dict[str, float]:
        """Constraint violations (<= 0 or ~0 means satisfied)."""
        S = self.samples(s_T)
        res: dict[str, float] = {}
        for m in range(self.n_tx):
            res[f"energy[{m}]"] = float(abs(np.vdot(S[m], S[m]).real - 1 / self.n_tx))
        for m in range(self.n_tx):
            inb = np.vdot(S[m], self.inband_blocks[m] @ S[m]).real
            res[f"bandwidth[{m}]"] = float(self.gammas[m] / self.n_tx - inb)
        res["weight_norm"] = float(abs(np.vdot(w, w).real - self.n_tx))
        c = self.scn.controls
        res["weight_similarity"] = float(np.linalg.norm(w - self.w_ref) ** 2 - c.weight_similarity)
        res["waveform_similarity"] = float(np.linalg.norm(s_T - self.s_ref) ** 2
                                           - c.waveform_similarity)
        for b, (e, eta) in enumerate(zip(self.band_energies(s_T, w), self.etas)):
            res[f"shared_band[{b}]"] = float(e - eta)
        return res

    def feasible(self, s_T: np.ndarray, w: np.ndarray) -> bool:
        return _residuals_ok(self.residuals(s_T, w))


def _residuals_ok(res: dict[str, float]) -> bool:
    for k, v in res.items():
        if k.startswith("energy") or k == "weight_norm":
            if v > ENERGY_TOL:
                return False
        elif k.startswith("shared_band"):
            if v > BAND_TOL:
                return False
        elif v > INEQ_TOL:
            return False
    return True


def build_weight_sdp(s_T: np.ndarray, ctx: DesignContext) -> sdp.SdpProblem:
    """Relaxation over ``W = w w^H`` for fixed waveforms."""
    n = ctx.n_tx
    S = ctx.samples(s_T)
    prob = sdp.SdpProblem(objective=ctx.rx.psi_s(ctx.snapshot(s_T)),
                          eq_constraints=[(np.eye(n, dtype=complex), float(n))])
    prob.names[("eq", 0)] = "weight_norm"
    lift = similarity_lift(ctx.w_ref, n, ctx.scn.controls.weight_similarity, ctx.verbatim)
    if lift is not None:
        prob.names[("le", len(prob.le_constraints))] = "weight_similarity"
        prob.le_constraints.append(lift)
    for b, (band, eta) in enumerate(zip(ctx.bands, ctx.etas)):
        prob.names[("le", len(prob.le_constraints))] = f"shared_band[{b}]"
        prob.le_constraints.append((i_tilde_matrix(S, band).astype(complex), float(eta)))
    return prob


def build_waveform_sdp(w: np.ndarray, ctx: DesignContext) -> sdp.SdpProblem:
    """Relaxation over ``S_bar = s_T s_T^H`` for fixed weights."""
    n = ctx.n_tx
    obj = ctx.T @ ctx.rx.psi_w(w) @ ctx.T.T
    prob = sdp.SdpProblem(objective=0.5 * (obj + obj.conj().T))
    for m, sel in enumerate(ctx.struct.energy_selectors):
        prob.names[("eq", m)] = f"energy[{m}]"
        prob.eq_constraints.append((sel.astype(complex), 1.0 / n))
    for m, B in enumerate(ctx.struct.bandwidth_grams):
        prob.names[("ge", m)] = f"bandwidth[{m}]"
        prob.ge_constraints.append((B, float(ctx.gammas[m] / n)))
    lift = similarity_lift(ctx.s_ref, 1.0, ctx.scn.controls.waveform_similarity, ctx.verbatim)
    if lift is not None:
        prob.names[("le", len(prob.le_constraints))] = "waveform_similarity"
        prob.le_constraints.append(lift)
    for b, (band, eta) in enumerate(zip(ctx.bands, ctx.etas)):
        prob.names[("le", len(prob.le_constraints))] = f"shared_band[{b}]"
        prob.le_constraints.append((h_b_matrix(w, band, ctx.L), float(eta)))
    return prob


# ------------------------------------------------------------------- rounding

@dataclass
class RoundingOutcome:
    vector: np.ndarray
    objective: float
    n_trials: int
    n_feasible: int
    rank_one: bool
    exhausted: bool = False
    winner: int = -1


def _gaussian_draws(X: np.ndarray, J: int, rng: np.random.Generator) -> np.ndarray:
    """``J`` rows of CN(0, X), via Cholesky with diagonal jitter on failure."""
    n = X.shape[0]
    X = 0.5 * (X + X.conj().T)
    jitter = 0.0
    scale = max(np.trace(X).real / n, 1e-300)
    for _ in range(20):
        try:
            Lc = cholesky(X + jitter * np.eye(n), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter = scale * 1e-14 if jitter == 0 else jitter * 10
    else:
        raise np.linalg.LinAlgError("relaxed solution is not positive semidefinite")
    z = (rng.standard_normal((J, n)) + 1j * rng.standard_normal((J, n))) / np.sqrt(2)
    return z @ Lc.T


def _dominant(X: np.ndarray) -> tuple[np.ndarray, bool]:
    lam, U = eigh(0.5 * (X + X.conj().T))
    ratio = lam[-2] / lam[-1] if lam.size > 1 and lam[-1] > 0 else 0.0
    return U[:, -1], bool(ratio < RANK_ONE_RATIO)


def _quad(V: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Row-wise ``v^H M v`` for the rows of ``V``."""
    return np.real(np.sum((V.conj() @ M) * V, axis=1))


def _pick(objs: np.ndarray, ok: np.ndarray) -> int:
    if not np.any(ok):
        return -1
    vals = np.where(ok, objs, -np.inf)
    return int(np.flatnonzero(vals == vals.max())[0])  # lowest index among ties


def randomize_weights(W_opt: np.ndarray, s_T: np.ndarray, ctx: DesignContext, J: int,
                      rng: np.random.Generator, incumbent: np.ndarray | None = None) -> RoundingOutcome:
    """Round the relaxed weight matrix to a feasible weight vector.

    Trial 0 is the dominant eigenvector; if the relaxed solution is rank one it
    is the only trial.  Every trial is scaled to ``||w||^2 = n_tx`` and rotated
    to the reference phase before the feasibility filter.
    """
    n = ctx.n_tx
    v, rank_one = _dominant(W_opt)
    trials = v[None, :]
    if not rank_one:
        trials = np.vstack([trials, _gaussian_draws(W_opt, J, rng)])
    norms = np.linalg.norm(trials, axis=1, keepdims=True)
    trials = np.sqrt(n) * trials / np.where(norms > 0, norms, 1)
    trials = _align(trials, ctx.w_ref)

    S = ctx.samples(s_T)
    psi = ctx.rx.psi_s(ctx.snapshot(s_T))
    objs = _quad(trials, psi)
    ok = np.linalg.norm(trials - ctx.w_ref, axis=1) ** 2 <= ctx.scn.controls.weight_similarity + INEQ_TOL
    for band, eta in zip(ctx.bands, ctx.etas):
        d = np.diag(i_tilde_matrix(S, band))
        ok &= (np.abs(trials) ** 2 @ d) <= eta + BAND_TOL
    k = _pick(objs, ok)
    if k < 0:
        fallback = ctx.w_ref if incumbent is None else incumbent
        return RoundingOutcome(fallback, float("nan"), len(trials), 0, rank_one, exhausted=True)
    return RoundingOutcome(trials[k], float(objs[k]), len(trials), int(ok.sum()), rank_one, winner=k)


def randomize_waveform(S_bar: np.ndarray, w: np.ndarray, ctx: DesignContext, J: int,
                       rng: np.random.Generator, incumbent: np.ndarray | None = None) -> RoundingOutcome:
    """Round the relaxed waveform matrix; each trial's blocks are rescaled to energy 1/n_tx."""
    n, L = ctx.n_tx, ctx.L
    v, rank_one = _dominant(S_bar)
    trials = v[None, :]
    if not rank_one:
        trials = np.vstack([trials, _gaussian_draws(S_bar, J, rng)])
    blocks = trials.reshape(len(trials), n, L)
    bn = np.linalg.norm(blocks, axis=2, keepdims=True)
    blocks = blocks / np.where(bn > 0, bn, 1) / np.sqrt(n)
    trials = _align(blocks.reshape(len(trials), n * L), ctx.s_ref)
    blocks = trials.reshape(len(trials), n, L)

    ok = np.all(bn[:, :, 0] > 0, axis=1)
    for m in range(n):
        inb = _quad(blocks[:, m], ctx.inband_blocks[m])
        ok &= inb >= ctx.gammas[m] / n - INEQ_TOL
    ok &= (np.linalg.norm(trials - ctx.s_ref, axis=1) ** 2
           <= ctx.scn.controls.waveform_similarity + INEQ_TOL)
    for band, eta in zip(ctx.bands, ctx.etas):
        H = h_b_matrix(w, band, L)
        ok &= _quad(trials, H) <= eta + BAND_TOL
    obj = ctx.T @ ctx.rx.psi_w(w) @ ctx.T.T
    objs = _quad(trials, obj)
    k = _pick(objs, ok)
    if k < 0:
        fallback = ctx.s_ref if incumbent is None else incumbent
        return RoundingOutcome(fallback, float("nan"), len(trials), 0, rank_one, exhausted=True)
    return RoundingOutcome(trials[k], float(objs[k]), len(trials), int(ok.sum()), rank_one, winner=k)


# --------------------------------------------------------------------- driver

@dataclass
class DesignResult:
    mode: str
    weights: np.ndarray
    waveform: WaveformSet
    sinr_linear: float
    sinr_trace_db: list[float]
    band_energies: list[float]
    band_limits: list[float]
    residuals: dict[str, float]
    feasible: bool
    seeds: dict[str, object]
    history: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    mvdr: np.ndarray | None = None
    elapsed_s: float = 0.0

    @property
    def sinr_db(self) -> float:
        return to_db(self.sinr_linear)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "sinr_db": self.sinr_db,
            "sinr_linear": self.sinr_linear,
            "sinr_trace_db": list(self.sinr_trace_db),
            "bands": [{"index": b, "energy": e, "eta": eta, "satisfied": e <= eta + BAND_TOL}
                      for b, (e, eta) in enumerate(zip(self.band_energies, self.band_limits))],
            "residuals": dict(self.residuals),
            "feasible": self.feasible,
            "seeds": self.seeds,
            "history": self.history,
            "flags": list(self.flags),
        }

    def save(self, out_dir: str | Path) -> list[Path]:
        """Write weights.csv, waveforms.csv and design.json; returns the paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        wp, sp, jp = out / "weights.csv", out / "waveforms.csv", out / "design.json"
        with open(wp, "w") as fh:
            fh.write("channel,re,im\n")
            for m, z in enumerate(self.weights):
                fh.write(f"{m},{float(z.real)!r},{float(z.imag)!r}\n")
        self.waveform.to_csv(sp)
        jp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return [wp, sp, jp]


def load_weights(path: str | Path) -> np.ndarray:
    rows = Path(path).read_text().strip().splitlines()
    if not rows or rows[0].strip() != "channel,re,im":
        raise ValueError(f"{path}: missing 'channel,re,im' header")
    try:
        vals = [tuple(float(x) for x in r.split(",")) for r in rows[1:]]
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric weight entry") from exc
    if any(len(v) != 3 for v in vals):
        raise ValueError(f"{path}: ragged weight CSV")
    return np.array([re + 1j * im for _, re, im in vals])


def seed_streams(seed: int) -> dict[str, np.random.SeedSequence]:
    """Master seed -> independent child streams, spawned in a fixed order."""
    ss = np.random.SeedSequence(seed)
    weight, waveform, monte_carlo = ss.spawn(3)
    return {"weight": weight, "waveform": waveform, "monte_carlo": monte_carlo}


def _precheck_waveform_only(ctx: DesignContext) -> None:
    """Bands fully covering a channel carry its whole energy when the weights are frozen."""
    for b, (band, eta) in enumerate(zip(ctx.bands, ctx.etas)):
        floor = sum(abs(ctx.w_ref[m]) ** 2 / ctx.n_tx for m in range(band.p_low + 1, band.p_high))
        if floor > eta:
            raise InfeasibleScenario(
                f"shared_band[{b}]: eta={eta:.6g} is below the energy floor {floor:.6g} of the "
                "channels it fully covers with the weights frozen", f"shared_band[{b}]")


def _solve_or_raise(prob: sdp.SdpProblem, what: str) -> sdp.SdpSolution:
    sol = sdp.solve(prob)
    if sol.status == "infeasible":
        raise InfeasibleScenario(f"{what} relaxation is infeasible", what)
    if sol.status != "optimal":
        log.warning("%s SDP stopped with status %s (gap %.2e)", what, sol.status, sol.duality_gap)
    return sol


def alternate(scn: ScenarioConfig, mode: str = "joint", verbatim_similarity: bool = False,
              ctx: DesignContext | None = None) -> DesignResult:
    """Alternating design from (s_ref, w_ref) with incumbent retention."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    t0 = time.perf_counter()
    ctx = ctx or DesignContext(scn, verbatim_similarity)
    ctl = scn.controls
    streams = seed_streams(ctl.rng_seed)
    rng_w = np.random.default_rng(streams["weight"])
    rng_s = np.random.default_rng(streams["waveform"])
    seeds = {"master": ctl.rng_seed,
             "spawn_keys": {k: list(v.spawn_key) for k, v in streams.items()}}

    s, w = ctx.s_ref.copy(), ctx.w_ref.astype(complex).copy()
    best = None
    if ctx.feasible(s, w):
        best = (s, w, ctx.sinr(s, w))
    history: list[dict] = [{"step": "reference", "sinr_db": to_db(ctx.sinr(s, w)),
                            "feasible": best is not None}]
    trace: list[float] = []
    flags: list[str] = []

    if mode == "waveform_only":
        _precheck_waveform_only(ctx)

    def consider(s_c, w_c, rec):
        nonlocal best
        val = ctx.sinr(s_c, w_c)
        ok = ctx.feasible(s_c, w_c)
        rec.update(sinr_db=to_db(val), feasible=ok, accepted=False)
        if ok and (best is None or val > best[2]):
            best = (s_c, w_c, val)
            rec["accepted"] = True
        history.append(rec)

    frozen_sol: dict[str, sdp.SdpSolution] = {}
    if mode != "baseline":
        for q in range(1, ctl.max_iters + 1):
            if mode in ("joint", "weight_only"):
                if mode == "joint" or "w" not in frozen_sol:
                    frozen_sol["w"] = _solve_or_raise(build_weight_sdp(s, ctx), "weight_sdp")
                sol = frozen_sol["w"]
                r = randomize_weights(sol.x_opt, s, ctx, ctl.n_randomizations, rng_w,
                                      incumbent=None if best is None else best[1])
                rec = {"step": "weight", "iteration": q, "relaxation": sol.objective_value,
                       "sdp_status": sol.status, "sdp_iterations": sol.iterations,
                       "trials": r.n_trials, "feasible_trials": r.n_feasible,
                       "rank_one": r.rank_one, "winner": r.winner}
                if r.exhausted:
                    flags.append(f"randomization exhausted (weight, q={q})")
                else:
                    w = r.vector
                consider(s, w, rec)
            if mode in ("joint", "waveform_only"):
                if mode == "joint" or "s" not in frozen_sol:
                    frozen_sol["s"] = _solve_or_raise(build_waveform_sdp(w, ctx), "waveform_sdp")
                sol = frozen_sol["s"]
                r = randomize_waveform(sol.x_opt, w, ctx, ctl.n_randomizations, rng_s,
                                       incumbent=None if best is None else best[0])
                rec = {"step": "waveform", "iteration": q, "relaxation": sol.objective_value,
                       "sdp_status": sol.status, "sdp_iterations": sol.iterations,
                       "trials": r.n_trials, "feasible_trials": r.n_feasible,
                       "rank_one": r.rank_one, "winner": r.winner}
                if r.exhausted:
                    flags.append(f"randomization exhausted (waveform, q={q})")
                else:
                    s = r.vector
                consider(s, w, rec)
            trace.append(to_db(best[2]) if best is not None else float("-inf"))

    if mode == "baseline":
        s_out, w_out = ctx.s_ref, ctx.w_ref.astype(complex)
        trace.append(to_db(ctx.sinr(s_out, w_out)))
    elif best is None:
        res = ctx.residuals(s, w)
        worst = max(res, key=lambda k: res[k])
        raise InfeasibleScenario(f"no feasible design found; most violated constraint {worst} "
                                 f"(violation {res[worst]:.3g})", worst)
    else:
        s_out, w_out = best[0], best[1]

    res = ctx.residuals(s_out, w_out)
    val = ctx.sinr(s_out, w_out)
    return DesignResult(
        mode=mode, weights=w_out, waveform=WaveformSet.from_vec_waveform(s_out, ctx.n_tx),
        sinr_linear=val, sinr_trace_db=trace,
        band_energies=[float(e) for e in ctx.band_energies(s_out, w_out)],
        band_limits=[float(e) for e in ctx.etas], residuals=res, feasible=_residuals_ok(res),
        seeds=seeds, history=history, flags=flags,
        mvdr=ctx.rx.mvdr(ctx.snapshot(s_out), w_out), elapsed_s=time.perf_counter() - t0)


def run_mode(scn: ScenarioConfig, mode: str, verbatim_similarity: bool = False) -> DesignResult:
    """Run one of ``joint``, ``waveform_only``, ``weight_only`` or ``baseline``."""
    return alternate(scn, mode, verbatim_similarity)


def evaluate_design(scn: ScenarioConfig, s_T: np.ndarray, w: np.ndarray, mode: str = "evaluate",
                    seeds: dict | None = None) -> DesignResult:
    """Recompute every reported quantity for a stored design."""
    ctx = DesignContext(scn)
    if s_T.size != ctx.n_tx * ctx.L or w.size != ctx.n_tx:
        raise ValueError(f"design shape ({w.size} weights, {s_T.size} samples) does not match "
                         f"the scenario ({ctx.n_tx}, {ctx.n_tx * ctx.L})")
    res = ctx.residuals(s_T, w)
    val = ctx.sinr(s_T, w)
    return DesignResult(
        mode=mode, weights=w, waveform=WaveformSet.from_vec_waveform(s_T, ctx.n_tx),
        sinr_linear=val, sinr_trace_db=[to_db(val)],
        band_energies=[float(e) for e in ctx.band_energies(s_T, w)],
        band_limits=[float(e) for e in ctx.etas], residuals=res, feasible=_residuals_ok(res),
        seeds=seeds or {}, mvdr=ctx.rx.mvdr(ctx.snapshot(s_T), w))
