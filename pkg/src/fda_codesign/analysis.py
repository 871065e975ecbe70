"""Post-design evaluation: autocorrelation, receive beampattern, interference
spectrum and the on-disk report."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .codesign import DesignResult
from .interference import CovarianceModel, scenario_qbar
from .receiver import to_db
from .scenario import ArrayConfig, ScenarioConfig
from .signal_model import rx_steering, tx_steering_range_angle
from .spectral import esd_band_energy, esd_curve, write_esd_csv

SCHEMA_VERSION = 1
_ZERO = 1e-15


@dataclass(frozen=True)
class AcfReport:
    lags: np.ndarray
    acf_db: np.ndarray
    psl_db: float
    mainlobe_halfwidth: int


def acf(S: np.ndarray, m: int) -> AcfReport:
    """Normalized autocorrelation of waveform ``m`` and its peak sidelobe level.

    Lags up to the first local minimum of ``|r|`` (walking outwards from lag 0)
    form the mainlobe and are excluded from the PSL.
    """
    x = np.asarray(S)[m]
    L = x.size
    r = np.correlate(x, x, mode="full")  # index L-1+tau
    mag = np.abs(r) / abs(r[L - 1])
    mag[mag < _ZERO] = 0.0
    right = mag[L - 1:]
    k = 1
    while k < L - 1 and right[k + 1] < right[k]:
        k += 1
    side = right[k:] if L > 1 else np.zeros(0)
    peak = side.max() if side.size else 0.0
    with np.errstate(divide="ignore"):
        acf_db = 20 * np.log10(mag)
    return AcfReport(np.arange(-(L - 1), L), acf_db,
                     float(20 * np.log10(peak)) if peak > 0 else float("-inf"), k)


def receive_beampattern(v: np.ndarray, s: np.ndarray, w: np.ndarray, cfg: ArrayConfig,
                        range_m: float, theta_grid) -> np.ndarray:
    """``|v^H A(theta) s|^2`` over the grid with the receiver held fixed.

    ``s`` is the snapshot-major waveform vector and ``v`` the stacked receive
    weights (receiver-major within each snapshot).
    """
    theta_grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    S = np.asarray(s).reshape(cfg.n_samples, cfg.n_tx)  # (L, n_tx)
    V = np.asarray(v).reshape(cfg.n_samples, cfg.n_rx, cfg.n_tx)
    G = np.einsum("lnm,lm->nm", V.conj(), S)
    out = np.empty(theta_grid.size)
    for i, th in enumerate(theta_grid):
        b = rx_steering(th, cfg)
        a = np.asarray(w) * tx_steering_range_angle(range_m, th, cfg)
        out[i] = abs(b @ G @ a) ** 2
    return out


def interference_spectrum(qbar, theta_grid, cfg: ArrayConfig) -> np.ndarray:
    """``u^H Q^-1 u`` with ``u = b_R(theta) ⊗ e_m`` on one snapshot; shape (n_tx, n_theta).

    Low values mark where interference lives.
    """
    Q = qbar.single_snapshot if isinstance(qbar, CovarianceModel) else np.asarray(qbar)
    theta_grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    fac = cho_factor(Q)
    out = np.empty((cfg.n_tx, theta_grid.size))
    eye = np.eye(cfg.n_tx)
    for j, th in enumerate(theta_grid):
        U = np.kron(rx_steering(th, cfg)[:, None], eye)  # column m is b ⊗ e_m
        out[:, j] = np.real(np.einsum("im,im->m", U.conj(), cho_solve(fac, U)))
    return out


# ---------------------------------------------------------------------- report

def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, np.generic):
        return _finite(x.item())
    return x


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def _db(x: float, ref: float) -> str:
    return f"{10 * np.log10(x / ref):.6f}" if x > 0 else "-300.000000"


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def report(result: DesignResult, scn: ScenarioConfig, out_dir, manifest: dict | None = None,
           extra: dict | None = None, theta_step: float = 0.1, esd_grid: int = 1024) -> dict:
    """Write the CSV exports and summary.json into ``out_dir``; returns the summary."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    cfg = scn.array
    S = result.waveform.samples
    w = result.weights
    s = result.waveform.vec_snapshot
    files: list[Path] = []
    try:
        # design itself
        wp = out / "weights.csv"
        _write_rows(wp, ["channel", "re", "im"],
                    [[m, repr(float(z.real)), repr(float(z.imag))] for m, z in enumerate(w)])
        sp = out / "waveforms.csv"
        result.waveform.to_csv(sp)
        files += [wp, sp]

        f, e, c = esd_curve(S, w, cfg, n_grid=esd_grid)
        ep = out / "esd.csv"
        write_esd_csv(ep, f, e, c)
        files.append(ep)

        acfs = [acf(S, m) for m in range(cfg.n_tx)]
        ap = out / "acf.csv"
        _write_rows(ap, ["lag"] + [f"acf_db_ch{m}" for m in range(cfg.n_tx)],
                    [[int(lag)] + [f"{a.acf_db[i]:.6f}" if np.isfinite(a.acf_db[i]) else "-300.000000"
                                   for a in acfs]
                     for i, lag in enumerate(acfs[0].lags)])
        files.append(ap)

        grid = np.round(np.arange(-90.0, 90.0 + theta_step / 2, theta_step), 10)
        bp = receive_beampattern(result.mvdr, s, w, cfg, scn.target.range_m, grid)
        peak = bp.max()
        bpp = out / "beampattern.csv"
        _write_rows(bpp, ["theta_deg", "power", "power_db_norm"],
                    [[f"{t:.4f}", repr(float(p)), _db(p, peak)] for t, p in zip(grid, bp)])
        files.append(bpp)

        qbar = scenario_qbar(scn)
        sgrid = np.round(np.arange(-90.0, 90.0 + 0.25, 0.5), 10)
        spec = interference_spectrum(qbar, sgrid, cfg)
        smax = spec.max()
        spp = out / "spectrum.csv"
        _write_rows(spp, ["channel", "theta_deg", "value", "value_db_norm"],
                    [[m, f"{t:.4f}", repr(float(spec[m, j])), _db(spec[m, j], smax)]
                     for m in range(cfg.n_tx) for j, t in enumerate(sgrid)])
        files.append(spp)
    except OSError as exc:
        raise OSError(f"failed writing report in {out}: {exc}") from exc

    at_target = receive_beampattern(result.mvdr, s, w, cfg, scn.target.range_m,
                                    [scn.target.angle_deg])[0]
    intf_levels = {f"{i.angle_deg:g}": to_db(receive_beampattern(
        result.mvdr, s, w, cfg, scn.target.range_m, [i.angle_deg])[0] / peak)
        for i in scn.interferers}
    bands = []
    for b, (spec_b, idx) in enumerate(zip(scn.shared_bands, scn.band_indexing)):
        bands.append({
            "index": b, "f_low": spec_b.f_low, "f_high": spec_b.f_high, "eta": spec_b.eta,
            "energy": result.band_energies[b],
            "energy_quadrature": esd_band_energy(S, w, idx, n_grid=4096),
            "case": idx.case,
            "satisfied": result.band_energies[b] <= spec_b.eta + 1e-8,
        })
    summary = {
        "schema": SCHEMA_VERSION,
        "mode": result.mode,
        "sinr_db": result.sinr_db,
        "sinr_linear": result.sinr_linear,
        "sinr_trace_db": result.sinr_trace_db,
        "feasible": result.feasible,
        "bands": bands,
        "residuals": result.residuals,
        "seeds": result.seeds,
        "flags": result.flags,
        "history": result.history,
        "psl_db": [a.psl_db for a in acfs],
        "acf_mainlobe_rule": "lags up to the first local minimum of |r| are excluded",
        "beampattern": {"peak_theta_deg": float(grid[int(np.argmax(bp))]),
                        "target_gain": float(at_target),
                        "interferer_levels_db": intf_levels},
        "manifest": manifest or {},
        "files": {p.name: sha256(p) for p in files},
    }
    if extra:
        summary.update(extra)
    summary = _finite(summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
