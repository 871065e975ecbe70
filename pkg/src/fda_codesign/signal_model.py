"""Steering vectors, waveform containers and the structural matrices of the design.

Channel indices are 0-based.  A waveform set ``S`` has shape ``(n_tx, L)``;
``vec_snapshot`` stacks its columns (snapshot-major, index ``l*n_tx + m``) and
``vec_waveform`` stacks its rows (waveform-major, index ``m*L + l``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .scenario import SPEED_OF_LIGHT, ArrayConfig


def _ula(n: int, step_cycles: float) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(n) * step_cycles)


def tx_steering_angle(theta_deg: float, cfg: ArrayConfig) -> np.ndarray:
    return _ula(cfg.n_tx, cfg.d_tx * np.sin(np.deg2rad(theta_deg)) / cfg.wavelength)


def tx_steering_range_angle(r: float, theta_deg: float, cfg: ArrayConfig) -> np.ndarray:
    """Range-angle dependent transmit steering vector of the FDA."""
    step = cfg.d_tx * np.sin(np.deg2rad(theta_deg)) / cfg.wavelength
    step -= 2 * cfg.delta_f_hz * r / SPEED_OF_LIGHT
    return _ula(cfg.n_tx, step)


def rx_steering(theta_deg: float, cfg: ArrayConfig) -> np.ndarray:
    return _ula(cfg.n_rx, cfg.d_rx * np.sin(np.deg2rad(theta_deg)) / cfg.wavelength)


def commutation_matrix(n_tx: int, L: int) -> np.ndarray:
    """Permutation T with ``T @ vec_snapshot(S) == vec_waveform(S)``."""
    n = n_tx * L
    T = np.zeros((n, n))
    m, l = np.divmod(np.arange(n), L)  # waveform-major row index -> (m, l)
    T[np.arange(n), l * n_tx + m] = 1.0
    return T


def energy_selector(m: int, cfg: ArrayConfig) -> np.ndarray:
    """Diagonal 0/1 selector of waveform ``m`` in waveform-major order."""
    if not 0 <= m < cfg.n_tx:
        raise IndexError(f"channel index {m} out of range [0, {cfg.n_tx})")
    L = cfg.n_samples
    d = np.zeros(cfg.n_tx * L)
    d[m * L:(m + 1) * L] = 1.0
    return np.diag(d)


def lowpass_gram(cutoff: float, L: int) -> np.ndarray:
    """L x L Gram of the DTFT kernel over [0, cutoff] cycles/sample."""
    k = np.subtract.outer(np.arange(L), np.arange(L)).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        G = (np.exp(2j * np.pi * cutoff * k) - 1) / (2j * np.pi * k)
    G[np.arange(L), np.arange(L)] = cutoff
    return G


def block_diag_at(block: np.ndarray, m: int, n_blocks: int) -> np.ndarray:
    L = block.shape[0]
    out = np.zeros((n_blocks * L, n_blocks * L), dtype=block.dtype)
    out[m * L:(m + 1) * L, m * L:(m + 1) * L] = block
    return out


def bandwidth_gram(m: int, cfg: ArrayConfig) -> np.ndarray:
    """Block-diagonal in-band energy form for waveform ``m``."""
    if not 0 <= m < cfg.n_tx:
        raise IndexError(f"channel index {m} out of range [0, {cfg.n_tx})")
    return block_diag_at(lowpass_gram(cfg.lp_cutoff[m], cfg.n_samples), m, cfg.n_tx)


@dataclass(frozen=True)
class WaveformSet:
    samples: np.ndarray  # (n_tx, L) complex

    def __post_init__(self):
        S = np.asarray(self.samples, dtype=complex)
        if S.ndim != 2:
            raise ValueError("waveform samples must be a 2-D (n_tx, L) array")
        object.__setattr__(self, "samples", S)

    @classmethod
    def from_vec_waveform(cls, s_T: np.ndarray, n_tx: int) -> "WaveformSet":
        return cls(np.asarray(s_T).reshape(n_tx, -1))

    @classmethod
    def from_vec_snapshot(cls, s: np.ndarray, n_tx: int) -> "WaveformSet":
        return cls(np.asarray(s).reshape(-1, n_tx).T)

    @property
    def n_tx(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def vec_snapshot(self) -> np.ndarray:
        return self.samples.flatten(order="F")

    @property
    def vec_waveform(self) -> np.ndarray:
        return self.samples.flatten(order="C")

    @property
    def energies(self) -> np.ndarray:
        return np.sum(np.abs(self.samples) ** 2, axis=1)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"{p}{l}" for l in range(self.n_samples) for p in ("re", "im")])
            for row in self.samples:
                writer.writerow([repr(float(x)) for z in row for x in (z.real, z.imag)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "WaveformSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2 or len(rows[0]) % 2:
            raise ValueError(f"{path}: malformed waveform CSV")
        try:
            vals = np.array([[float(x) for x in r] for r in rows[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric waveform entry") from exc
        if vals.shape[1] != len(rows[0]):
            raise ValueError(f"{path}: ragged waveform CSV")
        return cls(vals[:, 0::2] + 1j * vals[:, 1::2])


def lfm_row(L: int, f_start: float, f_stop: float) -> np.ndarray:
    """Unit-modulus linear chirp sweeping [f_start, f_stop] cycles/sample."""
    l = np.arange(L)
    rate = (f_stop - f_start) / L
    return np.exp(2j * np.pi * (f_start * l + 0.5 * rate * l**2))


def inband_fraction(row: np.ndarray, cutoff: float) -> float:
    x = np.asarray(row)
    return float(np.real(x.conj() @ lowpass_gram(cutoff, x.size) @ x) / np.vdot(x, x).real)


def reference_lfm(cfg: ArrayConfig, sweep_fraction: float | None = None) -> WaveformSet:
    """Identical LFM on every channel with per-waveform energy 1/n_tx.

    The chirp sweeps a centred fraction of [0, lp_cutoff].  With
    ``sweep_fraction=None`` the widest fraction (in steps of 0.01) meeting
    every channel's in-band tolerance is used.
    """
    L, n = cfg.n_samples, cfg.n_tx
    rows = []
    for m in range(n):
        fc = cfg.lp_cutoff[m]
        fracs = [sweep_fraction] if sweep_fraction is not None else np.arange(100, -1, -1) / 100
        for a in fracs:
            row = lfm_row(L, fc * (1 - a) / 2, fc * (1 + a) / 2)
            if sweep_fraction is not None or inband_fraction(row, fc) >= cfg.inband_tolerance[m]:
                break
        rows.append(row)
    return WaveformSet(np.array(rows) / np.sqrt(n * L))


def reference_sweep_fraction(cfg: ArrayConfig, m: int = 0) -> float:
    """Sweep fraction selected by :func:`reference_lfm` for channel ``m``."""
    fc = cfg.lp_cutoff[m]
    for a in np.arange(100, -1, -1) / 100:
        if inband_fraction(lfm_row(cfg.n_samples, fc * (1 - a) / 2, fc * (1 + a) / 2), fc) \
                >= cfg.inband_tolerance[m]:
            return float(a)
    return 0.0


@dataclass(frozen=True)
class StructuralMatrices:
    cfg: ArrayConfig

    @cached_property
    def commutation(self) -> np.ndarray:
        return commutation_matrix(self.cfg.n_tx, self.cfg.n_samples)

    @cached_property
    def energy_selectors(self) -> list[np.ndarray]:
        return [energy_selector(m, self.cfg) for m in range(self.cfg.n_tx)]

    @cached_property
    def bandwidth_grams(self) -> list[np.ndarray]:
        return [bandwidth_gram(m, self.cfg) for m in range(self.cfg.n_tx)]

    @cached_property
    def reference_waveform(self) -> np.ndarray:
        return reference_lfm(self.cfg).vec_waveform

    @property
    def reference_weights(self) -> np.ndarray:
        return self.cfg.w_ref
