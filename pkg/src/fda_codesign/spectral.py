"""Shared-band energy of the FDA emission and its quadratic forms.

Each channel's baseband sequence ``x`` has spectrum ``X(f) = sum_l x_l
exp(-j 2 pi f l)`` over the channel-local frequency ``f`` in cycles/sample,
occupying [0, 1) above the channel carrier.  The energy in [a, b] is
``x^H K(a, b) x`` with ``K`` the Gram matrix returned by
:func:`frequency_gram`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import ArrayConfig, BandIndexing


def frequency_gram(f_start: float, f_end: float, L: int) -> np.ndarray:
    """Gram matrix of the DTFT kernel integrated over [f_start, f_end]."""
    if f_end < f_start:
        raise ValueError(f"reversed interval [{f_start}, {f_end}]")
    k = np.subtract.outer(np.arange(L), np.arange(L)).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        K = (np.exp(2j * np.pi * f_end * k) - np.exp(2j * np.pi * f_start * k)) / (2j * np.pi * k)
    K[np.arange(L), np.arange(L)] = f_end - f_start
    return K


@dataclass(frozen=True)
class FrequencyGram:
    k_low: np.ndarray
    k_high: np.ndarray
    k_span: np.ndarray


def _clip(f: float) -> float:
    # the sampled sequence only occupies one period of its DTFT
    return min(max(f, 0.0), 1.0)


def band_grams(band: BandIndexing, L: int) -> FrequencyGram:
    lo, hi = _clip(band.local_low), _clip(band.local_high)
    return FrequencyGram(
        k_low=frequency_gram(lo, 1.0, L),
        k_high=frequency_gram(0.0, hi, L),
        k_span=frequency_gram(lo, max(lo, hi), L),
    )


def _band_segments(band: BandIndexing) -> list[tuple[int, float, float]]:
    """(channel, local start, local end) pieces covered by the band."""
    lo, hi = _clip(band.local_low), _clip(band.local_high)
    if band.p_low == band.p_high:
        return [(band.p_low, lo, max(lo, hi))]
    segs = [(band.p_low, lo, 1.0)]
    segs += [(m, 0.0, 1.0) for m in range(band.p_low + 1, band.p_high)]
    segs.append((band.p_high, 0.0, hi))
    return segs


def _segment_energy(x: np.ndarray, a: float, b: float) -> float:
    """Integral of |X(f)|^2 over [a, b] via the autocorrelation sequence."""
    L = x.size
    r = np.correlate(x, x, mode="full")  # r[L-1+tau] = sum_k x[k+tau] conj(x[k])
    tau = np.arange(-(L - 1), L)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (np.exp(-2j * np.pi * b * tau) - np.exp(-2j * np.pi * a * tau)) / (-2j * np.pi * tau)
    g[L - 1] = b - a
    return float(np.real(np.sum(r * g)))


def band_energy(S: np.ndarray, w: np.ndarray, band: BandIndexing) -> float:
    """Energy radiated into the band, evaluated segment by segment."""
    S = np.asarray(S)
    w = np.asarray(w)
    return float(sum(abs(w[m]) ** 2 * _segment_energy(S[m], a, b)
                     for m, a, b in _band_segments(band)))


def i_tilde_matrix(S: np.ndarray, band: BandIndexing) -> np.ndarray:
    """Diagonal form with ``band_energy = w^H I w`` for fixed waveforms ``S``."""
    S = np.asarray(S)
    n_tx, L = S.shape
    d = np.zeros(n_tx)
    for m, a, b in _band_segments(band):
        x = S[m]
        d[m] += np.real(x.conj() @ frequency_gram(a, b, L) @ x)
    return np.diag(d)


def h_b_matrix(w: np.ndarray, band: BandIndexing, L: int) -> np.ndarray:
    """Block-diagonal form with ``band_energy = s_T^H H s_T`` for fixed weights."""
    w = np.asarray(w)
    n_tx = w.size
    H = np.zeros((n_tx * L, n_tx * L), dtype=complex)
    for m, a, b in _band_segments(band):
        sl = slice(m * L, (m + 1) * L)
        H[sl, sl] += abs(w[m]) ** 2 * frequency_gram(a, b, L)
    return H


def esd_curve(S: np.ndarray, w: np.ndarray, cfg: ArrayConfig, n_grid: int = 1024):
    """Energy spectral density over the total FDA band.

    Returns ``(freq, esd, channel)`` where ``freq`` is the global normalized
    frequency in [0, 1), ``esd`` the density per unit of channel-local
    frequency and ``channel`` the 0-based channel index of each sample.
    Each channel contributes ``n_grid`` uniform samples of its local span
    (right edge excluded).
    """
    if n_grid < 64:
        raise ValueError("n_grid must be >= 64 per channel")
    S = np.asarray(S)
    n_tx, L = S.shape
    span = cfg.channel_span
    f_loc = np.arange(n_grid) * span / n_grid
    kern = np.exp(-2j * np.pi * np.outer(f_loc, np.arange(L)))
    freqs, vals, chans = [], [], []
    for m in range(n_tx):
        spec = np.abs(w[m] * (kern @ S[m])) ** 2
        spec[f_loc >= 1.0] = 0.0
        freqs.append((m + f_loc / span) / n_tx)
        vals.append(spec)
        chans.append(np.full(n_grid, m))
    return np.concatenate(freqs), np.concatenate(vals), np.concatenate(chans)


def esd_band_energy(S: np.ndarray, w: np.ndarray, band: BandIndexing, n_grid: int = 4096) -> float:
    """Band energy by trapezoidal quadrature of the per-channel ESD."""
    S = np.asarray(S)
    total = 0.0
    for m, a, b in _band_segments(band):
        if b <= a:
            continue
        n = max(int(np.ceil(n_grid * (b - a))), 8) + 1
        f = np.linspace(a, b, n)
        spec = np.abs(w[m] * (np.exp(-2j * np.pi * np.outer(f, np.arange(S.shape[1]))) @ S[m])) ** 2
        total += np.trapezoid(spec, f)
    return float(total)


def write_esd_csv(path: str | Path, freq, esd, chan) -> None:
    peak = np.max(esd) if np.max(esd) > 0 else 1.0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["global_normalized_freq", "esd_value", "channel_index", "esd_db_norm"])
        for f, e, c in zip(freq, esd, chan):
            db = 10 * np.log10(e / peak) if e > 0 else -300.0
            wr.writerow([f"{f:.10f}", repr(float(e)), int(c), f"{db:.6f}"])
