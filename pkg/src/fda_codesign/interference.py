"""Channelized interference statistics for the mixing/low-pass FDA receiver.

Per-snapshot receive vectors are ordered receiver-major: index ``n*n_tx + m``
for receive element ``n`` and channel ``m`` (the column stacking of the
``n_tx x n_rx`` filtered output matrix).  The full covariance stacks ``L``
snapshots.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .scenario import ArrayConfig, InterfererSpec, ScenarioConfig
from .signal_model import rx_steering

log = logging.getLogger(__name__)

DEFAULT_MAX_DIM = 4096


@dataclass(frozen=True)
class ChannelPowers:
    powers: np.ndarray
    out_of_band: bool = False


@dataclass(frozen=True)
class CovarianceModel:
    per_interferer: list[np.ndarray]
    full: np.ndarray
    noise_power: float
    snapshot_dim: int

    @property
    def single_snapshot(self) -> np.ndarray:
        """Interference-plus-noise covariance of one snapshot, noise-normalized."""
        return self.full[:self.snapshot_dim, :self.snapshot_dim]


def channel_powers(intf: InterfererSpec, cfg: ArrayConfig, noise_power: float = 1.0) -> ChannelPowers:
    """Power the tone deposits in each channel under ideal channel filters."""
    p = np.zeros(cfg.n_tx)
    half = cfg.sample_rate_hz / 2
    offs = intf.freq_hz - cfg.channel_freqs
    hit = np.flatnonzero((offs >= -half) & (offs < half))
    if hit.size == 0:
        log.warning("interferer at %.6g Hz lies outside every channel band", intf.freq_hz)
        return ChannelPowers(p, out_of_band=True)
    p[hit[0]] = noise_power * 10 ** (intf.inr_db / 10)
    return ChannelPowers(p)


def q_block(intf: InterfererSpec, cfg: ArrayConfig, noise_power: float = 1.0,
            strict: bool = False, target_angle_deg: float | None = None) -> np.ndarray:
    """Single-snapshot covariance of one interferer at the receiver output.

    The default is the expectation of ``(b_R ⊗ z)(b_R ⊗ z)^H`` in the
    receiver-major snapshot ordering, i.e. ``(b b^H) ⊗ diag(P)``.  With
    ``strict=True`` the literal printed form ``diag(P) ⊗ b(θ_i) b(θ_t)^H`` is
    returned instead (not Hermitian unless θ_i = θ_t); it is kept only for
    comparison.
    """
    P = np.diag(channel_powers(intf, cfg, noise_power).powers)
    b_i = rx_steering(intf.angle_deg, cfg)
    if strict:
        if target_angle_deg is None:
            raise ValueError("strict mode needs the target angle")
        return np.kron(P, np.outer(b_i, rx_steering(target_angle_deg, cfg).conj()))
    return np.kron(np.outer(b_i, b_i.conj()), P)


def assemble_qbar(interferers, cfg: ArrayConfig, noise_power: float = 1.0,
                  max_dim: int = DEFAULT_MAX_DIM) -> CovarianceModel:
    """Noise-normalized interference-plus-noise covariance over L snapshots."""
    n = cfg.n_tx * cfg.n_rx
    dim = n * cfg.n_samples
    if dim > max_dim:
        raise MemoryError(f"covariance order {dim} exceeds the cap {max_dim}; "
                          "reduce n_tx*n_rx*n_samples or raise max_dim")
    blocks = [q_block(i, cfg, noise_power) for i in interferers]
    Q = sum(blocks, np.zeros((n, n), dtype=complex)) / noise_power
    full = np.kron(np.ones((cfg.n_samples, cfg.n_samples)), Q) + np.eye(dim)
    full = 0.5 * (full + full.conj().T)
    return CovarianceModel(blocks, full, noise_power, n)


def scenario_qbar(scn: ScenarioConfig, max_dim: int = DEFAULT_MAX_DIM) -> CovarianceModel:
    return assemble_qbar(scn.interferers, scn.array, scn.target.noise_power, max_dim)


def simulate_interferer_channels(intf: InterfererSpec | None, cfg: ArrayConfig, n_trials: int,
                                 seed: int | np.random.SeedSequence = 0, kind: str = "tone",
                                 noise_power: float = 1.0, oversample: int = 4,
                                 n_fft: int | None = None, chunk: int = 2000) -> np.ndarray:
    """Monte-Carlo cross-channel covariance of a filtered interferer.

    Each trial draws an independent realization of the interferer (a tone with
    uniform random phase, or band-limited white noise over the whole FDA band
    for ``kind="white"``), mixes it down by every channel carrier, applies an
    ideal low-pass of cutoff ``lp_cutoff * sample_rate`` and keeps the channel
    outputs at the centre sample.  Returns the ``n_tx x n_tx`` sample
    covariance.  ``intf`` is only used for its frequency and INR; ``None``
    (or ``kind="zero"``) gives a zero input.
    """
    if n_trials < 100:
        raise ValueError("n_trials must be >= 100")
    n_tx = cfg.n_tx
    step = max(cfg.delta_f_hz, cfg.sample_rate_hz)
    span = n_tx * step
    fs_sim = oversample * span
    if n_fft is None:
        n_fft = 16 * oversample * n_tx  # bins on a step/16 grid
    # simulation band centred on the channel grid
    f_ref = cfg.carrier_hz + (n_tx - 1) * cfg.delta_f_hz / 2
    t = np.arange(n_fft) / fs_sim
    freqs = np.fft.fftfreq(n_fft, 1 / fs_sim)
    mixers = np.exp(-2j * np.pi * np.outer(cfg.channel_freqs - f_ref, t))  # (n_tx, n_fft)
    masks = np.abs(freqs)[None, :] <= (np.asarray(cfg.lp_cutoff) * cfg.sample_rate_hz)[:, None]
    mid = n_fft // 2

    if intf is None:
        kind = "zero"
    if kind == "zero":
        power = 0.0
    else:
        power = noise_power * 10 ** (intf.inr_db / 10)
    rng = np.random.default_rng(seed)
    acc = np.zeros((n_tx, n_tx), dtype=complex)
    done = 0
    while done < n_trials:
        n = min(chunk, n_trials - done)
        if kind == "tone":
            phase = rng.uniform(0, 2 * np.pi, size=(n, 1))
            z = np.sqrt(power) * np.exp(1j * (2 * np.pi * (intf.freq_hz - f_ref) * t[None, :] + phase))
        elif kind == "white":
            z = np.sqrt(power / 2) * (rng.standard_normal((n, n_fft))
                                      + 1j * rng.standard_normal((n, n_fft)))
            # restrict to the FDA band
            Zf = np.fft.fft(z, axis=1)
            Zf[:, np.abs(freqs) > span / 2] = 0
            z = np.fft.ifft(Zf, axis=1) * np.sqrt(oversample)
        elif kind == "zero":
            z = np.zeros((n, n_fft), dtype=complex)
        else:
            raise ValueError(f"unknown interferer kind {kind!r}")
        out = np.empty((n, n_tx), dtype=complex)
        for m in range(n_tx):
            y = np.fft.ifft(np.fft.fft(z * mixers[m], axis=1) * masks[m], axis=1)
            out[:, m] = y[:, mid]
        acc += out.T @ out.conj()
        done += n
    return acc / n_trials
