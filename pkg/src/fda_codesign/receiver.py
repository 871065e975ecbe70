"""Stacked receive operators, MVDR weights and the SINR quadratic kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .interference import DEFAULT_MAX_DIM, CovarianceModel
from .scenario import ArrayConfig, ScenarioConfig
from .signal_model import rx_steering, tx_steering_range_angle


def _qmat(qbar) -> np.ndarray:
    return qbar.full if isinstance(qbar, CovarianceModel) else np.asarray(qbar)


def build_a_of_w(r: float, theta_deg: float, w: np.ndarray, cfg: ArrayConfig) -> np.ndarray:
    """Receive operator acting on the snapshot-major waveform vector."""
    w = np.asarray(w)
    if w.shape != (cfg.n_tx,):
        raise ValueError(f"weights must have shape ({cfg.n_tx},), got {w.shape}")
    block = np.kron(rx_steering(theta_deg, cfg)[:, None],
                    np.diag(w * tx_steering_range_angle(r, theta_deg, cfg)))
    return np.kron(np.eye(cfg.n_samples), block)


def build_a_of_s(r: float, theta_deg: float, s: np.ndarray, cfg: ArrayConfig) -> np.ndarray:
    """Receive operator acting on the weights, for snapshot-major waveforms ``s``."""
    s = np.asarray(s)
    if s.shape != (cfg.n_tx * cfg.n_samples,):
        raise ValueError(f"waveform vector must have length {cfg.n_tx * cfg.n_samples}")
    b = rx_steering(theta_deg, cfg)
    a = tx_steering_range_angle(r, theta_deg, cfg)
    S = s.reshape(cfg.n_samples, cfg.n_tx)  # row l is snapshot s(l)
    return np.concatenate([np.kron(b[:, None], np.diag(S[l] * a)) for l in range(cfg.n_samples)])


def mvdr_weights(u: np.ndarray, qbar) -> np.ndarray:
    """Distortionless minimum-variance weights for signature ``u``."""
    q_inv_u = cho_solve(cho_factor(_qmat(qbar)), u)
    return q_inv_u / np.vdot(u, q_inv_u)


@dataclass
class SinrKernels:
    psi_w: np.ndarray | None
    psi_s: np.ndarray | None
    mvdr: np.ndarray | None
    sinr_linear: float | None


def _herm(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


class ReceiverModel:
    """SINR machinery for one scenario with the covariance factored once.

    SINR values include the SNR prefactor; the kernels ``psi_w``/``psi_s``
    do not.
    """

    def __init__(self, cfg: ArrayConfig, qbar, r: float, theta_deg: float, snr: float = 1.0,
                 max_dim: int = DEFAULT_MAX_DIM):
        self.cfg = cfg
        self.r, self.theta = r, theta_deg
        self.snr = snr
        Q = _qmat(qbar)
        if Q.shape[0] > max_dim:
            raise MemoryError(f"covariance order {Q.shape[0]} exceeds the cap {max_dim}")
        self.qbar = Q
        self._chol = cho_factor(Q)

    @classmethod
    def for_scenario(cls, scn: ScenarioConfig, qbar=None) -> "ReceiverModel":
        from .interference import scenario_qbar

        if qbar is None:
            qbar = scenario_qbar(scn)
        return cls(scn.array, qbar, scn.target.range_m, scn.target.angle_deg, scn.target.snr)

    def solve(self, B: np.ndarray) -> np.ndarray:
        return cho_solve(self._chol, B)

    def a_of_w(self, w: np.ndarray, theta_deg: float | None = None) -> np.ndarray:
        return build_a_of_w(self.r, self.theta if theta_deg is None else theta_deg, w, self.cfg)

    def a_of_s(self, s: np.ndarray) -> np.ndarray:
        return build_a_of_s(self.r, self.theta, s, self.cfg)

    def psi_w(self, w: np.ndarray) -> np.ndarray:
        A = self.a_of_w(w)
        return _herm(A.conj().T @ self.solve(A))

    def psi_s(self, s: np.ndarray) -> np.ndarray:
        A = self.a_of_s(s)
        return _herm(A.conj().T @ self.solve(A))

    def mvdr(self, s: np.ndarray, w: np.ndarray) -> np.ndarray:
        u = self.a_of_w(w) @ s
        q_inv_u = self.solve(u)
        return q_inv_u / np.vdot(u, q_inv_u)

    def sinr(self, s: np.ndarray, w: np.ndarray) -> float:
        u = self.a_of_w(w) @ s
        return float(self.snr * np.vdot(u, self.solve(u)).real)

    def sinr_with(self, v: np.ndarray, s: np.ndarray, w: np.ndarray) -> float:
        """Output SINR of an arbitrary receive weight vector ``v``."""
        u = self.a_of_w(w) @ s
        return float(self.snr * abs(np.vdot(v, u)) ** 2 / np.vdot(v, self.qbar @ v).real)

    def kernels(self, s: np.ndarray | None = None, w: np.ndarray | None = None) -> SinrKernels:
        psi_w = self.psi_w(w) if w is not None else None
        psi_s = self.psi_s(s) if s is not None else None
        if s is not None and w is not None:
            return SinrKernels(psi_w, psi_s, self.mvdr(s, w), self.sinr(s, w))
        return SinrKernels(psi_w, psi_s, None, None)


def sinr(s: np.ndarray, w: np.ndarray, cfg: ArrayConfig, qbar, snr: float,
         r: float, theta_deg: float) -> float:
    """Output SINR (linear, including the SNR prefactor) of the MVDR receiver."""
    return ReceiverModel(cfg, qbar, r, theta_deg, snr).sinr(s, w)


def sinr_kernels(cfg: ArrayConfig, qbar, r: float, theta_deg: float,
                 s: np.ndarray | None = None, w: np.ndarray | None = None) -> SinrKernels:
    return ReceiverModel(cfg, qbar, r, theta_deg).kernels(s=s, w=w)


def to_db(x: float) -> float:
    return float(10 * np.log10(x)) if x > 0 else float("-inf")
