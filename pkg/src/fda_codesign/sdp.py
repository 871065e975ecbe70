"""Primal-dual interior-point solver for trace-constrained SDPs.

Solves::

    maximize    Tr(C X)
    subject to  Tr(A_i X) == b_i,  Tr(A_i X) <= b_i,  Tr(A_i X) >= b_i,  X >= 0

for Hermitian data.  Complex problems are mapped to real symmetric ones with
``H -> [[Re H, -Im H], [Im H, Re H]]``, under which ``Tr(A X)`` becomes
``Tr(A_r X_r) / 2``.  The real problem is solved with an infeasible-start
path-following method using the HKM search direction and a Mehrotra
predictor-corrector; inequality rows get their own nonnegative slack.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, eigh, solve_triangular

log = logging.getLogger(__name__)

_DENSE_FRACTION = 0.6


@dataclass
class SdpProblem:
    objective: np.ndarray
    eq_constraints: list[tuple[np.ndarray, float]] = field(default_factory=list)
    le_constraints: list[tuple[np.ndarray, float]] = field(default_factory=list)
    ge_constraints: list[tuple[np.ndarray, float]] = field(default_factory=list)
    names: dict[tuple[str, int], str] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.objective.shape[0]

    def rows(self):
        """Constraint rows as ``(kind, index, A, b)``."""
        for kind, lst in (("eq", self.eq_constraints), ("le", self.le_constraints),
                          ("ge", self.ge_constraints)):
            for k, (A, b) in enumerate(lst):
                yield kind, k, A, b

    def row_name(self, kind: str, k: int) -> str:
        return self.names.get((kind, k), f"{kind}[{k}]")

    def validate(self, herm_tol: float = 1e-9) -> None:
        n = self.dim
        mats = [self.objective] + [A for _, _, A, _ in self.rows()]
        for M in mats:
            if M.shape != (n, n):
                raise ValueError(f"constraint matrix of shape {M.shape}, expected {(n, n)}")
            if np.max(np.abs(M - M.conj().T), initial=0.0) > herm_tol * max(1.0, np.max(np.abs(M))):
                raise ValueError("SDP data must be Hermitian")
        # a cheap sufficient test: some simple combination of bounding rows is PD
        eq = [a for a, _ in self.eq_constraints]
        le = [a for a, _ in self.le_constraints]
        zero = np.zeros((n, n))
        cands = eq + [-a for a in eq] + le + [sum(eq, zero), sum(eq + le, zero)]
        if not any(np.linalg.eigvalsh(0.5 * (C + C.conj().T))[0] > 0 for C in cands):
            raise ValueError("no constraint bounds Tr(X); the problem may be unbounded")

    def residuals(self, X: np.ndarray) -> dict[str, float]:
        """Constraint violations of ``X`` (positive = violated)."""
        out = {}
        for kind, k, A, b in self.rows():
            v = float(np.real(np.sum(A.T * X)))
            viol = abs(v - b) if kind == "eq" else (v - b if kind == "le" else b - v)
            out[self.row_name(kind, k)] = viol
        return out


@dataclass
class SdpSolution:
    x_opt: np.ndarray
    objective_value: float
    duality_gap: float
    status: str  # "optimal" | "infeasible" | "max_iter"
    iterations: int = 0
    primal_infeasibility: float = 0.0
    dual_infeasibility: float = 0.0
    dual_objective: float = float("nan")
    certificate: np.ndarray | None = None


def hermitian_to_real_embedding(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H)
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(H), initial=0.0)):
        raise ValueError("input is not Hermitian")
    R, I = H.real, H.imag
    return np.block([[R, -I], [I, R]])


def real_embedding_to_hermitian(X: np.ndarray) -> np.ndarray:
    """Inverse of the embedding; averages the two copies for non-structured input."""
    n = X.shape[0] // 2
    A, B, C, D = X[:n, :n], X[:n, n:], X[n:, :n], X[n:, n:]
    return 0.5 * (A + D) + 0.5j * (C - B)


class _Row:
    __slots__ = ("A", "sub", "idx", "dense", "b", "g")

    def __init__(self, A: np.ndarray, b: float, g: float):
        self.A = A
        self.b = b
        self.g = g
        nz = np.flatnonzero(np.any(A != 0, axis=0) | np.any(A != 0, axis=1))
        self.dense = nz.size > _DENSE_FRACTION * A.shape[0]
        self.idx = None if self.dense else nz
        self.sub = A if self.dense else A[np.ix_(nz, nz)]

    def apply(self, X: np.ndarray) -> float:
        if self.dense:
            return float(np.sum(self.A * X))
        return float(np.sum(self.sub * X[np.ix_(self.idx, self.idx)]))


def _inv_chol(X: np.ndarray) -> np.ndarray:
    """Inverse of the lower Cholesky factor of ``X``."""
    L = cholesky(X, lower=True)
    return solve_triangular(L, np.eye(X.shape[0]), lower=True)


def _max_step(Linv: np.ndarray, dX: np.ndarray) -> float:
    """Largest ``a`` with ``X + a dX >= 0``, given ``Linv`` from :func:`_inv_chol`."""
    Y = Linv @ dX @ Linv.T
    lam = eigh(0.5 * (Y + Y.T), eigvals_only=True, subset_by_index=[0, 0])[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(t: np.ndarray, dt: np.ndarray) -> float:
    neg = dt < 0
    return float(np.min(-t[neg] / dt[neg])) if np.any(neg) else np.inf


def solve(problem: SdpProblem, tol: float = 1e-8, max_iter: int = 100) -> SdpSolution:
    """Solve ``problem``; see the module docstring for the algorithm."""
    problem.validate()
    complex_data = any(np.iscomplexobj(M) and np.any(np.imag(M) != 0)
                       for M in [problem.objective] + [A for _, _, A, _ in problem.rows()])

    if complex_data:
        def emb(M):
            return 0.5 * hermitian_to_real_embedding(np.asarray(M, dtype=complex))
    else:
        def emb(M):
            M = np.real(np.asarray(M))
            return 0.5 * (M + M.T)

    C = emb(problem.objective)
    raw_rows = [(kind, k, emb(A), float(b)) for kind, k, A, b in problem.rows()]
    n = C.shape[0]
    m = len(raw_rows)

    # scaling: unit-norm rows with |b| <= 1, unit-norm objective
    rows, scales = [], []
    for kind, k, A, b in raw_rows:
        d = 1.0 / max(np.linalg.norm(A), abs(b), 1e-300)
        g = {"eq": 0.0, "le": 1.0, "ge": -1.0}[kind]
        rows.append(_Row(A * d, b * d, g))
        scales.append(d)
    c_scale = 1.0 / max(np.linalg.norm(C), 1e-300)
    Cm = -C * c_scale  # minimize <Cm, X>
    b = np.array([r.b for r in rows])
    g = np.array([r.g for r in rows])
    slack = g != 0
    p = int(slack.sum())

    def op(X):
        return np.array([r.apply(X) for r in rows])

    def adj(y):
        out = np.zeros((n, n))
        for yi, r in zip(y, rows):
            if yi == 0.0:
                continue
            if r.dense:
                out += yi * r.A
            else:
                out[np.ix_(r.idx, r.idx)] += yi * r.sub
        return out

    xi = max(10.0, np.sqrt(n), n * max((1 + abs(r.b)) / (1 + np.linalg.norm(r.sub)) for r in rows))
    zeta = max(10.0, np.sqrt(n), max(np.linalg.norm(Cm), 1.0))
    X = xi * np.eye(n)
    Z = zeta * np.eye(n)
    y = np.zeros(m)
    t = np.where(slack, xi, 1.0)
    z = np.where(slack, zeta, 1.0)
    norm_b, norm_c = np.linalg.norm(b), np.linalg.norm(Cm)

    def _newton_step(X, y, Z, t, z):
        mu = (np.sum(X * Z) + t[slack] @ z[slack]) / (n + p)
        LZ0 = _inv_chol(Z)
        Zinv = LZ0.T @ LZ0

        # Schur complement M_ij = Tr(A_i X A_j Z^-1) (+ slack terms)
        M = np.empty((m, m))
        for j, rj in enumerate(rows):
            if rj.dense:
                Pj = X @ rj.A @ Zinv
            else:
                Pj = X[:, rj.idx] @ rj.sub @ Zinv[rj.idx, :]
            for i, ri in enumerate(rows):
                if ri.dense:
                    M[i, j] = np.sum(ri.A * Pj.T)
                else:
                    M[i, j] = np.sum(ri.sub * Pj[np.ix_(ri.idx, ri.idx)].T)
        M = 0.5 * (M + M.T)
        M[slack, slack] += (t / z)[slack]
        try:
            Mf = cho_factor(M)
        except np.linalg.LinAlgError:
            Mf = cho_factor(M + 1e-12 * np.trace(M) / m * np.eye(m))

        XRdZ = X @ Rd @ Zinv

        def direction(sigma_mu, corrX=None, corrt=None):
            R = sigma_mu * Zinv - X - XRdZ
            Rt = np.where(slack, sigma_mu / z - t - t * rdt / z, 0.0)
            if corrX is not None:
                R = R - corrX
                Rt = Rt - corrt
            h = rp - op(R) - g * Rt
            dy = cho_solve(Mf, h)
            Ady = adj(dy)
            dZ = Rd - Ady
            dz = np.where(slack, rdt - g * dy, 0.0)
            dX = R + X @ Ady @ Zinv
            dX = 0.5 * (dX + dX.T)
            dt = np.where(slack, Rt + t * g * dy / z, 0.0)
            return dX, dy, dZ, dt, dz

        LX, LZ = _inv_chol(X), LZ0

        def steps(dX, dZ, dt, dz):
            ap = min(_max_step(LX, dX), _max_step_lp(t[slack], dt[slack]))
            ad = min(_max_step(LZ, dZ), _max_step_lp(z[slack], dz[slack]))
            return ap, ad

        dXa, dya, dZa, dta, dza = direction(0.0)
        ap, ad = steps(dXa, dZa, dta, dza)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = (np.sum((X + ap * dXa) * (Z + ad * dZa))
                  + (t + ap * dta)[slack] @ (z + ad * dza)[slack]) / (n + p)
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))
        corrX = dXa @ dZa @ Zinv
        corrt = np.where(slack, dta * dza / z, 0.0)
        dX, dy, dZ, dt, dz = direction(sigma * mu, corrX, corrt)
        ap, ad = steps(dX, dZ, dt, dz)
        ap, ad = min(1.0, 0.98 * ap), min(1.0, 0.98 * ad)

        X = X + ap * dX
        t = np.where(slack, t + ap * dt, t)
        y = y + ad * dy
        Z = Z + ad * dZ
        z = np.where(slack, z + ad * dz, z)
        X = 0.5 * (X + X.T)
        Z = 0.5 * (Z + Z.T)
        return X, y, Z, t, z

    status = "max_iter"
    certificate = None
    it = 0
    relgap = pinf = dinf = np.inf
    for it in range(1, max_iter + 1):
        Rd = Cm - adj(y) - Z
        rdt = np.where(slack, -g * y - z, 0.0)
        rp = b - op(X) - g * np.where(slack, t, 0.0)
        pobj = float(np.sum(Cm * X))
        dobj = float(b @ y)
        gap = float(np.sum(X * Z) + (t[slack] @ z[slack]))
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(rp) / (1 + norm_b)
        dinf = np.sqrt(np.sum(Rd**2) + np.sum(rdt**2)) / (1 + norm_c)
        if max(relgap, gap / (1 + abs(pobj) + abs(dobj))) < tol and pinf < tol and dinf < tol:
            status = "optimal"
            break
        if dobj > 1e8 * (1 + abs(pobj)) and pinf > 1e3 * tol:
            yh = y / dobj
            ray = adj(yh)
            if np.linalg.eigvalsh(ray)[-1] < 1e-6 and np.all((-g * yh)[slack] > -1e-6):
                status = "infeasible"
                certificate = yh * np.array(scales)
                break

        try:
            X, y, Z, t, z = _newton_step(X, y, Z, t, z)
        except np.linalg.LinAlgError:
            # iterates lost definiteness numerically (typically no strict interior)
            log.debug("sdp: factorization breakdown at iteration %d", it)
            break

    Xh = real_embedding_to_hermitian(X) if complex_data else X
    value = float(np.real(np.sum(np.asarray(problem.objective).T * Xh)))
    dual_value = float(-(b @ y) / c_scale)
    log.debug("sdp: status=%s iters=%d relgap=%.2e pinf=%.2e dinf=%.2e", status, it, relgap, pinf, dinf)
    return SdpSolution(x_opt=Xh, objective_value=value, duality_gap=float(relgap), status=status,
                       iterations=it, primal_infeasibility=float(pinf),
                       dual_infeasibility=float(dinf), dual_objective=dual_value,
                       certificate=certificate)


def dump_problem(problem: SdpProblem, path) -> None:
    """Write the problem as plain text: one labelled dense re/im array per matrix."""
    with open(path, "w") as fh:
        fh.write(f"dim {problem.dim}\n")

        def write(label, M, b=None):
            M = np.asarray(M, dtype=complex)
            fh.write(f"{label}" + ("" if b is None else f" {b!r}") + "\n")
            for row in M:
                fh.write(" ".join(f"{v.real!r},{v.imag!r}" for v in row) + "\n")

        write("objective", problem.objective)
        for kind, k, A, b in problem.rows():
            write(f"{kind} {problem.row_name(kind, k)}", A, b)
