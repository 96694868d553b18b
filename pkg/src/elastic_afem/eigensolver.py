"""Shift-invert eigensolver for the mixed saddle pencil K x = kappa Mb x.

Because the right-hand side matrix only acts on the displacement block, the
iteration runs on displacements alone: with S = M^(1/2) (-K^-1)_uu M^(1/2),
symmetric positive definite, the eigenvalues of S are 1/kappa.

Solves with K go through an augmented Lagrangian.  For Bρ = g the pseudostress
equation may gain gamma B^T M^-1 (Bρ - g) and beta c (c^T ρ) without changing
the solution, and the resulting block H is symmetric positive definite even
in the incompressible limit, where A vanishes on multiples of the identity.
Testing with the identity shows that c^T ρ = 0 then holds automatically and
the trace multiplier is zero.  H is factored once by sparse Cholesky; the
displacement Schur complement B H^-1 B^T is spectrally equivalent to
M / gamma with constant 1 + 1/(gamma kappa_1), so preconditioned CG needs only
a handful of steps per solve.
"""
from dataclasses import dataclass, field

from cvxopt import cholmod, matrix as cvx_matrix, spmatrix
import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .spaces import interpolate_rt


class EigenSolverError(RuntimeError):
    pass


@dataclass
class SolverOptions:
    num_eigs: int = 1
    tol: float = 1e-10
    maxiter: int = 50
    ncv: int = None
    seed: int = 0


@dataclass
class MixedSolution:
    kappas: np.ndarray
    rho_coeffs: np.ndarray  # (m, n_rho)
    u_coeffs: np.ndarray  # (m, n_u)
    multiplier: np.ndarray
    residuals: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def omegas(self):
        return np.sqrt(self.kappas)

    def __len__(self):
        return len(self.kappas)


def _normalize(sys, rho, u, lag):
    mdiag = sys.M.diagonal()
    scale = np.sqrt(np.sum(mdiag * u * u))
    k = np.argmax(np.abs(u))
    if u[k] < 0:
        scale = -scale
    return rho / scale, u / scale, lag / scale


def _residual(K, Mb, kappa, x):
    r = K @ x - kappa * (Mb @ x)
    denom = (spla.norm(K, 1) + abs(kappa) * spla.norm(Mb, 1)) * np.linalg.norm(x)
    return float(np.linalg.norm(r) / denom)


class SaddleSolver:
    """Exact solves of [[A, B^T, c], [B, 0, 0], [c^T, 0, 0]] x = [0, g, 0]."""

    def __init__(self, sys, gamma=None, cg_tol=1e-14):
        self.B = sys.B.tocsr()
        self.BT = self.B.T.tocsr()
        self.mdiag = sys.M.diagonal()
        mu = sys.mat.mu if sys.mat is not None else 1.0
        self.gamma = gamma if gamma is not None else 10.0 / mu
        self.cg_tol = cg_tol
        n = sys.space_rt.dim
        eye = interpolate_rt(sys.space_rt, lambda x: np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)), degree=1)
        Ag = (sys.A + self.gamma * (self.BT @ sp.diags(1.0 / self.mdiag) @ self.B)).tocoo()
        # H = Ag + beta c c^T is dense; factor Ag + s e_k e_k^T and correct by Woodbury
        scale = float(np.mean(Ag.diagonal()))
        k = int(np.argmax(np.abs(eye)))
        beta = scale * float(eye @ eye) / float(sys.c @ eye) ** 2
        F = spmatrix(
            cvx_matrix(np.append(Ag.data, scale)),
            cvx_matrix(np.append(Ag.row, k).astype(int)),
            cvx_matrix(np.append(Ag.col, k).astype(int)),
            Ag.shape,
        )
        try:
            self.factor = cholmod.symbolic(F)
            cholmod.numeric(F, self.factor)
        except ArithmeticError as exc:
            raise EigenSolverError(f"augmented pseudostress block is not definite: {exc}") from exc
        U = np.zeros((len(eye), 2))
        U[k, 0] = 1.0
        U[:, 1] = sys.c
        self.U = U
        self.FU = self._solve_f(U)
        cap = np.diag([-1.0 / scale, 1.0 / beta]) + U.T @ self.FU
        self.cap = np.linalg.inv(cap)
        self.cg_steps = 0

    def _solve_f(self, r):
        x = cvx_matrix(np.array(r, dtype=float, order="F"))
        cholmod.solve(self.factor, x)
        return np.array(x).reshape(np.shape(r))

    def solve_h(self, r):
        y = self._solve_f(r)
        return y - self.FU @ (self.cap @ (self.U.T @ y))

    def solve(self, g):
        """Returns (rho, w) with A rho + B^T w = 0, B rho = g, c^T rho = 0."""
        r1 = self.gamma * (self.BT @ (g / self.mdiag))
        hr1 = self.solve_h(r1)
        rhs = self.B @ hr1 - g

        def schur(w):
            return self.B @ self.solve_h(self.BT @ w)

        w = self.gamma * rhs / self.mdiag
        r = rhs - schur(w)
        z = self.gamma * r / self.mdiag
        p = z.copy()
        rz = r @ z
        stop = self.cg_tol * np.sqrt(abs(rhs @ (self.gamma * rhs / self.mdiag)))
        for _ in range(200):
            if np.sqrt(abs(rz)) <= stop:
                break
            q = schur(p)
            alpha = rz / (p @ q)
            w += alpha * p
            r -= alpha * q
            z = self.gamma * r / self.mdiag
            rz, rz_old = r @ z, rz
            p = z + (rz / rz_old) * p
            self.cg_steps += 1
        else:
            raise EigenSolverError("Schur complement iteration did not converge")
        rho = hr1 - self.solve_h(self.BT @ w)
        return rho, w


def solve_eigs(sys, m=1, opts=None):
    """The m smallest eigenpairs, u normalised to unit L2 norm."""
    opts = opts or SolverOptions(num_eigs=m)
    if m < 1:
        raise ValueError("need at least one eigenpair")
    K = sys.block_matrix()
    Mb = sys.rhs_matrix()
    nu = sys.n_u
    if m >= nu:
        raise EigenSolverError(f"only {nu} finite eigenvalues exist, asked for {m}")
    solver = SaddleSolver(sys)
    mdiag = sys.M.diagonal()
    msq = np.sqrt(mdiag)

    def apply(w):
        return -msq * solver.solve(msq * np.ravel(w))[1]

    op = spla.LinearOperator((nu, nu), matvec=apply, dtype=float)
    rng = np.random.default_rng(opts.seed)
    v0 = rng.standard_normal(nu)
    ncv = opts.ncv or min(nu, max(4 * m + 10, 20))
    try:
        vals, vecs = spla.eigsh(op, k=m, which="LA", v0=v0, ncv=ncv, tol=opts.tol * 1e-2, maxiter=opts.maxiter)
    except spla.ArpackNoConvergence as exc:
        raise EigenSolverError(f"eigensolver did not converge: {exc}") from exc
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise EigenSolverError("fewer than m positive finite eigenvalues found")
    order = np.argsort(-vals)
    kappas = 1.0 / vals[order]
    rhos, us, lags, res = [], [], [], []
    for k, j in enumerate(order):
        u = vecs[:, j] / msq
        rho, w = solver.solve(-mdiag * u)
        rho, uu, lag = _normalize(sys, kappas[k] * rho, kappas[k] * w, np.zeros(1))
        xn = np.concatenate([rho, uu, lag])
        rhos.append(rho)
        us.append(uu)
        lags.append(lag[0])
        res.append(_residual(K, Mb, kappas[k], xn))
    return MixedSolution(
        kappas=kappas,
        rho_coeffs=np.array(rhos),
        u_coeffs=np.array(us),
        multiplier=np.array(lags),
        residuals=np.array(res),
        meta={"cg_steps": solver.cg_steps},
    )


def solve_eigs_dense(sys, m=1):
    """Reference path: QZ on the full dense pencil, finite positive eigenvalues only."""
    K = sys.block_matrix().toarray()
    Mb = sys.rhs_matrix().toarray()
    vals = scipy.linalg.eigvals(K, Mb)
    vals = vals[np.isfinite(vals)]
    if np.any(np.abs(vals.imag) > 1e-8 * np.abs(vals)):
        raise EigenSolverError("complex eigenvalues in a symmetric pencil")
    vals = np.sort(vals.real[vals.real > 0])
    if len(vals) < m:
        raise EigenSolverError("fewer than m positive finite eigenvalues found")
    return vals[:m]


def spectral_gap(sol, j):
    """Distance from kappa_j to the nearest other computed eigenvalue."""
    k = np.asarray(sol.kappas if hasattr(sol, "kappas") else sol, dtype=float)
    if len(k) < 2:
        raise ValueError("need at least two eigenvalues for a gap")
    if not 0 <= j < len(k):
        raise IndexError(f"eigenvalue index {j} out of range")
    return float(np.min(np.abs(np.delete(k, j) - k[j])))
