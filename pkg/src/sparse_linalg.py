"""
Sparse symmetric solvers and the matrix-free Kronecker-sum operator.

The SGFEM operator A = sum_m G_m (x) K_m is never assembled; its action uses
the matricized form Y = sum_m G_m X K_m^T with X the (N_P, N_X) reshaping
of the block vector (block t holds the spatial coefficients of index t).
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator, splu

from .errors import DimensionMismatchError, MinresBreakdownError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10  # relative residual accepted by solve_spd
BREAKDOWN_TOL = 1e-14  # Lanczos beta below this (relative) with no convergence
MINRES_TOL = 1e-10
MINRES_MAXIT = 200


def worker_count() -> int:
    """Thread cap for Kronecker mat-vecs (TIFISS_THREADS, default cpu count)."""
    value = os.getenv("TIFISS_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning(f"Ignoring non-integer TIFISS_THREADS={value!r}")
    return os.cpu_count() or 1


class SpdFactor:
    """
    Reusable sparse factorization of a symmetric positive definite matrix.

    Uses SuperLU with a symmetric fill-reducing ordering and diagonal
    pivots only, so the U factor carries the Cholesky pivots on its diagonal.
    """

    def __init__(self, matrix: sp.spmatrix):
        matrix = sp.csc_matrix(matrix, dtype=float)
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"matrix is not square: {matrix.shape}")
        self.matrix = matrix
        self.shape = matrix.shape
        if matrix.shape[0] == 0:
            self._lu = None
            return
        try:
            self._lu = splu(
                matrix,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise NotPositiveDefiniteError(-1, 0.0) from exc
        pivots = self._lu.U.diagonal()
        bad = np.flatnonzero(~(pivots > 0.0))
        if len(bad):
            original = int(np.argsort(self._lu.perm_c)[bad[0]])
            raise NotPositiveDefiniteError(original, float(pivots[bad[0]]))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for one right-hand side (n,) or many (n, k)."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.shape[0]:
            raise DimensionMismatchError(
                f"right-hand side has {rhs.shape[0]} rows, matrix has {self.shape[0]}"
            )
        if self._lu is None:
            return np.zeros_like(rhs)
        return self._lu.solve(rhs)


def solve_spd(matrix: sp.spmatrix, rhs: np.ndarray, factor: Optional[SpdFactor] = None) -> np.ndarray:
    """
    Direct solve of a sparse SPD system with a residual check.

    Args:
        matrix: SPD matrix
        rhs: right-hand side
        factor: existing factorization of `matrix` to reuse

    Returns:
        x with ||Ax - b|| <= 1e-10 ||b|| (one refinement step if needed)

    Raises:
        NotPositiveDefiniteError: with the offending pivot index
    """
    factor = factor or SpdFactor(matrix)
    rhs = np.asarray(rhs, dtype=float)
    x = factor.solve(rhs)
    bnorm = np.linalg.norm(rhs)
    residual = rhs - factor.matrix @ x
    if np.linalg.norm(residual) > RESIDUAL_TOL * bnorm:
        logger.warning(
            f"Direct solve residual {np.linalg.norm(residual) / bnorm:.2e}, applying iterative refinement"
        )
        x = x + factor.solve(residual)
    return x


class KroneckerSumOperator(LinearOperator):
    """
    Implicit operator sum_m G_m (x) K_m.

    Every term is accumulated into one preallocated result, so a mat-vec
    holds at most three block vectors besides its input whatever the number
    of terms. With several workers the N_P blocks are split into contiguous
    row chunks evaluated on a pool owned by the operator; each chunk sums the
    terms in the same order, so results are bit-identical for every worker
    count.

    Args:
        terms: pairs (G_m, K_m); all G share dimension N_P, all K share N_X
        threads: worker cap (default TIFISS_THREADS)
    """

    def __init__(self, terms: Sequence[Tuple[sp.spmatrix, sp.spmatrix]], threads: Optional[int] = None):
        if not terms:
            raise DimensionMismatchError("Kronecker sum needs at least one term")
        self.terms: List[Tuple[sp.csr_matrix, sp.csr_matrix]] = [
            (sp.csr_matrix(g), sp.csr_matrix(k)) for g, k in terms
        ]
        n_p = self.terms[0][0].shape[0]
        n_x = self.terms[0][1].shape[0]
        for index, (g, k) in enumerate(self.terms):
            if g.shape != (n_p, n_p) or k.shape != (n_x, n_x):
                raise DimensionMismatchError(
                    f"term {index} has shapes {g.shape} and {k.shape}, expected ({n_p}, {n_p}) and ({n_x}, {n_x})"
                )
        self.n_p = n_p
        self.n_x = n_x
        self.threads = threads if threads is not None else worker_count()
        count = max(1, min(self.threads, n_p // 2))  # chunks hold at least two blocks
        bounds = np.linspace(0, n_p, count + 1).astype(int)
        self.chunks: List[Tuple[int, int]] = [
            (int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
        ]
        self._rows = [[g[lo:hi] for g, _ in self.terms] for lo, hi in self.chunks]
        self._pool: Optional[ThreadPoolExecutor] = None
        super().__init__(dtype=np.float64, shape=(n_p * n_x, n_p * n_x))

    def _accumulate(self, chunk: int, blocks: np.ndarray, result: np.ndarray) -> None:
        lo, hi = self.chunks[chunk]
        out = result[lo:hi]
        for g_rows, (_, k) in zip(self._rows[chunk], self.terms):
            out += (k @ (g_rows @ blocks).T).T

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        blocks = np.asarray(x, dtype=float).reshape(self.n_p, self.n_x)
        result = np.zeros((self.n_p, self.n_x))
        if len(self.chunks) == 1:
            self._accumulate(0, blocks, result)
        else:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=len(self.chunks))
            futures = [
                self._pool.submit(self._accumulate, chunk, blocks, result) for chunk in range(len(self.chunks))
            ]
            for future in futures:
                future.result()
        return result.reshape(-1)

    def close(self) -> None:
        """Shut down the worker pool, if one was started."""
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _adjoint(self):
        return self

    def to_dense(self) -> np.ndarray:
        """Explicit Kronecker sum, for small oracle checks."""
        return sum(np.kron(g.toarray(), k.toarray()) for g, k in self.terms)


def kron_matvec(operator: KroneckerSumOperator, x: np.ndarray) -> np.ndarray:
    """
    Apply the Kronecker sum to a block vector.

    Raises:
        DimensionMismatchError: if len(x) != N_P * N_X
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (operator.shape[1],):
        raise DimensionMismatchError(
            f"vector of length {x.size} for an operator of dimension {operator.shape[1]}"
        )
    return operator.matvec(x)


class MeanPreconditioner(LinearOperator):
    """Block-diagonal I (x) K_0 applied through one sparse factorization of K_0."""

    def __init__(self, k0: sp.spmatrix, n_p: int, factor: Optional[SpdFactor] = None):
        self.factor = factor or SpdFactor(k0)
        self.n_p = n_p
        self.n_x = self.factor.shape[0]
        super().__init__(dtype=np.float64, shape=(n_p * self.n_x, n_p * self.n_x))

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        blocks = np.asarray(x, dtype=float).reshape(self.n_p, self.n_x)
        return self.factor.solve(blocks.T).T.reshape(-1)

    def _adjoint(self):
        return self

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matvec(x)


class MinresResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual_history: List[float]
    converged: bool


def minres(
    operator,
    rhs: np.ndarray,
    precond=None,
    tol: float = MINRES_TOL,
    maxit: int = MINRES_MAXIT,
) -> MinresResult:
    """
    Preconditioned minimum residual method for symmetric operators.

    The stopping test uses the residual in the norm induced by the inverse
    preconditioner, which the Lanczos recurrence delivers for free and which
    never increases. Follows the Paige-Saunders formulation.

    Args:
        operator: symmetric matrix or LinearOperator
        rhs: right-hand side
        precond: SPD preconditioner applying M^{-1} (None for identity)
        tol: relative reduction of the preconditioned residual norm
        maxit: iteration cap

    Returns:
        MinresResult; converged is False when maxit was reached

    Raises:
        MinresBreakdownError: on a zero Lanczos or rotation denominator
    """
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    op = aslinearoperator(operator)
    psolve = aslinearoperator(precond).matvec if precond is not None else (lambda v: v)
    rhs = np.asarray(rhs, dtype=float).reshape(-1)
    n = rhs.size
    if op.shape != (n, n):
        raise DimensionMismatchError(f"operator shape {op.shape} does not match rhs of length {n}")

    x = np.zeros(n)
    r1 = rhs.copy()
    y = psolve(r1)
    beta1 = float(np.dot(r1, y))
    if beta1 < 0.0:
        raise MinresBreakdownError("preconditioner is not positive definite")
    if beta1 == 0.0:
        return MinresResult(x, 0, [0.0], True)
    beta1 = np.sqrt(beta1)

    history = [beta1]
    oldb, beta = 0.0, beta1
    dbar = epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1

    for iteration in range(1, maxit + 1):
        v = y / beta
        y = op.matvec(v)
        if iteration >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(np.dot(v, y))
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = psolve(r2)
        oldb = beta
        beta2 = float(np.dot(r2, y))
        if beta2 < 0.0:
            raise MinresBreakdownError("preconditioner is not positive definite")
        beta = np.sqrt(beta2)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = np.hypot(gbar, beta)
        if gamma <= BREAKDOWN_TOL * beta1:
            raise MinresBreakdownError(f"rotation denominator vanished at iteration {iteration}")
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        history.append(phibar)

        if phibar <= tol * beta1:
            logger.debug(f"MINRES converged in {iteration} iterations, residual {phibar / beta1:.2e}")
            return MinresResult(x, iteration, history, True)
        if beta <= BREAKDOWN_TOL * beta1:
            raise MinresBreakdownError(f"Lanczos breakdown at iteration {iteration}")

    logger.warning(f"MINRES reached maxit={maxit} with relative residual {phibar / beta1:.2e}")
    return MinresResult(x, maxit, history, False)
