"""Lawson-Hanson active-set solver for non-negative least squares."""
from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = ["NNLSError", "nnls"]


class NNLSError(RuntimeError):
    """The active-set iteration hit its iteration cap."""


class _PassiveQR:
    """QR factorisation of the passive columns, updated as columns come and go."""

    def __init__(self, A):
        self.A = A
        m = A.shape[0]
        self.cols: list[int] = []
        self.Q = np.eye(m)
        self.R = np.zeros((m, 0))

    def add(self, j):
        self.Q, self.R = scipy.linalg.qr_insert(self.Q, self.R, self.A[:, j], len(self.cols), which="col", check_finite=False)
        self.cols.append(j)

    def remove(self, j):
        pos = self.cols.index(j)
        self.Q, self.R = scipy.linalg.qr_delete(self.Q, self.R, pos, 1, which="col", overwrite_qr=True, check_finite=False)
        self.cols.pop(pos)

    def reset(self, cols):
        self.cols = list(cols)
        if self.cols:
            self.Q, self.R = scipy.linalg.qr(self.A[:, self.cols])
        else:
            self.Q, self.R = np.eye(self.A.shape[0]), np.zeros((self.A.shape[0], 0))

    def residual(self, b):
        """Residual of the passive least-squares fit and its squared norm.

        Formed from the orthogonal complement of the passive columns, so a
        heavily weighted row that the passive set fits does not leave
        cancellation error behind.
        """
        qc = self.Q[:, len(self.cols) :]
        c = qc.T @ b
        return qc @ c, float(c @ c)

    def solve(self, b, n):
        z = np.zeros(n)
        k = len(self.cols)
        if k:
            z[self.cols] = scipy.linalg.solve_triangular(self.R[:k, :k], self.Q[:, :k].T @ b, check_finite=False)
        return z


def nnls(A, b, maxiter=None, tol=None):
    """Solve ``min ||A x - b||_2`` subject to ``x >= 0``.

    The passive set is grown one column at a time; the least-squares
    subproblem on it is solved from a QR factorisation updated in place as
    columns enter and leave.

    Parameters
    ----------
    A : array_like, shape (m, n)
    b : array_like, shape (m,)
    maxiter : int, optional
        Cap on the total number of passive-set changes (default ``10 * n``).
    tol : float, optional
        Dual feasibility tolerance. By default it follows the rounding error
        of the gradient, ``10 * eps * max(m, n) * max_j ||A_j|| * (||r|| +
        eps * ||b||)`` with ``r`` the current residual.

    Returns
    -------
    x : numpy.ndarray, shape (n,)
    rnorm : float
        Euclidean norm of the residual at ``x``.

    Raises
    ------
    NNLSError
        If the iteration cap is reached before the KKT conditions hold.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError(f"b has shape {b.shape}, expected ({m},)")
    if maxiter is None:
        maxiter = 10 * n
    eps = np.finfo(float).eps
    col_norm = float(np.linalg.norm(A, axis=0).max(initial=0.0))
    b_norm = float(np.linalg.norm(b))

    x = np.zeros(n)
    qr = _PassiveQR(A)
    resid, rnorm2 = qr.residual(b)
    # Columns whose entry did not lower the residual are parked until the
    # objective decreases again; nearly dependent columns otherwise cycle.
    parked = np.zeros(n, dtype=bool)
    it = 0

    def tick():
        nonlocal it
        it += 1
        if it > maxiter:
            raise NNLSError(f"NNLS did not converge within {maxiter} iterations")

    while True:
        w = A.T @ resid
        passive = np.zeros(n, dtype=bool)
        passive[qr.cols] = True
        cand = np.where(passive | parked, -np.inf, w)
        j = int(np.argmax(cand))
        limit = tol if tol is not None else 10 * eps * max(m, n) * col_norm * (np.sqrt(rnorm2) + eps * b_norm)
        if cand[j] <= limit:
            break
        tick()
        x_old, cols_old = x.copy(), list(qr.cols)
        qr.add(j)
        z = qr.solve(b, n)
        if z[j] <= 0.0:
            qr.remove(j)
            parked[j] = True
            continue

        while True:
            cols = np.array(qr.cols)
            bad = cols[z[cols] <= 0.0]
            if not bad.size:
                x = z
                break
            tick()
            ratio = x[bad] / (x[bad] - z[bad])
            k = int(np.argmin(ratio))
            x = x + ratio[k] * (z - x)
            leaving = {int(bad[k])} | {int(p) for p in cols[x[cols] <= 0.0]}
            for p in leaving:
                x[p] = 0.0
                qr.remove(p)
            z = qr.solve(b, n)

        new_resid, new_rnorm2 = qr.residual(b)
        if new_rnorm2 < rnorm2:
            resid, rnorm2 = new_resid, new_rnorm2
            parked[:] = False
        else:
            x = x_old
            qr.reset(cols_old)
            parked[j] = True

    return x, float(np.sqrt(rnorm2))
