"""Euclidean projection onto a linearized feasible set.

The feasible set is an affine subspace J(w - z) = 0 intersected with lower
bounds on part of the coordinates and, optionally, an infinity-norm box of
radius delta around z.  project() runs a primal active-set method on the bound
constraints; each equality-constrained step is a minimum-norm least-squares
solve, so rank-deficient J (duplicated constraints, zero rows) is handled
without fuss.  Anti-cycling follows Bland's rule: among eligible constraints
always pick the smallest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, SolverStalled


@dataclass(frozen=True)
class TangentSpace:
    """Feasible set {w : J(w-z) = 0, w >= lower, |w - z|_inf <= box_radius}.

    lower may contain -inf for unconstrained coordinates; box_radius None means
    no box.  z itself must be feasible, which holds by construction whenever z
    comes out of the restoration phase.
    """

    z: np.ndarray
    J: object                 # sparse or dense matrix, shape (m, n)
    lower: np.ndarray
    box_radius: float | None = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        lower = np.asarray(self.lower, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "lower", lower)
        if z.shape != lower.shape:
            raise DimensionMismatch("z and lower must have the same shape")
        if self.J.shape[1] != z.size:
            raise DimensionMismatch("J has %d columns, state has %d coordinates"
                                    % (self.J.shape[1], z.size))


def min_norm_solve(J, r):
    """Minimum-norm least-squares solution of J x = r (SVD based)."""
    if sp.issparse(J):
        J = J.toarray()
    J = np.asarray(J, dtype=float)
    r = np.asarray(r, dtype=float)
    if J.shape[0] != r.shape[0]:
        raise DimensionMismatch("J has %d rows, r has length %d"
                                % (J.shape[0], r.shape[0]))
    x, *_ = np.linalg.lstsq(J, r, rcond=None)
    return x


def project(T, b):
    """Projection of b onto the feasible set of a TangentSpace.

    Returns the unique minimizer w of |w - b|^2 subject to J(w-z) = 0, the
    lower bounds, and the optional box.  Raises SolverStalled if the active-set
    loop exceeds 50 * dimension iterations, which signals a cycling pathology
    rather than an infeasible problem (z is always feasible).
    """
    z = T.z
    n = z.size
    J = T.J.toarray() if sp.issparse(T.J) else np.asarray(T.J, dtype=float)
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise DimensionMismatch("expected point of length %d, got %r" % (n, b.shape))

    # shift to y = w - z so the affine constraint reads J y = 0
    c = b - z
    lo = T.lower - z
    hi = np.full(n, np.inf)
    if T.box_radius is not None:
        delta = float(T.box_radius)
        lo = np.maximum(lo, -delta)
        hi = np.full(n, delta)
    lo = np.minimum(lo, 0.0)      # z is feasible; clip roundoff so y=0 stays valid

    y = np.zeros(n)
    # -1: at lower bound, +1: at upper bound, 0: free
    state = np.zeros(n, dtype=np.int8)
    state[lo >= -1e-14] = -1

    scale = 1.0 + float(np.abs(c).max(initial=0.0))
    # under rank-deficient J the multiplier estimate is not unique and can flag
    # a bound whose release the geometry immediately undoes; such indices are
    # parked here and only reconsidered after the iterate genuinely moves
    banned = set()
    last_dropped = -1
    cap = 50 * max(n, 1)
    for _ in range(cap):
        free = state == 0
        fixed = ~free
        rhs = -(J[:, fixed] @ y[fixed]) if fixed.any() else np.zeros(J.shape[0])
        Jf = J[:, free]
        cf = c[free]
        # equality step: min |y_f - c_f| s.t. Jf y_f = rhs
        q = min_norm_solve(Jf, rhs - Jf @ cf)
        yhat = y.copy()
        yhat[free] = cf + q
        p = yhat - y

        if np.abs(p).max(initial=0.0) <= 1e-13 * scale:
            # EQP optimum for this working set; check bound multipliers
            nu = min_norm_solve(Jf.T, q) if free.any() else np.zeros(J.shape[0])
            m = (y - c) - J.T @ nu
            viol = np.where(((state == -1) & (m < -1e-10 * scale))
                            | ((state == +1) & (m > 1e-10 * scale)))[0]
            viol = [j for j in viol if j not in banned]
            if not viol:
                w = z + np.clip(y, lo, hi)
                if T.box_radius is not None:
                    return np.clip(w, z - T.box_radius, z + T.box_radius)
                return np.maximum(w, T.lower)
            last_dropped = int(viol[0])
            state[last_dropped] = 0
            continue

        # ratio test toward yhat on the inactive bounds
        alpha = 1.0
        blocker = -1
        blocker_side = 0
        idx = np.where(free)[0]
        for j in idx:
            if p[j] < 0.0 and np.isfinite(lo[j]):
                aj = (lo[j] - y[j]) / p[j]
                if aj < alpha - 1e-15:
                    alpha, blocker, blocker_side = aj, j, -1
            elif p[j] > 0.0 and np.isfinite(hi[j]):
                aj = (hi[j] - y[j]) / p[j]
                if aj < alpha - 1e-15:
                    alpha, blocker, blocker_side = aj, j, +1
        alpha = max(alpha, 0.0)
        if blocker == last_dropped and blocker >= 0 and alpha <= 1e-12:
            # the release was spurious: the step re-blocks instantly
            state[blocker] = blocker_side
            banned.add(blocker)
            last_dropped = -1
            continue
        if alpha * np.abs(p).max(initial=0.0) > 1e-13 * scale:
            banned.clear()
        y = np.clip(y + alpha * p, lo, hi)
        if blocker >= 0:
            y[blocker] = lo[blocker] if blocker_side < 0 else hi[blocker]
            state[blocker] = blocker_side

    raise SolverStalled("active-set projection exceeded %d iterations" % cap)
