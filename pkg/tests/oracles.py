"""Independent reference computations used only by the tests."""
from itertools import combinations

import numpy as np


def enumerate_qp(P, q, A, b, feas_tol=1e-9):
    """Brute-force QP: solve every active subset as equalities, keep the best feasible point."""
    d = q.size
    best_z, best_f = None, np.inf
    rows = range(A.shape[0])
    for k in range(0, min(d, A.shape[0]) + 1):
        for S in combinations(rows, k):
            S = list(S)
            K = np.block([[P, A[S].T], [A[S], np.zeros((k, k))]])
            rhs = np.concatenate([-q, b[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            z = sol[:d]
            if np.all(A @ z - b <= feas_tol * (1 + np.abs(b))):
                f = 0.5 * z @ P @ z + q @ z
                if f < best_f - 1e-12:
                    best_z, best_f = z, f
    return best_z, best_f


def simulate(A, B, x0, U):
    """Plain forward recursion of x_{t+1} = A x_t + B u_t."""
    A = np.atleast_2d(A)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    m = B.shape[1]
    x = np.asarray(x0, dtype=float)
    out = []
    for t in range(len(U) // m):
        x = A @ x + B @ np.asarray(U[t * m:(t + 1) * m])
        out.append(x)
    return np.array(out)
