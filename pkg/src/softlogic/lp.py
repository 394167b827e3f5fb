"""Dense two-phase simplex with Bland's rule.

Solves small equality-form linear programs exactly (up to float rounding).
Sized for the clause-level inner programs used in the relaxation checks
(tens of variables at most), not for general-purpose LP work.
"""

from __future__ import annotations

import numpy as np

_TOL = 1e-9


class InfeasibleProblem(RuntimeError):
    """The equality system has no nonnegative solution."""


class UnboundedProblem(RuntimeError):
    """The objective is unbounded above on the feasible set."""


def _pivot(tableau, basis, row, col):
    tableau[row] /= tableau[row, col]
    for r in range(tableau.shape[0]):
        if r != row and tableau[r, col] != 0.0:
            tableau[r] -= tableau[r, col] * tableau[row]
    basis[row] = col


def _bland_iterate(tableau, basis, n_cols):
    # Objective row is last; entries are reduced costs for maximization.
    while True:
        cost = tableau[-1, :n_cols]
        entering = -1
        for j in range(n_cols):
            if cost[j] > _TOL:
                entering = j
                break
        if entering < 0:
            return
        leaving = -1
        best = np.inf
        for r in range(tableau.shape[0] - 1):
            a = tableau[r, entering]
            if a > _TOL:
                ratio = tableau[r, -1] / a
                # Bland: smallest ratio, ties broken by smallest basis index.
                if ratio < best - _TOL or (
                    ratio < best + _TOL and (leaving < 0 or basis[r] < basis[leaving])
                ):
                    best = ratio
                    leaving = r
        if leaving < 0:
            raise UnboundedProblem("unbounded linear program")
        _pivot(tableau, basis, leaving, entering)


def simplex_maximize(c, a_eq, b_eq):
    """Maximize ``c @ x`` subject to ``a_eq @ x == b_eq`` and ``x >= 0``.

    Returns ``(x, value)``. Raises :class:`InfeasibleProblem` when no
    feasible point exists.
    """
    c = np.asarray(c, dtype=float)
    a = np.asarray(a_eq, dtype=float)
    b = np.asarray(b_eq, dtype=float).copy()
    m, n = a.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")

    a = a.copy()
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0

    # Phase 1: minimize the sum of artificial variables.
    tableau = np.zeros((m + 1, n + m + 1))
    tableau[:m, :n] = a
    tableau[:m, n : n + m] = np.eye(m)
    tableau[:m, -1] = b
    basis = list(range(n, n + m))
    # Maximize -(sum of artificials): reduced costs via basic rows.
    tableau[-1, :] = tableau[:m].sum(axis=0)
    tableau[-1, n : n + m] = 0.0
    _bland_iterate(tableau, basis, n + m)
    if tableau[-1, -1] > 1e-7:
        raise InfeasibleProblem("phase-1 optimum %g > 0" % tableau[-1, -1])

    # Drive any artificial variables out of the basis.
    for r in range(m):
        if basis[r] >= n:
            for j in range(n):
                if abs(tableau[r, j]) > _TOL:
                    _pivot(tableau, basis, r, j)
                    break

    rows = [r for r in range(m) if basis[r] < n]
    phase2 = np.zeros((len(rows) + 1, n + 1))
    for i, r in enumerate(rows):
        phase2[i, :n] = tableau[r, :n]
        phase2[i, -1] = tableau[r, -1]
    basis2 = [basis[r] for r in rows]
    phase2[-1, :n] = c
    for i, col in enumerate(basis2):
        phase2[-1] -= phase2[-1, col] * phase2[i]
    _bland_iterate(phase2, basis2, n)

    x = np.zeros(n)
    for i, col in enumerate(basis2):
        x[col] = phase2[i, -1]
    return x, float(c @ x)
