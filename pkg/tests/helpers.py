"""Shared builders and independent oracles for the test suite."""

import itertools

import numpy as np

from softlogic.infer import SolveOptions
from softlogic.model import (
    GroundAtom,
    HingePotential,
    HlMrf,
    LinearConstraint,
    LinearFunction,
    Relation,
    TemplateInfo,
    VariableTable,
)

TIGHT = SolveOptions(eps_abs=1e-9, eps_rel=1e-9)


def make_mrf(potentials, constraints=(), weights=(), n=1, observed=None):
    table = VariableTable(
        [GroundAtom("y", (str(i),)) for i in range(n)], observed or {}
    )
    counts = [0] * len(weights)
    for pot in potentials:
        counts[pot.template_id] += 1
    templates = [TemplateInfo("template %d" % i, c) for i, c in enumerate(counts)]
    return HlMrf(table, potentials, constraints, templates, weights)


def hinge(terms, offset, exponent=1, template=0):
    return HingePotential(LinearFunction(terms, offset), exponent, template)


def leq(terms, offset):
    return LinearConstraint(LinearFunction(terms, offset), Relation.LEQ)


def eq(terms, offset):
    return LinearConstraint(LinearFunction(terms, offset), Relation.EQ)


def random_mrf(rng, n_vars=None, n_pots=None, squared_allowed=True, constrained=False):
    """A random small model with opposing hinges (nontrivial optimum)."""
    n = n_vars or rng.integers(2, 5)
    m = n_pots or rng.integers(2, 8)
    potentials = []
    for _ in range(m):
        k = int(rng.integers(1, min(3, n) + 1))
        idx = rng.choice(n, size=k, replace=False)
        coeffs = rng.uniform(-1.0, 1.0, size=k)
        offset = rng.uniform(-0.5, 0.8)
        exponent = int(rng.integers(1, 3)) if squared_allowed else 1
        potentials.append(hinge(list(zip(idx.tolist(), coeffs)), offset, exponent))
    weights = rng.uniform(0.2, 1.5, size=m)
    constraints = []
    if constrained and n >= 2:
        i, j = rng.choice(n, size=2, replace=False)
        if rng.random() < 0.5:
            constraints.append(eq([(int(i), 1.0), (int(j), 1.0)], -1.0))
        else:
            constraints.append(leq([(int(i), 1.0), (int(j), 1.0)], -1.0))
    return make_mrf(potentials, constraints, weights, n=n)


def batch_energy(mrf, assignments):
    """Energy of many assignments at once (rows of ``assignments``)."""
    table = mrf.table
    total = np.zeros(assignments.shape[0])
    for pot in mrf.potentials:
        lf = pot.linfun.fold_observed(table)
        positions = [table.free_position(i) for i, _ in lf.terms]
        coeffs = np.array([c for _, c in lf.terms])
        lin = assignments[:, positions] @ coeffs + lf.offset if positions else lf.offset
        value = np.maximum(lin, 0.0) ** pot.exponent
        total += mrf.weights[pot.template_id] * value
    return total


def batch_feasible(mrf, assignments, tol=1e-9):
    table = mrf.table
    ok = np.ones(assignments.shape[0], dtype=bool)
    for con in mrf.constraints:
        lf = con.linfun.fold_observed(table)
        positions = [table.free_position(i) for i, _ in lf.terms]
        coeffs = np.array([c for _, c in lf.terms])
        value = assignments[:, positions] @ coeffs + lf.offset
        if con.relation is Relation.EQ:
            ok &= np.abs(value) <= tol
        else:
            ok &= value <= tol
    return ok


def grid_minimize(mrf, step=0.05, refinements=8, feas_tol=1e-9):
    """Derivative-free oracle: global grid pass, then local refinement.

    Convexity of the energy and feasible set makes coarse-to-fine search
    sound; the refinement shrinks a 5^n stencil around the incumbent.
    """
    n = mrf.n_free
    axis = np.arange(0.0, 1.0 + 1e-12, step)
    best_value = np.inf
    best_point = None
    chunk_axes = axis if n <= 4 else np.arange(0.0, 1.0 + 1e-12, max(step, 0.1))
    for head in itertools.product(chunk_axes, repeat=max(0, n - 4)):
        tail_grids = np.meshgrid(*([chunk_axes] * min(n, 4)), indexing="ij")
        points = np.column_stack([g.ravel() for g in tail_grids])
        if head:
            points = np.column_stack(
                [np.tile(head, (points.shape[0], 1)), points]
            )
        feasible = batch_feasible(mrf, points, tol=max(feas_tol, step / 2))
        if not feasible.any():
            continue
        values = batch_energy(mrf, points[feasible])
        k = int(np.argmin(values))
        if values[k] < best_value:
            best_value = float(values[k])
            best_point = points[feasible][k]
    assert best_point is not None, "grid found no feasible point"

    radius = float(step)
    point = best_point
    for _ in range(refinements):
        offsets = np.array(list(itertools.product((-2, -1, 0, 1, 2), repeat=n)))
        candidates = np.clip(point + offsets * (radius / 2.0), 0.0, 1.0)
        feasible = batch_feasible(mrf, candidates, tol=max(feas_tol, radius / 10))
        if feasible.any():
            values = batch_energy(mrf, candidates[feasible])
            k = int(np.argmin(values))
            if values[k] < best_value:
                best_value = float(values[k])
                point = candidates[feasible][k]
        radius /= 2.0
    return point, best_value


def golden_section(fn, lo, hi, tol=1e-12, iters=200):
    """Minimize a unimodal function on [lo, hi]."""
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fn(d)
    x = (a + b) / 2.0
    return x, fn(x)


def oracle_subproblem(pot, weight, z, rho):
    """Golden-section oracle: the optimum moves from z along the hinge normal."""
    a = np.array([c for _, c in pot.linfun.terms])
    b = pot.linfun.offset
    z = np.asarray(z, dtype=float)
    norm2 = float(a @ a)
    lz = float(a @ z + b)
    if lz <= 0:
        return z

    def value(s):
        x = z - s * a
        return weight * max(float(a @ x + b), 0.0) ** pot.exponent + 0.5 * rho * float(
            (x - z) @ (x - z)
        )

    upper = max(weight / rho, max(lz, 0.0) / norm2) + 1.0
    s, _ = golden_section(value, 0.0, upper)
    return z - s * a
