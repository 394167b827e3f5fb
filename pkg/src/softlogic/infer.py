"""MAP inference by consensus ADMM.

Each potential and each hard constraint owns a local copy of the variables
it touches, plus matching Lagrange multipliers. One iteration steps the
multipliers, solves every local subproblem in closed form, then averages
copies back into the consensus vector and clips it to [0, 1]. Convergence
is declared from the primal and dual residual tests with absolute and
relative tolerances.

Potential subproblems fall into three cases: the hinge is flat at the
unconstrained minimizer, the smoothed linear system solves it, or the
answer is the projection onto the hinge's hyperplane. Constraint
subproblems are plain projections.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import HingePotential, HlMrf, LinearConstraint, ModelError, Relation

_STALL_WINDOW = 1000


@dataclass(frozen=True)
class SolveOptions:
    """Solver knobs; defaults target sub-percent objective accuracy."""

    rho: float = 1.0
    eps_abs: float = 1e-5
    eps_rel: float = 1e-3
    max_iter: int = 25000
    workers: int = 1
    lazy: bool = False
    # Activating only potentials unsatisfied by more than this threshold
    # trades exactness for speed; nonzero values are a heuristic with no
    # error bound. 0 keeps lazy inference exact.
    activation_threshold: float = 0.0
    trace: object = None  # callable(iteration, primal, dual, objective)

    def __post_init__(self):
        if self.rho <= 0:
            raise ModelError("rho must be positive")
        if self.eps_abs <= 0 or self.eps_rel <= 0:
            raise ModelError("tolerances must be positive")


@dataclass
class Diagnostics:
    iterations: int = 0
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    objective: float = 0.0
    energy: float = 0.0
    converged: bool = False
    infeasible: bool = False
    message: str = ""
    activated_potentials: int | None = None
    activated_constraints: int | None = None


# -- scalar subproblem solvers (one block at a time) -----------------------


def solve_potential_subproblem(pot: HingePotential, weight, z, rho, cache=None):
    """Exact minimizer of ``w (max{l(x), 0})^p + rho/2 ||x - z||^2``.

    ``z`` is ordered like ``pot.linfun.terms``. For squared hinges the
    linear system is solved by a Cholesky factorization that can be cached
    across potentials sharing a template and coefficient signature.
    """
    a = np.array([c for _, c in pot.linfun.terms], dtype=float)
    b = pot.linfun.offset
    z = np.asarray(z, dtype=float)
    if z.shape != a.shape:
        raise ModelError("target has %d entries, potential has %d" % (z.size, a.size))
    if weight < 0 or rho <= 0:
        raise ModelError("need weight >= 0 and rho > 0")
    if a.size == 0 or weight == 0.0:
        return z.copy()

    if a @ z + b <= 0.0:
        return z.copy()

    if pot.exponent == 1:
        x = z - (weight / rho) * a
        if a @ x + b >= 0.0:
            return x
        # Both modified problems land outside their regions: the hinge is
        # active, so project onto its hyperplane.
        return z - ((a @ z + b) / (a @ a)) * a

    key = (pot.template_id, pot.linfun.terms, float(weight), float(rho))
    factor = cache.get(key) if cache is not None else None
    if factor is None:
        matrix = rho * np.eye(a.size) + 2.0 * weight * np.outer(a, a)
        factor = scipy.linalg.cho_factor(matrix)
        if cache is not None:
            cache[key] = factor
    return scipy.linalg.cho_solve(factor, rho * z - 2.0 * weight * b * a)


def solve_constraint_subproblem(con: LinearConstraint, z, rho):
    """Projection of ``z`` onto the constraint's feasible set."""
    a = np.array([c for _, c in con.linfun.terms], dtype=float)
    b = con.linfun.offset
    z = np.asarray(z, dtype=float)
    if z.shape != a.shape:
        raise ModelError("target has %d entries, constraint has %d" % (z.size, a.size))
    norm2 = a @ a
    if norm2 == 0.0:
        raise ModelError("constraint has an all-zero normal vector")
    value = a @ z + b
    if con.relation is Relation.LEQ and value <= 0.0:
        return z.copy()
    return z - (value / norm2) * a


# -- explicit state for step-by-step use and tests --------------------------


@dataclass
class AdmmBlock:
    indices: np.ndarray  # positions into the consensus vector
    local: np.ndarray
    multiplier: np.ndarray


@dataclass
class AdmmState:
    blocks: list
    consensus: np.ndarray
    previous: np.ndarray
    rho: float

    def copy_counts(self) -> np.ndarray:
        counts = np.zeros(self.consensus.size)
        for block in self.blocks:
            np.add.at(counts, block.indices, 1.0)
        return counts


def consensus_update(state: AdmmState) -> np.ndarray:
    """Average copies (plus scaled multipliers) per variable and clip."""
    n = state.consensus.size
    total = np.zeros(n)
    counts = np.zeros(n)
    for block in state.blocks:
        np.add.at(total, block.indices, block.local + block.multiplier / state.rho)
        np.add.at(counts, block.indices, 1.0)
    updated = state.consensus.copy()
    touched = counts > 0
    updated[touched] = np.clip(total[touched] / counts[touched], 0.0, 1.0)
    state.previous = state.consensus
    state.consensus = updated
    return updated


@dataclass(frozen=True)
class ConvergenceCheck:
    converged: bool
    primal_residual: float
    dual_residual: float
    eps_primal: float
    eps_dual: float


def check_convergence(state: AdmmState, eps_abs: float, eps_rel: float) -> ConvergenceCheck:
    """Primal/dual residual tests on the current state."""
    counts = state.copy_counts()
    total_copies = counts.sum()
    primal_sq = 0.0
    local_sq = 0.0
    mult_sq = 0.0
    for block in state.blocks:
        diff = block.local - state.consensus[block.indices]
        primal_sq += float(diff @ diff)
        local_sq += float(block.local @ block.local)
        mult_sq += float(block.multiplier @ block.multiplier)
    primal = np.sqrt(primal_sq)
    dual = state.rho * np.sqrt(float(counts @ (state.consensus - state.previous) ** 2))
    eps_primal = eps_abs * np.sqrt(total_copies) + eps_rel * max(
        np.sqrt(local_sq), np.sqrt(float(counts @ state.consensus**2))
    )
    eps_dual = eps_abs * np.sqrt(total_copies) + eps_rel * np.sqrt(mult_sq)
    return ConvergenceCheck(
        bool(primal <= eps_primal and dual <= eps_dual), primal, dual, eps_primal, eps_dual
    )


# -- vectorized engine -------------------------------------------------------


class _Group:
    """Same-arity blocks stacked into arrays for vectorized updates."""

    def __init__(self, kind, extra, idx, coeffs, offsets, weights):
        self.kind = kind  # "hinge" or "constraint" or "linear"
        self.extra = extra  # exponent for hinges, Relation for constraints
        self.idx = idx
        self.coeffs = coeffs
        self.offsets = offsets
        self.weights = weights
        self.norm2 = np.einsum("ij,ij->i", coeffs, coeffs) if coeffs.ndim == 2 else None
        self.local = None
        self.multiplier = None

    def reset(self, consensus):
        self.local = consensus[self.idx].copy()
        self.multiplier = np.zeros_like(self.local)

    def update(self, consensus, rho, rows=slice(None)):
        yb = consensus[self.idx[rows]]
        self.multiplier[rows] += rho * (self.local[rows] - yb)
        z = yb - self.multiplier[rows] / rho
        if self.kind == "linear":
            self.local[rows] = z - self.weights[rows] / rho
            return
        a = self.coeffs[rows]
        lz = np.einsum("ij,ij->i", a, z) + self.offsets[rows]
        if self.kind == "hinge":
            w = self.weights[rows]
            if self.extra == 1:
                x2 = z - (w / rho)[:, None] * a
                l2 = np.einsum("ij,ij->i", a, x2) + self.offsets[rows]
                x3 = z - (lz / self.norm2[rows])[:, None] * a
                out = np.where((l2 >= 0.0)[:, None], x2, x3)
            else:
                scale = 2.0 * w * lz / (rho + 2.0 * w * self.norm2[rows])
                out = z - scale[:, None] * a
            self.local[rows] = np.where((lz <= 0.0)[:, None], z, out)
        else:
            proj = z - (lz / self.norm2[rows])[:, None] * a
            if self.extra is Relation.LEQ:
                self.local[rows] = np.where((lz <= 0.0)[:, None], z, proj)
            else:
                self.local[rows] = proj

    def energy(self, consensus):
        if self.kind != "hinge":
            return 0.0
        lv = np.einsum("ij,ij->i", self.coeffs, consensus[self.idx]) + self.offsets
        hinge = np.maximum(lv, 0.0)
        if self.extra == 2:
            hinge = hinge * hinge
        return float(self.weights @ hinge)


class _CompiledModel:
    def __init__(self, mrf: HlMrf, pot_mask=None, con_mask=None, extra_linear=None):
        table = mrf.table
        self.mrf = mrf
        self.n = table.n_free
        buckets = {}
        self.constant_energy = 0.0

        def add(kind, extra, idx, coeffs, offset, weight):
            key = (kind, extra, len(idx))
            buckets.setdefault(key, []).append((idx, coeffs, offset, weight))

        for j, pot in enumerate(mrf.potentials):
            if pot_mask is not None and not pot_mask[j]:
                continue
            lf = pot.linfun.fold_observed(table)
            w = float(mrf.weights[pot.template_id])
            if not lf.terms:
                self.constant_energy += w * max(lf.offset, 0.0) ** pot.exponent
                continue
            idx = [table.free_position(i) for i, _ in lf.terms]
            add("hinge", pot.exponent, idx, [c for _, c in lf.terms], lf.offset, w)
        for k, con in enumerate(mrf.constraints):
            if con_mask is not None and not con_mask[k]:
                continue
            lf = con.linfun.fold_observed(table)
            if not lf.terms:
                ok = abs(lf.offset) <= 1e-9 if con.relation is Relation.EQ else lf.offset <= 1e-9
                if not ok:
                    raise ModelError("constraint %d is constant and violated" % k)
                continue
            idx = [table.free_position(i) for i, _ in lf.terms]
            add("constraint", con.relation, idx, [c for _, c in lf.terms], lf.offset, 0.0)

        self.groups = []
        for (kind, extra, _), rows in sorted(
            buckets.items(), key=lambda kv: (kv[0][0], str(kv[0][1]), kv[0][2])
        ):
            idx = np.array([r[0] for r in rows], dtype=np.intp)
            coeffs = np.array([r[1] for r in rows], dtype=float)
            offsets = np.array([r[2] for r in rows], dtype=float)
            weights = np.array([r[3] for r in rows], dtype=float)
            group = _Group(kind, extra, idx, coeffs, offsets, weights)
            if kind == "constraint" and np.any(group.norm2 == 0.0):
                raise ModelError("constraint has an all-zero normal vector")
            self.groups.append(group)

        self.linear = None
        if extra_linear is not None:
            c = np.asarray(extra_linear, dtype=float)
            if c.shape != (self.n,):
                raise ModelError("extra linear objective must have one entry per free variable")
            nz = np.nonzero(c)[0]
            if nz.size:
                self.linear = _Group(
                    "linear", None, nz[:, None], np.ones((nz.size, 1)), None, c[nz][:, None]
                )
                self.groups.append(self.linear)
        self.extra_linear = extra_linear

        self.counts = np.zeros(self.n)
        for g in self.groups:
            np.add.at(self.counts, g.idx.ravel(), 1.0)
        self.total_copies = float(self.counts.sum())

    def objective(self, y):
        value = self.constant_energy + sum(g.energy(y) for g in self.groups)
        if self.extra_linear is not None:
            value += float(np.asarray(self.extra_linear) @ y)
        return value

    def energy(self, y):
        return self.constant_energy + sum(g.energy(y) for g in self.groups)


def _run_admm(compiled: _CompiledModel, opts: SolveOptions, initial=None):
    n = compiled.n
    y = np.full(n, 0.5) if initial is None else np.asarray(initial, dtype=float).copy()
    for g in compiled.groups:
        g.reset(y)
    if compiled.total_copies == 0:
        diag = Diagnostics(converged=True, objective=compiled.objective(y), energy=compiled.energy(y))
        return y, diag

    rho = opts.rho
    sqrt_copies = np.sqrt(compiled.total_copies)
    pool = None
    slices = None
    if opts.workers > 1:
        pool = ThreadPoolExecutor(max_workers=opts.workers)
        slices = {
            id(g): [
                s
                for s in (
                    slice(start, min(start + chunk, g.idx.shape[0]))
                    for chunk in [max(1, -(-g.idx.shape[0] // opts.workers))]
                    for start in range(0, g.idx.shape[0], chunk)
                )
            ]
            for g in compiled.groups
        }

    diag = Diagnostics()
    best_primal = np.inf
    last_improvement = 0
    try:
        for it in range(1, opts.max_iter + 1):
            if pool is None:
                for g in compiled.groups:
                    g.update(y, rho)
            else:
                futures = [
                    pool.submit(g.update, y, rho, rows)
                    for g in compiled.groups
                    for rows in slices[id(g)]
                ]
                for f in futures:
                    f.result()

            total = np.zeros(n)
            for g in compiled.groups:
                total += np.bincount(
                    g.idx.ravel(), (g.local + g.multiplier / rho).ravel(), minlength=n
                )
            touched = compiled.counts > 0
            y_new = y.copy()
            y_new[touched] = np.clip(total[touched] / compiled.counts[touched], 0.0, 1.0)

            primal_sq = local_sq = mult_sq = 0.0
            for g in compiled.groups:
                diff = g.local - y_new[g.idx]
                primal_sq += float(np.einsum("ij,ij->", diff, diff))
                local_sq += float(np.einsum("ij,ij->", g.local, g.local))
                mult_sq += float(np.einsum("ij,ij->", g.multiplier, g.multiplier))
            primal = np.sqrt(primal_sq)
            dual = rho * np.sqrt(float(compiled.counts @ (y_new - y) ** 2))
            eps_pri = opts.eps_abs * sqrt_copies + opts.eps_rel * max(
                np.sqrt(local_sq), np.sqrt(float(compiled.counts @ y_new**2))
            )
            eps_dual = opts.eps_abs * sqrt_copies + opts.eps_rel * np.sqrt(mult_sq)
            y = y_new

            if opts.trace is not None:
                opts.trace(it, primal, dual, compiled.objective(y))

            diag.iterations = it
            diag.primal_residual = primal
            diag.dual_residual = dual
            if primal <= eps_pri and dual <= eps_dual:
                diag.converged = True
                break

            if primal < best_primal * (1.0 - 1e-9):
                best_primal = primal
                last_improvement = it
            elif it - last_improvement >= _STALL_WINDOW and primal > eps_pri:
                diag.infeasible = True
                diag.message = (
                    "primal residual stalled at %.3g for %d iterations; "
                    "the hard constraints may be infeasible" % (primal, _STALL_WINDOW)
                )
                break
        else:
            diag.message = "iteration limit reached (%d)" % opts.max_iter
    finally:
        if pool is not None:
            pool.shutdown()

    diag.objective = compiled.objective(y)
    diag.energy = compiled.energy(y)
    return y, diag


def solve_map(mrf: HlMrf, opts: SolveOptions | None = None, extra_linear=None, initial=None):
    """MAP inference: minimize the energy over the feasible unit box.

    Returns ``(y, diagnostics)`` where ``y`` is aligned with the table's
    free variables. ``extra_linear`` adds raw linear objective terms (used
    by loss-augmented inference); ``initial`` overrides the centered start.
    """
    opts = opts or SolveOptions()
    if mrf.table.n_free < 1:
        raise ModelError("model has no free variables")
    compiled = _CompiledModel(mrf, extra_linear=extra_linear)
    return _run_admm(compiled, opts, initial=initial)


def solve_map_lazy(mrf: HlMrf, opts: SolveOptions | None = None, extra_linear=None):
    """MAP inference over a lazily grown active set.

    Starts from the all-zeros assignment with nothing active, repeatedly
    activates potentials and constraints unsatisfied by more than the
    activation threshold, and re-solves until nothing new activates. With
    threshold 0 the result matches the full solve; larger thresholds are a
    speed heuristic without guarantees.
    """
    opts = opts or SolveOptions()
    if mrf.table.n_free < 1:
        raise ModelError("model has no free variables")
    threshold = opts.activation_threshold
    values = None  # full table values, refreshed per round

    pot_mask = np.zeros(len(mrf.potentials), dtype=bool)
    con_mask = np.zeros(len(mrf.constraints), dtype=bool)
    y = np.zeros(mrf.table.n_free)
    diag = Diagnostics(converged=True)
    total_iterations = 0

    for _ in range(len(mrf.potentials) + len(mrf.constraints) + 1):
        values = mrf.table.full_values(y)
        activated = False
        for j, pot in enumerate(mrf.potentials):
            if not pot_mask[j] and pot.value(values) > threshold:
                pot_mask[j] = True
                activated = True
        for k, con in enumerate(mrf.constraints):
            if not con_mask[k] and con.violation(values) > threshold:
                con_mask[k] = True
                activated = True
        if not activated:
            break
        compiled = _CompiledModel(mrf, pot_mask=pot_mask, con_mask=con_mask, extra_linear=extra_linear)
        y, diag = _run_admm(compiled, opts, initial=y)
        total_iterations += diag.iterations

    full = _CompiledModel(mrf, extra_linear=extra_linear)
    diag.iterations = total_iterations
    diag.objective = full.objective(y)
    diag.energy = full.energy(y)
    diag.activated_potentials = int(pot_mask.sum())
    diag.activated_constraints = int(con_mask.sum())
    return y, diag


def project_feasible(mrf: HlMrf, y, tol: float = 1e-9, max_rounds: int = 10000):
    """Cyclic projection of an assignment onto the hard constraints and box."""
    table = mrf.table
    y = np.clip(np.asarray(y, dtype=float).copy(), 0.0, 1.0)
    folded = []
    for con in mrf.constraints:
        lf = con.linfun.fold_observed(table)
        if not lf.terms:
            continue
        idx = np.array([table.free_position(i) for i, _ in lf.terms], dtype=np.intp)
        a = np.array([c for _, c in lf.terms])
        folded.append((idx, a, lf.offset, float(a @ a), con.relation))
    for _ in range(max_rounds):
        worst = 0.0
        for idx, a, b, norm2, relation in folded:
            value = float(a @ y[idx] + b)
            if relation is Relation.LEQ and value <= 0.0:
                continue
            y[idx] -= (value / norm2) * a
        np.clip(y, 0.0, 1.0, out=y)
        for idx, a, b, norm2, relation in folded:
            value = float(a @ y[idx] + b)
            gap = abs(value) if relation is Relation.EQ else max(value, 0.0)
            worst = max(worst, gap)
        if worst <= tol:
            break
    return y
