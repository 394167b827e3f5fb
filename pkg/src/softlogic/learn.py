"""Weight learning over templated models.

Three estimators share the template feature map Phi (per-template sums of
unweighted potential values): a structured-perceptron approximation of
maximum likelihood, maximum pseudolikelihood with deterministic quadrature,
and large-margin estimation with a cutting-plane loop around a
loss-augmented separation oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .infer import SolveOptions, solve_map
from .model import HlMrf, ModelError, Relation


class UnsupportedStructureError(ModelError):
    """Constraint structure outside the classes pseudolikelihood supports."""


@dataclass
class TrainingInstance:
    """A ground model paired with the full truth for its free variables."""

    mrf: HlMrf
    truth: np.ndarray

    def __post_init__(self):
        self.truth = np.asarray(self.truth, dtype=float)
        if self.truth.shape != (self.mrf.n_free,):
            raise ModelError(
                "truth has shape %s, expected (%d,)" % (self.truth.shape, self.mrf.n_free)
            )
        if np.any(self.truth < 0) or np.any(self.truth > 1):
            raise ModelError("truth values must lie in [0, 1]")
        feasible, violated = self.mrf.check_feasible(self.truth, tol=1e-6)
        if not feasible:
            raise ModelError(
                "truth violates %d hard constraint(s) of the instance" % len(violated)
            )


def _grounding_scale(mrf: HlMrf) -> np.ndarray:
    counts = np.array([t.groundings for t in mrf.templates], dtype=float)
    return np.where(counts > 0, counts, 1.0)


# -- maximum likelihood / structured perceptron -----------------------------


def mle_gradient(instance: TrainingInstance, weights, opts: SolveOptions | None = None):
    """Log-likelihood ascent direction with the MAP-state approximation.

    The expected features are replaced by the features of the most probable
    assignment under the current weights; each component is divided by its
    template's grounding count.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ModelError("weights must be nonnegative")
    model = instance.mrf.with_weights(weights)
    y_map, diag = solve_map(model, opts)
    if diag.infeasible:
        raise ModelError("inference failed during learning: %s" % diag.message)
    phi_map = model.template_features(y_map)
    phi_truth = model.template_features(instance.truth)
    return (phi_map - phi_truth) / _grounding_scale(model)


def perceptron_train(
    instances,
    steps: int = 100,
    step_size: float = 1.0,
    init=None,
    opts: SolveOptions | None = None,
):
    """Fixed-step gradient ascent, projected to nonnegative weights.

    Returns the average of the post-projection iterates over all steps. All
    instances must be groundings of the same program (same template list).
    """
    if steps < 1 or step_size <= 0:
        raise ModelError("need steps >= 1 and step_size > 0")
    instances = list(instances)
    n_templates = len(instances[0].mrf.templates)
    weights = (
        np.ones(n_templates) if init is None else np.asarray(init, dtype=float).copy()
    )
    averaged = np.zeros(n_templates)
    for _ in range(steps):
        gradient = np.zeros(n_templates)
        for instance in instances:
            gradient += mle_gradient(instance, weights, opts)
        weights = np.maximum(weights + step_size * gradient, 0.0)
        averaged += weights
    return averaged / steps


# -- maximum pseudolikelihood ------------------------------------------------


def _folded_potentials(mrf: HlMrf):
    """Potentials with observations folded, mapped to free positions."""
    table = mrf.table
    out = []
    for pot in mrf.potentials:
        lf = pot.linfun.fold_observed(table)
        positions = np.array([table.free_position(i) for i, _ in lf.terms], dtype=np.intp)
        coeffs = np.array([c for _, c in lf.terms])
        out.append((positions, coeffs, lf.offset, pot.exponent, pot.template_id))
    return out


def _partition_variables(mrf: HlMrf):
    """Split free variables into unconstrained singletons and simplex blocks.

    Supported blocks are equality constraints of the form
    ``sum of free variables = 1`` with unit coefficients, pairwise disjoint
    and not mixed with any other constraint; anything else is rejected.
    """
    table = mrf.table
    owner = {}
    blocks = []
    for con in mrf.constraints:
        lf = con.linfun.fold_observed(table)
        positions = [table.free_position(i) for i, _ in lf.terms]
        if not positions:
            continue
        if (
            con.relation is not Relation.EQ
            or any(c != 1.0 for _, c in lf.terms)
            or lf.offset != -1.0
        ):
            raise UnsupportedStructureError(
                "pseudolikelihood supports only disjoint sum-to-one equality blocks"
            )
        for p in positions:
            if p in owner:
                raise UnsupportedStructureError(
                    "variable participates in more than one hard constraint"
                )
            owner[p] = len(blocks)
        blocks.append(tuple(positions))
    singletons = [p for p in range(mrf.n_free) if p not in owner]
    return singletons, blocks


def mple_log_and_gradient(
    instance: TrainingInstance,
    weights,
    quadrature: int = 257,
    block_samples: int = 1000,
    seed: int = 0,
):
    """Log pseudolikelihood and its per-template gradient.

    Unconstrained variables use composite-trapezoid quadrature over [0, 1]
    with ``quadrature`` points for the conditional normalizer and
    expectation; simplex blocks use seeded uniform simplex sampling. The
    gradient is scaled by template grounding counts, like the MLE gradient.
    """
    weights = np.asarray(weights, dtype=float)
    if quadrature < 2:
        raise ModelError("quadrature needs at least two points")
    mrf = instance.mrf
    n_templates = len(mrf.templates)
    truth = instance.truth
    potentials = _folded_potentials(mrf)
    singletons, blocks = _partition_variables(mrf)

    touching = [[] for _ in range(mrf.n_free)]
    for j, (positions, *_rest) in enumerate(potentials):
        for p in positions:
            touching[p].append(j)

    def potential_values(j, assignments):
        """phi_j over the rows of ``assignments`` (n_points x n_free slice)."""
        positions, coeffs, offset, exponent, _ = potentials[j]
        lin = assignments[:, positions] @ coeffs + offset
        hinge = np.maximum(lin, 0.0)
        return hinge if exponent == 1 else hinge * hinge

    log_pl = 0.0
    grad = np.zeros(n_templates)
    grid = np.linspace(0.0, 1.0, quadrature)
    rng = np.random.default_rng(seed)

    def accumulate(var_positions, states, log_weights=None, quad_grid=None):
        """One conditional: states are full assignments varying var_positions."""
        nonlocal log_pl
        js = sorted({j for p in var_positions for j in touching[p]})
        energies = np.zeros(states.shape[0])
        phi = {}
        for j in js:
            values = potential_values(j, states)
            phi[j] = values
            energies += weights[potentials[j][4]] * values
        truth_row = truth[np.newaxis, :]
        truth_energy = 0.0
        phi_truth = {}
        for j in js:
            v = potential_values(j, truth_row)[0]
            phi_truth[j] = v
            truth_energy += weights[potentials[j][4]] * v

        shift = energies.min() if energies.size else 0.0
        density = np.exp(-(energies - shift))
        if quad_grid is not None:
            z_shifted = np.trapezoid(density, quad_grid)
            expect = lambda f: np.trapezoid(f * density, quad_grid) / z_shifted
        else:
            z_shifted = density.mean()
            expect = lambda f: (f * density).mean() / z_shifted
        log_z = np.log(z_shifted) - shift
        log_pl += -truth_energy - log_z
        for j in js:
            tid = potentials[j][4]
            grad[tid] += expect(phi[j]) - phi_truth[j]

    base = np.tile(truth, (quadrature, 1))
    for p in singletons:
        states = base.copy()
        states[:, p] = grid
        accumulate((p,), states, quad_grid=grid)

    for block in blocks:
        k = len(block)
        samples = rng.dirichlet(np.ones(k), size=block_samples)
        states = np.tile(truth, (block_samples, 1))
        states[:, list(block)] = samples
        accumulate(block, states)

    return log_pl, grad / _grounding_scale(mrf)


# -- large-margin estimation ---------------------------------------------------


@dataclass
class SeparationResult:
    violator: np.ndarray
    loss: float
    violation: float  # margin violation ignoring slack
    converged: bool = True


def lme_separation_oracle(
    instance: TrainingInstance,
    weights,
    opts: SolveOptions | None = None,
    dca_max_iter: int = 50,
):
    """Worst-violated margin constraint via loss-augmented inference.

    The l1 loss enters as linear objective terms. For {0,1} truth those are
    exact; interior truth values make the augmentation concave, handled by a
    difference-of-convex iteration over the +/-1 subgradient directions,
    initialized by rounding the truth.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ModelError("weights must be nonnegative")
    model = instance.mrf.with_weights(weights)
    truth = instance.truth
    binary = np.all((truth == 0.0) | (truth == 1.0))

    if binary:
        coeff = np.where(truth == 1.0, 1.0, -1.0)
        violator, _ = solve_map(model, opts, extra_linear=coeff)
        converged = True
    else:
        # Assume the violator sits opposite the rounded truth, then flip
        # directions that the solution contradicts until a fixed point.
        side = np.where(np.round(truth) == 0.0, 1.0, -1.0)
        best = None
        converged = False
        for _ in range(dca_max_iter):
            violator, _ = solve_map(model, opts, extra_linear=-side)
            objective = float(
                weights @ model.template_features(violator)
                - np.abs(truth - violator).sum()
            )
            if best is None or objective < best[0] - 1e-12:
                best = (objective, violator)
            flipped = np.where(
                side > 0, violator < truth - 1e-9, violator > truth + 1e-9
            )
            if not flipped.any():
                converged = True
                break
            side = np.where(flipped, -side, side)
        violator = best[1]

    loss = float(np.abs(truth - violator).sum())
    gap = model.template_features(truth) - model.template_features(violator)
    violation = float(weights @ gap) + loss
    return SeparationResult(violator, loss, violation, converged)


@dataclass
class CutRecord:
    feature_gap: np.ndarray  # Phi(truth) - Phi(violator), summed over instances
    loss: float


@dataclass
class CuttingPlaneSet:
    records: list = field(default_factory=list)
    slack: float = 0.0
    C: float = 0.1

    def __post_init__(self):
        if self.C <= 0:
            raise ModelError("C must be positive")
        if self.slack < 0:
            raise ModelError("slack must be nonnegative")


def solve_margin_qp(cuts: CuttingPlaneSet, n_templates: int, tol: float = 1e-6, max_iter: int = 200000):
    """Minimize 0.5||w||^2 + C*xi subject to the recorded cuts, w >= 0.

    Solved in the dual by accelerated projected gradient: the dual variables
    live on the scaled simplex {mu >= 0, sum mu <= C}, and the primal
    weights recover as max(0, -gaps^T mu).
    """
    if not cuts.records:
        return np.zeros(n_templates), 0.0, 0.0
    gaps = np.array([r.feature_gap for r in cuts.records])
    losses = np.array([r.loss for r in cuts.records])
    C = cuts.C

    def project(mu):
        mu = np.maximum(mu, 0.0)
        total = mu.sum()
        if total <= C:
            return mu
        # Euclidean projection onto the simplex scaled to C.
        sorted_mu = np.sort(mu)[::-1]
        cumulative = np.cumsum(sorted_mu) - C
        ranks = np.arange(1, mu.size + 1)
        valid = sorted_mu - cumulative / ranks > 0
        theta = cumulative[valid][-1] / ranks[valid][-1]
        return np.maximum(mu - theta, 0.0)

    def primal(mu):
        return np.maximum(0.0, -(gaps.T @ mu))

    lipschitz = max(np.linalg.norm(gaps, 2) ** 2, 1e-12)
    step = 1.0 / lipschitz
    mu = np.zeros(len(losses))
    momentum = mu.copy()
    t_prev = 1.0
    for _ in range(max_iter):
        grad = gaps @ primal(momentum) + losses
        mu_next = project(momentum + step * grad)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev * t_prev))
        momentum = mu_next + ((t_prev - 1.0) / t_next) * (mu_next - mu)
        moved = np.linalg.norm(mu_next - mu)
        mu, t_prev = mu_next, t_next
        if moved <= tol * step * max(1.0, np.linalg.norm(losses)):
            break
    weights = primal(mu) + 0.0  # normalize -0.0 entries
    slack = max(0.0, float(np.max(losses + gaps @ weights)))
    objective = 0.5 * float(weights @ weights) + C * slack
    return weights, slack, objective


@dataclass
class LmeResult:
    weights: np.ndarray
    cuts: CuttingPlaneSet
    objective: float
    objective_history: list
    rounds: int
    converged: bool


def lme_train(
    instances,
    C: float = 0.1,
    tol: float = 1e-4,
    max_rounds: int = 100,
    opts: SolveOptions | None = None,
) -> LmeResult:
    """Cutting-plane large-margin estimation with a single slack variable.

    Each round solves the margin QP over the cuts found so far, queries the
    separation oracle on every instance, and stops once the aggregated new
    constraint is violated by at most ``tol``.
    """
    instances = list(instances)
    n_templates = len(instances[0].mrf.templates)
    cuts = CuttingPlaneSet(C=C)
    history = []
    weights = np.zeros(n_templates)
    slack = 0.0
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        weights, slack, objective = solve_margin_qp(cuts, n_templates)
        history.append(objective)
        gap = np.zeros(n_templates)
        loss = 0.0
        for instance in instances:
            result = lme_separation_oracle(instance, weights, opts)
            model = instance.mrf.with_weights(weights)
            gap += model.template_features(instance.truth) - model.template_features(
                result.violator
            )
            loss += result.loss
        violation = float(weights @ gap) + loss - slack
        if violation <= tol:
            converged = True
            break
        cuts.records.append(CutRecord(gap, loss))
    cuts.slack = slack
    return LmeResult(weights, cuts, history[-1], history, rounds, converged)
