import json

import numpy as np
import pytest

from softlogic.model import (
    GroundAtom,
    HingePotential,
    HlMrf,
    LinearFunction,
    ModelError,
    TemplateInfo,
    VariableTable,
)

from helpers import eq, hinge, leq, make_mrf, random_mrf


class TestLinearFunction:
    def test_merges_duplicates_and_drops_zeros(self):
        lf = LinearFunction([(2, 1.0), (2, -1.0), (0, 0.5), (1, 0.0)], 0.3)
        assert lf.terms == ((0, 0.5),)
        assert lf.offset == 0.3

    def test_value(self):
        lf = LinearFunction([(0, 2.0), (1, -1.0)], 0.5)
        assert lf.value([0.5, 0.25]) == pytest.approx(1.25)

    def test_fold_observed(self):
        table = VariableTable([GroundAtom("a"), GroundAtom("b")], {1: 0.25})
        lf = LinearFunction([(0, 1.0), (1, 2.0)], -0.5)
        folded = lf.fold_observed(table)
        assert folded.terms == ((0, 1.0),)
        assert folded.offset == pytest.approx(0.0)


class TestVariableTable:
    def test_partition_covers_all_indices(self):
        table = VariableTable([GroundAtom("a"), GroundAtom("b"), GroundAtom("c")], {1: 0.5})
        assert table.free_indices == (0, 2)
        assert set(table.observed) | set(table.free_indices) == {0, 1, 2}

    def test_rejects_out_of_range_values(self):
        with pytest.raises(ModelError):
            VariableTable([GroundAtom("a")], {0: 1.5})

    def test_assignment_dimension_checked(self):
        table = VariableTable([GroundAtom("a"), GroundAtom("b")], {0: 1.0})
        with pytest.raises(ModelError):
            table.full_values(np.array([0.1, 0.2]))


class TestEnergy:
    def test_hinge_flat_region(self):
        mrf = make_mrf([hinge([(0, 1.0)], 0.0)], weights=[3.0])
        assert mrf.energy([0.0]) == 0.0

    def test_hinge_active_region(self):
        mrf = make_mrf([hinge([(0, 1.0)], 0.0)], weights=[3.0])
        assert mrf.energy([0.5]) == pytest.approx(1.5)

    def test_squared_hinge(self):
        mrf = make_mrf([hinge([(0, -1.0)], 1.0, exponent=2)], weights=[1.0])
        assert mrf.energy([0.4]) == pytest.approx(0.36)

    def test_nonnegative_on_random_instances(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            mrf = random_mrf(rng)
            y = rng.uniform(0.0, 1.0, size=mrf.n_free)
            assert mrf.energy(y) >= 0.0

    def test_convexity_on_random_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            mrf = random_mrf(rng)
            y1 = rng.uniform(0, 1, size=mrf.n_free)
            y2 = rng.uniform(0, 1, size=mrf.n_free)
            lam = rng.uniform()
            mixed = mrf.energy(lam * y1 + (1 - lam) * y2)
            bound = lam * mrf.energy(y1) + (1 - lam) * mrf.energy(y2)
            assert mixed <= bound + 1e-12


class TestFeasibility:
    def test_equality_satisfied(self):
        mrf = make_mrf([], [eq([(0, 1.0), (1, 1.0)], -1.0)], weights=[], n=2)
        feasible, violated = mrf.check_feasible([0.65, 0.35], tol=1e-9)
        assert feasible and not violated

    def test_inequality_violated_is_reported(self):
        con = leq([(0, 1.0), (1, 1.0)], -1.0)
        mrf = make_mrf([], [con], weights=[], n=2)
        feasible, violated = mrf.check_feasible([0.9, 0.6], tol=1e-9)
        assert not feasible
        assert violated == [con]

    def test_empty_constraint_set_is_vacuous(self):
        mrf = make_mrf([hinge([(0, 1.0)], 0.0)], weights=[1.0])
        assert mrf.check_feasible([0.7])[0]

    def test_negative_tolerance_rejected(self):
        mrf = make_mrf([], [], weights=[], n=1)
        with pytest.raises(ModelError):
            mrf.check_feasible([0.5], tol=-1.0)


class TestTemplateFeatures:
    def test_features_sum_within_template(self):
        pots = [hinge([(0, 1.0)], -0.3), hinge([(0, 1.0)], -0.2)]
        mrf = make_mrf(pots, weights=[2.0])
        phi = mrf.template_features([0.5])
        assert phi[0] == pytest.approx(0.2 + 0.3)

    def test_template_with_zero_groundings(self):
        mrf = make_mrf([hinge([(0, 1.0)], 0.0, template=1)], weights=[4.0, 1.0])
        phi = mrf.template_features([0.25])
        assert phi[0] == 0.0
        assert phi[1] == pytest.approx(0.25)

    def test_energy_is_weight_dot_features(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            mrf = random_mrf(rng)
            y = rng.uniform(0, 1, size=mrf.n_free)
            energy = mrf.energy(y)
            via_phi = float(mrf.weights @ mrf.template_features(y))
            assert energy == pytest.approx(via_phi, rel=1e-12, abs=1e-300)


class TestValidation:
    def test_negative_weight_rejected(self):
        with pytest.raises(ModelError):
            make_mrf([hinge([(0, 1.0)], 0.0)], weights=[-1.0])

    def test_bad_exponent_rejected(self):
        with pytest.raises(ModelError):
            HingePotential(LinearFunction([(0, 1.0)], 0.0), exponent=3)

    def test_grounding_count_mismatch(self):
        table = VariableTable([GroundAtom("a")])
        with pytest.raises(ModelError):
            HlMrf(table, [hinge([(0, 1.0)], 0.0)], [], [TemplateInfo("t", 2)], [1.0])

    def test_constant_potential_warns_but_contributes_zero(self):
        with pytest.warns(UserWarning):
            mrf = make_mrf([hinge([], -1.0)], weights=[1.0])
        assert mrf.energy([0.3]) == 0.0


class TestSerialization:
    def test_round_trip_bytes(self):
        rng = np.random.default_rng(7)
        mrf = random_mrf(rng, constrained=True)
        text = mrf.to_json()
        again = HlMrf.from_json(text)
        assert again.to_json() == text

    def test_round_trip_preserves_energy(self):
        rng = np.random.default_rng(9)
        mrf = random_mrf(rng, constrained=True)
        again = HlMrf.from_json(mrf.to_json())
        y = rng.uniform(0, 1, size=mrf.n_free)
        assert again.energy(y) == mrf.energy(y)

    def test_version_check(self):
        rng = np.random.default_rng(3)
        doc = random_mrf(rng).to_dict()
        doc["version"] = 99
        with pytest.raises(ModelError):
            HlMrf.from_dict(doc)

    def test_format_is_versioned_json(self):
        doc = json.loads(make_mrf([hinge([(0, 1.0)], 0.0)], weights=[1.0]).to_json())
        assert doc["format"] == "softlogic-ground-model"
        assert doc["version"] == 1
