"""
Tests de validation pour les contraintes de capacité
Vérifie le rationnement, l'équilibre de candidature et la vérification sous capacité
"""

import pytest
import numpy as np
import sys
from pathlib import Path

sys.path.append(str(Path(__file__).parent.parent / "src"))

from extensions.capacity import (
    CapacityConfig,
    capacity_payoff,
    rationing,
    solve_application_equilibrium,
    solve_binary_application_equilibrium,
    verify_capacity_equilibrium,
)
from models.market import SelectionProcedure
from models.signal_tests import Test
from models.test_set import TestSet
from models.type_space import TypeGrid
from optimization.equilibrium import verify_symmetric, zero_profit_alpha


@pytest.fixture
def binary_grid():
    return TypeGrid.binary(-1.0, 1.0, 0.4)


@pytest.fixture
def two_tests(binary_grid):
    return TestSet.explicit([[0.2, 0.8], [0.3, 0.9]], binary_grid)


class TestRationing:
    """Tests pour p = min{1, k / masse}"""

    @pytest.mark.parametrize("mass, k, expected", [
        (0.25, 0.1, 0.4),
        (0.05, 0.1, 1.0),
        (0.0, 0.1, 1.0),
        (0.0, 5.0, 1.0),
    ])
    def test_examples(self, mass, k, expected):
        assert rationing(mass, k) == pytest.approx(expected)

    def test_negative_mass(self):
        with pytest.raises(ValueError):
            rationing(-0.1, 0.1)

    @pytest.mark.parametrize("k", [0.0, -0.5])
    def test_capacity_positive(self, k):
        with pytest.raises(ValueError):
            CapacityConfig(k)


class TestApplicationEquilibrium:
    """Tests pour l'équilibre de candidature sous rationnement"""

    def test_identical_procedures_split(self, two_tests):
        proc = SelectionProcedure(two_tests[0], 1.0, 0.0)
        outcome = solve_binary_application_equilibrium(proc, proc, CapacityConfig(0.1))

        assert outcome.pattern == "MM"
        np.testing.assert_allclose(outcome.profile.phi, 0.5)
        assert outcome.p1 == pytest.approx(0.1 / 0.22)
        assert outcome.feasible(0.1)

    def test_empty_firm_loses_everyone(self, two_tests):
        accept = SelectionProcedure(two_tests[0], 1.0, 1.0)
        reject = SelectionProcedure(two_tests[0], 0.0, 0.0)
        outcome = solve_binary_application_equilibrium(accept, reject)

        np.testing.assert_allclose(outcome.profile.phi, 1.0)
        assert outcome.p1 == 1.0

    def test_outcomes_are_feasible(self, binary_grid):
        """p·masse ≤ k + 1e-10 pour chaque firme sur des procédures aléatoires"""
        rng = np.random.default_rng(8)
        cap = CapacityConfig(0.1)
        for _ in range(50):
            procs = [
                SelectionProcedure(Test(pi=np.sort(rng.uniform(0.05, 0.95, 2)), grid=binary_grid),
                                   rng.uniform(0.2, 1.0), 0.0)
                for _ in range(2)
            ]
            outcome = solve_binary_application_equilibrium(procs[0], procs[1], cap, favoured=2)

            assert outcome.feasible(cap.k), "Contrainte de capacité violée"

    def test_fixed_point_on_general_grid(self):
        grid = TypeGrid.uniform(-1.0, 1.0, 11)
        proc = SelectionProcedure(Test(pi=np.linspace(0.1, 0.9, 11), grid=grid), 1.0, 0.0)
        outcome = solve_application_equilibrium(proc, proc, CapacityConfig(0.1))

        assert outcome.converged and outcome.method == "fixed_point"
        np.testing.assert_allclose(outcome.profile.phi, 0.5)
        assert outcome.p1 == pytest.approx(0.1 / outcome.mass1)
        assert outcome.feasible(0.1)

    def test_non_binary_pattern_solver(self):
        grid = TypeGrid.uniform(-1.0, 1.0, 5)
        proc = SelectionProcedure(Test(pi=np.linspace(0.1, 0.9, 5), grid=grid), 1.0, 0.0)

        with pytest.raises(ValueError):
            solve_binary_application_equilibrium(proc, proc)


class TestCapacityEquilibrium:
    """Tests pour la vérification sous capacité"""

    def test_hardest_test_is_equilibrium(self, two_tests):
        """k = 0.1 < ½·0.44 : le test le plus difficile avec α = (1, 0) est un équilibre"""
        candidate = SelectionProcedure(two_tests[0], 1.0, 0.0)
        report = verify_capacity_equilibrium(candidate, two_tests, CapacityConfig(0.1))

        assert report.is_equilibrium, f"Gain trouvé : {report.best_gain}"
        assert report.equilibrium_payoff == pytest.approx(0.1 * 0.20 / 0.44, abs=1e-10)
        assert not report.notes

    def test_easier_test_is_beaten(self, two_tests):
        candidate = SelectionProcedure(two_tests[1], 1.0, 0.0)
        report = verify_capacity_equilibrium(candidate, two_tests, CapacityConfig(0.1))

        assert not report.is_equilibrium
        assert report.best_gain > 0.0
        assert any("plus difficile" in note for note in report.notes)

    def test_payoff_matches_outcome(self, two_tests):
        proc = SelectionProcedure(two_tests[0], 1.0, 0.0)
        outcome = solve_binary_application_equilibrium(proc, proc, CapacityConfig(0.1))

        assert capacity_payoff(proc, outcome, 1) == pytest.approx(capacity_payoff(proc, outcome, 2))

    def test_slack_capacity_reduces_to_baseline(self, binary_grid):
        test_set = TestSet.explicit([[0.2, 0.8], [0.275, 0.725], [0.35, 0.65]], binary_grid)
        candidate = zero_profit_alpha(test_set[0])
        report = verify_capacity_equilibrium(candidate, test_set, CapacityConfig(1.0))
        baseline = verify_symmetric(candidate, test_set)

        assert report.is_equilibrium == baseline.is_equilibrium
        assert report.best_gain == pytest.approx(baseline.best_gain)
        assert any("jamais saturée" in note for note in report.notes)

    def test_fixed_point_budget_is_honoured(self):
        """Un budget d'itérations trop court laisse le point fixe non convergé, et c'est signalé"""
        grid = TypeGrid.uniform(-1.0, 1.0, 11)
        test = Test(pi=np.linspace(0.1, 0.9, 11), grid=grid)
        proc = SelectionProcedure(test, 1.0, 0.0)

        outcome = solve_application_equilibrium(proc, proc, CapacityConfig(0.1), max_iter=3)
        assert not outcome.converged
        assert outcome.iterations == 3

        short = verify_capacity_equilibrium(proc, TestSet([test]), CapacityConfig(0.1), alpha_steps=4,
                                            fixed_point_max_iter=1)
        assert any("non convergés" in note for note in short.notes)
