"""
Équilibres à deux niveaux (firme sélective / firme sûre) pour Selection Equilibria
Conditions d'existence sous capacité, probabilité de mélange du type bas et vérification
"""

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

sys.path.append(str(Path(__file__).parent.parent))

from extensions.capacity import (
    CapacityConfig,
    capacity_payoff,
    rationing,
    solve_binary_application_equilibrium,
)
from models.market import (
    DEFAULT_TIE_TOL,
    SelectionProcedure,
    acceptance_prob,
    best_response_split,
    firm_payoff,
)
from models.signal_tests import Test
from models.test_set import TestSet
from models.type_space import TypeGrid
from optimization.equilibrium import (
    DEFAULT_ALPHA_STEPS,
    GAIN_TOL,
    DeviationSearch,
    baseline_evaluator,
)


PHI_TOL = 1e-9
RATIO_TOL = 1e-12
STANDARDS_TOL = 1e-12


@dataclass
class TwoTierConditions:
    theta_low_nonnegative: bool
    low_mass_dominates: bool
    selective_capacity_binds: bool
    safe_capacity_binds: bool
    selective_is_max_ratio: Optional[bool] = None

    def flags(self) -> Tuple[bool, bool, bool, bool]:
        return (self.theta_low_nonnegative, self.low_mass_dominates,
                self.selective_capacity_binds, self.safe_capacity_binds)

    @property
    def all_hold(self) -> bool:
        return all(self.flags()) and self.selective_is_max_ratio is not False


@dataclass
class TwoTierProfile:
    phi_low: float
    residual: float
    p_selective: float
    p_safe: float


@dataclass
class TwoTierCertificate:
    """Certificat de la construction à deux niveaux"""

    selective_proc: SelectionProcedure
    safe_proc: SelectionProcedure
    with_capacity: bool
    applicable: bool
    conditions: Optional[TwoTierConditions] = None
    phi_low: float = math.nan
    solver_phi_low: float = math.nan
    indifference_residual: float = math.nan
    deviation_gain_selective: float = math.nan
    deviation_gain_safe: float = math.nan
    best_deviation_selective: Optional[SelectionProcedure] = None
    best_deviation_safe: Optional[SelectionProcedure] = None
    gain_tol: float = GAIN_TOL
    notes: List[str] = field(default_factory=list)

    @property
    def is_equilibrium(self) -> bool:
        return (self.applicable
                and self.deviation_gain_selective <= self.gain_tol
                and self.deviation_gain_safe <= self.gain_tol)

    @property
    def confirmed(self) -> bool:
        """Sous capacité : équilibre vérifié. Sans capacité : une firme gagne à dévier"""
        if not self.applicable:
            return False
        if self.with_capacity:
            return self.is_equilibrium
        return max(self.deviation_gain_selective, self.deviation_gain_safe) > self.gain_tol

    def as_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {
            "selective": self.selective_proc.describe(),
            "safe": self.safe_proc.describe(),
            "with_capacity": self.with_capacity,
            "applicable": self.applicable,
        }
        if self.conditions is not None:
            for i, flag in enumerate(self.conditions.flags(), start=1):
                data[f"condition_{i}"] = flag
            if self.conditions.selective_is_max_ratio is not None:
                data["selective_is_max_ratio"] = self.conditions.selective_is_max_ratio
        data.update({
            "phi_low": self.phi_low,
            "solver_phi_low": self.solver_phi_low,
            "indifference_residual": self.indifference_residual,
            "deviation_gain_selective": self.deviation_gain_selective,
            "deviation_gain_safe": self.deviation_gain_safe,
        })
        if self.best_deviation_selective is not None:
            data["best_deviation_selective"] = self.best_deviation_selective.describe()
        if self.best_deviation_safe is not None:
            data["best_deviation_safe"] = self.best_deviation_safe.describe()
        data["is_equilibrium"] = self.is_equilibrium
        data["confirmed"] = self.confirmed
        for i, note in enumerate(self.notes):
            data[f"note_{i}"] = note
        return data


def _require_binary(grid: TypeGrid):
    if not grid.is_binary:
        raise ValueError("la construction à deux niveaux exige une grille binaire")


def _ratio_is_max(selective: Test, test_set: TestSet) -> bool:
    """π̄(θ̄)/π̄(θ̲) maximal dans l'ensemble, sous forme de produits croisés"""
    high, low = selective.pi[1], selective.pi[0]
    return all(high * other.pi[0] >= other.pi[1] * low - RATIO_TOL for other in test_set.tests)


def two_tier_conditions(grid: TypeGrid, selective_test: Test, safe_test: Test,
                        cap: CapacityConfig,
                        test_set: Optional[TestSet] = None) -> TwoTierConditions:
    """Les quatre inégalités d'existence, plus la maximalité du ratio si l'ensemble est fourni"""
    _require_binary(grid)
    mu = grid.mu
    sel_low, sel_high = float(selective_test.pi[0]), float(selective_test.pi[1])
    return TwoTierConditions(
        theta_low_nonnegative=grid.theta_low >= 0.0,
        low_mass_dominates=(1.0 - mu) * sel_low >= mu * sel_high,
        selective_capacity_binds=(mu * sel_high + (1.0 - mu) * sel_low) / 2.0 >= cap.k,
        safe_capacity_binds=float(safe_test.pi[0]) / 2.0 >= cap.k,
        selective_is_max_ratio=None if test_set is None else _ratio_is_max(selective_test, test_set),
    )


def two_tier_profile(grid: TypeGrid, selective_test: Test, cap: CapacityConfig,
                     safe_test: Optional[Test] = None) -> TwoTierProfile:
    """
    φ = (μπ̄(θ̄) + (1−μ)π̄(θ̲)) / (2(1−μ)π̄(θ̲)), probabilité que le type bas choisisse la firme sûre
    Le résidu compare les utilités rationnées du type bas chez les deux firmes
    """
    _require_binary(grid)
    mu, k = grid.mu, cap.k
    sel_low, sel_high = float(selective_test.pi[0]), float(selective_test.pi[1])
    failed = []
    if grid.theta_low < 0.0:
        failed.append("θ̲ ≥ 0")
    if (1.0 - mu) * sel_low < mu * sel_high:
        failed.append("(1−μ)π̄(θ̲) ≥ μπ̄(θ̄)")
    if (mu * sel_high + (1.0 - mu) * sel_low) / 2.0 < k:
        failed.append("(μπ̄(θ̄)+(1−μ)π̄(θ̲))/2 ≥ k")
    if safe_test is not None and float(safe_test.pi[0]) / 2.0 < k:
        failed.append("π(θ̲)/2 ≥ k")
    if failed:
        raise ValueError("conditions non satisfaites : " + ", ".join(failed))

    phi = (mu * sel_high + (1.0 - mu) * sel_low) / (2.0 * (1.0 - mu) * sel_low)
    p_selective = rationing(mu * sel_high + (1.0 - phi) * (1.0 - mu) * sel_low, k)
    safe_utility = k / ((1.0 - mu) * phi)
    residual = abs(p_selective * sel_low - safe_utility)
    p_safe = math.nan
    if safe_test is not None:
        p_safe = rationing(phi * (1.0 - mu) * float(safe_test.pi[0]), k)
    return TwoTierProfile(float(phi), float(residual), float(p_selective), p_safe)


def _deviation_procedure(test_set: TestSet, index: Optional[int], params,
                         fallback: SelectionProcedure) -> SelectionProcedure:
    if index is None:
        return fallback
    return SelectionProcedure(test_set[index], params[0], params[1])


def _capacity_search(selective: SelectionProcedure, safe: SelectionProcedure, test_set: TestSet,
                     cap: CapacityConfig, deviating_firm: int, reference: float,
                     alpha_steps: int, full_alpha: bool, full_alpha_steps: int,
                     threads: int, progress: bool):
    """Déviations d'une firme, équilibre de candidature re-résolu, égalités au profit de l'autre"""
    search = DeviationSearch(test_set, alpha_steps, full_alpha, threads, progress, full_alpha_steps)
    params = search.params
    own = selective if deviating_firm == 1 else safe
    other_firm = 2 if deviating_firm == 1 else 1

    def evaluate(index, test):
        payoffs = np.empty(len(params))
        for row, (alpha_h, alpha_l) in enumerate(params):
            deviation = SelectionProcedure(test, alpha_h, alpha_l)
            if deviating_firm == 1:
                outcome = solve_binary_application_equilibrium(deviation, safe, cap, other_firm)
            else:
                outcome = solve_binary_application_equilibrium(selective, deviation, cap, other_firm)
            payoffs[row] = capacity_payoff(deviation, outcome, deviating_firm)
        return payoffs, params

    best = search.run(evaluate, reference, own.alpha)
    return best.gain, _deviation_procedure(test_set, best.test_index, best.params, own)


def verify_two_tier(selective_proc: SelectionProcedure, safe_proc: SelectionProcedure,
                    test_set: TestSet, cap: Optional[CapacityConfig] = None,
                    alpha_steps: int = DEFAULT_ALPHA_STEPS, gain_tol: float = GAIN_TOL,
                    full_alpha: bool = True, full_alpha_steps: int = 21,
                    tie_tol: float = DEFAULT_TIE_TOL, threads: int = 1,
                    progress: bool = False) -> TwoTierCertificate:
    """
    Sans capacité : cherche la déviation profitable de la firme sélective (non-existence)
    Avec capacité : vérifie qu'aucune firme ne gagne à dévier, candidatures re-résolues
    """
    grid = selective_proc.grid
    _require_binary(grid)

    if cap is None:
        profile = best_response_split(selective_proc, safe_proc, tie_tol=tie_tol)
        search = DeviationSearch(test_set, alpha_steps, full_alpha, threads, progress, full_alpha_steps)
        selective_payoff = firm_payoff(selective_proc, safe_proc, profile)
        safe_payoff = firm_payoff(safe_proc, selective_proc, profile.complement())
        best_sel = search.run(baseline_evaluator(safe_proc, search, tie_tol), selective_payoff,
                              selective_proc.alpha)
        best_safe = search.run(baseline_evaluator(selective_proc, search, tie_tol), safe_payoff,
                               safe_proc.alpha)
        certificate = TwoTierCertificate(
            selective_proc=selective_proc,
            safe_proc=safe_proc,
            with_capacity=False,
            applicable=True,
            phi_low=float(1.0 - profile.phi[0]),
            deviation_gain_selective=best_sel.gain,
            deviation_gain_safe=best_safe.gain,
            best_deviation_selective=_deviation_procedure(test_set, best_sel.test_index,
                                                          best_sel.params, selective_proc),
            best_deviation_safe=_deviation_procedure(test_set, best_safe.test_index,
                                                     best_safe.params, safe_proc),
            gain_tol=gain_tol,
        )
        if best_sel.gain <= gain_tol:
            certificate.notes.append("aucune déviation sélective profitable sur le treillis")
        return certificate

    conditions = two_tier_conditions(grid, selective_proc.test, safe_proc.test, cap, test_set)
    certificate = TwoTierCertificate(selective_proc, safe_proc, with_capacity=True,
                                     applicable=conditions.all_hold, conditions=conditions,
                                     gain_tol=gain_tol)
    if not conditions.all_hold:
        certificate.notes.append("conditions non satisfaites : certificat non applicable")
        return certificate

    closed_form = two_tier_profile(grid, selective_proc.test, cap, safe_proc.test)
    outcome = solve_binary_application_equilibrium(selective_proc, safe_proc, cap, favoured=1)
    certificate.phi_low = closed_form.phi_low
    certificate.indifference_residual = closed_form.residual
    certificate.solver_phi_low = float(1.0 - outcome.profile.phi[0])
    if abs(certificate.solver_phi_low - certificate.phi_low) > PHI_TOL:
        certificate.notes.append("φ du solveur et φ de la forme close diffèrent")
    if not outcome.feasible(cap.k):
        certificate.notes.append("l'issue d'équilibre viole la contrainte de capacité")

    selective_payoff = capacity_payoff(selective_proc, outcome, 1)
    safe_payoff = capacity_payoff(safe_proc, outcome, 2)
    certificate.deviation_gain_selective, certificate.best_deviation_selective = _capacity_search(
        selective_proc, safe_proc, test_set, cap, 1, selective_payoff, alpha_steps,
        full_alpha, full_alpha_steps, threads, progress)
    certificate.deviation_gain_safe, certificate.best_deviation_safe = _capacity_search(
        selective_proc, safe_proc, test_set, cap, 2, safe_payoff, alpha_steps,
        full_alpha, full_alpha_steps, threads, progress)
    return certificate


def standards_change(own: SelectionProcedure, deviation: SelectionProcedure) -> str:
    """Classe d'une déviation selon le rapport d'acceptation type haut / type bas"""
    own_acc, dev_acc = acceptance_prob(own), acceptance_prob(deviation)
    if np.all(dev_acc <= STANDARDS_TOL):
        return "exit"
    cross = dev_acc[1] * own_acc[0] - own_acc[1] * dev_acc[0]
    if cross < -STANDARDS_TOL:
        return "lower_standards"
    if cross > STANDARDS_TOL:
        return "higher_standards"
    return "same_ratio"


def random_binary_instances(n: int, rng: np.random.Generator) -> List[Tuple[TypeGrid, Test, Test]]:
    """
    Instances binaires (grille, test sélectif, test sûr) à deux niveaux strictes sous (1, 0) :
    le type haut préfère la firme sélective, le type bas la firme sûre. θ̲ ∈ [−0.5, 0.5]
    """
    instances = []
    while len(instances) < n:
        i = len(instances)
        theta_low = float(rng.uniform(-0.5, 0.5))
        theta_high = max(theta_low, 0.0) + float(rng.uniform(0.1, 1.0))
        grid = TypeGrid.binary(theta_low, theta_high, float(rng.uniform(0.1, 0.9)))
        first = np.sort(rng.uniform(0.05, 0.95, 2))
        second = np.sort(rng.uniform(0.05, 0.95, 2))
        if first[1] < second[1]:
            first, second = second, first
        # le sélectif doit être strictement plus précis : plus haut en θ̄, plus bas en θ̲
        if first[1] - second[1] < 0.01 or second[0] - first[0] < 0.01:
            continue
        instances.append((grid, Test(first, grid, label=f"a{i}"), Test(second, grid, label=f"b{i}")))
    return instances


def sweep_without_capacity(n: int, rng: np.random.Generator,
                           alpha_steps: int = DEFAULT_ALPHA_STEPS,
                           gain_tol: float = GAIN_TOL) -> pd.DataFrame:
    """Une ligne par instance aléatoire : meilleure déviation de chaque firme et sa classe"""
    rows = []
    for grid, selective, safe in random_binary_instances(n, rng):
        test_set = TestSet([selective, safe])
        selective_proc = SelectionProcedure(selective, 1.0, 0.0)
        safe_proc = SelectionProcedure(safe, 1.0, 0.0)
        certificate = verify_two_tier(selective_proc, safe_proc, test_set, None,
                                      alpha_steps, gain_tol, full_alpha=False)
        selective_class = safe_class = "none"
        if certificate.deviation_gain_selective > gain_tol:
            selective_class = standards_change(selective_proc, certificate.best_deviation_selective)
        if certificate.deviation_gain_safe > gain_tol:
            safe_class = standards_change(safe_proc, certificate.best_deviation_safe)
        rows.append({
            "theta_low": grid.theta_low,
            "theta_high": grid.theta_high,
            "mu": grid.mu,
            "selective": selective.describe(),
            "safe": safe.describe(),
            "deviation_gain_selective": certificate.deviation_gain_selective,
            "deviation_class_selective": selective_class,
            "deviation_gain_safe": certificate.deviation_gain_safe,
            "deviation_class_safe": safe_class,
            "confirmed": certificate.confirmed,
        })
    return pd.DataFrame(rows)
