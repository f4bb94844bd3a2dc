"""
Contraintes de capacité pour Selection Equilibria
Rationnement p = min{1, k/masse}, équilibres de candidature et vérification sous capacité
"""

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import bisect

sys.path.append(str(Path(__file__).parent.parent))

from analysis.orders import ORDER_TOL, Comparison, compare_difficulty
from models.market import (
    DEFAULT_TIE_TOL,
    ApplicationProfile,
    SelectionProcedure,
    acceptance_prob,
    split_from_utilities,
)
from models.signal_tests import DEFAULT_TI_TOL, signal_stats
from models.test_set import TestSet
from optimization.equilibrium import (
    DEFAULT_ALPHA_STEPS,
    GAIN_TOL,
    DeviationReport,
    DeviationSearch,
    structural_checks,
    verify_symmetric,
)


FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITER = 10_000
FEASIBILITY_TOL = 1e-10
INDIFFERENCE_TOL = 1e-12

# Ordre des options d'un type dans l'énumération des supports
PURE_FIRM1, PURE_FIRM2, MIXING = "1", "2", "M"


class ConvergenceError(RuntimeError):
    """Aucun profil de candidature cohérent trouvé"""


@dataclass(frozen=True)
class CapacityConfig:
    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"la capacité k doit être > 0, reçu {self.k}")


def rationing(mass_demanded: float, k: float) -> float:
    """p = min{1, k / masse demandée}, 1 si la masse est nulle"""
    if mass_demanded < 0:
        raise ValueError("la masse demandée doit être >= 0")
    if mass_demanded <= 0.0:
        return 1.0
    return min(1.0, k / mass_demanded)


@dataclass
class CapacityOutcome:
    """Équilibre de candidature sous rationnement"""

    profile: ApplicationProfile
    p1: float
    p2: float
    mass1: float
    mass2: float
    converged: bool
    method: str
    iterations: int = 0
    pattern: str = ""

    def feasible(self, k: float, tol: float = FEASIBILITY_TOL) -> bool:
        return self.p1 * self.mass1 <= k + tol and self.p2 * self.mass2 <= k + tol


def _masses(phi: np.ndarray, weight: np.ndarray, acc1: np.ndarray,
            acc2: np.ndarray) -> Tuple[float, float]:
    return float(np.sum(phi * weight * acc1)), float(np.sum((1.0 - phi) * weight * acc2))


def _rations(m1: float, m2: float, k: Optional[float]) -> Tuple[float, float]:
    if k is None:
        return 1.0, 1.0
    return rationing(m1, k), rationing(m2, k)


def _pattern_order(favoured: Optional[int]) -> List[Tuple[str, str]]:
    """Supports (type haut, type bas) dans l'ordre d'essai"""
    if favoured == 2:
        high = [PURE_FIRM2, PURE_FIRM1, MIXING]
    else:
        high = [PURE_FIRM1, PURE_FIRM2, MIXING]
    low = [PURE_FIRM1, PURE_FIRM2, MIXING]
    return [(h, l) for h in high for l in low]


def solve_binary_application_equilibrium(proc1: SelectionProcedure, proc2: SelectionProcedure,
                                         cap: Optional[CapacityConfig] = None,
                                         favoured: Optional[int] = None,
                                         tol: float = INDIFFERENCE_TOL) -> CapacityOutcome:
    """
    Énumère les 9 supports (firme 1 / firme 2 / mélange pour chaque type) et renvoie le premier
    profil cohérent. Sans préférence (favoured=None) un partage ½ de deux types indifférents
    est essayé d'abord; sinon le type haut indifférent va d'abord à la firme favoured.
    """
    grid = proc1.grid
    if not grid.is_binary:
        raise ValueError("l'énumération des supports exige une grille binaire")
    if not grid.same_as(proc2.grid):
        raise ValueError("les deux procédures ne partagent pas la même grille")
    k = None if cap is None else cap.k
    weight = grid.weight
    acc1, acc2 = acceptance_prob(proc1), acceptance_prob(proc2)

    def state(x_low: float, x_high: float):
        phi = np.array([x_low, x_high])
        m1, m2 = _masses(phi, weight, acc1, acc2)
        p1, p2 = _rations(m1, m2, k)
        gap = p1 * acc1 - p2 * acc2
        return phi, m1, m2, p1, p2, gap

    def consistent(choice: str, gap_value: float) -> bool:
        if choice == PURE_FIRM1:
            return gap_value >= -tol
        if choice == PURE_FIRM2:
            return gap_value <= tol
        return abs(gap_value) <= max(tol, 1e-9)

    def outcome(x_low, x_high, label):
        phi, m1, m2, p1, p2, _ = state(x_low, x_high)
        return CapacityOutcome(ApplicationProfile(phi), p1, p2, m1, m2, True, "patterns",
                               pattern=label)

    if favoured is None:
        _, _, _, _, _, gap = state(0.5, 0.5)
        if np.all(np.abs(gap) <= tol):
            return outcome(0.5, 0.5, "MM")

    def solve_mixing(build: Callable[[float], Tuple[float, float]], type_index: int) -> Optional[float]:
        """x tel que le type est indifférent; gap décroissant en x"""
        def gap_at(x):
            return state(*build(x))[5][type_index]

        left, right = gap_at(0.0), gap_at(1.0)
        if abs(left) <= tol and abs(right) <= tol:
            return 0.5
        if left < -tol or right > tol:
            return None
        if abs(left) <= tol:
            return 0.0
        if abs(right) <= tol:
            return 1.0
        return bisect(gap_at, 0.0, 1.0, xtol=1e-15, maxiter=200, disp=False)

    pure = {PURE_FIRM1: 1.0, PURE_FIRM2: 0.0}
    proportional = abs(acc1[0] * acc2[1] - acc1[1] * acc2[0]) <= tol

    for high, low in _pattern_order(favoured):
        label = high + low
        if high != MIXING and low != MIXING:
            x_low, x_high = pure[low], pure[high]
        elif high == MIXING and low != MIXING:
            x_high = solve_mixing(lambda x: (pure[low], x), 1)
            if x_high is None:
                continue
            x_low = pure[low]
        elif low == MIXING and high != MIXING:
            x_low = solve_mixing(lambda x: (x, pure[high]), 0)
            if x_low is None:
                continue
            x_high = pure[high]
        else:
            if not proportional:
                continue
            x_common = solve_mixing(lambda x: (x, x), 0)
            if x_common is None:
                continue
            x_low = x_high = x_common

        gap = state(x_low, x_high)[5]
        if consistent(low, gap[0]) and consistent(high, gap[1]):
            return outcome(x_low, x_high, label)

    raise ConvergenceError("aucun support cohérent pour l'équilibre de candidature binaire")


def solve_application_equilibrium(proc1: SelectionProcedure, proc2: SelectionProcedure,
                                  cap: Optional[CapacityConfig] = None,
                                  favoured: Optional[int] = None,
                                  tie_tol: float = DEFAULT_TIE_TOL,
                                  tol: float = FIXED_POINT_TOL,
                                  max_iter: int = FIXED_POINT_MAX_ITER) -> CapacityOutcome:
    """
    Grilles binaires : énumération des supports. Autres grilles : itération amortie sur
    (p₁, p₂) jusqu'à tol; non convergée, le dernier état est renvoyé avec converged=False
    """
    if proc1.grid.is_binary:
        return solve_binary_application_equilibrium(proc1, proc2, cap, favoured)

    k = None if cap is None else cap.k
    weight = proc1.grid.weight
    acc1, acc2 = acceptance_prob(proc1), acceptance_prob(proc2)
    p1 = p2 = 1.0
    phi = split_from_utilities(acc1, acc2, tie_tol)
    m1, m2 = _masses(phi, weight, acc1, acc2)

    for iteration in range(1, max_iter + 1):
        phi = split_from_utilities(p1 * acc1, p2 * acc2, tie_tol)
        m1, m2 = _masses(phi, weight, acc1, acc2)
        n1, n2 = _rations(m1, m2, k)
        if max(abs(n1 - p1), abs(n2 - p2)) <= tol:
            return CapacityOutcome(ApplicationProfile(phi), n1, n2, m1, m2, True,
                                   "fixed_point", iteration)
        p1, p2 = p1 + 0.5 * (n1 - p1), p2 + 0.5 * (n2 - p2)

    n1, n2 = _rations(m1, m2, k)
    return CapacityOutcome(ApplicationProfile(phi), n1, n2, m1, m2, False, "fixed_point", max_iter)


def capacity_payoff(proc: SelectionProcedure, outcome: CapacityOutcome, firm: int) -> float:
    """p · Σ φ·poids·θ·acceptation pour la firme demandée"""
    phi = outcome.profile.phi if firm == 1 else 1.0 - outcome.profile.phi
    ration = outcome.p1 if firm == 1 else outcome.p2
    grid = proc.grid
    return float(ration * np.sum(phi * grid.weight * grid.theta * acceptance_prob(proc)))


def _prop_precondition(candidate: SelectionProcedure, test_set: TestSet, cap: CapacityConfig,
                       order_tol: float) -> List[str]:
    notes = []
    harder = [
        i for i, other in enumerate(test_set.tests)
        if compare_difficulty(other, candidate.test, order_tol) is Comparison.MORE_THAN
    ]
    if harder:
        notes.append(f"le test candidat n'est pas le plus difficile (plus difficiles : {harder})")
    half_mass = 0.5 * signal_stats(candidate.test).pi_bar
    if not cap.k < half_mass:
        notes.append(f"précondition k < ½∫π dF non satisfaite (k={cap.k:.6g}, ½∫π={half_mass:.6g})")
    return notes


def verify_capacity_equilibrium(candidate: SelectionProcedure, test_set: TestSet,
                                cap: CapacityConfig, alpha_steps: int = DEFAULT_ALPHA_STEPS,
                                gain_tol: float = GAIN_TOL, full_alpha: bool = False,
                                full_alpha_steps: int = 21, tie_tol: float = DEFAULT_TIE_TOL,
                                ti_tol: float = DEFAULT_TI_TOL, order_tol: float = ORDER_TOL,
                                threads: int = 1, progress: bool = False,
                                fixed_point_tol: float = FIXED_POINT_TOL,
                                fixed_point_max_iter: int = FIXED_POINT_MAX_ITER) -> DeviationReport:
    """Aucune déviation profitable quand les candidatures se réajustent au rationnement"""
    candidate_index = test_set.index_of(candidate.test)

    if cap.k >= 1.0:
        # la masse d'acceptations ne dépasse jamais 1 : le rationnement vaut toujours 1
        report = verify_symmetric(candidate, test_set, alpha_steps, gain_tol, full_alpha, tie_tol,
                                  ti_tol, order_tol, threads, progress)
        report.notes.append("capacité jamais saturée : vérification du marché sans capacité")
        return report

    equilibrium = solve_application_equilibrium(candidate, candidate, cap, None, tie_tol,
                                                fixed_point_tol, fixed_point_max_iter)
    equilibrium_payoff = capacity_payoff(candidate, equilibrium, 1)
    infeasible = [0 if equilibrium.feasible(cap.k) else 1]
    unconverged = [0 if equilibrium.converged else 1]

    search = DeviationSearch(test_set, alpha_steps, full_alpha, threads, progress, full_alpha_steps)
    params = search.params

    def evaluate(index, test):
        payoffs = np.empty(len(params))
        for row, (alpha_h, alpha_l) in enumerate(params):
            deviation = SelectionProcedure(test, alpha_h, alpha_l)
            outcome = solve_application_equilibrium(deviation, candidate, cap, 2, tie_tol,
                                                    fixed_point_tol, fixed_point_max_iter)
            if not outcome.feasible(cap.k):
                infeasible[0] += 1
            if not outcome.converged:
                unconverged[0] += 1
            payoffs[row] = capacity_payoff(deviation, outcome, 1)
        return payoffs, params

    best = search.run(evaluate, equilibrium_payoff, candidate.alpha)
    best_deviation = candidate if best.test_index is None else SelectionProcedure(
        test_set[best.test_index], best.params[0], best.params[1])

    report = DeviationReport(
        candidate=candidate,
        equilibrium_payoff=equilibrium_payoff,
        best_deviation=best_deviation,
        best_gain=best.gain,
        is_equilibrium=best.gain <= gain_tol,
        structural=structural_checks(candidate.test, test_set, ti_tol, order_tol),
        best_deviation_index=best.test_index,
        candidate_index=candidate_index,
        n_deviations=best.n_evaluated,
        alpha_steps=alpha_steps,
        full_alpha=full_alpha,
        gain_tol=gain_tol,
        lattice_spacing=test_set.spacing,
    )
    report.notes.extend(_prop_precondition(candidate, test_set, cap, order_tol))
    if infeasible[0]:
        report.notes.append(f"{infeasible[0]} issues violent la contrainte de capacité")
    if unconverged[0]:
        report.notes.append(f"{unconverged[0]} points fixes non convergés")
    return report
