"""
Équilibres symétriques pour Selection Equilibria
Règle d'acceptation à profit nul, recherche de déviations et caractérisation structurelle
"""

import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

sys.path.append(str(Path(__file__).parent.parent))

from analysis.orders import ORDER_TOL, Comparison, compare_accuracy, compare_difficulty, knife_edge_pairs
from models.market import (
    DEFAULT_TIE_TOL,
    ApplicationProfile,
    SelectionProcedure,
    acceptance_matrix,
    candidate_utility,
    cutoff_alphas,
    cutoff_lattice,
    firm_payoff,
    utility_difference_sign_changes,
)
from models.signal_tests import DEFAULT_TI_TOL, Test, is_minimally_informative, signal_stats
from models.test_set import TestSet
from models.type_space import mean_type


GAIN_TOL = 1e-9
ZERO_PROFIT_TOL = 1e-10
DEFAULT_ALPHA_STEPS = 101
RATIO_TIE_TOL = 1e-12

# Évalue un lot de déviations sur un test : (profits, règles (alpha_h, alpha_l, ...) par ligne)
Evaluator = Callable[[int, Test], Tuple[np.ndarray, np.ndarray]]


@dataclass
class StructuralFlags:
    zero_profit_ok: bool
    accuracy_maximal: bool
    difficulty_minimal_in_Ti: bool
    in_Ti: bool


@dataclass
class DeviationReport:
    """Certificat de vérification : meilleure déviation trouvée sur le treillis de recherche"""

    candidate: SelectionProcedure
    equilibrium_payoff: float
    best_deviation: SelectionProcedure
    best_gain: float
    is_equilibrium: bool
    structural: Optional[StructuralFlags] = None
    best_deviation_index: Optional[int] = None
    candidate_index: Optional[int] = None
    n_deviations: int = 0
    alpha_steps: int = DEFAULT_ALPHA_STEPS
    full_alpha: bool = False
    gain_tol: float = GAIN_TOL
    knife_edge_pairs: List[Tuple[int, int]] = field(default_factory=list)
    lattice_spacing: Tuple[float, float] = (0.0, 0.0)
    min_positive_int_theta_pi: float = math.nan
    notes: List[str] = field(default_factory=list)

    def as_dict(self) -> Dict[str, object]:
        """Bloc clé=valeur plat pour l'affichage du certificat"""
        data: Dict[str, object] = {
            "candidate": self.candidate.describe(),
            "candidate_index": self.candidate_index,
            "equilibrium_payoff": self.equilibrium_payoff,
            "best_deviation": self.best_deviation.describe(),
            "best_deviation_index": self.best_deviation_index,
            "best_gain": self.best_gain,
            "is_equilibrium": self.is_equilibrium,
            "gain_tol": self.gain_tol,
            "alpha_steps": self.alpha_steps,
            "full_alpha": self.full_alpha,
            "n_deviations": self.n_deviations,
        }
        if self.structural is not None:
            data.update({
                "zero_profit_ok": self.structural.zero_profit_ok,
                "accuracy_maximal": self.structural.accuracy_maximal,
                "difficulty_minimal_in_Ti": self.structural.difficulty_minimal_in_Ti,
                "in_Ti": self.structural.in_Ti,
            })
        data["knife_edge_pairs"] = len(self.knife_edge_pairs)
        data["lattice_spacing_sigma"] = self.lattice_spacing[0]
        data["lattice_spacing_d"] = self.lattice_spacing[1]
        data["min_positive_int_theta_pi"] = self.min_positive_int_theta_pi
        for i, note in enumerate(self.notes):
            data[f"note_{i}"] = note
        return data


@dataclass
class CandidateResult:
    procedure: Optional[SelectionProcedure]
    index: Optional[int]
    no_candidate: bool
    rule: str = ""
    tie_indices: List[int] = field(default_factory=list)


@dataclass
class DeviationBest:
    gain: float
    payoff: float
    test_index: Optional[int]
    params: Tuple[float, ...]
    n_evaluated: int


def zero_profit_alpha(test: Test, tol: float = DEFAULT_TI_TOL) -> SelectionProcedure:
    """Règle d'acceptation qui ramène le profit symétrique à max{0, ½E[θ]}"""
    if mean_type(test.grid) >= -tol:
        return SelectionProcedure(test, 1.0, 1.0)
    stats = signal_stats(test)
    if stats.int_theta_pi > tol:
        alpha_l = stats.int_theta_pi / (-stats.int_theta_1mpi)
        return SelectionProcedure(test, 1.0, min(alpha_l, 1.0))
    if stats.int_theta_pi >= -tol:
        return SelectionProcedure(test, 1.0, 0.0)
    return SelectionProcedure(test, 0.0, 0.0, supportable=False)


def symmetric_payoff(proc: SelectionProcedure, mode: str = "baseline") -> float:
    """Profit de chaque firme quand les deux jouent proc et les candidats se partagent ½"""
    return firm_payoff(proc, proc, ApplicationProfile.uniform(proc.grid.n), mode)


class DeviationSearch:
    """Énumère les déviations (test, règle) et garde la meilleure, départage par plus petit indice"""

    def __init__(self, test_set: TestSet, alpha_steps: int = DEFAULT_ALPHA_STEPS,
                 full_alpha: bool = False, threads: int = 1, progress: bool = False,
                 full_alpha_steps: Optional[int] = None):
        self.test_set = test_set
        self.alpha_steps = int(alpha_steps)
        self.full_alpha = full_alpha
        self.full_alpha_steps = int(full_alpha_steps or alpha_steps)
        self.threads = max(1, int(threads))
        self.progress = progress
        self.alpha_h, self.alpha_l = self._deviation_alphas()

    @property
    def params(self) -> np.ndarray:
        return np.column_stack([self.alpha_h, self.alpha_l])

    def _deviation_alphas(self) -> Tuple[np.ndarray, np.ndarray]:
        alpha_h, alpha_l = cutoff_alphas(cutoff_lattice(self.alpha_steps))
        if not self.full_alpha:
            return alpha_h, alpha_l
        axis = np.linspace(0.0, 1.0, self.full_alpha_steps + 1)
        grid_h, grid_l = np.meshgrid(axis, axis, indexing="ij")
        return (np.concatenate([alpha_h, grid_h.ravel()]),
                np.concatenate([alpha_l, grid_l.ravel()]))

    def run(self, evaluator: Evaluator, reference_payoff: float,
            null_params: Tuple[float, ...] = ()) -> DeviationBest:
        """Meilleure déviation; la déviation nulle (gain 0) sert de plancher"""
        indices = range(len(self.test_set))
        tests = self.test_set.tests

        def evaluate(index: int):
            return evaluator(index, tests[index])

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                results = list(tqdm(pool.map(evaluate, indices), total=len(tests),
                                    disable=not self.progress, desc="déviations"))
        else:
            results = [evaluate(i) for i in tqdm(indices, disable=not self.progress,
                                                 desc="déviations")]

        best = DeviationBest(0.0, reference_payoff, None, null_params, 0)
        for index, (payoffs, params) in enumerate(results):
            best.n_evaluated += len(payoffs)
            if len(payoffs) == 0:
                continue
            row = int(np.argmax(payoffs))
            gain = float(payoffs[row]) - reference_payoff
            if gain > best.gain:
                best = DeviationBest(gain, float(payoffs[row]), index,
                                     tuple(float(v) for v in params[row]), best.n_evaluated)
        return best


def baseline_evaluator(candidate: SelectionProcedure, search: DeviationSearch,
                       tie_tol: float = DEFAULT_TIE_TOL) -> Evaluator:
    """Profits de déviation en mode baseline contre la candidate (partage ½ en cas d'égalité)"""
    u_candidate = candidate_utility(candidate)
    weighted_theta = candidate.grid.weight * candidate.grid.theta
    params = search.params

    def evaluate(index: int, test: Test):
        acc = acceptance_matrix(test, search.alpha_h, search.alpha_l)
        phi = np.where(acc > u_candidate + tie_tol, 1.0,
                       np.where(acc < u_candidate - tie_tol, 0.0, 0.5))
        return (phi * acc) @ weighted_theta, params

    return evaluate


def structural_checks(test: Test, test_set: TestSet, ti_tol: float = DEFAULT_TI_TOL,
                      order_tol: float = ORDER_TOL,
                      candidate: Optional[SelectionProcedure] = None) -> StructuralFlags:
    """Maximalité en précision dans l'ensemble, minimalité en difficulté dans T_i"""
    own = test_set.index_of(test)
    accuracy_maximal = True
    difficulty_minimal = True
    for i, other in enumerate(test_set.tests):
        if i == own:
            continue
        if accuracy_maximal and compare_accuracy(other, test, order_tol) is Comparison.MORE_THAN:
            accuracy_maximal = False
        if (difficulty_minimal and is_minimally_informative(other, ti_tol)
                and compare_difficulty(other, test, order_tol) is Comparison.LESS_THAN):
            difficulty_minimal = False
        if not accuracy_maximal and not difficulty_minimal:
            break

    zero_profit_ok = True
    if candidate is not None:
        expected = max(0.0, 0.5 * mean_type(test.grid))
        zero_profit_ok = abs(symmetric_payoff(candidate) - expected) <= ZERO_PROFIT_TOL

    return StructuralFlags(
        zero_profit_ok=zero_profit_ok,
        accuracy_maximal=accuracy_maximal,
        difficulty_minimal_in_Ti=difficulty_minimal,
        in_Ti=is_minimally_informative(test, ti_tol),
    )


def _richness_diagnostic(test_set: TestSet, ti_tol: float) -> float:
    positives = [
        signal_stats(t).int_theta_pi
        for t in test_set.tests
        if is_minimally_informative(t, ti_tol) and signal_stats(t).int_theta_pi > ti_tol
    ]
    return min(positives) if positives else math.nan


def verify_symmetric(candidate: SelectionProcedure, test_set: TestSet,
                     alpha_steps: int = DEFAULT_ALPHA_STEPS, gain_tol: float = GAIN_TOL,
                     full_alpha: bool = False, tie_tol: float = DEFAULT_TIE_TOL,
                     ti_tol: float = DEFAULT_TI_TOL, order_tol: float = ORDER_TOL,
                     threads: int = 1, progress: bool = False,
                     with_structure: bool = True) -> DeviationReport:
    """Aucune déviation (test, cutoff) profitable au-delà de gain_tol contre la candidate"""
    candidate_index = test_set.index_of(candidate.test)
    equilibrium_payoff = symmetric_payoff(candidate)

    search = DeviationSearch(test_set, alpha_steps, full_alpha, threads, progress)
    best = search.run(baseline_evaluator(candidate, search, tie_tol), equilibrium_payoff,
                      candidate.alpha)

    if best.test_index is None:
        best_deviation = candidate
    else:
        best_deviation = SelectionProcedure(test_set[best.test_index], best.params[0], best.params[1])

    report = DeviationReport(
        candidate=candidate,
        equilibrium_payoff=equilibrium_payoff,
        best_deviation=best_deviation,
        best_gain=best.gain,
        is_equilibrium=best.gain <= gain_tol,
        best_deviation_index=best.test_index,
        candidate_index=candidate_index,
        n_deviations=best.n_evaluated,
        alpha_steps=alpha_steps,
        full_alpha=full_alpha,
        gain_tol=gain_tol,
        lattice_spacing=test_set.spacing,
    )
    if with_structure:
        report.structural = structural_checks(candidate.test, test_set, ti_tol, order_tol, candidate)
        report.knife_edge_pairs = knife_edge_pairs(test_set.tests, order_tol)
        report.min_positive_int_theta_pi = _richness_diagnostic(test_set, ti_tol)
    if not candidate.supportable:
        report.notes.append("aucune règle d'acceptation ne soutient ce test (∫θπ dF < 0)")
    return report


def _binary_ratios(test: Test) -> Tuple[float, float]:
    """((1−π(θ̄))/(1−π(θ̲)), π(θ̄)/π(θ̲)) avec conventions aux bords"""
    low_num, low_den = 1.0 - test.pi[1], 1.0 - test.pi[0]
    high_num, high_den = test.pi[1], test.pi[0]
    low = low_num / low_den if low_den > 0 else 1.0
    high = high_num / high_den if high_den > 0 else math.inf
    return float(low), float(high)


def _select_binary(test_set: TestSet, members: List[int]) -> Tuple[int, List[int]]:
    ratios = {i: _binary_ratios(test_set[i]) for i in members}
    best_low = min(r[0] for r in ratios.values())
    easiest = [i for i in members if ratios[i][0] <= best_low + RATIO_TIE_TOL]
    best_high = max(ratios[i][1] for i in easiest)
    chosen = [i for i in easiest if ratios[i][1] >= best_high - RATIO_TIE_TOL]
    return chosen[0], chosen


def _select_lattice(test_set: TestSet, members: List[int]) -> Optional[int]:
    for i in members:
        if all(test_set.accuracy_key(i) >= test_set.accuracy_key(j) - RATIO_TIE_TOL
               and test_set.ease_key(i) >= test_set.ease_key(j) - RATIO_TIE_TOL
               for j in members):
            return i
    return None


def _select_by_orders(test_set: TestSet, members: List[int],
                      order_tol: float) -> Tuple[int, List[int]]:
    easiest = [
        i for i in members
        if not any(compare_difficulty(test_set[j], test_set[i], order_tol) is Comparison.LESS_THAN
                   for j in members if j != i)
    ] or list(members)
    most_accurate = [
        i for i in easiest
        if not any(compare_accuracy(test_set[j], test_set[i], order_tol) is Comparison.MORE_THAN
                   for j in easiest if j != i)
    ] or easiest
    return most_accurate[0], most_accurate


def candidate_equilibrium(test_set: TestSet, ti_tol: float = DEFAULT_TI_TOL,
                          order_tol: float = ORDER_TOL) -> CandidateResult:
    """Test de T_i le plus facile puis le plus précis, avec sa règle à profit nul"""
    members = [i for i, t in enumerate(test_set.tests) if is_minimally_informative(t, ti_tol)]
    if not members:
        return CandidateResult(None, None, True, rule="empty_Ti")

    if test_set.grid.is_binary:
        index, ties = _select_binary(test_set, members)
        rule = "binary_likelihood_ratios"
    else:
        index, ties, rule = None, [], ""
        if test_set.is_lattice:
            index = _select_lattice(test_set, members)
            ties, rule = ([index], "lattice_accuracy_ease_maximal") if index is not None else ([], "")
        if index is None:
            index, ties = _select_by_orders(test_set, members, order_tol)
            rule = "difficulty_then_accuracy"

    procedure = zero_profit_alpha(test_set[index], ti_tol)
    return CandidateResult(procedure, index, False, rule, ties)


def brute_force_selection(test_set: TestSet, alpha_steps: int = DEFAULT_ALPHA_STEPS,
                          gain_tol: float = GAIN_TOL, ti_tol: float = DEFAULT_TI_TOL,
                          threads: int = 1) -> List[int]:
    """Indices des tests de T_i dont la candidate à profit nul passe la vérification"""
    passing = []
    for i, test in enumerate(test_set.tests):
        if not is_minimally_informative(test, ti_tol):
            continue
        report = verify_symmetric(zero_profit_alpha(test, ti_tol), test_set, alpha_steps,
                                  gain_tol, ti_tol=ti_tol, threads=threads, with_structure=False)
        if report.is_equilibrium:
            passing.append(i)
    return passing


def single_crossing_holds(candidate: SelectionProcedure, deviations: Sequence[SelectionProcedure],
                          tie_tol: float = DEFAULT_TIE_TOL) -> bool:
    """Δu(θ) change de signe au plus une fois le long de la grille pour chaque déviation"""
    return all(utility_difference_sign_changes(dev, candidate, tie_tol=tie_tol) <= 1
               for dev in deviations)
