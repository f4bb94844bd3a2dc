"""
Concurrence en salaires pour Selection Equilibria
Salaire à profit nul, déviations constructives (subvention croisée, test plus difficile) et vérification
"""

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

sys.path.append(str(Path(__file__).parent.parent))

from analysis.orders import ORDER_TOL, Comparison, compare_accuracy, compare_difficulty
from models.market import (
    DEFAULT_TIE_TOL,
    MODE_WAGE,
    ApplicationProfile,
    SelectionProcedure,
    best_response_split,
    candidate_utility,
    firm_payoff,
    split_from_utilities,
)
from models.signal_tests import Test, signal_stats
from models.test_set import TestSet
from optimization.equilibrium import DEFAULT_ALPHA_STEPS, GAIN_TOL, DeviationSearch


DEFAULT_WAGE_STEPS = 201
WAGE_TOL = 1e-9
ZERO_PROFIT_TOL = 1e-10
CROSS_SUBSIDY_EPSILON = 1e-3
HARDER_TEST_EPSILONS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)


@dataclass
class WageDeviation:
    kind: str
    procedure: SelectionProcedure
    gain: float
    epsilon: float
    delta: float = 0.0


@dataclass
class WageReport:
    """Les quatre vérifications du candidat salarial et la meilleure déviation trouvée"""

    candidate: SelectionProcedure
    alpha_l_zero: bool
    difficulty_maximal: bool
    zero_profit_wage_ok: bool
    no_deviation: bool
    equilibrium_payoff: float
    total_profit: float
    zero_profit_wage: float
    best_gain: float
    best_deviation: SelectionProcedure
    best_deviation_index: Optional[int] = None
    n_deviations: int = 0
    cross_subsidy: Optional[WageDeviation] = None
    harder_test: Optional[WageDeviation] = None
    gain_tol: float = GAIN_TOL
    notes: List[str] = field(default_factory=list)

    @property
    def is_equilibrium(self) -> bool:
        return (self.alpha_l_zero and self.difficulty_maximal
                and self.zero_profit_wage_ok and self.no_deviation)

    def as_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {
            "candidate": self.candidate.describe(),
            "alpha_l_zero": self.alpha_l_zero,
            "difficulty_maximal": self.difficulty_maximal,
            "zero_profit_wage_ok": self.zero_profit_wage_ok,
            "no_deviation": self.no_deviation,
            "zero_profit_wage": self.zero_profit_wage,
            "equilibrium_payoff": self.equilibrium_payoff,
            "total_profit": self.total_profit,
            "best_gain": self.best_gain,
            "best_deviation": self.best_deviation.describe(),
            "best_deviation_index": self.best_deviation_index,
            "n_deviations": self.n_deviations,
        }
        for name, deviation in (("cross_subsidy", self.cross_subsidy),
                                ("harder_test", self.harder_test)):
            if deviation is None:
                data[f"{name}_gain"] = "n/a"
            else:
                data[f"{name}_gain"] = deviation.gain
                data[f"{name}_deviation"] = deviation.procedure.describe()
        data["is_equilibrium"] = self.is_equilibrium
        for i, note in enumerate(self.notes):
            data[f"note_{i}"] = note
        return data


def zero_profit_wage(test: Test, alpha_h: float = 1.0, alpha_l: float = 0.0,
                     wage_l: float = 0.0) -> float:
    """
    Salaire après h qui annule le profit à règle et salaire après l fixés
    Avec alpha=(1, 0) : m(h) = ∫θπ dF / ∫π dF
    """
    stats = signal_stats(test)
    low_mass = 1.0 - stats.pi_bar
    denominator = alpha_h * stats.pi_bar
    if denominator <= 0.0:
        raise ValueError("salaire à profit nul indéfini : aucune acceptation après h")
    numerator = alpha_h * stats.int_theta_pi + alpha_l * (stats.int_theta_1mpi - wage_l * low_mass)
    return float(numerator / denominator)


def zero_profit_procedure(test: Test) -> SelectionProcedure:
    """Procédure (t, α=(1,0), m(h) à profit nul); m(h) ramené à 0 si ∫θπ < 0"""
    return SelectionProcedure(test, 1.0, 0.0, max(zero_profit_wage(test), 0.0), 0.0)


def symmetric_wage_payoff(proc: SelectionProcedure) -> float:
    return firm_payoff(proc, proc, ApplicationProfile.uniform(proc.grid.n), MODE_WAGE)


def deviation_gain(deviation: SelectionProcedure, candidate: SelectionProcedure,
                   tie_tol: float = DEFAULT_TIE_TOL) -> float:
    """Profit de la déviation contre la candidate moins le profit symétrique"""
    profile = best_response_split(deviation, candidate, mode=MODE_WAGE, tie_tol=tie_tol)
    payoff = firm_payoff(deviation, candidate, profile, MODE_WAGE)
    return payoff - symmetric_wage_payoff(candidate)


def cross_subsidy_deviation(candidate: SelectionProcedure, epsilon: float = CROSS_SUBSIDY_EPSILON,
                            tie_tol: float = DEFAULT_TIE_TOL) -> Optional[WageDeviation]:
    """
    m(h) + ε et m(l) − δ avec δ = ε·α(h)·∫π / (α(l)·∫(1−π)), masse salariale inchangée
    None si la candidate n'accepte personne après l ou ne paie rien après l
    """
    if candidate.alpha_l <= 0.0 or candidate.wage_l <= 0.0 or candidate.alpha_h <= 0.0:
        return None
    pi_bar = signal_stats(candidate.test).pi_bar
    if pi_bar >= 1.0:
        return None
    ratio = candidate.alpha_h * pi_bar / (candidate.alpha_l * (1.0 - pi_bar))
    epsilon = min(epsilon, candidate.wage_l / ratio)
    delta = epsilon * ratio
    deviation = SelectionProcedure(candidate.test, candidate.alpha_h, candidate.alpha_l,
                                   candidate.wage_h + epsilon, max(candidate.wage_l - delta, 0.0))
    return WageDeviation("cross_subsidy", deviation, deviation_gain(deviation, candidate, tie_tol),
                         epsilon, delta)


def harder_test_deviation(candidate: SelectionProcedure, test_set: TestSet,
                          epsilons: Sequence[float] = HARDER_TEST_EPSILONS,
                          order_tol: float = ORDER_TOL,
                          tie_tol: float = DEFAULT_TIE_TOL) -> Optional[WageDeviation]:
    """Meilleure déviation vers un test strictement plus difficile, α=(1,0), salaire m(1+ε)"""
    best: Optional[WageDeviation] = None
    for other in test_set.tests:
        if compare_difficulty(other, candidate.test, order_tol) is not Comparison.MORE_THAN:
            continue
        for epsilon in epsilons:
            deviation = SelectionProcedure(other, 1.0, 0.0, candidate.wage_h * (1.0 + epsilon), 0.0)
            gain = deviation_gain(deviation, candidate, tie_tol)
            if best is None or gain > best.gain:
                best = WageDeviation("harder_test", deviation, gain, epsilon)
    return best


def wage_candidate(test_set: TestSet, order_tol: float = ORDER_TOL) -> Optional[SelectionProcedure]:
    """Premier test de difficulté maximale, puis de précision maximale, avec son salaire à profit nul"""
    eligible = [
        i for i, t in enumerate(test_set.tests)
        if signal_stats(t).pi_bar > 0.0 and signal_stats(t).int_theta_pi >= 0.0
    ]
    if not eligible:
        return None
    hardest = [
        i for i in eligible
        if not any(compare_difficulty(test_set[j], test_set[i], order_tol) is Comparison.MORE_THAN
                   for j in eligible if j != i)
    ] or eligible
    accurate = [
        i for i in hardest
        if not any(compare_accuracy(test_set[j], test_set[i], order_tol) is Comparison.MORE_THAN
                   for j in hardest if j != i)
    ] or hardest
    return zero_profit_procedure(test_set[accurate[0]])


def wage_grid(candidate: SelectionProcedure, test_set: TestSet,
              wage_steps: int = DEFAULT_WAGE_STEPS) -> np.ndarray:
    """[0, θ̄] en wage_steps points, salaires à profit nul de l'ensemble, points m(1+ε) de la candidate"""
    theta_high = max(candidate.grid.theta_high, 0.0)
    wages = [np.linspace(0.0, theta_high, wage_steps)]
    for test in test_set.tests:
        if signal_stats(test).pi_bar > 0.0:
            wages.append([zero_profit_wage(test)])
    wages.append([candidate.wage_h])
    wages.append([candidate.wage_h * (1.0 + eps) for eps in HARDER_TEST_EPSILONS])
    grid = np.unique(np.concatenate([np.asarray(w, dtype=float) for w in wages]))
    return grid[grid >= 0.0]


def verify_wage_equilibrium(candidate: SelectionProcedure, test_set: TestSet,
                            alpha_steps: int = DEFAULT_ALPHA_STEPS,
                            wage_steps: int = DEFAULT_WAGE_STEPS, gain_tol: float = GAIN_TOL,
                            wage_tol: float = WAGE_TOL, order_tol: float = ORDER_TOL,
                            tie_tol: float = DEFAULT_TIE_TOL, threads: int = 1,
                            progress: bool = False) -> WageReport:
    """Vérifications (a) α(l)=0, (b) difficulté maximale, (c) salaire à profit nul, (d) aucune déviation"""
    test = candidate.test
    alpha_l_zero = candidate.alpha_l == 0.0
    difficulty_maximal = not any(
        compare_difficulty(other, test, order_tol) is Comparison.MORE_THAN for other in test_set.tests
    )
    notes = []
    try:
        reference_wage = zero_profit_wage(test, candidate.alpha_h, candidate.alpha_l, candidate.wage_l)
    except ValueError as exc:
        reference_wage = math.nan
        notes.append(str(exc))
    zero_profit_wage_ok = abs(candidate.wage_h - reference_wage) <= wage_tol

    equilibrium_payoff = symmetric_wage_payoff(candidate)
    total_profit = 2.0 * equilibrium_payoff
    if zero_profit_wage_ok and abs(total_profit) > ZERO_PROFIT_TOL:
        notes.append(f"profit total non nul au salaire de référence ({total_profit:.3e})")

    search = DeviationSearch(test_set, alpha_steps, False, threads, progress)
    wages_h = wage_grid(candidate, test_set, wage_steps)
    wages_l = np.unique([0.0, candidate.wage_l])
    u_candidate = candidate_utility(candidate, mode=MODE_WAGE)
    theta, weight = candidate.grid.theta, candidate.grid.weight
    alpha_h = search.alpha_h[:, None]
    alpha_l = search.alpha_l[:, None]
    n_rules = search.alpha_h.size

    def evaluate(index, other):
        pi = other.pi
        blocks, params = [], []
        for wage_l in wages_l:
            low_utility = alpha_l * (1.0 - pi) * wage_l
            low_profit = alpha_l * (1.0 - pi) * (theta - wage_l)
            for wage_h in wages_h:
                utility = alpha_h * pi * wage_h + low_utility
                phi = split_from_utilities(utility, u_candidate, tie_tol)
                integrand = alpha_h * pi * (theta - wage_h) + low_profit
                blocks.append((phi * integrand) @ weight)
                params.append(np.column_stack([
                    search.alpha_h, search.alpha_l,
                    np.full(n_rules, wage_h), np.full(n_rules, wage_l),
                ]))
        return np.concatenate(blocks), np.vstack(params)

    best = search.run(evaluate, equilibrium_payoff,
                      (candidate.alpha_h, candidate.alpha_l, candidate.wage_h, candidate.wage_l))
    if best.test_index is None:
        best_deviation = candidate
    else:
        best_deviation = SelectionProcedure(test_set[best.test_index], *best.params)

    cross = cross_subsidy_deviation(candidate, tie_tol=tie_tol)
    harder = harder_test_deviation(candidate, test_set, order_tol=order_tol, tie_tol=tie_tol)
    gains = [best.gain] + [d.gain for d in (cross, harder) if d is not None]
    no_deviation = max(gains) <= gain_tol

    best_gain, deviation = best.gain, best_deviation
    for constructed in (cross, harder):
        if constructed is not None and constructed.gain > best_gain:
            best_gain, deviation = constructed.gain, constructed.procedure

    return WageReport(
        candidate=candidate,
        alpha_l_zero=alpha_l_zero,
        difficulty_maximal=difficulty_maximal,
        zero_profit_wage_ok=zero_profit_wage_ok,
        no_deviation=no_deviation,
        equilibrium_payoff=equilibrium_payoff,
        total_profit=total_profit,
        zero_profit_wage=reference_wage,
        best_gain=best_gain,
        best_deviation=deviation,
        best_deviation_index=best.test_index,
        n_deviations=best.n_evaluated,
        cross_subsidy=cross,
        harder_test=harder,
        gain_tol=gain_tol,
        notes=notes,
    )
