"""
Coût de l'information pour Selection Equilibria
Coûts posterior-separable, transformation « plus facile », test isocoût et vérification sous budget
"""

import math
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import bisect
from scipy.special import rel_entr

sys.path.append(str(Path(__file__).parent.parent))

from analysis.orders import Comparison, compare_difficulty
from models.market import SelectionProcedure
from models.signal_tests import (
    DEFAULT_TI_TOL,
    Test,
    degarble,
    garble,
    is_minimally_informative,
    max_degarble_gamma,
    posterior_dist,
    signal_stats,
)
from models.test_set import TestSet
from optimization.equilibrium import (
    DEFAULT_ALPHA_STEPS,
    GAIN_TOL,
    DeviationSearch,
    baseline_evaluator,
    symmetric_payoff,
)


COST_TOL = 1e-8
BISECTION_MAX_ITER = 60
INFORMATIVE_TOL = 1e-12


class NoRootBracketedError(RuntimeError):
    """La bissection isocoût n'encadre pas de racine"""


class Divergence(str, Enum):
    KL_TO_PRIOR = "KLToPrior"
    QUADRATIC_TO_PRIOR = "QuadraticToPrior"


@dataclass(frozen=True)
class CostSpec:
    divergence: Divergence = Divergence.KL_TO_PRIOR
    kappa: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "divergence", Divergence(self.divergence))
        if not self.kappa > 0:
            raise ValueError(f"kappa doit être > 0, reçu {self.kappa}")


def divergence_to_prior(posterior: np.ndarray, prior: np.ndarray, divergence: Divergence) -> float:
    """c(posterior) avec c(prior) = 0"""
    if divergence is Divergence.KL_TO_PRIOR:
        return float(np.sum(rel_entr(posterior, prior)))
    return float(np.sum((posterior - prior) ** 2 / prior))


def test_cost(test: Test, spec: CostSpec) -> float:
    """C(t) = π̄·c(f_th) + (1−π̄)·c(f_tl); infini si le test est informatif et touche 0 ou 1"""
    if test.is_constant(INFORMATIVE_TOL):
        return 0.0
    if np.any(test.pi <= 0.0) or np.any(test.pi >= 1.0):
        return math.inf
    prior = test.grid.weight
    pi_bar = signal_stats(test).pi_bar
    cost = 0.0
    if pi_bar > 0.0:
        cost += pi_bar * divergence_to_prior(posterior_dist(test, "h"), prior, spec.divergence)
    if pi_bar < 1.0:
        cost += (1.0 - pi_bar) * divergence_to_prior(posterior_dist(test, "l"), prior, spec.divergence)
    return max(cost, 0.0)


test_cost.__test__ = False  # pas un test pytest


def mu_mix_bound(test: Test) -> float:
    """Borne (1 − π(θ̄)) / (1 − π̄) de l'intervalle admissible de mu_mix"""
    pi_bar = signal_stats(test).pi_bar
    if pi_bar >= 1.0:
        return 0.0
    return float((1.0 - test.pi[-1]) / (1.0 - pi_bar))


def mixing_transform(test: Test, lam: float, mu_mix: float) -> Test:
    """
    π_d = (λπ̄ + (1−λ)π) / ((1−μ)(1 − λ(1−π̄)) + μπ̄)
    Le posterior après h est un mélange du prior et de f_th; f_tl mélange le prior et f_dl
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda doit être dans [0, 1], reçu {lam}")
    bound = mu_mix_bound(test)
    if not 0.0 <= mu_mix < bound:
        raise ValueError(f"mu_mix doit être dans [0, {bound:.6g}), reçu {mu_mix}")
    pi_bar = signal_stats(test).pi_bar
    numerator = lam * pi_bar + (1.0 - lam) * test.pi
    denominator = (1.0 - mu_mix) * (1.0 - lam * (1.0 - pi_bar)) + mu_mix * pi_bar
    pi = np.clip(numerator / denominator, 0.0, 1.0)
    return Test(pi=pi, grid=test.grid,
                label=f"transform({test.describe()}, lambda={lam:.6g}, mu_mix={mu_mix:.6g})")


def mixing_identity_residual(test: Test, transformed: Test, lam: float, mu_mix: float) -> float:
    """max |λf + (1−λ)f_th − f_dh| et |μf + (1−μ)f_dl − f_tl|"""
    prior = test.grid.weight
    residual = np.abs(lam * prior + (1.0 - lam) * posterior_dist(test, "h")
                      - posterior_dist(transformed, "h")).max()
    if signal_stats(transformed).pi_bar < 1.0:
        residual = max(residual, np.abs(mu_mix * prior
                                        + (1.0 - mu_mix) * posterior_dist(transformed, "l")
                                        - posterior_dist(test, "l")).max())
    return float(residual)


def isocost_easier(test: Test, spec: CostSpec, mu_mix: float, cost_tol: float = COST_TOL,
                   max_iter: int = BISECTION_MAX_ITER) -> Test:
    """Test strictement plus facile de même coût, par bissection sur lambda"""
    bound = mu_mix_bound(test)
    if not 0.0 < mu_mix < bound:
        raise ValueError(f"mu_mix doit être dans (0, {bound:.6g}), reçu {mu_mix}")
    target = test_cost(test, spec)
    if not math.isfinite(target):
        raise ValueError("le test a un coût infini")
    if target <= 0.0:
        raise ValueError("le test n'est pas informatif : aucun test isocoût strictement plus facile")

    def gap(lam: float) -> float:
        return test_cost(mixing_transform(test, lam, mu_mix), spec) - target

    low_gap, high_gap = gap(0.0), gap(1.0)
    if not (low_gap > 0.0 > high_gap):
        raise NoRootBracketedError(
            f"pas de racine encadrée : C(λ=0) − C(t) = {low_gap:.6g}, C(λ=1) − C(t) = {high_gap:.6g}"
        )
    lam = bisect(gap, 0.0, 1.0, xtol=1e-15, maxiter=max_iter, disp=False)
    matched = mixing_transform(test, lam, mu_mix)
    if abs(gap(lam)) > cost_tol:
        raise NoRootBracketedError(
            f"bissection non convergée après {max_iter} itérations : écart {gap(lam):.3g}"
        )
    return matched


@dataclass
class FeasibleDeviation:
    kind: str
    test: Test
    cost: float
    gain: float
    procedure: Optional[SelectionProcedure] = None
    params: Dict[str, float] = field(default_factory=dict)


@dataclass
class CostEquilibriumReport:
    candidate: SelectionProcedure
    kappa: float
    cost: float
    int_theta_pi: float
    budget_binds: bool
    zero_posterior_mean: bool
    no_deviation: bool
    best_gain: float
    best_deviation: Optional[FeasibleDeviation] = None
    easier_deviation: Optional[FeasibleDeviation] = None
    accuracy_deviation: Optional[FeasibleDeviation] = None
    n_feasible: int = 0

    @property
    def is_equilibrium(self) -> bool:
        return self.budget_binds and self.zero_posterior_mean and self.no_deviation

    def as_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {
            "candidate": self.candidate.describe(),
            "kappa": self.kappa,
            "cost": self.cost,
            "int_theta_pi": self.int_theta_pi,
            "budget_binds": self.budget_binds,
            "zero_posterior_mean": self.zero_posterior_mean,
            "no_deviation": self.no_deviation,
            "best_gain": self.best_gain,
            "n_feasible": self.n_feasible,
            "is_equilibrium": self.is_equilibrium,
        }
        for name in ("best_deviation", "easier_deviation", "accuracy_deviation"):
            deviation = getattr(self, name)
            if deviation is not None:
                data[f"{name}.kind"] = deviation.kind
                data[f"{name}.test"] = deviation.test.describe()
                data[f"{name}.cost"] = deviation.cost
                data[f"{name}.gain"] = deviation.gain
                if deviation.procedure is not None:
                    data[f"{name}.alpha"] = f"({deviation.procedure.alpha_h:.6g}, {deviation.procedure.alpha_l:.6g})"
        return data


def sample_feasible_tests(test: Test, spec: CostSpec, lambda_steps: int = 21,
                          mu_mix_steps: int = 8, garble_steps: int = 10,
                          degarble_steps: int = 20) -> List[FeasibleDeviation]:
    """Transformations « plus faciles », garblings et de-garblings de coût ≤ kappa"""
    samples: List[FeasibleDeviation] = []
    bound = mu_mix_bound(test)

    for mu_mix in np.linspace(0.0, bound, mu_mix_steps + 1)[:-1]:
        for lam in np.linspace(0.0, 1.0, lambda_steps)[:-1]:
            if mu_mix == 0.0 and lam == 0.0:
                continue
            candidate = mixing_transform(test, float(lam), float(mu_mix))
            cost = test_cost(candidate, spec)
            if cost <= spec.kappa:
                samples.append(FeasibleDeviation("easier_transform", candidate, cost, math.nan,
                                                 params={"lambda": float(lam), "mu_mix": float(mu_mix)}))

    pi_bar = signal_stats(test).pi_bar
    for beta in np.linspace(0.0, 1.0, garble_steps + 1)[:-1]:
        candidate = garble(test, float(beta), pi_bar)
        cost = test_cost(candidate, spec)
        if cost <= spec.kappa:
            samples.append(FeasibleDeviation("garbling", candidate, cost, math.nan,
                                             params={"beta": float(beta)}))

    gamma_max = max_degarble_gamma(test)
    if gamma_max > 1.0:
        for gamma in np.linspace(1.0, gamma_max, degarble_steps + 1)[1:]:
            candidate = degarble(test, float(gamma))
            cost = test_cost(candidate, spec)
            if cost <= spec.kappa:
                samples.append(FeasibleDeviation("degarbling", candidate, cost, math.nan,
                                                 params={"gamma": float(gamma)}))
    return samples


def verify_cost_equilibrium(candidate: SelectionProcedure, spec: CostSpec,
                            alpha_steps: int = DEFAULT_ALPHA_STEPS, gain_tol: float = GAIN_TOL,
                            cost_tol: float = COST_TOL, ti_tol: float = DEFAULT_TI_TOL,
                            extra_tests: Sequence[Test] = (), threads: int = 1) -> CostEquilibriumReport:
    """Budget saturé, moyenne postérieure nulle et absence de déviation faisable profitable"""
    test = candidate.test
    cost = test_cost(test, spec)
    if not math.isfinite(cost):
        raise ValueError("le test candidat a un coût infini")
    stats = signal_stats(test)

    samples = sample_feasible_tests(test, spec)
    for extra in extra_tests:
        extra_cost = test_cost(extra, spec)
        if extra_cost <= spec.kappa:
            samples.append(FeasibleDeviation("lattice", extra, extra_cost, math.nan))

    equilibrium_payoff = symmetric_payoff(candidate)
    best: Optional[FeasibleDeviation] = None
    easier: Optional[FeasibleDeviation] = None
    more_accurate: Optional[FeasibleDeviation] = None

    if samples:
        deviation_set = TestSet([s.test for s in samples])
        search = DeviationSearch(deviation_set, alpha_steps, threads=threads)
        evaluate = baseline_evaluator(candidate, search)
        for index, sample in enumerate(samples):
            payoffs, params = evaluate(index, sample.test)
            row = int(np.argmax(payoffs))
            sample.gain = float(payoffs[row]) - equilibrium_payoff
            sample.procedure = SelectionProcedure(sample.test, params[row][0], params[row][1])

            if best is None or sample.gain > best.gain:
                best = sample
            if (sample.kind == "easier_transform" and sample.cost < cost
                    and is_minimally_informative(sample.test, ti_tol)
                    and compare_difficulty(test, sample.test) is Comparison.MORE_THAN
                    and (easier is None or sample.gain > easier.gain)):
                easier = sample
            if sample.kind == "degarbling" and (more_accurate is None or sample.gain > more_accurate.gain):
                more_accurate = sample

    best_gain = max(best.gain, 0.0) if best is not None else 0.0
    return CostEquilibriumReport(
        candidate=candidate,
        kappa=spec.kappa,
        cost=cost,
        int_theta_pi=stats.int_theta_pi,
        budget_binds=abs(cost - spec.kappa) <= cost_tol,
        zero_posterior_mean=abs(stats.int_theta_pi) <= ti_tol,
        no_deviation=best_gain <= gain_tol,
        best_gain=best_gain,
        best_deviation=best if best is not None and best.gain > gain_tol else None,
        easier_deviation=easier,
        accuracy_deviation=more_accurate,
        n_feasible=len(samples),
    )
