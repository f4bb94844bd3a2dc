"""
Marché à deux firmes pour Selection Equilibria
Procédures de sélection, choix des candidats et profits des firmes
"""

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

sys.path.append(str(Path(__file__).parent.parent))

from models.signal_tests import Test
from models.type_space import interpolate_at_zero


MODE_BASELINE = "baseline"
MODE_CAPACITY = "capacity"
MODE_WAGE = "wage"
MARKET_MODES = (MODE_BASELINE, MODE_CAPACITY, MODE_WAGE)

DEFAULT_TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SelectionProcedure:
    """Test + probabilités d'acceptation après h et l (+ salaires en mode wage)"""

    test: Test
    alpha_h: float
    alpha_l: float
    wage_h: float = 0.0
    wage_l: float = 0.0
    supportable: bool = True

    def __post_init__(self):
        for name in ("alpha_h", "alpha_l"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} doit être dans [0, 1], reçu {value}")
            object.__setattr__(self, name, value)
        for name in ("wage_h", "wage_l"):
            value = float(getattr(self, name))
            if value < 0.0:
                raise ValueError(f"{name} doit être >= 0, reçu {value}")
            object.__setattr__(self, name, value)

    @property
    def grid(self):
        return self.test.grid

    @property
    def alpha(self) -> Tuple[float, float]:
        return self.alpha_h, self.alpha_l

    @property
    def is_cutoff(self) -> bool:
        return not (self.alpha_l > 0.0 and self.alpha_h < 1.0)

    def with_alpha(self, alpha_h: float, alpha_l: float) -> "SelectionProcedure":
        return SelectionProcedure(self.test, alpha_h, alpha_l, self.wage_h, self.wage_l)

    def with_wages(self, wage_h: float, wage_l: float = 0.0) -> "SelectionProcedure":
        return SelectionProcedure(self.test, self.alpha_h, self.alpha_l, wage_h, wage_l)

    def describe(self) -> str:
        text = f"test={self.test.describe()} alpha=({self.alpha_h:.6g}, {self.alpha_l:.6g})"
        if self.wage_h or self.wage_l:
            text += f" wage=({self.wage_h:.6g}, {self.wage_l:.6g})"
        return text


@dataclass(frozen=True, eq=False)
class ApplicationProfile:
    """phi[i] = probabilité que le type i postule à la firme 1"""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if np.any(phi < 0.0) or np.any(phi > 1.0):
            raise ValueError("phi doit être dans [0, 1]")
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)

    @classmethod
    def uniform(cls, n: int, share: float = 0.5) -> "ApplicationProfile":
        return cls(np.full(n, share))

    def complement(self) -> "ApplicationProfile":
        """Profil vu de la firme 2"""
        return ApplicationProfile(1.0 - self.phi)


def _check_mode(mode: str):
    if mode not in MARKET_MODES:
        raise ValueError(f"mode de marché inconnu: {mode}")


def _same_grid(proc1: SelectionProcedure, proc2: SelectionProcedure):
    if not proc1.grid.same_as(proc2.grid):
        raise ValueError("les deux procédures ne partagent pas la même grille")


def acceptance_prob(proc: SelectionProcedure, type_index: Optional[int] = None):
    """α(h)·π(θ) + α(l)·(1−π(θ)); vecteur complet si type_index est None"""
    acc = proc.alpha_h * proc.test.pi + proc.alpha_l * (1.0 - proc.test.pi)
    return acc if type_index is None else float(acc[type_index])


def candidate_utility(proc: SelectionProcedure, type_index: Optional[int] = None,
                      ration: float = 1.0, mode: str = MODE_BASELINE):
    """Utilité espérée d'un candidat : acceptation (ou transfert en mode wage) rationnée"""
    _check_mode(mode)
    if not 0.0 < ration <= 1.0:
        raise ValueError(f"ration doit être dans (0, 1], reçu {ration}")
    if mode == MODE_WAGE:
        pi = proc.test.pi
        utility = proc.alpha_h * pi * proc.wage_h + proc.alpha_l * (1.0 - pi) * proc.wage_l
    else:
        utility = acceptance_prob(proc)
    utility = ration * utility
    return utility if type_index is None else float(utility[type_index])


def split_from_utilities(u1: np.ndarray, u2: np.ndarray,
                         tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
    """1 si u1 > u2 + tol, 0 si u1 < u2 − tol, ½ sinon (vectorisé sur la dernière dimension)"""
    return np.where(u1 > u2 + tie_tol, 1.0, np.where(u1 < u2 - tie_tol, 0.0, 0.5))


def best_response_split(proc1: SelectionProcedure, proc2: SelectionProcedure,
                        ration1: float = 1.0, ration2: float = 1.0,
                        mode: str = MODE_BASELINE,
                        tie_tol: float = DEFAULT_TIE_TOL) -> ApplicationProfile:
    """Chaque type postule à la firme qui lui offre l'utilité la plus haute, ½ en cas d'égalité"""
    _same_grid(proc1, proc2)
    u1 = candidate_utility(proc1, ration=ration1, mode=mode)
    u2 = candidate_utility(proc2, ration=ration2, mode=mode)
    return ApplicationProfile(split_from_utilities(u1, u2, tie_tol))


def type_integrand(proc: SelectionProcedure, mode: str = MODE_BASELINE) -> np.ndarray:
    """Contribution par type au profit, avant pondération par phi et par les poids"""
    _check_mode(mode)
    theta, pi = proc.grid.theta, proc.test.pi
    if mode == MODE_WAGE:
        return (pi * proc.alpha_h * (theta - proc.wage_h)
                + (1.0 - pi) * proc.alpha_l * (theta - proc.wage_l))
    return theta * acceptance_prob(proc)


def firm_payoff(proc_own: SelectionProcedure, proc_other: SelectionProcedure,
                profile: ApplicationProfile, mode: str = MODE_BASELINE,
                ration: float = 1.0) -> float:
    """v(s, s', φ) = Σ φ·poids·θ·(π·α(h) + (1−π)·α(l)), multiplié par le rationnement"""
    _same_grid(proc_own, proc_other)
    if profile.phi.shape != proc_own.grid.theta.shape:
        raise ValueError("le profil de candidature n'est pas aligné sur la grille")
    weighted = profile.phi * proc_own.grid.weight * type_integrand(proc_own, mode)
    return float(ration * weighted.sum())


def monopoly_payoff(proc: SelectionProcedure, mode: str = MODE_BASELINE) -> float:
    """Profit d'une firme seule sur le marché"""
    return firm_payoff(proc, proc, ApplicationProfile.uniform(proc.grid.n, 1.0), mode)


def to_cutoff(proc: SelectionProcedure) -> SelectionProcedure:
    """Procédure cutoff avec la même probabilité d'acceptation au type pivot θ=0"""
    pi0 = interpolate_at_zero(proc.grid, proc.test.pi)
    target = proc.alpha_h * pi0 + proc.alpha_l * (1.0 - pi0)

    if target <= pi0:
        alpha_h = target / pi0 if pi0 > 0.0 else 1.0
        alpha_l = 0.0 if pi0 > 0.0 else target
    else:
        alpha_h = 1.0
        alpha_l = (target - pi0) / (1.0 - pi0)
    alpha_h = min(max(alpha_h, 0.0), 1.0)
    alpha_l = min(max(alpha_l, 0.0), 1.0)
    return SelectionProcedure(proc.test, alpha_h, alpha_l, proc.wage_h, proc.wage_l)


def cutoff_alphas(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Paramètre cutoff a ∈ [0, 2] : a ≤ 1 → (a, 0), a > 1 → (1, a − 1)"""
    a = np.asarray(a, dtype=float)
    alpha_h = np.minimum(a, 1.0)
    alpha_l = np.maximum(a - 1.0, 0.0)
    return alpha_h, alpha_l


def cutoff_lattice(alpha_steps: int) -> np.ndarray:
    """a = k / alpha_steps pour k = 0 .. 2·alpha_steps"""
    if alpha_steps < 2:
        raise ValueError("alpha_steps doit être >= 2")
    return np.arange(2 * alpha_steps + 1) / alpha_steps


def cutoff_procedure(test: Test, a: float) -> SelectionProcedure:
    alpha_h, alpha_l = cutoff_alphas(np.array([a]))
    return SelectionProcedure(test, float(alpha_h[0]), float(alpha_l[0]))


def acceptance_matrix(test: Test, alpha_h: np.ndarray, alpha_l: np.ndarray) -> np.ndarray:
    """Probabilités d'acceptation pour un lot de règles (une ligne par règle)"""
    alpha_h = np.asarray(alpha_h, dtype=float)[:, None]
    alpha_l = np.asarray(alpha_l, dtype=float)[:, None]
    return alpha_h * test.pi[None, :] + alpha_l * (1.0 - test.pi)[None, :]


def utility_difference_sign_changes(proc_a: SelectionProcedure, proc_b: SelectionProcedure,
                                    mode: str = MODE_BASELINE,
                                    tie_tol: float = DEFAULT_TIE_TOL) -> int:
    """Nombre de changements de signe strict de Δu(θ) le long de la grille"""
    delta = candidate_utility(proc_a, mode=mode) - candidate_utility(proc_b, mode=mode)
    signs = np.sign(np.where(np.abs(delta) <= tie_tol, 0.0, delta))
    signs = signs[signs != 0]
    return int(np.count_nonzero(np.diff(signs)))


def selection_pattern(proc_a: SelectionProcedure, proc_b: SelectionProcedure,
                      ration_a: float = 1.0, ration_b: float = 1.0,
                      mode: str = MODE_BASELINE,
                      tie_tol: float = DEFAULT_TIE_TOL) -> str:
    """
    Classe l'ensemble des types qui préfèrent strictement proc_a :
    'upper' (sélection positive), 'lower' (sélection négative), 'all', 'none' ou 'mixed'
    """
    u_a = candidate_utility(proc_a, ration=ration_a, mode=mode)
    u_b = candidate_utility(proc_b, ration=ration_b, mode=mode)
    prefers = u_a > u_b + tie_tol
    if prefers.all():
        return "all"
    if not prefers.any():
        return "none"
    first = int(np.argmax(prefers))
    last = len(prefers) - 1 - int(np.argmax(prefers[::-1]))
    if prefers[first:].all():
        return "upper"
    if first == 0 and prefers[: last + 1].all():
        return "lower"
    return "mixed"
