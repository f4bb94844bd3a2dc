"""
Tests de sélection pour Selection Equilibria
Tests à signal binaire, familles paramétriques, statistiques du signal et posteriors
"""

import math
import sys
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

sys.path.append(str(Path(__file__).parent.parent))

from models.type_space import TypeGrid, mean_type


MONOTONE_TOL = 1e-12
DEFAULT_TI_TOL = 1e-12


class AssumptionWarning(UserWarning):
    """Un test viole l'intériorité (valeurs 0 ou 1 à l'intérieur de la grille)"""


class Family(str, Enum):
    POWER_LINEAR = "PowerLinear"
    LINEAR_MIX = "LinearMix"
    THRESHOLD_NOISE_UNIFORM = "ThresholdNoiseUniform"


@dataclass(frozen=True, eq=False)
class Test:
    """Probabilité du signal haut h pour chaque type de la grille"""

    __test__ = False  # pas une classe de test pytest

    pi: np.ndarray
    grid: TypeGrid
    label: str = ""
    issues: List[str] = field(default_factory=list)

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        pi.flags.writeable = False
        object.__setattr__(self, "pi", pi)

        if pi.shape != self.grid.theta.shape:
            raise ValueError(
                f"pi a {pi.size} valeurs pour une grille de {self.grid.n} points"
            )
        if not np.all(np.isfinite(pi)) or np.any(pi < 0.0) or np.any(pi > 1.0):
            raise ValueError("chaque valeur de pi doit être dans [0, 1]")
        if np.any(np.diff(pi) < -MONOTONE_TOL):
            raise ValueError("pi doit être croissant en θ")

        interior = pi[1:-1]
        if np.any((interior <= 0.0) | (interior >= 1.0)):
            message = "pi touche 0 ou 1 sur un point intérieur de la grille"
            self.issues.append(message)
            warnings.warn(message, AssumptionWarning, stacklevel=3)

    @property
    def low(self) -> np.ndarray:
        """Probabilité du signal bas l"""
        return 1.0 - self.pi

    def is_constant(self, tol: float = MONOTONE_TOL) -> bool:
        return float(self.pi.max() - self.pi.min()) <= tol

    def describe(self) -> str:
        if self.label:
            return self.label
        if self.grid.n <= 6:
            return "(" + ", ".join(f"{v:.6g}" for v in self.pi) + ")"
        return f"test[{self.pi[0]:.4g}..{self.pi[-1]:.4g}]"


@dataclass(frozen=True)
class FamilyParams:
    family: Family
    sigma: float
    d: float

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))


@dataclass(frozen=True)
class SignalStats:
    pi_bar: float
    int_theta_pi: float
    int_theta_1mpi: float
    post_mean_h: float
    post_mean_l: float

    @property
    def h_defined(self) -> bool:
        return not math.isnan(self.post_mean_h)

    @property
    def l_defined(self) -> bool:
        return not math.isnan(self.post_mean_l)


def _unit_ramp(grid: TypeGrid) -> np.ndarray:
    return (grid.theta - grid.theta_low) / (grid.theta_high - grid.theta_low)


def default_linear_mix_base(grid: TypeGrid) -> np.ndarray:
    """Rampe identité ramenée dans (0.05, 0.95)"""
    return 0.05 + 0.9 * _unit_ramp(grid)


def build_family_test(params: FamilyParams, grid: TypeGrid,
                      base: Optional[Sequence[float]] = None) -> Test:
    """Construit un test d'une famille paramétrique (σ, d)"""
    sigma, d = float(params.sigma), float(params.d)
    label = f"{params.family.value}(sigma={sigma:.6g}, d={d:.6g})"

    if params.family is Family.POWER_LINEAR:
        if not 0.0 <= sigma <= 1.0:
            raise ValueError(f"PowerLinear: sigma doit être dans [0, 1], reçu {sigma}")
        if d <= 0.0:
            raise ValueError(f"PowerLinear: d doit être > 0, reçu {d}")
        pi = (sigma / 2.0 + (1.0 - sigma) * _unit_ramp(grid)) ** d

    elif params.family is Family.LINEAR_MIX:
        if not 0.0 <= sigma <= 1.0:
            raise ValueError(f"LinearMix: sigma doit être dans [0, 1], reçu {sigma}")
        if not 0.0 <= d <= 1.0:
            raise ValueError(f"LinearMix: d doit être dans [0, 1], reçu {d}")
        pi0 = default_linear_mix_base(grid) if base is None else np.asarray(base, dtype=float)
        if pi0.shape != grid.theta.shape:
            raise ValueError("LinearMix: la courbe de base doit être alignée sur la grille")
        if np.any(np.diff(pi0) < 0) or np.any(pi0 < 0) or np.any(pi0 > 1):
            raise ValueError("LinearMix: la courbe de base doit être croissante dans [0, 1]")
        pi = sigma * pi0 + (1.0 - sigma) * d

    elif params.family is Family.THRESHOLD_NOISE_UNIFORM:
        if sigma <= 0.0:
            raise ValueError(f"ThresholdNoiseUniform: sigma doit être > 0, reçu {sigma}")
        if not (grid.theta_low > d - sigma and grid.theta_high < d):
            raise ValueError(
                "ThresholdNoiseUniform: il faut θ̲ > d − σ et θ̄ < d "
                f"(θ̲={grid.theta_low}, θ̄={grid.theta_high}, d={d}, sigma={sigma})"
            )
        # Pr[θ + σε ≥ d] avec ε ~ U[0, 1]
        pi = np.clip(1.0 - (d - grid.theta) / sigma, 0.0, 1.0)

    else:
        raise ValueError(f"famille inconnue: {params.family}")

    return Test(pi=np.clip(pi, 0.0, 1.0), grid=grid, label=label)


# Transformations de l'ordre (exemples classiques d'accuracy et de difficulté)

def garble(test: Test, beta: float, constant: float) -> Test:
    """Garbling de Blackwell β·π + (1−β)·c, moins précis que l'original"""
    if not 0.0 <= beta <= 1.0 or not 0.0 <= constant <= 1.0:
        raise ValueError("garble: beta et constant doivent être dans [0, 1]")
    return Test(pi=beta * test.pi + (1.0 - beta) * constant, grid=test.grid,
                label=f"garble({test.describe()}, {beta:.4g})")


def damp_derivative(test: Test, c: float) -> Test:
    """π(θ̲) + c·(π(θ) − π(θ̲)), moins précis que l'original"""
    if not 0.0 <= c <= 1.0:
        raise ValueError("damp_derivative: c doit être dans [0, 1]")
    return Test(pi=test.pi[0] + c * (test.pi - test.pi[0]), grid=test.grid)


def shift(test: Test, c: float) -> Test:
    """π + c, plus facile que l'original pour c > 0"""
    pi = test.pi + c
    if np.any(pi < 0.0) or np.any(pi > 1.0):
        raise ValueError("shift: π + c sort de [0, 1]")
    return Test(pi=pi, grid=test.grid)


def power(test: Test, c: float) -> Test:
    """π^c avec c dans (0, 1], plus facile que l'original"""
    if not 0.0 < c <= 1.0:
        raise ValueError("power: c doit être dans (0, 1]")
    return Test(pi=test.pi ** c, grid=test.grid)


def degarble(test: Test, gamma: float) -> Test:
    """π̄ + γ(π − π̄) avec γ ≥ 1 : l'original en est un garbling"""
    if gamma < 1.0:
        raise ValueError("degarble: gamma doit être >= 1")
    pi_bar = float(np.dot(test.grid.weight, test.pi))
    pi = pi_bar + gamma * (test.pi - pi_bar)
    if np.any(pi < 0.0) or np.any(pi > 1.0):
        raise ValueError("degarble: le test obtenu sort de [0, 1]")
    return Test(pi=pi, grid=test.grid, label=f"degarble({test.describe()}, {gamma:.4g})")


def max_degarble_gamma(test: Test, margin: float = 1e-6) -> float:
    """Plus grand γ gardant π̄ + γ(π − π̄) dans [margin, 1 − margin]"""
    pi_bar = float(np.dot(test.grid.weight, test.pi))
    dev = test.pi - pi_bar
    bounds = [np.inf]
    up, down = dev > 0, dev < 0
    if np.any(up):
        bounds.append(float(np.min((1.0 - margin - pi_bar) / dev[up])))
    if np.any(down):
        bounds.append(float(np.min((margin - pi_bar) / dev[down])))
    return max(1.0, min(bounds))


def threshold_certification(grid: TypeGrid, d: float) -> Test:
    """Certification à seuil 1[θ ≥ d]"""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AssumptionWarning)
        return Test(pi=(grid.theta >= d).astype(float), grid=grid, label=f"threshold({d:.4g})")


def signal_stats(test: Test) -> SignalStats:
    """Masse du signal h, intégrales ∫θπ dF et ∫θ(1−π) dF, moyennes postérieures"""
    w, theta, pi = test.grid.weight, test.grid.theta, test.pi
    pi_bar = float(np.dot(w, pi))
    int_theta_pi = float(np.dot(w * theta, pi))
    int_theta_1mpi = float(np.dot(w * theta, 1.0 - pi))
    post_mean_h = int_theta_pi / pi_bar if pi_bar > 0.0 else math.nan
    post_mean_l = int_theta_1mpi / (1.0 - pi_bar) if pi_bar < 1.0 else math.nan
    return SignalStats(
        pi_bar=min(max(pi_bar, 0.0), 1.0),
        int_theta_pi=int_theta_pi,
        int_theta_1mpi=int_theta_1mpi,
        post_mean_h=post_mean_h,
        post_mean_l=post_mean_l,
    )


def posterior_from_prior(pi: np.ndarray, prior: np.ndarray, signal: str) -> Optional[np.ndarray]:
    """Posterior sous un prior arbitraire (zéros permis); None si le signal a une masse nulle"""
    likelihood = pi if signal == "h" else 1.0 - pi
    joint = prior * likelihood
    mass = joint.sum()
    if mass <= 0.0:
        return None
    return joint / mass


def posterior_dist(test: Test, signal: str, prior: Optional[Sequence[float]] = None) -> np.ndarray:
    """f_th = f·π/π̄ pour h, f_tl = f·(1−π)/(1−π̄) pour l"""
    if signal not in ("h", "l"):
        raise ValueError(f"signal doit être 'h' ou 'l', reçu {signal!r}")
    prior = test.grid.weight if prior is None else np.asarray(prior, dtype=float)
    posterior = posterior_from_prior(test.pi, prior, signal)
    if posterior is None:
        raise ValueError(f"le signal {signal} a une masse nulle")
    return posterior


def is_minimally_informative(test: Test, tol: float = DEFAULT_TI_TOL) -> bool:
    """Appartenance à T_i : ∫θ(1−π) dF ≤ 0 ≤ ∫θπ dF (tolérance signée)"""
    stats = signal_stats(test)
    return stats.int_theta_1mpi <= tol and stats.int_theta_pi >= -tol


def accounting_gap(test: Test) -> float:
    """Écart à l'identité ∫θπ + ∫θ(1−π) = E[θ]"""
    stats = signal_stats(test)
    return abs(stats.int_theta_pi + stats.int_theta_1mpi - mean_type(test.grid))


def sample_priors(grid: TypeGrid, n: int, n_degenerate: int,
                  rng: np.random.Generator) -> List[np.ndarray]:
    """
    Priors pour les oracles : paires adjacentes, masses ponctuelles, sous-ensembles aléatoires
    (non full-support) puis priors de Dirichlet (full-support)
    """
    priors: List[np.ndarray] = []
    size = grid.n

    for i in range(size - 1):
        if len(priors) >= n_degenerate:
            break
        prior = np.zeros(size)
        share = rng.uniform(0.1, 0.9)
        prior[i], prior[i + 1] = share, 1.0 - share
        priors.append(prior)

    while len(priors) < n_degenerate:
        prior = np.zeros(size)
        support = rng.choice(size, size=rng.integers(1, size), replace=False)
        prior[support] = rng.dirichlet(np.ones(support.size))
        priors.append(prior)

    while len(priors) < n:
        priors.append(rng.dirichlet(np.ones(size)))
    return priors[:n]
