"""
Espace des types pour Selection Equilibria
Grille discrète des types θ avec leurs poids (continu discrétisé ou binaire)
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


GRID_KIND_CONTINUOUS = "grid"
GRID_KIND_BINARY = "binary"

DEFAULT_N_POINTS = 201
WEIGHT_SUM_TOL = 1e-12


def _frozen(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class TypeGrid:
    """Grille de types θ strictement croissante avec poids strictement positifs"""

    theta: np.ndarray
    weight: np.ndarray
    kind: str = GRID_KIND_CONTINUOUS
    spacing: Optional[float] = field(default=None)

    def __post_init__(self):
        theta = _frozen(self.theta)
        weight = _frozen(self.weight)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "weight", weight)

        if theta.ndim != 1 or theta.size < 2:
            raise ValueError("theta doit contenir au moins deux points")
        if weight.shape != theta.shape:
            raise ValueError(
                f"weight ({weight.size} points) et theta ({theta.size} points) n'ont pas la même taille"
            )
        if not np.all(np.isfinite(theta)) or not np.all(np.isfinite(weight)):
            raise ValueError("theta et weight doivent être finis")
        if np.any(np.diff(theta) <= 0):
            raise ValueError("theta doit être strictement croissant")
        if np.any(weight <= 0):
            raise ValueError("tous les poids doivent être > 0")
        if abs(weight.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"les poids doivent sommer à 1 (somme = {weight.sum():.15g})")
        if self.kind not in (GRID_KIND_CONTINUOUS, GRID_KIND_BINARY):
            raise ValueError(f"kind inconnu: {self.kind}")
        if self.kind == GRID_KIND_BINARY and theta.size != 2:
            raise ValueError("une grille binaire a exactement deux points")

    @classmethod
    def binary(cls, theta_low: float, theta_high: float, mu: float) -> "TypeGrid":
        """Types binaires (θ̲, θ̄) avec masse mu sur le type haut"""
        if not 0.0 < mu < 1.0:
            raise ValueError(f"mu doit être dans (0, 1), reçu {mu}")
        return cls(
            theta=[theta_low, theta_high],
            weight=[1.0 - mu, mu],
            kind=GRID_KIND_BINARY,
        )

    @classmethod
    def uniform(cls, theta_min: float, theta_max: float,
                n_points: int = DEFAULT_N_POINTS) -> "TypeGrid":
        """Densité uniforme sur [theta_min, theta_max], poids trapézoïdaux"""
        return cls.from_density(theta_min, theta_max, n_points, np.ones(n_points))

    @classmethod
    def from_density(cls, theta_min: float, theta_max: float, n_points: int,
                     density: Sequence[float]) -> "TypeGrid":
        """
        Discrétise une densité linéaire par morceaux donnée aux points de la grille
        Règle des trapèzes : erreur en O(h²) sur les intégrales lisses
        """
        if n_points < 2:
            raise ValueError("n_points doit être >= 2")
        if theta_max <= theta_min:
            raise ValueError("theta_max doit être > theta_min")
        density = np.asarray(density, dtype=float)
        if density.shape != (n_points,):
            raise ValueError(f"la densité doit avoir {n_points} valeurs")
        if np.any(density <= 0):
            raise ValueError("la densité doit être strictement positive sur la grille")

        theta = np.linspace(theta_min, theta_max, n_points)
        h = theta[1] - theta[0]
        trapezoid = np.full(n_points, h)
        trapezoid[0] = trapezoid[-1] = h / 2
        weight = density * trapezoid
        weight = weight / weight.sum()
        return cls(theta=theta, weight=weight, kind=GRID_KIND_CONTINUOUS, spacing=float(h))

    @classmethod
    def from_table(cls, theta: Sequence[float], weight: Sequence[float]) -> "TypeGrid":
        """Grille explicite, poids renormalisés"""
        weight = np.asarray(weight, dtype=float)
        if np.any(weight <= 0):
            raise ValueError("tous les poids doivent être > 0")
        return cls(theta=theta, weight=weight / weight.sum(), kind=GRID_KIND_CONTINUOUS)

    @property
    def n(self) -> int:
        return int(self.theta.size)

    @property
    def is_binary(self) -> bool:
        return self.kind == GRID_KIND_BINARY

    @property
    def theta_low(self) -> float:
        return float(self.theta[0])

    @property
    def theta_high(self) -> float:
        return float(self.theta[-1])

    @property
    def mu(self) -> float:
        """Masse du type haut (grilles binaires)"""
        if not self.is_binary:
            raise ValueError("mu n'est défini que pour une grille binaire")
        return float(self.weight[1])

    @property
    def brackets_zero(self) -> bool:
        return self.theta_low <= 0.0 <= self.theta_high

    def same_as(self, other: "TypeGrid") -> bool:
        """Deux grilles sont compatibles si mêmes points et mêmes poids"""
        if other is self:
            return True
        return (
            self.n == other.n
            and np.array_equal(self.theta, other.theta)
            and np.array_equal(self.weight, other.weight)
        )


def mean_type(grid: TypeGrid) -> float:
    """E[θ] = Σ poids · θ"""
    return float(np.dot(grid.weight, grid.theta))


def interpolate_at_zero(grid: TypeGrid, values: Sequence[float]) -> float:
    """Valeur en θ=0 par interpolation linéaire entre les deux points qui encadrent 0"""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.theta.shape:
        raise ValueError("values doit être aligné sur la grille")
    if not grid.brackets_zero:
        raise ValueError(
            f"la grille [{grid.theta_low}, {grid.theta_high}] n'encadre pas 0"
        )
    return float(np.interp(0.0, grid.theta, values))
