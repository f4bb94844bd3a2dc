"""
Ordres partiels sur les tests pour Selection Equilibria
Accuracy (Lehmann) et difficulté, avec les oracles FOSD et CDF continue
"""

import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

sys.path.append(str(Path(__file__).parent.parent))

from models.signal_tests import Test, posterior_from_prior
from models.type_space import TypeGrid


ORDER_TOL = 1e-9
FOSD_TOL = 1e-9


class Comparison(str, Enum):
    MORE_THAN = "MoreThan"
    LESS_THAN = "LessThan"
    EQUAL = "Equal"
    INCOMPARABLE = "Incomparable"

    def swap(self) -> "Comparison":
        if self is Comparison.MORE_THAN:
            return Comparison.LESS_THAN
        if self is Comparison.LESS_THAN:
            return Comparison.MORE_THAN
        return self

    @property
    def at_least(self) -> bool:
        """Premier argument au moins aussi grand (MoreThan ou Equal)"""
        return self in (Comparison.MORE_THAN, Comparison.EQUAL)


def _check_same_grid(t: Test, d: Test):
    if not t.grid.same_as(d.grid):
        raise ValueError("les deux tests ne sont pas définis sur la même grille")


def _pairs(n: int, exhaustive: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Indices (haut, bas) des paires θ > θ′ à contrôler"""
    if exhaustive:
        lo, hi = np.triu_indices(n, k=1)
        return hi, lo
    return np.arange(1, n), np.arange(0, n - 1)


def _ratio_nondecreasing(a: np.ndarray, b: np.ndarray, hi: np.ndarray, lo: np.ndarray,
                         tol: float) -> bool:
    """a/b croissant sous forme sans division : a(θ)·b(θ′) ≥ b(θ)·a(θ′) − tol"""
    return bool(np.all(a[hi] * b[lo] >= b[hi] * a[lo] - tol))


def _more_accurate(t: Test, d: Test, tol: float, exhaustive: bool) -> bool:
    hi, lo = _pairs(t.grid.n, exhaustive)
    high_ok = _ratio_nondecreasing(t.pi, d.pi, hi, lo, tol)
    low_ok = bool(np.all(t.low[hi] * d.low[lo] <= d.low[hi] * t.low[lo] + tol))
    return high_ok and low_ok


def _more_difficult(t: Test, d: Test, tol: float, exhaustive: bool) -> bool:
    hi, lo = _pairs(t.grid.n, exhaustive)
    return (_ratio_nondecreasing(t.pi, d.pi, hi, lo, tol)
            and _ratio_nondecreasing(t.low, d.low, hi, lo, tol))


def _combine(forward: bool, backward: bool) -> Comparison:
    if forward and backward:
        return Comparison.EQUAL
    if forward:
        return Comparison.MORE_THAN
    if backward:
        return Comparison.LESS_THAN
    return Comparison.INCOMPARABLE


def compare_accuracy(t: Test, d: Test, tol: float = ORDER_TOL,
                     exhaustive: bool = False) -> Comparison:
    """MoreThan si π_t/π_d croissant et (1−π_t)/(1−π_d) décroissant en θ"""
    _check_same_grid(t, d)
    return _combine(_more_accurate(t, d, tol, exhaustive), _more_accurate(d, t, tol, exhaustive))


def compare_difficulty(t: Test, d: Test, tol: float = ORDER_TOL,
                       exhaustive: bool = False) -> Comparison:
    """MoreThan (t plus difficile) si π_t/π_d et (1−π_t)/(1−π_d) sont croissants en θ"""
    _check_same_grid(t, d)
    return _combine(_more_difficult(t, d, tol, exhaustive), _more_difficult(d, t, tol, exhaustive))


def is_knife_edge(t: Test, d: Test, tol: float = ORDER_TOL) -> bool:
    """Comparables dans les deux ordres sans être égaux (ratios constants)"""
    accuracy = compare_accuracy(t, d, tol)
    difficulty = compare_difficulty(t, d, tol)
    return (accuracy in (Comparison.MORE_THAN, Comparison.LESS_THAN)
            and difficulty in (Comparison.MORE_THAN, Comparison.LESS_THAN))


def fosd(p: Sequence[float], q: Sequence[float], grid: TypeGrid, tol: float = FOSD_TOL) -> bool:
    """p domine q au premier ordre : CDF_p ≤ CDF_q + tol en chaque point"""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape or p.shape != grid.theta.shape:
        raise ValueError("les distributions doivent avoir la taille de la grille")
    return bool(np.all(np.cumsum(p) <= np.cumsum(q) + tol))


@dataclass
class FosdReport:
    holds: bool
    comparison: Comparison
    n_priors: int
    n_checked: int
    witness_prior: Optional[np.ndarray] = None
    witness_signal: Optional[str] = None


def check_difficulty_fosd_equiv(t: Test, d: Test, priors: Sequence[Sequence[float]],
                                tol: float = FOSD_TOL) -> FosdReport:
    """
    Pour chaque prior, les posteriors de t doivent dominer ceux de d après h et après l
    Un signal de masse nulle sous le prior est ignoré
    """
    _check_same_grid(t, d)
    comparison = compare_difficulty(t, d)
    checked = 0
    for prior in priors:
        prior = np.asarray(prior, dtype=float)
        if prior.shape != t.pi.shape:
            raise ValueError("chaque prior doit avoir la taille de la grille")
        for signal in ("h", "l"):
            post_t = posterior_from_prior(t.pi, prior, signal)
            post_d = posterior_from_prior(d.pi, prior, signal)
            if post_t is None or post_d is None:
                continue
            checked += 1
            if not fosd(post_t, post_d, t.grid, tol):
                return FosdReport(False, comparison, len(priors), checked, prior, signal)
    return FosdReport(True, comparison, len(priors), checked)


# Réécriture continue d'un test binaire : signal x ∈ [0, 1] de densité 2(1−π) puis 2π

def _cdf(x: float, pi: float) -> float:
    if x < 0.5:
        return 2.0 * (1.0 - pi) * x
    return 1.0 + 2.0 * pi * (x - 1.0)


def _cdf_inverse(q: float, pi: float) -> float:
    if q < 1.0 - pi:
        return q / (2.0 * (1.0 - pi))
    return q / (2.0 * pi) + (2.0 * pi - 1.0) / (2.0 * pi)


def _grid_index(grid: TypeGrid, value: float) -> int:
    matches = np.flatnonzero(np.isclose(grid.theta, value, rtol=0.0, atol=1e-12))
    if matches.size == 0:
        raise ValueError(f"θ={value} n'est pas un point de la grille")
    return int(matches[0])


def lehmann_cdf_cross(t: Test, d: Test, theta_from: float, theta_to: float,
                      q: float) -> Tuple[float, float]:
    """(F_t(F_t⁻¹(q|θ_from)|θ_to), F_d(F_d⁻¹(q|θ_from)|θ_to))"""
    _check_same_grid(t, d)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q doit être dans [0, 1], reçu {q}")
    if q == 0.0:
        return 0.0, 0.0
    if q == 1.0:
        return 1.0, 1.0
    i, j = _grid_index(t.grid, theta_from), _grid_index(t.grid, theta_to)
    first = _cdf(_cdf_inverse(q, t.pi[i]), t.pi[j])
    second = _cdf(_cdf_inverse(q, d.pi[i]), d.pi[j])
    return float(first), float(second)


def certify_accuracy_by_cdf(t: Test, d: Test, n_q: int = 50, tol: float = ORDER_TOL) -> bool:
    """Oracle de Lehmann : t au moins aussi précis que d sur toutes les paires θ < θ′"""
    _check_same_grid(t, d)
    theta = t.grid.theta
    for q in np.linspace(0.0, 1.0, n_q):
        for i in range(t.grid.n):
            for j in range(i + 1, t.grid.n):
                first, second = lehmann_cdf_cross(t, d, theta[i], theta[j], float(q))
                if first > second + tol:
                    return False
    return True


def knife_edge_pairs(tests: Sequence[Test], tol: float = ORDER_TOL) -> List[Tuple[int, int]]:
    """Paires (i, j), i < j, comparables dans les deux ordres sans être égales"""
    return [
        (i, j)
        for i in range(len(tests))
        for j in range(i + 1, len(tests))
        if is_knife_edge(tests[i], tests[j], tol)
    ]
