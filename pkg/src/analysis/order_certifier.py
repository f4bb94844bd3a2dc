"""
Order Certifier pour Selection Equilibria
Matrices de comparaison d'un ensemble de tests et contrôle croisé par les oracles FOSD et CDF
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

sys.path.append(str(Path(__file__).parent.parent))

from analysis.orders import (
    ORDER_TOL,
    Comparison,
    certify_accuracy_by_cdf,
    check_difficulty_fosd_equiv,
    compare_accuracy,
    compare_difficulty,
    knife_edge_pairs,
)
from models.signal_tests import Test, sample_priors
from models.test_set import TestSet
from models.type_space import TypeGrid


# Au-delà, l'oracle CDF (O(n_q · n²) par paire) est sauté
CDF_ORACLE_MAX_GRID = 25


@dataclass
class OrderCertificate:
    n_tests: int
    n_pairs: int
    accuracy: pd.DataFrame
    difficulty: pd.DataFrame
    knife_edges: List[Tuple[int, int]]
    certified: bool = False
    n_priors: int = 0
    fosd_disagreements: List[Tuple[int, int]] = field(default_factory=list)
    cdf_disagreements: List[Tuple[int, int]] = field(default_factory=list)
    cdf_checked: bool = False

    @property
    def consistent(self) -> bool:
        return not self.fosd_disagreements and not self.cdf_disagreements

    def as_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {
            "n_tests": self.n_tests,
            "n_pairs": self.n_pairs,
            "accuracy_comparable_pairs": _comparable_pairs(self.accuracy),
            "difficulty_comparable_pairs": _comparable_pairs(self.difficulty),
            "knife_edge_pairs": len(self.knife_edges),
        }
        for i, (a, b) in enumerate(self.knife_edges):
            data[f"knife_edge_{i}"] = f"{a},{b}"
        if self.certified:
            data.update({
                "n_priors": self.n_priors,
                "fosd_disagreements": len(self.fosd_disagreements),
                "cdf_checked": self.cdf_checked,
                "cdf_disagreements": len(self.cdf_disagreements),
            })
        data["consistent"] = self.consistent
        return data


@dataclass
class PairCertificate:
    """Comparaison de deux tests t et d, avec les oracles si demandés"""

    t: Test
    d: Test
    accuracy: Comparison
    difficulty: Comparison
    certified: bool = False
    n_priors: int = 0
    fosd_holds: Optional[bool] = None
    fosd_agrees: bool = True
    cdf_checked: bool = False
    cdf_oracle: Optional[bool] = None
    cdf_agrees: bool = True

    @property
    def consistent(self) -> bool:
        return self.fosd_agrees and self.cdf_agrees

    def as_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {
            "t": self.t.describe(),
            "d": self.d.describe(),
            "accuracy": self.accuracy.value,
            "difficulty": self.difficulty.value,
        }
        if self.certified:
            data.update({
                "n_priors": self.n_priors,
                "fosd_holds": self.fosd_holds,
                "fosd_agrees": self.fosd_agrees,
                "cdf_checked": self.cdf_checked,
                "cdf_oracle": self.cdf_oracle,
                "cdf_agrees": self.cdf_agrees,
            })
        data["consistent"] = self.consistent
        return data


def _oracle_priors(grid: TypeGrid, rng: np.random.Generator, n_priors: int,
                   n_degenerate: int) -> np.ndarray:
    # toutes les paires adjacentes figurent parmi les priors dégénérés
    n_degenerate = max(n_degenerate, grid.n - 1)
    return sample_priors(grid, max(n_priors, n_degenerate), n_degenerate, rng)


def certify_pair(t: Test, d: Test, rng: np.random.Generator, certify: bool = False,
                 n_priors: int = 100, n_degenerate: int = 20, n_q: int = 50,
                 tol: float = ORDER_TOL, exhaustive: bool = False) -> PairCertificate:
    """Les deux ordres pour (t, d); avec certify, oracle FOSD et oracle CDF (petites grilles)"""
    certificate = PairCertificate(t, d, compare_accuracy(t, d, tol, exhaustive),
                                  compare_difficulty(t, d, tol, exhaustive))
    if not certify:
        return certificate

    priors = _oracle_priors(t.grid, rng, n_priors, n_degenerate)
    fosd = check_difficulty_fosd_equiv(t, d, priors)
    certificate.certified = True
    certificate.n_priors = len(priors)
    certificate.fosd_holds = fosd.holds
    certificate.fosd_agrees = fosd.holds == fosd.comparison.at_least
    certificate.cdf_checked = t.grid.n <= CDF_ORACLE_MAX_GRID
    if certificate.cdf_checked:
        certificate.cdf_oracle = certify_accuracy_by_cdf(t, d, n_q, tol)
        certificate.cdf_agrees = certificate.cdf_oracle == certificate.accuracy.at_least
    return certificate


def _comparable_pairs(matrix: pd.DataFrame) -> int:
    """Paires i < j comparables (MoreThan, LessThan ou Equal)"""
    values = matrix.to_numpy()
    upper = np.triu_indices(values.shape[0], k=1)
    return int(np.count_nonzero(values[upper] != "Incomparable"))


def comparison_matrix(test_set: TestSet, order: str = "accuracy", tol: float = ORDER_TOL,
                      exhaustive: bool = False) -> pd.DataFrame:
    """Cellule (i, j) : comparaison du test i avec le test j"""
    compare = {"accuracy": compare_accuracy, "difficulty": compare_difficulty}.get(order)
    if compare is None:
        raise ValueError(f"ordre inconnu: {order} (accuracy ou difficulty)")
    n = len(test_set)
    labels = [t.describe() for t in test_set.tests]
    cells = np.full((n, n), "Equal", dtype=object)
    for i in range(n):
        for j in range(i + 1, n):
            result = compare(test_set[i], test_set[j], tol, exhaustive)
            cells[i, j] = result.value
            cells[j, i] = result.swap().value
    return pd.DataFrame(cells, index=labels, columns=labels)


def certify_orders(test_set: TestSet, rng: np.random.Generator, certify: bool = False,
                   n_priors: int = 100, n_degenerate: int = 20, n_q: int = 50,
                   tol: float = ORDER_TOL, exhaustive: bool = False,
                   verbose: bool = False) -> OrderCertificate:
    """Matrices des deux ordres; avec certify, compare chaque paire aux oracles"""
    if verbose:
        print(f"🔍 Comparaison de {len(test_set)} tests", file=sys.stderr)
    n = len(test_set)
    certificate = OrderCertificate(
        n_tests=n,
        n_pairs=n * (n - 1) // 2,
        accuracy=comparison_matrix(test_set, "accuracy", tol, exhaustive),
        difficulty=comparison_matrix(test_set, "difficulty", tol, exhaustive),
        knife_edges=knife_edge_pairs(test_set.tests, tol),
    )
    if not certify:
        return certificate

    grid = test_set.grid
    priors = _oracle_priors(grid, rng, n_priors, n_degenerate)
    certificate.certified = True
    certificate.n_priors = len(priors)
    certificate.cdf_checked = grid.n <= CDF_ORACLE_MAX_GRID

    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            t, d = test_set[i], test_set[j]
            fosd = check_difficulty_fosd_equiv(t, d, priors)
            if fosd.holds != fosd.comparison.at_least:
                certificate.fosd_disagreements.append((i, j))
            if certificate.cdf_checked:
                oracle = certify_accuracy_by_cdf(t, d, n_q, tol)
                if oracle != compare_accuracy(t, d, tol).at_least:
                    certificate.cdf_disagreements.append((i, j))
    if verbose:
        status = "✅" if certificate.consistent else "❌"
        print(f"{status} Oracles : {len(certificate.fosd_disagreements)} désaccords FOSD, "
              f"{len(certificate.cdf_disagreements)} désaccords CDF", file=sys.stderr)
    return certificate
