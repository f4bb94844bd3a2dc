"""
Balayage du treillis (σ, d) pour Selection Equilibria
Région T_i, statistiques du signal et vérification point par point, table prête pour le CSV
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

sys.path.append(str(Path(__file__).parent.parent))

from models.market import DEFAULT_TIE_TOL
from models.signal_tests import DEFAULT_TI_TOL, is_minimally_informative, signal_stats
from models.test_set import TestSet
from models.type_space import mean_type
from optimization.equilibrium import DEFAULT_ALPHA_STEPS, GAIN_TOL, verify_symmetric, zero_profit_alpha


SCAN_COLUMNS = ["sigma", "d", "in_Ti", "int_theta_pi", "post_mean_h", "is_equilibrium", "best_gain"]


def scan_lattice(test_set: TestSet, alpha_steps: int = DEFAULT_ALPHA_STEPS,
                 gain_tol: float = GAIN_TOL, ti_tol: float = DEFAULT_TI_TOL,
                 tie_tol: float = DEFAULT_TIE_TOL, verify_points: bool = True,
                 threads: int = 1, progress: bool = False) -> pd.DataFrame:
    """
    Une ligne par test du treillis (σ en boucle externe, d en boucle interne)
    is_equilibrium : la procédure à profit nul du test résiste à toutes les déviations du treillis
    """
    if not test_set.is_lattice:
        raise ValueError("le balayage exige un ensemble construit en treillis (σ, d)")

    rows = []
    for i, test in enumerate(tqdm(test_set.tests, disable=not progress, desc="scan")):
        stats = signal_stats(test)
        in_ti = is_minimally_informative(test, ti_tol)
        is_equilibrium, best_gain = False, np.nan
        if verify_points and in_ti:
            report = verify_symmetric(zero_profit_alpha(test, ti_tol), test_set, alpha_steps,
                                      gain_tol, tie_tol=tie_tol, ti_tol=ti_tol, threads=threads,
                                      with_structure=False)
            is_equilibrium, best_gain = report.is_equilibrium, report.best_gain
        rows.append({
            "sigma": float(test_set.sigma[i]),
            "d": float(test_set.d[i]),
            "in_Ti": in_ti,
            "int_theta_pi": stats.int_theta_pi,
            "post_mean_h": stats.post_mean_h,
            "is_equilibrium": is_equilibrium,
            "best_gain": best_gain,
        })
    return pd.DataFrame(rows, columns=SCAN_COLUMNS)


def region_from_integrals(frame: pd.DataFrame, expected_type: float,
                          ti_tol: float = DEFAULT_TI_TOL) -> pd.Series:
    """T_i recalculé depuis ∫θπ et l'identité ∫θ(1−π) = E[θ] − ∫θπ"""
    int_theta_pi = frame["int_theta_pi"]
    return (int_theta_pi >= -ti_tol) & (expected_type - int_theta_pi <= ti_tol)


def region_from_posteriors(frame: pd.DataFrame, expected_type: float,
                           ti_tol: float = DEFAULT_TI_TOL) -> pd.Series:
    """T_i lu sur le signe de E[θ|h] (∫θπ = π̄ · E[θ|h]); NaN si π̄ = 0"""
    return (frame["post_mean_h"] > 0.0) & (expected_type - frame["int_theta_pi"] <= ti_tol)


def region_consistent(frame: pd.DataFrame, test_set: TestSet,
                      ti_tol: float = DEFAULT_TI_TOL) -> bool:
    """
    Le drapeau in_Ti coïncide avec la région des intégrales brutes et, hors de la bande
    |∫θπ| ≤ ti_tol autour de la frontière, avec le signe de la moyenne postérieure
    """
    expected_type = mean_type(test_set.grid)
    flags = frame["in_Ti"].astype(bool)
    by_integrals = region_from_integrals(frame, expected_type, ti_tol)
    by_posteriors = region_from_posteriors(frame, expected_type, ti_tol)
    clear = frame["int_theta_pi"].abs() > ti_tol
    return bool((by_integrals == flags).all() and (by_posteriors == flags)[clear].all())


def region_boundary(frame: pd.DataFrame) -> pd.DataFrame:
    """Pour chaque d : plus grand σ dans T_i et plus petit σ hors de T_i (NaN si absent)"""
    inside = frame[frame["in_Ti"].astype(bool)].groupby("d")["sigma"].max()
    outside = frame[~frame["in_Ti"].astype(bool)].groupby("d")["sigma"].min()
    boundary = pd.DataFrame({"d": sorted(frame["d"].unique())}).set_index("d")
    boundary["sigma_in_max"] = inside
    boundary["sigma_out_min"] = outside
    return boundary.reset_index()
