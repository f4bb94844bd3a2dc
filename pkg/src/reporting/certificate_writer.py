"""
Certificate Writer pour Selection Equilibria
Affichage des certificats clé=valeur et écriture des CSV avec ligne de commentaire
"""

import math
import sys
from pathlib import Path
from typing import Dict, Optional, TextIO

import numpy as np
import pandas as pd


FLOAT_FORMAT = "%.12g"


def format_value(value) -> str:
    """Rendu stable d'une valeur de certificat"""
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return FLOAT_FORMAT % value
    return str(value)


def print_certificate(data: Dict[str, object], stream: Optional[TextIO] = None,
                      prefix: str = "") -> None:
    """Une ligne clé=valeur par entrée, dans l'ordre du dictionnaire"""
    stream = stream or sys.stdout
    for key, value in data.items():
        stream.write(f"{prefix}{key}={format_value(value)}\n")


def banner(title: str, quiet: bool = False) -> None:
    if quiet:
        return
    print("=" * 80, file=sys.stderr)
    print(title, file=sys.stderr)
    print("=" * 80, file=sys.stderr)


def write_csv(frame: pd.DataFrame, path, config_hash: str, version: str,
              quiet: bool = False) -> Path:
    """
    CSV UTF-8, fins de ligne LF, précédé de « # config_hash=... version=... »
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config_hash={config_hash} version={version}\n")
        frame.to_csv(f, index=False, lineterminator="\n", float_format=FLOAT_FORMAT)
    if not quiet:
        print(f"💾 CSV écrit: {path} ({len(frame)} lignes)", file=sys.stderr)
    return path


def read_csv(path) -> pd.DataFrame:
    """Relit un CSV produit par write_csv (ligne de commentaire ignorée)"""
    return pd.read_csv(path, comment="#")
