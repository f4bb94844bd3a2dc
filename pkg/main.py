#!/usr/bin/env python3
"""
Selection Equilibria - Script Principal
Point d'entrée en ligne de commande : python main.py <sous-commande> --config configs/<fichier>.yaml
"""

import sys
from pathlib import Path

# Ajouter src au path
sys.path.append(str(Path(__file__).parent / "src"))

from cli.runner import run


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
