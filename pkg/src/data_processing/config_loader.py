"""
Config Loader pour Selection Equilibria
Charge la configuration YAML, applique les défauts et les surcharges --set, calcule l'empreinte
"""

import copy
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml
from dotenv import load_dotenv


TOOL_VERSION = "0.1.0"
THREADS_ENV = "SELEQ_THREADS"
OVERRIDE_SOURCE = "--set"

DEFAULTS: Dict[str, Any] = {
    "types": {"kind": "binary", "n_points": 201},
    "test_set": {"kind": "explicit"},
    "market": {
        "mode": "baseline",
        "alpha_grid_steps": 101,
        "tie_tol": 1e-12,
        "full_alpha": False,
        "full_alpha_steps": 21,
    },
    "search": {
        "threads": 1,
        "bisection_max_iter": 60,
        "fixed_point_max_iter": 10000,
    },
    "tolerances": {
        "order_tol": 1e-9,
        "ti_tol": 1e-12,
        "gain_tol": 1e-9,
        "cost_tol": 1e-8,
        "fixed_point_tol": 1e-10,
    },
    "orders": {"exhaustive": False, "certify": False, "n_priors": 100, "n_degenerate": 20, "n_q": 50},
    "verify": {"alpha_l_offset": 0.0},
    "capacity": {},
    "two_tier": {"alpha": [1.0, 0.0], "with_capacity": True, "sweep": 0},
    "wage": {"wage_steps": 201},
    "cost": {"action": "compute", "divergence": "KLToPrior", "kappa_scale": 1.0},
    "scan": {"verify_points": True},
    "output": {"dir": "outputs", "scan_csv": "scan.csv"},
    "seed": 0,
}

SECTIONS = tuple(DEFAULTS)
POSITIVE_KEYS = (
    "market.tie_tol",
    "tolerances.order_tol",
    "tolerances.ti_tol",
    "tolerances.gain_tol",
    "tolerances.cost_tol",
    "tolerances.fixed_point_tol",
)
RESOLUTION_KEYS = ("market.alpha_grid_steps", "market.full_alpha_steps", "wage.wage_steps",
                   "types.n_points")
MARKET_MODES = ("baseline", "capacity", "wage")


class ConfigError(ValueError):
    """Configuration invalide, message préfixé par fichier:ligne"""

    def __init__(self, message: str, source: str = "", line: Optional[int] = None):
        self.source = source
        self.line = line
        prefix = f"{source}:{line}: " if source and line else (f"{source}: " if source else "")
        super().__init__(prefix + message)


def _line_map(node, prefix: str = "", lines: Optional[Dict[str, int]] = None) -> Dict[str, int]:
    """Chemin pointé → ligne (1-based) à partir de l'arbre composé par PyYAML"""
    if lines is None:
        lines = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            lines[path] = key_node.start_mark.line + 1
            _line_map(value_node, path, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix}.{i}"
            lines[path] = item.start_mark.line + 1
            _line_map(item, path, lines)
    return lines


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(text: str):
    """'a.b.c=valeur' → (['a', 'b', 'c'], valeur YAML)"""
    if "=" not in text:
        raise ConfigError(f"surcharge invalide '{text}' (attendu clé=valeur)", OVERRIDE_SOURCE)
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key or any(not part for part in key.split(".")):
        raise ConfigError(f"clé de surcharge invalide '{key}'", OVERRIDE_SOURCE)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"valeur de surcharge illisible pour {key}: {exc}", OVERRIDE_SOURCE)
    return key.split("."), value


def _apply_override(data: Dict[str, Any], path, value):
    node = data
    for part in path[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[path[-1]] = value


@dataclass
class RunConfig:
    """Configuration fusionnée (défauts, fichier, surcharges) avec la carte des lignes"""

    data: Dict[str, Any]
    source: str = "<défauts>"
    lines: Dict[str, int] = field(default_factory=dict)
    overridden: set = field(default_factory=set)

    def get(self, dotted: str, default: Any = None) -> Any:
        node: Any = self.data
        for part in dotted.split("."):
            if isinstance(node, dict) and part in node:
                node = node[part]
            elif isinstance(node, list) and part.isdigit() and int(part) < len(node):
                node = node[int(part)]
            else:
                return default
        return node

    def section(self, name: str) -> Dict[str, Any]:
        value = self.data.get(name) or {}
        if not isinstance(value, dict):
            raise self.error(name, "la section doit être un dictionnaire")
        return value

    def error(self, dotted: str, message: str) -> ConfigError:
        """ConfigError ancrée sur la ligne de la clé (ou de son parent le plus proche)"""
        if dotted in self.overridden:
            return ConfigError(f"{dotted}: {message}", OVERRIDE_SOURCE)
        path = dotted
        while path:
            if path in self.lines:
                return ConfigError(f"{dotted}: {message}", self.source, self.lines[path])
            path = path.rpartition(".")[0]
        return ConfigError(f"{dotted}: {message}", self.source)

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def config_hash(self) -> str:
        """SHA-256 du JSON canonique de la configuration fusionnée"""
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def threads(self, cli_threads: Optional[int] = None) -> int:
        """--threads, sinon SELEQ_THREADS (.env compris), sinon search.threads"""
        if cli_threads is not None:
            return max(1, int(cli_threads))
        load_dotenv()
        env_value = os.getenv(THREADS_ENV)
        if env_value:
            try:
                return max(1, int(env_value))
            except ValueError:
                raise ConfigError(f"{THREADS_ENV}='{env_value}' n'est pas un entier", "environnement")
        return max(1, int(self.get("search.threads", 1)))


def _check_number(config: RunConfig, key: str) -> float:
    value = config.get(key)
    if isinstance(value, str):
        # PyYAML lit '1e-9' (sans point) comme une chaîne
        try:
            value = float(value)
        except ValueError:
            pass
        else:
            _apply_override(config.data, key.split("."), value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise config.error(key, f"nombre attendu, reçu {value!r}")
    return float(value)


def validate(config: RunConfig) -> RunConfig:
    for name in config.data:
        if name not in SECTIONS:
            raise config.error(name, f"section inconnue (sections : {', '.join(SECTIONS)})")
    for key in POSITIVE_KEYS:
        value = _check_number(config, key)
        if not value > 0 or math.isinf(value):
            raise config.error(key, f"doit être > 0, reçu {value}")
    for key in RESOLUTION_KEYS:
        value = config.get(key)
        if isinstance(value, bool) or not isinstance(value, int) or value < 2:
            raise config.error(key, f"résolution entière >= 2 attendue, reçu {value!r}")
    mode = config.get("market.mode")
    if mode not in MARKET_MODES:
        raise config.error("market.mode", f"mode inconnu '{mode}' ({', '.join(MARKET_MODES)})")
    seed = config.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise config.error("seed", f"entier >= 0 attendu, reçu {seed!r}")
    return config


def load_config(path: Optional[str] = None, overrides: Iterable[str] = (),
                seed: Optional[int] = None, verbose: bool = False) -> RunConfig:
    """Défauts ← fichier YAML ← surcharges --set ← --seed"""
    data: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    source = "<défauts>"

    if path is not None:
        source = str(path)
        if verbose:
            print(f"📂 Chargement de la configuration: {source}", file=sys.stderr)
        text = Path(path).read_text(encoding="utf-8")
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            problem = getattr(exc, "problem", None) or str(exc)
            raise ConfigError(f"YAML invalide: {problem}", source, line)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("la racine du fichier doit être un dictionnaire", source, 1)
        data = loaded
        lines = _line_map(node)

    config = RunConfig(deep_merge(DEFAULTS, data), source, lines)
    for text in overrides:
        keys, value = parse_override(text)
        _apply_override(config.data, keys, value)
        config.overridden.add(".".join(keys))
    if seed is not None:
        config.data["seed"] = int(seed)

    validate(config)
    if verbose:
        print(f"✅ Configuration chargée (hash {config.config_hash[:12]})", file=sys.stderr)
    return config
