"""
Runner pour Selection Equilibria
Sous-commandes orders, verify, solve, scan, cost, capacity, two-tier et wage
Code de sortie : 0 confirmé, 1 réfuté, 2 erreur d'entrée
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

sys.path.append(str(Path(__file__).parent.parent))

from analysis.order_certifier import certify_orders, certify_pair
from analysis.orders import Comparison, compare_difficulty
from data_processing.config_loader import TOOL_VERSION, ConfigError, RunConfig, load_config
from data_processing.test_set_builder import TestSetBuilder
from extensions.capacity import CapacityConfig, verify_capacity_equilibrium
from extensions.two_tier import sweep_without_capacity, verify_two_tier
from extensions.wage import verify_wage_equilibrium, wage_candidate
from models.market import MODE_CAPACITY, MODE_WAGE, SelectionProcedure
from models.signal_tests import signal_stats
from optimization.equilibrium import candidate_equilibrium, verify_symmetric, zero_profit_alpha
from optimization.info_cost import CostSpec, isocost_easier, test_cost, verify_cost_equilibrium
from optimization.run_scan import region_boundary, region_consistent, scan_lattice
from reporting.certificate_writer import banner, print_certificate, write_csv


EXIT_CONFIRMED = 0
EXIT_FALSIFIED = 1
EXIT_INPUT_ERROR = 2

SUBCOMMANDS = ("orders", "verify", "solve", "scan", "cost", "capacity", "two-tier", "wage")

COST_COMPUTE = "compute"
COST_ISOCOST = "isocost"
COST_VERIFY = "verify"
COST_ACTIONS = (COST_COMPUTE, COST_ISOCOST, COST_VERIFY)


class RunContext:
    """Configuration, constructeur d'objets et options de la ligne de commande"""

    def __init__(self, config: RunConfig, out_dir: Path, threads: int, quiet: bool):
        self.config = config
        self.builder = TestSetBuilder(config)
        self.out_dir = out_dir
        self.threads = threads
        self.quiet = quiet
        self.progress = not quiet and sys.stderr.isatty()

    def tol(self, name: str) -> float:
        return float(self.config.get(f"tolerances.{name}"))

    @property
    def alpha_steps(self) -> int:
        return int(self.config.get("market.alpha_grid_steps"))

    @property
    def tie_tol(self) -> float:
        return float(self.config.get("market.tie_tol"))

    def candidate(self, prefix: str) -> SelectionProcedure:
        """Procédure {test, alpha}; alpha par défaut = règle à profit nul du test"""
        test = self.builder.resolve_test(f"{prefix}.test")
        return self.builder.procedure(prefix, zero_profit_alpha(test, self.tol("ti_tol")).alpha)

    def csv(self, frame, name: str):
        return write_csv(frame, self.out_dir / name, self.config.config_hash, TOOL_VERSION, self.quiet)


def _exit_code(confirmed: bool) -> int:
    return EXIT_CONFIRMED if confirmed else EXIT_FALSIFIED


def cmd_orders(ctx: RunContext) -> int:
    rng = np.random.default_rng(ctx.config.seed)
    oracle_options = dict(
        certify=bool(ctx.config.get("orders.certify")),
        n_priors=int(ctx.config.get("orders.n_priors")),
        n_degenerate=int(ctx.config.get("orders.n_degenerate")),
        n_q=int(ctx.config.get("orders.n_q")),
        tol=ctx.tol("order_tol"),
        exhaustive=bool(ctx.config.get("orders.exhaustive")),
    )
    has_t = ctx.config.get("orders.t") is not None
    has_d = ctx.config.get("orders.d") is not None
    if has_t != has_d:
        missing = "orders.d" if has_t else "orders.t"
        raise ctx.config.error(missing, "deux tests attendus (orders.t et orders.d)")
    if has_t:
        t = ctx.builder.test_spec("orders.t")
        d = ctx.builder.test_spec("orders.d")
        pair = certify_pair(t, d, rng, **oracle_options)
        print_certificate(pair.as_dict())
        return _exit_code(pair.consistent)

    certificate = certify_orders(ctx.builder.test_set, rng, verbose=not ctx.quiet, **oracle_options)
    ctx.csv(certificate.accuracy.reset_index(names="test"), "orders_accuracy.csv")
    ctx.csv(certificate.difficulty.reset_index(names="test"), "orders_difficulty.csv")
    print_certificate(certificate.as_dict())
    return _exit_code(certificate.consistent)


def _verify(ctx: RunContext, candidate: SelectionProcedure) -> int:
    report = verify_symmetric(
        candidate, ctx.builder.test_set, ctx.alpha_steps, ctx.tol("gain_tol"),
        full_alpha=bool(ctx.config.get("market.full_alpha")), tie_tol=ctx.tie_tol,
        ti_tol=ctx.tol("ti_tol"), order_tol=ctx.tol("order_tol"),
        threads=ctx.threads, progress=ctx.progress,
    )
    print_certificate(report.as_dict())
    return _exit_code(report.is_equilibrium)


def _offset(ctx: RunContext, candidate: SelectionProcedure) -> SelectionProcedure:
    offset = float(ctx.config.get("verify.alpha_l_offset"))
    if not offset:
        return candidate
    return candidate.with_alpha(candidate.alpha_h, min(1.0, max(0.0, candidate.alpha_l + offset)))


def cmd_verify(ctx: RunContext) -> int:
    """Vérification selon market.mode (baseline, capacity ou wage)"""
    mode = ctx.config.get("market.mode")
    explicit = ctx.config.get("verify.candidate.test") is not None
    if mode == MODE_CAPACITY:
        prefix = "verify.candidate" if explicit else "capacity.candidate"
        return _verify_capacity(ctx, _offset(ctx, ctx.builder.procedure(prefix, (1.0, 0.0))))
    if mode == MODE_WAGE:
        candidate = _wage_candidate(ctx, "verify.candidate" if explicit else "wage.candidate")
        if candidate is None:
            print_certificate({"no_candidate": True})
            return EXIT_FALSIFIED
        return _verify_wage(ctx, _offset(ctx, candidate))

    if explicit:
        candidate = ctx.candidate("verify.candidate")
    else:
        result = candidate_equilibrium(ctx.builder.test_set, ctx.tol("ti_tol"), ctx.tol("order_tol"))
        if result.no_candidate:
            print_certificate({"no_candidate": True, "rule": result.rule})
            return EXIT_FALSIFIED
        candidate = result.procedure
    return _verify(ctx, _offset(ctx, candidate))


def cmd_solve(ctx: RunContext) -> int:
    result = candidate_equilibrium(ctx.builder.test_set, ctx.tol("ti_tol"), ctx.tol("order_tol"))
    print_certificate({
        "no_candidate": result.no_candidate,
        "selection_rule": result.rule,
        "selected_index": result.index,
        "tie_indices": ",".join(str(i) for i in result.tie_indices),
    })
    if result.no_candidate:
        return EXIT_FALSIFIED
    return _verify(ctx, result.procedure)


def cmd_scan(ctx: RunContext) -> int:
    test_set = ctx.builder.test_set
    frame = scan_lattice(test_set, ctx.alpha_steps, ctx.tol("gain_tol"), ctx.tol("ti_tol"),
                         ctx.tie_tol, bool(ctx.config.get("scan.verify_points")),
                         ctx.threads, ctx.progress)
    ctx.csv(frame, str(ctx.config.get("output.scan_csv")))
    consistent = region_consistent(frame, test_set, ctx.tol("ti_tol"))
    boundary = region_boundary(frame)
    crossing = boundary["sigma_in_max"].notna() & boundary["sigma_out_min"].notna()
    print_certificate({
        "rows": len(frame),
        "in_Ti": int(frame["in_Ti"].sum()),
        "out_Ti": int((~frame["in_Ti"]).sum()),
        "d_rows_crossing_boundary": int(crossing.sum()),
        "equilibria": int(frame["is_equilibrium"].sum()),
        "region_consistent": consistent,
    })
    return _exit_code(consistent)


def cmd_cost(ctx: RunContext) -> int:
    """Coût du test; --isocost mu=<v> : test isocoût plus facile; --verify kappa=<v> : équilibre"""
    action = ctx.config.get("cost.action")
    if action == COST_VERIFY:
        candidate = ctx.candidate("cost.candidate")
        spec = ctx.builder.cost_spec(candidate.test)
        extra = [t for t in ctx.builder.test_set.tests if t is not candidate.test]
        report = verify_cost_equilibrium(candidate, spec, ctx.alpha_steps, ctx.tol("gain_tol"),
                                         ctx.tol("cost_tol"), ctx.tol("ti_tol"), extra, ctx.threads)
        print_certificate(report.as_dict())
        return _exit_code(report.is_equilibrium)

    test = ctx.builder.test_spec("cost.candidate.test")
    spec = CostSpec(ctx.config.get("cost.divergence"))
    cost = test_cost(test, spec)
    if action == COST_ISOCOST:
        mu_mix = ctx.config.get("cost.mu_mix")
        if mu_mix is None:
            raise ctx.config.error("cost.mu_mix", "mu_mix obligatoire pour --isocost")
        easier = isocost_easier(test, spec, float(mu_mix), ctx.tol("cost_tol"),
                                int(ctx.config.get("search.bisection_max_iter")))
        easier_cost = test_cost(easier, spec)
        strictly_easier = compare_difficulty(test, easier, ctx.tol("order_tol")) is Comparison.MORE_THAN
        cost_matched = abs(easier_cost - cost) <= ctx.tol("cost_tol")
        print_certificate({
            "test": test.describe(),
            "cost": cost,
            "mu_mix": float(mu_mix),
            "isocost_test": easier.describe(),
            "isocost_cost": easier_cost,
            "cost_gap": easier_cost - cost,
            "strictly_easier": strictly_easier,
            "cost_matched": cost_matched,
        })
        return _exit_code(strictly_easier and cost_matched)
    if action != COST_COMPUTE:
        raise ctx.config.error("cost.action", f"action inconnue '{action}' ({', '.join(COST_ACTIONS)})")

    print_certificate({
        "test": test.describe(),
        "divergence": spec.divergence.value,
        "cost": cost,
        "int_theta_pi": signal_stats(test).int_theta_pi,
    })
    return EXIT_CONFIRMED


def _capacity(ctx: RunContext) -> CapacityConfig:
    k = ctx.config.get("capacity.k")
    if k is None:
        raise ctx.config.error("capacity.k", "capacité obligatoire")
    try:
        return CapacityConfig(float(k))
    except (TypeError, ValueError) as exc:
        raise ctx.config.error("capacity.k", str(exc))


def _verify_capacity(ctx: RunContext, candidate: SelectionProcedure) -> int:
    report = verify_capacity_equilibrium(
        candidate, ctx.builder.test_set, _capacity(ctx), ctx.alpha_steps, ctx.tol("gain_tol"),
        full_alpha=bool(ctx.config.get("market.full_alpha")),
        full_alpha_steps=int(ctx.config.get("market.full_alpha_steps")),
        tie_tol=ctx.tie_tol, ti_tol=ctx.tol("ti_tol"), order_tol=ctx.tol("order_tol"),
        threads=ctx.threads, progress=ctx.progress,
        fixed_point_tol=ctx.tol("fixed_point_tol"),
        fixed_point_max_iter=int(ctx.config.get("search.fixed_point_max_iter")),
    )
    print_certificate(report.as_dict())
    return _exit_code(report.is_equilibrium)


def cmd_capacity(ctx: RunContext) -> int:
    return _verify_capacity(ctx, ctx.builder.procedure("capacity.candidate", (1.0, 0.0)))


def cmd_two_tier(ctx: RunContext) -> int:
    builder = ctx.builder
    alpha = builder.pair("two_tier.alpha")
    selective = SelectionProcedure(builder.resolve_test("two_tier.selective_test"), *alpha)
    safe = SelectionProcedure(builder.resolve_test("two_tier.safe_test"), *alpha)
    cap = _capacity(ctx) if ctx.config.get("two_tier.with_capacity") else None

    certificate = verify_two_tier(
        selective, safe, builder.test_set, cap, ctx.alpha_steps, ctx.tol("gain_tol"),
        full_alpha=True, full_alpha_steps=int(ctx.config.get("market.full_alpha_steps")),
        tie_tol=ctx.tie_tol, threads=ctx.threads, progress=ctx.progress,
    )
    print_certificate(certificate.as_dict())
    confirmed = certificate.confirmed

    n_sweep = int(ctx.config.get("two_tier.sweep") or 0)
    if n_sweep > 0:
        frame = sweep_without_capacity(n_sweep, np.random.default_rng(ctx.config.seed),
                                       ctx.alpha_steps, ctx.tol("gain_tol"))
        ctx.csv(frame, "two_tier_sweep.csv")
        all_found = bool(frame["confirmed"].all())
        print_certificate({"sweep_instances": len(frame), "sweep_all_deviations_found": all_found})
        confirmed = confirmed and all_found
    return _exit_code(confirmed)


def _wage_candidate(ctx: RunContext, prefix: str) -> Optional[SelectionProcedure]:
    if ctx.config.get(f"{prefix}.test") is not None:
        return ctx.builder.procedure(prefix, (1.0, 0.0))
    return wage_candidate(ctx.builder.test_set, ctx.tol("order_tol"))


def _verify_wage(ctx: RunContext, candidate: SelectionProcedure) -> int:
    report = verify_wage_equilibrium(
        candidate, ctx.builder.test_set, ctx.alpha_steps, int(ctx.config.get("wage.wage_steps")),
        ctx.tol("gain_tol"), order_tol=ctx.tol("order_tol"), tie_tol=ctx.tie_tol,
        threads=ctx.threads, progress=ctx.progress,
    )
    print_certificate(report.as_dict())
    return _exit_code(report.is_equilibrium)


def cmd_wage(ctx: RunContext) -> int:
    candidate = _wage_candidate(ctx, "wage.candidate")
    if candidate is None:
        print_certificate({"no_candidate": True})
        return EXIT_FALSIFIED
    return _verify_wage(ctx, candidate)


COMMANDS: Dict[str, Callable[[RunContext], int]] = {
    "orders": cmd_orders,
    "verify": cmd_verify,
    "solve": cmd_solve,
    "scan": cmd_scan,
    "cost": cmd_cost,
    "capacity": cmd_capacity,
    "two-tier": cmd_two_tier,
    "wage": cmd_wage,
}


def _assignment(name: str) -> Callable[[str], str]:
    """Type argparse pour « name=valeur » (renvoie la valeur brute)"""
    def parse(text: str) -> str:
        key, sep, value = text.partition("=")
        if not sep or key.strip() != name or not value.strip():
            raise argparse.ArgumentTypeError(f"attendu {name}=<valeur>, reçu '{text}'")
        return value.strip()
    parse.__name__ = name
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seleq",
        description="Selection Equilibria - équilibres de procédures de sélection entre deux firmes",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Fichier de configuration YAML")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="CLE=VALEUR", help="Surcharge pointée (répétable)")
    common.add_argument("--out", help="Répertoire de sortie des CSV (défaut: output.dir)")
    common.add_argument("--seed", type=int, help="Graine aléatoire (défaut: seed du fichier)")
    common.add_argument("--threads", type=int, help="Threads de recherche (défaut: SELEQ_THREADS)")
    common.add_argument("--quiet", action="store_true", help="Pas de bannière ni de barre de progression")

    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "orders": "Compare deux tests (ou tout l'ensemble); --certify lance les oracles",
        "verify": "Vérifie une candidate symétrique selon market.mode",
        "solve": "Sélectionne la candidate puis la vérifie",
        "scan": "Balaye le treillis (σ, d) et écrit le CSV de région",
        "cost": "Coût d'un test, test isocoût plus facile ou vérification sous budget",
        "capacity": "Vérifie une candidate sous contrainte de capacité",
        "two-tier": "Construction à deux niveaux (firme sélective / firme sûre)",
        "wage": "Vérifie une candidate en concurrence salariale",
    }
    subparsers = {name: sub.add_parser(name, parents=[common], help=helps[name])
                  for name in SUBCOMMANDS}

    orders = subparsers["orders"]
    orders.add_argument("tests", nargs="*", metavar="TEST",
                        help="Deux tests : indice dans l'ensemble ou liste π YAML, ex. '[0.2, 0.8]'")
    orders.add_argument("--certify", action="store_true", help="Oracles FOSD et CDF")

    cost = subparsers["cost"].add_mutually_exclusive_group()
    cost.add_argument("--isocost", type=_assignment("mu"), metavar="mu=VALEUR",
                      help="Test isocoût strictement plus facile pour ce mu_mix")
    cost.add_argument("--verify", type=_assignment("kappa"), metavar="kappa=VALEUR",
                      help="Vérifie la candidate sous le budget kappa")
    return parser


def command_overrides(args: argparse.Namespace) -> List[str]:
    """Options propres aux sous-commandes, traduites en surcharges pointées"""
    overrides: List[str] = []
    if args.command == "orders":
        if args.tests:
            if len(args.tests) != 2:
                raise ConfigError(f"orders attend deux tests, reçu {len(args.tests)}", "ligne de commande")
            overrides += [f"orders.t={args.tests[0]}", f"orders.d={args.tests[1]}"]
        if args.certify:
            overrides.append("orders.certify=true")
    elif args.command == "cost":
        if args.isocost is not None:
            overrides += [f"cost.action={COST_ISOCOST}", f"cost.mu_mix={args.isocost}"]
        elif args.verify is not None:
            overrides += [f"cost.action={COST_VERIFY}", f"cost.kappa={args.verify}"]
    return overrides


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        overrides = list(args.overrides) + command_overrides(args)
        config = load_config(args.config, overrides, args.seed, verbose=not args.quiet)
        out_dir = Path(args.out or config.get("output.dir"))
        ctx = RunContext(config, out_dir, config.threads(args.threads), args.quiet)
        banner(f"🔍 SELECTION EQUILIBRIA - {args.command}", args.quiet)
        code = COMMANDS[args.command](ctx)
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    if not args.quiet:
        status = "✅ confirmé" if code == EXIT_CONFIRMED else "❌ réfuté"
        print(f"{status} (code {code})", file=sys.stderr)
    return code
