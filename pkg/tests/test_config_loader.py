"""
Tests de validation pour le chargement de la configuration
Vérifie les défauts, les surcharges, les erreurs ancrées sur une ligne, l'empreinte et les threads
"""

import pytest
import sys
from pathlib import Path

sys.path.append(str(Path(__file__).parent.parent / "src"))

from data_processing.config_loader import DEFAULTS, THREADS_ENV, ConfigError, load_config
from data_processing.test_set_builder import TestSetBuilder
from models.signal_tests import Family


CONFIGS = Path(__file__).parent.parent / "configs"


def write_yaml(tmp_path, text: str) -> str:
    path = tmp_path / "config.yaml"
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestDefaultsAndOverrides:
    """Tests pour la fusion défauts ← fichier ← surcharges"""

    def test_defaults(self):
        config = load_config()

        assert config.get("market.mode") == "baseline"
        assert config.get("market.alpha_grid_steps") == 101
        assert config.get("tolerances.gain_tol") == pytest.approx(1e-9)
        assert config.seed == 0

    def test_file_values(self):
        config = load_config(str(CONFIGS / "binary_baseline.yaml"))

        assert config.get("types.mu") == pytest.approx(0.4)
        assert config.get("orders.certify") is True
        assert config.get("tolerances.order_tol") == DEFAULTS["tolerances"]["order_tol"]

    def test_overrides_and_seed(self):
        config = load_config(str(CONFIGS / "binary_baseline.yaml"),
                             ["market.alpha_grid_steps=51", "verify.candidate.test=1"], seed=7)

        assert config.get("market.alpha_grid_steps") == 51
        assert config.get("verify.candidate.test") == 1
        assert config.seed == 7

    def test_exponent_without_dot(self, tmp_path):
        """PyYAML lit 1e-9 comme une chaîne : la valeur est convertie"""
        config = load_config(write_yaml(tmp_path, "tolerances:\n  gain_tol: 1e-9\n"))

        assert config.get("tolerances.gain_tol") == pytest.approx(1e-9)

    def test_list_index(self):
        """Les chemins pointés traversent les listes : test_set.tests.1"""
        config = load_config(str(CONFIGS / "binary_baseline.yaml"))

        assert config.get("test_set.tests.1") == pytest.approx([0.275, 0.725])
        assert config.get("test_set.tests.7") is None
        assert config.get("test_set.tests.x", "défaut") == "défaut"

    @pytest.mark.parametrize("text", ["sans_egal", "=1", "a..b=2"])
    def test_invalid_override(self, text):
        with pytest.raises(ConfigError):
            load_config(overrides=[text])


class TestConfigErrors:
    """Tests pour les erreurs préfixées par fichier:ligne"""

    def test_negative_tolerance_line(self, tmp_path):
        path = write_yaml(tmp_path, "types:\n  kind: binary\ntolerances:\n  gain_tol: -1.0\n")

        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert str(excinfo.value).startswith(f"{path}:4:"), str(excinfo.value)
        assert excinfo.value.line == 4

    def test_unknown_section(self, tmp_path):
        path = write_yaml(tmp_path, "seed: 0\nfoo: 1\n")

        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert excinfo.value.line == 2

    def test_invalid_yaml(self, tmp_path):
        path = write_yaml(tmp_path, "types:\n  kind: [binary\n")

        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_mode(self, tmp_path):
        path = write_yaml(tmp_path, "market:\n  mode: auction\n")

        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert excinfo.value.line == 2

    def test_resolution_too_small(self):
        with pytest.raises(ConfigError) as excinfo:
            load_config(overrides=["market.alpha_grid_steps=1"])
        assert excinfo.value.source == "--set"

    def test_negative_seed(self):
        with pytest.raises(ConfigError):
            load_config(seed=-1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config(str(tmp_path / "absent.yaml"))


class TestHashAndThreads:
    """Tests pour l'empreinte de configuration et le nombre de threads"""

    def test_hash_is_stable(self):
        first = load_config(str(CONFIGS / "binary_baseline.yaml"))
        second = load_config(str(CONFIGS / "binary_baseline.yaml"))

        assert first.config_hash == second.config_hash
        assert len(first.config_hash) == 64

    def test_hash_follows_overrides(self):
        base = load_config(str(CONFIGS / "binary_baseline.yaml"))
        changed = load_config(str(CONFIGS / "binary_baseline.yaml"), ["seed=3"])

        assert base.config_hash != changed.config_hash

    def test_cli_threads_win(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "4")

        assert load_config().threads(2) == 2

    def test_env_threads(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "4")

        assert load_config().threads() == 4

    def test_invalid_env_threads(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "beaucoup")

        with pytest.raises(ConfigError):
            load_config().threads()

    def test_config_threads(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV, raising=False)

        assert load_config(overrides=["search.threads=3"]).threads() == 3


class TestTestSetBuilder:
    """Tests pour la construction des objets du modèle depuis la configuration"""

    def test_explicit_set(self):
        builder = TestSetBuilder(load_config(str(CONFIGS / "binary_baseline.yaml")))

        assert builder.grid.is_binary
        assert len(builder.test_set) == 3
        assert builder.test_set[0].label == "t0"

    def test_lattice_set(self):
        builder = TestSetBuilder(load_config(str(CONFIGS / "power_linear_lattice.yaml")))

        assert builder.test_set.is_lattice
        assert builder.test_set.family is Family.POWER_LINEAR
        assert len(builder.test_set) == 400

    def test_resolve_test_by_curve(self):
        config = load_config(str(CONFIGS / "binary_baseline.yaml"), ["verify.candidate.test=[0.35, 0.65]"])
        builder = TestSetBuilder(config)

        assert builder.resolve_test("verify.candidate.test") is builder.test_set[2]

    def test_index_out_of_range(self):
        config = load_config(str(CONFIGS / "binary_baseline.yaml"), ["verify.candidate.test=9"])

        with pytest.raises(ConfigError):
            TestSetBuilder(config).resolve_test("verify.candidate.test")

    def test_unknown_family(self):
        config = load_config(str(CONFIGS / "power_linear_lattice.yaml"), ["test_set.family=Cubic"])

        with pytest.raises(ConfigError):
            TestSetBuilder(config).test_set

    def test_invalid_grid_is_anchored(self, tmp_path):
        path = write_yaml(tmp_path, "types:\n  kind: binary\n  theta_low: -1.0\n  theta_high: 1.0\n  mu: 1.5\n")

        with pytest.raises(ConfigError) as excinfo:
            TestSetBuilder(load_config(path)).grid
        assert excinfo.value.line == 1

    def test_procedure_with_wages(self):
        config = load_config(str(CONFIGS / "binary_baseline.yaml"),
                             ["wage.candidate.test=0", "wage.candidate.wage=[0.5, 0.0]"])
        proc = TestSetBuilder(config).procedure("wage.candidate")

        assert proc.alpha == (1.0, 0.0)
        assert proc.wage_h == pytest.approx(0.5)

    def test_cost_spec_scale(self):
        config = load_config(str(CONFIGS / "cost_example.yaml"), ["cost.kappa_scale=2.0"])
        builder = TestSetBuilder(config)
        spec = builder.cost_spec(builder.test_set[0])

        assert spec.kappa > 0.0
        assert spec.divergence.value == "KLToPrior"

    def test_every_explicit_test_is_read(self):
        builder = TestSetBuilder(load_config(str(CONFIGS / "binary_baseline.yaml")))

        assert [list(t.pi) for t in builder.test_set.tests] == pytest.approx(
            [[0.2, 0.8], [0.275, 0.725], [0.35, 0.65]])

    def test_regular_grid_uniform(self, tmp_path):
        path = write_yaml(tmp_path, "types:\n  kind: grid\n  theta_min: -1.0\n  theta_max: 1.0\n"
                                    "  n_points: 5\n  density: uniform\n")
        grid = TestSetBuilder(load_config(path)).grid

        assert grid.n == 5 and not grid.is_binary
        assert grid.spacing == pytest.approx(0.5)
        assert grid.weight[0] == pytest.approx(grid.weight[1] / 2)

    def test_regular_grid_table(self, tmp_path):
        path = write_yaml(tmp_path, "types:\n  kind: grid\n  theta_min: 0.0\n  theta_max: 1.0\n"
                                    "  n_points: 3\n  density: table\n  weights: [1.0, 2.0, 1.0]\n")
        grid = TestSetBuilder(load_config(path)).grid

        assert list(grid.theta) == pytest.approx([0.0, 0.5, 1.0])
        assert list(grid.weight) == pytest.approx([0.25, 0.5, 0.25])

    def test_table_length_mismatch_is_anchored(self, tmp_path):
        path = write_yaml(tmp_path, "types:\n  kind: grid\n  theta_min: 0.0\n  theta_max: 1.0\n"
                                    "  n_points: 4\n  density: table\n  weights: [1.0, 2.0]\n")

        with pytest.raises(ConfigError) as excinfo:
            TestSetBuilder(load_config(path)).grid
        assert excinfo.value.line == 7

    def test_unknown_density(self, tmp_path):
        path = write_yaml(tmp_path, "types:\n  kind: grid\n  theta_min: 0.0\n  theta_max: 1.0\n"
                                    "  n_points: 4\n  density: normal\n")

        with pytest.raises(ConfigError) as excinfo:
            TestSetBuilder(load_config(path)).grid
        assert excinfo.value.line == 6

    def test_family_and_lattice_keys_agree(self):
        """kind: family (sigma_range, d_range) et l'ancien kind: lattice (sigma, d) donnent le même treillis"""
        family = TestSetBuilder(load_config(str(CONFIGS / "power_linear_lattice.yaml"))).test_set
        legacy = TestSetBuilder(load_config(str(CONFIGS / "power_linear_lattice.yaml"), [
            "test_set.kind=lattice", "test_set.sigma=[0.05, 0.95]", "test_set.d=[1.0, 3.0]",
        ])).test_set

        assert family.spacing == pytest.approx((0.9 / 19, 2.0 / 19))
        assert list(legacy.sigma) == pytest.approx(list(family.sigma))
        assert list(legacy.d) == pytest.approx(list(family.d))

    def test_free_test_spec(self):
        """test_spec accepte une courbe π hors de l'ensemble, resolve_test la refuse"""
        config = load_config(str(CONFIGS / "binary_baseline.yaml"), ["orders.t=[0.3, 0.9]", "orders.d=1"])
        builder = TestSetBuilder(config)

        assert list(builder.test_spec("orders.t").pi) == pytest.approx([0.3, 0.9])
        assert builder.test_spec("orders.d") is builder.test_set[1]
        with pytest.raises(ConfigError):
            builder.resolve_test("orders.t")
