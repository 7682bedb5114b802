"""
Tests for the config.py module
"""

import pytest

from src.errors import ConfigError
from src.config import load_config, parse_config
from src.fields import CheckerboardField, LaminateField

LAMINATE_TOML = """
[field]
kind = "laminate"
layers = [1.0, 4.0]

[grid]
nx = 17
t1 = 0.25

[boundary]
profile = "gaussian-bump"
params = { width = 0.2 }

[study]
epsilons = [0.25, 0.125]
"""


class TestParseConfig:
    """Tests for schema validation."""

    def test_defaults(self):
        """Test only the field section is required."""
        config = parse_config({"field": {"kind": "constant", "a": 2.0}})

        assert config.solver.tol == 1e-10
        assert config.corrector.cell_nx == 32
        assert config.study.r_list == [0.25, 0.125, 0.0625]
        assert config.output.format == "json"

    def test_missing_field(self):
        """Test a configuration without a field is rejected."""
        with pytest.raises(ConfigError):
            parse_config({})

    def test_unknown_key(self):
        """Test unknown keys are listed in the error."""
        with pytest.raises(ConfigError) as exc_info:
            parse_config({"field": {"kind": "constant"}, "solver": {"tolerance": 1e-8}})

        assert any("solver.tolerance" in p for p in exc_info.value.context["problems"])

    def test_unknown_kind(self):
        """Test field kinds are restricted."""
        with pytest.raises(ConfigError):
            parse_config({"field": {"kind": "fractal"}})

    def test_epsilon_range(self):
        """Test epsilons outside (0, 1] are rejected."""
        with pytest.raises(ConfigError):
            parse_config({"field": {"kind": "constant"}, "study": {"epsilons": [0.5, 2.0]}})

    def test_seed_override(self):
        """Test the seed argument overrides field and study seeds."""
        config = parse_config(
            {"field": {"kind": "checkerboard", "a_values": [1.0, 4.0], "seed": 3}}, seed=9
        )

        assert config.field.seed == 9
        assert config.study.base_seed == 9
        assert config.seeds() == [9]
        assert isinstance(config.field.build(), CheckerboardField)

    def test_hash_depends_on_content(self):
        """Test equal content hashes equally and changes alter the hash."""
        first = parse_config({"field": {"kind": "constant", "a": 2.0}})
        second = parse_config({"field": {"a": 2.0, "kind": "constant"}})
        third = parse_config({"field": {"kind": "constant", "a": 3.0}})

        assert first.config_hash() == second.config_hash()
        assert first.config_hash() != third.config_hash()


class TestGridConfig:
    """Tests for explicit grids."""

    def test_parabolic_default_nt(self):
        """Test nt defaults to dt <= c_par h^2."""
        config = parse_config({"field": {"kind": "constant"}, "grid": {"nx": 17}})
        grid = config.grid.build(1)

        assert grid.nx == 17
        assert grid.resolution_ok
        assert grid.nt == 129


class TestLoadConfig:
    """Tests for reading TOML files."""

    def test_load(self, write_config):
        """Test a complete file is read and built."""
        config = load_config(write_config(LAMINATE_TOML))

        assert isinstance(config.field.build(), LaminateField)
        assert config.boundary.build().params == {"width": 0.2}
        assert config.study.epsilons == [0.25, 0.125]

    def test_missing_file(self, temp_dir):
        """Test a missing file raises ConfigError."""
        with pytest.raises(ConfigError):
            load_config(f"{temp_dir}/absent.toml")

    def test_malformed_toml(self, write_config):
        """Test malformed TOML raises ConfigError."""
        with pytest.raises(ConfigError):
            load_config(write_config("[field\nkind = 1"))
