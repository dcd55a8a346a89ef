"""Configuration handling, CSV emission and subcommand behavior."""

import json
import math

import pytest

from clockopt.cli import run
from clockopt.configio import (
    DEFAULT_CONFIG,
    apply_overrides,
    config_digest,
    emit_csv,
    load_config,
)
from clockopt.errors import DomainError

# Small, fast settings shared by the CLI tests; normalization preset so no
# calibration runs inside them.
FAST = [
    "sim.n_paths=120",
    "sim.dt=0.005",
    "sim.seed=424242",
    "clock.normalization=0.36",
    "clock.validation_lambdas=[1.0]",
    "clock.validation_s=[0.5]",
    "hitting.lambdas=[1.0]",
    "hitting.r0s=[1.0]",
]


def _out(tmp_path, name):
    return f"output={tmp_path}/{name}"


class TestConfig:
    def test_defaults_validate(self):
        cfg = load_config(None)
        assert cfg["market"]["sigma"] == 1.0

    def test_overrides(self):
        cfg = apply_overrides(DEFAULT_CONFIG, ["sim.n_paths=77", "market.mu=0.3"])
        assert cfg["sim"]["n_paths"] == 77
        assert cfg["market"]["mu"] == 0.3

    def test_missing_required_field(self):
        with pytest.raises(DomainError):
            load_config(None, ["market.sigma=null"])

    def test_malformed_json_diagnostics(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"market": {"mu": }}')
        with pytest.raises(DomainError, match="line"):
            load_config(path)

    def test_digest_changes_with_any_field(self):
        a = config_digest(load_config(None))
        b = config_digest(load_config(None, ["sim.seed=1"]))
        assert a != b

    def test_unknown_override_path(self):
        with pytest.raises(DomainError):
            load_config(None, ["nonexistent.key=1"])


class TestEmitCsv:
    def test_header_only_for_empty_rows(self, tmp_path):
        cfg = load_config(None)
        path = emit_csv(tmp_path / "empty.csv", [], ["a", "b"], cfg)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# sha256=")
        assert lines[1].startswith("# config=")
        assert lines[2] == "a,b"
        assert len(lines) == 3

    def test_deterministic_bytes(self, tmp_path):
        cfg = load_config(None)
        rows = [{"a": 1.0 / 3.0, "b": "x"}, {"a": 2, "b": True}]
        p1 = emit_csv(tmp_path / "one.csv", rows, ["a", "b"], cfg)
        p2 = emit_csv(tmp_path / "two.csv", rows, ["a", "b"], cfg)
        assert p1.read_bytes() == p2.read_bytes()

    def test_seventeen_digits(self, tmp_path):
        cfg = load_config(None)
        path = emit_csv(tmp_path / "digits.csv", [{"a": math.pi}], ["a"], cfg)
        assert "3.1415926535897931" in path.read_text()

    def test_missing_schema_field(self, tmp_path):
        cfg = load_config(None)
        with pytest.raises(DomainError):
            emit_csv(tmp_path / "bad.csv", [{"a": 1}], ["a", "b"], cfg)


class TestSpecialVerify:
    def test_exit_zero_and_six_rows(self, tmp_path):
        code = run(None, "special verify", [_out(tmp_path, "sv")])
        assert code == 0
        lines = (tmp_path / "sv_special_verify.csv").read_text().splitlines()
        assert len(lines) == 3 + 6  # provenance x2, header, six identities


class TestExitCodes:
    def test_unknown_subcommand(self):
        assert run(None, "special frobnicate", []) == 2

    def test_missing_field_is_config_error(self, tmp_path):
        code = run(None, "special verify", ["market.sigma=null", _out(tmp_path, "x")])
        assert code == 2

    def test_malformed_json_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert run(str(bad), "special verify", []) == 2

    def test_domain_error_in_params(self, tmp_path):
        code = run(None, "duality solve", ["tree.d=3.0", _out(tmp_path, "x")])
        assert code == 2  # d > u makes the tree an arbitrage


class TestDualitySubcommands:
    def test_solve_binomial_closed_form(self, tmp_path):
        code = run(None, "duality solve", ["utility.beta=0.0", _out(tmp_path, "ds")])
        assert code == 0
        lines = (tmp_path / "ds_duality_solve.csv").read_text().splitlines()
        row = dict(zip(lines[2].split(","), lines[3].split(",")))
        assert float(row["u"]) == pytest.approx(0.5 * math.log(9.0 / 8.0), abs=1e-8)
        assert float(row["gap"]) <= 1e-6

    def test_oracle(self, tmp_path):
        code = run(
            None,
            "duality oracle",
            ["utility.beta=0.0", "tree.depth=2", "tree.clock=uniform",
             'tree.endowment={"1": 0.4}', _out(tmp_path, "do")],
        )
        assert code == 0

    def test_check_binomial(self, tmp_path):
        code = run(
            None,
            "duality check",
            ["utility.beta=0.0", "tree.x_grid=[0.5,1.0,2.0]",
             "tree.y_grid=[0.5,1.0,2.0]", _out(tmp_path, "dc")],
        )
        assert code == 0
        assert (tmp_path / "dc_duality_check.txt").exists()


class TestDeterminism:
    def test_rerun_byte_identical(self, tmp_path):
        args = FAST + [_out(tmp_path, "a")]
        assert run(None, "clock validate", args) in (0, 1)
        first = (tmp_path / "a_clock_validate.csv").read_bytes()
        assert run(None, "clock validate", args) in (0, 1)
        assert (tmp_path / "a_clock_validate.csv").read_bytes() == first

    def test_worker_count_invariance(self, tmp_path):
        a = FAST + ["sim.workers=1", _out(tmp_path, "w1")]
        b = FAST + ["sim.workers=2", _out(tmp_path, "w2")]
        run(None, "clock validate", a)
        run(None, "clock validate", b)
        va = (tmp_path / "w1_clock_validate.csv").read_text().splitlines()[2:]
        vb = (tmp_path / "w2_clock_validate.csv").read_text().splitlines()[2:]
        assert va == vb  # identical apart from the echoed workers field

    def test_strategy_worker_invariance(self, tmp_path):
        a = FAST + ["sim.workers=1", _out(tmp_path, "s1")]
        b = FAST + ["sim.workers=2", _out(tmp_path, "s2")]
        run(None, "strategy simulate", a)
        run(None, "strategy simulate", b)
        va = (tmp_path / "s1_strategy_simulate.csv").read_text().splitlines()[2:]
        vb = (tmp_path / "s2_strategy_simulate.csv").read_text().splitlines()[2:]
        assert va == vb

    def test_provenance_hash_tracks_config(self, tmp_path):
        run(None, "special verify", [_out(tmp_path, "h1")])
        run(None, "special verify", ["sim.seed=7", _out(tmp_path, "h2")])
        h1 = (tmp_path / "h1_special_verify.csv").read_text().splitlines()[0]
        h2 = (tmp_path / "h2_special_verify.csv").read_text().splitlines()[0]
        assert h1 != h2
