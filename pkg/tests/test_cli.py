"""Command-line interface: exit codes, overrides, artifacts, determinism."""
import json

import pytest

from furrowplan.cli import (
    CliError,
    apply_overrides,
    main,
    resolve_scenario,
    validate_report_dict,
)
from furrowplan.harness import SimulationConfig, generate_field, save_scenario


class TestOverrides:
    def test_scalar_override_applied(self):
        config, logged = apply_overrides(["planner.beta=0.25"], SimulationConfig())
        assert config.planner.beta == 0.25
        assert logged == {"planner.beta": "0.25"}

    def test_nested_sections(self):
        config, _ = apply_overrides(
            ["mpc.horizon=10", "replanner.expand=3", "sim.fan_range=20"],
            SimulationConfig(),
        )
        assert config.mpc.horizon == 10
        assert config.replanner.expand == 3
        assert config.fan_range == 20.0

    def test_unknown_key_rejected(self):
        with pytest.raises(CliError):
            apply_overrides(["planner.bogus=1"], SimulationConfig())
        with pytest.raises(CliError):
            apply_overrides(["nosection.beta=1"], SimulationConfig())
        with pytest.raises(CliError):
            apply_overrides(["planner.beta"], SimulationConfig())

    def test_bad_value_rejected(self):
        with pytest.raises(CliError):
            apply_overrides(["mpc.horizon=abc"], SimulationConfig())


class TestResolveScenario:
    def test_generated_spec(self):
        sc = resolve_scenario("rectangular:3")
        assert len(sc.reference_paths) == 20

    def test_file_spec(self, tmp_path):
        sc = generate_field(3, "convex")
        p = tmp_path / "scene.json"
        save_scenario(sc, p)
        back = resolve_scenario(str(p))
        assert back.rng_seed == 3

    def test_invalid_file_rejected(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(CliError):
            resolve_scenario(str(p))
        q = tmp_path / "wrong.json"
        q.write_text(json.dumps({"field": "nope"}))
        with pytest.raises(CliError):
            resolve_scenario(str(q))

    def test_unknown_spec_rejected(self):
        with pytest.raises(CliError):
            resolve_scenario("hexagonal:3")
        with pytest.raises(CliError):
            resolve_scenario("no-such-file.json")


class TestExitCodes:
    def test_smooth_success(self, tmp_path, capsys):
        code = main(
            [
                "smooth",
                "--scenario", "rectangular:1",
                "--path-index", "0",
                "--method", "bspline",
                "--output-dir", str(tmp_path),
            ]
        )
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["method"] == "bspline"
        assert (tmp_path / "smooth_bspline_p0.csv").exists()
        assert (tmp_path / "smooth_bspline_p0.json").exists()

    def test_input_error_exit_2(self, tmp_path, capsys):
        code = main(
            [
                "smooth",
                "--scenario", "rectangular:1",
                "--path-index", "99",
                "--output-dir", str(tmp_path),
            ]
        )
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_override_exit_2(self, tmp_path, capsys):
        code = main(
            [
                "simulate",
                "--scenario", "rectangular:1",
                "--set", "planner.nope=1",
                "--output-dir", str(tmp_path),
            ]
        )
        assert code == 2

    def test_plan_not_found_exit_3(self, tmp_path, capsys):
        # Starve the search so even a straight furrow cannot be planned.
        code = main(
            [
                "smooth",
                "--scenario", "rectangular:1",
                "--path-index", "0",
                "--method", "hybrid",
                "--set", "planner.max_expansions=1",
                "--output-dir", str(tmp_path),
            ]
        )
        assert code == 3
        assert "plan not found" in capsys.readouterr().err


class TestSimulate:
    def test_single_run_artifacts_validate(self, tmp_path, capsys):
        code = main(
            [
                "simulate",
                "--scenario", "rectangular:1",
                "--path-index", "0",
                "--method", "raw",
                "--output-dir", str(tmp_path),
            ]
        )
        assert code == 0
        report = json.loads((tmp_path / "simulate_raw_p0_s0.json").read_text())
        validate_report_dict(report)
        csv = (tmp_path / "simulate_raw_p0_s0.csv").read_text()
        assert csv.splitlines()[0] == "t,x,y,theta,v,delta,a,mode,g_min"

    def test_determinism_byte_identical(self, tmp_path, capsys):
        blobs = []
        for tag in ("a", "b"):
            d = tmp_path / tag
            code = main(
                [
                    "simulate",
                    "--scenario", "rectangular:2",
                    "--path-index", "0",
                    "--method", "hybrid",
                    "--obstacles", "1",
                    "--trials", "1",
                    "--seed", "5",
                    "--output-dir", str(d),
                ]
            )
            assert code == 0
            blobs.append((d / "simulate_o1_t1_s5.json").read_bytes())
        assert blobs[0] == blobs[1]
