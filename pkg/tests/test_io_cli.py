"""File loaders and the command-line interface."""

from __future__ import annotations

import json

import numpy as np
import pytest

from designvar import (
    ValidationError,
    build_design,
    load_design,
    load_matrix,
    load_observed,
    load_science_table,
    load_substitute_map,
)
from designvar.cli import main


@pytest.fixture
def crossed_pairs_file(tmp_path):
    path = tmp_path / "design.json"
    path.write_text(
        json.dumps(
            {"support": ["1100", "0011", "1001", "0110"], "probs": [0.25] * 4}
        )
    )
    return str(path)


@pytest.fixture
def crd_file(tmp_path):
    path = tmp_path / "crd.json"
    path.write_text(json.dumps({"kind": "crd", "n": 4, "n_treated": 2}))
    return str(path)


@pytest.fixture
def obs_file(tmp_path):
    path = tmp_path / "obs.csv"
    path.write_text("unit_id,w,y_obs\n1,1,1\n2,1,2\n3,0,3\n4,0,4\n")
    return str(path)


@pytest.fixture
def science_file(tmp_path):
    path = tmp_path / "science.csv"
    path.write_text("unit_id,y0,y1\n1,1,3\n2,2,4\n3,3,5\n4,4,6\n")
    return str(path)


class TestBuildDesign:
    def test_explicit_defaults_to_uniform(self):
        d = build_design({"support": ["10", "01"]})
        assert np.allclose(d.probs, 0.5)

    def test_kind_inferred_from_support(self):
        d = build_design({"support": ["1100", "0011"], "probs": [0.5, 0.5]})
        assert d.kind == "explicit"

    def test_crd_fields(self):
        d = build_design({"kind": "crd", "n": 6, "n_treated": 3})
        assert d.support_size == 20

    def test_matched_pairs_are_one_based(self):
        d = build_design({"kind": "matched_pair", "pairs": [[1, 3], [2, 4]]})
        support = sorted(w.to_string() for w, _ in d.enumerate_support())
        assert support == ["0011", "0110", "1001", "1100"]

    def test_rerandomized_recursive_base(self):
        payload = {
            "kind": "rerandomized",
            "base": {"kind": "crd", "n": 4, "n_treated": 2},
            "covariates": [[1.0], [2.0], [3.0], [4.0]],
            "threshold": 1.5,
        }
        d = build_design(payload)
        assert d.kind == "rerandomized"
        assert 0 < d.support_size < 6

    def test_missing_fields(self):
        with pytest.raises(ValidationError, match="missing required field"):
            build_design({"kind": "crd", "n": 4})
        with pytest.raises(ValidationError, match="kind"):
            build_design({"probs": [1.0]})
        with pytest.raises(ValidationError):
            build_design({"kind": "lattice"})


class TestLoaders:
    def test_load_design(self, crossed_pairs_file):
        d = load_design(crossed_pairs_file)
        assert d.support_size == 4

    def test_load_observed(self, obs_file):
        obs = load_observed(obs_file)
        assert obs.w.to_string() == "1100"
        assert np.allclose(obs.y_obs, [1.0, 2.0, 3.0, 4.0])

    def test_load_observed_with_pairs(self, tmp_path):
        path = tmp_path / "paired.csv"
        path.write_text(
            "unit_id,w,y_obs,pair\n1,1,1,a\n2,1,2,b\n3,0,3,a\n4,0,4,b\n"
        )
        obs = load_observed(str(path))
        assert obs.pair_labels == ((0, 2), (1, 3))

    def test_load_observed_rejects_bad_w(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("unit_id,w,y_obs\n1,2,1\n2,0,2\n")
        with pytest.raises(ValidationError):
            load_observed(str(path))

    def test_load_science_table(self, science_file):
        po = load_science_table(science_file)
        assert np.allclose(po.y1 - po.y0, 2.0)

    def test_science_loader_rejects_observed_table(self, obs_file):
        with pytest.raises(ValidationError, match="science table"):
            load_science_table(obs_file)

    def test_unit_ids_must_cover_range(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("unit_id,y0,y1\n1,1,2\n3,2,3\n")
        with pytest.raises(ValidationError):
            load_science_table(str(path))

    def test_load_matrix(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,2\n3,4\n")
        assert np.allclose(load_matrix(str(path)), [[1.0, 2.0], [3.0, 4.0]])

    def test_load_matrix_rejects_ragged(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("1,2\n3\n")
        with pytest.raises(ValidationError):
            load_matrix(str(path))

    def test_load_substitute_map(self, tmp_path):
        path = tmp_path / "subs.json"
        path.write_text(json.dumps({"1100": ["1001", "0110"]}))
        mapping = load_substitute_map(str(path))
        assert mapping == {"1100": ["1001", "0110"]}


class TestCliDesignInspect:
    def test_human_output(self, crossed_pairs_file, capsys):
        assert main(["design-inspect", "--design", crossed_pairs_file]) == 0
        out = capsys.readouterr().out
        assert "explicit" in out

    def test_json_with_assumptions(self, crossed_pairs_file, capsys):
        code = main(
            [
                "design-inspect",
                "--design",
                crossed_pairs_file,
                "--check-assumptions",
                "--json",
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["assumptions"]["flags"]["measurable"] is False
        assert payload["substitution_mode"] == "equal-size"

    def test_substitutes_listing(self, crossed_pairs_file, capsys):
        code = main(
            ["design-inspect", "--design", crossed_pairs_file, "--substitutes-for", "1100", "--json"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert sorted(payload["substitutes"]) == ["0110", "1001"]


class TestCliAnalyze:
    def test_neyman(self, crd_file, obs_file, capsys):
        code = main(
            ["analyze", "--design", crd_file, "--data", obs_file, "--estimator", "neyman", "--json"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["value"] == pytest.approx(0.5)

    def test_observed_alias_and_trailing_global_flag(self, crd_file, obs_file, capsys):
        code = main(
            ["analyze", "--design", crd_file, "--observed", obs_file, "--estimator", "neyman", "--json"]
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.5)

    def test_contrast_hand_value(self, crossed_pairs_file, tmp_path, capsys):
        obs = tmp_path / "obs2.csv"
        obs.write_text("unit_id,w,y_obs\n1,1,3\n2,0,2\n3,0,3\n4,1,6\n")
        code = main(
            [
                "analyze",
                "--design",
                crossed_pairs_file,
                "--data",
                str(obs),
                "--estimator",
                "contrast",
                "--json",
            ]
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(4.0)

    def test_decomposition_q_forms(self, crd_file, obs_file, tmp_path, capsys):
        q_file = tmp_path / "q.csv"
        rows = []
        for i in range(4):
            rows.append(
                ",".join("0.0625" if i == j else "-0.0208333333333333333" for j in range(4))
            )
        q_file.write_text("\n".join(rows) + "\n")
        for q_arg in ["default-crd", f"file:{q_file}", str(q_file)]:
            code = main(
                [
                    "analyze",
                    "--design",
                    crd_file,
                    "--data",
                    obs_file,
                    "--estimator",
                    "decomposition",
                    "--q",
                    q_arg,
                    "--json",
                ]
            )
            assert code == 0
            assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.5)

    def test_imputation_exact_and_mc(self, crd_file, obs_file, capsys):
        base = [
            "analyze",
            "--design",
            crd_file,
            "--data",
            obs_file,
            "--estimator",
            "imputation",
            "--gamma",
            "tau-hat",
            "--json",
        ]
        assert main(base) == 0
        exact = json.loads(capsys.readouterr().out)
        assert exact["value"] == pytest.approx(0.5 * 2.0 / 3.0, rel=1e-10)
        assert main(base + ["--mc", "--mc-draws", "20000", "--seed", "7"]) == 0
        mc = json.loads(capsys.readouterr().out)
        assert mc["exact"] is False
        assert abs(mc["value"] - exact["value"]) <= 3.0 * mc["mc_se"]

    def test_assumption_failure_exits_3(self, crossed_pairs_file, tmp_path, capsys):
        obs = tmp_path / "obs3.csv"
        obs.write_text("unit_id,w,y_obs\n1,1,1\n2,1,2\n3,0,3\n4,0,4\n")
        code = main(
            [
                "analyze",
                "--design",
                crossed_pairs_file,
                "--data",
                str(obs),
                "--estimator",
                "decomposition",
                "--q",
                "default-crd",
            ]
        )
        assert code == 3
        assert "assumption violated" in capsys.readouterr().err

    def test_validation_failure_exits_2(self, crd_file, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        code = main(
            ["analyze", "--design", crd_file, "--data", str(missing), "--estimator", "neyman"]
        )
        assert code == 2


class TestCliOracle:
    def test_bias_report(self, crossed_pairs_file, science_file, capsys):
        code = main(
            [
                "oracle",
                "--design",
                crossed_pairs_file,
                "--table",
                science_file,
                "--estimator",
                "contrast",
                "--json",
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["true_variance"] == pytest.approx(2.0)
        assert payload["expected_estimate"] == pytest.approx(2.0)
        assert payload["bias"] == pytest.approx(0.0, abs=1e-10)
        assert payload["conservative_within_tolerance"] is True

    def test_observed_table_rejected_with_exit_2(self, crossed_pairs_file, obs_file, capsys):
        code = main(
            [
                "oracle",
                "--design",
                crossed_pairs_file,
                "--table",
                obs_file,
                "--estimator",
                "contrast",
            ]
        )
        assert code == 2
        assert "science table" in capsys.readouterr().err


class TestCliVerify:
    def test_all_suites_pass(self, capsys):
        assert main(["verify", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["passed"] is True
        assert not payload["failed_checks"]

    def test_single_suite(self, capsys):
        assert main(["verify", "--suite", "prop4"]) == 0
        assert "prop4" in capsys.readouterr().out

    def test_impossible_tolerance_exits_4(self, capsys):
        code = main(["verify", "--tolerance-verify", "1e-30"])
        assert code == 4
        assert "verification failed" in capsys.readouterr().err


class TestCliSimulate:
    def test_scenario_json(self, tmp_path, capsys):
        scenario = {
            "name": "cli-test",
            "design": {"support": ["1100", "0011", "1001", "0110"]},
            "outcome_model": {"kind": "heterogeneous"},
            "estimators": ["v_am", "imputation:theta-loo"],
            "n_replications": 3,
        }
        cfg = tmp_path / "scenario.json"
        cfg.write_text(json.dumps(scenario))
        out = tmp_path / "out"
        code = main(
            ["simulate", "--scenario", str(cfg), "--out", str(out), "--seed", "4"]
        )
        assert code == 0
        assert (out / "results.csv").exists()
        assert (out / "summary.json").exists()
        assert list(out.glob("boxplot-*.svg"))
        rows = (out / "results.csv").read_text().splitlines()
        assert len(rows) == 1 + 3 * 2

    def test_study_and_scenario_conflict(self, tmp_path, capsys):
        cfg = tmp_path / "s.json"
        cfg.write_text("{}")
        code = main(["simulate", "--study", "a", "--scenario", str(cfg)])
        assert code == 2


class TestCliParsing:
    def test_bad_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_threads_must_be_positive(self):
        with pytest.raises(SystemExit) as exc:
            main(["--threads", "0", "verify"])
        assert exc.value.code == 2

    def test_global_flags_accepted_before_and_after_subcommand(self, capsys):
        assert main(["--json", "verify", "--suite", "prop4"]) == 0
        capsys.readouterr()
        assert main(["verify", "--suite", "prop4", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["passed"] is True
