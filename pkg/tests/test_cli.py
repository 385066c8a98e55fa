import json
import math

import pytest

from branchsim.cli import main, parse_config, run_and_report
from branchsim.errors import ConfigError


def write_config(tmp_path, name="config.json", **overrides):
    config = {
        "experiment": "stern_gerlach",
        "n_versions": 2,
        "coefficients": [[0.6, 0.0], [0.8, 0.0]],
    }
    config.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


def load_report(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_parse_minimal_config(tmp_path):
    config = parse_config(str(write_config(tmp_path)))
    assert config.experiment == "stern_gerlach"
    assert config.coefficients == [complex(0.6), complex(0.8)]
    assert config.output_format == "json"


def test_parse_rejects_unnormalized_coefficients(tmp_path):
    path = write_config(tmp_path, coefficients=[[1.0, 0.0], [0.6, 0.0]])
    with pytest.raises(ConfigError, match="coefficients"):
        parse_config(str(path))


def test_parse_rejects_unknown_keys_and_counts(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        parse_config(str(write_config(tmp_path, extra=1)))
    with pytest.raises(ConfigError, match="n_versions"):
        parse_config(
            str(
                write_config(
                    tmp_path,
                    name="gen.json",
                    experiment="generalized",
                    n_versions=3,
                )
            )
        )


def test_parse_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"experiment": }', encoding="utf-8")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config(str(path))


def test_parse_theta_sweep(tmp_path):
    path = write_config(
        tmp_path,
        experiment="appendix_rotation",
        thetas={"count": 64, "start": 0.0, "end": 2 * math.pi},
    )
    config = parse_config(str(path))
    assert len(config.thetas) == 64
    assert config.thetas[0] == 0.0
    assert config.thetas[-1] < 2 * math.pi  # endpoint excluded


def test_parse_requires_seed_for_random(tmp_path):
    path = write_config(tmp_path, coefficients={"random": 5})
    with pytest.raises(ConfigError, match="seed"):
        parse_config(str(path))


def test_parse_validates_check_names(tmp_path):
    path = write_config(tmp_path, checks=["structure", "wrong"])
    with pytest.raises(ConfigError, match="wrong"):
        parse_config(str(path))


def test_run_and_report_passes(tmp_path):
    config = parse_config(str(write_config(tmp_path)))
    exit_code, report = run_and_report(config)
    assert exit_code == 0
    assert report["schema_version"] == 1
    assert report["summary"]["all_passed"] is True
    assert len(report["runs"]) == 1
    run = report["runs"][0]
    assert {b["label"] for b in run["branches"]} == {"M1", "M2"}
    statuses = {c["name"]: c["status"] for c in run["checks"]}
    assert statuses["structure"] == "pass"
    assert statuses["observer_agreement"] == "skip"


def test_main_writes_json_report(tmp_path):
    out = tmp_path / "report.json"
    code = main(["run", str(write_config(tmp_path)), "--out", str(out)])
    assert code == 0
    report = load_report(out)
    assert report["summary"]["all_passed"] is True


def test_main_exit_codes(tmp_path):
    # Config error -> 2.
    bad = write_config(tmp_path, name="bad.json", coefficients=[[1.0, 0.0], [1.0, 0.0]])
    assert main(["run", str(bad)]) == 2
    # Capacity error -> 3 (16 * 2^16 * 18^1 basis states exceed the cap).
    big = write_config(
        tmp_path,
        name="big.json",
        experiment="generalized",
        n_versions=16,
        coefficients=[[0.25, 0.0]] * 16,
    )
    assert main(["run", str(big), "--out", str(tmp_path / "x.json")]) == 3


def test_negative_control_fails_and_exits_one(tmp_path):
    out = tmp_path / "corrupted.json"
    code = main(["run", str(write_config(tmp_path)), "--negative-control", "--out", str(out)])
    assert code == 1
    report = load_report(out)
    statuses = {c["name"]: c["status"] for c in report["runs"][0]["checks"]}
    assert statuses["mixed_record"] == "fail"
    assert report["summary"]["all_passed"] is False


def test_check_filter(tmp_path):
    out = tmp_path / "filtered.json"
    code = main(
        [
            "run",
            str(write_config(tmp_path)),
            "--check",
            "structure",
            "--check",
            "mixed_record",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    names = [c["name"] for c in load_report(out)["runs"][0]["checks"]]
    assert names == ["structure", "mixed_record"]


def test_text_format(tmp_path, capsys):
    code = main(["run", str(write_config(tmp_path)), "--format", "text"])
    assert code == 0
    text = capsys.readouterr().out
    assert "label" in text and "weight" in text and "message" in text
    assert "M1" in text and "M2" in text
    assert "all passed yes" in text


def test_random_sweep_deterministic_reports(tmp_path):
    path = write_config(
        tmp_path,
        experiment="generalized",
        n_versions=3,
        coefficients={"random": 4},
        seed=20260810,
        observers=2,
    )
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert main(["run", str(path), "--out", str(out1)]) == 0
    assert main(["run", str(path), "--out", str(out2)]) == 0
    first, second = load_report(out1), load_report(out2)
    first.pop("timings")
    second.pop("timings")
    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)


def test_seed_override_changes_draws(tmp_path):
    path = write_config(
        tmp_path,
        experiment="generalized",
        coefficients={"random": 2},
        seed=1,
    )
    out1, out2 = tmp_path / "s1.json", tmp_path / "s2.json"
    assert main(["run", str(path), "--out", str(out1)]) == 0
    assert main(["run", str(path), "--seed", "2", "--out", str(out2)]) == 0
    first, second = load_report(out1), load_report(out2)
    assert first["runs"][0]["coefficients"] != second["runs"][0]["coefficients"]
    assert first["spec"]["seed"] == 1 and second["spec"]["seed"] == 2


def test_appendix_sweep_via_cli(tmp_path):
    path = write_config(
        tmp_path,
        experiment="appendix_rotation",
        thetas={"count": 64, "start": 0.0, "end": 2 * math.pi},
    )
    out = tmp_path / "appendix.json"
    assert main(["run", str(path), "--out", str(out)]) == 0
    report = load_report(out)
    assert report["summary"]["runs"] == 64
    assert report["summary"]["all_passed"] is True
    assert len({run["theta"] for run in report["runs"]}) == 64
    assert all(
        check["status"] == "pass" or check["status"] == "skip"
        for run in report["runs"]
        for check in run["checks"]
    )


def test_appendix_random_draws_cross_thetas(tmp_path):
    path = write_config(
        tmp_path,
        experiment="appendix_rotation",
        coefficients={"random": 2},
        seed=7,
        thetas=[0.0, 0.5, 1.0],
    )
    out = tmp_path / "cross.json"
    assert main(["run", str(path), "--out", str(out)]) == 0
    report = load_report(out)
    assert report["summary"]["runs"] == 6


def test_tolerance_override_must_be_positive(tmp_path):
    assert main(["run", str(write_config(tmp_path)), "--tolerance", "-1"]) == 2


def test_seed_override_must_be_non_negative(tmp_path):
    assert main(["run", str(write_config(tmp_path)), "--seed", "-1"]) == 2
