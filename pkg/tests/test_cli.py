"""End-to-end CLI runs through main(), exercising every command and the
exit-code contract (0 success, 2 usage, 3 I/O or format, 4 unconverged)."""

import json
import re

import numpy as np
import pytest

from trtls.cli import _parse_k_sweep, main
from trtls.imgio import load_tensor, pack_planes, read_image, write_image
from trtls.pipeline import synthetic_city
from trtls.report import read_manifest, read_metrics_csv
from trtls.tensor import mse


@pytest.fixture()
def city16(tmp_path):
    path = tmp_path / "city16.pgm"
    write_image(path, synthetic_city(16))
    return path


def run(argv):
    return main([str(q) for q in argv])


# ---------------------------------------------------------------------------
# sweep parsing


def test_parse_k_sweep():
    assert _parse_k_sweep("5") == [5]
    assert _parse_k_sweep("2:6") == [2, 3, 4, 5, 6]
    assert _parse_k_sweep("2:10:3") == [2, 5, 8]
    assert _parse_k_sweep("4:4") == [4]
    for bad in ("", "0:4", "5:2", "2:8:0", "1:2:3:4", "a:b"):
        with pytest.raises(ValueError):
            _parse_k_sweep(bad)


# ---------------------------------------------------------------------------
# gen-operator


def test_gen_operator_writes_tensor_and_manifest(tmp_path, capsys):
    out = tmp_path / "op.tns3"
    assert run(["gen-operator", "--n", 12, "--sigma", 2, "--band", 4, "--out", out]) == 0
    a = load_tensor(out)
    assert a.shape == (12, 12, 12)
    line = capsys.readouterr().out
    m = re.search(
        r"spectral condition numbers: min=(\S+) median=(\S+) max=(\S+)", line
    )
    assert m is not None
    doc = read_manifest(tmp_path / "op.manifest.json")
    assert doc["command"] == "gen-operator"
    assert doc["config"] == {"n": 12, "sigma": 2.0, "band": 4}
    # Stdout prints to six significant digits; the manifest keeps full
    # precision of the same values.
    assert np.isclose(doc["metrics"]["cond_min"], float(m.group(1)), rtol=1e-6)
    assert np.isclose(doc["metrics"]["cond_max"], float(m.group(3)), rtol=1e-6)
    assert doc["metrics"]["cond_min"] <= doc["metrics"]["cond_median"]
    assert doc["metrics"]["cond_median"] <= doc["metrics"]["cond_max"]


def test_gen_operator_band_one_is_perfectly_conditioned(tmp_path, capsys):
    out = tmp_path / "op.tns3"
    assert run(["gen-operator", "--n", 8, "--sigma", 2, "--band", 1, "--out", out]) == 0
    doc = read_manifest(tmp_path / "op.manifest.json")
    assert np.isclose(doc["metrics"]["cond_min"], 1.0, rtol=1e-12)
    assert np.isclose(doc["metrics"]["cond_max"], 1.0, rtol=1e-12)


def test_gen_operator_missing_flag_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["gen-operator", "--n", 8, "--sigma", 2, "--out", tmp_path / "op.tns3"])
    assert exc.value.code == 2


def test_gen_operator_unwritable_path(tmp_path, capsys):
    out = tmp_path / "no" / "such" / "dir" / "op.tns3"
    assert run(["gen-operator", "--n", 8, "--sigma", 2, "--band", 3, "--out", out]) == 3
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# blur


def test_blur_outputs(city16, tmp_path, capsys):
    out = tmp_path / "blurred"
    code = run(["blur", "--in", city16, "--sigma", 2, "--band", 5,
                "--eta", 0.001, "--seed", 7, "--out", out])
    assert code == 0
    assert (out / "blurred.pgm").exists()
    a = load_tensor(out / "a_observed.tns3")
    b = load_tensor(out / "b_observed.tns3")
    assert a.shape == (16, 16, 16)
    assert b.shape == (16, 1, 16)
    assert "blurred MSE against input:" in capsys.readouterr().out
    doc = read_manifest(out / "manifest.json")
    assert doc["command"] == "blur"
    assert doc["metrics"]["blurred_mse"] > 0


def test_blur_determinism(city16, tmp_path):
    args = ["blur", "--in", city16, "--sigma", 2, "--band", 5,
            "--eta", 0.01, "--seed", 3]
    assert run(args + ["--out", tmp_path / "one"]) == 0
    assert run(args + ["--out", tmp_path / "two"]) == 0
    one = (tmp_path / "one" / "b_observed.tns3").read_bytes()
    two = (tmp_path / "two" / "b_observed.tns3").read_bytes()
    assert one == two
    # A different seed perturbs differently.
    args[-1] = "4"
    assert run(args + ["--out", tmp_path / "three"]) == 0
    assert (tmp_path / "three" / "b_observed.tns3").read_bytes() != one


def test_blur_input_flags_are_exclusive(city16, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["blur", "--in", city16, "--frames-dir", tmp_path,
             "--out", tmp_path / "o"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run(["blur", "--out", tmp_path / "o"])
    assert exc.value.code == 2


def test_blur_rejects_nonsquare_input(tmp_path, capsys):
    path = tmp_path / "wide.pgm"
    write_image(path, np.zeros((8, 6)))
    assert run(["blur", "--in", path, "--out", tmp_path / "o"]) == 3
    assert "square" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# deblur


def test_deblur_invertible_operator_recovers_input(city16, tmp_path, capsys):
    # Band 1 makes the blur a positive multiple of the identity, so the
    # solve should reproduce the input to machine precision.
    op = tmp_path / "op.tns3"
    assert run(["gen-operator", "--n", 16, "--sigma", 2, "--band", 1, "--out", op]) == 0
    bdir = tmp_path / "blurred"
    assert run(["blur", "--in", city16, "--operator", op, "--eta", 0,
                "--out", bdir]) == 0
    ddir = tmp_path / "deblurred"
    code = run(["deblur", "--operator", op, "--in", bdir / "b_observed.tns3",
                "--reg", "identity", "--start-alpha", "1e-6",
                "--truth", city16, "--out", ddir])
    assert code == 0
    x = load_tensor(ddir / "x_solved.tns3")
    truth = pack_planes([read_image(city16)])
    assert mse(x, truth) <= 1e-8
    assert "restoring proportion" in capsys.readouterr().out


def test_deblur_schemes_agree(city16, tmp_path):
    bdir = tmp_path / "blurred"
    assert run(["blur", "--in", city16, "--sigma", 2, "--band", 5,
                "--eta", 0.001, "--seed", 7, "--out", bdir]) == 0
    truth = pack_planes([read_image(city16)])
    results = {}
    for scheme in ("tensor", "matrix"):
        ddir = tmp_path / scheme
        code = run(["deblur", "--operator", bdir / "a_observed.tns3",
                    "--in", bdir / "b_observed.tns3", "--scheme", scheme,
                    "--out", ddir])
        assert code == 0
        results[scheme] = mse(load_tensor(ddir / "x_solved.tns3"), truth)
    assert abs(results["tensor"] - results["matrix"]) <= 1e-4
    # Both restored well below the blurred error.
    blurred = mse(load_tensor(bdir / "b_observed.tns3"), truth)
    assert max(results.values()) < 0.5 * blurred


def test_deblur_reports_artifacts_and_unconverged_exit(city16, tmp_path):
    bdir = tmp_path / "blurred"
    assert run(["blur", "--in", city16, "--sigma", 2, "--band", 5,
                "--eta", 0.001, "--seed", 7, "--out", bdir]) == 0
    ddir = tmp_path / "deblurred"
    code = run(["deblur", "--operator", bdir / "a_observed.tns3",
                "--in", bdir / "b_observed.tns3", "--max-iter", 1,
                "--tol", "1e-12", "--out", ddir])
    assert code == 4
    # Outputs are written even when the budget stops the iteration early.
    assert (ddir / "x_solved.tns3").exists()
    assert (ddir / "restored.pgm").exists()
    assert (ddir / "panel.png").stat().st_size > 0
    rows = read_metrics_csv(ddir / "metrics.csv")
    assert len(rows) == 1
    assert rows[0]["method"] == "trtls"
    assert rows[0]["param"] == "tensor"
    doc = read_manifest(ddir / "manifest.json")
    assert doc["metrics"]["converged"] is False
    assert len(doc["metrics"]["slice_reports"]) == 1
    assert doc["metrics"]["slice_reports"][0]["iterations"] == 1


def test_deblur_missing_operator(city16, tmp_path, capsys):
    code = run(["deblur", "--operator", tmp_path / "absent.tns3",
                "--in", city16, "--out", tmp_path / "o"])
    assert code == 3
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# benchmark


def bench_args(city16, out):
    return ["benchmark", "--in", city16, "--sigma", 2, "--band", 5,
            "--eta", 0.001, "--seed", 7, "--ttsvd-k-sweep", "2:16:2",
            "--out", out]


def test_benchmark_outputs(city16, tmp_path, capsys):
    out = tmp_path / "bench"
    assert run(bench_args(city16, out)) == 0
    text = capsys.readouterr().out
    assert "trtls:" in text and "ttsvd best:" in text
    rows = read_metrics_csv(out / "metrics.csv")
    assert [q["method"] for q in rows] == (
        ["trtls"] + ["ttsvd"] * 8 + ["RTTSVD", "TGGKB", "TGGMRES"]
    )
    assert [q["param"] for q in rows[1:9]] == [str(k) for k in range(2, 17, 2)]
    for q in rows[:9]:
        assert float(q["mse"]) > 0
    for q in rows[9:]:
        assert q["mse"] == ""
    assert (out / "scatter.png").stat().st_size > 0
    doc = read_manifest(out / "manifest.json")
    assert doc["command"] == "benchmark"
    assert doc["config"]["experiment"]["n"] == 16
    assert doc["config"]["k_sweep"] == list(range(2, 17, 2))
    assert doc["metrics"]["converged"] is True


def test_benchmark_determinism(city16, tmp_path):
    assert run(bench_args(city16, tmp_path / "one")) == 0
    assert run(bench_args(city16, tmp_path / "two")) == 0
    one = read_metrics_csv(tmp_path / "one" / "metrics.csv")
    two = read_metrics_csv(tmp_path / "two" / "metrics.csv")
    for q, r in zip(one, two):
        q = {key: val for key, val in q.items() if key != "wall_time_s"}
        r = {key: val for key, val in r.items() if key != "wall_time_s"}
        assert q == r


def test_benchmark_config_file_merging(city16, tmp_path):
    config = tmp_path / "conf.json"
    config.write_text(json.dumps({"sigma": 2.0, "band": 5, "eta": 0.01}))
    out = tmp_path / "bench"
    # Flags override the file: eta comes from the flag, band from the file.
    code = run(["benchmark", "--config", config, "--in", city16,
                "--eta", 0.001, "--seed", 7, "--ttsvd-k-sweep", "2:16:2",
                "--out", out])
    assert code == 0
    doc = read_manifest(out / "manifest.json")
    assert doc["config"]["experiment"]["sigma"] == 2.0
    assert doc["config"]["experiment"]["band"] == 5
    assert doc["config"]["experiment"]["eta"] == 0.001


def test_benchmark_rejects_unknown_config_keys(city16, tmp_path, capsys):
    config = tmp_path / "conf.json"
    config.write_text(json.dumps({"sgima": 2.0}))
    code = run(["benchmark", "--config", config, "--in", city16,
                "--out", tmp_path / "bench"])
    assert code == 3
    assert "unknown config keys" in capsys.readouterr().err


def test_benchmark_bad_sweep_is_usage_error(city16, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["benchmark", "--in", city16, "--ttsvd-k-sweep", "0:4",
             "--out", tmp_path / "bench"])
    assert exc.value.code == 2
