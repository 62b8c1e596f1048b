import csv
import math
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import trapezoid

from hybrid_entropy import HybridNoiseSpec, build_model, collision_entropy_closed
from hybrid_entropy.cli import main

LOG2E = math.log2(math.e)


def run(tmp_path, *args, name="out.csv"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def read_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def surface_integral(path):
    rows = read_rows(path)
    q = np.array(sorted({float(r["q"]) for r in rows}))
    p = np.array(sorted({float(r["p"]) for r in rows}))
    vals = np.array([float(r["value"]) for r in rows]).reshape(p.size, q.size)
    return trapezoid(trapezoid(vals, q, axis=1), p)


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "model.txt"
    path.write_text("lambda=1\ndimension=2\nbase_mean=0,0\nbase_cov=1,0,0,1\ndirection=1,1\nspacing=1\n")
    return path


@pytest.fixture
def gaussian_file(tmp_path):
    path = tmp_path / "gauss.txt"
    path.write_text("lambda=0\ndimension=2\n")
    return path


class TestSurface:
    def test_density_normalised(self, tmp_path, model_file):
        code, out = run(tmp_path, "surface", "--model", str(model_file), "--kind", "density", "--grid", "256")
        assert code == 0
        header = out.read_text().splitlines()[:2]
        assert header[0].startswith("# kind=density") and "grid=256" in header[0]
        assert header[1] == "q,p,value"
        assert abs(surface_integral(out) - 1.0) < 1e-6

    def test_collision_integral(self, tmp_path, model_file):
        code, out = run(tmp_path, "surface", "--model", str(model_file), "--kind", "collision")
        assert code == 0
        target = math.exp(-collision_entropy_closed(build_model(HybridNoiseSpec())).value_nats)
        assert abs(surface_integral(out) / target - 1.0) < 1e-6

    def test_diff_on_gaussian(self, tmp_path, gaussian_file):
        code, out = run(tmp_path, "surface", "--model", str(gaussian_file), "--kind", "diff", "--grid", "256")
        assert code == 0
        assert abs(surface_integral(out) - 2 * 1.4189385332046727) < 1e-5

    def test_renyi_alpha_in_header(self, tmp_path, model_file):
        code, out = run(tmp_path, "surface", "--model", str(model_file), "--kind", "renyi", "--alpha", "3", "--grid", "64")
        assert code == 0
        assert "alpha=3.0" in out.read_text().splitlines()[0]

    def test_row_major(self, tmp_path):
        code, out = run(tmp_path, "surface", "--grid", "64")
        rows = read_rows(out)
        assert len(rows) == 64 * 64
        assert rows[0]["p"] == rows[63]["p"] != rows[64]["p"]

    def test_one_dimensional_model_exit_2(self, tmp_path, capsys):
        path = tmp_path / "m1.txt"
        path.write_text("lambda=1\ndimension=1\n")
        code, out = run(tmp_path, "surface", "--model", str(path))
        assert code == 2
        assert not out.exists()
        assert "dimension" in capsys.readouterr().err

    def test_missing_model_exit_1(self, tmp_path):
        code, _ = run(tmp_path, "surface", "--model", str(tmp_path / "nope.txt"))
        assert code == 1

    def test_unknown_model_key_exit_1(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("lambda=1\nfoo=2\n")
        assert run(tmp_path, "surface", "--model", str(path))[0] == 1

    def test_set_override_logged(self, tmp_path, model_file, caplog):
        code, out = run(tmp_path, "surface", "--model", str(model_file), "--grid", "64", "--set", "lambda=0", "--set", "kind=collision")
        assert code == 0
        assert "override lambda=0 (was 1)" in caplog.text
        assert "override kind=collision" in caplog.text
        assert out.read_text().startswith("# kind=collision")
        # lambda=0, d=2 single standard normal: int f^2 = 1/(4 pi)
        assert abs(surface_integral(out) * 4 * math.pi - 1.0) < 1e-6


class TestEntropies:
    def test_gaussian_rows(self, tmp_path, gaussian_file):
        code, out = run(tmp_path, "entropies", "--model", str(gaussian_file), "--samples", "200000")
        assert code == 0
        rows = read_rows(out)
        by = {(r["name"], r["method"]): r for r in rows}
        grid = float(by["differential", "grid_quadrature"]["value_nats"])
        assert abs(grid - 2 * 1.4189385332046727) < 1e-5
        closed = float(by["collision", "closed_form"]["value_nats"])
        assert abs(closed - 2 * 0.5 * math.log(4 * math.pi)) < 1e-12
        gap = by["entropy_gap", "monte_carlo"]
        assert abs(float(gap["value_nats"]) - (1 - math.log(2))) <= 3 * float(gap["std_error"])
        for r in rows:
            assert abs(float(r["value_bits"]) - float(r["value_nats"]) * LOG2E) < 1e-12
            assert (r["std_error"] != "") == (r["method"] == "monte_carlo")

    def test_renyi_two_matches_closed(self, tmp_path, model_file):
        code, out = run(tmp_path, "entropies", "--model", str(model_file), "--alpha", "2")
        assert code == 0
        by = {r["name"]: r for r in read_rows(out) if r["method"] in ("closed_form", "monte_carlo")}
        ren = by["renyi_2.0"]
        assert abs(float(ren["value_nats"]) - float(by["collision"]["value_nats"])) <= 3 * float(ren["std_error"])

    def test_all_measures_present(self, tmp_path):
        code, out = run(tmp_path, "entropies", "--samples", "20000")
        assert code == 0
        names = {(r["name"], r["method"]) for r in read_rows(out)}
        for key in [
            ("differential", "monte_carlo"),
            ("differential", "grid_quadrature"),
            ("renyi_0.5", "monte_carlo"),
            ("renyi_3.0", "monte_carlo"),
            ("collision_separated", "approximation_paper"),
            ("collision_separated", "approximation_exact"),
            ("differential_separated", "approximation_exact"),
            ("weight_entropy", "closed_form"),
            ("log_effective_rank", "closed_form"),
        ]:
            assert key in names

    def test_three_dimensional_skips_grid(self, tmp_path):
        code, out = run(tmp_path, "entropies", "--samples", "5000", "--set", "dimension=3", "--set", "lambda=0.5")
        assert code == 0
        assert all(r["method"] != "grid_quadrature" for r in read_rows(out))

    def test_unknown_override_exit_1(self, tmp_path):
        assert run(tmp_path, "entropies", "--set", "bogus=1")[0] == 1


class TestGapCurve:
    def test_threshold_and_structure(self, tmp_path):
        code, out = run(tmp_path, "gap-curve")
        assert code == 0
        rows = read_rows(out)
        r = np.array([float(x["r_eff"]) for x in rows])
        rel = np.array([float(x["relative_error"]) for x in rows])
        diff = np.array([float(x["exact_gap_bits"]) - float(x["approx_gap_bits"]) for x in rows])
        assert r[0] == 1.0 and r[-1] == pytest.approx(1e6)
        assert np.all(np.diff(rel) < 0)
        assert np.allclose(diff, LOG2E, atol=1e-12, rtol=0)
        marked = [i for i, x in enumerate(rows) if x["threshold"] == "1"]
        assert len(marked) == 1
        i = marked[0]
        assert r[i - 1] < math.exp(9) <= r[i]

    def test_dimension_override(self, tmp_path):
        code, out = run(tmp_path, "gap-curve", "--set", "dimension=4")
        rows = read_rows(out)
        assert float(rows[0]["exact_gap_bits"]) == pytest.approx(2 * LOG2E)


class TestQkd:
    def test_impact_defaults(self, tmp_path):
        code, out = run(tmp_path, "qkd-impact")
        assert code == 0
        (row,) = read_rows(out)
        assert float(row["degradation_ratio"]) == 1024.0
        assert float(row["eve_bound_log2"]) == -100.0
        assert float(row["deviation_abs"]) == -10.0
        assert float(row["key_length_est"]) < 0 < float(row["key_length_true"])

    def test_impact_delta_sweep(self, tmp_path):
        code, out = run(tmp_path, "qkd-impact", "--set", "delta=-0.1,0,0.1")
        rows = read_rows(out)
        assert [float(r["degradation_ratio"]) for r in rows] == [1024.0, 1.0, 2.0**-10]

    def test_invalid_eps_exit_1(self, tmp_path):
        assert run(tmp_path, "qkd-impact", "--set", "eps_pa=0")[0] == 1
        assert run(tmp_path, "qkd-rate", "--set", "eps_s=2")[0] == 1

    def test_rate_curve(self, tmp_path):
        code, out = run(tmp_path, "qkd-rate")
        assert code == 0
        rows = read_rows(out)
        assert rows[0]["N"] == "10000" and rows[-1]["N"] == str(10**12)
        true = np.array([float(r["rate_true"]) for r in rows])
        est = np.array([float(r["rate_estimated"]) for r in rows])
        assert true[0] == 0.0
        assert abs(true[-1] - 0.7) < 1e-3
        both = (true > 0) & (est > 0)
        assert np.allclose(true[both] - est[both], 0.1, atol=1e-12, rtol=0)


@pytest.mark.parametrize(
    "args",
    [
        ["surface", "--grid", "64", "--kind", "diff"],
        ["entropies", "--samples", "20000", "--seed", "3"],
        ["gap-curve"],
        ["qkd-impact"],
        ["qkd-rate"],
    ],
    ids=lambda a: a[0],
)
def test_byte_identical(tmp_path, args):
    code_a, a = run(tmp_path, *args, name="a.csv")
    code_b, b = run(tmp_path, *args, name="b.csv")
    assert code_a == code_b == 0
    assert a.read_bytes() == b.read_bytes()


def test_override_diagnostics_on_stderr(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "hybrid_entropy", "qkd-impact", "--set", "h2=50"],
        capture_output=True, text=True, check=True,
    )
    assert "override h2=50" in proc.stderr
    assert "override" not in proc.stdout


def test_module_entry_point_stdout():
    proc = subprocess.run(
        [sys.executable, "-m", "hybrid_entropy", "qkd-impact"], capture_output=True, text=True, check=True
    )
    assert proc.stdout.splitlines()[0].startswith("h2,delta,")
    assert proc.stderr == ""


def test_n_jobs_does_not_change_output(tmp_path):
    _, a = run(tmp_path, "entropies", "--samples", "140000", name="a.csv")
    _, b = run(tmp_path, "entropies", "--samples", "140000", "--n-jobs", "3", name="b.csv")
    assert a.read_bytes() == b.read_bytes()
