import subprocess
import sys

import pytest

from grss.cli import main
from grss.sampling import read_dataset


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_sample_writes_fifteen_observations(tmp_path, capsys):
    path = tmp_path / "d.txt"
    code, out, err = run(capsys, "sample", "--family", "normal", "--mu", "5", "--sigma", "3",
                         "--m", "3", "--r", "5", "--seed", "42", "-o", str(path))
    assert code == 0 and out == "" and err == ""
    lines = path.read_text().splitlines()
    assert lines[0].split()[:2] == ["m=3", "r=5"]
    assert len(lines[1:]) == 15
    data = read_dataset(path)
    assert len(data.x) == 15


def test_sample_is_byte_identical(tmp_path, capsys):
    args = ["sample", "--family", "laplace", "--m", "4", "--r", "3", "--seed", "9"]
    run(capsys, *args, "-o", str(tmp_path / "a"))
    run(capsys, *args, "-o", str(tmp_path / "b"))
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_sample_without_seed_echoes_it(capsys):
    code, out, _ = run(capsys, "sample", "--family", "normal", "--m", "2", "--r", "2")
    assert code == 0 and "seed=" in out.splitlines()[0]


def test_fit_roundtrip(tmp_path, capsys):
    path = tmp_path / "d.txt"
    run(capsys, "sample", "--family", "logistic", "--mu", "5", "--sigma", "3",
        "--m", "3", "--r", "5", "--seed", "1", "-o", str(path))
    code, out, _ = run(capsys, "fit", "--input", str(path), "--family", "logistic")
    assert code == 0
    report = dict(line.split("=", 1) for line in out.splitlines())
    assert list(report) == ["mode", "family", "mu_hat", "sigma_hat", "loglik",
                            "converged", "se_mu", "se_sigma"]
    assert report["converged"] == "true" and float(report["sigma_hat"]) > 0
    code, out, _ = run(capsys, "fit", "--input", str(path), "--family", "logistic", "--mode", "rss")
    assert code == 0 and "mode=rss" in out


def test_info_delta_line(capsys):
    code, out, _ = run(capsys, "info", "--family", "normal", "--sigma", "1", "--m", "1", "--r", "1",
                       "--rule", "chen", "--param", "variance")
    assert code == 0
    assert "delta = [[0.480538, 0],[0, 0.0675176]]" in out.splitlines()
    code, out, _ = run(capsys, "info", "--family", "normal", "--sigma", "1", "--m", "1", "--r", "1")
    assert "delta = [[0.480538, 0],[0, 0.27007]]" in out.splitlines()


def test_info_exponential_reports_infinite_location(capsys):
    code, out, _ = run(capsys, "info", "--family", "exponential", "--m", "3", "--r", "2")
    assert code == 0
    assert "se_mu_grss=0" in out and "inf" in out


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "simulate", "--family", "normal", "--m", "3", "--r", "5")[0] == 2
    assert run(capsys, "info", "--family", "cauchy", "--m", "3", "--r", "5")[0] == 2
    assert run(capsys, "info", "--family", "normal", "--m", "0", "--r", "5")[0] == 2
    assert run(capsys, "info", "--family", "normal", "--m", "2", "--r", "1", "--sigma", "-1")[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "fit", "--input", str(tmp_path / "missing"), "--family", "normal")[0] == 2
    code, _, err = run(capsys, "tables", "--seed", "1", "--sigmas", "7")
    assert code == 2 and "usage error" in err


def test_numeric_failure_names_stage(tmp_path, capsys):
    path = tmp_path / "flat.txt"
    path.write_text("m=2 r=1\n1 1 3.0 1\n1 2 3.0 2\n")
    out_path = tmp_path / "report.txt"
    code, out, err = run(capsys, "fit", "--input", str(path), "--family", "normal", "-o", str(out_path))
    assert code == 1
    assert err.startswith("grss: stage fit:")
    assert not out_path.exists()
    assert list(tmp_path.iterdir()) == [path]


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# info settings\nfamily = normal\nm = 1\nr = 1\nsigma=1\nparam = variance\n")
    code, out, _ = run(capsys, "info", "--config", str(cfg))
    assert code == 0 and "0.0675176" in out
    code, out, _ = run(capsys, "info", "--config", str(cfg), "--param", "scale")
    assert "0.27007" in out
    cfg.write_text("family = normal\nm = 1\nr = 1\ncolour = red\n")
    assert run(capsys, "info", "--config", str(cfg))[0] == 2
    cfg.write_text("subcommand = fit\nfamily = normal\n")
    assert run(capsys, "info", "--config", str(cfg), "--m", "1", "--r", "1")[0] == 2


def test_simulate_identical_across_workers(tmp_path, capsys):
    base = ["simulate", "--family", "normal", "--mu", "5", "--sigma", "3", "--m", "3", "--r", "5",
            "--replicates", "30", "--seed", "7"]
    for name, workers in (("a", "1"), ("b", "1"), ("c", "3")):
        assert run(capsys, *base, "--workers", workers, "-o", str(tmp_path / name))[0] == 0
    a = (tmp_path / "a").read_bytes()
    assert a == (tmp_path / "b").read_bytes() == (tmp_path / "c").read_bytes()
    assert a.decode().splitlines()[0] == "n,m,r,estimator,param,bias,mse,used,dropped"


def test_tables_writes_one_file_per_family_and_scale(tmp_path, capsys):
    code, _, _ = run(capsys, "tables", "--seed", "3", "--replicates", "2", "--families", "normal",
                     "--sigmas", "0.2", "--output-dir", str(tmp_path))
    assert code == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["normal_sigma0.2.csv"]
    assert len((tmp_path / files[0]).read_text().splitlines()) == 41


def test_fixtures_report(capsys):
    code, out, _ = run(capsys, "fixtures", "--bootstrap-b", "0", "--seed", "5")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# seed=5 B=0")
    assert len(lines) == 2 + 8
    assert any(line.startswith("normal,GRSS,") for line in lines)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "grss", "info", "--family", "normal",
                           "--m", "1", "--r", "1"], capture_output=True, text=True)
    assert proc.returncode == 0 and "delta = " in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "grss", "fit"], capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stdout == ""
