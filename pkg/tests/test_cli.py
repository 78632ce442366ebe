import json
import subprocess
import sys

import pytest

from schmidtlab.cli import RunConfig, main, read_config_file, resolve_config, schmidt_csv


def _csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# run ")
    return lines[1:]


def test_volumes(tmp_path):
    assert main(["volumes", "--primes", "2", "--max-height", "16", "--out", str(tmp_path)]) == 0
    rows = _csv(tmp_path / "volumes.csv")
    assert rows == ["h,sphere_volume,v_S", "1,1,1", "2,6,7", "4,24,31", "8,96,127", "16,384,511"]
    manifest = [json.loads(l) for l in (tmp_path / "manifest.jsonl").read_text().splitlines()]
    assert len(manifest) == 1 and manifest[0]["status"] == 0
    assert manifest[0]["config"]["primes"] == "2" and "numpy" in manifest[0]["versions"]


def test_manifest_append_only(tmp_path):
    for _ in range(2):
        main(["volumes", "--max-height", "4", "--out", str(tmp_path)])
    assert len((tmp_path / "manifest.jsonl").read_text().splitlines()) == 2


def test_modulus_sharing_factor_is_config_error(tmp_path, capsys):
    assert main(["enumerate", "--primes", "2", "--mod", "2", "--out", str(tmp_path)]) == 2
    assert "--mod" in capsys.readouterr().err


@pytest.mark.parametrize("argv,field", [
    (["volumes", "--primes", "4"], "--primes"),
    (["volumes", "--kappa", "0.9"], "--kappa"),
    (["enumerate", "--radius", "-1"], "--radius"),
    (["enumerate", "--center", "2,0;0,2"], "--center"),
    (["enumerate", "--mod", "3", "--residues", "1,1,1,1"], "--residues"),
])
def test_field_level_errors(tmp_path, capsys, argv, field):
    assert main(argv + ["--out", str(tmp_path)]) == 2
    assert field in capsys.readouterr().err


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("primes = 3\nmax_height = 9\nseed = 5\n")
    assert read_config_file(str(cfg)) == {"primes": "3", "max_height": 9, "seed": 5}
    c = resolve_config(["volumes", "--config", str(cfg), "--max-height", "27"])
    assert c.primes == "3" and c.max_height == 27 and c.seed == 5
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nprimez = 3\n")
    assert main(["volumes", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_enumerate_and_count(tmp_path):
    assert main(["enumerate", "--max-height", "4", "--radius", "0.5", "--out", str(tmp_path)]) == 0
    rows = _csv(tmp_path / "enumerate.csv")
    assert rows[0] == "h,point" and rows[1] == '1,"1,0;0,1"'
    assert main(["count", "--T", "8", "--out", str(tmp_path)]) == 0
    rows = _csv(tmp_path / "count.csv")
    assert rows[0] == "T,N_T" and [r.split(",")[0] for r in rows[1:]] == ["1", "2", "4", "8"]


def test_discrepancy_and_sweep(tmp_path):
    common = ["--max-height", "16", "--radius", "0.5", "--samples", "100000", "--out", str(tmp_path)]
    assert main(["discrepancy"] + common) == 0
    rows = _csv(tmp_path / "discrepancy.csv")
    assert rows[0] == "h,count,v_S,main_term,D,envelope,regime,seed" and len(rows) == 6
    assert main(["discrepancy", "--regime", "mean_square", "--n-x", "2"] + common) == 0
    assert len(_csv(tmp_path / "discrepancy.csv")) == 1 + 2 * 5
    sweep = ["sweep", "--mod", "3", "--residues", "identity", "--radius", "0.3,0.5", "--max-height", "16"]
    assert main(sweep + ["--samples", "100000", "--out", str(tmp_path)]) == 0
    rows = _csv(tmp_path / "sweep.csv")
    assert len(rows) == 3 and rows[0].endswith("predicted_error")


def test_selftest_exit_zero(tmp_path, capsys):
    assert main(["selftest", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 13


def test_calibrate(tmp_path):
    assert main(["calibrate", "--radius", "10", "--samples", "200000", "--out", str(tmp_path)]) == 0
    rows = _csv(tmp_path / "calibrate.csv")
    assert rows[0].startswith("kappa,")


def test_schmidt_csv_identical_across_pools():
    cfg = RunConfig("schmidt", T=16, n_x=2, samples=100_000, seed=3)
    assert schmidt_csv(cfg, cfg.digest(), threads=1) == schmidt_csv(cfg, cfg.digest(), threads=3)


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "schmidtlab.cli", "volumes", "--max-height", "2", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert (tmp_path / "volumes.csv").exists()
