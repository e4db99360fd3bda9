from __future__ import annotations

import json
from pathlib import Path

import pytest

from ddsde import cli
from ddsde.config import ExperimentConfig

ROOT = Path(__file__).resolve().parent.parent

SMALL = """
name = "small"
seed = 3
engines = {engines}
diagnostics = {diagnostics}

[drift]
name = "{drift}"

[initial]
kind = "gaussian"
mean = [0.0]
variance = 0.5

[grid]
lower = [-12.0]
upper = [12.0]
cells = [1024]

[time]
T = 0.5
N = [8, 16, 32, 64]
snapshots = [0.25]

[particles]
M = 4000

[fpe]
dx = 0.09375

[asserts]
{asserts}
"""


def _config(tmp_path, engines='["density"]', diagnostics="[]", drift="tanh_density", asserts="",
            name="c.toml"):
    path = tmp_path / name
    path.write_text(SMALL.format(engines=engines, diagnostics=diagnostics, drift=drift,
                                 asserts=asserts))
    return path


def test_zero_drift_config_passes(tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(["run", "--config", str(ROOT / "configs" / "zero_drift.toml"), "--out", str(out)])
    assert code == cli.EXIT_OK
    assert "PASS exact N=64" in capsys.readouterr().out
    manifest = cli.load_manifest(out)
    assert manifest["checks"][0]["passed"]
    assert {a["path"] for a in manifest["artifacts"]} >= {"config.toml", "report.txt"}


def test_validate_verb(tmp_path, capsys):
    assert cli.main(["validate", "--config", str(_config(tmp_path))]) == cli.EXIT_OK
    assert "config ok" in capsys.readouterr().out


def test_unknown_drift_exits_2(tmp_path, capsys):
    code = cli.main(["validate", "--config", str(_config(tmp_path, drift="tanh_densty"))])
    assert code == cli.EXIT_INVALID
    assert "drift.name" in capsys.readouterr().err


def test_diagnostic_needs_engine(tmp_path, capsys):
    path = _config(tmp_path, diagnostics='["moments"]')
    assert cli.main(["validate", "--config", str(path)]) == cli.EXIT_INVALID
    assert "needs engine(s) particles" in capsys.readouterr().err


def test_failed_certificate_exits_1(tmp_path, capsys):
    # a threshold below 1 cannot be met by any sweep
    path = _config(tmp_path, diagnostics='["domination"]', asserts="stability = 0.5")
    code = cli.main(["run", "--config", str(path), "--out", str(tmp_path / "r")])
    assert code == cli.EXIT_ASSERT
    captured = capsys.readouterr()
    assert "FAIL gaussian-domination" in captured.out
    assert "gaussian-domination: gaussian-domination" not in captured.out
    text, ok = cli.report([tmp_path / "r"])
    assert not ok and "FAILED at N=" in text


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("full")
    path = _config(tmp, engines='["all"]',
                   diagnostics='["convergence", "domination", "hoelder", "weak-residual", "moments", '
                               '"agreement", "separation"]',
                   asserts="reference_l1 = 0.05\nagreement_l1 = 0.2")
    out = tmp / "run"
    code = cli.main(["run", "--config", str(path), "--out", str(out)])
    return code, out


def test_full_run_writes_artifacts(full_run):
    code, out = full_run
    manifest = cli.load_manifest(out)
    names = {c["name"] for c in manifest["checks"]}
    assert {"l1-convergence", "gaussian-domination", "hoelder-space", "moment-increment",
            "weak-residual", "separation"} <= names
    assert (out / "certificates.csv").read_text().startswith("claim,N,constant")
    assert manifest["terminal"] and manifest["trajectory"]
    assert code == cli.EXIT_OK


def test_compare_with_itself_is_zero(full_run, capsys):
    _, out = full_run
    assert cli.main(["compare", str(out), str(out)]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["value"] == 0.0
    res = cli.compare(out, out, "weak-residual")
    assert res["value"]["a"] == res["value"]["b"]


def test_report_to_file(full_run, tmp_path):
    _, out = full_run
    dest = tmp_path / "rep.txt"
    cli.main(["report", str(out), "--out", str(dest)])
    assert "[gaussian-domination]" in dest.read_text()


def test_corrupt_manifest_exits_2(full_run, tmp_path, capsys):
    import shutil

    _, out = full_run
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    (copy / "report.txt").write_text("tampered")
    assert cli.main(["report", str(copy)]) == cli.EXIT_INVALID
    assert "checksum mismatch" in capsys.readouterr().err
    (copy / cli.MANIFEST).write_text("{")
    assert cli.main(["report", str(copy)]) == cli.EXIT_INVALID


def test_compare_incompatible_grids(tmp_path, capsys):
    from ddsde import formats
    from ddsde import grid as gd
    import numpy as np

    a = formats.write_grid(tmp_path / "a.ddg", gd.GridDensity(gd.GridSpec.box(1.0, 8), np.full(8, 0.5)))
    b = formats.write_grid(tmp_path / "b.ddg", gd.GridDensity(gd.GridSpec.box(2.0, 8), np.full(8, 0.25)))
    assert cli.main(["compare", str(a), str(b)]) == cli.EXIT_INVALID
    assert "incompatible grids" in capsys.readouterr().err


def test_missing_run_dir(tmp_path):
    assert cli.main(["report", str(tmp_path / "nothing")]) == cli.EXIT_INVALID


def test_seed_override_changes_digest(tmp_path):
    path = _config(tmp_path)
    args = cli._parser().parse_args(["validate", "--config", str(path), "--seed", "99"])
    cfg = cli._load_config(args)
    assert cfg.seed == 99
    assert cfg.digest() != ExperimentConfig.load(path).digest()
