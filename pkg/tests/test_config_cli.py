import csv
import io
import subprocess
import sys
from pathlib import Path

import pytest

from carqlink.cli import main
from carqlink.config import SweepSpec, load_scenario, load_sweep, scenario_from_dict
from carqlink.errors import ConfigParseError, ValidationError
from carqlink.reports import run_scenario, run_sweep

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

CONST = """
p_bar_db: 10
mu_db: 0
scheme: const-power-carq
"""


def _write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_shipped_configs_parse():
    spec = load_scenario(CONFIGS / "scenario_10db.yaml")
    assert spec.scheme == "adaptive-power-carq"
    assert spec.scenario.p_bar == pytest.approx(10.0)
    assert spec.simulate is None
    assert load_sweep(CONFIGS / "sweep_power.yaml").grid[-1] == 20
    assert load_sweep(CONFIGS / "sweep_target_per.yaml").variable == "p_t1"


def test_unknown_key():
    with pytest.raises(ConfigParseError, match="p_bar"):
        scenario_from_dict({"p_bar": 10})


def test_bad_scheme_and_variant():
    with pytest.raises(ValidationError):
        scenario_from_dict({"scheme": "magic"})
    with pytest.raises(ValidationError):
        scenario_from_dict({"omega_variant": "other"})


def test_relative_table_path(tmp_path):
    from carqlink.amc import load_mode_table

    (tmp_path / "t.yaml").write_text(
        "packet_bits: 1080\nmodes:\n  - {rate_bits_per_symbol: 1.0, a: 90.2514, g: 3.4998, gamma_p_db: 1.0942}\n"
    )
    spec = load_scenario(_write(tmp_path, "mode_table: t.yaml\n"))
    assert len(spec.scenario.table) == 1
    assert spec.scenario.table[0].fit_a == load_mode_table()[1].fit_a


def test_user_start_in_db():
    doc = {"optimizer": {"user_thresholds_db": {"source": [1, 2, 5, 8, 11, 15], "relay": [1, 2, 5, 8, 11, 15]}}}
    assert scenario_from_dict(doc).optimizer.initial_thresholds == "user"


def test_sweep_validation():
    base = scenario_from_dict({})
    with pytest.raises(ValidationError):
        SweepSpec(base, "p_bar_db", [], ("const-power-carq",))
    with pytest.raises(ValidationError):
        SweepSpec(base, "p_bar_db", [4, 2], ("const-power-carq",))
    with pytest.raises(ValidationError):
        SweepSpec(base, "p_bar_db", [2, 4], ())


def test_run_scenario_text():
    text, report, cmp = run_scenario(scenario_from_dict({"scheme": "const-power-carq"}))
    assert "eta=1.72" in text
    assert cmp is None


def test_sweep_csv_rows_in_grid_order(tmp_path):
    path = _write(
        tmp_path,
        "scenario: {mu_db: 0}\nvariable: p_bar_db\ngrid: [4, 8, 12]\nschemes: [const-power-carq, direct-transmission]\n",
    )
    text = run_sweep(load_sweep(path))
    assert "\r\n" in text
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [(float(r["value"]), r["scheme"]) for r in rows] == [
        (v, s) for v in (4, 8, 12) for s in ("const-power-carq", "direct-transmission")
    ]
    assert all(r["feasibility"] == "ok" for r in rows)
    const = [float(r["eta"]) for r in rows if r["scheme"] == "const-power-carq"]
    assert const == sorted(const)


def test_sweep_parallel_matches_serial(tmp_path):
    doc = "scenario: {mu_db: 0}\nvariable: mu_db\ngrid: [-3, 0, 3]\nschemes: [const-power-carq]\n"
    serial = run_sweep(load_sweep(_write(tmp_path, doc)))
    parallel = run_sweep(load_sweep(_write(tmp_path, doc + "n_jobs: 2\n", "p.yaml")))
    assert serial == parallel


def test_fixed_pt1_sweep_marks_bad_points(tmp_path):
    doc = "scenario: {p_loss: 0.01}\nvariable: p_t1\ngrid: [0.005, 0.1]\nschemes: [const-power-carq]\n"
    rows = list(csv.DictReader(io.StringIO(run_sweep(load_sweep(_write(tmp_path, doc))))))
    assert rows[0]["feasibility"].startswith("error")
    assert rows[1]["feasibility"] == "ok"


def test_cli_optimize(tmp_path, capsys):
    assert main(["optimize", "--scenario", _write(tmp_path, CONST)]) == 0
    assert "p_t1_star=" in capsys.readouterr().out


def test_cli_out_file(tmp_path):
    out = tmp_path / "o.txt"
    assert main(["optimize", "--scenario", _write(tmp_path, CONST), "--out", str(out)]) == 0
    assert out.read_text().startswith("scenario=")


@pytest.mark.parametrize(
    "doc,code",
    [
        ("p_bar: 10\n", 2),
        ("modes: [\n", 2),
        ("p_loss: 2.0\n", 3),
        ("optimizer: {lambda_bracket: [0, 1.0e-9], lambda_cap: 1.0e-8, pt1_interval: [0.04, 0.06]}\n", 4),
    ],
)
def test_cli_exit_codes(tmp_path, doc, code, capsys):
    assert main(["optimize", "--scenario", _write(tmp_path, doc)]) == code
    assert capsys.readouterr().err.startswith("error:")


def test_cli_simulate_direct_transmission_rejected(tmp_path):
    assert main(["simulate", "--scenario", _write(tmp_path, "scheme: direct-transmission\n")]) == 3


def test_cli_simulate_writes_batches(tmp_path, capsys):
    batches = tmp_path / "b.csv"
    path = _write(tmp_path, CONST)
    assert main(["simulate", "--scenario", path, "--packets", "1e5", "--seed", "1", "--batch-csv", str(batches)]) == 0
    assert "any_flag=" in capsys.readouterr().out
    assert len(batches.read_text().splitlines()) == 101


def test_cli_check_table(capsys):
    assert main(["check-table"]) == 0
    out = capsys.readouterr().out
    assert "modes=6" in out and "ordered_slopes_all_targets=False" in out


def test_cli_audit(tmp_path, capsys):
    assert main(["audit-quasiconcavity", "--scenario", _write(tmp_path, "p_bar_db: 10\n"), "--num", "12"]) == 0
    assert capsys.readouterr().out.startswith("local_maxima=1")


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "carqlink.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "check-table" in res.stdout
