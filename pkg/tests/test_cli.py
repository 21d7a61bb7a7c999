import json
from pathlib import Path

import numpy as np
import pytest
import scipy.integrate

from optomech_tomo.cli import main
from optomech_tomo.io import read_spectrum
from optomech_tomo.spectra import SystemParams, spectrum_emission
from optomech_tomo.core import thermal_distribution

from conftest import APPENDIX_P, APPENDIX_P_EXACT, APPENDIX_POINTS, APPENDIX_RHO

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(*argv):
    return main([str(a) for a in argv])


def test_synth_appendix_diagonal(tmp_path):
    out = tmp_path / "q.txt"
    assert run("synth", "-c", CONFIGS / "appendix_diagonal.yaml", "-o", out) == 0
    spec, sigma = read_spectrum(out)
    assert sigma is None
    order = np.argsort(APPENDIX_POINTS)
    expect = spectrum_emission(thermal_distribution(1.0, 60), APPENDIX_POINTS[order],
                               SystemParams(2.0, 0.1), 60).values
    np.testing.assert_allclose(spec.values, expect, rtol=1e-15)
    assert spec.provenance["config"]["numerics"]["n_d_reference"] == 60


def test_reconstruct_appendix_diagonal_end_to_end(tmp_path):
    cfg = CONFIGS / "appendix_diagonal.yaml"
    run("synth", "-c", cfg, "-o", tmp_path / "q.txt")
    assert run("reconstruct", "-c", cfg, "-s", tmp_path / "q.txt", "--reference", "config",
               "-o", tmp_path / "r.json") == 0
    res = json.loads((tmp_path / "r.json").read_text())
    np.testing.assert_allclose(res["solution"], APPENDIX_P, atol=1e-4)
    assert res["fidelity"] == pytest.approx(0.995, abs=1e-3)
    assert res["provenance"]["plan"]["strategy"] == "explicit"
    assert res["condition_number"] > 1 and res["residual"] < 1e-12


def test_reconstruct_appendix_general_end_to_end(tmp_path):
    cfg = CONFIGS / "appendix_general.yaml"
    run("synth", "-c", cfg, "-o", tmp_path / "s.txt")
    assert run("reconstruct", "-c", cfg, "-s", tmp_path / "s.txt", "-o", tmp_path / "g.json") == 0
    res = json.loads((tmp_path / "g.json").read_text())
    rho = np.array(res["solution_real"]) + 1j * np.array(res["solution_imag"])
    np.testing.assert_allclose(rho, APPENDIX_RHO, atol=1e-4)
    assert res["hermiticity_deviation"] < 1e-8


def test_reconstruct_is_row_order_independent(tmp_path):
    cfg = CONFIGS / "appendix_diagonal.yaml"
    run("synth", "-c", cfg, "-o", tmp_path / "q.txt")
    lines = (tmp_path / "q.txt").read_text().splitlines()
    rows = lines[4:]
    rng = np.random.default_rng(0)
    (tmp_path / "shuffled.txt").write_text(
        "\n".join(lines[:4] + [rows[i] for i in rng.permutation(len(rows))]) + "\n")
    for name in ("q", "shuffled"):
        run("reconstruct", "-c", cfg, "-s", tmp_path / f"{name}.txt", "-o", tmp_path / f"{name}.json")
    a = json.loads((tmp_path / "q.json").read_text())
    b = json.loads((tmp_path / "shuffled.json").read_text())
    assert a["solution"] == b["solution"]


def test_missing_plan_points_are_listed(tmp_path, capsys):
    run("synth", "-c", CONFIGS / "appendix_general.yaml", "-o", tmp_path / "s.txt")
    capsys.readouterr()
    code = run("reconstruct", "-c", CONFIGS / "appendix_diagonal.yaml", "-s", tmp_path / "s.txt")
    assert code == 5
    err = capsys.readouterr().err
    assert "-0.238903" in err and "4.92128" in err


def test_ill_posed_exit_code(tmp_path):
    cfg = CONFIGS / "coupling_g0_1p5.yaml"
    run("synth", "-c", cfg, "--g0", 0.1, "-o", tmp_path / "w.txt")
    assert run("reconstruct", "-c", cfg, "--g0", 0.1, "-s", tmp_path / "w.txt") == 3


def test_synth_is_deterministic(tmp_path):
    cfg = CONFIGS / "density_three_level.yaml"
    for name in ("a", "b"):
        run("synth", "-c", cfg, "-o", tmp_path / f"{name}.txt")
    a = (tmp_path / "a.txt").read_text().splitlines()
    b = (tmp_path / "b.txt").read_text().splitlines()
    assert a[1].startswith("# created:")
    assert a[:1] + a[2:] == b[:1] + b[2:]


def test_result_files_differ_only_in_timestamp(tmp_path):
    cfg = CONFIGS / "appendix_diagonal.yaml"
    run("synth", "-c", cfg, "-o", tmp_path / "q.txt")
    for name in ("a", "b"):
        run("reconstruct", "-c", cfg, "-s", tmp_path / "q.txt", "-o", tmp_path / f"{name}.json")
    a = [l for l in (tmp_path / "a.json").read_text().splitlines() if '"created"' not in l]
    b = [l for l in (tmp_path / "b.json").read_text().splitlines() if '"created"' not in l]
    assert a == b


def test_scan_commands(tmp_path):
    assert run("scan", "-c", CONFIGS / "scan_maximally_mixed.yaml", "-o", tmp_path / "m.txt") == 0
    rows = [l.split() for l in (tmp_path / "m.txt").read_text().splitlines()
            if not l.startswith("#")]
    stable = {int(r[0]): r[1] == "1" for r in rows}
    assert [n for n in sorted(stable) if stable[n]][0] == 5
    assert not any(stable[n] for n in range(1, 5))
    assert run("scan", "-c", CONFIGS / "scan_maximally_mixed.yaml", "--state", "fock:0",
               "--N-max", 4, "-o", tmp_path / "f.txt") == 0
    meta = json.loads((tmp_path / "f.txt").read_text().splitlines()[2][len("# meta:"):])
    assert meta["converged_N"] == 1
    assert run("scan", "-c", CONFIGS / "scan_thermal.yaml", "-o", tmp_path / "t.txt") == 4
    rows = {int(l.split()[0]): l.split() for l in (tmp_path / "t.txt").read_text().splitlines()
            if not l.startswith("#")}
    for N, target in ((3, 0.841), (6, 0.980), (8, 0.993)):
        assert float(rows[N][2]) == pytest.approx(target, abs=0.03)


def test_fidelity_command(tmp_path, capsys):
    (tmp_path / "a.json").write_text(json.dumps({"populations": list(APPENDIX_P)}))
    (tmp_path / "b.json").write_text(json.dumps({"populations": list(APPENDIX_P_EXACT)}))
    assert run("fidelity", tmp_path / "a.json", tmp_path / "b.json") == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.995, abs=1e-3)


def test_usage_errors(tmp_path):
    assert run("synth") == 2
    assert run("bogus") == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("system:\n  g0_over_wm: 1\n  gamma_c_over_wm: 0.1\n  g0: 1\n")
    assert run("synth", "-c", bad) == 2
    assert run("synth", "-c", tmp_path / "missing.yaml") == 5


def test_validate_guards(tmp_path, capsys):
    cfg = CONFIGS / "validate_appendix.yaml"
    # dk = 0.02 > gamma_c / 10
    assert run("validate", "-c", cfg, "--spacing", 0.02) == 2
    assert "gamma_c/10" in capsys.readouterr().err
    assert run("validate", "-c", cfg, "--oracle-n-d", 400) == 6


def test_validate_zero_coupling(tmp_path):
    out = tmp_path / "v.json"
    code = run("validate", "-c", CONFIGS / "validate_appendix.yaml", "--g0", 0.0,
               "--window", 20, "--oracle-n-d", 2, "--threshold", 0.005, "-o", out)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["linf_relative"] <= 0.005


@pytest.mark.slow
def test_synth_scattering_conserves_probability(tmp_path):
    out = tmp_path / "sc.txt"
    code = run("synth", "-c", CONFIGS / "scattering_narrow_center.yaml", "--state", "fock:0",
               "--grid=-19.9,19.9,7961", "-o", out)
    assert code == 0
    spec, _ = read_spectrum(out)
    assert spec.provenance["engine"] == "oracle" and spec.provenance["variant"] == "scattering"
    assert scipy.integrate.trapezoid(spec.values, spec.detunings) == pytest.approx(1.0, abs=0.02)
