import numpy as np
import pytest

from hydrisim import cli
from hydrisim.cli import Ramp, parse_config, parse_ramp
from hydrisim.constitutive import desk_default_material
from hydrisim.errors import ConfigError


def write_cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# ---------------------------------------------------------------------------
# ramp expressions


def test_ramp_parses_mixed_terms():
    r = parse_ramp("0.3 + 0.2*x - t", "xt", "test")
    assert (r.const, r.cx, r.ct) == (0.3, 0.2, -1.0)
    coords = np.array([[0.0], [1.0], [2.0]])
    assert np.allclose(r(coords, 2.0), [-1.7, -1.5, -1.3])


def test_ramp_bare_variable_and_constant():
    r = parse_ramp("x", "xyt", "test")
    assert (r.const, r.cx, r.cy, r.ct) == (0.0, 1.0, 0.0, 0.0)
    assert parse_ramp("-2.5", "x", "test").const == -2.5
    assert parse_ramp("1e-3", "x", "test").is_constant


def test_ramp_rejects_garbage():
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_ramp("0.3 ** x", "xt", "test")
    with pytest.raises(ConfigError, match="missing"):
        parse_ramp("1.0 2.0", "xt", "test")
    with pytest.raises(ConfigError, match="not allowed"):
        parse_ramp("0.1*y", "xt", "test")
    with pytest.raises(ConfigError, match="empty"):
        parse_ramp("   ", "xt", "test")


def test_ramp_disallows_time_where_spatial_only():
    with pytest.raises(ConfigError, match="not allowed"):
        parse_ramp("0.5 + 0.1*t", "x", "[initial] m0")


# ---------------------------------------------------------------------------
# config files


def test_minimal_config_uses_desk_defaults(tmp_path):
    path = write_cfg(tmp_path, "[domain]\ndim = 1\n\n[time]\nT = 0.01\n")
    cfg = parse_config(path)
    assert cfg.resolution == (50,)
    assert cfg.lengths == (1.0,)
    assert cfg.tau == 1e-3
    assert cfg.material == desk_default_material(1)
    assert cfg.h_s is None and cfg.f is None


def test_unknown_key_suggests_spelling(tmp_path):
    path = write_cfg(tmp_path, "[material]\nlamda = 0.01\n")
    with pytest.raises(ConfigError, match="lambda"):
        parse_config(path)


def test_unknown_section_rejected(tmp_path):
    path = write_cfg(tmp_path, "[materials]\nk = 10\n")
    with pytest.raises(ConfigError, match="materials"):
        parse_config(path)


def test_missing_file_rejected():
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config("/nonexistent/nowhere.ini")


def test_config_step_bound_checked_at_parse_time(tmp_path):
    # desk material is convex in m, so the threshold collapses to T
    path = write_cfg(tmp_path, "[time]\nT = 0.01\ntau = 0.02\n")
    with pytest.raises(ConfigError, match=r"\(4\.6\)"):
        parse_config(path)


def test_material_scalar_moduli_and_overrides(tmp_path):
    path = write_cfg(tmp_path, (
        "[material]\nE = 4.0\nD = 1.0\nk = 7.0\nr = 0.02\n"
        "heat_law = linear\nc0 = 1.5\n"))
    cfg = parse_config(path)
    mat = cfg.material
    assert mat.lame == (0.0, 2.0)
    assert mat.visc == (0.0, 0.5)
    assert mat.coupling_k == 7.0
    assert mat.threshold_r == 0.02
    assert mat.heat_law == "linear" and mat.c0 == 1.5


def test_material_rejects_both_modulus_forms(tmp_path):
    path = write_cfg(tmp_path, "[material]\nE = 4.0\nlame = 1.0, 2.0\n")
    with pytest.raises(ConfigError, match="not both"):
        parse_config(path)


def test_initial_ramps_and_sided_sources(tmp_path):
    path = write_cfg(tmp_path, (
        "[domain]\ndim = 1\nresolution = 11\n\n"
        "[time]\nT = 0.002\ntau = 1e-3\n\n"
        "[initial]\nchi0 = 0.2 + 0.1*x\n\n"
        "[sources]\nh_s = left: 0.5 right: 0.1\nq = 0.3 + 0.2*t\n"))
    cfg = parse_config(path)
    coords = np.array([[0.0], [1.0]])
    assert np.allclose(cfg.chi0(coords), [0.2, 0.3])
    assert cfg.h_s == {"left": 0.5, "right": 0.1}
    assert cfg.q(coords, 1.0) == pytest.approx([0.5, 0.5])


def test_vector_traction_components(tmp_path):
    path = write_cfg(tmp_path, (
        "[domain]\ndim = 2\nresolution = 4, 4\n\n"
        "[time]\nT = 0.002\ntau = 1e-3\n\n"
        "[sources]\nf_s = right: 0.1; -0.2\n"))
    cfg = parse_config(path)
    fs = cfg.f_s["right"]
    assert np.allclose(fs(0.0), [0.1, -0.2])


def test_sided_source_bad_side_named(tmp_path):
    path = write_cfg(tmp_path, "[sources]\nh_s = top: 0.5\n")
    with pytest.raises(ConfigError, match="top"):
        parse_config(path)


# ---------------------------------------------------------------------------
# commands, via the real argv entry point


def run_main(monkeypatch, *argv):
    monkeypatch.setattr("sys.argv", ["hydrisim", *argv])
    return cli.main()


SMALL = ("[domain]\nresolution = 12\n\n[time]\nT = 0.004\ntau = 1e-3\n\n"
         "[sources]\nh_s = left: 0.5\n\n[output]\nevery_n = 2\n")


def test_simulate_writes_artifacts(tmp_path, monkeypatch, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    out = tmp_path / "out"
    assert run_main(monkeypatch, "simulate", cfg, "--out", str(out)) == 0
    text = capsys.readouterr().out
    assert "completed 4 steps" in text
    assert (out / "energy.csv").exists()
    assert (out / "fields_000000.csv").exists()
    assert (out / "fields_000004.csv").exists()
    assert (out / "run_manifest.json").exists()


def test_simulate_reruns_byte_identical(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, SMALL)
    run_main(monkeypatch, "simulate", cfg, "--out", str(tmp_path / "a"))
    run_main(monkeypatch, "simulate", cfg, "--out", str(tmp_path / "b"))
    assert ((tmp_path / "a" / "energy.csv").read_bytes()
            == (tmp_path / "b" / "energy.csv").read_bytes())


def test_validate_reports_named_checks(tmp_path, monkeypatch, capsys):
    cfg = write_cfg(tmp_path, "[time]\nT = 0.01\n")
    assert run_main(monkeypatch, "validate", cfg) == 0
    text = capsys.readouterr().out
    assert "(3.1a)" in text
    assert "all checks passed" in text


def test_validate_fails_steep_swelling(tmp_path, monkeypatch, capsys):
    # a1 = 1 makes the swelling curve steep enough to break convexity
    cfg = write_cfg(tmp_path, "[material]\na1 = 1.0\n")
    code = run_main(monkeypatch, "validate", cfg)
    assert code == 2
    assert "(3.1a)" in capsys.readouterr().out


def test_refine_command_prints_ratios(tmp_path, monkeypatch, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    assert run_main(monkeypatch, "refine", cfg, "--levels", "2") == 0
    text = capsys.readouterr().out
    assert "taus:" in text
    assert "grad_mu" in text
    assert "nu=1 defects:" in text
    assert "apriori norm max variation" in text


def test_selftest_passes(monkeypatch, capsys):
    assert run_main(monkeypatch, "selftest") == 0
    text = capsys.readouterr().out
    assert "selftest ok" in text
    assert "suite" in text and "passed" in text


def test_main_maps_config_errors_to_exit_2(monkeypatch, capsys):
    assert run_main(monkeypatch, "simulate", "/no/such/file.ini") == 2
    assert "error:" in capsys.readouterr().err


def test_constant_ramp_collapses_to_float(tmp_path):
    path = write_cfg(tmp_path, "[sources]\nh_s = 0.5\n")
    cfg = parse_config(path)
    # untagged scalar applies to every side of the 1D box
    assert cfg.h_s == {"left": 0.5, "right": 0.5}


def test_ramp_time_decay_callable():
    r = Ramp(const=1.0, ct=-2.0)
    assert r(None, 0.25) == 0.5
    assert not r.is_constant
    assert not r.spatial_only()
