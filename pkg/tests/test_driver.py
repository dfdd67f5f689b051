import dataclasses
import json

import numpy as np
import pytest

from hydrisim.constitutive import desk_default_material, theta_of_w
from hydrisim.driver import (
    RunConfig,
    desk_default_config,
    interpolant_eval,
    refine_study,
    run,
)
from hydrisim.errors import ConfigError
from hydrisim.grid import lumped_mass, vector_lumped_mass


def desk_mat(**kw):
    return dataclasses.replace(desk_default_material(1), **kw)


# ---------------------------------------------------------------------------
# configuration and initial data


def test_invalid_initial_data_rejected():
    with pytest.raises(ConfigError, match="m0"):
        run(desk_default_config(resolution=(8,), T=0.002, m0=1.5))
    with pytest.raises(ConfigError, match="chi0"):
        run(desk_default_config(resolution=(8,), T=0.002, chi0=-0.1))
    with pytest.raises(ConfigError, match="theta0"):
        run(desk_default_config(resolution=(8,), T=0.002, theta0=-1.0))


def test_oversized_step_rejected_with_threshold():
    mat = desk_mat(double_well=26.0)
    cfg = desk_default_config(resolution=(8,), material=mat, T=0.05,
                              tau=0.01)
    with pytest.raises(ConfigError, match=r"\(4\.6\)"):
        run(cfg)


def test_initial_enthalpy_from_temperature():
    cfg = desk_default_config(resolution=(8,), T=0.002, theta0=3.0,
                              h_s=None)
    traj = run(cfg)
    mat = traj.mat
    # quadratic law: w0 = (c0/2) theta0^2 = 9, and theta recovers 3
    assert np.allclose(traj.states[0].w, 9.0, atol=1e-14)
    assert np.allclose(theta_of_w(mat, traj.states[0].m,
                                  traj.states[0].w), 3.0, atol=1e-12)


def test_equilibrium_run_is_constant():
    cfg = desk_default_config(resolution=(12,), T=0.005, h_s=None)
    traj = run(cfg)
    for st in traj.states:
        assert np.allclose(st.u, 0.0, atol=1e-13)
        assert np.array_equal(st.m, traj.states[0].m)
        assert np.allclose(st.chi, 0.0, atol=1e-14)
        assert np.allclose(st.w, 0.0, atol=1e-14)


def test_desk_run_invariants():
    traj = run(desk_default_config(resolution=(30,), T=0.02))
    assert traj.n_steps == 20
    for r in traj.rows:
        assert r.min_chi >= -1e-12
        assert r.min_w >= -1e-12
    assert all(np.all((s.m >= 0.0) & (s.m <= 1.0)) for s in traj.states)


def test_charging_scenario_moves_phase():
    # a strong influx builds chi near the left boundary until the
    # chemical driving k*a(chi) beats the activation threshold
    cfg = desk_default_config(resolution=(30,), T=0.05,
                              h_s={"left": 5.0})
    traj = run(cfg)
    m_final = traj.states[-1].m
    # rate viscosity alpha=1 keeps the transformation slow; what matters
    # is that the front end has clearly left m=0 while the far end has not
    assert float(m_final[0]) > 5e-3
    assert float(m_final[0]) > 10.0 * float(m_final[-1])
    gained = traj.rows[-1].mass_chi - traj.rows[0].mass_chi
    assert gained == pytest.approx(5.0 * traj.n_steps * traj.tau,
                                   abs=1e-12)


def test_nonmultiple_horizon_rounds_to_steps():
    cfg = desk_default_config(resolution=(8,), T=0.05, tau=4e-3, h_s=None)
    traj = run(cfg)
    assert traj.n_steps == 12
    assert traj.meta["T_effective"] == pytest.approx(0.048)


def test_body_force_momentum_budget():
    # Neumann boundaries: all internal forces are divergences, so the
    # discrete momentum grows by exactly the integrated body force
    cfg = desk_default_config(resolution=(15,), T=0.004, h_s=None, f=2.0)
    traj = run(cfg)
    Mv = vector_lumped_mass(traj.mesh)
    momentum = traj.mat.rho * float(
        np.sum(Mv * traj.states[-1].velocity(traj.tau)))
    assert momentum == pytest.approx(2.0 * traj.n_steps * traj.tau,
                                     rel=1e-8)


def test_axis_ramp_sources_accepted():
    cfg = desk_default_config(
        resolution=(12,), T=0.003, h_s=None,
        q=lambda x, t: 0.2 + 0.1 * x[:, 0] + 5.0 * t)
    traj = run(cfg)
    assert traj.rows[-1].heat_supplied > 0.0
    assert min(r.min_w for r in traj.rows) >= -1e-12


def test_two_dimensional_run_with_boundary_traction():
    cfg = RunConfig(dim=2, lengths=(1.0, 1.0), resolution=(6, 6),
                    T=0.003, tau=1e-3,
                    h_s={"left": 0.5}, f_s={"right": (0.1, 0.0)})
    traj = run(cfg)
    assert traj.states[-1].u.shape == (2 * traj.mesh.n_nodes,)
    for r in traj.rows:
        assert r.min_chi >= -1e-12
        assert r.min_w >= -1e-12
    gained = traj.rows[-1].mass_chi - traj.rows[0].mass_chi
    assert gained == pytest.approx(0.5 * 1.0 * traj.n_steps * traj.tau,
                                   abs=1e-12)


# ---------------------------------------------------------------------------
# interpolants


@pytest.fixture(scope="module")
def charged():
    return run(desk_default_config(resolution=(20,), T=0.01))


def test_interpolants_agree_at_nodes(charged):
    traj = charged
    for k in (0, 3, traj.n_steps):
        t = k * traj.tau
        aff = interpolant_eval(traj, "chi", "affine", t)
        back = interpolant_eval(traj, "chi", "backward", t)
        assert np.allclose(aff, getattr(traj.states[k], "chi"), atol=1e-14)
        assert np.array_equal(back, traj.states[k].chi)


def test_affine_midpoint_is_average(charged):
    traj = charged
    k = 4
    t = (k - 0.5) * traj.tau
    mid = interpolant_eval(traj, "w", "affine", t)
    expect = 0.5 * (traj.states[k - 1].w + traj.states[k].w)
    assert np.allclose(mid, expect, atol=1e-15)


def test_forward_holds_older_state(charged):
    traj = charged
    k = 5
    t = (k - 0.5) * traj.tau
    fwd = interpolant_eval(traj, "chi", "forward", t)
    assert np.array_equal(fwd, traj.states[k - 1].chi)


def test_velocity_affine_starts_at_initial_velocity(charged):
    traj = charged
    v0 = interpolant_eval(traj, "u", "velocity-affine", 0.0)
    assert np.allclose(v0, traj.states[0].velocity(traj.tau), atol=1e-15)


def test_velocity_interpolant_second_difference(charged):
    traj = charged
    tau = traj.tau
    k = 6
    t1, t2 = (k - 0.75) * tau, (k - 0.25) * tau
    v1 = interpolant_eval(traj, "u", "velocity-affine", t1)
    v2 = interpolant_eval(traj, "u", "velocity-affine", t2)
    accel = (v2 - v1) / (t2 - t1)
    u = [traj.states[j].u for j in (k, k - 1)]
    u_mm = traj.states[k - 2].u if k >= 2 else traj.states[0].u_prev
    expect = (u[0] - 2.0 * u[1] + u_mm) / tau ** 2
    assert np.allclose(accel, expect, atol=1e-9 * max(1.0,
                                                      np.abs(expect).max()))


def test_backward_minus_affine_identity(charged):
    # ||ubar - u_aff||_{L2(Q)} = tau/sqrt(3) * ||du/dt||_{L2(Q)}, exactly
    traj = charged
    tau, n = traj.tau, traj.n_steps
    Mv = vector_lumped_mass(traj.mesh)
    gauss = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))
    acc = 0.0
    for k in range(1, n + 1):
        for g in gauss:
            t = (k - 1 + g) * tau
            d = (interpolant_eval(traj, "u", "backward", t)
                 - interpolant_eval(traj, "u", "affine", t))
            acc += 0.5 * tau * float(np.sum(Mv * d * d))
    lhs = np.sqrt(acc)
    rate = np.sqrt(sum(
        tau * float(np.sum(Mv * traj.states[k].velocity(tau) ** 2))
        for k in range(1, n + 1)))
    assert abs(lhs - tau / np.sqrt(3.0) * rate) <= 1e-10


def test_interpolant_outside_horizon_rejected(charged):
    with pytest.raises(ValueError):
        interpolant_eval(charged, "u", "affine", charged.T * 1.5)
    with pytest.raises(ValueError):
        interpolant_eval(charged, "u", "sideways", 0.0)


# ---------------------------------------------------------------------------
# outputs and determinism


def test_outputs_written_and_deterministic(tmp_path):
    cfg = desk_default_config(resolution=(15,), T=0.005,
                              outdir=str(tmp_path / "a"), every_n=2)
    run(cfg)
    run(dataclasses.replace(cfg, outdir=str(tmp_path / "b")))
    a = (tmp_path / "a" / "energy.csv").read_bytes()
    b = (tmp_path / "b" / "energy.csv").read_bytes()
    assert a == b
    snaps = sorted(p.name for p in (tmp_path / "a").glob("fields_*.csv"))
    assert snaps[0] == "fields_000000.csv"
    assert "fields_000005.csv" in snaps
    header = (tmp_path / "a" / snaps[0]).read_text().splitlines()[0]
    assert header == "node,x,ux,m,chi,mu,w,theta"
    manifest = json.loads((tmp_path / "a" / "run_manifest.json").read_text())
    assert manifest["n_steps"] == 5
    assert manifest["mesh"]["nodes"] == 15
    assert "defaulted" in manifest


def test_vtk_snapshot_shape(tmp_path):
    cfg = desk_default_config(resolution=(8,), T=0.002,
                              outdir=str(tmp_path), vtk=True)
    run(cfg)
    text = (tmp_path / "fields_000002.vtk").read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert "POINTS 8 double" in text
    assert "SCALARS theta double 1" in text


# ---------------------------------------------------------------------------
# refinement studies


def test_refine_study_constant_trajectory_all_zero():
    cfg = desk_default_config(resolution=(10,), T=0.004, h_s=None)
    rep = refine_study(cfg, levels=2)
    for name in rep.fields:
        assert all(d == 0.0 for d in rep.diffs[name])


def test_refine_study_ratios_decay(tmp_path):
    cfg = desk_default_config(resolution=(20,), T=0.01)
    rep = refine_study(cfg, levels=3)
    assert rep.taus == [1e-3, 5e-4, 2.5e-4]
    for name in rep.fields:
        d = rep.diffs[name]
        assert d[1] <= d[0]
        assert all(r > 1.2 for r in rep.ratios[name])
    assert all(1.4 <= r <= 2.6 for r in rep.nu1_ratios)


def test_refine_study_needs_two_levels():
    with pytest.raises(ConfigError):
        refine_study(desk_default_config(), levels=1)
