"""Integrator contracts: increments, exactness, invariances, reproducibility."""

import numpy as np
import pytest

from crdiff import FrameState, SimConfig, sample_increment, simulate_ensemble, simulate_path, step
from crdiff.sde import BLOCK, driving_increments, simulate_with_increments

ORIGIN1 = FrameState(np.zeros(3), np.eye(1))


# --- configuration -----------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(t_horizon=0.0, n_steps=10, seed=1),
        dict(t_horizon=1.0, n_steps=-1, seed=1),
        dict(t_horizon=1.0, n_steps=10, seed=1, reunitarize_every=-1),
        dict(t_horizon=1.0, n_steps=10, seed=1, record_stride=3),
        dict(t_horizon=1.0, n_steps=10, seed=1, coordinate_cap=0.0),
    ],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_config_dt():
    cfg = SimConfig(t_horizon=2.0, n_steps=500, seed=0)
    assert cfg.dt == pytest.approx(0.004)


# --- increments --------------------------------------------------------------


def test_increment_covariance():
    """Mixed second moment dt, pseudo-moment zero, within 4 standard errors."""
    rng = np.random.default_rng(14)
    dt = 0.01
    db = sample_increment(rng, dt, 1, size=1_000_000)[:, 0]
    m2 = np.abs(db) ** 2
    se2 = m2.std() / np.sqrt(m2.size)
    assert abs(m2.mean() - dt) < 4 * se2
    pseudo = db**2
    for comp in (pseudo.real, pseudo.imag):
        assert abs(comp.mean()) < 4 * comp.std() / np.sqrt(comp.size)


def test_increment_cross_independence():
    rng = np.random.default_rng(15)
    db = sample_increment(rng, 0.5, 2, size=200_000)
    cross = db[:, 0] * np.conj(db[:, 1])
    for comp in (cross.real, cross.imag):
        assert abs(comp.mean()) < 4 * comp.std() / np.sqrt(comp.size)


def test_increment_brownian_scaling():
    rng = np.random.default_rng(16)
    v_big = (np.abs(sample_increment(rng, 0.04, 1, size=400_000)) ** 2).mean()
    v_small = (np.abs(sample_increment(rng, 0.01, 1, size=400_000)) ** 2).mean()
    assert v_big / v_small == pytest.approx(4.0, rel=0.02)


def test_increment_rejects_bad_dt():
    with pytest.raises(ValueError):
        sample_increment(np.random.default_rng(0), 0.0, 1)


# --- single steps ------------------------------------------------------------


def test_zero_increment_fixes_state(gauge1):
    s = FrameState(np.array([0.2, -0.1, 0.4]), np.exp(0.3j) * np.eye(1))
    out = step(gauge1, s, np.zeros(1), 0.01)
    np.testing.assert_array_equal(out.x, s.x)
    np.testing.assert_allclose(out.e, s.e, atol=1e-15)


def test_step_rotation_equivariance(gauge1):
    """One step from (x, e q) driven by adjoint-rotated noise lands on (x', e' q)."""
    rng = np.random.default_rng(21)
    q = np.exp(1j * 0.77) * np.eye(1)
    s = FrameState(np.array([0.1, 0.3, -0.2]), np.eye(1))
    db = (rng.normal(size=1) + 1j * rng.normal(size=1)) * np.sqrt(0.005)
    plain = step(gauge1, s, db, 0.01)
    rotated = step(gauge1, FrameState(s.x, s.e @ q), np.conj(q.T) @ db, 0.01)
    np.testing.assert_allclose(rotated.x, plain.x, atol=1e-12)
    np.testing.assert_allclose(rotated.e, plain.e @ q, atol=1e-12)


# --- paths -------------------------------------------------------------------


def test_flat_model_z_update_is_exact_partial_sum(heis1):
    cfg = SimConfig(t_horizon=1.0, n_steps=1000, seed=42)
    path = simulate_path(heis1, ORIGIN1, cfg)
    z_terminal = path.x[-1, 0] + 1j * path.x[-1, 1]
    running = 0.0 + 0.0j
    for db in path.increments[:, 0]:
        running += db
    assert abs(z_terminal - running) < 1e-14
    assert path.status == "completed"
    assert len(path) == 1001


def test_zero_step_path(heis1):
    cfg = SimConfig(t_horizon=1.0, n_steps=0, seed=1)
    path = simulate_path(heis1, ORIGIN1, cfg)
    assert len(path) == 1
    np.testing.assert_array_equal(path.x[0], ORIGIN1.x)


def test_capped_path_truncates(heis1):
    cfg = SimConfig(t_horizon=1.0, n_steps=1000, seed=5, coordinate_cap=1e-3)
    path = simulate_path(heis1, ORIGIN1, cfg)
    assert path.status == "capped"
    assert len(path) < 20
    assert path.times[-1] <= 0.02
    assert np.abs(path.x).max() <= 1e-3


def test_record_stride(heis1):
    cfg = SimConfig(t_horizon=1.0, n_steps=100, seed=2, record_stride=10)
    path = simulate_path(heis1, ORIGIN1, cfg)
    assert len(path) == 11
    np.testing.assert_allclose(np.diff(path.times), 0.1, atol=1e-12)


def test_ensemble_matches_single_path(heis1):
    cfg = SimConfig(t_horizon=0.5, n_steps=200, seed=9)
    path = simulate_path(heis1, ORIGIN1, cfg)
    ens = simulate_ensemble(heis1, ORIGIN1, cfg, 1)
    np.testing.assert_array_equal(ens.x[0], path.x[-1])
    np.testing.assert_array_equal(ens.e[0], path.e[-1])


def test_ensemble_worker_count_invariance(heis1):
    cfg = SimConfig(t_horizon=0.3, n_steps=60, seed=33)
    n_paths = BLOCK + 512  # force two blocks
    a = simulate_ensemble(heis1, ORIGIN1, cfg, n_paths, n_workers=1)
    b = simulate_ensemble(heis1, ORIGIN1, cfg, n_paths, n_workers=4)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.e, b.e)
    np.testing.assert_array_equal(a.status, b.status)


def test_path_independent_of_ensemble_size(heis1):
    """A path is a pure function of (seed, index): growing n_paths cannot move it."""
    cfg = SimConfig(t_horizon=0.3, n_steps=60, seed=33)
    small = simulate_ensemble(heis1, ORIGIN1, cfg, 3)
    large = simulate_ensemble(heis1, ORIGIN1, cfg, 500)
    np.testing.assert_array_equal(small.x, large.x[:3])


def test_gaussian_marginal_variance(heis1):
    cfg = SimConfig(t_horizon=1.0, n_steps=500, seed=101)
    ens = simulate_ensemble(heis1, ORIGIN1, cfg, 20_000)
    u = ens.x[:, 0]
    var = u.var(ddof=1)
    se = np.sqrt((np.mean((u - u.mean()) ** 4) - var**2) / u.size)
    assert abs(var - 0.5) < 3 * se


def test_capped_paths_reported_not_dropped(heis1):
    cfg = SimConfig(t_horizon=1.0, n_steps=100, seed=3, coordinate_cap=0.05)
    ens = simulate_ensemble(heis1, ORIGIN1, cfg, 200)
    assert ens.capped_fraction > 0.9
    assert (ens.steps_taken < 100).all()


# --- pathwise frame-rotation invariance --------------------------------------


def _random_unitary(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_rotation_invariance_heisenberg(heis2):
    cfg = SimConfig(t_horizon=1.0, n_steps=300, seed=55)
    inc = driving_increments(cfg, 80, 2)
    q = _random_unitary(np.random.default_rng(56), 2)
    s_plain = FrameState(np.zeros(5), np.eye(2))
    s_rot = FrameState(np.zeros(5), np.eye(2) @ q)
    plain = simulate_with_increments(heis2, s_plain, cfg, inc, record=True)
    rot = simulate_with_increments(
        heis2, s_rot, cfg, np.einsum("ij,pkj->pki", np.conj(q.T), inc), record=True
    )
    assert np.abs(plain.records.x - rot.records.x).max() < 1e-10


def test_rotation_invariance_gauge_model(gauge1):
    cfg = SimConfig(t_horizon=1.0, n_steps=250, seed=57)
    inc = driving_increments(cfg, 80, 1)
    q = _random_unitary(np.random.default_rng(58), 1)
    plain = simulate_with_increments(gauge1, FrameState(np.zeros(3), np.eye(1)), cfg, inc, record=True)
    rot = simulate_with_increments(
        gauge1, FrameState(np.zeros(3), q), cfg,
        np.einsum("ij,pkj->pki", np.conj(q.T), inc), record=True,
    )
    assert np.abs(plain.records.x - rot.records.x).max() < 10 * cfg.dt


# --- law-level invariances ----------------------------------------------------


def test_gauge_invariance_in_law(heis1, gauge1):
    """Projected moments agree between the plain and rotated descriptors."""
    cfg = SimConfig(t_horizon=1.0, n_steps=400, seed=71)
    n_paths = 18_000
    a = simulate_ensemble(heis1, ORIGIN1, cfg, n_paths)
    cfg_b = SimConfig(t_horizon=1.0, n_steps=400, seed=72)
    b = simulate_ensemble(gauge1, ORIGIN1, cfg_b, n_paths)
    for k in range(3):
        xa, xb = a.x[:, k], b.x[:, k]
        se = np.sqrt(xa.var() / xa.size + xb.var() / xb.size)
        assert abs(xa.mean() - xb.mean()) < 4 * se + 1e-12
        va, vb = xa.var(ddof=1), xb.var(ddof=1)
        se_v = np.sqrt(
            (np.mean((xa - xa.mean()) ** 4) - va**2) / xa.size
            + (np.mean((xb - xb.mean()) ** 4) - vb**2) / xb.size
        )
        assert abs(va - vb) < 4 * se_v


@pytest.mark.slow
def test_levy_area_law_crosschecked_by_finer_run(heis1):
    """Vertical coordinate: variance t^2 and sech characteristic function.

    The same statistics are computed at a 10x finer step as an
    integrator-independent cross-check of the reference values.
    """
    lam = 1.0
    stats = {}
    for steps, seed in ((250, 81), (2500, 82)):
        cfg = SimConfig(t_horizon=1.0, n_steps=steps, seed=seed)
        ens = simulate_ensemble(heis1, ORIGIN1, cfg, 12_000)
        tau = ens.x[:, 2]
        stats[steps] = (tau.var(ddof=1), np.exp(1j * lam * tau).mean())
    for steps, (var, cf) in stats.items():
        assert abs(var - 1.0) < 0.05, (steps, var)
        assert abs(cf - 1.0 / np.cosh(lam)) < 0.02, (steps, cf)
    assert abs(stats[250][0] - stats[2500][0]) < 0.04


def test_weak_self_convergence_ratio(heis1):
    """First-order weak error: coupled refinements halve the bias each level."""
    p_count = 120_000
    cfg_fine = SimConfig(t_horizon=1.0, n_steps=128, seed=77)
    inc_fine = driving_increments(cfg_fine, p_count, 1)
    means = {}
    for steps in (32, 64, 128):
        factor = 128 // steps
        inc = inc_fine.reshape(p_count, steps, factor, 1).sum(axis=2)
        cfg = SimConfig(t_horizon=1.0, n_steps=steps, seed=77)
        ens = simulate_with_increments(heis1, ORIGIN1, cfg, inc)
        means[steps] = ens.x[:, 2] ** 2
    d1 = (means[32] - means[64]).mean()
    d2 = (means[64] - means[128]).mean()
    assert 1.5 < d1 / d2 < 2.5


# --- unitarity maintenance ----------------------------------------------------


def test_unitarity_enforced_every_step(gauge1, unitarity_observer_factory):
    cfg = SimConfig(t_horizon=1.0, n_steps=400, seed=91, reunitarize_every=1)
    ens = simulate_ensemble(
        gauge1, ORIGIN1, cfg, 300,
        observer_factories={"defect": unitarity_observer_factory},
    )
    assert ens.observables["defect"].max() < 1e-8


def test_unitarity_drift_without_projection(gauge1):
    """Disabled projection: defect stays small over short horizons and
    shrinks roughly linearly with the step size (measured, not pinned)."""
    defects = {}
    for steps in (250, 500, 1000):
        cfg = SimConfig(t_horizon=1.0, n_steps=steps, seed=92, reunitarize_every=0)
        ens = simulate_ensemble(gauge1, ORIGIN1, cfg, 200)
        eye = np.eye(1)
        defects[steps] = np.abs(
            np.conj(np.swapaxes(ens.e, -1, -2)) @ ens.e - eye
        ).max()
    assert defects[1000] < 0.05
    assert defects[1000] < defects[250]
