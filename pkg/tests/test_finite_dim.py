import numpy as np
import pytest
from scipy.linalg import solve_lyapunov as scipy_lyapunov

from smallmass.finite_dim import (
    FDNoise,
    LyapunovError,
    compare_endpoints,
    drift_S,
    ellipticity_audit,
    fd_isotropic_2d,
    fd_scalar_system,
    lyapunov_residual,
    simulate_fd,
    simulate_fd_limit,
    solve_lyapunov,
)


def test_scalar_lyapunov_closed_form():
    j = solve_lyapunov(np.array([[2.0]]), np.array([[2.25]]))
    assert abs(j[0, 0] - 2.25 / 4.0) < 1e-12


def test_diagonal_lyapunov_closed_form():
    j = solve_lyapunov(np.diag([1.0, 4.0]), np.eye(2))
    assert np.allclose(j, np.diag([0.5, 0.125]), atol=1e-13)


def test_lyapunov_against_independent_solver():
    # independent route: scipy's Bartels-Stewart solver for a X + X a^T = q
    g = np.array([[2.0, 1.0], [0.0, 3.0]])
    c = np.eye(2)
    ours = solve_lyapunov(g, c)
    ref = scipy_lyapunov(g, c)
    assert np.allclose(ours, ref, atol=1e-12)
    assert lyapunov_residual(g, ours, c) <= 1e-10
    # symmetric PSD right-hand side gives a symmetric PSD solution
    rng = np.random.default_rng(2)
    for _ in range(25):
        d = rng.integers(1, 6)
        a = rng.normal(size=(d, d))
        g = a @ a.T + np.eye(d) * (0.5 + rng.uniform())  # elliptic
        s = rng.normal(size=(d, d))
        c = s @ s.T
        j = solve_lyapunov(g, c)
        assert np.allclose(j, j.T, atol=1e-9)
        assert np.min(np.linalg.eigvalsh((j + j.T) / 2)) > -1e-9
        assert lyapunov_residual(g, j, c) <= 1e-10


def test_lyapunov_rejects_bad_spectrum():
    with pytest.raises(LyapunovError):
        solve_lyapunov(np.array([[1.0, 0.0], [0.0, -1.0]]), np.eye(2))
    with pytest.raises(ValueError):
        solve_lyapunov(np.eye(9), np.eye(9))  # above the dense-solve cap


def test_scalar_drift_closed_form():
    # d = 1, gamma = 2 + sin x, sigma = s: S(x) = -gamma' s^2 / (2 gamma^3)
    system = fd_scalar_system(sigma_value=1.5)
    for xv in (-1.2, 0.0, 0.7, 2.3):
        s = drift_S(system, np.array([xv]))[0]
        exact = -np.cos(xv) * 1.5**2 / (2.0 * (2.0 + np.sin(xv)) ** 3)
        assert abs(s - exact) < 1e-8


def test_constant_friction_no_drift():
    system = fd_scalar_system(friction="constant")
    assert abs(drift_S(system, np.array([0.4]))[0]) < 1e-10


def test_2d_isotropic_drift_hand_formula():
    # gamma(x) = (2 + sin x1) I, sigma = I: J = I / (2(2+sin x1)) and
    # S(x) = (-cos x1 / (2 (2+sin x1)^3), 0), derived by hand.
    system = fd_isotropic_2d()
    for x1 in (-0.8, 0.3, 1.9):
        x = np.array([x1, 0.77])
        s = drift_S(system, x)
        expected = np.array([-np.cos(x1) / (2.0 * (2.0 + np.sin(x1)) ** 3), 0.0])
        assert np.allclose(s, expected, atol=1e-7)


def test_ellipticity_audit():
    assert ellipticity_audit(fd_scalar_system()) >= 1.0 - 1e-9
    assert ellipticity_audit(fd_isotropic_2d()) >= 1.0 - 1e-9


def test_noise_determinism_and_prefix_stability():
    a = FDNoise(seed=5, dt=0.01, n_steps=3, n_paths=6, r_dim=2)
    b = FDNoise(seed=5, dt=0.01, n_steps=3, n_paths=6, r_dim=2)
    assert np.array_equal(a.increments(1), b.increments(1))
    wide = FDNoise(seed=5, dt=0.01, n_steps=3, n_paths=9, r_dim=2)
    assert np.allclose(wide.increments(1)[:6], a.increments(1))


def test_zero_noise_relaxation():
    # sigma == 0, b == 0: the inertial system relaxes to a constant, the limit
    # stays put.
    system = fd_scalar_system()
    zero_sigma = type(system)(
        dim=1,
        r_dim=1,
        b=system.b,
        gamma=system.gamma,
        sigma=lambda x: np.zeros((x.shape[0], 1, 1)),
        gamma0=system.gamma0,
        g_antideriv=system.g_antideriv,
    )
    noise = FDNoise(seed=0, dt=1e-4, n_steps=2000, n_paths=3, r_dim=1)
    inert = simulate_fd(zero_sigma, 1e-3, noise, 0.5, 2.0, n_output=10)
    lim = simulate_fd_limit(zero_sigma, noise, 0.5, n_output=10)
    v_effective = np.abs(np.diff(inert.x[-2:, :, 0], axis=0))
    assert np.max(v_effective) < 1e-5  # velocity has relaxed away
    assert np.allclose(lim.x[-1], 0.5, atol=1e-12)


def test_simulation_determinism():
    system = fd_scalar_system()
    noise = FDNoise(seed=11, dt=1e-4, n_steps=500, n_paths=16, r_dim=1)
    a = simulate_fd(system, 1e-2, noise, 0.0, 0.0, n_output=5)
    b = simulate_fd(system, 1e-2, noise, 0.0, 0.0, n_output=5)
    assert np.array_equal(a.x, b.x)


def test_eta_transform_matches_plain_integrator():
    system = fd_scalar_system()
    dt, n, mu = 2e-5, 2000, 1e-2
    noise = FDNoise(seed=3, dt=dt, n_steps=n, n_paths=32, r_dim=1)
    plain = simulate_fd(system, mu, noise, 0.0, 0.0, n_output=4)
    eta = simulate_fd(system, mu, noise, 0.0, 0.0, n_output=4, eta_transform=True)
    gap = np.abs(plain.x[-1] - eta.x[-1])
    spread = np.abs(plain.x[-1]).max() + 1.0
    assert np.max(gap) < 0.05 * spread


def test_coupled_comparison_statistics():
    system = fd_scalar_system()
    mu, dt, P = 2e-3, 1e-4, 400
    noise = FDNoise(seed=21, dt=dt, n_steps=5000, n_paths=P, r_dim=1)
    inert = simulate_fd(system, mu, noise, 0.0, 0.0, n_output=4, eta_transform=True)
    lim = simulate_fd_limit(system, noise, 0.0, with_S=True, n_output=4)
    rep = compare_endpoints(inert, lim, mu)
    assert rep.n_paths == P
    # coupling keeps the per-path endpoint gap far below the path spread
    assert np.abs(rep.diff_mean[0]) < 0.1 * np.abs(inert.x[-1]).std()
    assert rep.diff_se[0] < 0.05


def test_eta_transform_requires_scalar_antiderivative():
    with pytest.raises(ValueError):
        noise = FDNoise(seed=0, dt=1e-3, n_steps=2, n_paths=2, r_dim=2)
        simulate_fd(fd_isotropic_2d(), 0.1, noise, 0.0, 0.0, eta_transform=True)
