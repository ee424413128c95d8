"""Finite-dimensional small-mass theory: Lyapunov drift and coupled SDE runs.

For the inertial system

    dx = v dt,        mu dv = [b(x) - gamma(x) v] dt + sigma(x) dW,

with uniformly elliptic matrix friction gamma, the small-mass limit is

    dx = [ gamma^-1(x) b(x) + S(x) ] dt + gamma^-1(x) sigma(x) dW,

where the noise-induced drift is S_i(x) = d/dx_l [ (gamma^-1)_ij(x) ] J_jl(x)
and J solves the Lyapunov equation J gamma* + gamma J = sigma sigma*.

The Lyapunov solve is a dense Kronecker-product linear system (dimension is
capped at 8), with the residual checked on every call.  The Jacobian of
gamma^-1 uses relative central differences with step 1e-5.

Monte Carlo runs are vectorized across paths; the driving increments come
from a counter-based generator keyed by (seed, step), so the inertial and
limit integrators consume identical noise when run at the same step size
(common random numbers), and reruns with the same seed are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MAX_DIM = 8
FD_STEP_REL = 1e-5


class LyapunovError(RuntimeError):
    """Raised when the Kronecker system is singular or the residual check fails."""


@dataclass(frozen=True)
class FDSystem:
    """Batched system coefficients; callables map (P, d) states to batched values.

    b      -> (P, d)
    gamma  -> (P, d, d), uniformly elliptic with constant gamma0
    sigma  -> (P, d, r)
    g_antideriv (optional, d = 1 only): scalar antiderivative of gamma for the
    transformed integrator.
    """

    dim: int
    r_dim: int
    b: Callable[[np.ndarray], np.ndarray]
    gamma: Callable[[np.ndarray], np.ndarray]
    sigma: Callable[[np.ndarray], np.ndarray]
    gamma0: float
    name: str = "custom"
    g_antideriv: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.dim <= MAX_DIM:
            raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {self.dim}")
        if self.gamma0 <= 0:
            raise ValueError("ellipticity constant gamma0 must be positive")


def solve_lyapunov(gamma_x: np.ndarray, rhs: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Solve J gamma^T + gamma J = rhs by a dense Kronecker linear solve.

    Requires the spectrum of gamma in the open right half plane (guaranteed by
    ellipticity); a singular Kronecker system signals a violation.  The
    Frobenius residual is checked against rtol * ||rhs||_F on every call.
    """
    g = np.asarray(gamma_x, dtype=float)
    c = np.asarray(rhs, dtype=float)
    d = g.shape[0]
    if g.shape != (d, d) or c.shape != (d, d):
        raise ValueError("gamma and rhs must be square matrices of equal size")
    if d > MAX_DIM:
        raise ValueError(f"dense Kronecker solve is capped at dimension {MAX_DIM}")
    eye = np.eye(d)
    # Row-major vec: vec(gamma J) = kron(gamma, I) vec(J), vec(J gamma^T) = kron(I, gamma) vec(J).
    mat = np.kron(g, eye) + np.kron(eye, g)
    try:
        vec = np.linalg.solve(mat, c.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise LyapunovError(
            "singular Kronecker system: gamma spectrum not in the right half plane"
        ) from exc
    j = vec.reshape(d, d)
    scale = max(np.linalg.norm(c), 1e-300)
    residual = np.linalg.norm(j @ g.T + g @ j - c) / scale
    if residual > rtol:
        raise LyapunovError(f"Lyapunov residual {residual:.3e} exceeds {rtol:.1e}")
    return j


def lyapunov_residual(gamma_x: np.ndarray, j: np.ndarray, rhs: np.ndarray) -> float:
    """Relative Frobenius residual of a candidate solution."""
    g = np.asarray(gamma_x, dtype=float)
    return float(
        np.linalg.norm(j @ g.T + g @ j - rhs) / max(np.linalg.norm(rhs), 1e-300)
    )


def _inv_gamma_jacobian(system: FDSystem, x: np.ndarray) -> np.ndarray:
    """D[l, i, j] = d/dx_l (gamma^-1)_ij by relative central differences."""
    d = system.dim
    out = np.empty((d, d, d))
    for l in range(d):
        h = FD_STEP_REL * max(1.0, abs(float(x[l])))
        xp = x.copy()
        xm = x.copy()
        xp[l] += h
        xm[l] -= h
        gp = np.linalg.inv(system.gamma(xp[None])[0])
        gm = np.linalg.inv(system.gamma(xm[None])[0])
        out[l] = (gp - gm) / (2.0 * h)
    return out


def drift_S(system: FDSystem, x: np.ndarray) -> np.ndarray:
    """Noise-induced drift S_i(x) = d_l[(gamma^-1)_ij] J_jl at a single point."""
    x = np.asarray(x, dtype=float).reshape(system.dim)
    g = system.gamma(x[None])[0]
    sig = system.sigma(x[None])[0]
    j = solve_lyapunov(g, sig @ sig.T)
    dinv = _inv_gamma_jacobian(system, x)
    return np.einsum("lij,jl->i", dinv, j)


def _drift_S_batch(system: FDSystem, x: np.ndarray) -> np.ndarray:
    """Vectorized S for scalar systems; falls back to a per-point loop otherwise."""
    if system.dim == 1:
        xs = x[:, 0]
        h = FD_STEP_REL * np.maximum(1.0, np.abs(xs))
        gp = system.gamma((xs + h)[:, None])[:, 0, 0]
        gm = system.gamma((xs - h)[:, None])[:, 0, 0]
        dinv = (1.0 / gp - 1.0 / gm) / (2.0 * h)
        g = system.gamma(x)[:, 0, 0]
        sig = system.sigma(x)[:, 0, :]
        j = np.sum(sig * sig, axis=-1) / (2.0 * g)  # scalar Lyapunov closed form
        return (dinv * j)[:, None]
    return np.stack([drift_S(system, xi) for xi in x])


# -- noise ---------------------------------------------------------------------


@dataclass(frozen=True)
class FDNoise:
    """Per-step standard-normal increments, keyed by (seed, step).

    increments(k) returns the same (n_paths, r) table for a given seed no
    matter which integrator consumes it; prefixes are stable under enlarging
    n_paths.
    """

    seed: int
    dt: float
    n_steps: int
    n_paths: int
    r_dim: int

    def increments(self, k: int) -> np.ndarray:
        key = np.array(
            [np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF), np.uint64(k)], dtype=np.uint64
        )
        gen = np.random.Generator(np.random.Philox(key=key))
        return gen.normal(0.0, np.sqrt(self.dt), (self.n_paths, self.r_dim))


@dataclass
class FDTrajectory:
    times: np.ndarray  # (n_out,)
    x: np.ndarray  # (n_out, P, d)
    dt: float
    mu: float | None = None


def _out_indices(n_steps: int, n_output: int) -> np.ndarray:
    return np.unique(np.round(np.linspace(0, n_steps, n_output + 1)).astype(int))


def simulate_fd(
    system: FDSystem,
    mu: float,
    noise: FDNoise,
    x0,
    v0,
    n_output: int = 200,
    eta_transform: bool = False,
    c_stab: float = 0.5,
) -> FDTrajectory:
    """Euler-Maruyama for the inertial system, vectorized over paths.

    eta_transform=True integrates the non-stiff pair (x, p) with
    p = mu v + G(x), G' = gamma (scalar systems only), treating G implicitly
    through one Newton step in the x-update.
    """
    if mu <= 0:
        raise ValueError("mass must be positive")
    dt = noise.dt
    if dt > c_stab * mu * (1.0 + 1e-12) and not eta_transform:
        import warnings

        warnings.warn(
            f"dt = {dt:.3g} exceeds c_stab*mu = {c_stab * mu:.3g} for the inertial system",
            RuntimeWarning,
            stacklevel=2,
        )
    if eta_transform and (system.dim != 1 or system.g_antideriv is None):
        raise ValueError("eta_transform requires a scalar system with g_antideriv")
    P, d = noise.n_paths, system.dim
    x = np.broadcast_to(np.asarray(x0, dtype=float), (P, d)).copy()
    v = np.broadcast_to(np.asarray(v0, dtype=float), (P, d)).copy()
    idx = _out_indices(noise.n_steps, n_output)
    out = np.empty((len(idx), P, d))
    pos = 0
    if idx[0] == 0:
        out[0] = x
        pos = 1
    if eta_transform:
        p = mu * v + system.g_antideriv(x)
    for k in range(noise.n_steps):
        dw = noise.increments(k)
        if eta_transform:
            gam = system.gamma(x)[:, 0, 0][:, None]
            x_new = x + dt * (p - system.g_antideriv(x)) / mu / (1.0 + dt * gam / mu)
            p = p + dt * system.b(x) + np.einsum("pij,pj->pi", system.sigma(x), dw)
            x = x_new
        else:
            gam = system.gamma(x)
            acc = system.b(x) - np.einsum("pij,pj->pi", gam, v)
            forcing = np.einsum("pij,pj->pi", system.sigma(x), dw)
            x = x + dt * v
            v = v + (dt / mu) * acc + forcing / mu
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"inertial run diverged at step {k + 1}")
        if pos < len(idx) and k + 1 == idx[pos]:
            out[pos] = x
            pos += 1
    return FDTrajectory(times=idx * dt, x=out, dt=dt, mu=mu)


def simulate_fd_limit(
    system: FDSystem,
    noise: FDNoise,
    x0,
    with_S: bool = True,
    n_output: int = 200,
) -> FDTrajectory:
    """Euler-Maruyama for the limit SDE; with_S=False ablates the extra drift."""
    dt = noise.dt
    P, d = noise.n_paths, system.dim
    x = np.broadcast_to(np.asarray(x0, dtype=float), (P, d)).copy()
    idx = _out_indices(noise.n_steps, n_output)
    out = np.empty((len(idx), P, d))
    pos = 0
    if idx[0] == 0:
        out[0] = x
        pos = 1
    for k in range(noise.n_steps):
        dw = noise.increments(k)
        gam = system.gamma(x)
        ginv = np.linalg.inv(gam)
        drift = np.einsum("pij,pj->pi", ginv, system.b(x))
        if with_S:
            drift = drift + _drift_S_batch(system, x)
        forcing = np.einsum(
            "pij,pjk,pk->pi", ginv, system.sigma(x), dw
        )
        x = x + dt * drift + forcing
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"limit run diverged at step {k + 1}")
        if pos < len(idx) and k + 1 == idx[pos]:
            out[pos] = x
            pos += 1
    return FDTrajectory(times=idx * dt, x=out, dt=dt, mu=None)


@dataclass
class FDCompareReport:
    """Endpoint statistics of a coupled inertial-vs-limit study."""

    mu: float
    n_paths: int
    mean_inertial: np.ndarray
    mean_limit: np.ndarray
    diff_mean: np.ndarray  # mean of per-path differences
    diff_se: np.ndarray  # standard error of that mean (coupled)
    z_score: float  # |diff_mean| / diff_se, worst component


def compare_endpoints(a: FDTrajectory, b: FDTrajectory, mu: float) -> FDCompareReport:
    xa, xb = a.x[-1], b.x[-1]
    diff = xa - xb
    n = diff.shape[0]
    diff_mean = diff.mean(axis=0)
    diff_se = diff.std(axis=0, ddof=1) / np.sqrt(n)
    z = float(np.max(np.abs(diff_mean) / np.maximum(diff_se, 1e-300)))
    return FDCompareReport(
        mu=mu,
        n_paths=n,
        mean_inertial=xa.mean(axis=0),
        mean_limit=xb.mean(axis=0),
        diff_mean=diff_mean,
        diff_se=diff_se,
        z_score=z,
    )


def ellipticity_audit(system: FDSystem, n_samples: int = 200, seed: int = 0) -> float:
    """Smallest sampled Rayleigh quotient xi^T gamma(x) xi / |xi|^2."""
    rng = np.random.default_rng(seed)
    xs = rng.normal(size=(n_samples, system.dim), scale=2.0)
    xis = rng.normal(size=(n_samples, system.dim))
    gams = system.gamma(xs)
    quad = np.einsum("pi,pij,pj->p", xis, gams, xis) / np.sum(xis * xis, axis=-1)
    return float(np.min(quad))


# -- presets ---------------------------------------------------------------------


def fd_scalar_system(
    friction: str = "two_plus_sin", sigma_value: float = 1.0, drift_zero: bool = True
) -> FDSystem:
    """d = 1 system with gamma(x) = 2 + sin x (or constant) and constant sigma."""
    if friction == "two_plus_sin":
        gam = lambda x: (2.0 + np.sin(x[:, 0]))[:, None, None]
        g_anti = lambda x: 2.0 * x + 1.0 - np.cos(x)
        g0 = 1.0
    elif friction == "constant":
        gam = lambda x: np.ones((x.shape[0], 1, 1)) * 2.0
        g_anti = lambda x: 2.0 * x
        g0 = 2.0
    else:
        raise ValueError(f"unknown scalar friction {friction!r}")
    if not drift_zero:
        raise ValueError("only the zero-drift scalar preset is provided")
    return FDSystem(
        dim=1,
        r_dim=1,
        b=lambda x: np.zeros_like(x),
        gamma=gam,
        sigma=lambda x: np.full((x.shape[0], 1, 1), sigma_value),
        gamma0=g0,
        name=f"scalar_{friction}",
        g_antideriv=g_anti,
    )


def fd_isotropic_2d() -> FDSystem:
    """d = 2 preset gamma(x) = (2 + sin x_1) * I, sigma = I, b = 0."""

    def gam(x):
        s = 2.0 + np.sin(x[:, 0])
        return s[:, None, None] * np.eye(2)[None]

    return FDSystem(
        dim=2,
        r_dim=2,
        b=lambda x: np.zeros_like(x),
        gamma=gam,
        sigma=lambda x: np.broadcast_to(np.eye(2), (x.shape[0], 2, 2)).copy(),
        gamma0=1.0,
        name="isotropic_2d",
    )
