"""Time integration of the damped stochastic wave system with mass mu.

The system is

    du = v dt,
    mu dv = (Lap u - gamma(u) v + f(u)) dt + sigma(u) dW,

integrated in sine coefficients.  Three first-order schemes are provided.

semi_implicit
    Solves the gamma-frozen coupled update through a factorized pair of
    implicit solves.  With r = mu*v_n + dt*(Lap u_n + f(u_n)) + sigma(u_n) dW,
    the velocity is

        v_{n+1} = [ mu * r_i / (mu + dt^2 alpha_i) ]  /  (mu + dt gamma(u_n))

    (diagonal spectral solve for the implicit Laplacian, then a per-node
    scalar solve for the implicit friction), and u_{n+1} = u_n + dt v_{n+1}.
    High modes are damped unconditionally, so the scheme tolerates stiff
    Laplacians at any mass.

eta_form (default)
    Evolves (u, eta) with eta = v + g(u)/mu, which absorbs the stiff
    gamma(u) v / mu coupling into the monotone map g.  The u-update treats g
    implicitly through Newton steps of u + (dt/mu) g(u) = u_n + dt eta_n
    (one step by default, matching first-order accuracy), after which the
    eta-update uses the Laplacian of the new u:

        eta_{n+1} = eta_n + (dt/mu)(Lap u_{n+1} + f(u_n)) + sigma(u_n) dW / mu.

    The staggered evaluation is subject to the wave CFL constraint
    dt <= 2 sqrt(mu / alpha_N); the default step policy keeps runs well
    inside it.

resolvent_implicit
    Backward Euler through the nonlinear resolvent, z_{n+1} = J_dt(z_n + noise);
    see the resolvent module.

A step policy dt <= c_stab * mu is advisable because the eta drift carries a
1/mu factor; simulate() warns once when the driving path violates it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .basis import SpectralBasis
from .models import ModelSet
from .noise import NoisePath, PathBatch

SCHEMES = ("semi_implicit", "eta_form", "resolvent_implicit")


class SimulationDiverged(RuntimeError):
    """Raised when a state coefficient becomes non-finite."""

    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite state at step {step} (t = {t:.6g})")
        self.step = step
        self.t = t


@dataclass
class WaveState:
    """Displacement/velocity pair in sine coefficients, with mass and clock."""

    u: np.ndarray
    v: np.ndarray
    mu: float
    t: float = 0.0


@dataclass
class EtaState:
    """Transformed pair (u, eta) with eta = v + g(u)/mu."""

    u: np.ndarray
    eta: np.ndarray
    mu: float
    t: float = 0.0


def wave_to_eta(state: WaveState, basis: SpectralBasis, models: ModelSet) -> EtaState:
    g_u = basis.analyze(models.g_map.forward(basis.synthesize(state.u)))
    return EtaState(u=state.u.copy(), eta=state.v + g_u / state.mu, mu=state.mu, t=state.t)


def eta_to_wave(state: EtaState, basis: SpectralBasis, models: ModelSet) -> WaveState:
    g_u = basis.analyze(models.g_map.forward(basis.synthesize(state.u)))
    return WaveState(u=state.u.copy(), v=state.eta - g_u / state.mu, mu=state.mu, t=state.t)


@dataclass
class WaveTrajectory:
    """Output-grid samples plus running diagnostics of one (batched) run."""

    times: np.ndarray  # (n_out,)
    u: np.ndarray  # (n_out, ..., N)
    v: np.ndarray  # (n_out, ..., N)
    mu: float
    dt: float
    sup_u_h: np.ndarray  # running sup over every step, shape (...)
    sup_u_h1: np.ndarray
    sup_v_h: np.ndarray
    sup_energy: np.ndarray  # sup_t ( ||u||_{H1}^2 + mu ||v||_H^2 )
    int_u_h1_sq: np.ndarray  # int_0^T ||u||_{H1}^2 dt
    int_v_h_sq: np.ndarray  # int_0^T ||v||_H^2 dt


def _output_indices(n_steps: int, n_output: int) -> np.ndarray:
    idx = np.unique(np.round(np.linspace(0, n_steps, n_output + 1)).astype(int))
    return idx


class WaveSolver:
    """Stepper bound to one basis/model set and one mass value.

    Stateless between calls apart from read-only precomputed arrays, so one
    instance may serve concurrent simulations.  All operations broadcast over
    leading batch axes of the coefficient arrays.
    """

    def __init__(
        self,
        basis: SpectralBasis,
        models: ModelSet,
        mu: float,
        scheme: str = "eta_form",
        c_stab: float = 0.5,
        newton_iters: int = 1,
    ):
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
        if mu <= 0:
            raise ValueError(f"mass must be positive, got {mu}")
        self.basis = basis
        self.models = models
        self.mu = mu
        self.scheme = scheme
        self.c_stab = c_stab
        self.newton_iters = newton_iters
        if scheme == "resolvent_implicit":
            from .resolvent import OperatorA  # deferred: avoids import cycle

            self._op = OperatorA(basis, models, mass=mu)
        else:
            self._op = None

    # -- single steps ---------------------------------------------------------

    def _noise_coeffs(self, u_nodal: np.ndarray, dbeta) -> np.ndarray | None:
        if dbeta is None or self.models.diffusion.sigma_sup == 0.0:
            return None
        b = self.basis
        forced = b.synthesize(self.models.diffusion.q_spectrum * np.asarray(dbeta, dtype=float))
        return b.analyze(self.models.diffusion.lambda_sigma(u_nodal) * forced)

    def _step_semi_implicit(self, u, v, dt, dbeta):
        b, m, mu = self.basis, self.models, self.mu
        u_nodal = b.synthesize(u)
        r = mu * v + dt * (b.laplacian(u) + b.analyze(m.reaction.f(u_nodal)))
        noise = self._noise_coeffs(u_nodal, dbeta)
        if noise is not None:
            r = r + noise
        w = mu * r / (mu + dt * dt * b.alphas)
        v_new = b.analyze(b.synthesize(w) / (mu + dt * m.friction.gamma(u_nodal)))
        return u + dt * v_new, v_new

    def _step_eta(self, u, eta, dt, dbeta):
        b, m, mu = self.basis, self.models, self.mu
        u_nodal = b.synthesize(u)
        eta_nodal = b.synthesize(eta)
        target = u_nodal + dt * eta_nodal
        w = u_nodal
        for _ in range(self.newton_iters):
            phi = w + (dt / mu) * m.g_map.forward(w) - target
            w = w - phi / (1.0 + (dt / mu) * m.friction.gamma(w))
        u_new = b.analyze(w)
        rhs = b.laplacian(u_new) + b.analyze(m.reaction.f(u_nodal))
        eta_new = eta + (dt / mu) * rhs
        noise = self._noise_coeffs(u_nodal, dbeta)
        if noise is not None:
            eta_new = eta_new + noise / mu
        return u_new, eta_new

    def step(self, state: WaveState, dt: float, dbeta=None) -> WaveState:
        """Advance one step, accepting and returning the (u, v) representation."""
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if self.scheme == "semi_implicit":
            u, v = self._step_semi_implicit(state.u, state.v, dt, dbeta)
            return WaveState(u=u, v=v, mu=state.mu, t=state.t + dt)
        if self.scheme == "eta_form":
            es = wave_to_eta(state, self.basis, self.models)
            es = self.step_eta(es, dt, dbeta)
            return eta_to_wave(es, self.basis, self.models)
        from .resolvent import implicit_step_via_resolvent

        return implicit_step_via_resolvent(self._op, state, dt, dbeta)

    def step_eta(self, state: EtaState, dt: float, dbeta=None) -> EtaState:
        u, eta = self._step_eta(state.u, state.eta, dt, dbeta)
        return EtaState(u=u, eta=eta, mu=state.mu, t=state.t + dt)

    # -- trajectories ---------------------------------------------------------

    def simulate(
        self,
        u0: np.ndarray,
        v0: np.ndarray,
        path: NoisePath | PathBatch,
        n_output: int = 200,
    ) -> WaveTrajectory:
        """Integrate over the full driving path, recording an output grid.

        For a PathBatch the leading axis of the state is the path index and
        the whole bundle advances in lock step; results are identical to
        running the member paths one at a time.
        """
        b, m, mu = self.basis, self.models, self.mu
        dt = path.dt
        if dt > self.c_stab * mu * (1.0 + 1e-12):
            warnings.warn(
                f"dt = {dt:.3g} exceeds c_stab*mu = {self.c_stab * mu:.3g}; "
                "the mass time scale is not resolved",
                RuntimeWarning,
                stacklevel=2,
            )
        if self.scheme == "eta_form":
            cfl = 2.0 * np.sqrt(mu / b.alphas[-1])
            if dt > 0.9 * cfl:
                warnings.warn(
                    f"dt = {dt:.3g} is near or above the staggered-scheme wave CFL "
                    f"2*sqrt(mu/alpha_N) = {cfl:.3g}",
                    RuntimeWarning,
                    stacklevel=2,
                )
        inc = path.increments  # (N, K) or (P, N, K)
        batched = inc.ndim == 3
        u = np.asarray(u0, dtype=float)
        v = np.asarray(v0, dtype=float)
        if batched:
            shape = (inc.shape[0], b.n_modes)
            u = np.broadcast_to(u, shape).copy()
            v = np.broadcast_to(v, shape).copy()
        else:
            u = u.copy()
            v = v.copy()

        eta_mode = self.scheme == "eta_form"
        if eta_mode:
            g_u = b.analyze(m.g_map.forward(b.synthesize(u)))
            second = v + g_u / mu
            advance = self._step_eta
        elif self.scheme == "semi_implicit":
            second = v
            advance = self._step_semi_implicit
        else:
            second = v
            advance = self._resolvent_step

        idx = _output_indices(path.n_steps, n_output)
        times = idx * dt
        out_u = np.empty((len(idx),) + u.shape)
        out_v = np.empty_like(out_u)

        def velocity(u_c, second_c):
            if eta_mode:
                return second_c - b.analyze(m.g_map.forward(b.synthesize(u_c))) / mu
            return second_c

        sup_u_h = b.sobolev_norm(u, 0.0)
        sup_u_h1 = b.sobolev_norm(u, 1.0)
        v_now = velocity(u, second)
        sup_v_h = b.sobolev_norm(v_now, 0.0)
        sup_energy = sup_u_h1**2 + mu * sup_v_h**2
        int_u_h1_sq = np.zeros_like(sup_u_h)
        int_v_h_sq = np.zeros_like(sup_u_h)

        out_pos = 0
        if idx[0] == 0:
            out_u[0], out_v[0] = u, v_now
            out_pos = 1

        for k in range(path.n_steps):
            dbeta = inc[..., :, k]
            u, second = advance(u, second, dt, dbeta)
            if not np.all(np.isfinite(u)) or not np.all(np.isfinite(second)):
                raise SimulationDiverged(step=k + 1, t=(k + 1) * dt)

            nu = b.sobolev_norm(u, 0.0)
            nu1 = b.sobolev_norm(u, 1.0)
            v_now = velocity(u, second)
            nv = b.sobolev_norm(v_now, 0.0)
            sup_u_h = np.maximum(sup_u_h, nu)
            sup_u_h1 = np.maximum(sup_u_h1, nu1)
            sup_v_h = np.maximum(sup_v_h, nv)
            sup_energy = np.maximum(sup_energy, nu1**2 + mu * nv**2)
            int_u_h1_sq = int_u_h1_sq + dt * nu1**2
            int_v_h_sq = int_v_h_sq + dt * nv**2

            if out_pos < len(idx) and k + 1 == idx[out_pos]:
                out_u[out_pos], out_v[out_pos] = u, v_now
                out_pos += 1

        return WaveTrajectory(
            times=times,
            u=out_u,
            v=out_v,
            mu=mu,
            dt=dt,
            sup_u_h=sup_u_h,
            sup_u_h1=sup_u_h1,
            sup_v_h=sup_v_h,
            sup_energy=sup_energy,
            int_u_h1_sq=int_u_h1_sq,
            int_v_h_sq=int_v_h_sq,
        )

    def _resolvent_step(self, u, v, dt, dbeta):
        from .resolvent import implicit_step_via_resolvent

        state = implicit_step_via_resolvent(
            self._op, WaveState(u=u, v=v, mu=self.mu, t=0.0), dt, dbeta
        )
        return state.u, state.v


def step_wave(
    state: WaveState,
    dt: float,
    dbeta,
    scheme: str,
    basis: SpectralBasis,
    models: ModelSet,
    **kw,
) -> WaveState:
    """One-shot step without keeping a solver around."""
    return WaveSolver(basis, models, state.mu, scheme=scheme, **kw).step(state, dt, dbeta)


def simulate_wave(
    basis: SpectralBasis,
    models: ModelSet,
    mu: float,
    u0: np.ndarray,
    v0: np.ndarray,
    path: NoisePath | PathBatch,
    scheme: str = "eta_form",
    n_output: int = 200,
    **kw,
) -> WaveTrajectory:
    return WaveSolver(basis, models, mu, scheme=scheme, **kw).simulate(u0, v0, path, n_output)
