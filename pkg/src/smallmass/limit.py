"""Integrators for the limiting quasilinear parabolic equation.

Two equivalent formulations are integrated with the same stabilized
semi-implicit splitting.

u-form (the small-mass limit itself, the default for convergence studies):

    du = [ (1/gamma(u)) Lap u + f(u)/gamma(u) + H(u) ] dt + (sigma(u)/gamma(u)) dW,

where H is the noise-induced drift created by the state dependence of the
friction.  The diffusion coefficient 1/gamma(u) is split around the constant
b_bar = (1/gamma0 + 1/gamma1)/2: the b_bar part is treated implicitly
(diagonal spectral solve) and the remainder, whose magnitude never exceeds
(1/gamma0 - 1/gamma1)/2 < b_bar, explicitly.  That pinching gives
unconditional linear stability of the splitting.

rho-form (divergence form under the substitution rho = g(u)):

    d rho = [ Lap(g^-1(rho)) + F(rho) ] dt + sigma_g(rho) dW,

using div[b(rho) grad rho] = Lap(g^-1(rho)), with the same b_bar stabilizer:
implicit b_bar*Lap rho_{n+1} plus explicit (Lap g^-1(rho_n) - b_bar Lap rho_n).
No drift correction appears here; the quasilinear structure absorbs it, which
is what the dual-form consistency test exercises.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import SpectralBasis
from .models import ModelSet, noise_induced_drift
from .noise import NoisePath, PathBatch
from .wave import SimulationDiverged, _output_indices


@dataclass
class LimitStateU:
    u: np.ndarray
    t: float = 0.0


@dataclass
class LimitStateRho:
    rho: np.ndarray
    t: float = 0.0


@dataclass
class LimitTrajectory:
    times: np.ndarray
    coeffs: np.ndarray  # (n_out, ..., N) of u (form="u") or rho (form="rho")
    form: str
    dt: float
    sup_h: np.ndarray  # running sup_t ||.||_H over all steps


def transform_u_to_rho(
    state: LimitStateU, basis: SpectralBasis, models: ModelSet
) -> LimitStateRho:
    """rho = g(u), applied nodally and re-analyzed."""
    rho = basis.analyze(models.g_map.forward(basis.synthesize(state.u)))
    return LimitStateRho(rho=rho, t=state.t)


def transform_rho_to_u(
    state: LimitStateRho, basis: SpectralBasis, models: ModelSet
) -> LimitStateU:
    """u = g^-1(rho); inversion failures propagate."""
    u = basis.analyze(models.g_map.inverse(basis.synthesize(state.rho)))
    return LimitStateU(u=u, t=state.t)


class LimitSolver:
    """Stepper for the limiting equation in either formulation.

    with_drift=False drops the noise-induced drift H from the u-form; this is
    an ablation switch only, there is nothing to drop in the rho-form.
    """

    def __init__(
        self,
        basis: SpectralBasis,
        models: ModelSet,
        form: str = "u",
        with_drift: bool = True,
    ):
        if form not in ("u", "rho"):
            raise ValueError(f"form must be 'u' or 'rho', got {form!r}")
        self.basis = basis
        self.models = models
        self.form = form
        self.with_drift = with_drift
        self.b_bar = models.transformed.b_bar

    # -- steps ----------------------------------------------------------------

    def _step_u(self, u: np.ndarray, dt: float, dbeta) -> np.ndarray:
        b, m = self.basis, self.models
        u_nodal = b.synthesize(u)
        gam = m.friction.gamma(u_nodal)
        lap_nodal = b.synthesize(b.laplacian(u))
        explicit = (1.0 / gam - self.b_bar) * lap_nodal + m.reaction.f(u_nodal) / gam
        if self.with_drift and m.diffusion.sigma_sup != 0.0:
            explicit = explicit + noise_induced_drift(u_nodal, m.friction, m.diffusion)
        rhs = u + dt * b.analyze(explicit)
        if dbeta is not None and m.diffusion.sigma_sup != 0.0:
            forced = b.synthesize(m.diffusion.q_spectrum * np.asarray(dbeta, dtype=float))
            rhs = rhs + b.analyze(m.diffusion.lambda_sigma(u_nodal) / gam * forced)
        return rhs / (1.0 + dt * self.b_bar * b.alphas)

    def _step_rho(self, rho: np.ndarray, dt: float, dbeta) -> np.ndarray:
        b, m = self.basis, self.models
        rho_nodal = b.synthesize(rho)
        u_inv = m.g_map.inverse(rho_nodal)
        lap_ginv = b.laplacian(b.analyze(u_inv))
        explicit_sp = lap_ginv + self.b_bar * b.alphas * rho  # - b_bar*Lap rho_n
        rhs = rho + dt * (explicit_sp + b.analyze(m.reaction.f(u_inv)))
        if dbeta is not None and m.diffusion.sigma_sup != 0.0:
            forced = b.synthesize(m.diffusion.q_spectrum * np.asarray(dbeta, dtype=float))
            rhs = rhs + b.analyze(m.diffusion.lambda_sigma(u_inv) * forced)
        return rhs / (1.0 + dt * self.b_bar * b.alphas)

    def step_u(self, state: LimitStateU, dt: float, dbeta=None) -> LimitStateU:
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        return LimitStateU(u=self._step_u(state.u, dt, dbeta), t=state.t + dt)

    def step_rho(self, state: LimitStateRho, dt: float, dbeta=None) -> LimitStateRho:
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        return LimitStateRho(rho=self._step_rho(state.rho, dt, dbeta), t=state.t + dt)

    # -- trajectories -----------------------------------------------------------

    def simulate(
        self,
        initial: np.ndarray,
        path: NoisePath | PathBatch,
        n_output: int = 200,
    ) -> LimitTrajectory:
        """Integrate over the driving path; `initial` is u0 or rho0 per the form."""
        b = self.basis
        dt = path.dt
        inc = path.increments
        batched = inc.ndim == 3
        y = np.asarray(initial, dtype=float)
        if batched:
            y = np.broadcast_to(y, (inc.shape[0], b.n_modes)).copy()
        else:
            y = y.copy()
        stepper = self._step_u if self.form == "u" else self._step_rho

        idx = _output_indices(path.n_steps, n_output)
        times = idx * dt
        out = np.empty((len(idx),) + y.shape)
        sup_h = b.sobolev_norm(y, 0.0)
        pos = 0
        if idx[0] == 0:
            out[0] = y
            pos = 1
        for k in range(path.n_steps):
            y = stepper(y, dt, inc[..., :, k])
            if not np.all(np.isfinite(y)):
                raise SimulationDiverged(step=k + 1, t=(k + 1) * dt)
            sup_h = np.maximum(sup_h, b.sobolev_norm(y, 0.0))
            if pos < len(idx) and k + 1 == idx[pos]:
                out[pos] = y
                pos += 1
        return LimitTrajectory(times=times, coeffs=out, form=self.form, dt=dt, sup_h=sup_h)


def step_limit_u(
    state: LimitStateU, dt: float, dbeta, basis: SpectralBasis, models: ModelSet, **kw
) -> LimitStateU:
    return LimitSolver(basis, models, form="u", **kw).step_u(state, dt, dbeta)


def step_limit_rho(
    state: LimitStateRho, dt: float, dbeta, basis: SpectralBasis, models: ModelSet
) -> LimitStateRho:
    return LimitSolver(basis, models, form="rho").step_rho(state, dt, dbeta)


def simulate_limit(
    basis: SpectralBasis,
    models: ModelSet,
    initial: np.ndarray,
    path: NoisePath | PathBatch,
    form: str = "u",
    with_drift: bool = True,
    n_output: int = 200,
) -> LimitTrajectory:
    solver = LimitSolver(basis, models, form=form, with_drift=with_drift)
    return solver.simulate(initial, path, n_output=n_output)
