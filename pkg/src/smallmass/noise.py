"""Seeded per-mode Brownian increments with refinement and cross-run coupling.

Each mode carries its own counter-based random stream keyed by
(seed, mode, refinement level), so

  * regenerating with the same seed gives bit-identical increments,
  * enlarging the number of modes leaves existing modes untouched, and
  * halving the time step (Brownian bridge midpoints) never reshuffles the
    randomness already consumed: summing paired fine increments recovers the
    coarse increments exactly.

The same path object can therefore drive a whole mass ladder and the limit
integrator; pathwise distances between runs estimate convergence in
probability by common random numbers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .basis import SpectralBasis
from .models import DiffusionModel

_HEADER = struct.Struct("<qdqq")  # seed, dt, n_steps, n_modes


def _mode_generator(seed: int, mode: int, level: int) -> np.random.Generator:
    if not 0 <= mode < 2**32 or not 0 <= level < 2**32:
        raise ValueError("mode and refinement level must fit in 32 bits")
    key = np.array(
        [np.uint64(seed & 0xFFFFFFFFFFFFFFFF), (np.uint64(mode) << np.uint64(32)) | np.uint64(level)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class NoisePath:
    """Increment table Delta beta_i(k) ~ N(0, dt) for modes i = 1..N."""

    seed: int
    dt: float
    n_steps: int
    n_modes: int
    level: int
    increments: np.ndarray  # shape (n_modes, n_steps), read-only

    def __post_init__(self) -> None:
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.n_modes, self.n_steps):
            raise ValueError(
                f"increment table shape {inc.shape} != ({self.n_modes}, {self.n_steps})"
            )
        inc = inc.copy()
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def t_final(self) -> float:
        return self.dt * self.n_steps


def sample_path(seed: int, t_final: float, dt: float, n_modes: int) -> NoisePath:
    """Generate the level-0 increment table for a fixed (seed, T, dt, N)."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_final <= 0.0:
        raise ValueError(f"t_final must be positive, got {t_final}")
    n_steps = int(round(t_final / dt))
    if n_steps < 1 or abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final = {t_final} is not an integer multiple of dt = {dt}")
    sd = np.sqrt(dt)
    inc = np.empty((n_modes, n_steps))
    for i in range(n_modes):
        inc[i] = _mode_generator(seed, i + 1, 0).normal(0.0, sd, n_steps)
    return NoisePath(seed=seed, dt=dt, n_steps=n_steps, n_modes=n_modes, level=0, increments=inc)


def refine(path: NoisePath) -> NoisePath:
    """Halve dt by conditional Brownian-bridge midpoint sampling.

    The midpoint noise comes from the streams of the next refinement level,
    so fine[2k] + fine[2k+1] == coarse[k] exactly and already-generated
    randomness is preserved.
    """
    half = 0.5 * np.sqrt(path.dt)  # std of the midpoint correction, sqrt(dt/4)
    fine = np.empty((path.n_modes, 2 * path.n_steps))
    for i in range(path.n_modes):
        xi = _mode_generator(path.seed, i + 1, path.level + 1).normal(0.0, half, path.n_steps)
        fine[i, 0::2] = 0.5 * path.increments[i] + xi
        fine[i, 1::2] = 0.5 * path.increments[i] - xi
    return NoisePath(
        seed=path.seed,
        dt=0.5 * path.dt,
        n_steps=2 * path.n_steps,
        n_modes=path.n_modes,
        level=path.level + 1,
        increments=fine,
    )


def refine_to(path: NoisePath, dt_max: float) -> NoisePath:
    """Refine until the path step is no larger than dt_max."""
    while path.dt > dt_max * (1.0 + 1e-12):
        path = refine(path)
    return path


def zero_path(t_final: float, dt: float, n_modes: int) -> NoisePath:
    """All-zero increment table, for deterministic runs on the same code path."""
    n_steps = int(round(t_final / dt))
    return NoisePath(
        seed=0,
        dt=dt,
        n_steps=n_steps,
        n_modes=n_modes,
        level=0,
        increments=np.zeros((n_modes, n_steps)),
    )


def apply_noise(
    u_nodal: np.ndarray,
    dbeta: np.ndarray,
    diffusion: DiffusionModel,
    basis: SpectralBasis,
) -> np.ndarray:
    """Coefficients of x -> lambda_sigma(u(x)) * sum_i lam_i e_i(x) dbeta_i."""
    dbeta = np.asarray(dbeta, dtype=float)
    if dbeta.shape[-1] != basis.n_modes:
        raise ValueError(f"expected {basis.n_modes} mode increments, got {dbeta.shape[-1]}")
    forced = basis.synthesize(diffusion.q_spectrum * dbeta)
    return basis.analyze(diffusion.lambda_sigma(np.asarray(u_nodal, dtype=float)) * forced)


# -- batching across Monte Carlo paths ---------------------------------------


@dataclass(frozen=True)
class PathBatch:
    """Stack of equally shaped NoisePaths for vectorized multi-path runs."""

    seeds: tuple[int, ...]
    dt: float
    n_steps: int
    n_modes: int
    increments: np.ndarray  # (n_paths, n_modes, n_steps)

    @property
    def n_paths(self) -> int:
        return len(self.seeds)

    def path(self, j: int) -> NoisePath:
        return NoisePath(
            seed=self.seeds[j],
            dt=self.dt,
            n_steps=self.n_steps,
            n_modes=self.n_modes,
            level=0,
            increments=self.increments[j],
        )


def stack_paths(paths: list[NoisePath]) -> PathBatch:
    if not paths:
        raise ValueError("need at least one path")
    dt, n_steps, n_modes = paths[0].dt, paths[0].n_steps, paths[0].n_modes
    for p in paths[1:]:
        if (p.dt, p.n_steps, p.n_modes) != (dt, n_steps, n_modes):
            raise ValueError("all paths in a batch must share (dt, n_steps, n_modes)")
    return PathBatch(
        seeds=tuple(p.seed for p in paths),
        dt=dt,
        n_steps=n_steps,
        n_modes=n_modes,
        increments=np.stack([p.increments for p in paths]),
    )


def sample_batch(base_seed: int, n_paths: int, t_final: float, dt: float, n_modes: int) -> PathBatch:
    """Independent paths seeded base_seed, base_seed+1, ..."""
    return stack_paths(
        [sample_path(base_seed + j, t_final, dt, n_modes) for j in range(n_paths)]
    )


# -- binary dump/load ---------------------------------------------------------


def save_path(path: NoisePath, filename) -> None:
    """Write the increment table as little-endian float64 after a fixed header.

    Header fields: seed, dt, n_steps, n_modes.  The refinement level is not
    part of the format; a reloaded path replays identically but restarts its
    refinement lineage at level 0.
    """
    with open(filename, "wb") as fh:
        fh.write(_HEADER.pack(path.seed, path.dt, path.n_steps, path.n_modes))
        fh.write(path.increments.astype("<f8").tobytes())


def load_path(filename) -> NoisePath:
    with open(filename, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValueError(f"truncated noise dump {filename}")
        seed, dt, n_steps, n_modes = _HEADER.unpack(raw)
        table = np.frombuffer(fh.read(), dtype="<f8")
    if table.size != n_modes * n_steps:
        raise ValueError(f"noise dump {filename} has wrong table size")
    return NoisePath(
        seed=seed,
        dt=dt,
        n_steps=n_steps,
        n_modes=n_modes,
        level=0,
        increments=table.reshape(n_modes, n_steps).astype(float),
    )
