"""Energy functionals, trajectory metrics, and mass-scaling audits.

Energy quantities along a wave run:

    K_mu(u, v)  = ||u||_{H^1}^2 + mu ||v||_H^2
    Lambda(u)   = int_domain Gamma(u(x)) dx,   Gamma(r) = int_0^r x gamma(x) dx,

with the pinching (gamma0/2) ||u||_H^2 <= Lambda(u) <= (gamma1/2) ||u||_H^2,
which the nodal quadrature preserves exactly because it holds pointwise.

Trajectory distances use the weighted weak-space metrics

    d_X1 = sum_{n<=n_max} 2^-n ( max_t ||diff(t)||_{H^{-1/n}} AND 1 )
    d_X2 = sum_{n<=n_max} 2^-n ( ||diff||_{L^n(0,T;H)} AND 1 )

truncated at n_max = 16; the truncation tail 2^-n_max is reported as explicit
uncertainty.  Plain variants report sup_t ||.||_{H^-1} and the L^2(0,T;H)
norm.  Time norms are taken over the common output grid, a controlled
underestimate for time-Hoelder trajectories.

The scaling audit fits log-log trends across a mass ladder: it checks that
sqrt(mu) * E sup_t K_mu does not grow as mu decreases, that mu * E sup_t ||v||_H
decays with a positive exponent, and that E sup_t ||u||_H^2 stays flat.  These
are trend tests; no sharp constants are asserted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import SpectralBasis
from .models import FrictionModel, ModelSet
from .wave import WaveTrajectory

N_MAX_METRIC = 16

# Gauss-Legendre rule reused for Gamma(r) = r^2 int_0^1 t gamma(r t) dt.
_GL_T, _GL_W = np.polynomial.legendre.leggauss(32)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


def friction_energy_density(friction: FrictionModel, r) -> np.ndarray:
    """Gamma(r) = int_0^r x gamma(x) dx, by a fixed Gauss-Legendre rule."""
    r = np.asarray(r, dtype=float)
    vals = friction.gamma(r[..., None] * _GL_T) * _GL_T
    return r * r * (vals @ _GL_W)


def lambda_functional(basis: SpectralBasis, friction: FrictionModel, u_coeffs) -> np.ndarray:
    """Lambda(u) = int Gamma(u(x)) dx on the nodal grid."""
    u_nodal = basis.synthesize(u_coeffs)
    return basis.integrate(friction_energy_density(friction, u_nodal))


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    energy: float  # K_mu
    lam: float  # Lambda(u)
    u_h: float
    u_h1: float
    v_h: float


def energy_records(
    basis: SpectralBasis, models: ModelSet, traj: WaveTrajectory
) -> list[EnergyRecord]:
    """Per-output-time energy diagnostics of a single-path trajectory."""
    if traj.u.ndim != 2:
        raise ValueError("energy_records expects an unbatched trajectory")
    recs = []
    for k, t in enumerate(traj.times):
        u, v = traj.u[k], traj.v[k]
        uh = float(basis.sobolev_norm(u, 0.0))
        uh1 = float(basis.sobolev_norm(u, 1.0))
        vh = float(basis.sobolev_norm(v, 0.0))
        recs.append(
            EnergyRecord(
                t=float(t),
                energy=uh1**2 + traj.mu * vh**2,
                lam=float(lambda_functional(basis, models.friction, u)),
                u_h=uh,
                u_h1=uh1,
                v_h=vh,
            )
        )
    return recs


# -- metrics --------------------------------------------------------------------


@dataclass(frozen=True)
class MetricReport:
    """Distances between two trajectories on a common time grid.

    All sums are per trailing batch element; scalars for unbatched input.
    """

    d_x1: np.ndarray
    d_x2: np.ndarray
    tail: float  # truncation tail bound 2^-n_max, additive uncertainty
    sup_hm1: np.ndarray  # sup_t ||diff||_{H^-1}
    l2_h: np.ndarray  # (int_0^T ||diff||_H^2 dt)^(1/2)
    n_max: int = N_MAX_METRIC

    def value(self, which: str):
        if which == "x1":
            return self.d_x1
        if which == "x2":
            return self.d_x2
        if which == "plain":
            return self.sup_hm1 + self.l2_h
        raise ValueError(f"unknown metric selector {which!r}")


def metric_distance(
    times: np.ndarray,
    coeffs_a: np.ndarray,
    coeffs_b: np.ndarray,
    basis: SpectralBasis,
    which: str = "all",
    n_max: int = N_MAX_METRIC,
) -> MetricReport:
    """Distance report between coefficient trajectories of shape (T, ..., N)."""
    a = np.asarray(coeffs_a, dtype=float)
    b = np.asarray(coeffs_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    times = np.asarray(times, dtype=float)
    if len(times) != a.shape[0]:
        raise ValueError("time grid does not match trajectories")
    if which not in ("all", "x1", "x2", "plain"):
        raise ValueError(f"unknown metric selector {which!r}")
    diff_sq = (a - b) ** 2  # (T, ..., N)

    def h_norms(s: float) -> np.ndarray:
        return np.sqrt(diff_sq @ basis.alphas**s)  # (T, ...)

    h_t = h_norms(0.0)
    d_x1 = 0.0
    d_x2 = 0.0
    for n in range(1, n_max + 1):
        w = 2.0**-n
        d_x1 = d_x1 + w * np.minimum(np.max(h_norms(-1.0 / n), axis=0), 1.0)
        ln = (np.trapezoid(h_t**n, times, axis=0)) ** (1.0 / n)
        d_x2 = d_x2 + w * np.minimum(ln, 1.0)
    sup_hm1 = np.max(h_norms(-1.0), axis=0)
    l2_h = np.sqrt(np.trapezoid(h_t**2, times, axis=0))
    return MetricReport(
        d_x1=d_x1, d_x2=d_x2, tail=2.0**-n_max, sup_hm1=sup_hm1, l2_h=l2_h, n_max=n_max
    )


# -- scaling audit ----------------------------------------------------------------


@dataclass
class LadderPoint:
    """Per-mass Monte Carlo summaries (arrays over paths)."""

    mu: float
    sup_energy: np.ndarray  # sup_t K_mu per path
    sup_v_h: np.ndarray
    sup_u_h: np.ndarray
    int_u_h1_sq: np.ndarray


def ladder_point(traj: WaveTrajectory) -> LadderPoint:
    return LadderPoint(
        mu=traj.mu,
        sup_energy=np.atleast_1d(traj.sup_energy),
        sup_v_h=np.atleast_1d(traj.sup_v_h),
        sup_u_h=np.atleast_1d(traj.sup_u_h),
        int_u_h1_sq=np.atleast_1d(traj.int_u_h1_sq),
    )


@dataclass
class ScalingAudit:
    mus: list[float]
    sqrt_mu_sup_energy: list[float]
    mu_sup_v: list[float]
    sup_u_sq: list[float]
    int_u_h1_sq: list[float]
    slope_energy: float
    slope_velocity: float
    spread_displacement: float
    flags: dict = field(default_factory=dict)


def scaling_audit(
    points: list[LadderPoint],
    min_paths: int = 8,
    slope_energy_min: float = -0.05,
    slope_velocity_min: float = 0.2,
    spread_max: float = 0.25,
) -> ScalingAudit:
    """Trend tests across a mass ladder; diverged/non-finite input fails all flags."""
    if len(points) < 4:
        raise ValueError(f"need at least 4 ladder points, got {len(points)}")
    for p in points:
        if p.sup_energy.size < min_paths:
            raise ValueError(
                f"need at least {min_paths} paths per ladder point, got {p.sup_energy.size}"
            )
    points = sorted(points, key=lambda p: p.mu, reverse=True)
    mus = np.array([p.mu for p in points])
    e = np.array([np.sqrt(p.mu) * np.mean(p.sup_energy) for p in points])
    v = np.array([p.mu * np.mean(p.sup_v_h) for p in points])
    u2 = np.array([np.mean(p.sup_u_h**2) for p in points])
    iu = np.array([np.mean(p.int_u_h1_sq) for p in points])

    finite = np.all(np.isfinite(e)) and np.all(np.isfinite(v)) and np.all(np.isfinite(u2))
    positive = finite and np.all(e > 0) and np.all(v > 0) and np.all(u2 > 0)
    if positive:
        slope_e = float(np.polyfit(np.log(mus), np.log(e), 1)[0])
        slope_v = float(np.polyfit(np.log(mus), np.log(v), 1)[0])
        spread = float((u2.max() - u2.min()) / u2.mean())
    else:
        slope_e = np.nan
        slope_v = np.nan
        spread = np.inf
    flags = {
        "energy_bounded": positive and slope_e >= slope_energy_min,
        "velocity_decay": positive and slope_v >= slope_velocity_min,
        "displacement_flat": positive and spread < spread_max,
    }
    return ScalingAudit(
        mus=list(map(float, mus)),
        sqrt_mu_sup_energy=list(map(float, e)),
        mu_sup_v=list(map(float, v)),
        sup_u_sq=list(map(float, u2)),
        int_u_h1_sq=list(map(float, iu)),
        slope_energy=slope_e,
        slope_velocity=slope_v,
        spread_displacement=spread,
        flags=flags,
    )


# -- convergence report -------------------------------------------------------------


@dataclass
class ConvergenceReport:
    """Coupled mass-ladder distances with trend flags."""

    ladder: list[float]
    mean: list[float]  # mean over paths of sup_Hm1 + L2(0,T;H) distance
    se: list[float]
    per_path: np.ndarray  # (n_mu, n_paths)
    slope: float  # log-log slope of mean distance vs mu
    flags: dict

    def as_dict(self) -> dict:
        return {
            "ladder": self.ladder,
            "distances": [
                {"mu": m, "mean": d, "se": s}
                for m, d, s in zip(self.ladder, self.mean, self.se)
            ],
            "slopes": {"distance_vs_mu": self.slope},
            "flags": self.flags,
        }


def convergence_report(
    ladder: list[float],
    per_path: np.ndarray,
    ratio_max: float = 0.4,
    allowed_inversions: int = 1,
) -> ConvergenceReport:
    """Assemble the report; the ladder must be sorted from largest mass down.

    Flags: `monotone` allows `allowed_inversions` increases that stay within
    one combined standard error; `ratio` compares the smallest-mass distance
    to ratio_max times the largest-mass one.
    """
    per_path = np.asarray(per_path, dtype=float)
    if per_path.shape[0] != len(ladder):
        raise ValueError("per-path matrix does not match the ladder")
    if sorted(ladder, reverse=True) != list(ladder):
        raise ValueError("ladder must be sorted from largest to smallest mass")
    mean = per_path.mean(axis=1)
    se = per_path.std(axis=1, ddof=1) / np.sqrt(per_path.shape[1])
    inversions = 0
    hard_violation = False
    for k in range(len(ladder) - 1):
        if mean[k + 1] >= mean[k]:
            inversions += 1
            if mean[k + 1] - mean[k] > np.sqrt(se[k] ** 2 + se[k + 1] ** 2):
                hard_violation = True
    monotone = (not hard_violation) and inversions <= allowed_inversions
    ratio_ok = bool(mean[-1] < ratio_max * mean[0])
    slope = float(np.polyfit(np.log(ladder), np.log(np.maximum(mean, 1e-300)), 1)[0])
    return ConvergenceReport(
        ladder=list(map(float, ladder)),
        mean=list(map(float, mean)),
        se=list(map(float, se)),
        per_path=per_path,
        slope=slope,
        flags={"monotone": monotone, "ratio": ratio_ok, "inversions": inversions},
    )
