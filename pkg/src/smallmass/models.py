"""Scalar coefficient models: friction, its antiderivative, reaction, diffusion.

The friction gamma is a strictly positive bounded C^1 function with
0 < gamma0 <= gamma(r) <= gamma1.  Its antiderivative g(r) = int_0^r gamma
is strictly increasing with (g(r1)-g(r2))(r1-r2) >= gamma0*(r1-r2)^2, and is
inverted numerically by a safeguarded Newton iteration.

The diffusion operator has the diagonal multiplicative form

    [sigma(h) Q e_i](x) = lambda_sigma(h(x)) * lam_i * e_i(x),

with Q diagonal in the sine basis (Qe_i = lam_i e_i, lam_i = i^-q by
default).  The mode sum sum_i (sigma(u) Q e_i)^2 then collapses to
lambda_sigma(u(x))^2 * kappa(x) with the precomputed kernel
kappa(x) = sum_i lam_i^2 e_i(x)^2, which makes the noise-induced drift of
the small-mass limit computable in closed form:

    H(u)(x) = -gamma'(u(x)) / (2 gamma(u(x))^3) * lambda_sigma(u(x))^2 * kappa(x).

The Ito-to-Stratonovich correction G(u) is available for the consistency
identity H + G = -(1 / (2 gamma^2)) sum_i (sigma(u)Qe_i) d/du (sigma(u)Qe_i).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import SpectralBasis

_FD_STEP = 1e-6  # central-difference step for derivative fallbacks

# 32-point Gauss-Legendre rule on [0, 1]; exact to machine precision for the
# smooth coefficient functions used here.
_GL_T, _GL_W = np.polynomial.legendre.leggauss(32)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


class InversionError(RuntimeError):
    """Raised when the monotone inversion of g fails to converge."""


@dataclass(frozen=True)
class FrictionModel:
    """State-dependent friction coefficient with certified bounds."""

    gamma: Callable[[np.ndarray], np.ndarray]
    gamma_prime: Callable[[np.ndarray], np.ndarray]
    gamma0: float
    gamma1: float
    name: str = "custom"
    g_closed: Callable[[np.ndarray], np.ndarray] | None = None
    g_inverse_closed: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma0 <= self.gamma1:
            raise ValueError(
                f"need 0 < gamma0 <= gamma1, got ({self.gamma0}, {self.gamma1})"
            )


@dataclass(frozen=True)
class AntiderivativeMap:
    """g(r) = int_0^r gamma and its monotone numerical inverse."""

    friction: FrictionModel
    tol_inv: float = 1e-12
    max_iter: int = 100

    def forward(self, r) -> np.ndarray:
        """g(r), via closed form when the model supplies one, else quadrature."""
        r = np.asarray(r, dtype=float)
        if self.friction.g_closed is not None:
            return self.friction.g_closed(r)
        # g(r) = r * int_0^1 gamma(r t) dt on a fixed Gauss-Legendre rule.
        vals = self.friction.gamma(r[..., None] * _GL_T)
        return r * (vals @ _GL_W)

    def inverse(self, y) -> np.ndarray:
        """Solve g(x) = y by safeguarded Newton with a bisection fallback.

        Raises InversionError instead of returning a truncated value when the
        residual tolerance is not met within max_iter iterations.
        """
        y = np.asarray(y, dtype=float)
        if self.friction.g_inverse_closed is not None:
            return self.friction.g_inverse_closed(y)
        g0, g1 = self.friction.gamma0, self.friction.gamma1
        # gamma0 <= g(r)/r <= gamma1 brackets the root.
        lo = np.minimum(y / g0, y / g1)
        hi = np.maximum(y / g0, y / g1)
        x = y / (0.5 * (g0 + g1))
        res = self.forward(x) - y
        for _ in range(self.max_iter):
            if np.all(np.abs(res) <= self.tol_inv):
                return x
            hi = np.where(res > 0.0, np.minimum(hi, x), hi)
            lo = np.where(res < 0.0, np.maximum(lo, x), lo)
            step = res / self.friction.gamma(x)
            x_new = x - step
            bad = ~np.isfinite(x_new) | (x_new < lo) | (x_new > hi)
            x = np.where(bad, 0.5 * (lo + hi), x_new)
            res = self.forward(x) - y
        raise InversionError(
            f"g-inversion did not reach |residual| <= {self.tol_inv} "
            f"within {self.max_iter} iterations (max residual {np.max(np.abs(res)):.3e})"
        )


@dataclass(frozen=True)
class ReactionModel:
    """Lipschitz reaction term with declared growth certificate.

    The certificate states f(r)*r <= growth_lambda*r^2 + growth_c*(1 + |r|^(1+growth_delta)).
    """

    f: Callable[[np.ndarray], np.ndarray]
    lipschitz_const: float
    growth_lambda: float = 0.0
    growth_delta: float = 0.0
    growth_c: float = 0.0
    name: str = "custom"


@dataclass(frozen=True)
class DiffusionModel:
    """Diagonal multiplicative diffusion: pointwise factor times a mode spectrum."""

    lambda_sigma: Callable[[np.ndarray], np.ndarray]
    lambda_sigma_prime: Callable[[np.ndarray], np.ndarray]
    q_spectrum: np.ndarray  # lam_i, one entry per retained mode
    kappa: np.ndarray  # sum_i lam_i^2 e_i(x)^2 on the nodal grid
    sigma_sup: float  # sup_r |lambda_sigma(r)|
    sigma_inf: float  # Hilbert-Schmidt bound at the truncation
    q: float = 1.0
    name: str = "custom"


@dataclass(frozen=True)
class TransformedCoefficients:
    """Coefficients of the divergence-form rewrite rho = g(u).

    b(r) = 1/gamma(g^-1(r)) is pinched between 1/gamma1 and 1/gamma0; the
    stabilizer b_bar is the midpoint of that range, so the explicit remainder
    in the splitting has coefficient magnitude strictly below b_bar.
    """

    friction: FrictionModel
    g_map: AntiderivativeMap
    reaction: ReactionModel

    def b(self, r) -> np.ndarray:
        return 1.0 / self.friction.gamma(self.g_map.inverse(r))

    def F(self, r) -> np.ndarray:
        return self.reaction.f(self.g_map.inverse(r))

    @property
    def b_min(self) -> float:
        return 1.0 / self.friction.gamma1

    @property
    def b_max(self) -> float:
        return 1.0 / self.friction.gamma0

    @property
    def b_bar(self) -> float:
        return 0.5 * (self.b_min + self.b_max)


@dataclass(frozen=True)
class ModelSet:
    """Bundle of all coefficient models for one problem instance."""

    friction: FrictionModel
    g_map: AntiderivativeMap
    reaction: ReactionModel
    diffusion: DiffusionModel
    transformed: TransformedCoefficients = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "transformed",
            TransformedCoefficients(self.friction, self.g_map, self.reaction),
        )


# -- drift terms -------------------------------------------------------------


def noise_induced_drift(
    u_nodal: np.ndarray, friction: FrictionModel, diffusion: DiffusionModel
) -> np.ndarray:
    """Extra drift created by non-constant friction in the small-mass limit.

    H(u)(x) = -gamma'(u)/(2 gamma(u)^3) * lambda_sigma(u)^2 * kappa(x),
    evaluated pointwise on the nodal grid.
    """
    u = np.asarray(u_nodal, dtype=float)
    gam = friction.gamma(u)
    return (
        -friction.gamma_prime(u)
        / (2.0 * gam**3)
        * diffusion.lambda_sigma(u) ** 2
        * diffusion.kappa
    )


def stratonovich_correction(
    u_nodal: np.ndarray, friction: FrictionModel, diffusion: DiffusionModel
) -> np.ndarray:
    """Ito-to-Stratonovich correction G(u) for the limiting equation.

    G(u) = -1/2 sum_i d/du(sigma(u)Qe_i / gamma(u)) * (sigma(u)Qe_i / gamma(u)),
    which under the diagonal diffusion structure collapses to
    -(lambda_sigma' gamma - lambda_sigma gamma') * lambda_sigma / (2 gamma^3) * kappa.
    """
    u = np.asarray(u_nodal, dtype=float)
    gam = friction.gamma(u)
    ls = diffusion.lambda_sigma(u)
    lsp = diffusion.lambda_sigma_prime(u)
    return -(lsp * gam - ls * friction.gamma_prime(u)) * ls / (2.0 * gam**3) * diffusion.kappa


def combined_drift(
    u_nodal: np.ndarray, friction: FrictionModel, diffusion: DiffusionModel
) -> np.ndarray:
    """The closed form of H + G: -(1/(2 gamma^2)) sum_i (sigma Q e_i) d/du (sigma Q e_i)."""
    u = np.asarray(u_nodal, dtype=float)
    gam = friction.gamma(u)
    ls = diffusion.lambda_sigma(u)
    lsp = diffusion.lambda_sigma_prime(u)
    return -ls * lsp / (2.0 * gam**2) * diffusion.kappa


# -- presets -----------------------------------------------------------------


def _fd_derivative(fun: Callable, h: float = _FD_STEP) -> Callable:
    def deriv(r):
        r = np.asarray(r, dtype=float)
        return (fun(r + h) - fun(r - h)) / (2.0 * h)

    return deriv


def friction_preset(name: str, **kw) -> FrictionModel:
    """Built-in friction models.

    "constant"      gamma == value (default 1.0)
    "two_plus_sin"  gamma(r) = 2 + sin r
    "bell"          gamma(r) = gamma0 + (gamma1 - gamma0)/(1 + r^2)
    """
    if name == "constant":
        value = float(kw.pop("value", 1.0))
        if kw:
            raise ValueError(f"unknown options for constant friction: {sorted(kw)}")
        return FrictionModel(
            gamma=lambda r: np.full_like(np.asarray(r, dtype=float), value),
            gamma_prime=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
            gamma0=value,
            gamma1=value,
            name="constant",
            g_closed=lambda r: value * np.asarray(r, dtype=float),
            g_inverse_closed=lambda y: np.asarray(y, dtype=float) / value,
        )
    if name == "two_plus_sin":
        if kw:
            raise ValueError(f"unknown options for two_plus_sin friction: {sorted(kw)}")
        return FrictionModel(
            gamma=lambda r: 2.0 + np.sin(r),
            gamma_prime=lambda r: np.cos(r),
            gamma0=1.0,
            gamma1=3.0,
            name="two_plus_sin",
            g_closed=lambda r: 2.0 * np.asarray(r, dtype=float) + 1.0 - np.cos(r),
        )
    if name == "bell":
        g0 = float(kw.pop("gamma0", 1.0))
        g1 = float(kw.pop("gamma1", 2.0))
        if kw:
            raise ValueError(f"unknown options for bell friction: {sorted(kw)}")
        if not 0.0 < g0 <= g1:
            raise ValueError("bell friction needs 0 < gamma0 <= gamma1")
        return FrictionModel(
            gamma=lambda r: g0 + (g1 - g0) / (1.0 + np.asarray(r, dtype=float) ** 2),
            gamma_prime=lambda r: -2.0
            * np.asarray(r, dtype=float)
            * (g1 - g0)
            / (1.0 + np.asarray(r, dtype=float) ** 2) ** 2,
            gamma0=g0,
            gamma1=g1,
            name="bell",
            g_closed=lambda r: g0 * np.asarray(r, dtype=float)
            + (g1 - g0) * np.arctan(r),
        )
    raise ValueError(f"unknown friction preset {name!r}")


def friction_from_table(r: np.ndarray, gamma_vals: np.ndarray) -> FrictionModel:
    """Piecewise-linear friction from tabulated (r, gamma(r)) samples.

    The table is clamped outside its range; the derivative falls back to a
    central difference of the interpolant.
    """
    r = np.asarray(r, dtype=float)
    gv = np.asarray(gamma_vals, dtype=float)
    if r.ndim != 1 or r.shape != gv.shape or r.size < 2:
        raise ValueError("need matching 1-d arrays with at least two samples")
    if np.any(np.diff(r) <= 0):
        raise ValueError("table abscissae must be strictly increasing")
    if np.any(gv <= 0):
        raise ValueError("tabulated gamma values must be positive")

    def gamma(x):
        return np.interp(np.asarray(x, dtype=float), r, gv)

    return FrictionModel(
        gamma=gamma,
        gamma_prime=_fd_derivative(gamma),
        gamma0=float(gv.min()),
        gamma1=float(gv.max()),
        name="tabulated",
    )


def load_friction_csv(path) -> FrictionModel:
    """Load a tabulated friction model from a two-column CSV (r, gamma)."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"expected two columns (r, gamma) in {path}")
    return friction_from_table(data[:, 0], data[:, 1])


def reaction_preset(name: str, **kw) -> ReactionModel:
    """Built-in reaction terms.

    "zero"           f == 0
    "linear_decay"   f(r) = -r
    "cubic_clipped"  f(r) = r - r^3 inside |r| <= clip_radius, linear continuation outside
    """
    if name == "zero":
        if kw:
            raise ValueError(f"unknown options for zero reaction: {sorted(kw)}")
        return ReactionModel(
            f=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
            lipschitz_const=0.0,
            name="zero",
        )
    if name == "linear_decay":
        if kw:
            raise ValueError(f"unknown options for linear_decay reaction: {sorted(kw)}")
        return ReactionModel(
            f=lambda r: -np.asarray(r, dtype=float),
            lipschitz_const=1.0,
            growth_lambda=0.0,
            growth_delta=0.0,
            growth_c=0.0,
            name="linear_decay",
        )
    if name == "cubic_clipped":
        radius = float(kw.pop("clip_radius", 1.5))
        if kw:
            raise ValueError(f"unknown options for cubic_clipped reaction: {sorted(kw)}")
        if radius <= 0:
            raise ValueError("clip_radius must be positive")
        edge = radius - radius**3
        slope = 1.0 - 3.0 * radius**2

        def f(r):
            r = np.asarray(r, dtype=float)
            inside = r - r**3
            outside = np.sign(r) * edge + slope * (r - np.sign(r) * radius)
            return np.where(np.abs(r) <= radius, inside, outside)

        lip = max(1.0, abs(slope))
        # Certificate constants: with clipping the product f(r)r is bounded
        # above, so growth_lambda = 0 and growth_c is its numerical maximum.
        grid = np.linspace(-10.0 * radius - 10.0, 10.0 * radius + 10.0, 20001)
        c = float(np.max(f(grid) * grid))
        return ReactionModel(
            f=f,
            lipschitz_const=lip,
            growth_lambda=0.0,
            growth_delta=0.0,
            growth_c=max(c, 0.0) + 1e-9,
            name="cubic_clipped",
        )
    raise ValueError(f"unknown reaction preset {name!r}")


_DIFFUSION_FACTORS = {
    "constant": (
        lambda r: np.ones_like(np.asarray(r, dtype=float)),
        lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        1.0,
    ),
    "cosine": (np.cos, lambda r: -np.sin(r), 1.0),
    "zero": (
        lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        0.0,
    ),
}


def build_diffusion(basis: SpectralBasis, factor: str = "constant", q: float = 1.0) -> DiffusionModel:
    """Assemble the diagonal diffusion model with spectrum lam_i = i^-q.

    q > 1/2 keeps sum_i lam_i^2 finite; the default q = 1 satisfies that with
    a comfortable margin on the equi-bounded 1-d eigenfunctions.
    """
    if factor not in _DIFFUSION_FACTORS:
        raise ValueError(f"unknown diffusion factor {factor!r}")
    ls, lsp, sup = _DIFFUSION_FACTORS[factor]
    i = np.arange(1, basis.n_modes + 1, dtype=float)
    lam = i ** (-q)
    emat = basis.mode_matrix()  # (M, N)
    kappa = emat**2 @ lam**2
    sigma_inf = sup * float(np.sqrt(np.sum(lam**2)))
    return DiffusionModel(
        lambda_sigma=ls,
        lambda_sigma_prime=lsp,
        q_spectrum=lam,
        kappa=kappa,
        sigma_sup=sup,
        sigma_inf=sigma_inf,
        q=q,
        name=factor,
    )


def build_model_set(
    basis: SpectralBasis,
    friction: FrictionModel,
    reaction: ReactionModel,
    diffusion: DiffusionModel,
    tol_inv: float = 1e-12,
) -> ModelSet:
    return ModelSet(
        friction=friction,
        g_map=AntiderivativeMap(friction, tol_inv=tol_inv),
        reaction=reaction,
        diffusion=diffusion,
    )
