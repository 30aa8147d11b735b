"""Reaction-model catalog for hemoglobin release and drug transport.

Every model is reduced to the pair ``(mu_r, nu_r)`` of the saturating
reaction ``mu_r * (nu_r - c)`` driving the scalar transport equation:

===============  ==========================================  ===========
model            mu_r                                        nu_r
===============  ==========================================  ===========
power law        (A * sigma_s**alpha) ** (1/beta)            1
pore model       kappa/(1-Hct) * A_p(eps)/V_RBC              1 - Hct
drug release     0                                           c_S0
===============  ==========================================  ===========

Units follow the CGS convention used throughout: stresses in g/cm/s^2,
shear rates in 1/s, viscosity in g/cm/s.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ComplexResultError


@dataclass(frozen=True)
class PowerLawParams:
    """Stress/time power-law fit ``IH = A * sigma^alpha * t^beta``."""

    A: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.A > 0.0 and self.alpha > 0.0 and 0.0 < self.beta <= 1.0):
            raise ValueError(
                f"power law needs A > 0, alpha > 0, 0 < beta <= 1; "
                f"got A={self.A}, alpha={self.alpha}, beta={self.beta}"
            )


#: Published power-law fits, by research group and blood species.
POWER_LAW_PRESETS = {
    "giersiepen": PowerLawParams(A=3.62e-7, alpha=2.416, beta=0.785),
    "song": PowerLawParams(A=1.8e-8, alpha=1.991, beta=0.765),
    "zhang": PowerLawParams(A=1.228e-7, alpha=1.9918, beta=0.6606),
    "ding_human": PowerLawParams(A=3.458e-8, alpha=2.0639, beta=0.2777),
    "ding_porcine": PowerLawParams(A=6.701e-6, alpha=1.0981, beta=0.2778),
}


def linear_ramp_pore_area(c_p: float, eps0: float) -> Callable:
    """Surrogate pore-area map ``A_p(eps) = c_p * max(0, eps - eps0)`` (cm^2)."""
    if c_p < 0.0:
        raise ValueError("pore-area slope c_p must be >= 0")

    def pore_area(eps):
        return c_p * np.maximum(0.0, np.asarray(eps, dtype=float) - eps0)

    return pore_area


def tabulated_pore_area(strains, areas) -> Callable:
    """Piecewise-linear pore-area map from tabulated (strain, area) samples."""
    strains = np.asarray(strains, dtype=float)
    areas = np.asarray(areas, dtype=float)
    if strains.ndim != 1 or strains.shape != areas.shape or len(strains) < 2:
        raise ValueError("need matching 1D strain/area tables with >= 2 rows")
    if np.any(np.diff(strains) <= 0.0):
        raise ValueError("strain table must be strictly increasing")
    if np.any(areas < 0.0) or np.any(np.diff(areas) < 0.0):
        raise ValueError("pore-area table must be nonnegative and nondecreasing")

    def pore_area(eps):
        return np.interp(eps, strains, areas, left=areas[0], right=areas[-1])

    return pore_area


@dataclass(frozen=True)
class PoreModelParams:
    """Membrane-pore release model parameters.

    ``pore_area_model`` maps surface-area strain to total pore area (cm^2)
    and must vanish at or below the threshold strain ``eps0``.
    """

    h: float = 4.48e-8
    k_exp: float = 1.31
    Hct: float = 0.36
    V_RBC: float = 9.0e-11
    eps0: float = 0.0016
    pore_area_model: Callable = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.Hct < 1.0:
            raise ValueError(f"hematocrit must lie in (0, 1), got {self.Hct}")
        if self.h < 0.0:
            raise ValueError(f"mass-transfer coefficient h must be >= 0, got {self.h}")
        if self.pore_area_model is None:
            object.__setattr__(
                self, "pore_area_model", linear_ramp_pore_area(1.0, self.eps0)
            )


@dataclass(frozen=True)
class ReactionCoefficients:
    """Per-point pair of the saturating reaction ``mu_r * (nu_r - c)``."""

    mu_r: object
    nu_r: object

    def __post_init__(self):
        if np.any(np.asarray(self.mu_r) < 0.0):
            raise ValueError("reaction rate mu_r must be >= 0")
        if np.any(np.asarray(self.nu_r) <= 0.0):
            raise ValueError("saturation value nu_r must be > 0")


def viscous_shear_stress(grad_u, visc):
    """Scalar shear stress from the second invariant of the strain rate.

    ``E = (grad_u + grad_u^T) / 2``; the invariant
    ``II_E = ((tr E)^2 - tr(E^2)) / 2`` is non-positive for traceless E, and
    the stress is ``2 * visc * sqrt(-II_E)``.  Roundoff-positive invariants
    are clamped to zero.
    """
    grad_u = np.asarray(grad_u, dtype=float)
    strain = 0.5 * (grad_u + grad_u.T)
    trace = np.trace(strain)
    second_inv = 0.5 * (trace**2 - np.trace(strain @ strain))
    return 2.0 * visc * np.sqrt(max(0.0, -second_inv))


def shear_rate_from_stress(sigma_s, visc):
    """Scalar fluid shear rate ``G_f = sigma_s / visc`` (1/s)."""
    return np.asarray(sigma_s, dtype=float) / visc


def powerlaw_coefficients(sigma_s, params: PowerLawParams) -> ReactionCoefficients:
    """Reaction pair of the time-linearized power law: ``(A s^alpha)^(1/beta), 1``."""
    sigma_s = np.asarray(sigma_s, dtype=float)
    if np.any(sigma_s < 0.0):
        raise ValueError("scalar shear stress must be >= 0")
    mu = (params.A * sigma_s**params.alpha) ** (1.0 / params.beta)
    return ReactionCoefficients(mu_r=mu if mu.ndim else float(mu), nu_r=1.0)


def mass_transfer(g_f, params: PoreModelParams):
    """Pore mass-transfer coefficient ``kappa = h * G_f**k`` (1/s)."""
    g_f = np.asarray(g_f, dtype=float)
    if np.any(g_f < 0.0):
        raise ValueError("fluid shear rate must be >= 0")
    kappa = params.h * g_f**params.k_exp
    return kappa if kappa.ndim else float(kappa)


def pore_coefficients(eps, g_f, params: PoreModelParams) -> ReactionCoefficients:
    """Reaction pair of the membrane-pore release model.

    ``mu_r = kappa / (1 - Hct) * A_p(eps) / V_RBC`` and ``nu_r = 1 - Hct``,
    so that ``mu_r * (nu_r - c)`` reproduces the Fick-law release rate.
    Below the threshold strain the pore area, and hence ``mu_r``, is zero.
    """
    eps = np.asarray(eps, dtype=float)
    if np.any(eps < -1.0):
        raise ValueError("surface area strain cannot be below -1")
    kappa = mass_transfer(g_f, params)
    area = params.pore_area_model(eps)
    mu = kappa / (1.0 - params.Hct) * area / params.V_RBC
    mu = mu if np.asarray(mu).ndim else float(mu)
    return ReactionCoefficients(mu_r=mu, nu_r=1.0 - params.Hct)


def drug_coefficients(c_s0) -> ReactionCoefficients:
    """Source-free drug transport: pure advection saturating at the charge c_S0."""
    return ReactionCoefficients(mu_r=0.0, nu_r=float(c_s0))


def ih_from_linearized(l_ih, beta, clamp_negative=True):
    """Convert the time-linearized index ``l_IH`` back to ``IH = l_IH**beta``.

    Negative values are clamped to zero when ``clamp_negative`` is set;
    otherwise a fractional ``beta`` on a negative base is rejected, since it
    would produce a complex index.
    """
    l_arr = np.asarray(l_ih, dtype=float)
    negative = l_arr < 0.0
    if np.any(negative):
        if clamp_negative:
            l_arr = np.where(negative, 0.0, l_arr)
        elif float(beta) != int(beta):
            raise ComplexResultError(
                f"negative linearized index with fractional exponent beta={beta}; "
                "enable clamping or fix the concentration field"
            )
        else:
            out = l_arr ** int(beta)
            return out if out.ndim else float(out)
    out = l_arr**beta
    return out if out.ndim else float(out)
