"""Pointwise red-blood-cell shape-tensor dynamics and derived stress measures.

The cell is described by a symmetric positive-definite 3x3 tensor whose
eigenvalues are the squared semi-axes of an ellipsoid.  Its local evolution
under a frozen velocity gradient combines relaxation toward a volume-equal
sphere, elongation by the strain rate, and rotation by the vorticity:

    dS/dt = -a1 * (S - g(S) I) + a2 * (E S + S E) + a3 * (W S - S W)

with ``g(S) = 3 det(S) / II(S)`` chosen so the cell volume is conserved.
From a shape one obtains the distortion ``D = (L - W) / (L + W)`` of the
extreme semi-axes, the effective shear stress, and the surface-area strain
used by the pore release model.  All computations here are local to a point;
fields of shapes are integrated independently (and trivially in parallel).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ellipeinc, ellipkinc

from .errors import (
    DegenerateTensorError,
    IntegrationInstabilityError,
    SaturationError,
)

_IDENTITY3 = np.eye(3)

#: Exponent of the Thomsen ellipsoid surface-area approximation (< 1.1% error).
THOMSEN_P = 1.6075


@dataclass(frozen=True)
class MorphologyParams:
    """Relaxation rate (1/s) and dimensionless elongation/rotation weights."""

    alpha1: float = 5.0
    alpha2: float = 4.2298e-4
    alpha3: float = 4.2298e-4

    def __post_init__(self):
        if not self.alpha1 > 0.0:
            raise ValueError(f"relaxation rate alpha1 must be > 0, got {self.alpha1}")


def _second_invariant(S):
    return 0.5 * (np.trace(S) ** 2 - np.trace(S @ S))


def shape_rate(S, grad_u, params: MorphologyParams = MorphologyParams()):
    """Time derivative of the shape tensor for a frozen velocity gradient."""
    S = np.asarray(S, dtype=float)
    grad_u = np.asarray(grad_u, dtype=float)
    second = _second_invariant(S)
    if abs(second) <= 1e-12 * max(np.trace(S) ** 2, np.finfo(float).tiny):
        raise DegenerateTensorError(
            "second invariant of the shape tensor is (nearly) zero"
        )
    g = 3.0 * np.linalg.det(S) / second
    strain = 0.5 * (grad_u + grad_u.T)
    vort = 0.5 * (grad_u - grad_u.T)
    return (
        -params.alpha1 * (S - g * _IDENTITY3)
        + params.alpha2 * (strain @ S + S @ strain)
        + params.alpha3 * (vort @ S - S @ vort)
    )


def integrate_shape(S0, grad_u, t_end, dt, params: MorphologyParams = MorphologyParams()):
    """Integrate the shape ODE with classical RK4 at a fixed step.

    The state is symmetrized after every step and checked for positive
    definiteness; losing it aborts the integration.

    Raises:
        IntegrationInstabilityError: positive definiteness lost (reduce dt).
    """
    if dt <= 0.0:
        raise ValueError(f"time step must be > 0, got {dt}")
    if t_end < 0.0:
        raise ValueError(f"end time must be >= 0, got {t_end}")
    S = 0.5 * (np.asarray(S0, dtype=float) + np.asarray(S0, dtype=float).T)
    _require_spd(S, "initial shape tensor")
    remaining = float(t_end)
    step = 0
    while remaining > 0.0:
        h = min(dt, remaining)
        k1 = shape_rate(S, grad_u, params)
        k2 = shape_rate(S + 0.5 * h * k1, grad_u, params)
        k3 = shape_rate(S + 0.5 * h * k2, grad_u, params)
        k4 = shape_rate(S + h * k3, grad_u, params)
        S = S + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        S = 0.5 * (S + S.T)
        step += 1
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise IntegrationInstabilityError(
                f"shape tensor lost positive definiteness at step {step} "
                f"(t = {step * dt:.3e} s); retry with a smaller dt"
            ) from None
        remaining -= h
    return S


def _require_spd(S, what):
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise DegenerateTensorError(f"{what} is not positive definite") from None


def semi_axes(S):
    """Longest and shortest ellipsoid semi-axes ``(L, W)`` of a shape tensor."""
    S = np.asarray(S, dtype=float)
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= 0.0:
        raise DegenerateTensorError("shape tensor has a non-positive eigenvalue")
    return float(np.sqrt(eig[-1])), float(np.sqrt(eig[0]))


def distortion(L, W):
    """Cell distortion ``D = (L - W) / (L + W)``."""
    if not L >= W or not W > 0.0:
        raise DegenerateTensorError(f"semi-axes must satisfy L >= W > 0, got {L}, {W}")
    return (L - W) / (L + W)


def effective_stress(D, visc, params: MorphologyParams = MorphologyParams(), tol=1e-12):
    """Effective shear stress ``2 visc a1 D / ((1 - D^2) a2)`` (g/cm/s^2).

    Raises:
        SaturationError: distortion within ``tol`` of 1, where the formula
            is singular.
    """
    if D >= 1.0 - tol:
        raise SaturationError(f"distortion {D} at the stress singularity D -> 1")
    if D < 0.0:
        raise ValueError(f"distortion must be >= 0, got {D}")
    return 2.0 * visc * params.alpha1 * D / ((1.0 - D * D) * params.alpha2)


def ellipsoid_surface_area(a, b, c, method="thomsen"):
    """Surface area of an ellipsoid with semi-axes a, b, c.

    ``thomsen`` is the fast symmetric-power-mean approximation (error below
    1.1%); ``exact`` evaluates the Legendre-form elliptic integrals.
    """
    if min(a, b, c) <= 0.0:
        raise DegenerateTensorError(f"semi-axes must be positive, got {(a, b, c)}")
    if method == "thomsen":
        p = THOMSEN_P
        mean = ((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3.0
        return 4.0 * np.pi * mean ** (1.0 / p)
    if method != "exact":
        raise ValueError(f"unknown surface-area method {method!r}")
    big, mid, small = sorted((a, b, c), reverse=True)
    if (big - small) / big < 1e-12:
        return 4.0 * np.pi * big * small  # sphere up to roundoff
    phi = np.arccos(small / big)
    m = (big**2 * (mid**2 - small**2)) / (mid**2 * (big**2 - small**2))
    sin_phi = np.sin(phi)
    return float(
        2.0 * np.pi * small**2
        + (2.0 * np.pi * big * mid / sin_phi)
        * (ellipeinc(phi, m) * sin_phi**2 + ellipkinc(phi, m) * np.cos(phi) ** 2)
    )


def area_strain(S, A0, method="thomsen"):
    """Surface-area strain ``(A_S - A0) / A0`` of a shape tensor.

    The ellipsoid semi-axes are the square roots of the eigenvalues of S.
    """
    if not A0 > 0.0:
        raise ValueError(f"reference area must be > 0, got {A0}")
    S = np.asarray(S, dtype=float)
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= 0.0:
        raise DegenerateTensorError("shape tensor has a non-positive eigenvalue")
    axes = np.sqrt(eig)
    area = ellipsoid_surface_area(axes[2], axes[1], axes[0], method=method)
    return (area - A0) / A0
