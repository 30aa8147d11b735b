"""Change of variable between the physical concentration and the solved one.

The solver works on an unbounded variable ``cbar``; the physical
concentration ``c`` is recovered through one of three maps:

* ``identity``      c = cbar
* ``upper_bound``   c = nu * (1 - exp(-cbar / k)),   c < nu for all cbar
* ``logistic``      c = nu / (1 + exp(-cbar / k)),   0 < c < nu

With ``upper_bound`` the advection-reaction equation for a saturating
reaction ``mu * (nu - c)`` turns into pure advection of ``cbar`` with the
constant source ``k * mu``.  The ``logistic`` map would instead produce an
exponentially large source near c = 0, so it is only accepted for
source-free models (``mu = 0``).
"""

from dataclasses import dataclass

import numpy as np

from .errors import TransformDomainError, UnsupportedTransformError

KINDS = ("identity", "upper_bound", "logistic")


@dataclass(frozen=True)
class Transform:
    """Concentration map selected by ``kind`` with saturation ``nu``, scale ``k``."""

    kind: str = "identity"
    nu: float = 1.0
    k: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedTransformError(f"unknown transform kind {self.kind!r}")
        if not self.nu > 0.0:
            raise UnsupportedTransformError(f"transform needs nu > 0, got {self.nu}")
        if not self.k > 0.0:
            raise UnsupportedTransformError(f"transform needs k > 0, got {self.k}")

    def to_physical(self, cbar):
        """Physical concentration for solved value(s) ``cbar``.

        The bounded maps clamp their output to the largest representable
        value strictly inside the admissible interval, so the bound survives
        floating-point saturation for arbitrarily large ``cbar``.
        """
        cbar = np.asarray(cbar, dtype=float)
        below_nu = np.nextafter(self.nu, -np.inf)
        if self.kind == "identity":
            out = cbar
        elif self.kind == "upper_bound":
            out = np.minimum(-self.nu * np.expm1(-cbar / self.k), below_nu)
        else:
            with np.errstate(over="ignore"):
                out = self.nu / (1.0 + np.exp(-cbar / self.k))
            out = np.clip(out, np.nextafter(0.0, 1.0), below_nu)
        return out if out.ndim else float(out)

    def to_transformed(self, c):
        """Inverse of :meth:`to_physical`.

        Raises:
            TransformDomainError: ``c`` outside the open admissible range
                (``c < nu`` for ``upper_bound``; ``0 < c < nu`` for
                ``logistic``).
        """
        c = np.asarray(c, dtype=float)
        if self.kind == "identity":
            out = c
        elif self.kind == "upper_bound":
            if np.any(c >= self.nu):
                raise TransformDomainError(
                    f"upper_bound transform requires c < nu = {self.nu}"
                )
            out = -self.k * np.log1p(-c / self.nu)
        else:
            if np.any(c <= 0.0) or np.any(c >= self.nu):
                raise TransformDomainError(
                    f"logistic transform requires 0 < c < nu = {self.nu}"
                )
            out = self.k * (np.log(c) - np.log(self.nu - c))
        return out if out.ndim else float(out)


def transformed_reaction(transform: Transform, mu_r, nu_r):
    """Source and linear reaction coefficient of the solved equation.

    Returns ``(source, linear)`` such that the residual of the solved
    variable reads ``d(cbar)/dt + u . grad(cbar) + linear * cbar - source``:

    * ``upper_bound``: ``(k * mu_r, 0)`` -- the reaction collapses into a
      constant source.
    * ``identity``: ``(mu_r * nu_r, mu_r)`` -- the untransformed saturating
      reaction.
    * ``logistic``: only valid for ``mu_r = 0`` (pure advection).
    """
    def zeros():
        arr = np.asarray(mu_r, dtype=float)
        return np.zeros_like(arr) if arr.ndim else 0.0

    if transform.kind == "upper_bound":
        return transform.k * mu_r, zeros()
    if transform.kind == "identity":
        return mu_r * nu_r, mu_r
    if np.any(np.asarray(mu_r) != 0.0):
        raise UnsupportedTransformError(
            "logistic transform is restricted to source-free models (mu_r = 0); "
            "its transformed source grows exponentially for small concentrations"
        )
    return zeros(), zeros()
