"""Reference channel geometry and the Hanzawa transform onto the deformed domain.

The reference domain is ``(0, Lx) [x (0, Ly)] x (0, H)`` with the flexible wall
on the top face, parametrized as a graph ``phi(y) = (y, H)`` with normal
``e_d``. Inside the tubular band ``H - L < x_d <= H`` points are pushed along
``e_d`` by ``eta(y) * cutoff(s)`` where ``s = x_d - H``; elsewhere the map is
the identity.
"""
from dataclasses import dataclass, field

import numpy as np

from . import fourier
from .errors import (DisplacementExceedsTube, NonInvertible, OutOfDomain,
                     SingularJacobian, ValidationError)


def _smoothstep(x):
    return x * x * (3.0 - 2.0 * x)


def _smoothstep_integral(x):
    return x**3 - 0.5 * x**4


def _smoothstep_slope(x):
    return 6.0 * x * (1.0 - x)


class PlateauCutoff:
    """C^2 piecewise-polynomial cutoff, 0 near ``s = -L`` and 1 near ``s = 0``.

    The slope profile is a plateau with C^1 cubic ramps, so the maximal slope is
    only ``1 / (L (1 - 2 flat - ramp))``. This keeps ``1 + eta * cutoff'(s)``
    positive for displacements up to about ``0.93 L``.
    """

    def __init__(self, halfwidth, flat=0.01, ramp=0.05):
        if not (0.0 <= flat and 0.0 < ramp and 2 * flat + 2 * ramp < 1.0):
            raise ValueError("flat/ramp fractions leave no plateau")
        self.L = float(halfwidth)
        self.flat = flat
        self.ramp = ramp
        self.mass = 1.0 - 2.0 * flat - ramp

    def _t(self, s):
        return np.clip((np.asarray(s, dtype=float) + self.L) / self.L, 0.0, 1.0)

    def __call__(self, s):
        t = self._t(s)
        a, b = self.flat, self.ramp
        up = b * _smoothstep_integral(np.clip((t - a) / b, 0.0, 1.0))
        mid = np.clip(t - a - b, 0.0, 1.0 - 2 * a - 2 * b)
        down = b * (0.5 - _smoothstep_integral(np.clip((1.0 - a - t) / b, 0.0, 1.0)))
        return (up + mid + down) / self.mass

    def derivative(self, s):
        t = self._t(s)
        a, b = self.flat, self.ramp
        r = np.where(t < a + b, _smoothstep(np.clip((t - a) / b, 0.0, 1.0)),
                     _smoothstep(np.clip((1.0 - a - t) / b, 0.0, 1.0)))
        return r / (self.L * self.mass)

    def max_slope(self):
        return 1.0 / (self.L * self.mass)


class SmoothstepCutoff:
    """Quintic blend: 0 on ``[-L, -3L/4]``, 1 on ``[-L/4, 0]``."""

    def __init__(self, halfwidth):
        self.L = float(halfwidth)

    def _x(self, s):
        return np.clip((np.asarray(s, dtype=float) + 0.75 * self.L) / (0.5 * self.L), 0.0, 1.0)

    def __call__(self, s):
        x = self._x(s)
        return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)

    def derivative(self, s):
        x = self._x(s)
        return 30.0 * x * x * (1.0 - x) ** 2 / (0.5 * self.L)

    def max_slope(self):
        return 1.875 / (0.5 * self.L)


class LinearCutoff:
    """``1 + s/L`` on ``[-L, 0]``; only continuous, meant for tests."""

    def __init__(self, halfwidth):
        self.L = float(halfwidth)

    def __call__(self, s):
        return np.clip(1.0 + np.asarray(s, dtype=float) / self.L, 0.0, 1.0)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        return np.where((s > -self.L) & (s < 0.0), 1.0 / self.L, 0.0)

    def max_slope(self):
        return 1.0 / self.L


@dataclass(frozen=True)
class ReferenceGeometry:
    """Periodic channel; ``extent`` lists the box lengths, wall-normal axis last."""

    dim: int = 2
    extent: tuple = (1.0, 1.0)
    tube_halfwidth: float = 0.4
    cutoff: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValidationError("dim", "must be 2 or 3")
        if len(self.extent) != self.dim or min(self.extent) <= 0:
            raise ValidationError("extent", f"need {self.dim} positive lengths")
        if not 0.0 < self.tube_halfwidth <= 0.5 * self.height:
            raise ValidationError("tube_halfwidth", "need 0 < L <= H/2")
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", PlateauCutoff(self.tube_halfwidth))

    @property
    def height(self):
        return float(self.extent[-1])

    @property
    def period(self):
        return tuple(float(e) for e in self.extent[:-1])

    @property
    def structure_dim(self):
        return self.dim - 1

    def boundary_point(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.concatenate([y, np.full((y.shape[0], 1), self.height)], axis=1)

    def base_normal(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        n = np.zeros((y.shape[0], self.dim))
        n[:, -1] = 1.0
        return n

    def closest_point(self, x):
        x = np.asarray(x, dtype=float)
        return np.mod(x[..., :-1], self.period)

    def signed_distance(self, x):
        return np.asarray(x, dtype=float)[..., -1] - self.height

    def structure_mesh(self, n):
        """Mesh coordinates for ``n`` points per periodic axis."""
        axes = [np.arange(m) * p / m for m, p in zip(np.broadcast_to(n, (self.dim - 1,)), self.period)]
        return axes


class HanzawaMap:
    """Discrete Hanzawa transform for one displacement sample.

    Immutable after construction; ``eta`` is interpolated trigonometrically
    between the structure-mesh samples, so the map is smooth in ``y``.
    """

    def __init__(self, geometry, eta, newton_tol=1e-13, newton_maxiter=50):
        eta = np.array(eta, dtype=float)
        if eta.ndim != geometry.structure_dim:
            raise ValueError(f"eta must be a {geometry.structure_dim}D array")
        eta.setflags(write=False)
        self.geometry = geometry
        self.eta = eta
        self.cutoff = geometry.cutoff
        self.newton_tol = newton_tol
        self.newton_maxiter = newton_maxiter
        L = geometry.tube_halfwidth
        peak = self._peak_displacement()
        if peak >= L:
            raise DisplacementExceedsTube(
                f"max|eta| = {peak:.6g} reaches the tube half-width L = {L:.6g}")

    def _peak_displacement(self):
        if not np.any(self.eta):
            return 0.0
        if self.eta.ndim == 1:
            n = self.eta.size
            fine = np.arange(4 * n) * self.geometry.period[0] / (4 * n)
            vals = fourier.interpolate(self.eta, self.geometry.period, fine)
        else:
            axes = [np.arange(4 * m) * p / (4 * m) for m, p in zip(self.eta.shape, self.geometry.period)]
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
            vals = fourier.interpolate(self.eta, self.geometry.period, pts)
        return float(max(np.max(np.abs(vals)), np.max(np.abs(self.eta))))

    # -- displacement field ------------------------------------------------
    def displacement(self, y):
        y = np.asarray(y, dtype=float).reshape(-1, self.geometry.structure_dim)
        if not np.any(self.eta):
            return np.zeros(y.shape[0])
        return fourier.interpolate(self.eta, self.geometry.period, y)

    def displacement_gradient(self, y):
        y = np.asarray(y, dtype=float).reshape(-1, self.geometry.structure_dim)
        m = self.geometry.structure_dim
        if not np.any(self.eta):
            return np.zeros((y.shape[0], m))
        cols = []
        for ax in range(m):
            order = [0] * m
            order[ax] = 1
            cols.append(fourier.interpolate(self.eta, self.geometry.period, y, deriv=order))
        return np.stack(cols, axis=-1)

    # -- map evaluation ----------------------------------------------------
    def _check_domain(self, x, tol=1e-12):
        H = self.geometry.height
        xd = x[..., -1]
        if np.any(xd < -tol) or np.any(xd > H + tol):
            raise OutOfDomain("point outside the closure of the reference domain")

    def forward(self, x):
        """Psi_eta(x) for reference points ``x`` of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        flat = x.reshape(-1, x.shape[-1])
        s = self.geometry.signed_distance(flat)
        out = flat.copy()
        band = s > -self.geometry.tube_halfwidth
        if np.any(band):
            y = self.geometry.closest_point(flat[band])
            out[band, -1] += self.displacement(y) * self.cutoff(s[band])
        return out.reshape(x.shape)

    def inverse(self, z):
        """Exact inverse by scalar Newton iteration along the wall normal."""
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, z.shape[-1])
        H = self.geometry.height
        L = self.geometry.tube_halfwidth
        y = self.geometry.closest_point(flat)
        e = self.displacement(y)
        target = flat[:, -1]
        zeta = target - e  # exact inside the flat top of the cutoff
        zeta = np.where(target <= H - L, target, zeta)
        for _ in range(self.newton_maxiter):
            s = zeta - H
            g = zeta + e * self.cutoff(s) - target
            dg = 1.0 + e * self.cutoff.derivative(s)
            if np.any(dg <= 0.0):
                raise NonInvertible("map lost monotonicity along the normal")
            step = g / dg
            zeta = zeta - step
            if np.max(np.abs(step), initial=0.0) <= self.newton_tol * max(1.0, H):
                break
        else:
            raise NonInvertible("Newton inverse did not converge")
        out = flat.copy()
        out[:, -1] = zeta
        if np.any(zeta < -1e-12) or np.any(zeta > H + 1e-12):
            raise OutOfDomain("point outside the deformed domain")
        return out.reshape(z.shape)

    def closed_form_inverse(self, z):
        """``Psi_{-eta}``; exact only where the cutoff is flat."""
        neg = HanzawaMap.__new__(HanzawaMap)
        neg.__dict__.update(self.__dict__)
        neg.eta = -self.eta
        return neg.forward(z)

    def deformation_gradient(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        d = flat.shape[-1]
        F = np.broadcast_to(np.eye(d), (flat.shape[0], d, d)).copy()
        s = self.geometry.signed_distance(flat)
        band = s > -self.geometry.tube_halfwidth
        if np.any(band):
            y = self.geometry.closest_point(flat[band])
            e = self.displacement(y)
            ge = self.displacement_gradient(y)
            F[band, -1, :-1] = ge * self.cutoff(s[band])[:, None]
            F[band, -1, -1] = 1.0 + e * self.cutoff.derivative(s[band])
        return F.reshape(x.shape + (d,))

    def jacobian_det(self, x):
        return transform_from_gradient(self.deformation_gradient(x))[0]

    def transform_matrices(self, x):
        """``(J, A, B)`` at reference points; see :func:`transform_from_gradient`."""
        return transform_from_gradient(self.deformation_gradient(x))


def transform_from_gradient(F, tol=1e-12):
    """Pullback quantities for a deformation gradient ``F`` (..., d, d).

    ``J = det F``, ``B = F^{-T}`` maps reference gradients to physical ones and
    ``A = J F^{-1} F^{-T}`` is the conductivity of the pulled-back Laplacian,
    ``J div_x grad_x w = div(A grad w)``.
    """
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    if np.any(np.abs(J) < tol):
        raise SingularJacobian("deformation gradient is singular")
    Finv = np.linalg.inv(F)
    B = np.swapaxes(Finv, -1, -2)
    A = J[..., None, None] * Finv @ B
    return J, A, B


def build_hanzawa_map(geometry, eta):
    return HanzawaMap(geometry, eta)


def evaluate_map(hmap, point):
    return hmap.forward(point)


def transform_matrices(hmap, point):
    return hmap.transform_matrices(point)


@dataclass(frozen=True)
class DeformedBoundary:
    points: np.ndarray
    normal: np.ndarray
    surface_jacobian: np.ndarray


def deformed_boundary(hmap, y):
    """Boundary points, unit normals and surface Jacobian at structure points ``y``."""
    geom = hmap.geometry
    y = np.asarray(y, dtype=float).reshape(-1, geom.structure_dim)
    e = hmap.displacement(y)
    ge = hmap.displacement_gradient(y)
    pts = geom.boundary_point(y) + geom.base_normal(y) * e[:, None]
    raw = np.concatenate([-ge, np.ones((y.shape[0], 1))], axis=1)
    jac = np.sqrt(1.0 + np.sum(ge**2, axis=1))
    return DeformedBoundary(points=pts, normal=raw / jac[:, None], surface_jacobian=jac)
