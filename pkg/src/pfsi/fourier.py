"""Periodic trigonometric interpolation on uniform meshes.

Samples live at ``y_i = i * period / n``. The interpolant splits the Nyquist
mode symmetrically so it is real everywhere and reproduces the samples.
"""
import numpy as np


def wavenumbers(n, period):
    """Angular wavenumbers in FFT order, Nyquist kept with its negative sign."""
    return 2.0 * np.pi * np.fft.fftfreq(n, d=period / n)


def _basis(n, period, y, deriv=0):
    # y: (P,) -> (P, n) complex basis in FFT order
    k = wavenumbers(n, period)
    phase = np.outer(y, k)
    E = np.exp(1j * phase) * (1j * k) ** deriv
    if n % 2 == 0:
        kn = np.pi * n / period
        c = np.cos(kn * y)
        s = np.sin(kn * y)
        nyq = [c, -kn * s, -kn**2 * c, kn**3 * s, kn**4 * c][deriv]
        E[:, n // 2] = nyq
    return E


def interpolate(samples, period, points, deriv=None):
    """Evaluate the trigonometric interpolant of ``samples`` at ``points``.

    ``samples`` has shape ``(n1,)`` or ``(n1, n2)``; ``points`` has shape
    ``(P, ndim)`` (or ``(P,)`` in 1D). ``deriv`` is a tuple of derivative
    orders per axis.
    """
    samples = np.asarray(samples, dtype=float)
    ndim = samples.ndim
    period = np.broadcast_to(np.asarray(period, dtype=float), (ndim,))
    pts = np.asarray(points, dtype=float).reshape(-1, ndim)
    deriv = (0,) * ndim if deriv is None else tuple(deriv)
    coef = np.fft.fftn(samples) / samples.size
    if ndim == 1:
        # tensor-grid callers repeat abscissae; evaluate each one once
        uniq, inv = np.unique(pts[:, 0], return_inverse=True)
        E = _basis(samples.shape[0], period[0], uniq, deriv[0])
        out = (E @ coef)[inv]
    elif ndim == 2:
        E1 = _basis(samples.shape[0], period[0], pts[:, 0], deriv[0])
        E2 = _basis(samples.shape[1], period[1], pts[:, 1], deriv[1])
        out = np.einsum("pk,kl,pl->p", E1, coef, E2)
    else:
        raise ValueError("only 1D and 2D structure meshes are supported")
    return out.real


def shift(samples, period, offset, deriv=0):
    """Interpolant (or its derivative) at the mesh shifted by ``offset`` (1D)."""
    v = np.asarray(samples, dtype=float)
    n = v.shape[-1]
    k = wavenumbers(n, period)
    c = np.fft.fft(v, axis=-1)
    mult = np.exp(1j * k * offset) * (1j * k) ** deriv
    if n % 2 == 0:
        kn = np.pi * n / period
        # Nyquist term c*cos(kn*y) evaluated at y_i + offset
        nyq = [np.cos(kn * offset), -kn * np.sin(kn * offset),
               -kn**2 * np.cos(kn * offset), kn**3 * np.sin(kn * offset),
               kn**4 * np.cos(kn * offset)][deriv]
        mult[n // 2] = nyq
    return np.fft.ifft(c * mult, axis=-1).real


def derivative(samples, period, order=1):
    """Spectral derivative on the mesh itself (along the last axis)."""
    return shift(samples, period, 0.0, deriv=order)
