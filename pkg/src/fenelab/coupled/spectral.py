"""Pseudo-spectral incompressible Navier-Stokes on the periodic square [0, 2pi)^2."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from fenelab.errors import CFLViolation


@lru_cache(maxsize=16)
def wavenumbers(n: int):
    """(kx, ky, k2, dealias mask) on the fft2 layout; Nyquist set to zero in kx, ky."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    kx = k[:, None] * np.ones(n)[None, :]
    ky = np.ones(n)[:, None] * k[None, :]
    k2 = kx ** 2 + ky ** 2
    kabs = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    keep = (kabs[:, None] < n / 3.0) & (kabs[None, :] < n / 3.0)
    for a in (kx, ky, k2, keep):
        a.setflags(write=False)
    return kx, ky, k2, keep


def grid_points(n: int):
    x = 2 * np.pi * np.arange(n) / n
    return np.meshgrid(x, x, indexing="ij")


def leray(vh):
    kx, ky, k2, _ = wavenumbers(vh.shape[-1])
    safe = np.where(k2 > 0, k2, 1.0)
    div = (kx * vh[0] + ky * vh[1]) / safe
    out = np.empty_like(vh)
    out[0] = vh[0] - kx * div
    out[1] = vh[1] - ky * div
    return out


@dataclass
class FlowField:
    """Spectral velocity coefficients, shape (2, n, n), fft2 layout."""

    vh: np.ndarray
    time: float = 0.0

    @property
    def n(self) -> int:
        return self.vh.shape[-1]

    @classmethod
    def from_physical(cls, v, time=0.0, project=True):
        vh = np.fft.fft2(np.asarray(v, dtype=float), axes=(-2, -1))
        return cls(leray(vh) if project else vh, time)

    @classmethod
    def zero(cls, n, time=0.0):
        return cls(np.zeros((2, n, n), dtype=complex), time)

    @classmethod
    def taylor_green(cls, n, amplitude=1.0, time=0.0):
        X, Y = grid_points(n)
        v = amplitude * np.stack([np.cos(X) * np.sin(Y), -np.sin(X) * np.cos(Y)])
        return cls.from_physical(v, time)

    @property
    def physical(self) -> np.ndarray:
        return np.fft.ifft2(self.vh, axes=(-2, -1)).real

    def divergence(self) -> np.ndarray:
        """Spectral divergence coefficients."""
        kx, ky, _, _ = wavenumbers(self.n)
        return 1j * (kx * self.vh[0] + ky * self.vh[1])

    def gradient(self) -> np.ndarray:
        """kappa_ij = d_j v_i at grid points, shape (2, 2, n, n)."""
        kx, ky, _, _ = wavenumbers(self.n)
        ks = (kx, ky)
        g = np.empty((2, 2, self.n, self.n))
        for i in range(2):
            for j in range(2):
                g[i, j] = np.fft.ifft2(1j * ks[j] * self.vh[i]).real
        return g

    def l2_squared(self) -> float:
        """int |v|^2 dx by the grid rule (exact for the trigonometric interpolant)."""
        v = self.physical
        h = 2 * np.pi / self.n
        return float(h * h * np.sum(v * v))

    def copy(self):
        return FlowField(self.vh.copy(), self.time)


def kappa_field(v: FlowField) -> np.ndarray:
    """Trace-free velocity gradient per node as (k11, k12, k21), shape (n*n, 3)."""
    g = v.gradient()
    tr = 0.5 * (g[0, 0] + g[1, 1])
    k11 = g[0, 0] - tr
    return np.stack([k11.reshape(-1), g[0, 1].reshape(-1), g[1, 0].reshape(-1)], axis=1)


def stress_divergence_hat(tau) -> np.ndarray:
    """Spectral div(tau) with (div tau)_i = d_j tau_ij; tau components (11, 12, 22)."""
    n = tau.shape[-1]
    kx, ky, _, _ = wavenumbers(n)
    th = np.fft.fft2(tau, axes=(-2, -1))
    return np.stack([1j * (kx * th[0] + ky * th[1]), 1j * (kx * th[1] + ky * th[2])])


def check_cfl(u_phys, dt, n):
    dx = 2 * np.pi / n
    vmax = float(np.sqrt(np.max(np.sum(u_phys ** 2, axis=0))))
    c = vmax * dt / dx
    if c > 1.0:
        raise CFLViolation(f"CFL number {c:.3f} > 1 (max|v|={vmax:.3g}, dt={dt:g}, dx={dx:.3g})")
    return c


def advection_hat(u: FlowField, v: FlowField) -> np.ndarray:
    """Dealiased spectral (u . grad) v."""
    kx, ky, _, keep = wavenumbers(v.n)
    up = np.fft.ifft2(u.vh * keep, axes=(-2, -1)).real
    out = np.empty_like(v.vh)
    for i in range(2):
        vi = v.vh[i] * keep
        dx = np.fft.ifft2(1j * kx * vi).real
        dy = np.fft.ifft2(1j * ky * vi).real
        out[i] = np.fft.fft2(up[0] * dx + up[1] * dy) * keep
    return out


def nse_step(v: FlowField, tau, dt: float, u: FlowField = None) -> FlowField:
    """Advance by dt: explicit advection by u (default v) and div(tau), implicit diffusion.

    ``tau`` is an array (3, n, n) of stress components (11, 12, 22) or None.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = v if u is None else u
    check_cfl(u.physical, dt, v.n)
    _, _, k2, _ = wavenumbers(v.n)
    rhs = -advection_hat(u, v)
    if tau is not None:
        rhs = rhs + stress_divergence_hat(np.asarray(tau, dtype=float))
    vh = (v.vh + dt * rhs) / (1.0 + dt * k2)
    return FlowField(leray(vh), v.time + dt)
