"""Explicit martingale transports used as inputs to the quantiser."""

from __future__ import annotations

import numpy as np

from .measures import KernelCoupling, QuadratureMeasure, symmetric_gaussian_nodes

DEFAULT_M_1D = 2000
DEFAULT_M_2D = 120


def _const(w: float):
    return lambda x: np.full(len(x), w)


def _affine(a: float, b: float):
    return lambda x: a * x + b


def left_curtain_uniform(m: int = DEFAULT_M_1D) -> KernelCoupling:
    """Left-curtain coupling of U[-1, 1] and U[-2, 2]:
    ``x -> 1/4 delta_{-x/2 - 3/2} + 3/4 delta_{3x/2 + 1/2}``."""
    mu = QuadratureMeasure.uniform_box([-1.0], [1.0], m, exact_quantile=True)
    kernel = [(_const(0.25), _affine(-0.5, -1.5)), (_const(0.75), _affine(1.5, 0.5))]
    return KernelCoupling(mu, kernel, martingale=True)


def right_curtain_uniform(m: int = DEFAULT_M_1D) -> KernelCoupling:
    """Right-curtain coupling, the mirror image ``y -> -y``, ``x -> -x`` of the left curtain:
    ``x -> 3/4 delta_{3x/2 - 1/2} + 1/4 delta_{3/2 - x/2}``."""
    mu = QuadratureMeasure.uniform_box([-1.0], [1.0], m, exact_quantile=True)
    kernel = [(_const(0.75), _affine(1.5, -0.5)), (_const(0.25), _affine(-0.5, 1.5))]
    return KernelCoupling(mu, kernel, martingale=True)


def optimal_pm1_uniform(m: int = DEFAULT_M_1D) -> KernelCoupling:
    """The optimiser for ``|y - x|^rho`` with rho > 2: ``x -> (delta_{x-1} + delta_{x+1}) / 2``."""
    mu = QuadratureMeasure.uniform_box([-1.0], [1.0], m, exact_quantile=True)
    kernel = [(_const(0.5), _affine(1.0, -1.0)), (_const(0.5), _affine(1.0, 1.0))]
    return KernelCoupling(mu, kernel, martingale=True, martingale_tol=1e-12)


def gaussian_convolution(mean: float = 0.0, var_x: float = 1.0, var_z: float = 1.0,
                         m_x: int = DEFAULT_M_1D, m_z: int = 41) -> KernelCoupling:
    """``Y = X + Z`` with ``X ~ N(mean, var_x)`` and independent ``Z ~ N(0, var_z)``.

    ``Z`` is discretised on an odd, exactly symmetric midpoint grid so the kernel
    barycentre is ``x`` up to rounding.
    """
    if m_z % 2 == 0:
        raise ValueError("m_z must be odd to keep the z-grid symmetric")
    mu = QuadratureMeasure.gaussian(mean, var_x, m_x, exact_quantile=True)
    z, w = symmetric_gaussian_nodes(var_z, m_z)
    kernel = [(_const(wk), _affine(1.0, zk)) for zk, wk in zip(z, w)]
    return KernelCoupling(mu, kernel, martingale=True, martingale_tol=1e-12)


def rademacher_2d_uniform(m: int = DEFAULT_M_2D) -> KernelCoupling:
    """``x -> x + z`` with ``z`` uniform on ``{-1, 1}^2``, over U([-1, 1]^2)."""
    mu = QuadratureMeasure.uniform_box([-1.0, -1.0], [1.0, 1.0], m)
    kernel = []
    for z in ([-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]):
        shift = np.array(z)
        kernel.append((_const(0.25), lambda x, s=shift: x + s))
    return KernelCoupling(mu, kernel, martingale=True, martingale_tol=1e-12)
