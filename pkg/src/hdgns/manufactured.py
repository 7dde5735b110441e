"""Closed-form exact solutions and forcing terms for the two benchmark cases.

Case 1 is a polynomial vortex pair with a cubic pressure on the unit square;
its forcing term was generated once by symbolic differentiation of the exact
fields (f = -nu*lap(u) + (u.grad)u + grad p) and is embedded below in Horner
form. Case 2 has zero velocity and a large hydrostatic-type pressure, the
standard probe for pressure-robustness.

All evaluators are vectorized over numpy arrays of coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

EXAMPLE_IDS = (1, 2)


# -- case 1: polynomial fields (symbolically generated, do not hand-edit) ----

def _u1_case1(x, y):
    return x**2 * (x * (x * y * (y * (3 - 2 * y) - 1) + y * (y * (4 * y - 6) + 2)) + y * (y * (3 - 2 * y) - 1))


def _u2_case1(x, y):
    return x * (x * (x * y**2 * (y * (2 * y - 4) + 2) + y**2 * (y * (6 - 3 * y) - 3)) + y**2 * (y * (y - 2) + 1))


def _p_case1(x, y):
    return (x * (x * (x * (y * (y * (25 - 10 * y) - 15 / 2) + 5 / 4) + y * (y * (30 * y - 60) + 45 / 2) - 15 / 4)
                 + y * (y * (105 / 2 - 30 * y) - 45 / 2) + 15 / 4)
            + y * (y * (10 * y - 65 / 4) + 15 / 2) - 5 / 4)


def _grad_u_case1(x, y):
    du1_dx = x * (x * (x * y * (y * (12 - 8 * y) - 4) + y * (y * (12 * y - 18) + 6)) + y * (y * (6 - 4 * y) - 2))
    du1_dy = x**2 * (x * (x * (y * (6 - 6 * y) - 1) + y * (12 * y - 12) + 2) + y * (6 - 6 * y) - 1)
    du2_dx = x * (x * y**2 * (y * (6 * y - 12) + 6) + y**2 * (y * (12 - 6 * y) - 6)) + y**2 * (y * (y - 2) + 1)
    du2_dy = x * (x * (x * y * (y * (8 * y - 12) + 4) + y * (y * (18 - 12 * y) - 6)) + y * (y * (4 * y - 6) + 2))
    return du1_dx, du1_dy, du2_dx, du2_dy


def _lap_u_case1(x, y):
    lap1 = (x * (x * (x * (x * (6 - 12 * y) + 24 * y - 12) + y * (y * (36 - 24 * y) - 24) + 6)
                 + y * (y * (24 * y - 36) + 12)) + y * (y * (6 - 4 * y) - 2))
    lap2 = (x * (x * (x * (y * (24 * y - 24) + 4) + y * (36 - 36 * y) - 6)
                 + y * (y * (y * (12 * y - 24) + 24) - 12) + 2) + y**2 * (y * (12 - 6 * y) - 6))
    return lap1, lap2


def _conv_case1(x, y):
    conv1 = x**3 * (x * (x * (x * (x * y**2 * (y * (y * (y * (4 * y - 12) + 14) - 8) + 2)
                                   + y**2 * (y * (y * (y * (42 - 14 * y) - 49) + 28) - 7))
                              + y**2 * (y * (y * (y * (18 * y - 54) + 63) - 36) + 9))
                         + y**2 * (y * (y * (y * (30 - 10 * y) - 35) + 20) - 5))
                    + y**2 * (y * (y * (y * (2 * y - 6) + 7) - 4) + 1))
    conv2 = x**2 * (x * (x * (x * (x * y**3 * (y * (y * (y * (4 * y - 14) + 18) - 10) + 2)
                                   + y**3 * (y * (y * (y * (42 - 12 * y) - 54) + 30) - 6))
                              + y**3 * (y * (y * (y * (14 * y - 49) + 63) - 35) + 7))
                         + y**3 * (y * (y * (y * (28 - 8 * y) - 36) + 20) - 4))
                    + y**3 * (y * (y * (y * (2 * y - 7) + 9) - 5) + 1))
    return conv1, conv2


def _grad_p_case1(x, y):
    dp_dx = (x * (x * (y * (y * (75 - 30 * y) - 45 / 2) + 15 / 4) + y * (y * (60 * y - 120) + 45) - 15 / 2)
             + y * (y * (105 / 2 - 30 * y) - 45 / 2) + 15 / 4)
    dp_dy = (x * (x * (x * (y * (50 - 30 * y) - 15 / 2) + y * (90 * y - 120) + 45 / 2)
                  + y * (105 - 90 * y) - 45 / 2) + y * (30 * y - 65 / 2) + 15 / 2)
    return dp_dx, dp_dy


@dataclass
class ExactSolution:
    """Exact velocity/pressure fields of a benchmark case.

    ``velocity``/``pressure``/``velocity_gradient``/``source`` take coordinate
    arrays x, y and return arrays with the component axis first. The pressure
    is returned as printed; ``p_mean`` is its mean over the unit square, to be
    subtracted when comparing against zero-mean discrete pressures.
    """

    example_id: int
    nu: float
    velocity: Callable
    velocity_gradient: Callable
    pressure: Callable
    source: Callable
    p_mean: float


def example_solution(example_id: int, nu: float = 1.0) -> ExactSolution:
    """Exact solution bundle for benchmark case 1 or 2."""
    if example_id == 1:
        def velocity(x, y):
            return np.stack([_u1_case1(x, y), _u2_case1(x, y)])

        def velocity_gradient(x, y):
            g11, g12, g21, g22 = _grad_u_case1(x, y)
            return np.stack([np.stack([g11, g12]), np.stack([g21, g22])])

        def source(x, y):
            lap1, lap2 = _lap_u_case1(x, y)
            conv1, conv2 = _conv_case1(x, y)
            dpx, dpy = _grad_p_case1(x, y)
            return np.stack([-nu * lap1 + conv1 + dpx, -nu * lap2 + conv2 + dpy])

        return ExactSolution(1, nu, velocity, velocity_gradient, _p_case1, source, 0.0)

    if example_id == 2:
        def velocity(x, y):
            z = np.zeros(np.broadcast(x, y).shape)
            return np.stack([z, z])

        def velocity_gradient(x, y):
            z = np.zeros(np.broadcast(x, y).shape)
            return np.stack([np.stack([z, z]), np.stack([z, z])])

        def pressure(x, y):
            return 1.0e6 * (y**3 - y**2 / 2 + y + 7.0 / 12.0)

        def source(x, y):
            z = np.zeros(np.broadcast(x, y).shape)
            return np.stack([z, 1.0e6 * (3 * y**2 - y + 1)])

        # mean of y^3 - y^2/2 + y over (0,1) is 7/12, so the printed +7/12
        # doubles it rather than cancelling it
        return ExactSolution(2, nu, velocity, velocity_gradient, pressure, source, 1.0e6 * 7.0 / 6.0)

    raise ValueError(f"unknown example id {example_id!r} (expected one of {EXAMPLE_IDS})")
