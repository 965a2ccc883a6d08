"""Embedded Runge-Kutta-Fehlberg 4(5) integration with adaptive step control.

The solver advances the fifth-order solution (local extrapolation) and uses
the difference between the fourth- and fifth-order results as the local
error estimate.  Step size is adapted with the classic 0.9*(tol/err)^(1/5)
rule, clamped to a [0.2, 5.0] growth window per attempt.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "StepUnderflow",
    "NonFiniteState",
    "rkf45_step",
    "integrate",
]


class StepUnderflow(Exception):
    """Raised when the controller wants a step below the allowed minimum."""


class NonFiniteState(Exception):
    """Raised when the state vector stops being finite."""


# Fehlberg tableau.  Nodes, stage coefficients, and the two sets of
# solution weights (4th and 5th order).
C2, C3, C4, C5, C6 = 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5

A21 = 0.25
A31, A32 = 3.0 / 32.0, 9.0 / 32.0
A41, A42, A43 = 1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0
A51, A52, A53, A54 = 439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0
A61, A62, A63, A64, A65 = (
    -8.0 / 27.0,
    2.0,
    -3544.0 / 2565.0,
    1859.0 / 4104.0,
    -11.0 / 40.0,
)

B5_1, B5_3, B5_4, B5_5, B5_6 = (
    16.0 / 135.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
)

# Difference between the fifth- and fourth-order weights; dt * sum(E_i k_i)
# is the local error estimate.
E1, E3, E4, E5, E6 = (
    1.0 / 360.0,
    -128.0 / 4275.0,
    -2197.0 / 75240.0,
    1.0 / 50.0,
    2.0 / 55.0,
)

SAFETY = 0.9
SHRINK_MIN = 0.2
GROW_MAX = 5.0


def _attempt(f, t, y, dt):
    """One raw RKF-45 attempt: fifth-order solution and error estimate."""
    k1 = f(t, y)
    k2 = f(t + C2 * dt, y + dt * (A21 * k1))
    k3 = f(t + C3 * dt, y + dt * (A31 * k1 + A32 * k2))
    k4 = f(t + C4 * dt, y + dt * (A41 * k1 + A42 * k2 + A43 * k3))
    k5 = f(t + C5 * dt, y + dt * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
    k6 = f(
        t + C6 * dt,
        y + dt * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5),
    )
    y5 = y + dt * (B5_1 * k1 + B5_3 * k3 + B5_4 * k4 + B5_5 * k5 + B5_6 * k6)
    err = dt * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6)
    return y5, err


def rkf45_step(f, t, y, dt, tol=1e-6, dt_min=1e-8, n_err=None):
    """Advance one accepted step, shrinking ``dt`` until the error passes.

    Parameters
    ----------
    f : callable
        Right-hand side ``f(t, y) -> ndarray``.
    t, y : float, ndarray
        Current time and state.
    dt : float
        Step size to attempt first.
    tol : float
        Absolute tolerance on the max-norm of the local error estimate.
    dt_min : float
        Raising :class:`StepUnderflow` below this size.
    n_err : int, optional
        Restrict the error norm to the first ``n_err`` components.  All
        components by default.

    Returns
    -------
    (y_new, t_new, dt_taken, dt_next)
    """
    while True:
        y5, err = _attempt(f, t, y, dt)
        err_norm = np.max(np.abs(err if n_err is None else err[:n_err]))
        if np.isfinite(err_norm) and err_norm <= tol:
            if err_norm == 0.0:
                factor = GROW_MAX
            else:
                factor = min(
                    GROW_MAX, max(SHRINK_MIN, SAFETY * (tol / err_norm) ** 0.2)
                )
            return y5, t + dt, dt, dt * factor
        if np.isfinite(err_norm):
            shrink = min(1.0, max(SHRINK_MIN, SAFETY * (tol / err_norm) ** 0.2))
        else:
            shrink = SHRINK_MIN
        dt = dt * shrink
        if dt < dt_min:
            raise StepUnderflow(f"step size {dt:g} below minimum {dt_min:g}")


def integrate(f, t0, t1, y0, tol=1e-6, dt_min=1e-8, dt0=None, nonneg=False, n_err=None):
    """Integrate ``f`` from ``t0`` to ``t1`` (``t1 > t0``), returning y(t1).

    ``nonneg`` clamps the state at zero from below after every accepted
    step, for systems whose components are populations or other
    intrinsically non-negative quantities.
    """
    span = t1 - t0
    if span <= 0:
        raise ValueError("t1 must exceed t0")
    t = float(t0)
    y = np.asarray(y0, dtype=float).copy()
    dt = span if dt0 is None else min(dt0, span)
    while t < t1 - 1e-12 * span:
        dt = min(dt, t1 - t)
        y, t, _, dt = rkf45_step(f, t, y, dt, tol=tol, dt_min=dt_min, n_err=n_err)
        if nonneg:
            np.maximum(y, 0.0, out=y)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"non-finite state at t={t:g}")
    return y
