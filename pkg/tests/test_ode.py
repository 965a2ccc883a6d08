"""Integrator checks against closed forms, quadrature identities, and scipy."""
import numpy as np
import pytest

from reefinvert.ode import NonFiniteState, StepUnderflow, integrate, rkf45_step


def logistic(t, p0, eps, alpha):
    k = eps / abs(alpha)
    return k / (1.0 + (k / p0 - 1.0) * np.exp(-eps * t))


def test_zero_rhs_keeps_state_and_grows_step():
    f = lambda t, y: np.zeros_like(y)
    y, t, taken, nxt = rkf45_step(f, 0.0, np.array([0.0, 2.0]), 0.5)
    assert np.array_equal(y, [0.0, 2.0])
    assert t == 0.5
    assert taken == 0.5
    # zero error estimate means the maximum growth factor
    assert nxt == pytest.approx(2.5)


def test_polynomial_quadrature_exact_through_quartic():
    # y' = (p+1) t^p has exact solution t^(p+1); a fifth-order step must
    # reproduce it to rounding for p <= 4.
    for p in range(5):
        f = lambda t, y, p=p: np.array([(p + 1) * t ** p])
        y, _, taken, _ = rkf45_step(f, 0.0, np.array([0.0]), 0.7, tol=np.inf)
        assert taken == 0.7
        assert y[0] == pytest.approx(0.7 ** (p + 1), rel=1e-13, abs=1e-15)


def test_error_estimate_vanishes_for_cubic_rhs():
    # The embedded pair agrees through cubics, so even a near-zero
    # tolerance accepts the full step.
    f = lambda t, y: np.array([4.0 * t ** 3])
    y, _, taken, _ = rkf45_step(f, 0.0, np.array([0.0]), 0.5, tol=1e-15)
    assert taken == 0.5
    assert y[0] == pytest.approx(0.5 ** 4, rel=1e-13)


def test_error_estimate_nonzero_for_quartic_rhs():
    # For t^4 the fourth-order solution differs, so a tiny tolerance must
    # force at least one rejection (the returned step is shorter).
    f = lambda t, y: np.array([5.0 * t ** 4])
    _, _, taken, _ = rkf45_step(f, 1.0, np.array([1.0]), 0.5, tol=1e-16)
    assert taken < 0.5


def test_linear_rhs_hits_endpoint_exactly():
    f = lambda t, y: np.array([1.0])
    y = integrate(f, 0.0, 3.7, np.array([0.0]))
    assert y[0] == pytest.approx(3.7, abs=1e-12)


def test_logistic_matches_closed_form():
    eps, alpha = 0.08, -0.01
    f = lambda t, y: eps * y + alpha * y * y
    y = integrate(f, 0.0, 200.0, np.array([0.1]), tol=1e-8)
    assert y[0] == pytest.approx(logistic(200.0, 0.1, eps, alpha), rel=1e-6)


def test_tighter_tolerance_reduces_global_error():
    eps, alpha = 0.08, -0.01
    f = lambda t, y: eps * y + alpha * y * y
    truth = logistic(120.0, 0.25, eps, alpha)
    errs = []
    for tol in (1e-3, 1e-9):
        y = integrate(f, 0.0, 120.0, np.array([0.25]), tol=tol)
        errs.append(abs(y[0] - truth))
    assert errs[1] < errs[0]


def test_agrees_with_scipy_reference():
    scipy_integrate = pytest.importorskip("scipy.integrate")
    eps, alpha = 0.11, -0.02
    f = lambda t, y: eps * y + alpha * y * y
    ours = integrate(f, 0.0, 150.0, np.array([0.03]), tol=1e-10)
    ref = scipy_integrate.solve_ivp(
        f, (0.0, 150.0), [0.03], method="RK45", rtol=1e-11, atol=1e-13
    )
    assert ours[0] == pytest.approx(ref.y[0, -1], rel=1e-8)


def test_step_underflow_at_singularity():
    # Blow-up at t = 1 forces endless rejections below dt_min.
    f = lambda t, y: np.array([1.0]) / (1.0 - t) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        with pytest.raises(StepUnderflow):
            integrate(f, 0.0, 2.0, np.array([0.0]), tol=1e-6, dt_min=1e-6)


def test_nonfinite_state_outside_error_window():
    # Error control watches only the first component; the second diverges
    # and must be caught by the finiteness check instead.
    def f(t, y):
        return np.array([0.0, np.inf])

    with np.errstate(invalid="ignore"):
        with pytest.raises(NonFiniteState):
            integrate(f, 0.0, 1.0, np.array([0.0, 0.0]), n_err=1)


def test_nonneg_clamps_below_zero():
    f = lambda t, y: np.array([-10.0])
    y = integrate(f, 0.0, 1.0, np.array([0.5]), nonneg=True)
    assert y[0] == 0.0


def test_tail_shorter_than_dt_min_is_not_underflow():
    # Only controller-driven shrinking may raise; a short final segment
    # imposed by the endpoint is legitimate.
    f = lambda t, y: np.array([1.0])
    y = integrate(f, 0.0, 1.0 + 1e-10, np.array([0.0]), dt0=1.0, dt_min=1e-8)
    assert y[0] == pytest.approx(1.0 + 1e-10, rel=1e-12)


def test_empty_span_rejected():
    f = lambda t, y: y
    with pytest.raises(ValueError):
        integrate(f, 1.0, 1.0, np.array([1.0]))
    with pytest.raises(ValueError):
        integrate(f, 2.0, 1.0, np.array([1.0]))


def test_first_step_capped_by_span():
    calls = []

    def f(t, y):
        calls.append(t)
        return np.array([0.0])

    integrate(f, 0.0, 0.25, np.array([1.0]), dt0=50.0)
    # no stage may be evaluated beyond the endpoint
    assert max(calls) <= 0.25 + 1e-12
