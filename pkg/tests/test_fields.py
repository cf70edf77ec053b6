"""Projected nonlinear fields, drift routes, and scalar averaging."""

import itertools

import numpy as np
import pytest

from resonlab.errors import ConfigError
from resonlab.fields import (
    Observable,
    QuadratureDrift,
    ResonantDrift,
    action_observable,
    drift_route_residual,
    effective_drift_analytic,
    effective_drift_numerical,
    eval_P,
    eval_Y,
    monomial_observable,
    scalar_average,
    scalar_average_limit,
)
from resonlab.nonlinearity import (
    MonomialFactor,
    MonomialTerm,
    NonlinearitySpec,
    cubic_damping_terms,
    smoothed_power,
    smoothed_power_coefficients,
)
from resonlab.resonance import build_resonance_table
from resonlab.spectral import Potential, TorusGeometry, build_frame, phase_shift, sample_ball, sobolev_norm

TAU = 2 * np.pi
CUBIC = NonlinearitySpec("cubic_focusing")


# -- lattice <-> real-basis coefficient maps (test-local oracle plumbing) --

def exp_to_trig(w, reps, vol):
    """Complex-exponential coefficients -> canonical real-basis coefficients."""
    s = np.sqrt(vol / 2.0)
    out = [w.get(tuple(0 for _ in reps[0]), 0.0) * np.sqrt(vol)]
    for m in reps:
        neg = tuple(-x for x in m)
        out.append((w.get(m, 0.0) + w.get(neg, 0.0)) * s)
        out.append(1j * (w.get(m, 0.0) - w.get(neg, 0.0)) * s)
    return np.array(out, dtype=complex)


def trig_to_exp(c, reps, vol):
    s = np.sqrt(vol / 2.0)
    w = {tuple(0 for _ in reps[0]): c[0] / np.sqrt(vol)}
    for i, m in enumerate(reps):
        cc, cs = c[1 + 2 * i], c[2 + 2 * i]
        w[m] = (cc - 1j * cs) / (2 * s)
        w[tuple(-x for x in m)] = (cc + 1j * cs) / (2 * s)
    return w


def cubic_convolution(w, window):
    """Direct sum over k1 - k2 + k3 = k of i w1 conj(w2) w3, window-truncated."""
    out = {}
    for k in window:
        acc = 0.0j
        for k1 in window:
            for k2 in window:
                k3 = tuple(a - c + b for a, c, b in zip(k, k1, k2))
                if k3 in w:
                    acc += 1j * w[k1] * np.conj(w[k2]) * w[k3]
        out[k] = acc
    return out


def test_cubic_matches_convolution_1d(frame_1d_9):
    rng = np.random.default_rng(42)
    window = [(m,) for m in range(-4, 5)]
    reps = [(m,) for m in range(1, 5)]
    w = {m: rng.standard_normal() + 1j * rng.standard_normal() for m in window}
    v = exp_to_trig(w, reps, TAU)  # psi = identity on this frame
    got = trig_to_exp(eval_P(v, CUBIC, frame_1d_9), reps, TAU)
    oracle = cubic_convolution(w, window)
    # plain exponential coefficients: the product rule is a bare convolution
    for m in window:
        assert got[m] == pytest.approx(oracle[m], abs=1e-11)


def test_cubic_matches_convolution_2d(frame_2d_9):
    rng = np.random.default_rng(43)
    window = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
    reps = [(0, 1), (1, 0), (1, -1), (1, 1)]
    vol = TAU * TAU
    w = {m: rng.standard_normal() + 1j * rng.standard_normal() for m in window}
    v = exp_to_trig(w, reps, vol)
    got = trig_to_exp(eval_P(v, CUBIC, frame_2d_9), reps, vol)
    oracle = cubic_convolution(w, window)
    for m in window:
        assert got[m] == pytest.approx(oracle[m], abs=1e-11)


def test_eval_p_batched_matches_loop(frame_1d_9):
    rng = np.random.default_rng(3)
    batch = rng.standard_normal((4, 9)) + 1j * rng.standard_normal((4, 9))
    out = eval_P(batch, CUBIC, frame_1d_9)
    for row_in, row_out in zip(batch, out):
        assert np.allclose(eval_P(row_in, CUBIC, frame_1d_9), row_out, atol=1e-14)


def test_dealiasing_guard():
    frame = build_frame(TorusGeometry((TAU,), 16), Potential.zero(), 9)
    with pytest.raises(ConfigError):
        eval_P(np.ones(9, complex), CUBIC, frame)


def test_mu_zero_drops_potential_term(frame_1d_9_cos):
    # with mu = 0 the projected field is the bare nonlinearity even when V != 0
    rng = np.random.default_rng(4)
    v = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    flat = build_frame(TorusGeometry((TAU,), 32), Potential.zero(), 9)
    u = frame_1d_9_cos.from_coefficients(v)
    w = 1j * np.abs(u) ** 2 * u
    expect = frame_1d_9_cos.to_coefficients(w)
    assert np.allclose(eval_P(v, CUBIC, frame_1d_9_cos), expect, atol=1e-13)
    del flat


# -- smoothed monomial ------------------------------------------------------

def test_smoothed_power_boundary_conditions():
    for p in (0.5, 1.0, 2.0, 3.5):
        a3, a4, a5 = smoothed_power_coefficients(p)
        q = np.polynomial.Polynomial([0, 0, 0, a3, a4, a5])
        assert q(1.0) == pytest.approx(1.0, abs=1e-12)
        assert q.deriv()(1.0) == pytest.approx(p, abs=1e-12)
        assert q.deriv(2)(1.0) == pytest.approx(p * (p - 1), abs=1e-12)
        assert q(0.0) == q.deriv()(0.0) == q.deriv(2)(0.0) == 0.0


def test_smoothed_power_c2_junction():
    h = 1e-5
    for p in (0.5, 2.0):
        for x0 in (1.0,):
            f = lambda x: smoothed_power(x, p)
            d2_left = (f(x0 - h) - 2 * f(x0 - 2 * h) + f(x0 - 3 * h)) / h ** 2
            d2_right = (f(x0 + 3 * h) - 2 * f(x0 + 2 * h) + f(x0 + h)) / h ** 2
            assert d2_left == pytest.approx(d2_right, rel=1e-2, abs=1e-2)
    assert smoothed_power(2.5, 2.0) == 2.5 ** 2
    assert smoothed_power(1.0, 3.0) == pytest.approx(1.0)


def test_smoothed_monomial_pointwise(frame_1d_9):
    spec = NonlinearitySpec("smoothed_monomial", mu=0.1, gr=0.7, gi=0.3, p=2.0, q=1.0)
    rng = np.random.default_rng(5)
    v = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    u = frame_1d_9.from_coefficients(v)
    direct = (-0.7 * smoothed_power(np.abs(u) ** 2, 2.0)
              - 0.3j * smoothed_power(np.abs(u) ** 2, 1.0)) * u
    expect = frame_1d_9.to_coefficients(direct)
    assert np.allclose(eval_P(v, spec, frame_1d_9), expect, atol=1e-13)


def test_derivative_terms_require_positive_mu():
    dterm = MonomialTerm(1.0, (MonomialFactor(), MonomialFactor(derivative=0)))
    with pytest.raises(ConfigError):
        NonlinearitySpec("polynomial", mu=0.0, terms=(dterm,))
    NonlinearitySpec("polynomial", mu=0.1, terms=(dterm,))  # fine


def test_mixing_family_signs():
    with pytest.raises(ConfigError):
        cubic_damping_terms(0.1 - 0.2j)
    terms = cubic_damping_terms(-0.3 - 0.4j)
    assert terms[0].coefficient == -1.0
    assert terms[1].degree == 3


# -- diagonal kind and the rotated field -----------------------------------

def test_diagonal_bypasses_grid(frame_1d_5):
    gammas = (0.1j, -0.2, 0.3 + 0.1j, 0, 0.5j)
    spec = NonlinearitySpec("diagonal", mu=0.2, gammas=gammas)
    v = np.arange(1, 6).astype(complex)
    assert np.array_equal(eval_P(v, spec, frame_1d_5), v * np.array(gammas))
    # rotation conjugation cancels exactly on a diagonal field
    y = eval_Y(v, 17.3, spec, frame_1d_5)
    assert np.allclose(y, v * np.array(gammas), atol=1e-13)


def test_eval_y_is_conjugated_field(frame_1d_9):
    rng = np.random.default_rng(6)
    a = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    t = 0.37
    phase = np.exp(1j * t * frame_1d_9.eigenvalues)
    direct = phase * eval_P(np.conj(phase) * a, CUBIC, frame_1d_9)
    assert np.allclose(eval_Y(a, t, CUBIC, frame_1d_9), direct, atol=1e-14)
    assert np.allclose(eval_Y(a, 0.0, CUBIC, frame_1d_9), eval_P(a, CUBIC, frame_1d_9), atol=1e-14)


# -- drift routes ----------------------------------------------------------

def test_drift_routes_agree_on_resonant_torus(frame_1d_9):
    table = build_resonance_table(frame_1d_9)
    rng = np.random.default_rng(11)
    v = sample_ball(frame_1d_9, 2.0, 1.5, rng)
    window = table.suggested_window()  # 50 full common periods: average is exact
    report = drift_route_residual(v, table, CUBIC, frame_1d_9, window, s=1.6)
    assert report["residual"] < 1e-8


def test_drift_residual_decays_off_period():
    frame = build_frame(TorusGeometry((TAU,), 32), Potential.zero(), 9)
    table = build_resonance_table(frame)
    rng = np.random.default_rng(12)
    v = sample_ball(frame, 2.0, 1.5, rng)
    base = 130.0  # incommensurate with the 2 pi period lattice
    r1 = drift_route_residual(v, table, CUBIC, frame, base, s=1.6)["residual"]
    r2 = drift_route_residual(v, table, CUBIC, frame, 2 * base, s=1.6)["residual"]
    assert r2 < r1


def test_drift_commutes_with_rotation(frame_1d_9):
    table = build_resonance_table(frame_1d_9)
    drift = ResonantDrift(frame_1d_9, CUBIC, table)
    rng = np.random.default_rng(13)
    for _ in range(5):
        v = sample_ball(frame_1d_9, 2.0, 1.0, rng)
        t = rng.uniform(-5, 5)
        theta = t * frame_1d_9.eigenvalues
        gap = drift(phase_shift(v, theta)) - phase_shift(drift(v), theta)
        assert sobolev_norm(gap, 1.6, frame_1d_9.eigenvalues) < 1e-10


def test_hamiltonian_drift_conserves_l2(frame_1d_9):
    table = build_resonance_table(frame_1d_9)
    drift = ResonantDrift(frame_1d_9, CUBIC, table)
    rng = np.random.default_rng(14)
    v = sample_ball(frame_1d_9, 2.0, 1.8, rng)
    assert abs(np.real(np.vdot(v, drift(v)))) < 1e-12


def test_diagonal_drift_is_field_itself(frame_1d_5):
    spec = NonlinearitySpec("diagonal", gammas=(1j, -0.5, 0.25j, 0.1, 0))
    drift = ResonantDrift(frame_1d_5, spec, table=None)
    v = np.array([1, 2, 3, 4, 5], dtype=complex)
    assert np.array_equal(drift(v), eval_P(v, spec, frame_1d_5))


def test_derivative_polynomial_routes_agree(frame_1d_9):
    term = MonomialTerm(0.4 - 0.1j, (MonomialFactor(), MonomialFactor(derivative=0)))
    spec = NonlinearitySpec("polynomial", mu=0.3, terms=(term,))
    table = build_resonance_table(frame_1d_9, patterns=((1, 1),))
    v = sample_ball(frame_1d_9, 2.0, 1.0, np.random.default_rng(15))
    window = table.suggested_window()
    report = drift_route_residual(v, table, spec, frame_1d_9, window, s=1.0)
    assert report["residual"] < 1e-8


def test_potential_cluster_term_converges(frame_1d_9_cos):
    # with V != 0 and mu > 0 the averaged linear part is the cluster-blocked
    # potential matrix; the quadrature route must approach the analytic one
    spec = NonlinearitySpec("cubic_focusing", mu=0.5)
    table = build_resonance_table(frame_1d_9_cos)
    v = sample_ball(frame_1d_9_cos, 2.0, 1.0, np.random.default_rng(16))
    r1 = drift_route_residual(v, table, spec, frame_1d_9_cos, 200.0, s=0.0)["residual"]
    r2 = drift_route_residual(v, table, spec, frame_1d_9_cos, 800.0, s=0.0)["residual"]
    assert r2 < 0.5 * r1


def test_analytic_route_needs_polynomial(frame_1d_9):
    spec = NonlinearitySpec("smoothed_monomial", gr=1.0, p=2.0)
    with pytest.raises(ConfigError):
        ResonantDrift(frame_1d_9, spec, build_resonance_table(frame_1d_9))


def test_quadrature_drift_batch(frame_1d_5):
    table = build_resonance_table(frame_1d_5)
    drift = QuadratureDrift(frame_1d_5, CUBIC, 40.0, 801)
    rng = np.random.default_rng(17)
    batch = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    out = drift(batch)
    for row_in, row_out in zip(batch, out):
        assert np.allclose(drift(row_in), row_out, atol=1e-14)
    del table


# -- scalar averaging ------------------------------------------------------

def test_linear_observable_average(frame_1d_5):
    lam = frame_1d_5.eigenvalues
    coeffs = np.array([0.3, 1.0, -2.0, 0.7, 0.2], dtype=complex)
    obs = Observable(tuple((c, ((k, 1),), ()) for k, c in enumerate(coeffs)))
    limit = scalar_average_limit(obs, lam, target=1)
    rng = np.random.default_rng(18)
    v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    # the limit keeps exactly the equal-frequency modes of the target
    assert limit(v) == pytest.approx(coeffs[1] * v[1] + coeffs[2] * v[2])
    # at whole common periods the finite average is already exact
    got = scalar_average(obs, lam, v, 50 * TAU, 20001, target=1)
    assert got == pytest.approx(complex(limit(v)), abs=1e-10)


def test_scalar_average_decay_off_resonance(frame_1d_5):
    lam = frame_1d_5.eigenvalues
    obs = monomial_observable(1.0, v=[3])  # lambda = 4 against target lambda = 1
    v = np.ones(5, dtype=complex)
    vals = [abs(scalar_average(obs, lam, v, T, 4001, target=1)) for T in (10.0, 40.0, 160.0)]
    assert vals[2] < vals[1] < vals[0]
    assert vals[2] < 2.0 / (3.0 * 160.0) + 1e-6  # 2 / (T |gap|)


def test_bracket_average_commutes_with_rotation(frame_1d_5):
    lam = frame_1d_5.eigenvalues
    obs = Observable(((1.0, ((1, 1),), ((2, 1),)), (0.5, ((3, 1),), ((3, 1),))))
    rng = np.random.default_rng(19)
    v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    t0 = 0.77
    shifted = phase_shift(v, t0 * lam)
    a1 = scalar_average(obs, lam, shifted, 50 * TAU, 20001)
    a2 = scalar_average(obs, lam, v, 50 * TAU, 20001)
    # the resonant part is rotation invariant: v_1 conj(v_2) has equal frequencies
    assert a1 == pytest.approx(a2, abs=1e-10)


def test_action_observable(frame_1d_5):
    v = np.array([1 + 1j, 2.0, 0, 3j, 1], dtype=complex)
    assert action_observable(0)(v) == pytest.approx(1.0)
    assert action_observable(3)(v) == pytest.approx(4.5)


def test_observable_round_trip():
    obs = Observable(((1.5 - 0.5j, ((0, 2),), ((1, 1),)), (2.0, (), ((2, 3),))))
    doc = obs.to_document()
    back = Observable.from_document(doc)
    assert back.terms == obs.terms


def test_resonant_quartic_average_matches_exact_limit(frame_1d_5):
    lam = frame_1d_5.eigenvalues
    # v_1 conj(v_2) v_3 conj(v_4): frequencies 1 - 1 + 4 - 4 = 0, resonant
    obs = monomial_observable(1.0, v=[1, 3], vbar=[2, 4])
    v = np.random.default_rng(20).standard_normal(5) + 1j * np.random.default_rng(21).standard_normal(5)
    got = scalar_average(obs, lam, v, 50 * TAU, 20001)
    assert got == pytest.approx(complex(obs(v)), abs=1e-10)
