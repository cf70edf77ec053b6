"""Vector fields in mode coordinates: the projected nonlinearity, its rotated
version, the resonant-averaged drift (two independent routes), and scalar
averaging of observables.

The projected field is P(v) = Psi(mu V u + P(grad u, u)) with u synthesized
from v; the mu V u term belongs here because the dissipative part of the flow
keeps only the exact diagonal -mu lambda_k.  The averaged drift R keeps exactly
the resonant monomials of P; the quadrature route approximates the same object
by a finite-window time average and is kept strictly independent as an oracle.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigError
from .spectral import mode_vector, sobolev_norm

_CHUNK = 4096  # quadrature nodes per block; fixed so sums are reproducible


def check_grid_resolution(spec, frame):
    """Dealiasing rule for polynomial kinds: N_g >= 2 * degree * window radius."""
    if not spec.is_polynomial:
        return
    radius = frame.basis_window_radius()
    need = 2 * spec.degree * radius
    if frame.geometry.grid_points < need:
        raise ConfigError(
            f"grid_points={frame.geometry.grid_points} under-resolves degree-{spec.degree} "
            f"products on window radius {radius}; need at least {need} per axis")


def eval_P(state, spec, frame):
    """Projected perturbing field P(v) in mode coordinates.

    Accepts (..., M) batches.  The diagonal kind bypasses the grid entirely.
    """
    v = mode_vector(state)
    if spec.kind == "diagonal":
        gammas = np.asarray(spec.gammas, dtype=complex)
        if gammas.shape != (frame.modes,):
            raise ConfigError(f"diagonal kind needs {frame.modes} coefficients")
        return v * gammas
    check_grid_resolution(spec, frame)
    trig = v @ frame.eigenvectors
    u = trig @ frame.basis_values
    gradients = None
    if spec.uses_derivatives():
        gradients = [trig @ g for g in frame.basis_gradients]
    w = spec.pointwise(u, gradients)
    if spec.mu > 0.0 and not frame.potential.is_zero:
        w = w + spec.mu * frame.potential_values * u
    return ((w @ frame.basis_values.T) * frame.cell_volume) @ frame.eigenvectors.T


def eval_Y(state, t, spec, frame):
    """Rotated field Y(a, t): conjugation of P by the linear phase flow at time t."""
    a = mode_vector(state)
    phase = np.exp(1j * t * frame.eigenvalues)
    return phase * eval_P(a * np.conj(phase), spec, frame)


# -- analytic (resonant-sum) drift route -----------------------------------

@dataclass
class _MonomialGroup:
    conjugate: np.ndarray  # (degree,) bool, one per slot
    slots: np.ndarray      # (degree, n) mode indices
    targets: np.ndarray    # (n,) sorted ascending
    coeffs: np.ndarray     # (n,) complex
    seg_starts: np.ndarray
    seg_targets: np.ndarray

    def accumulate(self, v, out):
        prod = self.coeffs * np.ones(v.shape[:-1] + (1,), dtype=complex)
        for j in range(self.slots.shape[0]):
            factor = v[..., self.slots[j]]
            prod = prod * (np.conj(factor) if self.conjugate[j] else factor)
        sums = np.add.reduceat(prod, self.seg_starts, axis=-1)
        out[..., self.seg_targets] += sums


def _group_from_entries(conjugate, entries):
    entries.sort(key=lambda e: (e[0], e[1]))
    targets = np.array([e[0] for e in entries], dtype=np.intp)
    slots = np.array([e[1] for e in entries], dtype=np.intp).T.reshape(len(conjugate), -1)
    coeffs = np.array([e[2] for e in entries], dtype=complex)
    seg_starts = np.flatnonzero(np.r_[True, np.diff(targets) > 0])
    return _MonomialGroup(conjugate=np.asarray(conjugate, dtype=bool),
                          slots=slots, targets=targets, coeffs=coeffs,
                          seg_starts=seg_starts, seg_targets=targets[seg_starts])


class ResonantDrift:
    """Analytic effective drift: the resonant monomials of P with exact tensors.

    Monomial coefficients are product integrals of eigenfunctions (and their
    derivatives, for derivative factors) computed by exact grid quadrature; the
    resonance table decides which index tuples survive the averaging.
    """

    def __init__(self, frame, spec, table=None):
        self.frame = frame
        self.spec = spec
        self.modes = frame.modes
        if spec.kind == "diagonal":
            self.gammas = np.asarray(spec.gammas, dtype=complex)
            self.groups = []
            return
        if not spec.is_polynomial:
            raise ConfigError("analytic drift route needs a polynomial nonlinearity")
        if table is None:
            raise ConfigError("analytic drift route needs a resonance table")
        check_grid_resolution(spec, frame)
        self.gammas = None
        self.groups = []
        dx = frame.cell_volume
        Z = frame.eigenfunction_values
        for term in spec.polynomial_terms():
            pattern = term.pattern
            if pattern not in table.resonances:
                raise ConfigError(f"resonance table lacks pattern {pattern}")
            slot_values = [Z if f.derivative is None else frame.eigenfunction_gradients[f.derivative]
                           for f in term.factors]
            entries = []
            for target in range(self.modes):
                tuples = table.resonances[pattern][target]
                if not tuples:
                    continue
                idx = np.asarray(tuples, dtype=np.intp)
                prod = slot_values[0][idx[:, 0]]
                for j in range(1, idx.shape[1]):
                    prod = prod * slot_values[j][idx[:, j]]
                weights = dx * (prod @ Z[target])
                keep = np.abs(weights) > 1e-14
                for row, wgt in zip(idx[keep], weights[keep]):
                    entries.append((target, tuple(int(i) for i in row), term.coefficient * wgt))
            if entries:
                conj = [f.conjugate for f in term.factors]
                self.groups.append(_group_from_entries(conj, entries))
        # the mu V u part averages to its equal-frequency (cluster) block
        if spec.mu > 0.0 and not frame.potential.is_zero:
            W = spec.mu * ((Z * (frame.potential_values * dx)) @ Z.T)
            clusters = table.clusters
            entries = []
            for cluster in clusters:
                for k in cluster:
                    for kp in cluster:
                        if abs(W[k, kp]) > 1e-14:
                            entries.append((k, (kp,), complex(W[k, kp])))
            if entries:
                self.groups.append(_group_from_entries([False], entries))

    def __call__(self, state):
        v = mode_vector(state)
        if self.gammas is not None:
            return v * self.gammas
        out = np.zeros(v.shape, dtype=complex)
        for group in self.groups:
            group.accumulate(v, out)
        return out


class QuadratureDrift:
    """Numerical effective drift: trapezoid average of the rotated field.

    Independent of the analytic route on purpose; the two are compared as a
    correctness oracle for resonance enumeration and tensor assembly.
    """

    def __init__(self, frame, spec, window, n_quad=None):
        if not (window > 0):
            raise ConfigError(f"averaging window must be positive, got {window}")
        self.frame = frame
        self.spec = spec
        self.window = float(window)
        if n_quad is None:
            n_quad = default_quadrature_nodes(frame, self.window)
        if n_quad < 2:
            raise ConfigError("need at least two quadrature nodes")
        self.n_quad = int(n_quad)

    def __call__(self, state):
        v = mode_vector(state)
        if v.ndim > 1:
            flat = v.reshape(-1, v.shape[-1])
            return np.stack([self(row) for row in flat]).reshape(v.shape)
        T, n = self.window, self.n_quad
        ts = np.linspace(0.0, T, n)
        weights = np.full(n, T / (n - 1))
        weights[0] *= 0.5
        weights[-1] *= 0.5
        weights /= T
        lam = self.frame.eigenvalues
        out = np.zeros(v.shape, dtype=complex)
        for start in range(0, n, _CHUNK):
            sl = slice(start, min(start + _CHUNK, n))
            phases = np.exp(1j * np.outer(ts[sl], lam))
            rotated = np.conj(phases) * v
            block = phases * eval_P(rotated, self.spec, self.frame)
            out += weights[sl] @ block
        return out


def default_quadrature_nodes(frame, window):
    """Node count resolving every pairwise combination frequency about 4 times over."""
    span = max(1.0, 2.0 * float(frame.eigenvalues[-1]))
    return int(math.ceil(4.0 * window * span / (2.0 * math.pi))) + 1


def effective_drift_analytic(state, table, spec, frame):
    """Resonant-sum drift (one-shot convenience; integrators cache ResonantDrift)."""
    return ResonantDrift(frame, spec, table)(state)


def effective_drift_numerical(state, spec, frame, window, n_quad=None):
    """Finite-window time average of the rotated field."""
    return QuadratureDrift(frame, spec, window, n_quad)(state)


def drift_route_residual(state, table, spec, frame, window, n_quad=None, s=0.0):
    """Both drift routes and their Sobolev-s gap; reported by studies."""
    analytic = effective_drift_analytic(state, table, spec, frame)
    numerical = effective_drift_numerical(state, spec, frame, window, n_quad)
    gap = sobolev_norm(analytic - numerical, s, frame.eigenvalues)
    return {"analytic": analytic, "numerical": numerical, "residual": float(gap)}


# -- scalar observables and their averages ---------------------------------

@dataclass(frozen=True)
class Observable:
    """Polynomial in (v, conj v): tuple of (coeff, v_powers, vbar_powers) terms.

    Powers are tuples of (mode index, exponent) pairs.
    """

    terms: tuple

    def __post_init__(self):
        cleaned = []
        for coeff, vpow, cpow in self.terms:
            cleaned.append((complex(coeff),
                            tuple((int(k), int(p)) for k, p in vpow),
                            tuple((int(k), int(p)) for k, p in cpow)))
        object.__setattr__(self, "terms", tuple(cleaned))

    def __call__(self, state):
        v = mode_vector(state)
        out = np.zeros(v.shape[:-1], dtype=complex)
        for coeff, vpow, cpow in self.terms:
            acc = np.full(v.shape[:-1], coeff, dtype=complex)
            for k, p in vpow:
                acc = acc * v[..., k] ** p
            for k, p in cpow:
                acc = acc * np.conj(v[..., k]) ** p
            out += acc
        return out

    def rotation_frequency(self, term, frequencies):
        _, vpow, cpow = term
        freq = 0.0
        for k, p in vpow:
            freq += p * frequencies[k]
        for k, p in cpow:
            freq -= p * frequencies[k]
        return freq

    def to_document(self):
        return [{"re": c.real, "im": c.imag,
                 "v": [[k, p] for k, p in vp], "vbar": [[k, p] for k, p in cp]}
                for c, vp, cp in self.terms]

    @staticmethod
    def from_document(doc):
        return Observable(tuple(
            (complex(t["re"], t["im"]),
             tuple((k, p) for k, p in t.get("v", [])),
             tuple((k, p) for k, p in t.get("vbar", [])))
            for t in doc))


def action_observable(k):
    """I_k as an observable: |v_k|^2 / 2."""
    return Observable(((0.5, ((k, 1),), ((k, 1),)),))


def monomial_observable(coeff, v=(), vbar=()):
    from collections import Counter
    return Observable(((coeff, tuple(Counter(v).items()), tuple(Counter(vbar).items())),))


def scalar_average(observable, frequencies, state, window, n_quad, target=None):
    """Finite-window average (1/T) int_0^T e^{i w_target t} f(rotate(-Wt) v) dt.

    target None drops the oscillating prefactor (the bracket average that
    commutes with the rotation flow).
    """
    v = mode_vector(state)
    freqs = np.asarray(frequencies, dtype=float)
    if not (window > 0) or n_quad < 2:
        raise ConfigError("need window > 0 and at least two quadrature nodes")
    ts = np.linspace(0.0, window, int(n_quad))
    weights = np.full(ts.size, 1.0 / (ts.size - 1))
    weights[0] *= 0.5
    weights[-1] *= 0.5
    rotated = np.exp(-1j * np.outer(ts, freqs)) * v
    vals = observable(rotated)
    if target is not None:
        vals = vals * np.exp(1j * freqs[int(target)] * ts)
    return complex(weights @ vals)


def scalar_average_limit(observable, frequencies, target=None, eta=1e-8):
    """Infinite-window limit of scalar_average: keep only resonant terms."""
    freqs = np.asarray(frequencies, dtype=float)
    shift = freqs[int(target)] if target is not None else 0.0
    scale = max(1.0, float(np.max(np.abs(freqs))))
    kept = [t for t in observable.terms
            if abs(shift - observable.rotation_frequency(t, freqs)) <= eta * scale]
    return Observable(tuple(kept))
