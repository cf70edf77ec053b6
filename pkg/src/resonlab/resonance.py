"""Resonance bookkeeping: eigenvalue clusters, resonant index sets, noise blocks.

Two kinds of enumeration live here.  Lattice enumeration works on integer wave
vectors of the square torus (momentum + frequency constraints, exact integer
arithmetic).  Frequency enumeration works on an arbitrary ascending eigenvalue
list and a sign pattern, with either exact scaled-integer comparisons or a
relative tolerance eta.
"""

from dataclasses import dataclass
import json
import hashlib
import math

import numpy as np

from .errors import ConfigError, UnsupportedModeError, ValidationError

DEFAULT_ETA = 1e-8
TWO_PI = 2.0 * math.pi


def _check_sorted(eigenvalues):
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ConfigError("eigenvalue list must be a nonempty vector")
    if np.any(np.diff(lam) < -1e-12 * np.maximum(1.0, np.abs(lam[:-1]))):
        raise ValidationError("eigenvalue list must be ascending")
    return lam


def integer_frequencies(frame):
    """Scaled integer eigenvalues for the completely resonant case, else None.

    Available when the torus is square (all sides equal) and the potential
    vanishes; then lambda_k = (2 pi / L)^2 * |m_k|^2 and the integer part is
    recovered exactly.
    """
    geo = frame.geometry
    if not frame.potential.is_zero:
        return None
    if any(L != geo.lengths[0] for L in geo.lengths):
        return None
    scale = (TWO_PI / geo.lengths[0]) ** 2
    scaled = frame.eigenvalues / scale
    ints = np.rint(scaled).astype(np.int64)
    if np.max(np.abs(scaled - ints)) > 1e-9:
        return None
    return ints


def eigenvalue_clusters(eigenvalues, eta=DEFAULT_ETA, integers=None):
    """Partition mode indices into clusters of equal frequency.

    Adjacent eigenvalues closer than eta * max(1, |lambda|) are merged
    (transitive closure along the sorted list).  With `integers` given the
    comparison is exact on the scaled integer frequencies.
    """
    lam = _check_sorted(eigenvalues)
    if eta < 0:
        raise ConfigError("cluster tolerance must be nonnegative")
    clusters = [[0]]
    for k in range(1, lam.size):
        if integers is not None:
            same = integers[k] == integers[k - 1]
        else:
            same = abs(lam[k] - lam[k - 1]) <= eta * max(1.0, abs(lam[k]))
        if same:
            clusters[-1].append(k)
        else:
            clusters.append([k])
    return clusters


# -- lattice enumeration (square torus, V = 0) -----------------------------

def lattice_window(dimension, radius):
    """All integer wave vectors with |k_i| <= radius, lexicographic order."""
    if dimension not in (1, 2):
        raise ConfigError(f"dimension must be 1 or 2, got {dimension}")
    axis = range(-radius, radius + 1)
    if dimension == 1:
        return [(k,) for k in axis]
    return [(k1, k2) for k1 in axis for k2 in axis]


def enumerate_cubic_resonances(radius, target, dimension=None):
    """Exact cubic resonances on the square-torus lattice.

    Returns every (k1, k2, k3) inside the window |k_i| <= radius with
    k1 - k2 + k3 = target and |k1|^2 - |k2|^2 + |k3|^2 = |target|^2,
    sorted lexicographically.  Pure integer arithmetic.
    """
    target = tuple(int(x) for x in (target if isinstance(target, (tuple, list)) else (target,)))
    if dimension is None:
        dimension = len(target)
    if len(target) != dimension:
        raise ConfigError(f"target {target} does not match dimension {dimension}")
    if any(abs(t) > radius for t in target):
        raise ConfigError(f"target {target} outside window radius {radius}")
    window = lattice_window(dimension, radius)
    target_sq = sum(t * t for t in target)
    out = []
    for k1 in window:
        for k2 in window:
            k3 = tuple(t - a + b for t, a, b in zip(target, k1, k2))
            if any(abs(x) > radius for x in k3):
                continue
            if sum(x * x for x in k1) - sum(x * x for x in k2) + sum(x * x for x in k3) == target_sq:
                out.append((k1, k2, k3))
    out.sort()
    return out


# -- frequency enumeration (general frame) ---------------------------------

def _signed_sums(lam, pattern):
    """Array S[i1,...,iD] = sum_j pattern_j * lam[i_j]."""
    D = len(pattern)
    S = np.zeros((1,) * D)
    for j, sign in enumerate(pattern):
        shape = [1] * D
        shape[j] = lam.size
        S = S + sign * lam.reshape(shape)
    return S


def enumerate_frequency_resonances(eigenvalues, pattern, target, eta=DEFAULT_ETA,
                                   integers=None):
    """Mode-index tuples whose signed frequency sum matches mode `target`.

    pattern is a tuple of +-1 signs, one per monomial slot (+1 for a plain
    factor, -1 for a conjugated one).  Comparison is exact when scaled integer
    frequencies are supplied, otherwise |deviation| <= eta * max(1, max lam).
    """
    lam = _check_sorted(eigenvalues)
    if not pattern or any(s not in (-1, 1) for s in pattern):
        raise ConfigError(f"pattern must be nonempty +-1 signs, got {pattern!r}")
    if not 0 <= target < lam.size:
        raise ConfigError(f"target index {target} out of range")
    if integers is not None:
        S = _signed_sums(np.asarray(integers, dtype=np.int64), pattern)
        hits = np.argwhere(S == integers[target])
    else:
        S = _signed_sums(lam, pattern)
        scale = max(1.0, float(np.max(np.abs(lam))))
        hits = np.argwhere(np.abs(S - lam[target]) <= eta * scale)
    return [tuple(int(i) for i in row) for row in hits]


def minimal_frequency_gap(eigenvalues, patterns, eta=DEFAULT_ETA, integers=None):
    """Smallest nonresonant |deviation| over all targets and slot tuples.

    This is the spectral gap that controls how slowly oscillatory means decay,
    so averaging windows are sized against it.  Returns inf when every
    combination is resonant.
    """
    lam = _check_sorted(eigenvalues)
    best = math.inf
    for pattern in patterns:
        if integers is not None:
            S = _signed_sums(np.asarray(integers, dtype=np.int64), pattern)
            scale_phys = float(lam[-1] / integers[-1]) if integers[-1] != 0 else 1.0
            for t in integers:
                dev = np.abs(S - t)
                nz = dev[dev > 0]
                if nz.size:
                    best = min(best, float(nz.min()) * scale_phys)
        else:
            S = _signed_sums(lam, pattern)
            scale = max(1.0, float(np.max(np.abs(lam))))
            for t in lam:
                dev = np.abs(S - t)
                nz = dev[dev > eta * scale]
                if nz.size:
                    best = min(best, float(nz.min()))
    return best


@dataclass
class ResonanceTable:
    """Resonant structure of one eigenvalue list under declared sign patterns."""

    eigenvalues: np.ndarray
    eta: float
    mode: str  # "exact" or "float"
    clusters: list
    resonances: dict  # pattern tuple -> {target index -> list of index tuples}
    gamma_min: float
    frame_hash: str | None = None

    def tuples(self, pattern, target):
        return self.resonances[tuple(pattern)][target]

    def suggested_window(self, periods=50.0):
        """Averaging window covering `periods` slow beats of the smallest gap."""
        if not math.isfinite(self.gamma_min):
            return periods * TWO_PI
        return periods * TWO_PI / self.gamma_min

    def to_document(self):
        entries = []
        for pattern in sorted(self.resonances):
            for target in sorted(self.resonances[pattern]):
                entries.append({
                    "pattern": list(pattern),
                    "target": target,
                    "tuples": [list(t) for t in self.resonances[pattern][target]],
                })
        doc = {
            "schema": "resonlab-resonance-v1",
            "lambda": np.asarray(self.eigenvalues).tolist(),
            "eta_res": self.eta,
            "mode": self.mode,
            "gamma_min": self.gamma_min if math.isfinite(self.gamma_min) else None,
            "clusters": [list(c) for c in self.clusters],
            "resonances": entries,
        }
        if self.frame_hash is not None:
            doc["frame_sha256"] = self.frame_hash
        return doc

    def canonical_bytes(self):
        return json.dumps(self.to_document(), separators=(",", ":")).encode()

    def content_hash(self):
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    @staticmethod
    def from_document(doc):
        if doc.get("schema") != "resonlab-resonance-v1":
            raise ConfigError(f"unknown resonance schema {doc.get('schema')!r}")
        resonances = {}
        for entry in doc["resonances"]:
            pattern = tuple(entry["pattern"])
            resonances.setdefault(pattern, {})[entry["target"]] = [
                tuple(t) for t in entry["tuples"]]
        gamma = doc["gamma_min"]
        return ResonanceTable(
            eigenvalues=np.array(doc["lambda"], dtype=float),
            eta=float(doc["eta_res"]),
            mode=doc["mode"],
            clusters=[list(c) for c in doc["clusters"]],
            resonances=resonances,
            gamma_min=math.inf if gamma is None else float(gamma),
            frame_hash=doc.get("frame_sha256"),
        )


def build_resonance_table(frame, patterns=((1, -1, 1),), eta=DEFAULT_ETA, mode="auto"):
    """Enumerate clusters and resonant tuples of a frame for the given patterns.

    mode "exact" demands the square-torus integer fast path and errors without
    it; "float" always uses the eta tolerance; "auto" prefers exact arithmetic
    when available.
    """
    patterns = tuple(tuple(int(s) for s in p) for p in patterns)
    ints = integer_frequencies(frame)
    if mode == "exact" and ints is None:
        raise UnsupportedModeError("exact arithmetic needs a square torus with V = 0")
    if mode == "float":
        ints = None
    elif mode not in ("auto", "exact"):
        raise ConfigError(f"unknown resonance mode {mode!r}")
    lam = frame.eigenvalues
    resonances = {}
    for pattern in patterns:
        per_target = {}
        for target in range(lam.size):
            per_target[target] = enumerate_frequency_resonances(
                lam, pattern, target, eta=eta, integers=ints)
        resonances[pattern] = per_target
    return ResonanceTable(
        eigenvalues=lam.copy(),
        eta=eta,
        mode="exact" if ints is not None else "float",
        clusters=eigenvalue_clusters(lam, eta=eta, integers=ints),
        resonances=resonances,
        gamma_min=minimal_frequency_gap(lam, patterns, eta=eta, integers=ints),
        frame_hash=frame.content_hash(),
    )


# -- diffusion blocks ------------------------------------------------------

@dataclass
class DiffusionSpec:
    """Effective noise covariance A and its principal square root B."""

    matrix: np.ndarray
    root: np.ndarray
    clusters: list
    amplitudes: np.ndarray

    def validate(self, tol=1e-10):
        A, B = self.matrix, self.root
        if np.max(np.abs(B @ B - A)) > tol:
            raise ValidationError("principal root check B @ B = A failed")
        if np.max(np.abs(B - B.T)) > tol:
            raise ValidationError("principal root is not symmetric")
        w = np.linalg.eigvalsh(B)
        if w.min() < -tol:
            raise ValidationError("principal root is not positive semidefinite")


def build_diffusion(frame, amplitudes, eta=DEFAULT_ETA):
    """Covariance of the effective noise and its blockwise principal root.

    A_kr = sum_l b_l^2 psi_kl psi_rl on equal-frequency clusters, zero across
    clusters.  The square root is taken per cluster via symmetric
    eigendecomposition with tiny negative eigenvalues (>= -1e-12) clamped.
    """
    b = np.asarray(amplitudes, dtype=float)
    if b.shape != (frame.modes,):
        raise ConfigError(f"need {frame.modes} noise amplitudes, got shape {b.shape}")
    if np.any(b < 0):
        raise ConfigError("noise amplitudes must be nonnegative")
    ints = integer_frequencies(frame)
    clusters = eigenvalue_clusters(frame.eigenvalues, eta=eta, integers=ints)
    full = (frame.eigenvectors * b ** 2) @ frame.eigenvectors.T
    A = np.zeros_like(full)
    B = np.zeros_like(full)
    for cluster in clusters:
        idx = np.ix_(cluster, cluster)
        block = full[idx]
        A[idx] = block
        w, U = np.linalg.eigh(0.5 * (block + block.T))
        if w.min() < -1e-12:
            raise ValidationError(f"diffusion block has negative eigenvalue {w.min():.3e}")
        B[idx] = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
    spec = DiffusionSpec(matrix=A, root=B, clusters=clusters, amplitudes=b)
    spec.validate()
    return spec


def noise_band_sum(eigenvalues, amplitudes, s):
    """Diagnostic 2 sum_l |lambda_l|^{2s} b_l^2 reported with stochastic runs."""
    lam = np.abs(np.asarray(eigenvalues, dtype=float))
    b = np.asarray(amplitudes, dtype=float)
    return 2.0 * float(np.sum(lam ** (2.0 * s) * b ** 2))
