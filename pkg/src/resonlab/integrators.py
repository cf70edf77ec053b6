"""Time integration of the full rotated system and of its averaged limit.

Both systems share the stiff diagonal -mu lambda_k, handled exactly through
exponential (Lawson) schemes:

    full       da/dtau = -mu Lambda a + Y(a, tau / epsilon)      [+ noise]
    effective  da/dtau = -mu Lambda a + R(a)                     [+ B dbeta]

Deterministic runs use a Lawson RK4 step by default; stochastic runs use an
exponential Euler-Maruyama step.  Every run, single or ensemble, goes through
one batched driver, so a zero-amplitude stochastic run is bitwise identical to
the deterministic "expeuler" scheme.  Complex noise follows the convention
E|beta_l(tau)|^2 = 2 tau (independent standard real and imaginary parts).
"""

from dataclasses import dataclass, replace
import math

import numpy as np

from .errors import BlowUpError, ConfigError, EnsembleError
from .fields import ResonantDrift, eval_Y
from .spectral import mode_vector

SCHEMES = ("lawson4", "expeuler")
NOISE_CONVENTION = "E|beta_l(tau)|^2 = 2 tau"
_NOISE_CHUNK = 256  # steps of normals drawn per generator call


@dataclass(frozen=True)
class SolverConfig:
    """Integration parameters in slow time tau.

    dt is the requested step; full-system runs refine it to
    min(dt, theta_osc * epsilon / max(1, lambda_max)) so the fastest rotation
    stays resolved.  The blow-up guard aborts a trajectory once its Sobolev
    norm of order blow_up_norm exceeds blow_up_factor * (initial norm + 1).
    """

    epsilon: float
    tau_end: float
    dt: float = 1e-2
    scheme: str = "lawson4"
    theta_osc: float = 0.2
    samples: int = 101
    blow_up_factor: float = 100.0
    blow_up_norm: float = 1.0

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not (self.tau_end > 0):
            raise ConfigError(f"tau_end must be positive, got {self.tau_end}")
        if not (self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not (self.theta_osc > 0):
            raise ConfigError("theta_osc must be positive")
        if int(self.samples) < 2:
            raise ConfigError("need at least two sample times")
        if not (self.blow_up_factor > 1):
            raise ConfigError("blow_up_factor must exceed 1")
        if not (self.blow_up_norm >= 0):
            raise ConfigError("blow_up_norm must be >= 0")

    def sample_taus(self):
        return np.linspace(0.0, self.tau_end, int(self.samples))

    def to_document(self):
        return {
            "epsilon": self.epsilon, "tau_end": self.tau_end, "dt": self.dt,
            "scheme": self.scheme, "theta_osc": self.theta_osc,
            "samples": int(self.samples), "blow_up_factor": self.blow_up_factor,
            "blow_up_norm": self.blow_up_norm,
        }

    @staticmethod
    def from_document(doc):
        return SolverConfig(**doc)


def replace_config(config, **updates):
    """Convenience for studies sweeping one or two solver parameters."""
    return replace(config, **updates)


def oscillation_step(config, eigenvalues):
    """Slow-time step resolving the fastest phase of the rotated field."""
    span = max(1.0, float(np.max(np.abs(eigenvalues))))
    return min(config.dt, config.theta_osc * config.epsilon / span)


@dataclass
class Trajectory:
    """Sampled mode coordinates of a single run (interaction representation)."""

    taus: np.ndarray
    states: np.ndarray          # (samples, modes) complex
    scheme: str
    epsilon: float | None = None   # None marks an effective-equation run
    seed: int | None = None
    frame_hash: str | None = None
    noise_doc: dict | None = None
    disparity: np.ndarray | None = None      # (samples, modes) accumulated gap
    disparity_max: np.ndarray | None = None  # running max of |gap integral|
    meta: dict | None = None

    def actions(self):
        return 0.5 * np.abs(self.states) ** 2

    def final_state(self):
        return self.states[-1]

    def physical_states(self, eigenvalues):
        """Undo the interaction rotation; identity for effective runs."""
        if self.epsilon is None:
            return self.states
        phases = np.exp(-1j * np.outer(self.taus / self.epsilon, eigenvalues))
        return phases * self.states


# -- noise ------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Per-basis-function noise amplitudes b_l (canonical trigonometric order)."""

    amplitudes: tuple

    def __post_init__(self):
        b = tuple(float(x) for x in self.amplitudes)
        if any(x < 0 or not math.isfinite(x) for x in b):
            raise ConfigError("noise amplitudes must be finite and >= 0")
        object.__setattr__(self, "amplitudes", b)

    @staticmethod
    def zero(modes):
        return NoiseModel((0.0,) * int(modes))

    @staticmethod
    def from_eigenvalue_power(eigenvalues, power):
        """b_k = lambda_k^{-power}; modes with lambda_k <= 0 get b = 0."""
        lam = np.asarray(eigenvalues, dtype=float)
        b = np.zeros_like(lam)
        mask = lam > 0
        b[mask] = lam[mask] ** -float(power)
        return NoiseModel(tuple(b))

    @property
    def is_zero(self):
        return all(x == 0.0 for x in self.amplitudes)

    def array(self):
        return np.asarray(self.amplitudes, dtype=float)

    def to_document(self):
        return {"amplitudes": list(self.amplitudes), "convention": NOISE_CONVENTION}

    @staticmethod
    def from_document(doc):
        return NoiseModel(tuple(doc["amplitudes"]))


class _NoiseStream:
    """Per-member Philox generators, drawn in fixed-size step blocks.

    Member i always consumes its stream in the same order (2 * modes normals
    per step), so a member integrated alone reproduces its batch trajectory.
    """

    def __init__(self, seed_base, members, modes):
        self.gens = [np.random.Generator(np.random.Philox(key=int(seed_base) + i))
                     for i in range(members)]
        self.modes = int(modes)
        self._buffer = None
        self._cursor = 0

    def next_step(self):
        """Standard normals of shape (members, 2, modes) for one step."""
        if self._buffer is None or self._cursor == self._buffer.shape[0]:
            draws = [g.standard_normal((_NOISE_CHUNK, 2, self.modes)) for g in self.gens]
            self._buffer = np.stack(draws, axis=1)
            self._cursor = 0
        block = self._buffer[self._cursor]
        self._cursor += 1
        return block


def _full_noise_injector(noise, frame, epsilon):
    if noise.is_zero:
        return None
    scaled = noise.array()[:, None] * frame.eigenvectors.T  # (basis l, mode k)
    lam = frame.eigenvalues

    def inject(tau, dbeta):
        # physical-space increment Psi(b dbeta), rotated into interaction frame
        phase = np.exp(1j * (tau / epsilon) * lam)
        return phase * (dbeta @ scaled)

    return inject


def _effective_noise_injector(diffusion):
    root = diffusion.root
    if not np.any(root):
        return None

    def inject(tau, dbeta):
        return dbeta @ root.T

    return inject


# -- batched driver ---------------------------------------------------------

def _lawson4_step(a, tau, h, E, E2, g, k1):
    k2 = g(E2 * (a + (0.5 * h) * k1), tau + 0.5 * h)
    k3 = g(E2 * a + (0.5 * h) * k2, tau + 0.5 * h)
    k4 = g(E * a + h * (E2 * k3), tau + h)
    return E * a + (h / 6.0) * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)


def _expeuler_step(a, h, E, k1):
    return E * (a + h * k1)


def _segment_steps(taus, h_target):
    """Per-segment (count, width) pairs; widths divide segments exactly."""
    plan = []
    for t0, t1 in zip(taus[:-1], taus[1:]):
        seg = float(t1 - t0)
        n = max(1, math.ceil(seg / h_target - 1e-12))
        plan.append((n, seg / n))
    return plan


def _guard_weights(eigenvalues, s):
    return np.abs(np.asarray(eigenvalues, dtype=float)) ** s + 1.0


def _guard_norm(a, weights):
    return np.sqrt(np.sum(weights * np.abs(a) ** 2, axis=-1))


def _drive(a0, g, lam, mu, config, h_target, inject=None, stream=None, drift=None):
    """Propagate an (members, modes) batch over the sample grid.

    Members whose guard norm leaves the safety ball are frozen to NaN but keep
    consuming their noise stream, so survivors are unaffected by exclusions.
    Disparity tracking (drift given) accumulates the integral of g - drift by
    the trapezoid rule on step nodes, reusing the scheme's own k1 stages.
    """
    taus = config.sample_taus()
    members, modes = a0.shape
    states = np.empty((taus.size, members, modes), dtype=complex)
    states[0] = a0
    weights = _guard_weights(lam, config.blow_up_norm)
    bound = config.blow_up_factor * (_guard_norm(a0, weights) + 1.0)
    dead = np.zeros(members, dtype=bool)
    death_tau = np.full(members, np.nan)
    death_norm = np.full(members, np.nan)

    track = drift is not None
    disparity = np.zeros_like(states) if track else None
    disp_max = np.zeros((members, modes)) if track else None
    D = np.zeros((members, modes), dtype=complex)
    gap_prev = None
    h_prev = 0.0

    use_lawson = config.scheme == "lawson4"
    a = a0.astype(complex)
    total = 0
    plan = _segment_steps(taus, h_target)
    for i, (n, h) in enumerate(plan):
        E = np.exp(-mu * lam * h)
        E2 = np.exp(-mu * lam * (0.5 * h)) if use_lawson else None
        sqrt_h = math.sqrt(h)
        t0 = taus[i]
        for j in range(n):
            tau_n = t0 + j * h
            k1 = g(a, tau_n)
            if track:
                gap = k1 - drift(a)
                if gap_prev is not None:
                    D = D + (0.5 * h_prev) * (gap_prev + gap)
                    np.maximum(disp_max, np.abs(D), out=disp_max)
                gap_prev, h_prev = gap, h
            if use_lawson:
                a = _lawson4_step(a, tau_n, h, E, E2, g, k1)
            else:
                a = _expeuler_step(a, h, E, k1)
            if inject is not None:
                z = stream.next_step()
                a = a + inject(tau_n + h, sqrt_h * (z[:, 0] + 1j * z[:, 1]))
            with np.errstate(invalid="ignore"):
                norm = _guard_norm(a, weights)
                fresh = ~dead & (~np.isfinite(norm) | (norm > bound))
            if np.any(fresh):
                dead |= fresh
                death_tau[fresh] = tau_n + h
                death_norm[fresh] = norm[fresh]
                a[fresh] = np.nan
            total += 1
        states[i + 1] = a
        if track:
            # close the trapezoid at the sample node before recording
            gap = g(a, taus[i + 1]) - drift(a)
            D_here = D + (0.5 * h_prev) * (gap_prev + gap)
            disparity[i + 1] = D_here
            with np.errstate(invalid="ignore"):
                np.maximum(disp_max, np.abs(D_here), out=disp_max)
    return {
        "taus": taus, "states": states, "dead": dead,
        "death_tau": death_tau, "death_norm": death_norm, "bound": bound,
        "disparity": disparity, "disp_max": disp_max, "steps": total,
    }


def _raise_if_dead(run, member=0, annotate=None):
    if run["dead"][member]:
        raise BlowUpError(float(run["death_tau"][member]),
                          float(run["death_norm"][member]),
                          float(np.atleast_1d(run["bound"])[member]),
                          member=annotate)


# -- public single-run integrators ------------------------------------------

def step_full_deterministic(state, tau, h, spec, frame, config):
    """Advance the full rotated system by one step of the configured scheme.

    Refuses steps larger than the oscillation-resolving bound; the driver
    routines never produce such steps, so hitting this means a caller bug.
    """
    limit = oscillation_step(config, frame.eigenvalues)
    if h > limit * (1.0 + 1e-9):
        raise ConfigError(f"step {h:.3g} exceeds the oscillation bound {limit:.3g}")
    a = np.atleast_2d(mode_vector(state))
    lam = frame.eigenvalues
    E = np.exp(-spec.mu * lam * h)
    g = lambda x, t: eval_Y(x, t / config.epsilon, spec, frame)
    k1 = g(a, tau)
    if config.scheme == "lawson4":
        E2 = np.exp(-spec.mu * lam * (0.5 * h))
        out = _lawson4_step(a, tau, h, E, E2, g, k1)
    else:
        out = _expeuler_step(a, h, E, k1)
    return out.reshape(np.shape(mode_vector(state)))


def integrate_full(state, spec, frame, config, table=None, track_disparity=False):
    """Integrate the rotated full system from tau = 0 to tau_end.

    With track_disparity the running integral of Y - R along the numerical
    trajectory is accumulated and sampled; this needs a resonance table for
    the averaged drift.
    """
    a0 = np.atleast_2d(mode_vector(state))
    lam = frame.eigenvalues
    inv_eps = 1.0 / config.epsilon
    drift = None
    if track_disparity:
        if table is None:
            raise ConfigError("disparity tracking needs a resonance table")
        drift = ResonantDrift(frame, spec, table)
    h_target = oscillation_step(config, lam)
    run = _drive(a0, lambda x, tau: eval_Y(x, inv_eps * tau, spec, frame),
                 lam, spec.mu, config, h_target, drift=drift)
    _raise_if_dead(run)
    return Trajectory(
        taus=run["taus"], states=run["states"][:, 0], scheme=config.scheme,
        epsilon=config.epsilon, frame_hash=frame.content_hash(),
        disparity=None if drift is None else run["disparity"][:, 0],
        disparity_max=None if drift is None else run["disp_max"][0],
        meta={"h_target": h_target, "steps": run["steps"]})


def integrate_effective(state, spec, frame, config, table=None, drift=None):
    """Integrate the averaged equation; autonomous, so no oscillation refinement.

    A custom drift callable (e.g. the quadrature route, for oracle swaps)
    replaces the resonant-sum drift built from the table.
    """
    a0 = np.atleast_2d(mode_vector(state))
    if drift is None:
        drift = ResonantDrift(frame, spec, table)
    run = _drive(a0, lambda x, tau: drift(x), frame.eigenvalues, spec.mu,
                 config, config.dt)
    _raise_if_dead(run)
    return Trajectory(
        taus=run["taus"], states=run["states"][:, 0], scheme=config.scheme,
        epsilon=None, frame_hash=frame.content_hash(),
        meta={"h_target": config.dt, "steps": run["steps"]})


def integrate_full_stochastic(state, spec, frame, config, noise, seed):
    """Single noisy trajectory of the full rotated system."""
    if config.scheme != "expeuler":
        raise ConfigError("stochastic runs use scheme='expeuler'")
    a0 = np.atleast_2d(mode_vector(state))
    stream = _NoiseStream(seed, a0.shape[0], frame.modes)
    inject = _full_noise_injector(noise, frame, config.epsilon)
    h_target = oscillation_step(config, frame.eigenvalues)
    run = _drive(a0, lambda x, tau: eval_Y(x, tau / config.epsilon, spec, frame),
                 frame.eigenvalues, spec.mu, config, h_target,
                 inject=inject, stream=stream)
    _raise_if_dead(run, annotate=0)
    return Trajectory(
        taus=run["taus"], states=run["states"][:, 0], scheme=config.scheme,
        epsilon=config.epsilon, seed=int(seed), frame_hash=frame.content_hash(),
        noise_doc=noise.to_document(), meta={"h_target": h_target})


def integrate_effective_stochastic(state, spec, frame, config, table, diffusion, seed):
    """Single noisy trajectory of the averaged equation."""
    if config.scheme != "expeuler":
        raise ConfigError("stochastic runs use scheme='expeuler'")
    a0 = np.atleast_2d(mode_vector(state))
    stream = _NoiseStream(seed, a0.shape[0], frame.modes)
    drift = ResonantDrift(frame, spec, table)
    run = _drive(a0, lambda x, tau: drift(x), frame.eigenvalues, spec.mu,
                 config, config.dt, inject=_effective_noise_injector(diffusion),
                 stream=stream)
    _raise_if_dead(run, annotate=0)
    return Trajectory(
        taus=run["taus"], states=run["states"][:, 0], scheme=config.scheme,
        epsilon=None, seed=int(seed), frame_hash=frame.content_hash(),
        meta={"h_target": config.dt})


# -- ensembles --------------------------------------------------------------

@dataclass
class EnsembleResult:
    """Action statistics over the surviving members of a batch run."""

    taus: np.ndarray
    mean_actions: np.ndarray    # (samples, modes)
    var_actions: np.ndarray     # unbiased, over surviving members
    stderr_actions: np.ndarray
    members: int
    excluded: list
    seed_base: int
    frame_hash: str | None = None
    disparity_mean: np.ndarray | None = None  # per-mode mean over survivors
    meta: dict | None = None

    @property
    def survivors(self):
        return self.members - len(self.excluded)


_MAX_EXCLUDED_FRACTION = 0.05


def _summarize(run, seed_base, frame_hash, meta):
    states, dead = run["states"], run["dead"]
    members = states.shape[1]
    excluded = [int(i) for i in np.flatnonzero(dead)]
    if len(excluded) > _MAX_EXCLUDED_FRACTION * members:
        raise EnsembleError(
            f"{len(excluded)} of {members} members blew up; "
            f"more than {_MAX_EXCLUDED_FRACTION:.0%} lost")
    alive = states[:, ~dead]
    n = alive.shape[1]
    if n == 0:
        raise EnsembleError("no surviving members")
    acts = 0.5 * np.abs(alive) ** 2
    mean = np.sum(acts, axis=1) / n  # np.sum is pairwise, keeps roundoff flat
    if n > 1:
        var = np.sum((acts - mean[:, None]) ** 2, axis=1) / (n - 1)
    else:
        var = np.zeros_like(mean)
    stderr = np.sqrt(var / n)
    disp_mean = None
    if run["disp_max"] is not None:
        disp_mean = np.sum(run["disp_max"][~dead], axis=0) / n
    return EnsembleResult(taus=run["taus"], mean_actions=mean, var_actions=var,
                          stderr_actions=stderr, members=members,
                          excluded=excluded, seed_base=int(seed_base),
                          frame_hash=frame_hash, disparity_mean=disp_mean,
                          meta=meta)


def _broadcast_members(state, members, modes):
    a0 = mode_vector(state)
    if a0.ndim == 1:
        a0 = np.broadcast_to(a0, (members, modes)).copy()
    if a0.shape != (members, modes):
        raise ConfigError(f"initial state must have shape ({members}, {modes})")
    return a0


def ensemble_full(state, spec, frame, config, noise, members, seed_base,
                  table=None, track_disparity=False):
    """Batch of noisy full-system runs; member i uses Philox key seed_base + i."""
    if config.scheme != "expeuler":
        raise ConfigError("stochastic runs use scheme='expeuler'")
    a0 = _broadcast_members(state, members, frame.modes)
    stream = _NoiseStream(seed_base, members, frame.modes)
    inject = _full_noise_injector(noise, frame, config.epsilon)
    drift = None
    if track_disparity:
        if table is None:
            raise ConfigError("disparity tracking needs a resonance table")
        drift = ResonantDrift(frame, spec, table)
    h_target = oscillation_step(config, frame.eigenvalues)
    run = _drive(a0, lambda x, tau: eval_Y(x, tau / config.epsilon, spec, frame),
                 frame.eigenvalues, spec.mu, config, h_target,
                 inject=inject, stream=stream, drift=drift)
    return _summarize(run, seed_base, frame.content_hash(),
                      {"h_target": h_target, "system": "full",
                       "noise": noise.to_document()})


def ensemble_effective(state, spec, frame, config, table, diffusion, members, seed_base):
    """Batch of noisy effective-equation runs with matched member seeding."""
    if config.scheme != "expeuler":
        raise ConfigError("stochastic runs use scheme='expeuler'")
    a0 = _broadcast_members(state, members, frame.modes)
    stream = _NoiseStream(seed_base, members, frame.modes)
    drift = ResonantDrift(frame, spec, table)
    run = _drive(a0, lambda x, tau: drift(x), frame.eigenvalues, spec.mu,
                 config, config.dt, inject=_effective_noise_injector(diffusion),
                 stream=stream)
    return _summarize(run, seed_base, frame.content_hash(),
                      {"h_target": config.dt, "system": "effective"})
