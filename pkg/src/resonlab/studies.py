"""Claim-sized studies over the averaging machinery.

Each study turns one statement about the effective dynamics into runs,
tables, and boolean verdicts: deterministic action convergence along an
epsilon ladder, finite-window operator averages against their resonant
limits, stochastic action moments, stationary-state estimates, and the
decay of the accumulated drift disparity.  Everything runs in memory;
the provenance block records content hashes of the frame, the config,
and every trajectory or ensemble a table number came from.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fields import (Observable, QuadratureDrift, action_observable,
                     default_quadrature_nodes, drift_route_residual,
                     monomial_observable, scalar_average, scalar_average_limit)
from .integrators import (NOISE_CONVENTION, SolverConfig, ensemble_full,
                          ensemble_effective, integrate_effective,
                          integrate_effective_stochastic, integrate_full,
                          integrate_full_stochastic, replace_config)
from .io import (REPORT_SCHEMA, content_hash, ensemble_hash, trajectory_hash)
from .spectral import action_distance, mode_vector, sample_ball

__all__ = [
    "STUDIES", "StudyConfig", "StudyReport", "run_study",
    "study_deterministic_convergence", "study_operator_convergence",
    "study_stochastic_actions", "study_stationary_measure",
    "study_disparity_decay",
]

STUDIES = ("converge", "operator", "stochastic", "stationary", "disparity")

_CONFIG_FIELDS = ("study", "epsilons", "s1", "s_star", "tau_end", "dt",
                  "samples", "theta_osc", "initials", "radius", "members",
                  "seed", "initial_seed", "tracked_modes", "compare_taus",
                  "burn_in", "batches", "batch_length", "windows",
                  "quadrature_margin")


@dataclass(frozen=True)
class StudyConfig:
    """Numeric knobs shared by the studies; physical objects come in as arguments.

    `epsilons` is the ladder (strictly decreasing), `s1` the action-distance
    exponent, `s_star` the smoothness of sampled initial data.  `compare_taus`
    restricts moment comparisons to a subset of the sample grid (empty means
    every positive sample time).  `burn_in`/`batches`/`batch_length` shape the
    stationary time averages; `windows` is the averaging-window grid of the
    operator study.  `initial_seed` pins the sampled initial data separately
    from the Monte Carlo seed (None reuses `seed`).
    """

    study: str
    epsilons: tuple = (0.1, 0.05, 0.025, 0.0125)
    s1: float = 1.6
    s_star: float = 2.0
    tau_end: float = 1.0
    dt: float = 1e-3
    samples: int = 21
    theta_osc: float = 0.2
    initials: int = 3
    radius: float = 1.0
    members: int = 200
    seed: int = 2718
    initial_seed: int | None = None
    tracked_modes: int = 4
    compare_taus: tuple = ()
    burn_in: float = 6.0
    batches: int = 20
    batch_length: float = 1.5
    windows: tuple = ()
    quadrature_margin: float = 1e-8

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; pick one of {STUDIES}")
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(not (e > 0) for e in eps):
            raise ConfigError("epsilon ladder must be nonempty and positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilon ladder must be strictly decreasing")
        if not (0.0 <= self.s1 < self.s_star):
            raise ConfigError(f"need 0 <= s1 < s_star, got s1={self.s1} s_star={self.s_star}")
        if self.initials < 1 or self.members < 2 or self.tracked_modes < 1:
            raise ConfigError("need initials >= 1, members >= 2, tracked_modes >= 1")
        if self.batches < 4 or not (self.burn_in >= 0) or not (self.batch_length > 0):
            raise ConfigError("stationary averaging needs batches >= 4, burn_in >= 0, batch_length > 0")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "compare_taus", tuple(float(t) for t in self.compare_taus))
        object.__setattr__(self, "windows", tuple(float(w) for w in self.windows))

    def solver(self, **overrides):
        base = SolverConfig(epsilon=1.0, tau_end=self.tau_end, dt=self.dt,
                            samples=self.samples, theta_osc=self.theta_osc)
        return replace_config(base, **overrides) if overrides else base

    def to_document(self):
        return {name: getattr(self, name) for name in _CONFIG_FIELDS}

    @staticmethod
    def from_document(doc):
        unknown = sorted(set(doc) - set(_CONFIG_FIELDS))
        if unknown:
            raise ConfigError(f"unknown study config keys: {', '.join(unknown)}")
        if "study" not in doc:
            raise ConfigError("study config needs a 'study' key")
        return StudyConfig(**{k: (tuple(v) if isinstance(v, list) else v)
                              for k, v in doc.items()})


@dataclass
class StudyReport:
    """Tables plus verdicts plus provenance; JSON and CSV friendly throughout."""

    study: str
    config: dict
    tables: dict
    verdicts: dict
    provenance: dict

    def passed(self):
        return all(v for v in self.verdicts.values() if isinstance(v, bool))

    def to_document(self):
        return {"schema": REPORT_SCHEMA, "study": self.study, "config": self.config,
                "tables": self.tables, "verdicts": self.verdicts,
                "provenance": self.provenance}

    @staticmethod
    def from_document(doc):
        if doc.get("schema") != REPORT_SCHEMA:
            raise ConfigError(f"not a study report: schema {doc.get('schema')!r}")
        return StudyReport(doc["study"], doc["config"], doc["tables"],
                           doc["verdicts"], doc["provenance"])


def _table(columns, rows):
    return {"columns": list(columns), "rows": [list(r) for r in rows]}


def _provenance(frame, cfg, runs, extra=None):
    prov = {
        "frame_sha256": frame.content_hash(),
        "config_sha256": content_hash(cfg.to_document()),
        "runs": dict(sorted(runs.items())),
    }
    if extra:
        prov.update(extra)
    return prov


def _initial_states(frame, cfg):
    """Initial data are physics, the seed is measurement: an explicit
    initial_seed keeps the sampled ball fixed while Monte Carlo seeds vary."""
    rng = np.random.default_rng(cfg.seed if cfg.initial_seed is None
                                else cfg.initial_seed)
    return [sample_ball(frame, cfg.s_star, cfg.radius, rng) for _ in range(cfg.initials)]


def _compare_indices(taus, cfg):
    """Sample-grid indices entering moment comparisons."""
    if cfg.compare_taus:
        idx = []
        for t in cfg.compare_taus:
            i = int(np.argmin(np.abs(taus - t)))
            if abs(taus[i] - t) > 1e-9 * max(1.0, abs(t)):
                raise ConfigError(f"compare tau {t} is not on the sample grid")
            idx.append(i)
        return idx
    return list(range(1, len(taus)))


# -- deterministic action convergence ---------------------------------------

def study_deterministic_convergence(frame, spec, table, cfg):
    """delta(eps) = max over sampled tau of the weighted action distance
    between the full oscillatory run and the effective flow, for a batch of
    initial data on a fixed smooth ball.

    Verdicts: delta strictly decreasing along the ladder and the last ladder
    point below half of the first, for every initial datum; plus a route
    swap check showing delta does not depend on whether the effective drift
    comes from resonance enumeration or from quadrature averaging.
    """
    initials = _initial_states(frame, cfg)
    base = cfg.solver(scheme="lawson4")
    runs = {}
    deltas = np.empty((len(initials), len(cfg.epsilons)))
    eff0_actions = None
    for j, v0 in enumerate(initials):
        eff = integrate_effective(v0, spec, frame, base, table=table)
        runs[f"effective_init{j}"] = trajectory_hash(eff, base)
        if j == 0:
            eff0_actions = eff.actions()
        for i, eps in enumerate(cfg.epsilons):
            full_cfg = replace_config(base, epsilon=eps)
            full = integrate_full(v0, spec, frame, full_cfg)
            runs[f"full_eps{eps:g}_init{j}"] = trajectory_hash(full, full_cfg)
            gap = action_distance(full.actions(), eff.actions(), cfg.s1,
                                  frame.eigenvalues)
            deltas[j, i] = float(np.max(gap))

    # Route swap: rerunning the effective flow with the quadrature drift must
    # reproduce delta up to the measured drift residual scaled by the horizon.
    window = table.suggested_window(5.0)
    drift = QuadratureDrift(frame, spec, window)
    swapped = integrate_effective(initials[0], spec, frame, base, table=table,
                                  drift=drift)
    runs["effective_route_swap"] = trajectory_hash(swapped, base)
    residual = drift_route_residual(initials[0], table, spec, frame, window,
                                    s=cfg.s1)["residual"]
    route_gap = float(np.max(action_distance(
        swapped.actions(), eff0_actions, cfg.s1, frame.eigenvalues)))
    route_tol = max(1e-9, 100.0 * cfg.tau_end * residual)

    rows = [[float(eps), j, deltas[j, i]]
            for i, eps in enumerate(cfg.epsilons) for j in range(len(initials))]
    spread = [[float(eps), float(deltas[:, i].max() / max(deltas[:, i].min(), 1e-300))]
              for i, eps in enumerate(cfg.epsilons)]
    verdicts = {
        "monotone": bool(np.all(deltas[:, 1:] < deltas[:, :-1])),
        "halved": bool(np.all(deltas[:, -1] < 0.5 * deltas[:, 0])),
        "route_independent": bool(route_gap <= route_tol),
    }
    tables = {
        "deviation": _table(("epsilon", "initial", "delta"), rows),
        "spread": _table(("epsilon", "max_over_min"), spread),
        "route_swap": _table(("route_gap", "drift_residual", "tolerance"),
                             [[route_gap, residual, route_tol]]),
    }
    return StudyReport("converge", cfg.to_document(), tables, verdicts,
                       _provenance(frame, cfg, runs))


# -- averaging-operator convergence -----------------------------------------

def _operator_battery(frame, tracked):
    """Observables with known infinite-window limits, plus per-term data for
    the closed-form oscillatory bound."""
    lam = frame.eigenvalues
    battery = []
    # linear coordinates against a target with a different frequency
    target = 0
    for i in range(1, min(tracked + 1, frame.modes)):
        if abs(lam[i] - lam[target]) > 1e-9:
            battery.append((f"linear_v{i}", monomial_observable(1.0, v=(i,)), target))
    # the target's own coordinate: resonant, zero error at every window
    battery.append(("linear_self", monomial_observable(1.0, v=(target,)), target))
    # a resonant cubic monomial (frequency sum zero against the target)
    pair = [k for k in range(1, frame.modes) if abs(lam[k] - lam[target]) > 1e-9]
    if pair:
        k = pair[0]
        battery.append(("cubic_resonant", monomial_observable(1.0, v=(k, target), vbar=(k,)),
                        target))
    # a plainly nonresonant monomial (bracket average, no target shift)
    if frame.modes > 3 and abs(lam[1] - lam[3]) > 1e-9:
        battery.append(("quadratic_nonresonant", monomial_observable(1.0, v=(1,), vbar=(3,)),
                        None))
    return battery


def _term_value(term, state):
    coeff, vpow, cpow = term
    v = mode_vector(state)
    acc = coeff
    for k, p in vpow:
        acc = acc * v[k] ** p
    for k, p in cpow:
        acc = acc * np.conj(v[k]) ** p
    return acc


def _oscillatory_bound(observable, frequencies, state, window, target):
    """Exact closed-form bound: each nonresonant term contributes at most
    2 |term(v)| / (window * |frequency gap|)."""
    freqs = np.asarray(frequencies, dtype=float)
    shift = freqs[int(target)] if target is not None else 0.0
    scale = max(1.0, float(np.max(np.abs(freqs))))
    bound = 0.0
    for term in observable.terms:
        gap = shift - observable.rotation_frequency(term, freqs)
        if abs(gap) <= 1e-8 * scale:
            continue
        bound += 2.0 * abs(_term_value(term, state)) / (window * abs(gap))
    return bound


def study_operator_convergence(frame, cfg):
    """Finite-window scalar averages against their resonant limits on a grid
    of windows, maximized over a sample of states in a smooth ball.

    The error of every polynomial observable obeys the exact closed-form
    bound sum 2|term|/(T |gap|), so the verdicts check that bound (plus the
    quadrature margin) on the whole grid, that resonant observables are flat
    at quadrature accuracy, and that the worst error decays from the first
    window to the last.
    """
    lam = frame.eigenvalues
    gaps = np.abs(np.subtract.outer(lam, lam))
    min_gap = float(np.min(gaps[gaps > 1e-9])) if np.any(gaps > 1e-9) else 1.0
    windows = cfg.windows or tuple(5.3 * 2.0 * math.pi / min_gap * 2.0 ** j
                                   for j in range(4))
    states = _initial_states(frame, cfg)
    battery = _operator_battery(frame, cfg.tracked_modes)
    runs = {"states": content_hash([[v.real.tolist(), v.imag.tolist()]
                                    for v in states])}

    rows = []
    worst = np.zeros(len(windows))
    bound_ok, resonant_ok = True, True
    for name, obs, target in battery:
        limit = scalar_average_limit(obs, lam, target=target)
        resonant = len(limit.terms) == len(obs.terms)
        for wi, window in enumerate(windows):
            n_quad = default_quadrature_nodes(frame, window)
            err = bound = 0.0
            for v in states:
                avg = scalar_average(obs, lam, v, window, n_quad, target=target)
                err = max(err, abs(avg - limit(v)))
                bound = max(bound, _oscillatory_bound(obs, lam, v, window, target))
            rows.append([name, float(window), err, bound])
            if err > bound + cfg.quadrature_margin:
                bound_ok = False
            if resonant and err > cfg.quadrature_margin:
                resonant_ok = False
            if not resonant:
                worst[wi] = max(worst[wi], err)

    verdicts = {
        "closed_form_bound": bool(bound_ok),
        "resonant_flat": bool(resonant_ok),
        "error_decays": bool(worst[-1] < worst[0]),
    }
    tables = {
        "operator_error": _table(("observable", "window", "max_error", "bound"), rows),
        "worst_case": _table(("window", "max_nonresonant_error"),
                             [[float(w), float(e)] for w, e in zip(windows, worst)]),
    }
    return StudyReport("operator", cfg.to_document(), tables, verdicts,
                       _provenance(frame, cfg, runs))


# -- stochastic action moments ----------------------------------------------

def study_stochastic_actions(frame, spec, table, noise, diffusion, cfg):
    """Full-system ensembles along the epsilon ladder against one effective
    ensemble, under common random numbers; compares action means and
    variances at the comparison times.

    Verdicts: at the smallest epsilon the mean-action discrepancy sits inside
    combined three-sigma Monte Carlo bands for every tracked mode, and for at
    least three quarters of the tracked modes the discrepancy (averaged over
    the comparison times) shrinks from the largest epsilon to the smallest.
    """
    v0 = _initial_states(frame, cfg)[0]
    base = cfg.solver(scheme="expeuler")
    tracked = min(cfg.tracked_modes, frame.modes)
    runs = {}

    eff = ensemble_effective(v0, spec, frame, base, table, diffusion,
                             cfg.members, cfg.seed)
    runs["effective"] = ensemble_hash(eff)
    idx = _compare_indices(eff.taus, cfg)

    rows, var_rows = [], []
    diff_by_eps = {}
    for eps in cfg.epsilons:
        res = ensemble_full(v0, spec, frame, replace_config(base, epsilon=eps),
                            noise, cfg.members, cfg.seed)
        runs[f"full_eps{eps:g}"] = ensemble_hash(res)
        diffs = np.abs(res.mean_actions[:, :tracked] - eff.mean_actions[:, :tracked])
        bands = 3.0 * np.sqrt(res.stderr_actions[:, :tracked] ** 2
                              + eff.stderr_actions[:, :tracked] ** 2)
        diff_by_eps[eps] = (diffs[idx], bands[idx])
        for i in idx:
            for k in range(tracked):
                rows.append([float(eps), float(eff.taus[i]), k,
                             float(res.mean_actions[i, k]), float(eff.mean_actions[i, k]),
                             float(diffs[i, k]), float(bands[i, k])])
                var_rows.append([float(eps), float(eff.taus[i]), k,
                                 float(res.var_actions[i, k]), float(eff.var_actions[i, k])])

    smallest, largest = cfg.epsilons[-1], cfg.epsilons[0]
    d_small, b_small = diff_by_eps[smallest]
    within = bool(np.all(d_small <= b_small))
    improved = tracked
    if len(cfg.epsilons) > 1:
        d_large = diff_by_eps[largest][0]
        improved = int(sum(d_small[:, k].mean() < d_large[:, k].mean()
                           for k in range(tracked)))
    verdicts = {
        "bands": within,
        "trend": bool(improved >= math.ceil(0.75 * tracked)),
    }
    tables = {
        "mean_actions": _table(("epsilon", "tau", "k", "mean_full", "mean_eff",
                                "abs_diff", "band_3sigma"), rows),
        "var_actions": _table(("epsilon", "tau", "k", "var_full", "var_eff"), var_rows),
        "trend": _table(("mode", "diff_large_eps", "diff_small_eps", "improved"),
                        [[k, float(diff_by_eps[largest][0][:, k].mean()),
                          float(d_small[:, k].mean()),
                          bool(d_small[:, k].mean() < diff_by_eps[largest][0][:, k].mean())]
                         for k in range(tracked)]),
    }
    extra = {"noise_convention": NOISE_CONVENTION, "members": cfg.members,
             "seed_base": cfg.seed}
    return StudyReport("stochastic", cfg.to_document(), tables, verdicts,
                       _provenance(frame, cfg, runs, extra))


# -- stationary estimates ----------------------------------------------------

def _stationary_battery(frame, tracked):
    """Actions, squared actions, resonant quartic monomials (zero frequency
    sum), split into real series; plus the index pair for the nonresonant
    invariance proxy."""
    lam = frame.eigenvalues
    battery = [(f"I_{k}", action_observable(k), "re") for k in range(tracked)]
    for k in range(tracked):
        battery.append((f"I_{k}_sq", Observable(((0.25, ((k, 2),), ((k, 2),)),)), "re"))
    if frame.modes > 2:
        battery.append(("quartic_resonant",
                        monomial_observable(1.0, v=(1, 2), vbar=(1, 2)), "re"))
    if frame.modes > 4 and abs(lam[1] - lam[2]) < 1e-9 and abs(lam[3] - lam[4]) < 1e-9:
        # cross quartic v1 conj(v2) v3 conj(v4): resonant but genuinely complex
        cross = monomial_observable(1.0, v=(1, 3), vbar=(2, 4))
        battery.append(("quartic_cross_re", cross, "re"))
        battery.append(("quartic_cross_im", cross, "im"))
    nonresonant = [(a, b) for a in range(frame.modes) for b in range(frame.modes)
                   if a < b and abs(lam[a] - lam[b]) > 1e-9]
    return battery, nonresonant


def _batch_means(values, taus, burn_in, batches, batch_length):
    """Batch means of a sampled scalar (possibly complex) after burn-in."""
    keep = taus > burn_in + 1e-9
    vals, ts = np.asarray(values)[keep], taus[keep]
    edges = burn_in + batch_length * np.arange(1, batches)
    groups = np.split(vals, np.searchsorted(ts, edges, side="left"))
    if any(len(g) == 0 for g in groups):
        raise ConfigError("stationary sampling too sparse for the batch layout")
    means = np.array([g.mean(axis=0) for g in groups])
    overall = means.mean(axis=0)
    if np.iscomplexobj(means):
        se = np.sqrt(means.real.var(ddof=1) + means.imag.var(ddof=1)) / math.sqrt(batches)
    else:
        se = means.std(ddof=1) / math.sqrt(batches)
    return overall, float(se), means


def _halves_consistent(means):
    """Batch-mean drift test: first and second half agree within 4 sigma.

    The threshold is looser than the usual 3 because the test runs once per
    battery observable per trajectory; 4 sigma keeps the family-wise false
    alarm rate of the stationarity flag around 1e-3.
    """
    half = len(means) // 2
    a, b = means[:half], means[half:]
    gap = abs(a.mean() - b.mean())
    if np.iscomplexobj(means):
        se = math.sqrt((a.real.var(ddof=1) + a.imag.var(ddof=1)) / len(a)
                       + (b.real.var(ddof=1) + b.imag.var(ddof=1)) / len(b))
    else:
        se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    return bool(gap <= 4.0 * se + 1e-300)


def study_stationary_measure(frame, spec, table, noise, diffusion, cfg):
    """Long-trajectory time averages after burn-in, batch means for errors:
    full dynamics per ladder point against the effective flow.

    Verdicts: tracked stationary action estimates at the smallest epsilon
    agree with the effective ones within three combined batch stderr, the
    nonresonant monomial under the effective state is statistically zero
    (rotation-invariance proxy), and the batch-mean drift test detects no
    nonstationarity.  The verdict is labeled conditional: uniqueness and
    mixing of the limit state are hypotheses the run cannot verify.
    """
    v0 = _initial_states(frame, cfg)[0]
    tau_end = cfg.burn_in + cfg.batches * cfg.batch_length
    samples = max(cfg.samples, 16 * cfg.batches + 1)
    base = cfg.solver(scheme="expeuler", tau_end=tau_end, samples=samples)
    tracked = min(cfg.tracked_modes, frame.modes)
    battery, nonresonant_pairs = _stationary_battery(frame, tracked)
    runs = {}

    eff_cfg = replace_config(base, dt=min(5e-3, base.dt * 2))
    eff = integrate_effective_stochastic(v0, spec, frame, eff_cfg, table,
                                         diffusion, seed=cfg.seed + len(cfg.epsilons))
    runs["effective"] = trajectory_hash(eff, eff_cfg)

    def estimates(traj):
        out, stationary = {}, True
        for name, obs, kind in battery:
            series = obs(traj.states)
            series = series.real if kind == "re" else series.imag
            mean, se, means = _batch_means(series, traj.taus, cfg.burn_in,
                                           cfg.batches, cfg.batch_length)
            stationary = stationary and _halves_consistent(means)
            out[name] = (float(mean), se)
        return out, stationary

    eff_est, eff_stationary = estimates(eff)

    rows, agree_rows = [], []
    stationary_ok = eff_stationary
    discrepancy = {}
    for i, eps in enumerate(cfg.epsilons):
        full_cfg = replace_config(base, epsilon=eps)
        full = integrate_full_stochastic(v0, spec, frame, full_cfg, noise,
                                         seed=cfg.seed + i)
        runs[f"full_eps{eps:g}"] = trajectory_hash(full, full_cfg)
        est, ok = estimates(full)
        stationary_ok = stationary_ok and ok
        total, within_all = 0.0, True
        for name, obs, kind in battery:
            fm, fs = est[name]
            em, es = eff_est[name]
            gap = abs(fm - em)
            band = 3.0 * math.sqrt(fs ** 2 + es ** 2)
            rows.append([float(eps), name, fm, fs, em, es, float(gap), band])
            if name.startswith("I_") and not name.endswith("_sq"):
                total += gap
                within_all = within_all and gap <= band
        discrepancy[eps] = within_all
        agree_rows.append([float(eps), total])

    # rotation-invariance proxy under the effective stationary state
    a, b = nonresonant_pairs[0] if nonresonant_pairs else (0, min(1, frame.modes - 1))
    mono = monomial_observable(1.0, v=(a,), vbar=(b,))
    mmean, mse, mmeans = _batch_means(mono(eff.states), eff.taus, cfg.burn_in,
                                      cfg.batches, cfg.batch_length)
    nonresonant_ok = bool(abs(mmean) <= 3.0 * mse)

    verdicts = {
        "actions_match": bool(discrepancy[cfg.epsilons[-1]]),
        "nonresonant_vanishes": nonresonant_ok,
        "stationary_batches": bool(stationary_ok),
        "label": "conditional",
    }
    tables = {
        "stationary_estimates": _table(
            ("epsilon", "observable", "mean_full", "stderr_full", "mean_eff",
             "stderr_eff", "abs_diff", "band_3sigma"), rows),
        "agreement": _table(("epsilon", "total_action_discrepancy"), agree_rows),
        "invariance_proxy": _table(
            ("monomial", "abs_mean", "stderr", "within_3sigma"),
            [[f"v{a}_vbar{b}", float(abs(mmean)), mse, nonresonant_ok]]),
    }
    extra = {"noise_convention": NOISE_CONVENTION,
             "burn_in": cfg.burn_in, "batches": cfg.batches,
             "conditional_on": ["uniqueness of the limit stationary state",
                                "mixing of the effective dynamics"]}
    return StudyReport("stationary", cfg.to_document(), tables, verdicts,
                       _provenance(frame, cfg, runs, extra))


# -- disparity decay ---------------------------------------------------------

def study_disparity_decay(frame, spec, table, cfg, noise=None):
    """Accumulated gap between the oscillating drift and its resonant average,
    tracked as a running integral per mode, along the epsilon ladder.

    Deterministic verdict: per-mode maxima decrease monotonically along the
    ladder and the smallest epsilon beats the largest by at least a factor
    two.  Stochastic verdict (when noise is given): the ensemble-mean
    disparity decreases the same way.  A step-halving check at one ladder
    point confirms the quantity is an observable of the dynamics rather
    than of the integrator.
    """
    v0 = _initial_states(frame, cfg)[0]
    det_base = cfg.solver(scheme="lawson4")
    sto_base = cfg.solver(scheme="expeuler")
    tracked = min(cfg.tracked_modes, frame.modes)
    runs = {}

    det = np.empty((len(cfg.epsilons), tracked))
    sto = np.empty_like(det) if noise is not None and not noise.is_zero else None
    for i, eps in enumerate(cfg.epsilons):
        det_cfg = replace_config(det_base, epsilon=eps)
        traj = integrate_full(v0, spec, frame, det_cfg, table=table,
                              track_disparity=True)
        runs[f"det_eps{eps:g}"] = trajectory_hash(traj, det_cfg)
        det[i] = traj.disparity_max[:tracked]
        if sto is not None:
            res = ensemble_full(v0, spec, frame, replace_config(sto_base, epsilon=eps),
                                noise, cfg.members, cfg.seed + 1, table=table,
                                track_disparity=True)
            runs[f"ens_eps{eps:g}"] = ensemble_hash(res)
            sto[i] = res.disparity_mean[:tracked]

    # integrator independence: halving the step should not move the number;
    # theta_osc halves too so the refinement bites even when the oscillation
    # bound, not dt, sets the step
    mid = len(cfg.epsilons) // 2
    half_cfg = replace_config(det_base, epsilon=cfg.epsilons[mid],
                              dt=cfg.dt / 2, theta_osc=cfg.theta_osc / 2)
    half = integrate_full(v0, spec, frame, half_cfg, table=table,
                          track_disparity=True)
    runs[f"det_eps{cfg.epsilons[mid]:g}_halfstep"] = trajectory_hash(half, half_cfg)
    ref = det[mid]
    shift = float(np.max(np.abs(half.disparity_max[:tracked] - ref)
                         / np.maximum(ref, 1e-300)))

    rows = [[float(eps), k, float(det[i, k])] +
            ([float(sto[i, k])] if sto is not None else [])
            for i, eps in enumerate(cfg.epsilons) for k in range(tracked)]
    columns = ("epsilon", "k", "disparity_max") + \
              (("ensemble_mean",) if sto is not None else ())
    verdicts = {
        "monotone": bool(np.all(det[1:] < det[:-1])),
        "factor_two": bool(np.all(det[-1] <= 0.5 * det[0])),
        "step_stable": bool(shift <= 0.05),
    }
    if sto is not None:
        verdicts["ensemble_monotone"] = bool(np.all(sto[1:] < sto[:-1]))
    tables = {
        "disparity": _table(columns, rows),
        "step_check": _table(("epsilon", "dt", "relative_shift"),
                             [[float(cfg.epsilons[mid]), cfg.dt / 2, shift]]),
    }
    extra = {"members": cfg.members if sto is not None else 0}
    return StudyReport("disparity", cfg.to_document(), tables, verdicts,
                       _provenance(frame, cfg, runs, extra))


def run_study(cfg, frame, spec=None, table=None, noise=None, diffusion=None):
    """Dispatch on the study id, checking that the needed pieces are present."""
    def need(**pieces):
        missing = [k for k, v in pieces.items() if v is None]
        if missing:
            raise ConfigError(f"study {cfg.study!r} needs {', '.join(missing)}")

    if cfg.study == "converge":
        need(spec=spec, table=table)
        return study_deterministic_convergence(frame, spec, table, cfg)
    if cfg.study == "operator":
        return study_operator_convergence(frame, cfg)
    if cfg.study == "stochastic":
        need(spec=spec, table=table, noise=noise, diffusion=diffusion)
        return study_stochastic_actions(frame, spec, table, noise, diffusion, cfg)
    if cfg.study == "stationary":
        need(spec=spec, table=table, noise=noise, diffusion=diffusion)
        return study_stationary_measure(frame, spec, table, noise, diffusion, cfg)
    need(spec=spec, table=table)
    return study_disparity_decay(frame, spec, table, cfg, noise=noise)
