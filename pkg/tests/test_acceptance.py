"""End-to-end acceptance gate.

Eleven numbered checks, run in order.  Each test prints a single verdict line
(``acceptance NN PASS|FAIL ...``) with its wall time before asserting, so a
log of this module doubles as the acceptance report.  Checks 1-7 write every
artifact through a producer registry; check 11 re-runs the producers into a
second directory and compares all output files byte for byte.

Statistical checks (3, 8, 9, 10) run at pinned seeds; tolerances are fixed,
not tuned per run.
"""

import math
import time
from functools import lru_cache

import numpy as np
import pytest
from numpy.random import default_rng

from resonlab.fields import drift_route_residual, effective_drift_analytic
from resonlab.integrators import (NoiseModel, SolverConfig, ensemble_full,
                                  integrate_effective, integrate_full)
from resonlab.io import save_trajectory, write_json, write_report
from resonlab.nonlinearity import NonlinearitySpec, cubic_damping_terms
from resonlab.resonance import build_diffusion, build_resonance_table
from resonlab.spectral import (Potential, TorusGeometry, build_frame,
                               phase_shift, sample_ball, sobolev_norm)
from resonlab.studies import StudyConfig, run_study

TWO_PI = 2.0 * math.pi

# wall-time budgets in seconds; the reproducibility check has none of its own
_BUDGETS = {1: 1.0, 2: 5.0, 3: 30.0, 4: 5.0, 5: 10.0, 6: 600.0, 7: 1200.0,
            8: 120.0, 9: 1800.0, 10: 1800.0, 11: None}


def _report(num, label, ok, elapsed, detail=""):
    budget = _BUDGETS[num]
    in_budget = budget is None or elapsed < budget
    status = "PASS" if (ok and in_budget) else "FAIL"
    extra = f" ({detail})" if detail else ""
    timing = f" [{elapsed:.2f}s" + (f"/{budget:.0f}s]" if budget else "]")
    print(f"acceptance {num:02d} {status} {label}{extra}{timing}")
    assert ok, f"acceptance {num:02d}: {label}{extra}"
    assert in_budget, \
        f"acceptance {num:02d}: {elapsed:.2f}s over the {budget:.0f}s budget"


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


# -- shared problem setups (cached; tests may run standalone) ---------------

@lru_cache(maxsize=None)
def _frame_1d(modes, grid=32):
    return build_frame(TorusGeometry((TWO_PI,), grid), Potential.zero(), modes)


@lru_cache(maxsize=None)
def _frame_2d(modes):
    return build_frame(TorusGeometry((TWO_PI, TWO_PI), 16), Potential.zero(),
                       modes)


@lru_cache(maxsize=None)
def _cubic_setup():
    frame = _frame_1d(9)
    spec = NonlinearitySpec("cubic_focusing", mu=0.5)
    table = build_resonance_table(frame, patterns=((1, -1, 1),))
    return frame, spec, table


@lru_cache(maxsize=None)
def _damped_setup():
    # cubic with a rotation-heavy coefficient plus weak linear damping; the
    # strong Im part keeps the finite-epsilon bias visible long enough for
    # the moment comparisons to have something to measure
    frame = _frame_1d(8)
    spec = NonlinearitySpec("polynomial", mu=0.3,
                            terms=cubic_damping_terms(-0.3 - 2.5j))
    table = build_resonance_table(frame, patterns=((1,), (1, -1, 1)))
    b = 0.14 * (1.0 + frame.eigenvalues) ** -1.5
    return frame, spec, table, NoiseModel(tuple(b)), build_diffusion(frame, b)


# -- producers: compute + write files, reused by the determinism check ------

def _produce_spectra(out):
    out.mkdir(parents=True, exist_ok=True)
    frames = {"d1": build_frame(TorusGeometry((TWO_PI,), 64),
                                Potential.zero(), 17),
              "d2": _frame_2d(17)}
    for name, frame in frames.items():
        write_json(out / f"frame_{name}.json", frame.to_document())
    return frames


def _produce_tables(out):
    out.mkdir(parents=True, exist_ok=True)
    _, _, table_1d = _cubic_setup()
    table_2d = build_resonance_table(_frame_2d(25), patterns=((1, -1, 1),))
    write_json(out / "table_d1.json", table_1d.to_document())
    write_json(out / "table_d2.json", table_2d.to_document())
    return table_1d, table_2d


def _produce_drift_residuals(out):
    out.mkdir(parents=True, exist_ok=True)
    frame, spec, table = _cubic_setup()
    window = table.suggested_window(50.0)
    rng = default_rng(5)
    states = [sample_ball(frame, 2.0, 2.0, rng) for _ in range(3)]
    resid = [drift_route_residual(v, table, spec, frame, window, s=1.6)
             ["residual"] for v in states]
    # residual decay with the window is oscillatory, so single windows are
    # unreliable; pool over a spread of incommensurate base windows instead
    bases = [(17.3 + 1.37 * j) * TWO_PI for j in range(8)]
    pools = []
    for factor in (1.0, 2.0):
        vals = [drift_route_residual(v, table, spec, frame, factor * b, s=1.6)
                ["residual"] for v in states for b in bases]
        pools.append(float(np.mean(vals)))
    doc = {"window": window, "residuals": resid,
           "pooled_base": pools[0], "pooled_doubled": pools[1],
           "ratio": pools[0] / pools[1]}
    write_json(out / "drift_residuals.json", doc)
    return doc


def _produce_commutation(out):
    out.mkdir(parents=True, exist_ok=True)
    frame, spec, table = _cubic_setup()
    rng = default_rng(11)
    defects = []
    for _ in range(10):
        v = sample_ball(frame, 2.0, 2.0, rng)
        theta = frame.eigenvalues * float(rng.uniform(0.0, 10.0 * TWO_PI))
        lhs = effective_drift_analytic(phase_shift(v, theta), table, spec,
                                       frame)
        rhs = phase_shift(effective_drift_analytic(v, table, spec, frame),
                          theta)
        defects.append(float(sobolev_norm(lhs - rhs, 1.6, frame.eigenvalues)))
    write_json(out / "commutation_defects.json", {"defects": defects})
    return defects


def _produce_diagonal_runs(out):
    out.mkdir(parents=True, exist_ok=True)
    frame = _frame_1d(9)
    gammas = tuple(-0.3 - 0.2j * k for k in range(frame.modes))
    spec = NonlinearitySpec("diagonal", mu=0.5, gammas=gammas)
    table = build_resonance_table(frame, patterns=((1,),))
    v0 = sample_ball(frame, 2.0, 1.0, default_rng(17))
    eff_cfg = SolverConfig(epsilon=1.0, tau_end=1.0, dt=1e-3, samples=21)
    eff = integrate_effective(v0, spec, frame, eff_cfg, table=table)
    save_trajectory(out / "effective.jsonl", eff, eff_cfg)
    gaps = {}
    for eps in (0.1, 0.01):
        cfg = SolverConfig(epsilon=eps, tau_end=1.0, dt=1e-3, samples=21)
        full = integrate_full(v0, spec, frame, cfg)
        save_trajectory(out / f"full_eps{eps:g}.jsonl", full, cfg)
        gaps[f"{eps:g}"] = float(np.max(np.abs(full.actions()
                                               - eff.actions())))
    write_json(out / "action_gaps.json", gaps)
    return gaps


def _produce_converge_report(out):
    out.mkdir(parents=True, exist_ok=True)
    frame, spec, table = _cubic_setup()
    cfg = StudyConfig("converge", seed=2718)
    rep = run_study(cfg, frame, spec=spec, table=table)
    write_report(out, rep)
    return rep


def _produce_disparity_report(out):
    out.mkdir(parents=True, exist_ok=True)
    frame, spec, table = _cubic_setup()
    noise = NoiseModel(tuple(0.1 * (1.0 + frame.eigenvalues) ** -1.5))
    cfg = StudyConfig("disparity", seed=7, members=200)
    rep = run_study(cfg, frame, spec=spec, table=table, noise=noise)
    write_report(out, rep)
    return rep


_PRODUCERS = {
    "crit01": _produce_spectra,
    "crit02": _produce_tables,
    "crit03": _produce_drift_residuals,
    "crit04": _produce_commutation,
    "crit05": _produce_diagonal_runs,
    "crit06": _produce_converge_report,
    "crit07": _produce_disparity_report,
}


# -- the eleven checks ------------------------------------------------------

def test_criterion_01_spectra(outdir):
    t0 = time.perf_counter()
    frames = _produce_spectra(outdir / "first" / "crit01")
    lattice_1d = np.sort(np.array([float(m * m) for m in range(-8, 9)]))
    lattice_2d = np.sort(np.array([float(a * a + b * b)
                                   for a in range(-8, 9)
                                   for b in range(-8, 9)]))[:17]
    dev = max(float(np.max(np.abs(frames["d1"].eigenvalues - lattice_1d))),
              float(np.max(np.abs(frames["d2"].eigenvalues - lattice_2d))))
    _report(1, "eigenvalues match the integer lattice", dev <= 1e-10,
            time.perf_counter() - t0, detail=f"max dev {dev:.1e}")


def _brute_force_tuples(eigenvalues):
    # exhaustive scan of k1 - k2 + k3 frequency sums against every target
    lam = np.rint(eigenvalues).astype(np.int64)
    assert np.max(np.abs(lam - eigenvalues)) == 0.0
    sums = lam[:, None, None] - lam[None, :, None] + lam[None, None, :]
    return {k: set(map(tuple, np.argwhere(sums == lam[k]).tolist()))
            for k in range(len(lam))}


def test_criterion_02_resonance_enumeration(outdir):
    t0 = time.perf_counter()
    table_1d, table_2d = _produce_tables(outdir / "first" / "crit02")
    targets = 0
    ok = True
    for table in (table_1d, table_2d):
        brute = _brute_force_tuples(table.eigenvalues)
        for k, expected in brute.items():
            got = {tuple(int(i) for i in t) for t in table.tuples((1, -1, 1), k)}
            ok = ok and got == expected
            targets += 1
    _report(2, "cubic resonance tuples equal brute force", ok,
            time.perf_counter() - t0, detail=f"{targets} targets")


def test_criterion_03_drift_routes(outdir):
    t0 = time.perf_counter()
    doc = _produce_drift_residuals(outdir / "first" / "crit03")
    ok = max(doc["residuals"]) <= 1e-6 and doc["ratio"] >= 1.8
    _report(3, "analytic drift matches long-window quadrature", ok,
            time.perf_counter() - t0,
            detail=f"resid {max(doc['residuals']):.1e}, "
                   f"doubling ratio {doc['ratio']:.2f}")


def test_criterion_04_commutation(outdir):
    t0 = time.perf_counter()
    defects = _produce_commutation(outdir / "first" / "crit04")
    worst = max(defects)
    _report(4, "effective drift commutes with the linear phase flow",
            worst <= 1e-10, time.perf_counter() - t0,
            detail=f"max defect {worst:.1e}")


def test_criterion_05_diagonal_exactness(outdir):
    t0 = time.perf_counter()
    gaps = _produce_diagonal_runs(outdir / "first" / "crit05")
    worst = max(gaps.values())
    _report(5, "diagonal perturbation: full equals effective",
            worst <= 1e-8, time.perf_counter() - t0,
            detail=f"max action gap {worst:.1e}")


def test_criterion_06_convergence_ladder(outdir):
    t0 = time.perf_counter()
    rep = _produce_converge_report(outdir / "first" / "crit06")
    rows = rep.tables["deviation"]["rows"]
    first = max(r[2] for r in rows if r[0] == rep.config["epsilons"][0])
    last = max(r[2] for r in rows if r[0] == rep.config["epsilons"][-1])
    _report(6, "action deviation halves along the epsilon ladder",
            rep.passed(), time.perf_counter() - t0,
            detail=f"delta {first:.2e} -> {last:.2e}")


def test_criterion_07_disparity_decay(outdir):
    t0 = time.perf_counter()
    rep = _produce_disparity_report(outdir / "first" / "crit07")
    ok = rep.passed() and "ensemble_monotone" in rep.verdicts
    rows = rep.tables["disparity"]["rows"]
    eps = rep.config["epsilons"]
    first = max(r[2] for r in rows if r[0] == eps[0])
    last = max(r[2] for r in rows if r[0] == eps[-1])
    _report(7, "oscillation disparity decays along the ladder", ok,
            time.perf_counter() - t0,
            detail=f"max {first:.2e} -> {last:.2e}")


def test_criterion_08_ou_closed_form():
    t0 = time.perf_counter()
    frame = _frame_1d(9)
    spec = NonlinearitySpec("diagonal", mu=0.5,
                            gammas=(0.0,) * frame.modes)
    noise = NoiseModel.from_eigenvalue_power(frame.eigenvalues, 2.0)
    v0 = sample_ball(frame, 2.0, 1.0, default_rng(13))
    config = SolverConfig(epsilon=1.0, tau_end=1.0, dt=1e-3,
                          scheme="expeuler", samples=11)
    result = ensemble_full(v0, spec, frame, config, noise, 2000, 4242)
    lam = frame.eigenvalues
    b = np.asarray(noise.amplitudes)
    mu = spec.mu
    decay = np.exp(-2.0 * mu * lam * config.tau_end)
    target = np.where(lam > 0,
                      decay * np.abs(v0) ** 2
                      + np.divide(b ** 2, mu * np.maximum(lam, 1e-300))
                      * (1.0 - decay),
                      np.abs(v0) ** 2)
    second = 2.0 * result.mean_actions[-1]
    band = 3.0 * 2.0 * result.stderr_actions[-1]
    gap = np.abs(second - target)
    driven = lam > 0
    ok = (not result.excluded
          and bool(np.all(gap[driven] <= band[driven]))
          and float(np.max(gap[~driven])) <= 1e-12)
    _report(8, "stochastic second moments match the closed form", ok,
            time.perf_counter() - t0,
            detail=f"worst z {float(np.max(gap[driven] / (band[driven] / 3))):.2f}")


def test_criterion_09_moment_tracking():
    t0 = time.perf_counter()
    frame, spec, table, noise, diffusion = _damped_setup()
    cfg = StudyConfig("stochastic", epsilons=(0.1, 0.025), members=500,
                      seed=12345, initial_seed=99, radius=1.5, dt=2e-3,
                      samples=5, compare_taus=(0.25, 0.5, 1.0))
    rep = run_study(cfg, frame, spec=spec, table=table, noise=noise,
                    diffusion=diffusion)
    improved = sum(1 for r in rep.tables["trend"]["rows"] if r[3])
    _report(9, "ensemble actions track the effective flow", rep.passed(),
            time.perf_counter() - t0,
            detail=f"improved {improved}/{cfg.tracked_modes} modes")


def test_criterion_10_stationary_diagnostics():
    t0 = time.perf_counter()
    frame, spec, table, noise, diffusion = _damped_setup()
    cfg = StudyConfig("stationary", epsilons=(0.1, 0.05), seed=90210,
                      radius=1.0, burn_in=6.0, batches=20, batch_length=1.5)
    rep = run_study(cfg, frame, spec=spec, table=table, noise=noise,
                    diffusion=diffusion)
    ok = rep.passed() and rep.verdicts.get("label") == "conditional"
    _report(10, "stationary actions agree, nonresonant average vanishes",
            ok, time.perf_counter() - t0, detail="verdict is conditional")


def test_criterion_11_bitwise_reproducibility(outdir):
    t0 = time.perf_counter()
    mismatched = []
    total = 0
    for name, producer in _PRODUCERS.items():
        first = outdir / "first" / name
        if not first.exists():        # standalone run: make the reference
            producer(first)
        second = outdir / "second" / name
        producer(second)
        rel_a = sorted(p.relative_to(first)
                       for p in first.rglob("*") if p.is_file())
        rel_b = sorted(p.relative_to(second)
                       for p in second.rglob("*") if p.is_file())
        if rel_a != rel_b:
            mismatched.append(f"{name}: file sets differ")
            continue
        for rel in rel_a:
            total += 1
            if (first / rel).read_bytes() != (second / rel).read_bytes():
                mismatched.append(f"{name}/{rel}")
    ok = not mismatched and total > 0
    _report(11, "re-running checks 1-7 reproduces every file bitwise", ok,
            time.perf_counter() - t0,
            detail=f"{total} files" if ok else "; ".join(mismatched))
