"""Command line frontend: one JSON config in, data files plus a manifest out.

Heavy imports happen only after --threads has been turned into BLAS
environment variables, so thread pinning actually takes effect.  Exit codes:
0 success (and all study verdicts passing), 1 usage or config errors,
2 numeric failure (trajectory left the blow-up bound), 3 study ran fine but
its criteria failed.
"""

import argparse
import os
import sys

from . import __version__

_THREAD_VARS = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")

_CONFIG_DOC = """\
config file keys (JSON, one object; unknown keys anywhere are errors):

  geometry      lengths: [L, ...] torus side lengths; grid_points: N per side
  potential     cosines: [{m: [index...], amplitude: a}, ...]; omit for V = 0
  modes         number of retained eigenmodes (basis subcommand)
  frame         either {file: PATH, sha256: HASH} referencing a basis export,
                or inline {geometry: ..., potential: ..., modes: ...}
  resonance     patterns: [[1,-1,1], ...] monomial conjugation signatures;
                eta: resonance tolerance; mode: exact | float | auto
  table         {file: PATH, sha256: HASH} referencing a resonances export
  nonlinearity  kind: cubic_focusing | smoothed_monomial | diagonal |
                polynomial, plus mu and the kind's coefficients
  solver        epsilon, tau_end, dt, scheme: lawson4 | expeuler, samples,
                theta_osc, blow_up_factor, blow_up_norm
  initial       {radius: r, s: exponent, seed: n} for a random smooth state,
                or {re: [...], im: [...]} for an explicit one
  noise         {amplitudes: [...]}, or {scale: a, decay: p} for
                a*(1+lambda)^-p, or {eigenvalue_power: p} for lambda^-p
  seed          base RNG seed for stochastic runs (--seed overrides)
  study         study: converge | operator | stochastic | stationary |
                disparity, plus the study knobs (epsilons, s1, s_star,
                tau_end, dt, samples, theta_osc, initials, radius, members,
                seed, initial_seed, tracked_modes, compare_taus, burn_in,
                batches, batch_length, windows, quadrature_margin)
"""

_SECTION_KEYS = {
    "geometry": {"lengths", "grid_points"},
    "potential": {"cosines"},
    "frame_ref": {"file", "sha256"},
    "frame_inline": {"geometry", "potential", "modes"},
    "resonance": {"patterns", "eta", "mode"},
    "table_ref": {"file", "sha256"},
    "solver": {"epsilon", "tau_end", "dt", "scheme", "samples", "theta_osc",
               "blow_up_factor", "blow_up_norm"},
    "initial": {"radius", "s", "seed", "re", "im"},
    "noise": {"amplitudes", "scale", "decay", "eigenvalue_power"},
}

_COMMAND_KEYS = {
    "basis": {"geometry", "potential", "modes"},
    "resonances": {"frame", "resonance"},
    "simulate": {"frame", "nonlinearity", "solver", "initial", "noise", "seed"},
    "effective": {"frame", "table", "nonlinearity", "solver", "initial",
                  "noise", "seed"},
    "study": {"frame", "table", "nonlinearity", "noise", "study"},
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="resonlab",
        description="Resonant averaging laboratory: spectral frames, resonance "
                    "tables, oscillatory and effective runs, and verdict-bearing "
                    "studies.",
        epilog=_CONFIG_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's RNG base seed")
        p.add_argument("--threads", type=int, default=None,
                       help="BLAS worker threads (default: library default, "
                            "usually all cores)")
        p.add_argument("--verbose", action="store_true")

    common(sub.add_parser("basis", help="build and export a spectral frame"))
    common(sub.add_parser("resonances", help="enumerate and export a resonance table"))
    common(sub.add_parser("simulate", help="integrate the oscillatory system"))
    common(sub.add_parser("effective", help="integrate the averaged system"))
    study = sub.add_parser("study", help="run a verdict-bearing study")
    study.add_argument("kind", choices=("converge", "operator", "stochastic",
                                        "stationary", "disparity"))
    common(study)
    return parser


def _fail(message):
    print(f"resonlab: error: {message}", file=sys.stderr)


def _check_keys(name, doc, allowed, required=()):
    from .errors import ConfigError
    if not isinstance(doc, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    missing = sorted(set(required) - set(doc))
    if missing:
        raise ConfigError(f"{name} is missing required key(s): {', '.join(missing)}")


def _build_geometry(section):
    from .spectral import TorusGeometry
    _check_keys("geometry", section, _SECTION_KEYS["geometry"],
                required=("lengths", "grid_points"))
    return TorusGeometry(tuple(float(x) for x in section["lengths"]),
                         int(section["grid_points"]))


def _build_potential(section, dimension):
    from .spectral import Potential
    if section is None:
        return Potential.zero()
    _check_keys("potential", section, _SECTION_KEYS["potential"])
    terms = {}
    for entry in section.get("cosines", ()):
        _check_keys("potential.cosines entry", entry, {"m", "amplitude"},
                    required=("m", "amplitude"))
        terms[tuple(int(x) for x in entry["m"])] = float(entry["amplitude"])
    return Potential.from_cosines(terms, dimension=dimension)


def _load_frame(section, base_dir):
    from .errors import ConfigError
    from .io import check_frame_reference, read_json
    from .spectral import SpectralFrame, build_frame
    if section is None:
        raise ConfigError("config needs a 'frame' section")
    if "file" in section:
        _check_keys("frame", section, _SECTION_KEYS["frame_ref"],
                    required=("file", "sha256"))
        path = os.path.join(base_dir, section["file"])
        if not os.path.exists(path):
            raise ConfigError(f"frame file {path} not found; "
                              f"run `resonlab basis` to create it")
        frame = SpectralFrame.from_document(read_json(path))
        check_frame_reference(frame, section["sha256"], what="frame")
        return frame
    _check_keys("frame", section, _SECTION_KEYS["frame_inline"],
                required=("geometry", "modes"))
    geometry = _build_geometry(section["geometry"])
    potential = _build_potential(section.get("potential"), geometry.dimension)
    return build_frame(geometry, potential, int(section["modes"]))


def _load_table(section, frame, base_dir):
    from .errors import ConfigError, StaleArtifactError
    from .io import check_frame_reference, read_json
    from .resonance import ResonanceTable
    if section is None:
        return None
    _check_keys("table", section, _SECTION_KEYS["table_ref"],
                required=("file", "sha256"))
    path = os.path.join(base_dir, section["file"])
    if not os.path.exists(path):
        raise ConfigError(f"table file {path} not found; "
                          f"run `resonlab resonances` to create it")
    table = ResonanceTable.from_document(read_json(path))
    check_frame_reference(table, section["sha256"], what="table")
    if table.frame_hash is not None and table.frame_hash != frame.content_hash():
        raise StaleArtifactError(
            "resonance table was built for a different frame; rebuild it")
    return table


def _build_solver(section):
    from .errors import ConfigError
    from .integrators import SolverConfig
    if section is None:
        raise ConfigError("config needs a 'solver' section")
    _check_keys("solver", section, _SECTION_KEYS["solver"],
                required=("epsilon", "tau_end"))
    return SolverConfig(**{k: v for k, v in section.items()})


def _build_initial(section, frame):
    import numpy as np
    from .errors import ConfigError
    from .spectral import sample_ball
    if section is None:
        raise ConfigError("config needs an 'initial' section")
    _check_keys("initial", section, _SECTION_KEYS["initial"])
    if "re" in section or "im" in section:
        _check_keys("initial", section, {"re", "im"}, required=("re", "im"))
        v = np.array(section["re"], dtype=float) + 1j * np.array(section["im"], dtype=float)
        if v.shape != (frame.modes,):
            raise ConfigError(f"initial state has {v.shape[0]} entries, "
                              f"frame has {frame.modes} modes")
        return v
    _check_keys("initial", section, {"radius", "s", "seed"},
                required=("radius", "s", "seed"))
    return sample_ball(frame, float(section["s"]), float(section["radius"]),
                       np.random.default_rng(int(section["seed"])))


def _build_noise(section, frame):
    import numpy as np
    from .errors import ConfigError
    from .integrators import NoiseModel
    if section is None:
        return None
    _check_keys("noise", section, _SECTION_KEYS["noise"])
    forms = [k for k in ("amplitudes", "scale", "eigenvalue_power") if k in section]
    if len(forms) != 1:
        raise ConfigError("noise section needs exactly one of amplitudes, "
                          "scale(+decay), eigenvalue_power")
    if "amplitudes" in section:
        b = tuple(float(x) for x in section["amplitudes"])
        if len(b) != frame.modes:
            raise ConfigError(f"noise has {len(b)} amplitudes, frame has "
                              f"{frame.modes} modes")
        return NoiseModel(b)
    if "eigenvalue_power" in section:
        return NoiseModel.from_eigenvalue_power(frame.eigenvalues,
                                                float(section["eigenvalue_power"]))
    decay = float(section.get("decay", 0.0))
    b = float(section["scale"]) * (1.0 + frame.eigenvalues) ** -decay
    return NoiseModel(tuple(float(x) for x in b))


def _write_manifest(args, config, outputs):
    import datetime
    from .io import RunManifest, write_manifest
    manifest = RunManifest(
        command=args.command if args.command != "study" else f"study {args.kind}",
        config_path=os.path.abspath(args.config),
        config=config,
        out_dir=os.path.abspath(args.out),
        version=__version__,
        timestamp=datetime.datetime.now(datetime.timezone.utc)
                  .strftime("%Y-%m-%dT%H:%M:%SZ"),
        seed=args.seed,
        outputs=outputs,
    )
    write_manifest(args.out, manifest)


def _spectrum_summary(frame):
    lines = [f"frame sha256 {frame.content_hash()}",
             f"dimension {frame.geometry.dimension}, modes {frame.modes}",
             "eigenvalue  multiplicity"]
    values = []
    for lam in frame.eigenvalues:
        if values and abs(lam - values[-1][0]) <= 1e-9 * max(1.0, abs(lam)):
            values[-1][1] += 1
        else:
            values.append([float(lam), 1])
    lines += [f"{lam:<11.6g} {mult}" for lam, mult in values]
    return "\n".join(lines) + "\n"


def _cmd_basis(args, config, base_dir):
    from .io import file_hash, write_json
    _check_keys("config", config, _COMMAND_KEYS["basis"],
                required=("geometry", "modes"))
    geometry = _build_geometry(config["geometry"])
    potential = _build_potential(config.get("potential"), geometry.dimension)
    from .spectral import build_frame
    frame = build_frame(geometry, potential, int(config["modes"]))
    os.makedirs(args.out, exist_ok=True)
    frame_path = os.path.join(args.out, "frame.json")
    write_json(frame_path, frame.to_document())
    summary_path = os.path.join(args.out, "spectrum.txt")
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_spectrum_summary(frame))
    outputs = {"frame.json": file_hash(frame_path),
               "spectrum.txt": file_hash(summary_path)}
    _write_manifest(args, config, outputs)
    if args.verbose:
        print(f"frame content sha256: {frame.content_hash()}")
    return 0


def _cmd_resonances(args, config, base_dir):
    from .io import file_hash, write_json
    from .resonance import build_resonance_table
    _check_keys("config", config, _COMMAND_KEYS["resonances"],
                required=("frame", "resonance"))
    frame = _load_frame(config["frame"], base_dir)
    section = config["resonance"]
    _check_keys("resonance", section, _SECTION_KEYS["resonance"],
                required=("patterns",))
    kwargs = {"patterns": tuple(tuple(int(s) for s in p)
                                for p in section["patterns"])}
    if "eta" in section:
        kwargs["eta"] = float(section["eta"])
    if "mode" in section:
        kwargs["mode"] = section["mode"]
    table = build_resonance_table(frame, **kwargs)
    os.makedirs(args.out, exist_ok=True)
    table_path = os.path.join(args.out, "table.json")
    write_json(table_path, table.to_document())
    _write_manifest(args, config, {"table.json": file_hash(table_path)})
    if args.verbose:
        print(f"table content sha256: {table.content_hash()}")
    return 0


def _resolve_seed(args, config):
    if args.seed is not None:
        return int(args.seed)
    if config.get("seed") is not None:
        return int(config["seed"])
    return None


def _cmd_trajectory(args, config, base_dir, effective):
    from .errors import ConfigError
    from .integrators import (integrate_effective, integrate_effective_stochastic,
                              integrate_full, integrate_full_stochastic)
    from .io import file_hash, save_trajectory
    from .nonlinearity import NonlinearitySpec
    from .resonance import build_diffusion
    command = "effective" if effective else "simulate"
    _check_keys("config", config, _COMMAND_KEYS[command],
                required=("frame", "nonlinearity", "solver", "initial")
                         + (("table",) if effective else ()))
    frame = _load_frame(config["frame"], base_dir)
    table = _load_table(config.get("table"), frame, base_dir)
    spec = NonlinearitySpec.from_document(config["nonlinearity"])
    solver = _build_solver(config["solver"])
    v0 = _build_initial(config["initial"], frame)
    noise = _build_noise(config.get("noise"), frame)
    seed = _resolve_seed(args, config)

    if noise is not None and not noise.is_zero:
        if seed is None:
            raise ConfigError("stochastic runs need a seed (config key or --seed)")
        if effective:
            diffusion = build_diffusion(frame, noise.array())
            traj = integrate_effective_stochastic(v0, spec, frame, solver,
                                                  table, diffusion, seed)
        else:
            traj = integrate_full_stochastic(v0, spec, frame, solver, noise, seed)
    elif effective:
        traj = integrate_effective(v0, spec, frame, solver, table=table)
    else:
        traj = integrate_full(v0, spec, frame, solver)

    os.makedirs(args.out, exist_ok=True)
    traj_path = os.path.join(args.out, "trajectory.jsonl")
    save_trajectory(traj_path, traj, config=solver)
    _write_manifest(args, config, {"trajectory.jsonl": file_hash(traj_path)})
    if args.verbose:
        print(f"samples: {len(traj.taus)}, final tau {traj.taus[-1]:g}")
    return 0


def _cmd_study(args, config, base_dir):
    from .errors import ConfigError
    from .io import write_report
    from .nonlinearity import NonlinearitySpec
    from .resonance import build_diffusion
    from .studies import StudyConfig, run_study
    _check_keys("config", config, _COMMAND_KEYS["study"],
                required=("frame", "study"))
    section = dict(config["study"])
    section.setdefault("study", args.kind)
    if section["study"] != args.kind:
        raise ConfigError(f"config study {section['study']!r} does not match "
                          f"the requested kind {args.kind!r}")
    cfg = StudyConfig.from_document(section)
    if args.seed is not None:
        cfg = StudyConfig.from_document({**section, "seed": int(args.seed)})
    frame = _load_frame(config["frame"], base_dir)
    table = _load_table(config.get("table"), frame, base_dir)
    spec = (NonlinearitySpec.from_document(config["nonlinearity"])
            if "nonlinearity" in config else None)
    noise = _build_noise(config.get("noise"), frame)
    diffusion = (build_diffusion(frame, noise.array())
                 if noise is not None else None)
    report = run_study(cfg, frame, spec=spec, table=table, noise=noise,
                       diffusion=diffusion)
    outputs = write_report(args.out, report)
    _write_manifest(args, config, outputs)
    if args.verbose or not report.passed():
        for name, value in report.verdicts.items():
            print(f"verdict {name}: {value}")
    return 0 if report.passed() else 3


def _dispatch(args):
    from .errors import ConfigError
    from .io import read_json
    if not os.path.exists(args.config):
        raise ConfigError(f"config file {args.config} not found")
    config = read_json(args.config)
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    base_dir = os.path.dirname(os.path.abspath(args.config))
    if args.command == "basis":
        return _cmd_basis(args, config, base_dir)
    if args.command == "resonances":
        return _cmd_resonances(args, config, base_dir)
    if args.command == "simulate":
        return _cmd_trajectory(args, config, base_dir, effective=False)
    if args.command == "effective":
        return _cmd_trajectory(args, config, base_dir, effective=True)
    return _cmd_study(args, config, base_dir)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if args.threads is not None:
        if args.threads < 1:
            _fail("--threads must be a positive integer")
            return 1
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)

    from .errors import (BlowUpError, ConfigError, EnsembleError,
                         StaleArtifactError, UnsupportedModeError,
                         ValidationError)
    try:
        return _dispatch(args)
    except (ConfigError, StaleArtifactError, UnsupportedModeError,
            ValidationError) as exc:
        _fail(str(exc))
        return 1
    except (BlowUpError, EnsembleError) as exc:
        _fail(str(exc))
        return 2
    except (KeyError, TypeError, ValueError) as exc:
        _fail(f"malformed config: {exc!r}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
