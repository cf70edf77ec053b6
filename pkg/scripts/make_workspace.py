"""Build a ready-to-run CLI workspace.

Creates a spectral frame and resonance table through the command-line
interface, then writes config files for a full run, an effective run, and a
convergence study, all wired together by content hashes.  Prints the commands
to run next.

Usage: python scripts/make_workspace.py [--dir workspace]
"""

import argparse
import json
import math
from pathlib import Path

from resonlab.cli import main as resonlab
from resonlab.io import content_hash, read_json
from resonlab.nonlinearity import NonlinearitySpec

TWO_PI = 2.0 * math.pi


def _write(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _reference(artifact, config_dir):
    rel = Path(artifact).relative_to(config_dir.parent)
    return {"file": str(Path("..") / rel),
            "sha256": content_hash(read_json(artifact))}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dir", default="workspace", help="workspace root")
    parser.add_argument("--modes", type=int, default=9)
    parser.add_argument("--grid", type=int, default=32)
    args = parser.parse_args(argv)

    root = Path(args.dir)
    configs = root / "configs"

    _write(configs / "basis.json",
           {"geometry": {"lengths": [TWO_PI], "grid_points": args.grid},
            "modes": args.modes})
    code = resonlab(["basis", "--config", str(configs / "basis.json"),
                     "--out", str(root / "frame")])
    if code != 0:
        return code
    frame_ref = _reference(root / "frame" / "frame.json", configs)

    _write(configs / "resonances.json",
           {"frame": frame_ref,
            "resonance": {"patterns": [[1, -1, 1]]}})
    code = resonlab(["resonances", "--config", str(configs / "resonances.json"),
                     "--out", str(root / "table")])
    if code != 0:
        return code
    table_ref = _reference(root / "table" / "table.json", configs)

    cubic = NonlinearitySpec("cubic_focusing", mu=0.5).to_document()
    solver = {"epsilon": 0.05, "tau_end": 1.0, "dt": 1e-3, "samples": 21}
    initial = {"radius": 1.0, "s": 2.0, "seed": 42}

    _write(configs / "simulate.json",
           {"frame": frame_ref, "nonlinearity": cubic,
            "solver": solver, "initial": initial})
    _write(configs / "effective.json",
           {"frame": frame_ref, "table": table_ref, "nonlinearity": cubic,
            "solver": {**solver, "epsilon": 1.0}, "initial": initial})
    _write(configs / "study.json",
           {"frame": frame_ref, "table": table_ref, "nonlinearity": cubic,
            "study": {"study": "converge", "seed": 2718}})

    print(f"workspace ready under {root}/; next:")
    for line in (
        f"resonlab simulate --config {configs}/simulate.json "
        f"--out {root}/run_full",
        f"resonlab effective --config {configs}/effective.json "
        f"--out {root}/run_eff",
        f"resonlab study converge --config {configs}/study.json "
        f"--out {root}/study_converge",
    ):
        print("  " + line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
