"""Command-line interface: generate, train, sweep, probe.

Exit codes: 0 on success, 1 for configuration/usage errors, 2 for
runtime failures. `ADVDIFF_THREADS` caps the sweep worker pool. BLAS
threading is pinned to one thread per process (workers parallelize
across cells instead); set the *_NUM_THREADS variables beforehand to
override.
"""

import os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError

_SHIFTS = ("homophily", "density", "block", "all")


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage problems; route them through
    # ConfigError so every validation failure uniformly exits 1.
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="advdiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="base random seed")
        p.add_argument("--nodes", type=int, help="nodes per generated graph")
        p.add_argument(
            "--allow-unstable-theta",
            action="store_true",
            help="permit theta <= beta for the solve variant",
        )

    p = sub.add_parser("generate", help="materialize synthetic shift suites")
    common(p)
    p.add_argument("--shift", choices=_SHIFTS, help="shift kind (or all)")

    p = sub.add_parser("train", help="train one model on one suite")
    common(p)
    p.add_argument("--shift", choices=_SHIFTS, help="suite kind when generating on the fly")
    p.add_argument("--suite", help="existing suite directory (overrides --shift)")
    p.add_argument("--models", help="model name")

    p = sub.add_parser("sweep", help="models x shifts x trials generalization sweep")
    common(p)
    p.add_argument("--shift", choices=_SHIFTS, help="shift kind (or all)")
    p.add_argument("--trials", type=int, help="independent trials per (model, shift)")
    p.add_argument("--models", help="comma-separated model names")

    p = sub.add_parser("probe", help="representation sensitivity to edge flips")
    common(p)
    p.add_argument("--shift", choices=_SHIFTS, help="suite kind when generating on the fly")
    p.add_argument("--suite", help="existing suite directory (overrides --shift)")
    p.add_argument("--models", help="comma-separated model names")
    p.add_argument("--checkpoint", help="probe a trained checkpoint instead of random parameters")

    return parser


def _load_config_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path}: expected a JSON object")
    return data


def _kinds_from(value) -> list[str] | None:
    if value is None:
        return None
    if isinstance(value, str):
        if value == "all":
            return ["homophily", "density", "block"]
        return [value]
    return list(value)


def _resolve(args) -> "object":
    from .experiments import DEFAULT_SWEEP_NODES, ExperimentConfig
    from .registry import MODEL_NAMES

    file_cfg = _load_config_file(args.config) if args.config else {}
    unknown = set(file_cfg) - {
        "out_dir",
        "seed",
        "nodes",
        "trials",
        "shift",
        "models",
        "suite_dir",
        "model",
        "train",
        "probe",
    }
    if unknown:
        raise ConfigError(f"config file: unknown keys {sorted(unknown)}")

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return file_cfg.get(key, default)

    models = pick(getattr(args, "models", None), "models", None)
    if isinstance(models, str):
        models = [m.strip() for m in models.split(",") if m.strip()]
    probe_cfg = file_cfg.get("probe", {})
    if not isinstance(probe_cfg, dict):
        raise ConfigError("config file: 'probe' must be an object")
    model_opts = dict(file_cfg.get("model", {}))
    if getattr(args, "allow_unstable_theta", False):
        model_opts["allow_unstable_theta"] = True
    return ExperimentConfig(
        kinds=_kinds_from(pick(getattr(args, "shift", None), "shift", None)) or ["homophily", "density", "block"],
        models=list(models) if models else list(MODEL_NAMES),
        trials=int(pick(getattr(args, "trials", None), "trials", 5)),
        n=int(pick(args.nodes, "nodes", DEFAULT_SWEEP_NODES)),
        seed=int(pick(args.seed, "seed", 0)),
        out_dir=str(pick(args.out, "out_dir", "out")),
        suite_dir=pick(getattr(args, "suite", None), "suite_dir", None),
        model_opts=model_opts,
        train_opts=dict(file_cfg.get("train", {})),
        flip_counts=[int(f) for f in probe_cfg.get("flip_counts", (1, 2, 4, 8, 16, 32, 64, 128, 256))],
        perturb_seeds=int(probe_cfg.get("perturb_seeds", 5)),
        checkpoint=getattr(args, "checkpoint", None) or probe_cfg.get("checkpoint"),
    )


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _resolve(args)
        from . import experiments

        if args.command == "generate":
            paths = experiments.run_generate(cfg)
            for p in paths:
                print(p)
        elif args.command == "train":
            if len(cfg.models) != 1:
                raise ConfigError("train: pass exactly one model via --models")
            print(experiments.run_train(cfg))
        elif args.command == "sweep":
            _, csv_path = experiments.run_sweep(cfg)
            print(csv_path)
        else:
            _, csv_path = experiments.run_probe(cfg)
            print(csv_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
