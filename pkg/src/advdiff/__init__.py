"""Advective diffusion graph transformers and their evaluation harness.

Subpackages are imported lazily so lightweight consumers (and the CLI,
which configures threading environment variables first) can import
`advdiff` without pulling in the numeric stack.
"""

__version__ = "0.1.0"

# Stamped into every output file (manifests, result JSON, checkpoints).
FORMAT_VERSION = "advdiff-1"

_SUBMODULES = (
    "autodiff",
    "attention",
    "baselines",
    "cli",
    "errors",
    "experiments",
    "graphs",
    "kernels",
    "models",
    "registry",
    "report",
    "rng",
    "stats",
    "suite_io",
    "synth",
    "training",
)

_REEXPORTS = {
    "Tape": "autodiff",
    "Var": "autodiff",
    "Graph": "graphs",
    "NormMode": "graphs",
    "ModelConfig": "models",
    "TaskKind": "models",
    "ShiftKind": "synth",
    "ShiftSuite": "synth",
    "make_suite": "synth",
    "TrainConfig": "training",
    "fit": "training",
    "MODEL_NAMES": "registry",
    "get_family": "registry",
}


def __getattr__(name):
    import importlib

    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _REEXPORTS:
        module = importlib.import_module(f".{_REEXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_SUBMODULES) | set(_REEXPORTS))
