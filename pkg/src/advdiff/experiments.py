"""Experiment drivers shared by the command-line interface and the tests.

Everything here is deterministic given the resolved configuration: suite
directories are regenerated byte-identically, sweep cells derive their
seeds from (base seed, trial), and result rows are sorted before writing
so worker scheduling cannot affect output files.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .graphs import NormMode, adjacency_gap, perturb_edges, spectral_norm
from .autodiff import Tape
from .models import save_checkpoint
from .registry import KNOWN_MODEL_OPTS, MODEL_NAMES, get_family
from .report import ProbeRow, SweepRow, svg_line_chart, write_probe_csv, write_sweep_csv
from .suite_io import load_suite, suite_dir_name, write_suite
from .synth import ShiftKind, make_suite
from .training import TrainConfig, fit

__all__ = [
    "ExperimentConfig",
    "DEFAULT_SWEEP_NODES",
    "DEFAULT_FLIP_COUNTS",
    "worker_count",
    "ensure_suite",
    "run_generate",
    "run_train",
    "run_sweep",
    "run_probe",
]

# Default node count for shift sweeps (generation elsewhere defaults to 1000).
DEFAULT_SWEEP_NODES = 300

DEFAULT_FLIP_COUNTS = (1, 2, 4, 8, 16, 32, 64, 128, 256)

DEFAULT_PROBE_MODELS = ("diff_linear", "advdifformer_s")

KNOWN_TRAIN_OPTS = {"lr", "epochs", "optimizer", "seed", "early_stop_patience"}


@dataclass
class ExperimentConfig:
    """Resolved settings for one command invocation."""

    kinds: list[str] = field(default_factory=lambda: [k.value for k in ShiftKind])
    models: list[str] = field(default_factory=lambda: list(MODEL_NAMES))
    trials: int = 5
    n: int = DEFAULT_SWEEP_NODES
    seed: int = 0
    out_dir: str = "out"
    suite_dir: str | None = None
    model_opts: dict = field(default_factory=dict)
    train_opts: dict = field(default_factory=dict)
    flip_counts: list[int] = field(default_factory=lambda: list(DEFAULT_FLIP_COUNTS))
    perturb_seeds: int = 5
    checkpoint: str | None = None

    def __post_init__(self):
        self.kinds = [ShiftKind(k).value for k in self.kinds]
        for m in self.models:
            get_family(m)
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if self.n < 3:
            raise ConfigError("n must be at least 3")
        if self.perturb_seeds < 1:
            raise ConfigError("perturb_seeds must be positive")
        unknown = set(self.model_opts) - KNOWN_MODEL_OPTS
        if unknown:
            raise ConfigError(f"unknown model options: {sorted(unknown)}")
        unknown = set(self.train_opts) - KNOWN_TRAIN_OPTS
        if unknown:
            raise ConfigError(f"unknown train options: {sorted(unknown)}")
        for f in self.flip_counts:
            if int(f) < 0:
                raise ConfigError("flip counts must be nonnegative")
        if self.suite_dir is not None and not Path(self.suite_dir, "manifest.json").exists():
            raise ConfigError(f"suite directory {self.suite_dir} has no manifest.json")
        if self.checkpoint is not None and not Path(self.checkpoint).exists():
            raise ConfigError(f"checkpoint {self.checkpoint} does not exist")
        # Fail fast on bad numeric values.
        self.resolved_model_cfgs()
        self.train_config(self.seed)

    def resolved_model_cfgs(self) -> dict:
        return {m: get_family(m).make_config(self.model_opts) for m in self.models}

    def train_config(self, seed: int) -> TrainConfig:
        opts = dict(self.train_opts)
        opts["seed"] = seed
        return TrainConfig(**opts)

    def echo(self) -> dict:
        """JSON-ready copy of every resolved setting."""
        from . import FORMAT_VERSION

        return {
            "format_version": FORMAT_VERSION,
            "kinds": list(self.kinds),
            "models": list(self.models),
            "trials": self.trials,
            "n": self.n,
            "seed": self.seed,
            "out_dir": str(self.out_dir),
            "suite_dir": str(self.suite_dir) if self.suite_dir else None,
            "model_opts": dict(sorted(self.model_opts.items())),
            "train_opts": dict(sorted(self.train_opts.items())),
            "flip_counts": [int(f) for f in self.flip_counts],
            "perturb_seeds": self.perturb_seeds,
            "checkpoint": self.checkpoint,
        }


def worker_count(cells: int) -> int:
    """Pool size: ADVDIFF_THREADS if set, else the CPU count, capped by cells."""
    env = os.environ.get("ADVDIFF_THREADS", "").strip()
    if env:
        try:
            limit = int(env)
        except ValueError as exc:
            raise ConfigError(f"ADVDIFF_THREADS must be an integer, got {env!r}") from exc
        if limit < 1:
            raise ConfigError("ADVDIFF_THREADS must be positive")
    else:
        limit = os.cpu_count() or 1
    return max(1, min(limit, cells))


def ensure_suite(suites_root, kind: str, seed: int, n: int) -> Path:
    """Create (or reuse) the on-disk suite for (kind, seed, n)."""
    root = Path(suites_root)
    target = root / suite_dir_name(kind, seed, n)
    if not (target / "manifest.json").exists():
        write_suite(target, make_suite(ShiftKind(kind), seed, n))
    return target


def run_generate(cfg: ExperimentConfig) -> list[Path]:
    """Materialize one suite per configured shift kind."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [ensure_suite(out, kind, cfg.seed, cfg.n) for kind in cfg.kinds]
    (out / "generate_meta.json").write_text(
        json.dumps({"config": cfg.echo(), "suites": [p.name for p in paths]}, sort_keys=True, indent=1)
        + "\n"
    )
    return paths


def _fit_result_payload(cfg_echo: dict, model: str, result) -> dict:
    return {
        "config": cfg_echo,
        "model": model,
        "metric": result.metric,
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.train_curve),
        "train_curve": [float(v) for v in result.train_curve],
        "valid_curve": [float(v) for v in result.valid_curve],
        "test_metrics": [float(v) for v in result.test_metrics],
        "adjacency_gaps": [float(v) for v in result.gaps],
    }


def run_train(cfg: ExperimentConfig) -> Path:
    """Train one model on one suite; writes result JSON plus checkpoint."""
    if len(cfg.models) != 1:
        raise ConfigError("train: pass exactly one model")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.suite_dir:
        suite, _ = load_suite(cfg.suite_dir)
    else:
        suite, _ = load_suite(ensure_suite(out / "suites", cfg.kinds[0], cfg.seed, cfg.n))
    name = cfg.models[0]
    family = get_family(name)
    model_cfg = family.make_config(cfg.model_opts)
    result = fit(family, model_cfg, suite, cfg.train_config(cfg.seed))
    payload = _fit_result_payload(cfg.echo(), name, result)
    result_path = out / "result.json"
    result_path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    save_checkpoint(
        out / "checkpoint.json",
        dict(family.named_arrays(result.params)),
        meta={"model": name, "best_epoch": result.best_epoch},
    )
    return result_path


# one sweep cell = (model, kind, trial); run in worker processes
def _run_cell(payload: tuple) -> list[SweepRow]:
    suite_dir, model_name, kind, trial_seed, model_opts, train_opts = payload
    suite, manifest = load_suite(suite_dir)
    test_idx = suite.test_indices()
    entries = sorted(manifest["graphs"], key=lambda e: e["index"])
    gaps = [entries[i]["gap_to_train"] for i in test_idx]
    family = get_family(model_name)
    try:
        model_cfg = family.make_config(model_opts)
        tc = TrainConfig(**dict(train_opts, seed=trial_seed))
        result = fit(family, model_cfg, suite, tc)
        return [
            SweepRow(
                model=model_name,
                shift=suite.kind.value,
                seed=trial_seed,
                graph_index=i + 1,
                adjacency_gap=float(gap),
                rmse=float(r),
                status="ok",
            )
            for i, gap, r in zip(test_idx, gaps, result.test_metrics)
        ]
    except Exception as exc:  # partial failure: keep sweeping, record the cause
        reason = f"error: {type(exc).__name__}"
        return [
            SweepRow(
                model=model_name,
                shift=suite.kind.value,
                seed=trial_seed,
                graph_index=i + 1,
                adjacency_gap=float(gap),
                rmse=float("nan"),
                status=reason,
            )
            for i, gap in zip(test_idx, gaps)
        ]


def run_sweep(cfg: ExperimentConfig) -> tuple[list[SweepRow], Path]:
    """Cross product of models x kinds x trials, in a bounded worker pool.

    The data is fixed per kind (suite generated from the base seed); each
    trial is an independent training run with seed = base seed + trial on
    graph #1, selecting on #2, and reporting test RMSE on #3..#12 together
    with the adjacency gap to the training graph. Rows are sorted and
    written once by the parent process.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suites_root = out / "suites"
    payloads = []
    for kind in cfg.kinds:
        suite_dir = ensure_suite(suites_root, kind, cfg.seed, cfg.n)
        for trial in range(cfg.trials):
            seed = cfg.seed + trial
            for model in cfg.models:
                payloads.append(
                    (str(suite_dir), model, kind, seed, dict(cfg.model_opts), dict(cfg.train_opts))
                )
    workers = worker_count(len(payloads))
    rows: list[SweepRow] = []
    if workers == 1:
        for payload in payloads:
            rows.extend(_run_cell(payload))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell_rows in pool.map(_run_cell, payloads):
                rows.extend(cell_rows)
    rows.sort(key=lambda r: (r.model, r.shift, r.seed, r.graph_index))
    csv_path = out / "sweep.csv"
    write_sweep_csv(csv_path, rows)
    (out / "sweep_meta.json").write_text(
        json.dumps({"config": cfg.echo(), "rows": len(rows)}, sort_keys=True, indent=1) + "\n"
    )
    for kind in cfg.kinds:
        _write_sweep_chart(out / f"sweep_{kind}.svg", kind, rows)
    return rows, csv_path


def _write_sweep_chart(path, kind: str, rows: list[SweepRow]) -> None:
    series = []
    models = sorted({r.model for r in rows if r.shift == kind})
    for model in models:
        by_graph: dict[int, list[SweepRow]] = {}
        for r in rows:
            if r.shift == kind and r.model == model and r.status == "ok":
                by_graph.setdefault(r.graph_index, []).append(r)
        pts = []
        for gi in sorted(by_graph):
            cell = by_graph[gi]
            xs = float(np.mean([c.adjacency_gap for c in cell]))
            ys = np.array([c.rmse for c in cell])
            pts.append((xs, float(ys.mean()), float(ys.std())))
        if pts:
            series.append((model, pts))
    svg_line_chart(
        path,
        title=f"testing error under {kind} shift",
        xlabel="adjacency gap to training graph",
        ylabel="mean test RMSE (error bars: stdev over trials)",
        series=series,
    )


def run_probe(cfg: ExperimentConfig) -> tuple[list[ProbeRow], Path]:
    """Representation sensitivity to edge flips on the training graph.

    For each model (fixed random parameters from the shared seed, or a
    checkpoint if one is given), compare representations on graph #1 and
    on edge-flipped copies: record the spectral norm of the change and
    its value relative to the unperturbed representation norm.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.suite_dir:
        suite, _ = load_suite(cfg.suite_dir)
    else:
        suite, _ = load_suite(ensure_suite(out / "suites", cfg.kinds[0], cfg.seed, cfg.n))
    base_graph = suite.train_graph
    x = suite.features
    models = cfg.models if cfg.models != list(MODEL_NAMES) else list(DEFAULT_PROBE_MODELS)
    checkpoint_named = None
    if cfg.checkpoint:
        from .models import load_checkpoint

        checkpoint_named, _ = load_checkpoint(cfg.checkpoint)
    rows: list[ProbeRow] = []
    for model in models:
        family = get_family(model)
        model_cfg = family.make_config(cfg.model_opts)
        if checkpoint_named is not None:
            params = family.from_named({k: v.copy() for k, v in checkpoint_named.items()})
        else:
            params = family.init_params(model_cfg, x.shape[1], 1, cfg.seed)
        base_repr = _representation(family, model_cfg, params, base_graph, x)
        base_norm = spectral_norm(base_repr)
        for f in cfg.flip_counts:
            for ps in range(cfg.perturb_seeds):
                perturb_seed = cfg.seed * 1000 + ps
                g2 = perturb_edges(base_graph, int(f), perturb_seed + int(f))
                gap = adjacency_gap(base_graph, g2, NormMode.SYMMETRIC)
                changed = _representation(family, model_cfg, params, g2, x)
                change = spectral_norm(changed - base_repr)
                rows.append(
                    ProbeRow(
                        model=model,
                        flip_count=int(f),
                        perturb_seed=perturb_seed + int(f),
                        adjacency_gap=float(gap),
                        representation_change=float(change),
                        relative_change=float(change / base_norm) if base_norm > 0 else 0.0,
                    )
                )
    rows.sort(key=lambda r: (r.model, r.flip_count, r.perturb_seed))
    csv_path = out / "probe.csv"
    write_probe_csv(csv_path, rows)
    (out / "probe_meta.json").write_text(
        json.dumps({"config": cfg.echo(), "rows": len(rows)}, sort_keys=True, indent=1) + "\n"
    )
    series = []
    for model in models:
        pts_by_flip: dict[int, list[float]] = {}
        gaps_by_flip: dict[int, list[float]] = {}
        for r in rows:
            if r.model == model:
                pts_by_flip.setdefault(r.flip_count, []).append(r.relative_change)
                gaps_by_flip.setdefault(r.flip_count, []).append(r.adjacency_gap)
        pts = [
            (
                float(np.mean(gaps_by_flip[f])),
                float(np.mean(pts_by_flip[f])),
                float(np.std(pts_by_flip[f])),
            )
            for f in sorted(pts_by_flip)
        ]
        series.append((model, pts))
    svg_line_chart(
        out / "probe.svg",
        title="representation sensitivity to edge flips",
        xlabel="adjacency gap to unperturbed graph",
        ylabel="relative representation change",
        series=series,
    )
    return rows, csv_path


def _representation(family, model_cfg, params, graph, features) -> np.ndarray:
    tape = Tape()
    lifted, _ = family.lift(tape, params)
    z = family.represent(tape, model_cfg, lifted, graph, tape.const(features))
    return z.value
