"""On-disk formats: graph text files, CSV matrices, suite manifests.

All writers format floats with repr-quality precision ("%.17g") and sort
JSON keys, so regenerating identical data produces byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .graphs import Graph, NormMode
from .synth import ROLES, SUITE_SIZE, SbmParams, ShiftKind, ShiftSuite

__all__ = [
    "write_graph",
    "read_graph",
    "write_matrix_csv",
    "read_matrix_csv",
    "write_suite",
    "load_suite",
    "suite_dir_name",
]


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_graph(path, g: Graph) -> None:
    """Write the text format: a `n <count>` header, then `u v w` lines."""
    lines = [f"n {g.n}"]
    lines.extend(f"{u} {v} {_fmt(w)}" for u, v, w in g.edges())
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path, node_features=None) -> Graph:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n "):
        raise ConfigError(f"{path}: missing 'n <count>' header")
    n = int(lines[0].split()[1])
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise ConfigError(f"{path}: bad edge line {ln!r}")
        edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return Graph(n, edges, node_features=node_features)


def write_matrix_csv(path, m: np.ndarray) -> None:
    """One row per node, comma-separated, no header."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    with open(path, "w") as fh:
        for row in m:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    for ln in Path(path).read_text().splitlines():
        if ln.strip():
            rows.append([float(tok) for tok in ln.split(",")])
    if not rows:
        return np.zeros((0, 0))
    return np.asarray(rows, dtype=np.float64)


def suite_dir_name(kind: str, seed: int, n: int) -> str:
    return f"{ShiftKind(kind).value}-seed{int(seed)}-n{int(n)}"


def write_suite(directory, suite: ShiftSuite) -> Path:
    """Materialize a suite: graphs, features, labels, latents, manifest."""
    from . import FORMAT_VERSION

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(directory / "latents.csv", suite.latents)
    write_matrix_csv(directory / "features.csv", suite.features)
    gaps = suite.gaps_to_train(NormMode.SYMMETRIC)
    entries = []
    for i, (g, y, role, params) in enumerate(
        zip(suite.graphs, suite.labels, suite.roles, suite.schedule), start=1
    ):
        graph_file = f"graph_{i:02d}.txt"
        labels_file = f"labels_{i:02d}.csv"
        write_graph(directory / graph_file, g)
        write_matrix_csv(directory / labels_file, y)
        entries.append(
            {
                "index": i,
                "file": graph_file,
                "labels_file": labels_file,
                "role": role,
                "params": {"b": params.b, "p1": params.p1, "p2": params.p2},
                "gap_to_train": gaps[i - 1],
            }
        )
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": suite.kind.value,
        "seed": suite.seed,
        "n": suite.n,
        "latents_file": "latents.csv",
        "features_file": "features.csv",
        "label_generator": suite.label_generator,
        "latent_sharing": "shared-across-suite",
        "graphs": entries,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n"
    )
    return directory


def load_suite(directory) -> tuple[ShiftSuite, dict]:
    """Read a suite directory back; returns (suite, manifest dict)."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"{directory}: no manifest.json (not a suite directory)")
    manifest = json.loads(manifest_path.read_text())
    entries = manifest.get("graphs", [])
    if len(entries) != SUITE_SIZE:
        raise ConfigError(f"{directory}: expected {SUITE_SIZE} graphs, found {len(entries)}")
    n = int(manifest["n"])
    latents = read_matrix_csv(directory / manifest["latents_file"])
    features = read_matrix_csv(directory / manifest["features_file"])
    graphs = []
    labels = []
    params = []
    for i, entry in enumerate(sorted(entries, key=lambda e: e["index"]), start=1):
        if entry["index"] != i or entry["role"] != ROLES[i - 1]:
            raise ConfigError(f"{directory}: unexpected index/role layout in manifest")
        g = read_graph(directory / entry["file"], node_features=None)
        if g.n != n:
            raise ConfigError(f"{directory}: graph {i} has {g.n} nodes, manifest says {n}")
        graphs.append(g)
        labels.append(read_matrix_csv(directory / entry["labels_file"]))
        p = entry["params"]
        params.append(SbmParams(n=n, b=int(p["b"]), p1=float(p["p1"]), p2=float(p["p2"])))
    suite = ShiftSuite(
        kind=ShiftKind(manifest["kind"]),
        seed=int(manifest["seed"]),
        n=n,
        latents=latents,
        features=features,
        graphs=graphs,
        labels=labels,
        schedule=params,
        label_generator=manifest.get("label_generator", ""),
    )
    return suite, manifest
