"""Command-line front end: config ingestion, sweeps and figure presets.

Config schema (JSON)::

    {
      "name": "run",                       # output file stem
      "seed": 0,                           # seeds random graphs, atoms, inverse samples
      "network": {
        "nodes": 2,
        "graph": {"type": "explicit", "edges": [[0, 1, 1.0]]}
               | {"type": "complete" | "path", "weight": 1.0}
               | {"type": "random", "edges": 14, "weight_range": null},
        "coupling": {"kind": "constant" | "power_decay" | "kuramoto_sinc", "parameter": 0.25},
        "delta": 1.0
      },
      "basis": {"order": 3, "half_width": null, "degree_bound": null,
                "inverse_oversampling": 2.0},
      "distribution": {"kind": "example2" | "example3" | "isotropic"}
                    | {"kind": "uniform_box", "samples": 50, "half_width": 1.0}
                    | {"kind": "atoms", "atoms": [[...]], "probabilities": null},
      "q": "identity" | [[...]],
      "methods": ["koopman", "simulation", "analytic", "linear"],
      "sweep": {"parameter": "network.coupling.parameter", "values": [0.0, 0.1]},
      "tolerance": 1e-10,
      "analytic_order": 17
    }

``sweep.parameter`` is a dotted path into the config; each value yields
one resolved config and one CSV row.  A ``half_width`` of ``null`` sizes
the box to the centered atoms with a 5% margin.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .analytic import ALPHA_RANGE, DEFAULT_ORDER, KURAMOTO_RANGE, two_agent_measure_analytic
from .errors import ConfigError, GraphError, KMDError
from .flow import InitialDistribution, default_workers, measure_by_simulation
from .koopman import decompose
from .network import CouplingFunction, Graph, Network, complete_graph, path_graph, random_connected_graph
from .performance import box_for, linear_measure, measure_by_koopman

METHODS = ("koopman", "simulation", "analytic", "linear")
COLUMNS = ["sweep_value", "rho_koopman", "rho_simulation", "rho_analytic", "rel_error",
           "wall_time_s", "rho_linear"]

DEFAULTS = {
    "name": "run",
    "seed": 0,
    "network": {"delta": 1.0, "coupling": {"kind": "constant", "parameter": 0.0}},
    "basis": {"order": 3, "half_width": None, "degree_bound": None, "inverse_oversampling": 2.0},
    "q": "identity",
    "methods": ["koopman", "simulation"],
    "sweep": None,
    "tolerance": 1e-10,
    "analytic_order": DEFAULT_ORDER,
}


class NumericalFailure(Exception):
    """A pipeline stage raised a numerical error; picklable across workers."""

    def __init__(self, stage: str, detail: str):
        super().__init__(stage, detail)
        self.stage = stage
        self.detail = detail

    def __str__(self) -> str:
        return f"numerical failure in stage '{self.stage}': {self.detail}"


def library_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------- config


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path) -> dict:
    """Parse a config (or a run manifest) and fill defaults."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "<file>") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                          f"line {exc.lineno}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object", "<root>")
    if "config" in raw and "version" in raw:       # manifest round trip
        raw = raw["config"]
    return _merge(DEFAULTS, raw)


def _get(cfg: dict, dotted: str):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config path {dotted!r}", dotted)
        node = node[part]
    return node


def _set(cfg: dict, dotted: str, value) -> dict:
    out = copy.deepcopy(cfg)
    node = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return out


def _number(value, field: str, positive: bool = False, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", field)
    if positive and not value > 0:
        raise ConfigError(f"must be positive, got {value!r}", field)
    return int(value) if integer else float(value)


def build_network(cfg: dict) -> Network:
    net = cfg.get("network")
    if not isinstance(net, dict):
        raise ConfigError("missing network section", "network")
    n = _number(net.get("nodes"), "network.nodes", positive=True, integer=True)
    graph = net.get("graph", {"type": "complete"})
    kind = graph.get("type", "explicit")
    try:
        if kind == "explicit":
            edges = graph.get("edges")
            if not isinstance(edges, list):
                raise ConfigError("explicit graph needs an edge list", "network.graph.edges")
            for k, e in enumerate(edges):
                if not isinstance(e, list) or len(e) not in (2, 3):
                    raise ConfigError(f"edge {k} must be [i, j] or [i, j, w]", f"network.graph.edges[{k}]")
                for v in e[:2]:
                    if not isinstance(v, int) or not 0 <= v < n:
                        raise ConfigError(f"edge {k} references node {v!r} outside 0..{n - 1}",
                                          f"network.graph.edges[{k}]")
            g = Graph(n, edges)
        elif kind == "complete":
            g = complete_graph(n, float(graph.get("weight", 1.0)))
        elif kind == "path":
            g = path_graph(n, float(graph.get("weight", 1.0)))
        elif kind == "random":
            m = _number(graph.get("edges"), "network.graph.edges", positive=True, integer=True)
            g = random_connected_graph(n, m, seed=cfg.get("seed"), weight_range=graph.get("weight_range"))
        else:
            raise ConfigError(f"unknown graph type {kind!r}", "network.graph.type")
    except GraphError as exc:
        raise ConfigError(str(exc), "network.graph") from exc
    coup = net.get("coupling", {})
    parameter = _number(coup.get("parameter", 0.0), "network.coupling.parameter")
    try:
        coupling = CouplingFunction(coup.get("kind", "constant"), parameter)
    except ValueError as exc:
        raise ConfigError(str(exc), "network.coupling") from exc
    delta = _number(net.get("delta", 1.0), "network.delta", positive=True)
    return Network(g, coupling, delta)


def build_distribution(cfg: dict, n: int) -> InitialDistribution:
    spec = cfg.get("distribution")
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("distribution needs a 'kind'", "distribution")
    kind = spec["kind"]
    if kind in ("example2", "example3"):
        if n != 2:
            raise ConfigError(f"{kind} atoms are two-agent; network has {n} nodes", "distribution.kind")
        return getattr(InitialDistribution, kind)()
    if kind == "isotropic":
        return InitialDistribution.isotropic(n)
    if kind == "uniform_box":
        samples = _number(spec.get("samples", 50), "distribution.samples", positive=True, integer=True)
        hw = _number(spec.get("half_width", 1.0), "distribution.half_width", positive=True)
        return InitialDistribution.uniform_box(n, samples, seed=cfg.get("seed"), half_width=hw)
    if kind == "atoms":
        atoms = np.asarray(spec.get("atoms"), dtype=float)
        if atoms.ndim != 2 or atoms.shape[1] != n:
            raise ConfigError(f"atoms must be a list of length-{n} states", "distribution.atoms")
        probs = spec.get("probabilities")
        try:
            if probs is None:
                return InitialDistribution.uniform(atoms)
            return InitialDistribution(atoms, np.asarray(probs, dtype=float))
        except ValueError as exc:
            raise ConfigError(str(exc), "distribution.probabilities") from exc
    raise ConfigError(f"unknown distribution kind {kind!r}", "distribution.kind")


def build_q(cfg: dict, n: int):
    q = cfg.get("q", "identity")
    if q == "identity" or q is None:
        return np.eye(n)
    arr = np.asarray(q, dtype=float)
    if arr.shape != (n, n):
        raise ConfigError(f"Q must be {n}x{n}", "q")
    if not np.allclose(arr, arr.T, atol=1e-12) or np.linalg.eigvalsh(arr).min() < -1e-10:
        raise ConfigError("Q must be symmetric positive semidefinite", "q")
    return arr


def _analytic_kind(network: Network) -> str:
    kind = network.coupling.kind
    if network.n != 2 or kind not in ("power_decay", "kuramoto_sinc"):
        raise ConfigError("method 'analytic' needs a two-node power_decay or kuramoto_sinc network",
                          "methods")
    return "alpha" if kind == "power_decay" else "kuramoto"


def resolve(cfg: dict, value=None) -> dict:
    """Validate one (possibly swept) config and build its objects."""
    if value is not None:
        cfg = _set(cfg, cfg["sweep"]["parameter"], value)
    methods = cfg.get("methods")
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods must be a non-empty list", "methods")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {list(METHODS)}", "methods")
    network = build_network(cfg)
    dist = build_distribution(cfg, network.n)
    q = build_q(cfg, network.n)
    basis = cfg.get("basis", {})
    order = _number(basis.get("order"), "basis.order", positive=True, integer=True)
    hw = basis.get("half_width")
    required = float(np.abs(dist.centered).max())
    if hw is None:
        hw = box_for(dist)
    else:
        hw = _number(hw, "basis.half_width", positive=True)
        if "koopman" in methods and required > hw * (1 + 1e-12):
            k = int(np.argmax(np.abs(dist.centered).max(axis=1)))
            raise ConfigError(f"centered atom {dist.centered[k].tolist()} lies outside the box; "
                              f"need half_width >= {required:.6g}", "basis.half_width")
    if basis.get("degree_bound") is not None:
        _number(basis["degree_bound"], "basis.degree_bound", positive=True, integer=True)
    if "analytic" in methods:
        kind = _analytic_kind(network)
        atoms = dist.atoms
        if not np.allclose(atoms[:, 0], -atoms[:, 1], atol=1e-12):
            raise ConfigError("method 'analytic' needs atoms of the form (p, -p)", "distribution")
        limit = ALPHA_RANGE if kind == "alpha" else KURAMOTO_RANGE
        if np.abs(atoms[:, 0]).max() > limit + 1e-12:
            raise ConfigError(f"analytic series validated only for |p| <= {limit:g}", "distribution")
    return {"config": cfg, "network": network, "dist": dist, "q": q, "half_width": hw,
            "order": order}


def validate_config(cfg: dict) -> list[dict]:
    sweep = cfg.get("sweep")
    if sweep is None:
        return [resolve(cfg)]
    if not isinstance(sweep, dict) or "parameter" not in sweep or not isinstance(sweep.get("values"), list):
        raise ConfigError("sweep needs 'parameter' and a list of 'values'", "sweep")
    _get(cfg, sweep["parameter"])
    if not sweep["values"]:
        raise ConfigError("sweep values are empty", "sweep.values")
    return [resolve(cfg, v) for v in sweep["values"]]


# ---------------------------------------------------------------- running


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (KMDError, np.linalg.LinAlgError, FloatingPointError) as exc:
        raise NumericalFailure(name, f"{type(exc).__name__}: {exc}") from exc


def evaluate_point(args) -> dict:
    cfg, value = args
    r = resolve(cfg, value)
    cfg = r["config"]
    network, dist, q = r["network"], r["dist"], r["q"]
    methods = cfg["methods"]
    basis = cfg["basis"]
    row = {c: None for c in COLUMNS}
    row["sweep_value"] = value
    t0 = time.perf_counter()
    if "koopman" in methods:
        decomp = _stage("koopman", decompose, network, r["order"], r["half_width"],
                        basis.get("degree_bound"),
                        inverse_oversampling=float(basis.get("inverse_oversampling", 2.0)),
                        seed=int(cfg.get("seed") or 0))
        row["rho_koopman"] = _stage("koopman", measure_by_koopman, decomp, dist, q)
    if "simulation" in methods:
        row["rho_simulation"] = _stage("simulation", measure_by_simulation, network, dist, q,
                                       tol=float(cfg["tolerance"]), workers=1)
    if "analytic" in methods:
        edge_w = network.graph.weights[0]
        row["rho_analytic"] = _stage("analytic", two_agent_measure_analytic, _analytic_kind(network),
                                     network.coupling.parameter, dist,
                                     int(cfg["analytic_order"]), edge_w, q)
    if "linear" in methods:
        row["rho_linear"] = _stage("linear", linear_measure, network, dist, q)
    ref = row["rho_simulation"]
    cand = row["rho_koopman"] if row["rho_koopman"] is not None else row["rho_analytic"]
    if ref is not None and cand is not None and ref > 0:
        row["rel_error"] = abs(cand - ref) / ref
    row["wall_time_s"] = time.perf_counter() - t0
    return row


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def execute(cfg: dict, out_dir, workers: int | None = None) -> Path:
    """Run every sweep point and write ``<name>.csv`` and ``<name>.manifest.json``."""
    validate_config(cfg)
    sweep = cfg.get("sweep")
    values = sorted(sweep["values"]) if sweep else [None]
    jobs = [(cfg, v) for v in values]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate_point, jobs))
    else:
        rows = [evaluate_point(j) for j in jobs]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = cfg.get("name", "run")
    csv_path = out / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in COLUMNS])
    manifest = {"version": library_version(), "config": cfg, "csv": csv_path.name}
    (out / f"{stem}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return csv_path


# ---------------------------------------------------------------- presets


def preset_config(figure: str, seed: int = 0) -> dict:
    if figure == "figure1":
        return _merge(DEFAULTS, {
            "name": "figure1", "seed": seed,
            "network": {"nodes": 2, "graph": {"type": "explicit", "edges": [[0, 1, 1.0]]},
                        "coupling": {"kind": "power_decay", "parameter": 0.0}},
            "distribution": {"kind": "example2"},
            "methods": ["analytic", "simulation"],
            "sweep": {"parameter": "network.coupling.parameter",
                      "values": [round(0.05 * k, 2) for k in range(9)]},
        })
    if figure == "figure2":
        return _merge(DEFAULTS, {
            "name": "figure2", "seed": seed,
            "network": {"nodes": 2, "graph": {"type": "explicit", "edges": [[0, 1, 1.0]]},
                        "coupling": {"kind": "kuramoto_sinc", "parameter": 1.0}},
            "distribution": {"kind": "example3"},
            "methods": ["analytic", "simulation"],
            "sweep": {"parameter": "network.coupling.parameter",
                      "values": [0.2, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]},
        })
    if figure == "figure3":
        return _merge(DEFAULTS, {
            "name": "figure3", "seed": seed,
            "network": {"nodes": 3, "graph": {"type": "complete"},
                        "coupling": {"kind": "power_decay", "parameter": 0.25}},
            "basis": {"order": 3},
            "distribution": {"kind": "uniform_box", "samples": 50, "half_width": 1.0},
            "methods": ["koopman", "simulation", "linear"],
            "tolerance": 1e-9,
            "sweep": {"parameter": "network.nodes", "values": list(range(3, 9))},
        })
    if figure == "figure4":
        return _merge(DEFAULTS, {
            "name": "figure4", "seed": seed,
            "network": {"nodes": 8, "graph": {"type": "random", "edges": 10},
                        "coupling": {"kind": "power_decay", "parameter": 0.25}},
            "basis": {"order": 3},
            "distribution": {"kind": "uniform_box", "samples": 50, "half_width": 1.0},
            "methods": ["koopman", "simulation", "linear"],
            "tolerance": 1e-9,
            "sweep": {"parameter": "network.graph.edges", "values": list(range(10, 29, 2))},
        })
    raise ConfigError(f"unknown preset {figure!r}", "preset")


# ---------------------------------------------------------------- entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kmdnet", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a config")
    run.add_argument("config")
    run.add_argument("--out", default=".", help="output directory (default: current)")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    pre = sub.add_parser("preset", help="reproduce a figure's data")
    pre.add_argument("figure", choices=["figure1", "figure2", "figure3", "figure4"])
    pre.add_argument("--out", required=True)
    pre.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            resolved = validate_config(cfg)
            print("ok")
            for r in resolved:
                label = "" if cfg.get("sweep") is None else f"{cfg['sweep']['parameter']}: "
                value = "" if cfg.get("sweep") is None else _get(r["config"], cfg["sweep"]["parameter"])
                print(f"{label}{value} atoms={json.dumps(r['dist'].atoms.tolist())}")
            return 0
        if args.command == "run":
            cfg = load_config(args.config)
            path = execute(cfg, args.out)
        else:
            cfg = preset_config(args.figure, args.seed)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{args.figure}.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
            path = execute(cfg, out)
        print(f"wrote {path}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(str(exc), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
