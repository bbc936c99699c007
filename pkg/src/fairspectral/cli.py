"""Command-line entry point.

Subcommands:

* ``gen``: sample a synthetic two-block graph and write it as plain files.
* ``eig``: compute a truncated eigenbasis of a graph operator, with timing.
* ``analyze``: run the numerical verification suite for the convergence
  claims and report verdicts.
* ``train``: fit the spectral or the propagation model and report accuracy
  and fairness gaps on the held-out split.
* ``bench``: compare fairness across basis sizes, or compare the runtime of
  the truncated eigensolver against the full dense decomposition.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure
(non-convergence, divergence, size guard), 3 verification failure (a claim
check ran fine but its verdict is negative).

Every subcommand accepts ``--config FILE`` pointing at an INI file whose
section of the same name supplies defaults; explicit flags win.  Outputs of
``train`` land in a per-run directory named by a digest of the resolved
settings, so re-running the same configuration overwrites its own results
and nothing else.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    COMMAND_OPTIONS,
    ConfigError,
    load_config_file,
    parse_bool,
    resolve_settings,
    run_digest,
)
from .convergence import (
    CLAIM_NAMES,
    GenerationError,
    verify_decay_rate,
    verify_degenerate_top_bound,
    verify_principal_limit,
)
from .eigen import (
    DenseLimitError,
    NoConvergenceError,
    full_dense_eigendecomposition,
    save_basis,
    top_k_eigenpairs,
)
from .graph import (
    Graph,
    GraphFormatError,
    OPERATOR_MODES,
    SbmConfig,
    SplitMasks,
    generate_sbm,
    load_graph,
    make_splits,
    normalize,
)
from .metrics import evaluate
from .model import (
    forward_propagation,
    forward_spectral,
    init_propagation_params,
    init_spectral_params,
)
from .train import TrainConfig, TrainingDivergedError, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3

_EDGE_FILE = "edges.txt"
_NODE_FILE = "nodes.csv"
_SPLIT_FILE = "splits.json"


class CliError(Exception):
    """Input or usage problem surfaced to the user without a traceback."""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairspectral",
        description="Fairness-aware spectral graph learning toolkit.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command, options in COMMAND_OPTIONS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="INI file with defaults")
        for opt in options:
            if opt.type is parse_bool:
                p.add_argument(opt.flag, dest=opt.name, action="store_const",
                               const=True, default=None, help=opt.help)
            else:
                p.add_argument(opt.flag, dest=opt.name, type=opt.type,
                               default=None, help=opt.help)
    return parser


def _settings(args: argparse.Namespace) -> dict:
    file_values = None
    if args.config is not None:
        file_values = load_config_file(args.config).get(args.command)
    cli_values = {
        opt.name: getattr(args, opt.name) for opt in COMMAND_OPTIONS[args.command]
    }
    return resolve_settings(args.command, cli_values, file_values)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(payload: dict, out: str) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        _write(Path(out), text + "\n")
    else:
        print(text)


def _load_graph_dir(path: str, with_splits: bool) -> Graph:
    root = Path(path)
    edges = root / _EDGE_FILE
    nodes = root / _NODE_FILE
    for p in (edges, nodes):
        if not p.is_file():
            raise CliError(f"missing graph file: {p}")
    g = load_graph(edges, nodes, sensitive_column="sensitive", label_column="label")
    if with_splits:
        split_path = root / _SPLIT_FILE
        if not split_path.is_file():
            raise CliError(f"missing split file: {split_path}")
        g = g.with_splits(SplitMasks.from_json(split_path.read_text()))
    return g


def _cmd_gen(s: dict) -> int:
    cfg = SbmConfig(
        n=s["n"], p_in=s["p_in"], p_out=s["p_out"],
        sensitive_homophily=s["homophily"], label_bias=s["label_bias"],
        d=s["dims"], noise_sd=s["noise_sd"], seed=s["seed"],
    )
    g = generate_sbm(cfg)
    splits = make_splits(g, seed=s["seed"])
    root = Path(s["out"])
    root.mkdir(parents=True, exist_ok=True)

    a = g.adjacency
    rows = np.repeat(np.arange(a.n), np.diff(a.row_ptr))
    upper = rows < a.col_idx
    lines = [f"{u} {v}" for u, v in zip(rows[upper], a.col_idx[upper])]
    _write(root / _EDGE_FILE, "\n".join(lines) + ("\n" if lines else ""))

    d = g.features.shape[1]
    header = ",".join(["sensitive"] + [f"x{i}" for i in range(1, d)] + ["label"])
    body = [
        ",".join([str(int(g.sensitive[i]))]
                 + [repr(float(v)) for v in g.features[i, 1:]]
                 + [str(int(g.labels[i]))])
        for i in range(g.n)
    ]
    _write(root / _NODE_FILE, "\n".join([header] + body) + "\n")
    _write(root / _SPLIT_FILE, splits.to_json() + "\n")

    print(f"wrote {g.n} nodes, {g.edge_count // 2} edges to {root}")
    return EXIT_OK


def _cmd_eig(s: dict) -> int:
    if s["mode"] not in OPERATOR_MODES:
        raise CliError(f"mode must be one of {OPERATOR_MODES}, got {s['mode']!r}")
    if s["k"] < 1:
        raise CliError(f"k must be >= 1, got {s['k']}")
    g = _load_graph_dir(s["graph"], with_splits=False)
    op = normalize(g, s["mode"])
    t0 = time.perf_counter()
    if s["dense"]:
        basis = full_dense_eigendecomposition(
            op.matrix.to_dense(), dense_limit=s["dense_limit"]
        )
        method = "dense-full"
        if s["k"] < basis.k:
            from .eigen import top_k_from_dense

            basis = top_k_from_dense(op.matrix.to_dense(), s["k"],
                                     dense_limit=s["dense_limit"])
            method = "dense-topk"
    else:
        basis = top_k_eigenpairs(op, s["k"], tol=s["tol"], seed=s["seed"])
        method = "lanczos-topk"
    elapsed = time.perf_counter() - t0

    out = Path(s["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_basis(basis, out)
    sidecar = {
        "n": basis.n,
        "k": basis.k,
        "mode": s["mode"],
        "method": method,
        "seconds": elapsed,
        "eigenvalues": [float(v) for v in basis.eigenvalues],
        "max_residual": (None if basis.residuals is None
                         else float(np.max(basis.residuals))),
    }
    _write(out.with_suffix(out.suffix + ".json"), json.dumps(sidecar, indent=2) + "\n")
    print(f"{method}: {basis.k} pairs of n={basis.n} in {elapsed:.3f}s -> {out}")
    return EXIT_OK


_CHECK_RUNNERS = {
    "principal-limit": lambda s: verify_principal_limit(
        n=s["n"], l_max=s["l_max"], seed=s["seed"]),
    "degenerate-top-bound": lambda s: verify_degenerate_top_bound(
        n=s["n"], l_max=min(s["l_max"], 120), seed=s["seed"]),
    "nonprincipal-decay": lambda s: verify_decay_rate(n=s["n"], seed=s["seed"]),
}


def _cmd_analyze(s: dict) -> int:
    if s["check"] == "all":
        names = list(_CHECK_RUNNERS)
    elif s["check"] in _CHECK_RUNNERS:
        names = [s["check"]]
    else:
        raise CliError(
            f"check must be one of {', '.join(_CHECK_RUNNERS)} or all, got {s['check']!r}"
        )
    reports = []
    for name in names:
        report = _CHECK_RUNNERS[name](s)
        reports.append(report)
        print(f"{name}: {'pass' if report.verdict else 'FAIL'} (gap {report.gap:.3e})")
    payload = {"checks": [json.loads(r.to_json()) for r in reports]}
    if s["out"]:
        _write(Path(s["out"]), json.dumps(payload, indent=2) + "\n")
    return EXIT_OK if all(r.verdict for r in reports) else EXIT_VERIFICATION


def _cmd_train(s: dict) -> int:
    if s["model"] not in ("spectral", "propagation"):
        raise CliError(f"model must be spectral or propagation, got {s['model']!r}")
    if s["mode"] not in OPERATOR_MODES:
        raise CliError(f"mode must be one of {OPERATOR_MODES}, got {s['mode']!r}")
    g = _load_graph_dir(s["graph"], with_splits=True)
    op = normalize(g, s["mode"])
    rng = np.random.default_rng(s["seed"])
    t0 = time.perf_counter()
    if s["model"] == "spectral":
        basis = top_k_eigenpairs(op, s["k"], seed=s["seed"])
        params = init_spectral_params(
            rng, g.features.shape[1], s["hidden"], 2,
            s["layers"], s["encode_dim"], s["heads"],
        )
        forward = lambda p: forward_spectral(p, basis, g.features)
    else:
        params = init_propagation_params(rng, g.features.shape[1], s["hidden"], 2)
        forward = lambda p: forward_propagation(
            p, op.matrix, g.features, s["steps"], s["theta"])
    history = train(
        params, forward, g.labels, g.sensitive, g.train_mask, g.val_mask,
        TrainConfig(max_epochs=s["epochs"], lr=s["lr"],
                    weight_decay=s["weight_decay"], patience=s["patience"]),
    )
    report = evaluate(forward(params).value, g.labels, g.sensitive, g.test_mask)
    elapsed = time.perf_counter() - t0

    run_dir = Path(s["out"]) / f"run-{run_digest('train', s)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    _write(run_dir / "settings.json", json.dumps(s, indent=2, sort_keys=True) + "\n")
    _write(run_dir / "history.json", history.to_json() + "\n")
    _write(run_dir / "metrics.json", report.to_json() + "\n")
    print(
        f"{s['model']}: test acc {report.accuracy:.4f}, "
        f"sp gap {report.delta_sp:.4f}, eo gap {report.delta_eo:.4f} "
        f"({history.epochs_run} epochs, {elapsed:.1f}s) -> {run_dir}"
    )
    return EXIT_OK


def _int_list(text: str, what: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise CliError(f"{what} must be comma-separated integers: {text!r}") from exc
    if not values:
        raise CliError(f"{what} is empty")
    return values


def _bench_ksweep(s: dict) -> dict:
    k_values = _int_list(s["k_values"], "k_values")
    seeds = _int_list(s["seeds"], "seeds")
    results = []
    for k in k_values:
        accs, sps = [], []
        for seed in seeds:
            g = generate_sbm(SbmConfig(n=s["n"], seed=seed))
            g = g.with_splits(make_splits(g, seed=seed))
            op = normalize(g, "sym")
            basis = top_k_eigenpairs(op, k, seed=seed)
            params = init_spectral_params(
                np.random.default_rng(seed), g.features.shape[1], 16, 2, 2, 8)
            fwd = lambda p: forward_spectral(p, basis, g.features)
            train(params, fwd, g.labels, g.sensitive, g.train_mask, g.val_mask,
                  TrainConfig(max_epochs=s["epochs"]))
            rep = evaluate(fwd(params).value, g.labels, g.sensitive, g.test_mask)
            accs.append(rep.accuracy)
            sps.append(rep.delta_sp)
        results.append({
            "k": k,
            "accuracy_mean": float(np.mean(accs)),
            "accuracy_sd": float(np.std(accs)),
            "delta_sp_mean": float(np.mean(sps)),
            "delta_sp_sd": float(np.std(sps)),
            "seeds": seeds,
        })
        print(f"k={k}: acc {results[-1]['accuracy_mean']:.4f}"
              f" +- {results[-1]['accuracy_sd']:.4f},"
              f" sp gap {results[-1]['delta_sp_mean']:.4f}"
              f" +- {results[-1]['delta_sp_sd']:.4f}")
    return {"suite": "ksweep", "n": s["n"], "results": results}


def _bench_runtime(s: dict) -> dict:
    seeds = _int_list(s["seeds"], "seeds")
    rows = []
    for seed in seeds:
        g = generate_sbm(SbmConfig(n=s["n"], seed=seed))
        op = normalize(g, "sym")
        t0 = time.perf_counter()
        top_k_eigenpairs(op, s["k"], seed=seed)
        topk_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        full_dense_eigendecomposition(op.matrix.to_dense(), dense_limit=max(s["n"], 1))
        full_s = time.perf_counter() - t0
        rows.append({"seed": seed, "topk_seconds": topk_s, "full_seconds": full_s})
        print(f"seed {seed}: topk {topk_s:.3f}s, full {full_s:.3f}s")
    return {
        "suite": "runtime",
        "n": s["n"],
        "k": s["k"],
        "topk_mean_seconds": float(np.mean([r["topk_seconds"] for r in rows])),
        "full_mean_seconds": float(np.mean([r["full_seconds"] for r in rows])),
        "runs": rows,
    }


def _cmd_bench(s: dict) -> int:
    if s["suite"] == "ksweep":
        payload = _bench_ksweep(s)
    elif s["suite"] == "runtime":
        payload = _bench_runtime(s)
    else:
        raise CliError(f"suite must be ksweep or runtime, got {s['suite']!r}")
    if s["out"]:
        _write(Path(s["out"]), json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "eig": _cmd_eig,
    "analyze": _cmd_analyze,
    "train": _cmd_train,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _settings(args)
        return _COMMANDS[args.command](settings)
    except (NoConvergenceError, DenseLimitError, TrainingDivergedError,
            GenerationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CliError, ConfigError, GraphFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
