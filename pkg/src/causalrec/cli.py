"""Command-line entry point: simulate, train, eval, export-graph, sweep.

Every command takes ``--config run.json`` plus per-field overrides
(``--d 10 --p-int 0.3 --variant linear ...``).  Failures exit nonzero with a
JSON object ``{"error": ..., "message": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import ConfigError, RunConfig
from .core import CausalGraph, DataError, TrajectoryDataset, sigmoid, threshold_graph
from .evaluation import evaluate_ranking, leave_last_out, report, shd
from .mechanisms import StructuralEquations, load_checkpoint, save_checkpoint
from .optim import train, write_log
from .score import dataset_transitions
from .simulator import generate, make_world, write_ground_truth

log = logging.getLogger("causalrec")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------- config plumbing

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    g = p.add_argument_group("config overrides")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        t = f.type if isinstance(f.type, str) else f.type.__name__
        if t.startswith("bool"):
            g.add_argument(flag, dest="cfg_" + f.name, action=argparse.BooleanOptionalAction,
                           default=None)
        else:
            conv = int if t.startswith("int") else float if t.startswith("float") else str
            g.add_argument(flag, dest="cfg_" + f.name, type=conv, default=None, metavar=t.split()[0].upper())


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return replace(cfg, **overrides) if overrides else cfg


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _read_dataset(path) -> TrajectoryDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return TrajectoryDataset.read(path)


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: RunConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = cfg.sim_config()
    gt, rec = make_world(sim)
    ds, flags = generate(sim, gt, rec, return_flags=True)
    if len(ds) == 0:
        log.warning("n_users=0: writing an empty dataset")
    ds.write(out / "trajectories.jsonl")
    write_ground_truth(gt, out / "truth.tsv", out / "truth.meta.json")
    cfg.save(out / "config.json")
    n_int = sum(sum(f) for f in flags)
    n_steps = sum(len(f) - 1 for f in flags)
    return {"trajectories": len(ds), "transitions": n_steps, "true_edges": gt.graph.n_edges(),
            "intervened_fraction": n_int / n_steps if n_steps else 0.0,
            "dataset": str(out / "trajectories.jsonl"), "truth": str(out / "truth.tsv")}


def cmd_train(cfg: RunConfig, data, out_dir, seed: int | None = None,
              wall_clock: bool = True) -> dict:
    ds = _read_dataset(data)
    if ds.d != cfg.d:
        raise DataError(f"dataset has d={ds.d} but config has d={cfg.d}")
    split = leave_last_out(ds)
    table = dataset_transitions(split.train, cfg.window)
    if len(table) == 0:
        raise DataError("training split has no transitions")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config(seed)
    res = train(table, cfg.model_config(), cfg.score_config(), tcfg)
    save_checkpoint(out / "checkpoint.npz", res.params, res.model,
                    {"score": cfg.score_config().__dict__, "seed": tcfg.seed})
    records = res.epoch_log if wall_clock else [{**r, "wall_ms": 0} for r in res.epoch_log]
    write_log(records, out / "train_log.jsonl")
    last = res.log[-1]
    return {"checkpoint": str(out / "checkpoint.npz"), "outer_iterations": len(res.log),
            "epochs": len(res.epoch_log), "score": last["score"], "h": last["h"],
            "edges": threshold_graph(res.params["gamma"], cfg.tau).n_edges()}


def cmd_eval(cfg: RunConfig, checkpoint, data, truth=None, split: str = "test") -> dict:
    params, mcfg, _ = load_checkpoint(checkpoint)
    ds = _read_dataset(data)
    if ds.d != mcfg.d:
        raise DataError(f"dataset has d={ds.d} but checkpoint has d={mcfg.d}")
    parts = leave_last_out(ds)
    queries = parts.test if split == "test" else parts.validation
    graph = threshold_graph(params["gamma"], cfg.tau)
    res, neg = evaluate_ranking(StructuralEquations(params, mcfg), graph.adjacency, queries,
                                seed=cfg.seed)
    out = {"split": split, **res.as_dict(), "negatives": neg, "edges": graph.n_edges()}
    if truth is not None:
        out["shd"] = shd(graph, CausalGraph.read_tsv(truth, mcfg.d))
    return out


def export_graph(params, labels, tau: float):
    """(DOT text, TSV text) for the thresholded graph with sigmoid weights."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    gamma = params["gamma"]
    graph = threshold_graph(gamma, tau)
    w = sigmoid(gamma)
    dot = ["digraph causal {"]
    dot += [f'  n{i} [label="{_dot_escape(lab)}"];' for i, lab in enumerate(labels)]
    tsv = ["parent\tchild\tweight"]
    for parent, child in graph.edges():
        dot.append(f'  n{parent} -> n{child} [weight="{w[child, parent]:.6f}"];')
        tsv.append(f"{labels[parent]}\t{labels[child]}\t{w[child, parent]:.6f}")
    dot.append("}")
    return "\n".join(dot) + "\n", "\n".join(tsv) + "\n"


def _dot_escape(s: str) -> str:
    return str(s).replace("\\", "\\\\").replace('"', '\\"')


def cmd_export_graph(checkpoint, tau: float, out_prefix, labels=None) -> dict:
    params, mcfg, _ = load_checkpoint(checkpoint)
    labels = list(labels) if labels is not None else [str(i) for i in range(mcfg.d)]
    dot, tsv = export_graph(params, labels, tau)
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    dot_path, tsv_path = prefix.with_suffix(".dot"), prefix.with_suffix(".tsv")
    dot_path.write_text(dot, encoding="utf-8")
    tsv_path.write_text(tsv, encoding="utf-8")
    return {"dot": str(dot_path), "tsv": str(tsv_path), "edges": tsv.count("\n") - 1}


def cmd_sweep(cfg: RunConfig, f_grid, g_grid, out_dir) -> dict:
    """Simulate once per seed, train every (f_hidden, g_hidden) pair, and
    report validation/test metrics as mean(std) over seeds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for f_h in f_grid:
        for g_h in g_grid:
            c = replace(cfg, f_hidden=f_h, g_hidden=g_h)
            val, test, shds = [], [], []
            for seed in c.seeds():
                sim = c.sim_config(seed)
                gt, rec = make_world(sim)
                parts = leave_last_out(generate(sim, gt, rec))
                res = train(dataset_transitions(parts.train, c.window), c.model_config(),
                            c.score_config(), c.train_config(seed))
                graph = threshold_graph(res.params["gamma"], c.tau)
                eqs = StructuralEquations(res.params, res.model)
                val.append(evaluate_ranking(eqs, graph.adjacency, parts.validation, seed)[0])
                test.append(evaluate_ranking(eqs, graph.adjacency, parts.test, seed)[0])
                shds.append(shd(graph, gt.graph))
            rows.append({"f_hidden": f_h, "g_hidden": g_h, "validation": report(val),
                         "test": report(test, shds)})
    best = max(rows, key=lambda r: r["validation"]["ndcg@5"]["mean"])
    table = format_table(rows)
    (out / "sweep.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n",
                                    encoding="utf-8")
    (out / "sweep.txt").write_text(table, encoding="utf-8")
    print(table, file=sys.stderr, end="")
    return {"rows": rows, "best": {"f_hidden": best["f_hidden"], "g_hidden": best["g_hidden"]}}


def format_table(rows) -> str:
    def ms(s):
        return f"{s['mean']:.4f}({s['std']:.4f})"

    head = ["f_hidden", "g_hidden", "hit@1", "hit@5", "ndcg@5", "mrr", "shd"]
    lines = ["\t".join(head)]
    for r in rows:
        t = r["test"]
        lines.append("\t".join([str(r["f_hidden"]), str(r["g_hidden"]), ms(t["hit@1"]),
                                ms(t["hit@5"]), ms(t["ndcg@5"]), ms(t["mrr"]),
                                f"{t['shd_summary']['mean']:.1f}({t['shd_summary']['std']:.1f})"]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="causalrec", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset and its true graph")
    _add_config_flags(s)
    s.add_argument("--out-dir", default="data")

    s = sub.add_parser("train", help="fit a model on a dataset")
    _add_config_flags(s)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out-dir", default="runs/train")
    s.add_argument("--no-wall-clock", action="store_true",
                   help="write wall_ms=0 so repeated runs give byte-identical logs")

    s = sub.add_parser("eval", help="ranking metrics (and SHD given a true graph)")
    _add_config_flags(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--truth-graph")
    s.add_argument("--split", choices=("test", "validation"), default="test")
    s.add_argument("--report", help="also write the report JSON here")

    s = sub.add_parser("export-graph", help="thresholded graph as DOT and TSV")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", default="graph", help="output prefix (.dot/.tsv appended)")
    s.add_argument("--space", help="variable-space JSON for node labels")

    s = sub.add_parser("sweep", help="hidden-width grid over several seeds")
    _add_config_flags(s)
    s.add_argument("--f-grid", default="8", help="comma-separated structural-equation widths")
    s.add_argument("--g-grid", default="16", help="comma-separated recommender widths")
    s.add_argument("--seeds", type=int, default=None, help="number of seeds (overrides n_seeds)")
    s.add_argument("--out-dir", default="runs/sweep")
    return p


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"expected comma-separated integers, got {text!r}") from None


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        raise CliError("--threads must be at least 1")
    with threadpool_limits(limits=args.threads):
        if args.command == "export-graph":
            labels = None
            if args.space:
                from .core import VariableSpace
                labels = VariableSpace.from_json(
                    json.loads(Path(args.space).read_text(encoding="utf-8"))).labels
            return cmd_export_graph(args.checkpoint, args.threshold, args.out, labels)
        cfg = _resolve_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out_dir)
        if args.command == "train":
            return cmd_train(cfg, args.dataset, args.out_dir, wall_clock=not args.no_wall_clock)
        if args.command == "eval":
            out = cmd_eval(cfg, args.checkpoint, args.dataset, args.truth_graph, args.split)
            if args.report:
                Path(args.report).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")
            return out
        if args.command == "sweep":
            if args.seeds is not None:
                cfg = replace(cfg, n_seeds=args.seeds)
            return cmd_sweep(cfg, _ints(args.f_grid), _ints(args.g_grid), args.out_dir)
    raise CliError(f"unknown command {args.command!r}")  # pragma: no cover


def main(argv=None) -> int:
    try:
        _emit(run(argv))
        return 0
    except (CliError, ConfigError, DataError, FileNotFoundError, PermissionError,
            IsADirectoryError, ValueError, OSError) as e:
        kind = {CliError: "usage", ConfigError: "config"}.get(type(e), type(e).__name__)
        print(json.dumps({"error": kind, "message": str(e)}), file=sys.stderr)
        return 2 if isinstance(e, CliError) else 1


if __name__ == "__main__":
    sys.exit(main())
