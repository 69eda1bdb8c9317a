"""Command-line entry point.

Subcommands: extract-mvf, search, sweep, dataset-gen, eval, bdrate,
loss-check.  Every command is deterministic given its inputs and --seed and
echoes its configuration into <out>/manifest.json.  Exit codes: 0 success,
2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import metrics as mx
from .errors import QtmtError
from .maps import maps_from_tree
from .motion import RefPair, build_msmvf, full_ctu_origins, load_raw_y, load_y4m
from .parity import read_parity
from .partition import Constraints
from .predictor import NoiseParams, load_predictions, oracle_predict, uniform_predict
from .rdo import (
    CostModel,
    CtuCostContext,
    PruneParams,
    exhaustive_search,
    pruned_search,
)

PAPER_SETTINGS = [
    (False, 0.0),
    (True, 0.0),
    (True, 0.125),
    (True, 0.175),
    (True, 0.225),
    (True, 0.26),
]
PAPER_THM_GRID = [0.0, 0.125, 0.175, 0.225, 0.26]


def _add_common(p):
    p.add_argument("--input", required=True, help="y4m clip, or raw luma with --width/--height")
    p.add_argument("--width", type=int, help="frame width for raw planar input")
    p.add_argument("--height", type=int, help="frame height for raw planar input")
    p.add_argument("--qp", type=int, action="append", help="QP (repeatable); default 32")
    p.add_argument("--ctu-size", type=int, default=128)
    p.add_argument("--search-range", type=int, default=32)
    p.add_argument("--gop", default="hierarchical:8", help="low_delay or hierarchical:<gop_size>")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes over CTUs (default 1)")
    p.add_argument("--seed", type=int, default=0)


def _add_predictor(p):
    p.add_argument("--predictor", default="oracle", help="oracle | uniform | file:PATH")
    p.add_argument("--noise-eps", type=float, default=0.0)
    p.add_argument("--depth-jitter", type=float, default=0.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="qtmt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-mvf", help="dump per-CTU multi-scale motion fields")
    _add_common(p)

    p = sub.add_parser("search", help="run the partition search per CTU")
    _add_common(p)
    _add_predictor(p)
    p.add_argument("--mode", choices=["exhaustive", "pruned"], default="exhaustive")
    p.add_argument("--thm", type=float, default=0.0)
    p.add_argument("--qtskip", action="store_true")

    p = sub.add_parser("sweep", help="trade-off table over (thm, qtskip) settings")
    _add_common(p)
    _add_predictor(p)
    p.add_argument("--thm", type=float, action="append", help="thm grid (with --qtskip-values)")
    p.add_argument(
        "--qtskip-values",
        help="comma list of true/false; grid = product with --thm (default: the six preset settings)",
    )

    p = sub.add_parser("dataset-gen", help="generate an MVFI dataset from a clip")
    _add_common(p)

    p = sub.add_parser("eval", help="decision accuracy of a predictor vs exhaustive truth")
    _add_common(p)
    _add_predictor(p)
    p.add_argument("--thm", type=float, action="append", help="threshold grid for accuracy curves")

    p = sub.add_parser("bdrate", help="BD-rate between two RD-point CSV files")
    p.add_argument("--anchor", required=True, help="CSV with header bitrate,psnr (4 rows)")
    p.add_argument("--test", required=True)
    p.add_argument("--out")

    p = sub.add_parser("loss-check", help="compare hybrid-loss values against a parity file")
    p.add_argument("--parity", required=True)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--out")

    return parser


def _parse_gop(text) -> ds.GopConfig:
    if text == "low_delay":
        return ds.GopConfig(structure="low_delay")
    if text.startswith("hierarchical"):
        size = int(text.split(":", 1)[1]) if ":" in text else 8
        return ds.GopConfig(structure="hierarchical", gop_size=size)
    raise QtmtError(f"unknown --gop value {text!r}")


def _load_frames(args):
    path = Path(args.input)
    if not path.exists():
        raise QtmtError(f"input not found: {path}")
    if path.suffix == ".y4m":
        return load_y4m(path)
    if args.width and args.height:
        return load_raw_y(path, args.width, args.height)
    raise QtmtError("raw input requires --width and --height")


def _plan(frames, gop):
    """(frame, refs, tid) for every frame that has references."""
    out = []
    for frame in frames:
        ref_pocs = gop.refs_for(frame.poc, len(frames))
        if ref_pocs is None:
            continue
        l0 = frames[ref_pocs[0]]
        l1 = l0 if ref_pocs[1] is None else frames[ref_pocs[1]]
        out.append((frame, RefPair(l0=l0, l1=l1), gop.tid(frame.poc)))
    return out


def _derived_seed(base, poc, cx, cy):
    return (base * 1000003 + poc * 7919 + cx * 131 + cy) % (2**32)


def _write_manifest(out_dir, args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    with open(out_dir / "manifest.json", "w") as f:
        json.dump({"argv": sys.argv[1:], "config": cfg}, f, indent=2, default=str)


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pool_map(fn, tasks, jobs):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _maps_as_lists(maps):
    return {"qt": maps.qt.tolist(), "mt": maps.mt.tolist()}


# ---------------------------------------------------------------------------
# search

def _search_ctu(task, cfg):
    """One (frame, refs, origin) unit of search work; returns result rows."""
    frame, refs, origin = task
    c, qps, rng_range = cfg["c"], cfg["qps"], cfg["search_range"]
    ctx = CtuCostContext(frame, refs, origin, c, rng_range)
    cx, cy = origin[0] // c.ctu_size, origin[1] // c.ctu_size
    rows = []
    for qp in qps:
        model = CostModel(qp=qp)
        fallback = False
        if cfg["mode"] == "exhaustive":
            res = exhaustive_search(frame, refs, origin, model, c, rng_range, context=ctx)
        else:
            pred = None
            if cfg["predictor"] == "oracle":
                truth = exhaustive_search(frame, refs, origin, model, c, rng_range, context=ctx)
                noise = NoiseParams(
                    eps=cfg["noise_eps"],
                    depth_jitter=cfg["depth_jitter"],
                    seed=_derived_seed(cfg["seed"], frame.poc, cx, cy),
                )
                pred = oracle_predict(maps_from_tree(truth.tree, c), noise)
            elif cfg["predictor"] == "uniform":
                pred = uniform_predict(c)
            else:
                pred = cfg["pred_file"].get((frame.poc, cx, cy))
            if pred is None:
                fallback = True
                res = exhaustive_search(frame, refs, origin, model, c, rng_range, context=ctx)
            else:
                res = pruned_search(
                    frame, refs, origin, model, pred, cfg["params"], c, rng_range, context=ctx
                )
        rows.append(
            {
                "poc": frame.poc,
                "ctu_x": cx,
                "ctu_y": cy,
                "qp": qp,
                "cost": res.cost,
                "nodes_visited": res.stats.nodes_visited,
                "leaf_costs_evaluated": res.stats.leaf_costs_evaluated,
                "splits_pruned": res.stats.splits_pruned,
                "wall_time": res.stats.wall_time,
                "fallback": int(fallback),
                "maps": _maps_as_lists(maps_from_tree(res.tree, c)),
            }
        )
    return rows


def cmd_search(args) -> int:
    c = Constraints(ctu_size=args.ctu_size)
    gop = _parse_gop(args.gop)
    frames = _load_frames(args)
    qps = args.qp or [32]
    out = _out_dir(args)
    _write_manifest(out, args)

    cfg = {
        "c": c,
        "qps": qps,
        "search_range": args.search_range,
        "mode": args.mode,
        "predictor": getattr(args, "predictor", "oracle"),
        "noise_eps": getattr(args, "noise_eps", 0.0),
        "depth_jitter": getattr(args, "depth_jitter", 0.0),
        "seed": args.seed,
        "params": PruneParams(thm=getattr(args, "thm", 0.0), qtskip=getattr(args, "qtskip", False)),
        "pred_file": {},
    }
    if args.mode == "pruned" and cfg["predictor"].startswith("file:"):
        cfg["pred_file"] = load_predictions(cfg["predictor"][5:])
        cfg["predictor"] = "file"

    tasks = [
        (frame, refs, origin)
        for frame, refs, _ in _plan(frames, gop)
        for origin in full_ctu_origins(frame.width, frame.height, c.ctu_size)
    ]
    all_rows = [
        row for rows in _pool_map(functools.partial(_search_ctu, cfg=cfg), tasks, args.jobs)
        for row in rows
    ]
    all_rows.sort(key=lambda r: (r["poc"], r["ctu_y"], r["ctu_x"], r["qp"]))

    with open(out / "results.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(
            ["poc", "ctu_x", "ctu_y", "qp", "cost", "nodes_visited",
             "leaf_costs_evaluated", "splits_pruned", "wall_time", "fallback"]
        )
        for r in all_rows:
            wr.writerow(
                [r["poc"], r["ctu_x"], r["ctu_y"], r["qp"], f"{r['cost']:.6f}",
                 r["nodes_visited"], r["leaf_costs_evaluated"], r["splits_pruned"],
                 f"{r['wall_time']:.6f}", r["fallback"]]
            )
    with open(out / "trees.json", "w") as f:
        json.dump(
            {f"{r['poc']},{r['ctu_x']},{r['ctu_y']},{r['qp']}": r["maps"] for r in all_rows},
            f,
        )
    n_fallback = sum(r["fallback"] for r in all_rows)
    print(f"search: {len(all_rows)} CTU results ({n_fallback} fallback) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# sweep

def _sweep_ctu(task, cfg):
    frame, refs, origin = task
    c, qps, rng_range = cfg["c"], cfg["qps"], cfg["search_range"]
    ctx = CtuCostContext(frame, refs, origin, c, rng_range)
    cx, cy = origin[0] // c.ctu_size, origin[1] // c.ctu_size
    out = {"anchor": [], "settings": {i: [] for i in range(len(cfg["settings"]))}, "log": []}
    for qp in qps:
        model = CostModel(qp=qp)
        anchor = exhaustive_search(frame, refs, origin, model, c, rng_range, context=ctx)
        out["anchor"].append(
            (qp, anchor.cost, anchor.stats.nodes_visited, anchor.stats.wall_time)
        )
        truth_maps = maps_from_tree(anchor.tree, c)
        if cfg["predictor"] == "oracle":
            noise = NoiseParams(
                eps=cfg["noise_eps"],
                depth_jitter=cfg["depth_jitter"],
                seed=_derived_seed(cfg["seed"], frame.poc, cx, cy),
            )
            pred = oracle_predict(truth_maps, noise)
        elif cfg["predictor"] == "uniform":
            pred = uniform_predict(c)
        else:
            pred = cfg["pred_file"].get((frame.poc, cx, cy))
        if pred is None:
            continue
        out["log"].extend(mx.decision_log(anchor.tree, pred, 0.0, c))
        for i, (qtskip, thm) in enumerate(cfg["settings"]):
            res = pruned_search(
                frame, refs, origin, model, pred, PruneParams(thm=thm, qtskip=qtskip),
                c, rng_range, context=ctx,
            )
            out["settings"][i].append(
                (qp, res.cost, res.stats.nodes_visited, res.stats.wall_time)
            )
    return out


def cmd_sweep(args) -> int:
    c = Constraints(ctu_size=args.ctu_size)
    gop = _parse_gop(args.gop)
    frames = _load_frames(args)
    qps = args.qp or [32]
    out = _out_dir(args)
    _write_manifest(out, args)

    if args.thm:
        skips = [s.strip().lower() in ("true", "t", "1") for s in
                 (args.qtskip_values or "true").split(",")]
        settings = [(sk, thm) for sk in skips for thm in args.thm]
    else:
        settings = list(PAPER_SETTINGS)
    if not settings:
        raise QtmtError("sweep grid is empty")

    cfg = {
        "c": c,
        "qps": qps,
        "search_range": args.search_range,
        "settings": settings,
        "predictor": args.predictor,
        "noise_eps": args.noise_eps,
        "depth_jitter": args.depth_jitter,
        "seed": args.seed,
        "pred_file": {},
    }
    if args.predictor.startswith("file:"):
        cfg["pred_file"] = load_predictions(args.predictor[5:])
        cfg["predictor"] = "file"

    tasks = [
        (frame, refs, origin)
        for frame, refs, _ in _plan(frames, gop)
        for origin in full_ctu_origins(frame.width, frame.height, c.ctu_size)
    ]
    if not tasks:
        raise QtmtError("no full CTUs with references to sweep")
    results = _pool_map(functools.partial(_sweep_ctu, cfg=cfg), tasks, args.jobs)

    anchor_cost = anchor_nodes = 0.0
    anchor_time = {qp: 0.0 for qp in qps}
    log = []
    per_setting = [dict(cost=0.0, nodes=0.0, time={qp: 0.0 for qp in qps}) for _ in settings]
    for res in results:
        for qp, cost, nodes, wall in res["anchor"]:
            anchor_cost += cost
            anchor_nodes += nodes
            anchor_time[qp] += wall
        log.extend(res["log"])
        for i in range(len(settings)):
            for qp, cost, nodes, wall in res["settings"][i]:
                per_setting[i]["cost"] += cost
                per_setting[i]["nodes"] += nodes
                per_setting[i]["time"][qp] += wall

    rows = []
    for (qtskip, thm), agg in zip(settings, per_setting):
        ts = mx.time_saving(
            [anchor_time[qp] for qp in qps], [max(agg["time"][qp], 1e-12) for qp in qps]
        )
        rows.append(
            (
                thm,
                qtskip,
                f"{100.0 * (agg['cost'] - anchor_cost) / anchor_cost:.6f}",
                f"{100.0 * (1.0 - agg['nodes'] / anchor_nodes):.6f}",
                f"{ts:.4f}",
            )
        )
    mx.write_tradeoff_csv(out / "tradeoff.csv", rows)

    if log:
        thm_grid = sorted({thm for _, thm in settings})
        mx.write_accuracy_csv(out / "accuracy.csv", thm_grid, mx.candsplit_accuracy(log, thm_grid))
        mx.write_confusion_csv(out / "confusion.csv", mx.skipmt_confusion(log))
    print(f"sweep: {len(settings)} settings over {len(tasks)} CTUs x {len(qps)} QPs -> {out}")
    return 0


# ---------------------------------------------------------------------------
# the remaining commands

def cmd_extract_mvf(args) -> int:
    c = Constraints(ctu_size=args.ctu_size)
    gop = _parse_gop(args.gop)
    frames = _load_frames(args)
    out = _out_dir(args)
    _write_manifest(out, args)

    t_total = time.perf_counter()
    t_mvf = 0.0
    arrays = {}
    count = 0
    for frame, refs, _ in _plan(frames, gop):
        for origin in full_ctu_origins(frame.width, frame.height, c.ctu_size):
            t0 = time.perf_counter()
            mvf = build_msmvf(frame, refs, origin, args.search_range, c.ctu_size)
            t_mvf += time.perf_counter() - t0
            cx, cy = origin[0] // c.ctu_size, origin[1] // c.ctu_size
            for k, grid in enumerate(mvf.grids):
                arrays[f"poc{frame.poc}_cx{cx}_cy{cy}_s{k}"] = grid
            count += 1
    np.savez(out / "msmvf.npz", **arrays)
    t_total = time.perf_counter() - t_total
    share = 100.0 * t_mvf / t_total if t_total > 0 else 0.0
    with open(out / "mvf_stats.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["ctus", "mvf_seconds", "total_seconds", "mvf_share_pct"])
        wr.writerow([count, f"{t_mvf:.6f}", f"{t_total:.6f}", f"{share:.3f}"])
    print(f"extract-mvf: {count} CTUs, extraction took {share:.2f}% of command time -> {out}")
    return 0


def cmd_dataset_gen(args) -> int:
    c = Constraints(ctu_size=args.ctu_size)
    gop = _parse_gop(args.gop)
    frames = _load_frames(args)
    qps = args.qp or [22, 27, 32, 37]
    out = _out_dir(args)
    _write_manifest(out, args)
    config = {
        "input": str(args.input),
        "qps": qps,
        "gop": args.gop,
        "ctu_size": c.ctu_size,
        "search_range": args.search_range,
    }
    samples = ds.generate(
        frames, qps, gop, c, out / "dataset.mvfi",
        search_range=args.search_range, config=config,
    )
    print(f"dataset-gen: {len(samples)} samples -> {out / 'dataset.mvfi'}")
    return 0


def cmd_eval(args) -> int:
    c = Constraints(ctu_size=args.ctu_size)
    gop = _parse_gop(args.gop)
    frames = _load_frames(args)
    qps = args.qp or [32]
    thm_grid = args.thm or list(PAPER_THM_GRID)
    out = _out_dir(args)
    _write_manifest(out, args)

    pred_file = {}
    predictor = args.predictor
    if predictor.startswith("file:"):
        pred_file = load_predictions(predictor[5:])
        predictor = "file"

    log = []
    for frame, refs, _ in _plan(frames, gop):
        for origin in full_ctu_origins(frame.width, frame.height, c.ctu_size):
            ctx = CtuCostContext(frame, refs, origin, c, args.search_range)
            cx, cy = origin[0] // c.ctu_size, origin[1] // c.ctu_size
            for qp in qps:
                truth = exhaustive_search(
                    frame, refs, origin, CostModel(qp=qp), c, args.search_range, context=ctx
                )
                if predictor == "oracle":
                    noise = NoiseParams(
                        eps=args.noise_eps,
                        depth_jitter=args.depth_jitter,
                        seed=_derived_seed(args.seed, frame.poc, cx, cy),
                    )
                    pred = oracle_predict(maps_from_tree(truth.tree, c), noise)
                elif predictor == "uniform":
                    pred = uniform_predict(c)
                else:
                    pred = pred_file.get((frame.poc, cx, cy))
                    if pred is None:
                        continue
                log.extend(mx.decision_log(truth.tree, pred, thm_grid[0], c))
    if not log:
        raise QtmtError("eval produced an empty decision log")
    tables = mx.skipmt_confusion(log)
    mx.write_confusion_csv(out / "confusion.csv", tables)
    curves = mx.candsplit_accuracy(log, thm_grid)
    mx.write_accuracy_csv(out / "accuracy.csv", thm_grid, curves)
    for depth, t in enumerate(tables):
        if t.total() > 0 and (t.tp + t.fp > 0 or t.tp + t.fn > 0):
            p, r, f1 = mx.prf1(t)
            print(f"SkipMT depth {depth}: P {p:.1f} R {r:.1f} F1 {f1:.1f} (n={int(t.total())})")
    for level, accs in curves.items():
        print(f"CandSplit MT{level}: " + " ".join(f"{a:.1f}" for a in accs))
    return 0


def _read_rd_csv(path) -> list[mx.RdPoint]:
    points = []
    with open(path, newline="") as f:
        rd = csv.DictReader(f)
        if rd.fieldnames is None or "bitrate" not in rd.fieldnames or "psnr" not in rd.fieldnames:
            raise QtmtError(f"{path}: RD CSV must have bitrate,psnr columns")
        for row in rd:
            points.append(mx.RdPoint(bitrate=float(row["bitrate"]), psnr=float(row["psnr"])))
    return points


def cmd_bdrate(args) -> int:
    anchor = _read_rd_csv(args.anchor)
    test = _read_rd_csv(args.test)
    bd = mx.bd_rate(anchor, test)
    print(f"BD-rate: {bd:+.4f}%")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bdrate.csv", "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["bd_rate_pct"])
            wr.writerow([f"{bd:.6f}"])
    return 0


def cmd_loss_check(args) -> int:
    cases, ctu_size, mean_ce = read_parity(args.parity)
    if not cases:
        raise QtmtError(f"{args.parity}: no parity cases")
    worst = 0.0
    for case in cases:
        ours = mx.hybrid_loss(case.pred, case.labels, case.weights, mean_ce=mean_ce)
        worst = max(worst, abs(ours - case.loss))
    print(
        f"loss-check: {len(cases)} cases at ctu_size {ctu_size}, "
        f"max |delta| = {worst:.3e} (tol {args.tol:g})"
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "loss_check.csv", "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["cases", "max_abs_delta", "tol", "ok"])
            wr.writerow([len(cases), f"{worst:.9e}", args.tol, int(worst <= args.tol)])
    if worst > args.tol:
        print("loss-check: FAIL", file=sys.stderr)
        return 3
    return 0


COMMANDS = {
    "extract-mvf": cmd_extract_mvf,
    "search": cmd_search,
    "sweep": cmd_sweep,
    "dataset-gen": cmd_dataset_gen,
    "eval": cmd_eval,
    "bdrate": cmd_bdrate,
    "loss-check": cmd_loss_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (QtmtError, OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
