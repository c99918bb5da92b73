"""Command-line entry point: synth, ingest, nfs, train, score, eval, dynamics.

Exit codes: 0 success, 1 invariant violation, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import dga, nfs
from .config import ConfigError, RunConfig, load_config
from .graph import (
    SECONDS_PER_DAY,
    BipartitenessError,
    EmptyGraphError,
    IngestionError,
    TemporalBipartiteGraph,
    ingest,
    preprocess,
)
from .metrics import composite_index, dynamics_many, extract_groups, report_text, write_report_csv
from .structure import StructureProfiles
from .synth import InfeasibleConfig

log = logging.getLogger("reviewnet")


class InputError(Exception):
    """Bad or missing user input (exit code 2)."""


# ------------------------------------------------------------------ helpers
def _require(path: str | Path | None, what: str) -> Path:
    if path is None:
        raise InputError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise InputError(f"missing {what}: {p}")
    return p


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig, outputs: list[str], extra: dict | None = None) -> None:
    doc = {"command": command, "config": cfg.to_dict(), "outputs": sorted(outputs)}
    doc.update(extra or {})
    _write_json(out_dir / f"manifest_{command}.json", doc)


def load_graph(path: str | Path) -> TemporalBipartiteGraph:
    doc = json.loads(_require(path, "graph artifact").read_text())
    if "graph" not in doc:
        raise InputError(f"{path} is not a graph artifact")
    return TemporalBipartiteGraph.from_dict(doc["graph"])


def load_labels(path: str | Path | None, g: TemporalBipartiteGraph) -> np.ndarray:
    """Per-reviewer labels in graph order; -1 for reviewers absent from the file."""
    p = _require(path, "labels file")
    labels = {}
    with p.open(newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                labels[row["reviewer_id"]] = int(row["label"])
            except (KeyError, ValueError) as exc:
                raise InputError(f"malformed labels file {p}: {exc}") from exc
    out = np.array([labels.get(r, -1) for r in g.reviewers], dtype=np.int64)
    if not (out >= 0).any():
        raise InputError(f"no reviewer in {p} matches the graph")
    return out


def load_profiles(path: str | Path, g: TemporalBipartiteGraph) -> StructureProfiles:
    doc = json.loads(_require(path, "profiles artifact").read_text())
    prof = StructureProfiles.from_dict(doc["profiles"])
    if len(prof) != g.n_nodes:
        raise InputError(f"profiles in {path} cover {len(prof)} nodes, graph has {g.n_nodes}")
    return prof


def _prepare(args, cfg: RunConfig, g: TemporalBipartiteGraph, labels: np.ndarray):
    from .experiment import prepare

    profiles = load_profiles(args.profiles, g) if getattr(args, "profiles", None) else None
    return prepare(g, labels, cfg, profiles)


def _labelled(labels: np.ndarray) -> np.ndarray:
    return np.flatnonzero(labels >= 0)


# ----------------------------------------------------------------- commands
def cmd_synth(args, cfg: RunConfig) -> int:
    from .synth import SynthConfig, config_dict, generate

    sc = SynthConfig(
        n_reviewers=args.reviewers, n_products=args.products, days=args.days,
        organic_rate=args.organic_rate, n_groups=args.groups, group_size=args.group_size,
        targets_per_group=args.targets, burst_window=int(args.burst_days * SECONDS_PER_DAY),
        mode=args.mode, camouflage=args.camouflage, seed=cfg.seed,
    )
    ds = generate(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "reviews.jsonl").open("w") as fh:
        ds.write_jsonl(fh)
    with (out / "labels.csv").open("w", newline="") as fh:
        ds.write_labels(fh)
    with (out / "split.csv").open("w", newline="") as fh:
        ds.write_split(fh)
    _write_manifest(out, "synth", cfg, ["reviews.jsonl", "labels.csv", "split.csv"], {"synth": config_dict(sc)})
    n_fake = sum(ds.labels.values())
    print(f"generated {ds.graph.M} reviewers ({n_fake} fake), {ds.graph.N} products, {len(ds.graph.edges)} reviews -> {out}")
    return 0


def cmd_ingest(args, cfg: RunConfig) -> int:
    src = _require(args.input, "input file")
    text = src.read_text()
    raw, report = ingest(text, fmt=args.format, time_unit=args.time_unit)
    g = preprocess(raw, cfg.min_reviews)
    _write_json(Path(args.out), {"config": cfg.to_dict(), "ingest": {
        "records": report.records, "accepted": report.accepted, "skipped": report.skipped,
        "duplicates": report.duplicates}, "graph": g.to_dict()})
    print("Dataset overview before and after preprocessing")
    print(f"{'':<10}{'before':>10}{'after':>10}")
    for name, a, b in (("reviewers", raw.M, g.M), ("products", raw.N, g.N), ("reviews", len(raw.edges), len(g.edges))):
        print(f"{name:<10}{a:>10}{b:>10}")
    if report.skipped:
        print(f"skipped {report.skipped} malformed records, dropped {report.duplicates} duplicates")
    return 0


def cmd_nfs(args, cfg: RunConfig) -> int:
    from .experiment import fit_nfs

    g = load_graph(args.graph)
    labels = load_labels(args.labels, g)
    prep = _prepare(args, cfg, g, labels)
    model, scores = fit_nfs(prep, _labelled(labels), cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "profiles.json", {"config": cfg.to_dict(), "profiles": prep.profiles.to_dict()})
    with (out / "profiles.csv").open("w", newline="") as fh:
        prep.profiles.write_csv(fh, g.node_labels())
    (out / "nfs_model.json").write_text(model.to_json() + "\n")
    with (out / "nfs_scores.csv").open("w", newline="") as fh:
        scores.write_csv(fh, g.node_labels())
    _write_manifest(out, "nfs", cfg, ["profiles.json", "profiles.csv", "nfs_model.json", "nfs_scores.csv"])
    y = labels[: g.M]
    s = scores.normalized[: g.M]
    lab = y >= 0
    print(f"t* = {model.threshold:.6f} (validation J = {model.validation_j:.4f})")
    if (y[lab] == 1).any() and (y[lab] == 0).any():
        print(f"mean S_norm fake = {s[y == 1].mean():.4f}, real = {s[y == 0].mean():.4f}")
    return 0


def _load_nfs_scores(args, cfg, prep) -> np.ndarray:
    model = nfs.NfsModel.from_json(_require(args.nfs, "NFS model").read_text())
    return nfs.score(model, nfs.assemble_features(prep.profiles, cfg.dv_source)).normalized


def cmd_train(args, cfg: RunConfig) -> int:
    from .experiment import build_input, reviewer_scores, split_reviewers

    g = load_graph(args.graph)
    labels = load_labels(args.labels, g)
    prep = _prepare(args, cfg, g, labels)
    s_norm = _load_nfs_scores(args, cfg, prep)
    split = split_reviewers(labels, cfg.train_fraction, cfg.val_fraction, cfg.seed)
    mi = build_input(prep, s_norm, cfg, cfg.ablation, cfg.seed)
    gi = mi.graph_input
    model = dga.DgaModel(cfg.dga(), gi.features.shape[1])
    y = np.clip(labels, 0, 1).astype(float)
    hist = dga.train(model, gi, dga.Targets.from_memberships(gi.n_nodes, mi.node_of, y, split.train),
                     dga.Targets.from_memberships(gi.n_nodes, mi.node_of, y, split.val))
    scores = reviewer_scores(model, mi, g.M)
    threshold = nfs.youden_threshold(scores[split.val], labels[split.val])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(model.to_json({"run_config": cfg.to_dict(), "threshold": threshold}) + "\n")
    with (out / "history.csv").open("w", newline="") as fh:
        hist.write_csv(fh)
    outputs = ["model.json", "history.csv"]
    if mi.pooled is not None:
        with (out / "supernodes.csv").open("w", newline="") as nf, (out / "superedges.csv").open("w", newline="") as ef:
            mi.pooled.write_csv(nf, ef)
        outputs += ["supernodes.csv", "superedges.csv"]
        print(f"pooled {g.n_nodes} nodes into {mi.pooled.n_nodes} supernodes and {mi.pooled.n_edges} superedges")
    _write_manifest(out, "train", cfg, outputs, {"split": {k: getattr(split, k).tolist() for k in ("train", "val", "test")}})
    print(f"trained {cfg.ablation} for {len(hist.train_loss)} epochs; best validation loss "
          f"{hist.val_loss[hist.best_epoch]:.4f} at epoch {hist.best_epoch}; threshold {threshold:.4f}")
    return 0


def cmd_score(args, cfg: RunConfig) -> int:
    from .experiment import build_input, reviewer_scores

    g = load_graph(args.graph)
    text = _require(args.model, "model checkpoint").read_text()
    model = dga.DgaModel.from_json(text)
    cfg = cfg.replace(ablation=model.config.ablation)
    labels = np.full(g.M, -1, dtype=np.int64)
    prep = _prepare(args, cfg, g, labels)
    s_norm = _load_nfs_scores(args, cfg, prep)
    mi = build_input(prep, s_norm, cfg, model.config.ablation, model.config.seed)
    scores = reviewer_scores(model, mi, g.M)
    threshold = args.threshold if args.threshold is not None else json.loads(text).get("threshold", 0.5)
    suspicious = scores >= threshold
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        fh.write("reviewer_id,score,label\n")
        for r, s, flag in zip(g.reviewers, scores, suspicious):
            fh.write(f"{r},{s:.12g},{nfs.SUSPICIOUS if flag else nfs.NORMAL}\n")
    groups = extract_groups(g, scores, suspicious, cfg.min_spam)
    if args.groups:
        gp = Path(args.groups)
        with gp.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "size", "mean_score", "flagged", "members"])
            for i, grp in enumerate(groups):
                w.writerow([i, len(grp.members), f"{grp.mean_score:.6f}", int(grp.flagged),
                            " ".join(g.reviewers[m] for m in grp.members)])
    _write_manifest(out.parent, "score", cfg, [out.name] + ([Path(args.groups).name] if args.groups else []),
                    {"threshold": threshold})
    print(f"scored {g.M} reviewers; {int(suspicious.sum())} suspicious; "
          f"{sum(grp.flagged for grp in groups)} of {len(groups)} groups flagged (MINSPAM {cfg.min_spam})")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    from .experiment import run_ablation

    g = load_graph(args.graph)
    labels = load_labels(args.labels, g)
    prep = _prepare(args, cfg, g, labels)
    variants = [dga.resolve_ablation(v.strip()) for v in args.ablation.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    run = run_ablation(prep, variants, cfg, seeds)
    rows = run.rows()
    if not args.by_scale:
        rows = [r for r in rows if r[1] == "all"]
    text = report_text(rows)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", newline="") as fh:
            write_report_csv(fh, rows)
        out.with_suffix(".txt").write_text(text)
        _write_manifest(out.parent, "eval", cfg, [out.name, out.with_suffix(".txt").name],
                        {"variants": variants, "seeds": seeds})
    return 0


def cmd_dynamics(args, cfg: RunConfig) -> int:
    if args.components:
        for spec in args.components:
            vals = [float(x) for x in spec.split(",")]
            if len(vals) != 4:
                raise InputError("--components takes four comma-separated values")
            print(f"components {vals} -> D = {composite_index(vals):.4f}")
        return 0
    if not args.graphs:
        raise InputError("give graph artifacts or --components")
    from .experiment import windowing_for

    graphs = [load_graph(p) for p in args.graphs]
    reports = dynamics_many(graphs, [windowing_for(g, cfg) for g in graphs])
    for path, rep in zip(args.graphs, reports):
        print(f"== {path}")
        print(rep.to_text())
    return 0


# ------------------------------------------------------------------ parser
def _kv(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected key=value")
    k, v = text.split("=", 1)
    try:
        return k.strip(), json.loads(v)
    except json.JSONDecodeError:
        return k.strip(), v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reviewnet", description="Fake-reviewer detection on temporal review graphs.")
    p.add_argument("--config", help="TOML or JSON run configuration")
    p.add_argument("--set", action="append", type=_kv, default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable; wins over the file)")
    p.add_argument("--seed", type=int, help="shortcut for --set seed=N")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a labelled synthetic benchmark")
    s.add_argument("--out", required=True)
    s.add_argument("--reviewers", type=int, default=2000)
    s.add_argument("--products", type=int, default=400)
    s.add_argument("--days", type=int, default=60)
    s.add_argument("--organic-rate", type=float, default=0.1)
    s.add_argument("--groups", type=int, default=5)
    s.add_argument("--group-size", type=int, default=10)
    s.add_argument("--targets", type=int, default=3)
    s.add_argument("--burst-days", type=float, default=2.0)
    s.add_argument("--mode", choices=("star_burst", "ring", "mixed"), default="mixed")
    s.add_argument("--camouflage", type=int, default=2)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="ingest and preprocess review records")
    s.add_argument("input")
    s.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    s.add_argument("--time-unit", choices=("s", "day"), default="s")
    s.add_argument("--min-reviews", type=int)
    s.add_argument("--out", required=True, help="graph artifact (JSON)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("nfs", help="structure profiles and NFS scores")
    s.add_argument("graph")
    s.add_argument("--labels")
    s.add_argument("--profiles", help="reuse a profiles.json from an earlier run")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_nfs)

    s = sub.add_parser("train", help="pool the graph and train the attention network")
    s.add_argument("graph")
    s.add_argument("--labels")
    s.add_argument("--nfs", help="nfs_model.json")
    s.add_argument("--profiles")
    s.add_argument("--ablation")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("score", help="score reviewers with a trained model and extract groups")
    s.add_argument("graph")
    s.add_argument("--model")
    s.add_argument("--nfs")
    s.add_argument("--profiles")
    s.add_argument("--threshold", type=float, help="default: the validation threshold stored at training time")
    s.add_argument("--groups", help="write suspicious groups CSV here")
    s.add_argument("--out", required=True, help="scores CSV")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("eval", help="train and compare variants on a labelled graph")
    s.add_argument("graph")
    s.add_argument("--labels")
    s.add_argument("--profiles")
    s.add_argument("--ablation", default="full", help="comma list from full,A,B,C,D,N (N = no attention)")
    s.add_argument("--by-scale", action="store_true", help="add small/medium/large product-scale rows")
    s.add_argument("--seeds", help="comma list of seeds (default: config seed)")
    s.add_argument("--out", help="report CSV (a .txt table is written beside it)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("dynamics", help="data-dynamics indicators and composite index")
    s.add_argument("graphs", nargs="*")
    s.add_argument("--components", action="append", help="four normalized components r,c,u,B")
    s.set_defaults(func=cmd_dynamics)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = dict(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "min_reviews", None) is not None:
        overrides["min_reviews"] = args.min_reviews
    if getattr(args, "ablation", None) and args.command == "train":
        overrides["ablation"] = args.ablation
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config, overrides)
        code = args.func(args, cfg)
    except (InputError, ConfigError, IngestionError, EmptyGraphError, FileNotFoundError,
            json.JSONDecodeError, nfs.FitError, InfeasibleConfig) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BipartitenessError, dga.DivergenceError, AssertionError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
