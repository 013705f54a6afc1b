"""Command-line interface (``viewsynth``).

Every subcommand is deterministic given its flags: randomness comes only from
explicit ``--seed`` values and outputs carry no timestamps.  Exit codes: 0 on
success, 2 on argument errors, 3 on unreadable or inconsistent files.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import ViewSet
from .errors import ArgumentError, EstimationError, FormatError
from .features import extract_view_features, read_pgm, write_pgm
from .pose import DEFAULT_VOTES, estimate_pose
from .retrieval import (LabeledImageSet, LabeledItem, evaluate_rankings, part_related_patches,
                        run_retrieval, transferability_matrix, vad)
from .surrogate import Threshold, TopK, build_table
from .synthesis import SynthesizedDescriptor, synthesize_descriptor
from .synthgen import (RenderSpec, build_synthetic_collection, render, sample_shapes)
from .vocabulary import quantize_collection, sample_features, train_codebook

log = logging.getLogger("viewsynth")

VOCAB_FILE = "vocabulary.vocb"
TABLE_FILE = "table.sstb"


def _fmt(x: float) -> str:
    return repr(float(x))


def _selection(args):
    if args.tau is not None:
        return Threshold(args.tau)
    return TopK(args.kp)


def _add_synthesis_flags(p):
    p.add_argument("--k", type=int, default=None, help="neighborhood size (default: manifest, 200)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--kp", type=int, default=None, help="top-k surrogate patches (default 9)")
    group.add_argument("--tau", type=float, default=None,
                       help="threshold on exp(gamma) instead of top-k")
    p.add_argument("--pose", default="auto", help="'auto' or a view index to force")
    p.add_argument("--votes", type=int, default=DEFAULT_VOTES, help="pose voting neighbors")


def _resolve_defaults(args, manifest):
    if args.k is None:
        args.k = int(manifest.defaults.get("k", 200))
    if args.kp is None:
        args.kp = int(manifest.defaults.get("kp", 9))


def _parse_pose(value: str, V: int):
    if value == "auto":
        return None
    try:
        view = int(value)
    except ValueError:
        raise ArgumentError(f"--pose must be 'auto' or a view index, got {value!r}") from None
    if not 0 <= view < V:
        raise ArgumentError(f"--pose {view} outside [0, {V})")
    return view


def _load_full(directory):
    collection, manifest, labels = io.load_collection(directory)
    table = io.load_table(directory, manifest)
    return collection, manifest, table


def _synthesize_file(path, collection, table, args, forced_view):
    feats = extract_view_features(read_pgm(path), collection.grid)
    view = forced_view
    if view is None:
        pose = estimate_pose(collection, feats, args.votes)
        view = pose.view
        log.info("%s: estimated pose view %d (margin %.6g)", path, view, pose.score)
    return synthesize_descriptor(collection, table, feats, view, _selection(args), args.k)


def _read_list(path) -> list[Path]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read query list {path}: {exc}") from exc
    entries = [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if len(entries) < 2:
        raise ArgumentError("a query list needs at least two images")
    return [(path.parent / e) if not Path(e).is_absolute() else Path(e) for e in entries]


def _parse_region(text: str) -> set[int]:
    out = set()
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        try:
            out.add(int(tok[1:] if tok.startswith("g") else tok))
        except ValueError:
            raise ArgumentError(f"bad patch {tok!r} in --region") from None
    if not out:
        raise ArgumentError("--region selects no patches")
    return out


def _write_rankings(path, rankings):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["query", "rank", "candidate", "distance"])
        for q, r, c, d in rankings:
            w.writerow([q, r, c, _fmt(d)])


def _read_rankings(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh, delimiter="\t"))
        return [(r["query"], int(r["rank"]), r["candidate"], float(r["distance"])) for r in rows]
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"cannot read rankings {path}: {exc}") from exc


def _write_pr(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recall", "precision"])
        for r, p in curve.points:
            w.writerow([_fmt(r), _fmt(p)])


def _query_items(paths, collection, table, args, labels=None):
    forced = _parse_pose(args.pose, collection.V)
    items = []
    for p in paths:
        d = _synthesize_file(p, collection, table, args, forced)
        qid = p.stem
        lab = (labels or {}).get(qid) or frozenset([qid])
        items.append(LabeledItem(qid, d, lab))
    return LabeledImageSet(items)


def _retrieve(image_set, table, args):
    if args.distance != "part":
        return run_retrieval(image_set, args.distance)
    if not args.region:
        raise ArgumentError("--distance part needs --region")
    region = _parse_region(args.region)
    sel = _selection(args)
    related = {}
    for i, it in enumerate(image_set.items):
        related[i] = part_related_patches(table, it.descriptor.observed_view, region, sel)
    return run_retrieval(image_set, "part", related=related.__getitem__)


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_synthetic(args):
    spec = RenderSpec(ViewSet.uniform(args.views))
    s = build_synthetic_collection(args.n, args.family, spec, args.seed)
    out = Path(args.out)
    io.save_collection(out, s.collection, s.labels, name=f"{args.family}-s{args.seed}",
                       seeds={"gen": args.seed})
    if args.queries:
        qdir = out / "queries"
        qdir.mkdir(exist_ok=True)
        known = {np.packbits(sh.occupancy).tobytes() for sh in s.shapes}
        pool = sample_shapes(args.queries + len(s.shapes), args.family, args.seed + 1)
        fresh = [sh for sh in pool if np.packbits(sh.occupancy).tobytes() not in known]
        rng = np.random.default_rng(args.seed + 2)
        names, labels, views = [], {}, []
        for i, sh in enumerate(fresh[:args.queries]):
            v = int(rng.integers(spec.view_set.count))
            name = f"query-{i:04d}"
            write_pgm(qdir / f"{name}.pgm", render(sh, spec, v))
            names.append(f"{name}.pgm")
            labels[name] = {sh.label}
            views.append((name, v))
        (qdir / "list.txt").write_text("".join(n + "\n" for n in names))
        io.write_labels(qdir / "labels.csv", labels)
        with open(qdir / "views.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "view"])
            w.writerows(views)
    print(f"wrote {args.n} shapes x {args.views} views to {out}")


def cmd_build_vocab(args):
    collection, manifest, _ = io.load_collection(args.collection)
    samples = sample_features(collection, cap=args.sample_cap, seed=args.seed)
    cb = train_codebook(samples, W=args.words, seed=args.seed)
    io.write_vocb(Path(args.collection) / VOCAB_FILE, cb.centers)
    manifest.vocabulary = VOCAB_FILE
    manifest.W = args.words
    manifest.defaults["W"] = args.words
    manifest.seeds["vocab"] = args.seed
    manifest.table = None  # any old table belongs to the old codebook
    manifest.save(args.collection)
    print(f"trained {args.words}-word codebook")


def cmd_build_suitability(args):
    collection, manifest, _ = io.load_collection(args.collection)
    cb = io.load_codebook(args.collection, manifest)
    table = build_table(quantize_collection(collection, cb))
    io.write_sstb(Path(args.collection) / TABLE_FILE, table.gamma)
    manifest.table = TABLE_FILE
    manifest.save(args.collection)
    defined = np.isfinite(table.gamma).mean()
    print(f"suitability table {table.gamma.shape}, {defined:.3f} of entries defined")


def cmd_synthesize(args):
    collection, manifest, table = _load_full(args.collection)
    _resolve_defaults(args, manifest)
    forced = _parse_pose(args.pose, collection.V)
    d = _synthesize_file(args.image, collection, table, args, forced)
    io.write_mvft(args.out, d.data[None])
    print(f"observed view {d.observed_view}")


def _load_descriptor(path) -> SynthesizedDescriptor:
    data = io.read_mvft(path)
    if data.shape[0] != 1:
        raise FormatError(f"{path}: expected a single-shape descriptor, got {data.shape[0]}")
    return SynthesizedDescriptor(data[0])


def cmd_vad(args):
    a, b = _load_descriptor(args.a), _load_descriptor(args.b)
    if a.shape != b.shape:
        raise FormatError(f"descriptor dims differ: {a.shape} vs {b.shape}")
    print(_fmt(vad(a, b)))


def cmd_retrieve(args):
    collection, manifest, table = _load_full(args.collection)
    _resolve_defaults(args, manifest)
    labels = io.read_labels(args.labels) if args.labels else None
    items = _query_items(_read_list(args.queries), collection, table, args, labels)
    result = _retrieve(items, table, args)
    out = Path(args.report)
    out.mkdir(parents=True, exist_ok=True)
    _write_rankings(out / "rankings.tsv", result.rankings)
    if labels and result.curve is not None:
        _write_pr(out / "pr.csv", result.curve)
        print(f"AUC {_fmt(result.curve.auc)}")
    print(f"rankings for {len(items.items)} queries in {out / 'rankings.tsv'}")


def cmd_eval_retrieval(args):
    rankings = _read_rankings(args.rankings)
    labels = io.read_labels(args.labels)
    curve = evaluate_rankings(rankings, labels)
    out = Path(args.out) if args.out else Path(args.rankings).with_name("pr.csv")
    _write_pr(out, curve)
    print(f"AUC {_fmt(curve.auc)}")


def cmd_transferability(args):
    collection, _, _ = io.load_collection(args.collection)
    shapes = range(min(args.shapes, collection.N)) if args.shapes else None
    m = transferability_matrix(collection, args.k, shapes)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_view"] + [f"v{j}" for j in range(collection.V)])
        for i, row in enumerate(m.avg_rank):
            w.writerow([i] + [_fmt(x) for x in row])
    print(f"mean rank {_fmt(m.mean)}, diagonal mean {_fmt(m.diagonal_mean)}")


def cmd_sweep(args):
    collection, manifest, _ = io.load_collection(args.collection)
    _resolve_defaults(args, manifest)
    labels = io.read_labels(args.labels)
    paths = _read_list(args.queries)
    values = [v for v in args.values.split(",") if v.strip()]
    if not values:
        raise ArgumentError("--values is empty")
    W = manifest.W or int(manifest.defaults.get("W", 256))
    vocab_seed = int(manifest.seeds.get("vocab", args.seed))
    tables = {}

    def table_for(words):
        if words not in tables:
            if words == manifest.W and manifest.table:
                tables[words] = io.load_table(args.collection, manifest)
            else:
                cb = train_codebook(sample_features(collection, seed=vocab_seed), W=words,
                                    seed=vocab_seed)
                tables[words] = build_table(quantize_collection(collection, cb))
        return tables[words]

    feats = [extract_view_features(read_pgm(p), collection.grid) for p in paths]
    forced = _parse_pose(args.pose, collection.V)
    views = [forced if forced is not None else estimate_pose(collection, f, args.votes).view
             for f in feats]
    rows = []
    for raw in values:
        try:
            value = float(raw) if args.param == "tau" else int(raw)
        except ValueError:
            raise ArgumentError(f"bad sweep value {raw!r}") from None
        k, words = args.k, W
        sel = _selection(args)
        if args.param == "k":
            k = value
        elif args.param == "kp":
            sel = TopK(value)
        elif args.param == "tau":
            sel = Threshold(value)
        else:
            words = value
        table = table_for(words)
        items = []
        for p, f, v in zip(paths, feats, views):
            d = synthesize_descriptor(collection, table, f, v, sel, k)
            items.append(LabeledItem(p.stem, d, labels.get(p.stem) or frozenset([p.stem])))
        curve = run_retrieval(LabeledImageSet(items), args.distance, keep_rankings=False).curve
        rows.append((args.param, raw.strip(), _fmt(curve.auc)))
        log.info("%s=%s AUC %s", args.param, raw.strip(), rows[-1][2])
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "value", "auc"])
        w.writerows(rows)
    for r in rows:
        print(",".join(r))


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viewsynth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="render a synthetic shape collection")
    p.add_argument("--family", default="chairlike", choices=["chairlike", "tablelike", "mixed"])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--views", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--queries", type=int, default=0,
                   help="also render this many held-out query images")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("build-vocab", help="train the visual-word codebook")
    p.add_argument("--collection", required=True)
    p.add_argument("--words", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-cap", type=int, default=100_000)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("build-suitability", help="estimate the surrogate suitability table")
    p.add_argument("--collection", required=True)
    p.set_defaults(func=cmd_build_suitability)

    p = sub.add_parser("synthesize", help="synthesize the multi-view descriptor of one image")
    p.add_argument("--collection", required=True)
    p.add_argument("--image", required=True)
    _add_synthesis_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("vad", help="view-agnostic distance between two descriptors")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_vad)

    p = sub.add_parser("retrieve", help="rank a query set against itself")
    p.add_argument("--collection", required=True)
    p.add_argument("--queries", required=True, help="text file with one image path per line")
    p.add_argument("--distance", default="vad", choices=["vad", "baseline", "part"])
    p.add_argument("--region", default=None, help="patches on the observed view, e.g. g3,g4,g9")
    p.add_argument("--labels", default=None, help="optional labels CSV for a PR curve")
    _add_synthesis_flags(p)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval-retrieval", help="PR curve and AUC of stored rankings")
    p.add_argument("--rankings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval_retrieval)

    p = sub.add_parser("transferability", help="weight transferability matrix")
    p.add_argument("--collection", required=True)
    p.add_argument("--k", type=int, default=200)
    p.add_argument("--shapes", type=int, default=0, help="use only the first N shapes as subjects")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transferability)

    p = sub.add_parser("sweep", help="retrieval AUC as one parameter varies")
    p.add_argument("--collection", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--param", required=True, choices=["k", "kp", "tau", "words"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--distance", default="vad", choices=["vad", "baseline"])
    p.add_argument("--seed", type=int, default=0, help="codebook seed when the manifest has none")
    _add_synthesis_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ArgumentError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
