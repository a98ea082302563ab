"""Command-line surface for the CSD pipeline.

Every randomized subcommand logs its effective seed to stderr and embeds
derived seeds in output metadata; repeated runs with the same seed and
inputs produce byte-identical files regardless of --jobs.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .assess import (
    SvcParams,
    extract_features,
    load_model,
    merge_scores,
    predict_svc,
    save_model,
    split_dataset,
    train_svc,
    evaluate,
    FeatureVector,
)
from .betafit import fit_lc
from .csd1 import (
    block_size,
    csd1_approx,
    csd1_exact,
    detect_segments,
    aggregate_curves,
    make_scrambled_article,
)
from .csd2 import aggregate_csd2, csd2_curve
from .ingest import (
    CorpusFile,
    CorpusFormatError,
    EmbeddingFetcher,
    EmbeddingFormatError,
    ProviderError,
    load_corpus,
    load_embeddings,
    read_csd2,
    read_curve,
    save_corpus,
    save_embeddings,
    write_csd2,
    write_curve,
    write_metrics,
    PROVIDER_URL_ENV,
)

log = logging.getLogger("csdkit")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def derive_seed(base: int, *keys: int) -> int:
    """Stable 64-bit child seed for one article/size work item."""
    ss = np.random.SeedSequence([int(base), *[int(k) for k in keys]])
    return int(ss.generate_state(1, np.uint64)[0])


def _safe_name(article_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", article_id)


def _parse_fracs(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _select_articles(corpus: CorpusFile, article_id: str | None):
    if article_id is None:
        return list(corpus.articles)
    return [corpus.by_id(article_id)]


def _load_pair(args):
    """Corpus plus its embeddings; with --provider-url the embeddings file
    acts as a write-through cache and missing articles are fetched."""
    corpus = load_corpus(args.corpus)
    provider = getattr(args, "provider_url", None)
    if provider:
        fetcher = EmbeddingFetcher(provider_url=provider, cache_path=args.embeddings)
        return corpus, fetcher.fetch_corpus(corpus)
    store = load_embeddings(args.embeddings)
    return corpus, store


def _essay_label(corpus: CorpusFile, article_id: str):
    extra = corpus.extras.get(article_id, {})
    if "label" in extra:
        return float(extra["label"])
    if "rater_scores" in extra:
        return merge_scores(extra["rater_scores"])
    return None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_csd1(args) -> int:
    corpus, store = _load_pair(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_uniform, n_strat = args.blocks
    for ai, art in enumerate(_select_articles(corpus, args.article)):
        emb = store.get(art.id)
        for si, frac in enumerate(args.size_frac):
            k = block_size(frac, art.n)
            if args.exact:
                curve = csd1_exact(art, emb, k, cap=args.cap, jobs=args.jobs)
            else:
                seed = derive_seed(args.seed, ai, si)
                log.info("csd1 %s c=%g: seed=%d", art.id, frac, seed)
                curve = csd1_approx(
                    art,
                    emb,
                    k,
                    n_uniform=n_uniform,
                    n_strat=n_strat,
                    seed=seed,
                    jobs=args.jobs,
                )
            base = out_dir / f"csd1_{_safe_name(art.id)}_c{frac:g}"
            write_curve(curve, f"{base}.csv", "csv")
            write_curve(curve, f"{base}.json", "json")
            log.info("wrote %s.{csv,json} (%d points, mode=%s)", base, curve.sample_count, curve.mode)
    return 0


def cmd_csd2(args) -> int:
    corpus, store = _load_pair(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for art in _select_articles(corpus, args.article):
        curve = csd2_curve(art, store.get(art.id))
        base = out_dir / f"csd2_{_safe_name(art.id)}"
        write_csd2(curve, f"{base}.csv", "csv")
        write_csd2(curve, f"{base}.json", "json")
        log.info("wrote %s.{csv,json} (n=%d, t=%d)", base, curve.n, curve.t)
    return 0


def cmd_segments(args) -> int:
    curve = read_curve(args.curve)
    seg = detect_segments(curve)
    doc = {
        "l_end": seg.l_end,
        "r_start": seg.r_start,
        "degenerate": seg.degenerate,
        "low_confidence": seg.low_confidence,
    }
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_aggregate(args) -> int:
    if args.kind == "csd1":
        curves = [read_curve(p) for p in args.inputs]
        agg = aggregate_curves(curves, stat=args.stat)
        write_curve(agg, f"{args.out}.csv", "csv")
        write_curve(agg, f"{args.out}.json", "json")
    else:
        curves = [read_csd2(p) for p in args.inputs]
        grid = aggregate_csd2(curves, stat=args.stat)
        lines = ["x,y"]
        lines.extend(f"{x:.17g},{y:.17g}" for x, y in zip(grid.xs, grid.values))
        Path(f"{args.out}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        doc = {
            "kind": "csd2-aggregate",
            "stat": grid.stat,
            "members": grid.members,
            "values": [float(v) for v in grid.values],
        }
        Path(f"{args.out}.json").write_text(
            json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
    log.info("wrote %s.{csv,json} (%s of %d curves)", args.out, args.stat, len(args.inputs))
    return 0


def cmd_fit_beta(args) -> int:
    curve = read_curve(args.curve)
    result = fit_lc(curve)
    p = result.params
    doc = {"a": p.a, "b": p.b, "alpha": p.alpha, "beta": p.beta, "rmse": result.rmse}
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    if args.plot:
        from .plotting import render_fit

        render_fit(curve, p, args.plot)
        log.info("wrote %s", args.plot)
    print(text)
    return 0


def cmd_baseline_scramble(args) -> int:
    corpus = load_corpus(args.corpus)
    rng = np.random.default_rng(args.seed)
    log.info("baseline-scramble: seed=%d", args.seed)
    articles = []
    for i in range(args.count):
        art = make_scrambled_article(list(corpus.articles), m=args.sources, rng=rng)
        # keep ids short and unique; full provenance stays in extras
        provenance = art.id
        art = type(art)(id=f"scrambled-{args.seed}-{i}", sentences=art.sentences)
        articles.append((art, provenance))
    out = CorpusFile(
        path=str(args.out),
        articles=tuple(a for a, _ in articles),
        extras={a.id: {"sources": prov} for a, prov in articles},
    )
    save_corpus(out, args.out)
    log.info("wrote %s (%d scrambled articles)", args.out, args.count)
    return 0


def cmd_features(args) -> int:
    corpus, store = _load_pair(args)
    log.info("features: seed=%d samples=%d", args.seed, args.samples)
    sizes = tuple(args.size_frac)
    with open(args.out, "w", encoding="utf-8") as fh:
        for idx, art in enumerate(corpus.articles):
            rng = np.random.default_rng([args.seed, idx])
            fv = extract_features(
                art,
                store.get(art.id),
                n_samples=args.samples,
                sizes=sizes,
                rng=rng,
                jobs=args.jobs,
            )
            doc = {"id": art.id, "values": [float(v) for v in fv.values]}
            label = _essay_label(corpus, art.id)
            if label is not None:
                doc["label"] = label
            fh.write(json.dumps(doc) + "\n")
    log.info("wrote %s (%d essays)", args.out, len(corpus.articles))
    return 0


def _read_features(path, require_labels: bool):
    feats, labels, ids = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            feats.append(FeatureVector(values=np.array(obj["values"]), essay_id=obj["id"]))
            ids.append(obj["id"])
            if "label" in obj:
                labels.append(float(obj["label"]))
            elif require_labels:
                raise ValueError(f"{path}:{lineno}: essay {obj['id']!r} has no label")
            else:
                labels.append(None)
    if not feats:
        raise ValueError(f"{path}: no feature rows")
    return feats, labels, ids


def cmd_train(args) -> int:
    feats, labels, _ = _read_features(args.features, require_labels=True)
    params = SvcParams(
        C=args.C,
        gamma="scale" if args.gamma == "scale" else float(args.gamma),
        tol=args.tol,
        max_iter=args.max_iter,
    )

    class _Rec:
        __slots__ = ("fv", "label")

        def __init__(self, fv, label):
            self.fv = fv
            self.label = label

    records = [_Rec(f, l) for f, l in zip(feats, labels)]
    if args.train_frac >= 1.0:
        train_recs, test_recs = records, []
    else:
        rng = np.random.default_rng(args.seed)
        log.info("train: seed=%d split=%g", args.seed, args.train_frac)
        train_recs, test_recs = split_dataset(records, train_frac=args.train_frac, rng=rng)
    model = train_svc([r.fv for r in train_recs], [r.label for r in train_recs], params)
    save_model(model, args.model)
    log.info("wrote %s (%d train, %d held out)", args.model, len(train_recs), len(test_recs))
    if args.preds:
        with open(args.preds, "w", encoding="utf-8") as fh:
            for r in test_recs:
                pred = predict_svc(model, r.fv)
                fh.write(
                    json.dumps({"id": r.fv.essay_id, "pred": pred, "label": r.label}) + "\n"
                )
        log.info("wrote %s (%d held-out predictions)", args.preds, len(test_recs))
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    feats, labels, ids = _read_features(args.features, require_labels=False)
    with open(args.out, "w", encoding="utf-8") as fh:
        for fv, label, aid in zip(feats, labels, ids):
            doc = {"id": aid, "pred": predict_svc(model, fv)}
            if label is not None:
                doc["label"] = label
            fh.write(json.dumps(doc) + "\n")
    log.info("wrote %s (%d predictions)", args.out, len(feats))
    return 0


def cmd_eval(args) -> int:
    preds, labels = [], []
    with open(args.preds, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "label" not in obj:
                raise ValueError(f"{args.preds}: entry {obj.get('id')!r} has no label")
            preds.append(float(obj["pred"]))
            labels.append(float(obj["label"]))
    tolerances = [float(t) for t in args.tolerances.split(",")]
    metrics = evaluate(preds, labels, tolerances=tolerances)
    doc = {str(t): m for t, m in metrics.items()}
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.out:
        write_metrics(doc, args.out)
    print(text)
    return 0


def cmd_embed_fetch(args) -> int:
    corpus = load_corpus(args.corpus)
    fetcher = EmbeddingFetcher(
        provider_url=args.provider_url,
        cache_path=args.store,
        retries=args.retries,
        format=args.format,
    )
    missing = [
        a for a in corpus.articles
        if fetcher.store is None or a.id not in fetcher.store.matrices
    ]
    log.info("embed-fetch: %d articles, %d missing from cache", len(corpus.articles), len(missing))
    if missing:
        if args.parallel > 1:
            from .ingest import fetch_embeddings

            with ThreadPoolExecutor(max_workers=args.parallel) as pool:
                mats = list(
                    pool.map(
                        lambda a: fetch_embeddings(
                            fetcher.provider_url, a, retries=args.retries
                        ),
                        missing,
                    )
                )
            from .ingest import EmbeddingStore

            if fetcher.store is None:
                fetcher.store = EmbeddingStore(model="provider", dim=mats[0].dim)
            for mat in mats:
                fetcher.store.add(mat)
            save_embeddings(fetcher.store, args.store, format=args.format)
        else:
            for art in missing:
                fetcher.fetch(art)
    elif fetcher.store is not None:
        save_embeddings(fetcher.store, args.store, format=args.format)
    log.info("wrote %s", args.store)
    return 0


def cmd_plot_data(args) -> int:
    labels = args.labels.split(",") if args.labels else None
    if labels and len(labels) != len(args.curves):
        raise ValueError(f"{len(labels)} labels for {len(args.curves)} curves")
    names = labels or [Path(p).stem for p in args.curves]
    grid = np.arange(1, 101) / 100.0

    if args.kind == "csd1":
        curves = [read_curve(p) for p in args.curves]
        columns = [np.interp(grid, c.xs, c.ys) for c in curves]
    else:
        curves = [read_csd2(p) for p in args.curves]
        columns = []
        for c in curves:
            idx = np.clip(np.ceil(grid * c.n - 0.5), 1, c.n).astype(int)
            columns.append(c.values[idx - 1])

    header = ",".join(["x"] + names)
    lines = [header]
    for row in range(grid.size):
        vals = ",".join(f"{col[row]:.17g}" for col in columns)
        lines.append(f"{grid[row]:.17g},{vals}")
    Path(f"{args.out}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    doc = {
        "kind": args.kind,
        "x": [float(v) for v in grid],
        "series": {name: [float(v) for v in col] for name, col in zip(names, columns)},
    }
    Path(f"{args.out}.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )

    if args.kind == "csd1":
        from .plotting import render_curves

        render_curves(list(zip(names, curves)), f"{args.out}.png")
    else:
        from .plotting import render_positions

        render_positions(list(zip(names, curves)), f"{args.out}.png")
    log.info("wrote %s.{csv,json,png}", args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p, jobs=True):
    p.add_argument("--seed", type=int, default=42, help="RNG seed (default 42)")
    if jobs:
        p.add_argument(
            "--jobs",
            type=int,
            default=os.cpu_count() or 1,
            help="parallel workers (default: logical cores); never changes results",
        )


def build_parser() -> _Parser:
    parser = _Parser(
        prog="csdkit",
        description=__doc__,
        epilog=(
            "File formats: corpus and embedding JSONL, CSDE binary v1, curve JSON v1, "
            "model JSON v1; see README.md for the exact layouts."
        ),
    )
    parser.add_argument("--version", action="version", version=f"csdkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("csd1", help="CSD-1 curves for articles")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument(
        "--provider-url",
        help="fetch missing embeddings from this provider, caching into --embeddings",
    )
    p.add_argument("--article", help="single article id (default: all)")
    p.add_argument(
        "--size-frac",
        type=_parse_fracs,
        default=[0.3],
        help="comma list of block-size fractions of n (default 0.3)",
    )
    p.add_argument("--exact", action="store_true", help="force exact enumeration")
    p.add_argument(
        "--blocks",
        type=lambda s: tuple(int(x) for x in s.split("+")),
        default=(5000, 5000),
        help="uniform+stratified sample counts (default 5000+5000)",
    )
    p.add_argument("--cap", type=int, default=200_000, help="exact enumeration cap")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_csd1)

    p = sub.add_parser("csd2", help="CSD-2 sentence-position curves")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--article")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_csd2)

    p = sub.add_parser("segments", help="L/M/R boundaries of a CSD-1 curve")
    p.add_argument("--curve", required=True, help="JSON curve file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_segments)

    p = sub.add_parser("aggregate", help="mean/median of curves on a common grid")
    p.add_argument("--stat", choices=["mean", "median"], default="mean")
    p.add_argument("--kind", choices=["csd1", "csd2"], default="csd1")
    p.add_argument("--out", required=True, help="output base path (writes .csv and .json)")
    p.add_argument("inputs", nargs="+", help="JSON curve files")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("fit-beta", help="fit the transformed beta CCDF to a curve")
    p.add_argument("--curve", required=True, help="JSON curve file")
    p.add_argument("--out", help="JSON parameter file")
    p.add_argument("--plot", help="also render the overlay figure to this PNG")
    p.set_defaults(func=cmd_fit_beta)

    p = sub.add_parser("baseline-scramble", help="random-sentence baseline articles")
    p.add_argument("--corpus", required=True, help="source corpus")
    p.add_argument("--count", type=int, default=1, help="articles to generate")
    p.add_argument("--sources", type=int, default=20, help="source articles per output")
    p.add_argument("--out", required=True, help="output corpus JSONL")
    _add_common(p, jobs=False)
    p.set_defaults(func=cmd_baseline_scramble)

    p = sub.add_parser("features", help="multi-size CSD-1 feature vectors")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument(
        "--provider-url",
        help="fetch missing embeddings from this provider, caching into --embeddings",
    )
    p.add_argument("--samples", type=int, default=1000, help="uniform draws per size (default 1000)")
    p.add_argument(
        "--size-frac",
        type=_parse_fracs,
        default=list(np.arange(1, 10) / 10.0),
        help="comma list of size fractions (default 0.1..0.9)",
    )
    p.add_argument("--out", required=True, help="output features JSONL")
    _add_common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the organization classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True, help="output model JSON")
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--preds", help="write held-out predictions JSONL here")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--gamma", default="scale")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=10000)
    _add_common(p, jobs=False)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict labels with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="tolerance-banded metrics for predictions")
    p.add_argument("--preds", required=True, help="predictions JSONL with labels")
    p.add_argument("--tolerances", default="0,0.5,1")
    p.add_argument("--out", help="metrics JSON file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed-fetch", help="fetch embeddings from a provider")
    p.add_argument("--corpus", required=True)
    p.add_argument("--store", required=True, help="embedding store (cache) path")
    p.add_argument(
        "--provider-url",
        default=os.environ.get(PROVIDER_URL_ENV),
        help=f"provider base URL (default ${PROVIDER_URL_ENV})",
    )
    p.add_argument("--format", choices=["binary", "jsonl"], default="binary")
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--parallel", type=int, default=1, help="concurrent fetches")
    p.set_defaults(func=cmd_embed_fetch)

    p = sub.add_parser("plot-data", help="common-grid data plus rendered figure")
    p.add_argument("--kind", choices=["csd1", "csd2"], default="csd1")
    p.add_argument("--labels", help="comma list of series names")
    p.add_argument("--out", required=True, help="output base (writes .csv, .json, .png)")
    p.add_argument("curves", nargs="+", help="JSON curve files")
    p.set_defaults(func=cmd_plot_data)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        CorpusFormatError,
        EmbeddingFormatError,
        ProviderError,
        ValueError,
        KeyError,
        OSError,
    ) as exc:
        print(f"csdkit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
