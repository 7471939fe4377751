"""Batch command-line entry points: measure, correlate, embed, train,
eval, map, propose, serve.

Every command takes --seed where randomness exists and --json for
machine-readable output; artifacts are deterministic given the seed.
Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import embed as embed_mod
from . import explore, features, genopredict, measures, stats
from .dataset import load_manifest
from .errors import DataError, NumericError
from .learn import load_model, save_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(payload: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for key, value in payload.items():
            print(f"{key}: {value}")


def cmd_measure(args) -> int:
    ds = load_manifest(args.manifest)
    params = measures.SComplexParams(r_cg=args.r_cg, delta=args.delta)
    root = Path(args.manifest).parent
    rows = []
    for s in ds.specimens:
        if s.image_path is None:
            continue
        try:
            img = measures.load_image(root / s.image_path, size=args.size)
            rec = measures.measure_all(img, params)
        except DataError as exc:
            if args.skip_bad:
                print(f"skipping {s.id}: {exc}", file=sys.stderr)
                continue
            raise
        rows.append((s.id, rec))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# r_cg={params.r_cg} delta={params.delta} size={args.size}\n")
        writer = csv.writer(fh)
        writer.writerow(["id", *measures.MEASURE_FIELDS])
        for sid, rec in rows:
            writer.writerow([sid, *[repr(v) for v in rec.as_tuple()]])
    _emit({"measured": len(rows), "out": str(args.out)}, args.json)
    return EXIT_OK


def read_measures_csv(path) -> dict[str, measures.MeasureRecord]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        plain = (line for line in fh if not line.startswith("#"))
        for row in csv.DictReader(plain):
            out[row["id"]] = measures.MeasureRecord(
                entropy=float(row["entropy"]),
                energy=float(row["energy"]),
                contours=int(row["contours"]),
                euler=int(row["euler"]),
                acomplex=float(row["acomplex"]),
                scomplex=float(row["scomplex"]),
                fdim=float(row["fdim"]),
            )
    return out


def cmd_correlate(args) -> int:
    ds = load_manifest(args.manifest)
    records = read_measures_csv(args.measures)
    excluded = {c.strip().lower() for c in (args.exclude_category or [])}
    rated = [
        s
        for s in ds.specimens
        if s.evaluation is not None and s.id in records and s.category not in excluded
    ]
    if len(rated) < 3:
        raise DataError("fewer than 3 rated specimens with measures")
    table = stats.correlation_table(
        [records[s.id] for s in rated], [s.score for s in rated]
    )
    table.to_csv(args.out)
    top = table.top_score_correlate()
    payload = {
        "n": len(rated),
        "out": str(args.out),
        "top_score_correlate": top,
        "top_score_r": table.cell(top, "score"),
        "max_p_value": float(table.p_values[np.triu_indices(len(table.labels), 1)].max()),
    }
    if args.json:
        payload["matrix"] = table.as_dict()
    _emit(payload, args.json)
    return EXIT_OK


def cmd_embed(args) -> int:
    ds = load_manifest(args.manifest)
    if args.space == "genotype":
        emb = embed_mod.embed_genotypes(ds, iterations=args.iterations, seed=args.seed)
    else:
        if not args.features:
            raise DataError("--features is required for the feature space")
        fs = features.ingest_features(args.features, ds)
        order = [s for s in ds.specimens if s.id in set(fs.ids)]
        matrix = np.stack([fs.vector(s.id) for s in order])
        emb = embed_mod.embed_features(
            matrix, [s.id for s in order], order, iterations=args.iterations, seed=args.seed
        )
    emb.to_csv(str(args.out) + ".csv")
    emb.to_json(str(args.out) + ".json")
    _emit(
        {
            "space": args.space,
            "n": len(emb.ids),
            "final_kl": emb.final_kl,
            "perplexity": emb.config.perplexity,
            "epsilon": emb.config.epsilon,
            "out": f"{args.out}.csv / {args.out}.json",
        },
        args.json,
    )
    return EXIT_OK


def cmd_train(args) -> int:
    ds = load_manifest(args.manifest)
    if args.kind == "tabular":
        config = genopredict.TabularConfig(seed=args.seed)
        model = genopredict.train_tabular(ds, config, args.target)
    else:
        if not args.features:
            raise DataError("--features is required to train the feature head")
        fs = features.ingest_features(args.features, ds)
        if args.target == "category":
            model = features.train_category_head(fs, ds, seed=args.seed)
        else:
            model = features.train_score_head(fs, ds, seed=args.seed)
    save_model(model, args.out)
    _emit(
        {
            "kind": args.kind,
            "target": args.target,
            "out": str(args.out),
            **{k: v for k, v in model.metrics.items() if not isinstance(v, (list, dict))},
        },
        args.json,
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = load_manifest(args.manifest)
    config = genopredict.TabularConfig(seed=args.seed)
    report = genopredict.compare_predictors(ds, config)
    if args.out:
        rows = genopredict.report_rows(report)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["predictor", "target", "metric", "value", "config_hash"]
            )
            writer.writeheader()
            writer.writerows(rows)
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True, default=float))
    else:
        print(f"{'predictor':<12} {'cat. accuracy':>14} {'score rmse':>12}")
        print(
            f"{'tabular':<12} {report['tabular']['category_accuracy']:>14.3f} "
            f"{report['tabular']['score_rmse']:>12.3f}"
        )
        for k, acc in report["knn"]["category_accuracy_by_k"].items():
            rmse = report["knn"]["score_rmse_by_k"][k]
            print(f"{f'knn (k={k})':<12} {acc:>14.3f} {rmse:>12.3f}")
    return EXIT_OK


def cmd_map(args) -> int:
    if args.dim_x == args.dim_y:
        print("error: --dim-x and --dim-y must differ", file=sys.stderr)
        return EXIT_USAGE
    model = load_model(args.model)
    ds = load_manifest(args.manifest)
    base = ds.get(args.base_id).genotype
    cs = explore.cross_section(
        model,
        base,
        args.dim_x,
        args.dim_y,
        [(args.lo, args.hi), (args.lo, args.hi)],
        (args.res, args.res),
    )
    cs.to_png(str(args.out) + ".png")
    cs.to_json(str(args.out) + ".json")
    _emit(
        {
            "target": cs.target,
            "resolution": f"{args.res}x{args.res}",
            "out": f"{args.out}.png / {args.out}.json",
        },
        args.json,
    )
    return EXIT_OK


def cmd_propose(args) -> int:
    ds = load_manifest(args.manifest) if args.manifest else None
    stats_out = None
    if args.strategy == "random":
        proposals = explore.propose_random(args.n, seed=args.seed)
    elif args.strategy in ("mutation", "crossover"):
        if ds is None:
            raise DataError(f"--manifest is required for {args.strategy}")
        parents = [s for s in ds.specimens if s.evaluation is not None]
        if args.strategy == "mutation":
            proposals = explore.propose_mutation(parents, args.sigma, args.n, seed=args.seed)
        else:
            proposals = explore.propose_crossover(parents, args.n, seed=args.seed)
    elif args.strategy == "montecarlo":
        if not args.model:
            raise DataError("--model is required for montecarlo")
        model = load_model(args.model)
        proposals, stats_out = explore.propose_montecarlo(
            model,
            args.n,
            min_predicted_score=args.min_score,
            seed=args.seed,
            max_attempts=args.max_attempts,
            required_category=args.require_category,
        )
    else:
        raise DataError(f"unknown strategy {args.strategy!r}")
    payload = {"proposals": [p.as_dict() for p in proposals]}
    if stats_out:
        payload["stats"] = stats_out
    Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    if args.render_dir:
        render_dir = Path(args.render_dir)
        render_dir.mkdir(parents=True, exist_ok=True)
        from PIL import Image

        gen = explore.get_generator(args.generator)
        for i, p in enumerate(proposals):
            img = gen.render(p.genotype)
            Image.fromarray(np.round(img * 255.0).astype(np.uint8)).save(
                render_dir / f"proposal_{i:04d}.png"
            )
    _emit({"strategy": args.strategy, "n": len(proposals), "out": str(args.out)}, args.json)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.data, port=args.port, generator=args.generator)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="speciescope", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="compute the seven image measures into a CSV")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--r-cg", type=int, default=5)
    p.add_argument("--delta", type=float, default=0.23)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--skip-bad", action="store_true")
    p.set_defaults(fn=cmd_measure)

    p = sub.add_parser("correlate", help="measures-vs-score correlation matrix")
    p.add_argument("manifest")
    p.add_argument("--measures", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exclude-category", action="append", default=None)
    p.set_defaults(fn=cmd_correlate)

    p = sub.add_parser("embed", help="t-SNE map of genotype or feature space")
    p.add_argument("manifest")
    p.add_argument("--space", choices=("genotype", "feature"), default="genotype")
    p.add_argument("--features")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("train", help="train a predictor and save the model file")
    p.add_argument("manifest")
    p.add_argument("--kind", choices=("tabular", "head"), default="tabular")
    p.add_argument("--target", choices=("category", "score"), default="category")
    p.add_argument("--features")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="benchmark tabular vs k-NN predictors")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("map", help="cross-section prediction map, PNG + JSON")
    p.add_argument("manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--base-id", required=True)
    p.add_argument("--dim-x", type=int, required=True)
    p.add_argument("--dim-y", type=int, required=True)
    p.add_argument("--res", type=int, default=32)
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_map)

    p = sub.add_parser("propose", help="generate a next-generation proposal batch")
    p.add_argument("--manifest")
    p.add_argument("--strategy", required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--model")
    p.add_argument("--min-score", type=float, default=5.0)
    p.add_argument("--require-category", help="montecarlo keeps candidates predicted as this label")
    p.add_argument("--max-attempts", type=int, default=10000)
    p.add_argument("--render-dir")
    p.add_argument("--generator", default="toy")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_propose)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--data")
    p.add_argument("--port", type=int)
    p.add_argument("--generator", default="toy")
    p.set_defaults(fn=cmd_serve)

    for sp in sub.choices.values():
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--json", action="store_true")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
