"""Command line entry point: ``poiforge <subcommand> ...``.

Exit codes: 0 on success, 2 when an input (file, flag or config value)
fails validation.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .embed import load_embeddings, save_embeddings
from .evaluate import evaluate, write_pairs_csv, write_report
from .geojson_io import emit_geojson, load_polygons
from .model import InputError, PipelineConfig, load_config, save_config
from .osm_correct import correct, load_osm
from .pipeline import (STAGE_ORDER, ZONES, StageError, build_zone_stats, clusters_jsonl,
                       file_digest, ingest_addresses, preprocess_addresses,
                       reference_embeddings, run_pipeline)
from .preprocess import CorpusStats, build_corpus_stats, load_locality_dir
from .synth import SynthSpec, generate_city, write_city

log = logging.getLogger("poiforge")


# --- config flags ---------------------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline config (overrides --config)")
    for f in dataclasses.fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        default = f.default
        if isinstance(default, bool):
            g.add_argument(flag, dest=f"cfg_{f.name}", default=None,
                           type=lambda s: s.lower() in ("1", "true", "yes"), metavar="BOOL")
        elif isinstance(default, tuple):
            kind = str if default and isinstance(default[0], str) else int
            g.add_argument(flag, dest=f"cfg_{f.name}", default=None, nargs="+", type=kind)
        else:
            g.add_argument(flag, dest=f"cfg_{f.name}", default=None, type=type(default))


def _config(args) -> PipelineConfig:
    base = load_config(args.config) if args.config else PipelineConfig()
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if not overrides:
        return base
    data = base.to_dict()
    data.update(overrides)
    return PipelineConfig.from_dict(data)


def _common(p: argparse.ArgumentParser, addresses: bool = True) -> None:
    p.add_argument("--config", help="JSON file of config overrides")
    p.add_argument("--out", required=True, help="output directory")
    if addresses:
        p.add_argument("--addresses", required=True, help="CSV: address_id,lat,lng,text[,city]")
        p.add_argument("--localities",
                       help="directory of <city>.localities.txt / <city>.topwords.txt "
                            "(default: the addresses file's directory)")
        p.add_argument("--stats", help="corpus stats JSON from stats-build")
        p.add_argument("--zone", choices=ZONES, default="single",
                       help="one corpus for all addresses, or one per city")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_localities(args):
    folder = args.localities or str(Path(args.addresses).parent)
    if args.localities and not Path(folder).is_dir():
        raise InputError(f"localities directory {folder} does not exist")
    return load_locality_dir(folder)


def _stats(args, addresses, cfg: PipelineConfig):
    """One CorpusStats, or zone key -> CorpusStats under ``--zone city``."""
    if getattr(args, "stats", None):
        if args.zone != "single":
            raise InputError("--stats holds a single corpus; use it with --zone single")
        try:
            return CorpusStats.load(args.stats)
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot read stats {args.stats}: {exc}") from exc
    localities, top_words = _load_localities(args)
    if args.zone == "single":
        return build_corpus_stats(addresses, localities, cfg.bigram_min_count,
                                  cfg.top_words_count, top_words)
    return build_zone_stats(addresses, args.zone, cfg, localities, top_words)


# --- subcommands ---------------------------------------------------------------------------

def cmd_stats_build(args) -> None:
    cfg = _config(args)
    addresses = ingest_addresses(args.addresses)
    stats = _stats(args, addresses, cfg)
    out = _out_dir(args)
    if isinstance(stats, CorpusStats):
        stats.save(out / "stats.json")
    else:
        for key, s in stats.items():
            s.save(out / f"stats.{key or 'default'}.json")


def cmd_preprocess(args) -> None:
    cfg = _config(args)
    addresses = ingest_addresses(args.addresses)
    preprocess_addresses(addresses, _stats(args, addresses, cfg), args.zone)
    with open(_out_dir(args) / "preprocessed.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["address_id", "clean_text", "mined_text"])
        for a in sorted(addresses, key=lambda r: r.address_id):
            w.writerow([a.address_id, a.clean_text, a.mined_text])


def cmd_embed(args) -> None:
    cfg = _config(args)
    addresses = ingest_addresses(args.addresses)
    preprocess_addresses(addresses, _stats(args, addresses, cfg), args.zone)
    save_embeddings(reference_embeddings(addresses, cfg.embedding_dim),
                    _out_dir(args) / "embeddings.jsonl")


def _inputs(args) -> dict:
    out = {}
    for name in ("addresses", "embeddings", "osm", "gt", "stats"):
        path = getattr(args, name, None)
        if path:
            out[name] = file_digest(path)
    return out


def _run(args, osm_on: bool, gt_on: bool) -> None:
    cfg = _config(args)
    addresses = ingest_addresses(args.addresses)
    stats = _stats(args, addresses, cfg)
    store = load_embeddings(args.embeddings, cfg.embedding_dim) if args.embeddings else None
    osm = load_osm(args.osm) if osm_on and getattr(args, "osm", None) else None
    gt = load_polygons(args.gt) if gt_on and getattr(args, "gt", None) else None
    result = run_pipeline(addresses, cfg, stats=stats, embeddings=store, osm=osm, gt=gt,
                          workers=args.workers, stage_through=args.stage_through,
                          with_baseline=args.baseline, inputs=_inputs(args), zone=args.zone)
    out = _out_dir(args)
    save_config(cfg, out / "config.json")
    result.manifest.write(out / "manifest.json")
    if STAGE_ORDER.index(args.stage_through) < STAGE_ORDER.index("polygon"):
        for stage in ("homogeneous", "dbscan", "merge"):
            if stage in result.clusters and result.clusters[stage]:
                (out / f"clusters_{stage}.jsonl").write_text(clusters_jsonl(result.clusters[stage]),
                                                             encoding="utf-8")
        return
    emit_geojson(result.polygons, out / "polygons.geojson")
    if result.corrected is not None:
        emit_geojson(result.corrected, out / "polygons_osm.geojson")
    if args.baseline:
        emit_geojson(result.baseline, out / "baseline.geojson")
    if result.report is not None:
        write_report(result.report, out / "metrics.json")
        write_pairs_csv(result.report, out / "pairs.csv")


def cmd_mine(args) -> None:
    _run(args, osm_on=False, gt_on=False)


def cmd_run(args) -> None:
    _run(args, osm_on=True, gt_on=True)


def cmd_osm_correct(args) -> None:
    cfg = _config(args)
    polys = load_polygons(args.polygons)
    layer = load_osm(args.osm)
    if layer.skipped:
        log.warning("skipped %d OSM features without usable geometry", layer.skipped)
    emit_geojson([correct(p, layer, cfg) for p in polys], _out_dir(args) / "polygons_osm.geojson")


def cmd_evaluate(args) -> None:
    report = evaluate(load_polygons(args.polygons), load_polygons(args.gt))
    out = _out_dir(args)
    write_report(report, out / "metrics.json")
    write_pairs_csv(report, out / "pairs.csv")
    print(json.dumps({"median_precision": report.to_dict()["median_precision"],
                      "median_recall": report.to_dict()["median_recall"],
                      "median_f": report.to_dict()["median_f"], **report.counts}, sort_keys=True))


def cmd_synth(args) -> None:
    spec = SynthSpec(seed=args.seed, n_pois=args.n_pois, gps_noise_sigma_m=args.noise,
                     spell_variant_rate=args.variants, outlier_rate=args.outlier_rate,
                     leak_rate=args.leak_rate)
    write_city(generate_city(spec), _out_dir(args))


# --- parser ---------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poiforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats-build", help="count tokens, bigrams and stop words")
    _common(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_stats_build)

    p = sub.add_parser("preprocess", help="write cleaned and mined address texts")
    _common(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("embed", help="reference embeddings of the mined texts (JSON Lines)")
    _common(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_embed)

    for name, func, help_ in (("mine", cmd_mine, "mine PoI polygons"),
                              ("run", cmd_run, "mine, optionally OSM-correct and evaluate")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--embeddings", help="JSON Lines embeddings (default: reference embedder)")
        if name == "run":
            p.add_argument("--osm", help="OSM GeoJSON (buildings and highway lines)")
            p.add_argument("--gt", help="ground-truth polygons GeoJSON")
        p.add_argument("--workers", type=int, default=None,
                       help="threads over bins (capped by POIFORGE_THREADS)")
        p.add_argument("--stage-through", choices=STAGE_ORDER, default="evaluate")
        p.add_argument("--baseline", action="store_true",
                       help="also emit location-only baseline polygons")
        _add_config_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("osm-correct", help="correct polygons with an OSM layer")
    _common(p, addresses=False)
    p.add_argument("--polygons", required=True)
    p.add_argument("--osm", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_osm_correct)

    p = sub.add_parser("evaluate", help="area precision / recall against ground truth")
    p.add_argument("--polygons", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="write a seeded synthetic city")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-pois", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.0, help="GPS noise sigma in metres")
    p.add_argument("--variants", type=float, default=0.0, help="spell variant rate")
    p.add_argument("--outlier-rate", type=float, default=0.0)
    p.add_argument("--leak-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except InputError as exc:
        print(f"poiforge: error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"poiforge: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
