"""Command-line entry point: ``coaff <stage> [options]``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from coaff.config import ConfigError, load_config
from coaff.gravity.likelihood import NumericalError
from coaff.impact import ImpactError
from coaff.ingest import DataError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("coaff")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="YAML/JSON run configuration")
    p.add_argument("--publications", help="publications file (.jsonl or .csv)")
    p.add_argument("--registry", help="affiliation registry (.csv)")
    p.add_argument("--travel-times", dest="travel_times", help="routed pair durations (.csv)")
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--dataset", choices=("all", "stable", "both"))
    p.add_argument("--model", choices=("M1", "M2", "both"))
    p.add_argument("--schemes", help="comma-separated subset of AA,FA,LA")
    p.add_argument("--thresholds", help="comma-separated minimum publication counts")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--mass", choices=("articles", "strength"))
    p.add_argument("--include-other", dest="include_other", action="store_true", default=None,
                   help="keep 'other'-type organisations in graph exports")
    p.add_argument("--fallback-speed", dest="fallback_speed", type=float, help="km/h")
    p.add_argument("--floor-seconds", dest="floor_seconds", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-timestamp", dest="timestamp", action="store_false", default=None)
    p.add_argument("--no-figures", dest="figures", action="store_false", default=None)
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coaff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("validate", "check inputs against the registry"),
        ("links", "write CoAffAll / CoAffStable link files"),
        ("network", "export organisation networks"),
        ("gravity", "fit ZINB gravity models"),
        ("impact", "citation impact scores, series and rankings"),
        ("report", "run every stage, render figures, write a manifest"),
    ]:
        _common(sub.add_parser(name, help=help_))
    syn = sub.add_parser("synth", help="write a seeded synthetic input set")
    syn.add_argument("directory")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--orgs", type=int, default=40)
    syn.add_argument("--authors", type=int, default=300)
    syn.add_argument("--pubs", type=int, default=1500)
    return parser


_CONFIG_KEYS = ("publications", "registry", "travel_times", "output", "dataset", "model",
                "schemes", "thresholds", "top_k", "mass", "include_other", "fallback_speed",
                "floor_seconds", "max_iter", "workers", "timestamp", "figures")


def _synth(args) -> int:
    from coaff.geo import write_travel_times
    from coaff.ingest import write_publications, write_registry
    from coaff.synthetic import make_corpus

    out = Path(args.directory)
    out.mkdir(parents=True, exist_ok=True)
    corpus = make_corpus(args.orgs, args.authors, args.pubs, seed=args.seed)
    write_publications(corpus.publications, out / "publications.jsonl")
    write_registry(corpus.registry, out / "registry.csv")
    write_travel_times(corpus.travel_times, out / "travel_times.csv")
    print(f"wrote {len(corpus.publications)} publications to {out}")
    return EXIT_OK


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "synth":
        return _synth(args)

    from coaff import pipeline

    try:
        overrides = {k: getattr(args, k) for k in _CONFIG_KEYS}
        cfg = load_config(args.config, overrides)
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "validate":
            report = pipeline.run_validate(cfg)
            print(report.summary())
            return EXIT_OK if report.ok else EXIT_DATA
        if args.command == "links":
            print(pipeline.summary_line(pipeline.run_links(cfg)))
        elif args.command == "network":
            for ds, net in pipeline.run_network(cfg).items():
                print(f"{ds}: {len(net.nodes)} organisations, {len(net.edges)} edges, "
                      f"universe {len(net.universe())}")
        elif args.command == "gravity":
            for (ds, model), fit in pipeline.run_gravity(cfg).items():
                print(f"{ds} {model}: N={fit.n} lnL={fit.loglik:.4f} "
                      f"AIC={fit.aic:.2f} BIC={fit.bic:.2f}")
        elif args.command == "impact":
            res = pipeline.run_impact(cfg)
            print(f"{len(res.scores)} unit scores, {len(res.series)} annual points")
        elif args.command == "report":
            manifest = pipeline.run_report(cfg)
            print(f"report written to {cfg.outdir} ({len(manifest['outputs'])} tables, "
                  f"{len(manifest['figures'])} figures)")
    except (DataError, ImpactError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
