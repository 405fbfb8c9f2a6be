"""Pipeline stages behind the CLI subcommands.

Every stage reads its inputs from the configured files or from the output
directory of an earlier stage, and writes delimited tables whose first
lines are ``#`` provenance headers (config fingerprint, optional timestamp).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from coaff.config import RunConfig
from coaff.geo import Impedance, load_travel_times
from coaff.gravity.design import build_design
from coaff.gravity.fit import FitOptions, ZinbFit, fit_gravity, report_rows, significance
from coaff.impact import (
    annual_series,
    build_refsets,
    credits,
    ranked_units,
    unit_scores,
    weighted_pr,
)
from coaff.ingest import (
    DataError,
    count_multi_affiliated,
    load_publications,
    load_registry,
    validate,
)
from coaff.linkgen import ALL, STABLE, LinkSet, generate_all, read_links, stability_filter, write_links
from coaff.network import OrgNetwork, build_network, export_graph, filter_view

logger = logging.getLogger(__name__)

TAGS = {"all": ALL, "stable": STABLE}


def _header(cfg: RunConfig, stage: str) -> list[str]:
    lines = [f"coaff stage={stage}", f"config_sha256={cfg.fingerprint()}"]
    if cfg.timestamp:
        lines.append(f"generated={datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    return lines


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_table(path: Path, columns, rows, header: list[str]) -> Path:
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.writelines(f"# {h}\n" for h in header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_json(path: Path, obj) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return path


@dataclass
class Inputs:
    publications: object
    registry: object
    report: object


def load_inputs(cfg: RunConfig) -> Inputs:
    registry = load_registry(cfg.registry)
    raw = load_publications(cfg.publications)
    pubs, report = validate(raw, registry)
    return Inputs(pubs, registry, report)


# ---------------------------------------------------------------- validate

def run_validate(cfg: RunConfig):
    inp = load_inputs(cfg)
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    (cfg.outdir / "validation.txt").write_text(
        "\n".join(f"# {h}" for h in _header(cfg, "validate")) + "\n" + inp.report.summary() + "\n",
        encoding="utf-8")
    return inp.report


# ---------------------------------------------------------------- links

def links_path(cfg: RunConfig, dataset: str) -> Path:
    return cfg.outdir / f"links_{dataset}.csv"


def run_links(cfg: RunConfig, inp: Inputs | None = None) -> dict[str, LinkSet]:
    inp = inp or load_inputs(cfg)
    if len(inp.publications) == 0:
        raise DataError("no records")
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    out = {"all": generate_all(inp.publications, inp.registry, workers=cfg.workers)}
    if "stable" in cfg.datasets:
        out["stable"] = stability_filter(out["all"])
    header = _header(cfg, "links")
    for name, ls in out.items():
        write_links(ls, links_path(cfg, name), header)
    n_multi = count_multi_affiliated(inp.publications, inp.registry)
    summary = {
        "publications": len(inp.publications),
        "multi_affiliated_publications": n_multi,
        "multi_affiliation_share": n_multi / len(inp.publications),
        "links": {ls.provenance: len(ls) for ls in out.values()},
    }
    write_json(cfg.outdir / "links_summary.json", summary)
    return out


def summary_line(linksets: dict[str, LinkSet]) -> str:
    return ", ".join(f"{ls.provenance}: {len(ls)}" for ls in linksets.values())


def read_stage_links(cfg: RunConfig, dataset: str) -> LinkSet:
    path = links_path(cfg, dataset)
    if not path.exists():
        raise DataError(f"{path} not found; run the 'links' stage first")
    return read_links(path)


# ---------------------------------------------------------------- network

def run_network(cfg: RunConfig, registry=None) -> dict[str, OrgNetwork]:
    registry = registry or load_registry(cfg.registry)
    header = _header(cfg, "network")
    nets = {}
    for ds in cfg.datasets:
        net = build_network(read_stage_links(cfg, ds), registry)
        nets[ds] = net
        export_graph(net, cfg.outdir / f"network_{ds}.csv", "edgelist", cfg.include_other, header)
        export_graph(net, cfg.outdir / f"network_{ds}.graphml", "graphml", cfg.include_other)
        view = filter_view(net, cfg.view_threshold)
        export_graph(view, cfg.outdir / f"network_{ds}_view.csv", "edgelist", cfg.include_other, header)
    return nets


# ---------------------------------------------------------------- gravity

def fit_table_rows(fit: ZinbFit):
    rows = [(nm, c, se, z, p, significance(p)) for nm, c, se, z, p in report_rows(fit)]
    rows += [("N", fit.n, "", "", "", ""), ("lnL", fit.loglik, "", "", "", ""),
             ("AIC", fit.aic, "", "", "", ""), ("BIC", fit.bic, "", "", "", "")]
    return rows


def run_gravity(cfg: RunConfig, registry=None) -> dict[tuple[str, str], ZinbFit]:
    registry = registry or load_registry(cfg.registry)
    table = load_travel_times(cfg.travel_times) if cfg.travel_times else None
    header = _header(cfg, "gravity")
    options = FitOptions(rtol=cfg.rtol, gtol=cfg.gtol, max_iter=cfg.max_iter)
    fits = {}
    summary = {}
    for ds in cfg.datasets:
        net = build_network(read_stage_links(cfg, ds), registry)
        imp = Impedance(table, registry.coords, cfg.fallback_speed, cfg.floor_seconds)
        for model in cfg.models:
            design = build_design(net, imp, model, mass=cfg.mass)
            logger.info("fitting %s %s on %d pairs", ds, model, len(design))
            fit = fit_gravity(design, options)
            fits[(ds, model)] = fit
            write_table(cfg.outdir / f"gravity_{ds}_{model}.csv",
                        ("variable", "coef", "robust_se", "z", "p", "sig"),
                        fit_table_rows(fit), header)
            summary[f"{TAGS[ds]}/{model}"] = {
                "N": fit.n,
                "universe": len(net.universe()),
                "fallback_pairs": int(design.fallback.sum()),
                "loglik": fit.loglik,
                "aic": fit.aic,
                "bic": fit.bic,
                "k": fit.k,
                "alpha": fit.alpha,
                "iterations": fit.iterations,
                "condition_number": fit.condition_number,
                "warnings": fit.warnings,
                "coefficients": {nm: {"coef": c, "robust_se": se, "z": z, "p": p}
                                 for nm, c, se, z, p in report_rows(fit)},
            }
    write_json(cfg.outdir / "gravity_summary.json", summary)
    return fits


# ---------------------------------------------------------------- impact

@dataclass
class ImpactResult:
    scores: list
    series: dict
    rankings: dict
    credits: list


def run_impact(cfg: RunConfig, inp: Inputs | None = None) -> ImpactResult:
    inp = inp or load_inputs(cfg)
    pubs = inp.publications
    refsets = build_refsets(pubs)
    wprs = {}
    creds = []
    for ds in cfg.datasets:
        ls = read_stage_links(cfg, ds)
        for pid in sorted(ls.pub_ids()):
            if pid not in wprs:
                if pid not in pubs:
                    raise DataError(f"link file references unknown publication {pid!r}")
                wprs[pid] = weighted_pr(pubs[pid], refsets)
        creds += credits(ls, wprs, inp.registry, cfg.schemes)
    scores = unit_scores(creds)
    series = annual_series(creds)
    org_type = {o: v.org_type for o, v in inp.registry.organisations.items()}

    # eligibility: publication counts under AA in CoAffAll when available
    base = [s for s in scores if s.level == "org" and s.dataset == ALL and s.scheme == "AA"]
    if not base:
        base = [s for s in scores if s.level == "org" and s.scheme == cfg.schemes[0]
                and s.dataset == TAGS[cfg.datasets[0]]]
    eligibility = {s.unit: s.n_raw for s in base}

    header = _header(cfg, "impact")
    out = cfg.outdir
    out.mkdir(parents=True, exist_ok=True)

    def type_of(s):
        return org_type.get(s.unit, "") if s.level == "org" else s.unit

    write_table(out / "unit_scores.csv",
                ("unit", "level", "type", "scheme", "dataset", "mwPR", "n_effective", "n_raw"),
                [(s.unit, s.level, type_of(s), s.scheme, s.dataset, s.mwpr, s.n_effective, s.n_raw)
                 for s in scores], header)

    wide: dict = {}
    for s in scores:
        wide.setdefault((s.dataset, s.level, s.unit), {})[s.scheme] = s
    cols = ["unit", "level", "type", "dataset"]
    for sc in cfg.schemes:
        cols += [f"mwPR_{sc}", f"n_effective_{sc}", f"n_raw_{sc}"]
    rows = []
    for (dataset, level, unit), by_scheme in sorted(wide.items()):
        row = [unit, level, org_type.get(unit, "") if level == "org" else unit, dataset]
        for sc in cfg.schemes:
            s = by_scheme.get(sc)
            row += ["", "", ""] if s is None else [s.mwpr, s.n_effective, s.n_raw]
        rows.append(row)
    write_table(out / "unit_scores_wide.csv", cols, rows, header)

    write_table(out / "annual_series.csv",
                ("unit", "level", "type", "scheme", "dataset", "year", "mwPR", "n_effective", "n_raw"),
                [(s.unit, s.level, type_of(s), s.scheme, s.dataset, key[4], s.mwpr,
                  s.n_effective, s.n_raw) for key, s in series.items()], header)

    write_table(out / "wpr_long.csv",
                ("pub_id", "year", "unit", "level", "scheme", "dataset", "wPR", "FR"),
                [(c.pub_id, c.year, c.unit, c.level, c.scheme, c.dataset, c.wpr, c.share)
                 for c in creds], header)

    rankings = {}
    for t in cfg.thresholds:
        rows = []
        for ds in cfg.datasets:
            for sc in cfg.schemes:
                pool = [s for s in scores if s.level == "org" and s.dataset == TAGS[ds]
                        and s.scheme == sc]
                ranked = ranked_units(pool, t, cfg.top_k, eligibility)
                rankings[(t, TAGS[ds], sc)] = ranked
                rows += [(r + 1, s.unit, org_type.get(s.unit, ""), sc, s.dataset, s.mwpr,
                          s.n_effective, s.n_raw, eligibility.get(s.unit, 0))
                         for r, s in enumerate(ranked)]
        write_table(out / f"ranking_{t}.csv",
                    ("rank", "unit", "type", "scheme", "dataset", "mwPR", "n_effective", "n_raw",
                     "n_eligibility"), rows, header)

    write_json(out / "impact_summary.json", {
        "publications_scored": len(wprs),
        "reference_sets": len(refsets),
        "thresholds": cfg.thresholds,
        "schemes": cfg.schemes,
        "top": {f"{t}/{ds}/{sc}": [s.unit for s in r] for (t, ds, sc), r in rankings.items()},
    })
    return ImpactResult(scores, series, rankings, creds)


# ---------------------------------------------------------------- report

def run_report(cfg: RunConfig) -> dict:
    """All stages in order, figures, and a run manifest."""
    inp = load_inputs(cfg)
    if not inp.report.ok:
        raise DataError("validation failed:\n" + inp.report.summary())
    run_validate(cfg)
    linksets = run_links(cfg, inp)
    nets = run_network(cfg, inp.registry)
    fits = run_gravity(cfg, inp.registry)
    impact = run_impact(cfg, inp)

    figures = []
    if cfg.figures:
        from coaff import plotting

        figures = plotting.render_all(cfg, nets, impact, inp.registry)

    outputs = sorted(p.name for p in cfg.outdir.iterdir()
                     if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("timestamp",)},
        "config_sha256": cfg.fingerprint(),
        "links": {ls.provenance: len(ls) for ls in linksets.values()},
        "fits": {f"{TAGS[d]}/{m}": {"N": f.n, "loglik": f.loglik} for (d, m), f in fits.items()},
        "outputs": outputs,
        "figures": [str(Path(p).relative_to(cfg.outdir)) for p in figures],
    }
    manifest["config"].pop("workers", None)
    manifest["config"].pop("output", None)
    if cfg.timestamp:
        manifest["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    write_json(cfg.outdir / "manifest.json", manifest)
    return manifest
