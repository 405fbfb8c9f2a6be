"""Report figures rendered to PNG next to the delimited tables."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from coaff.gravity.design import MODEL_TYPES  # noqa: E402
from coaff.linkgen import ALL, STABLE  # noqa: E402
from coaff.network import OrgNetwork, filter_view  # noqa: E402

TYPE_COLOURS = {
    "uni": "#1f77b4", "res": "#d62728", "med": "#2ca02c", "coll": "#9467bd",
    "comp": "#8c564b", "gov": "#e377c2", "npo": "#ff7f0e", "other": "#7f7f7f",
}
SCHEME_MARKERS = {"AA": "D", "FA": "^", "LA": "v"}
DATASET_LABEL = {"all": ALL, "stable": STABLE}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_network(net: OrgNetwork, title: str = "", ax=None, names=None):
    """Nodes at their coordinates, sized by article count, coloured by type."""
    if ax is None:
        _, ax = plt.subplots(figsize=(8, 5))
    placed = {o: (n.lon, n.lat) for o, n in net.nodes.items()
              if n.lat is not None and n.lon is not None}
    if net.edges:
        smax = max(net.edges.values())
        for (a, b), s in net.edges.items():
            if a in placed and b in placed:
                (x0, y0), (x1, y1) = placed[a], placed[b]
                ax.plot([x0, x1], [y0, y1], color="0.4", alpha=0.5,
                        lw=0.5 + 4.0 * s / smax, zorder=1)
    if placed:
        amax = max(net.nodes[o].article_count for o in placed) or 1
        for t, colour in TYPE_COLOURS.items():
            pts = [o for o in placed if net.nodes[o].org_type == t]
            if not pts:
                continue
            xy = np.array([placed[o] for o in pts])
            size = [20 + 300 * net.nodes[o].article_count / amax for o in pts]
            ax.scatter(xy[:, 0], xy[:, 1], s=size, c=colour, label=t, zorder=2,
                       edgecolors="k", linewidths=0.3)
        if names:
            for o, (x, y) in placed.items():
                if o in names:
                    ax.annotate(names[o], (x, y), fontsize=6, xytext=(3, 3),
                                textcoords="offset points")
        ax.legend(fontsize=7, frameon=False, markerscale=0.5)
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title(title)
    return ax


def plot_wpr_violins(creds, dataset: str, ax=None):
    """wPR distribution per organisation type and scheme; diamonds mark mwPR."""
    if ax is None:
        _, ax = plt.subplots(figsize=(9, 4))
    groups = defaultdict(list)
    for c in creds:
        if c.level == "type" and c.dataset == dataset and c.unit in MODEL_TYPES:
            groups[(c.unit, c.scheme)].append((c.wpr, c.share))
    schemes = sorted({s for _, s in groups}, key=list(SCHEME_MARKERS).index)
    types = [t for t in MODEL_TYPES if any((t, s) in groups for s in schemes)]
    width = 0.8 / max(len(schemes), 1)
    for k, sc in enumerate(schemes):
        pos, data, means = [], [], []
        for i, t in enumerate(types):
            vals = groups.get((t, sc))
            if not vals or len(vals) < 2:
                continue
            w = np.array([v for v, _ in vals])
            fr = np.array([f for _, f in vals])
            pos.append(i + (k - (len(schemes) - 1) / 2) * width)
            data.append(w)
            means.append(float(np.sum(w * fr) / np.sum(fr)))
        if data:
            parts = ax.violinplot(data, positions=pos, widths=width * 0.9, showextrema=False)
            for body in parts["bodies"]:
                body.set_alpha(0.4)
            ax.scatter(pos, means, marker=SCHEME_MARKERS.get(sc, "o"), color="k", s=18,
                       zorder=3, label=f"mwPR {sc}")
    ax.set_xticks(range(len(types)))
    ax.set_xticklabels(types)
    ax.set_ylim(0, 100)
    ax.set_ylabel("wPR")
    ax.set_title(dataset)
    ax.legend(fontsize=7, frameon=False)
    return ax


def plot_annual(series, level: str, dataset: str, scheme: str = "AA", units=None, ax=None,
                labels=None):
    if ax is None:
        _, ax = plt.subplots(figsize=(8, 4))
    lines = defaultdict(list)
    for (ds, sc, lv, unit, year), s in series.items():
        if ds == dataset and sc == scheme and lv == level and (units is None or unit in units):
            lines[unit].append((year, s.mwpr))
    for unit in sorted(lines, key=lambda u: (units.index(u) if units else 0, u)):
        pts = sorted(lines[unit])
        colour = TYPE_COLOURS.get(unit) if level == "type" else None
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, color=colour,
                label=(labels or {}).get(unit, unit))
    ax.set_xlabel("year")
    ax.set_ylabel("mwPR")
    ax.set_title(f"{dataset} ({scheme})")
    ax.legend(fontsize=6, frameon=False, ncol=2)
    return ax


def plot_top_units(scores, ranking, ax=None, labels=None):
    """mwPR of the ranked organisations under each scheme and dataset."""
    if ax is None:
        _, ax = plt.subplots(figsize=(7, 5))
    units = [s.unit for s in ranking]
    index = {(s.dataset, s.scheme, s.unit): s for s in scores if s.level == "org"}
    offsets = {ALL: -0.15, STABLE: 0.15}
    for ds, dy in offsets.items():
        for sc, marker in SCHEME_MARKERS.items():
            xs, ys = [], []
            for i, u in enumerate(units):
                s = index.get((ds, sc, u))
                if s is not None:
                    xs.append(s.mwpr)
                    ys.append(i + dy)
            if xs:
                ax.scatter(xs, ys, marker=marker, s=25, label=f"{ds} {sc}",
                           facecolors="none" if ds == STABLE else None,
                           edgecolors="k" if ds == STABLE else None)
    ax.set_yticks(range(len(units)))
    ax.set_yticklabels([(labels or {}).get(u, u) for u in units], fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("mwPR")
    ax.legend(fontsize=6, frameon=False)
    return ax


def render_all(cfg, nets, impact, registry) -> list[Path]:
    figdir = Path(cfg.outdir) / "figures"
    figdir.mkdir(parents=True, exist_ok=True)
    names = {o: (v.name or o) for o, v in registry.organisations.items()}
    paths = []

    for ds, net in nets.items():
        fig, ax = plt.subplots(figsize=(8, 5))
        plot_network(filter_view(net, cfg.view_threshold), f"{DATASET_LABEL[ds]} "
                     f"(strength >= {cfg.view_threshold})", ax)
        paths.append(_save(fig, figdir / f"network_{ds}.png"))

    datasets = [DATASET_LABEL[d] for d in cfg.datasets]
    fig, axes = plt.subplots(len(datasets), 1, figsize=(9, 3.5 * len(datasets)), squeeze=False)
    for ax, ds in zip(axes[:, 0], datasets):
        plot_wpr_violins(impact.credits, ds, ax)
    paths.append(_save(fig, figdir / "wpr_by_type.png"))

    fig, axes = plt.subplots(len(datasets), 1, figsize=(8, 3.5 * len(datasets)), squeeze=False)
    for ax, ds in zip(axes[:, 0], datasets):
        plot_annual(impact.series, "type", ds, cfg.schemes[0], list(MODEL_TYPES), ax)
    paths.append(_save(fig, figdir / "annual_by_type.png"))

    base_ds = datasets[0]
    for t in cfg.thresholds:
        ranking = impact.rankings.get((t, base_ds, cfg.schemes[0]), [])
        if not ranking:
            continue
        fig, ax = plt.subplots(figsize=(7, 0.4 * len(ranking) + 1.5))
        plot_top_units(impact.scores, ranking, ax, names)
        ax.set_title(f"top organisations, >= {t} publications")
        paths.append(_save(fig, figdir / f"top_units_{t}.png"))

    if cfg.thresholds:
        ranking = impact.rankings.get((cfg.thresholds[0], base_ds, cfg.schemes[0]), [])
        units = [s.unit for s in ranking]
        if units:
            fig, axes = plt.subplots(len(datasets), 1, figsize=(8, 3.5 * len(datasets)),
                                     squeeze=False)
            for ax, ds in zip(axes[:, 0], datasets):
                plot_annual(impact.series, "org", ds, cfg.schemes[0], units, ax, names)
            paths.append(_save(fig, figdir / "annual_top_units.png"))
            for ds, net in nets.items():
                fig, ax = plt.subplots(figsize=(8, 5))
                view = filter_view(net, cfg.focus_threshold, focus=units)
                plot_network(view, f"{DATASET_LABEL[ds]}: top organisations "
                             f"(strength >= {cfg.focus_threshold})", ax, names)
                paths.append(_save(fig, figdir / f"network_top_{ds}.png"))
    return paths
