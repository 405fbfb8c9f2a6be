"""Weighted organisation networks built from co-affiliation link sets."""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable
from xml.sax.saxutils import quoteattr

from coaff.ingest import AffiliationRegistry, DataError
from coaff.linkgen import LinkSet

EDGE_COLUMNS = ("org_lo", "org_hi", "strength")
NODE_COLUMNS = ("org_id", "type", "article_count", "edge_weight_sum", "lat", "lon")
FORMATS = ("edgelist", "graphml", "dot")


@dataclass(frozen=True)
class NodeInfo:
    org_type: str
    article_count: int = 0
    edge_weight_sum: int = 0
    lat: float | None = None
    lon: float | None = None


@dataclass
class OrgNetwork:
    nodes: dict[str, NodeInfo] = field(default_factory=dict)
    edges: dict[tuple[str, str], int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def strength(self, a: str, b: str) -> int:
        return self.edges.get((a, b) if a <= b else (b, a), 0)

    def total_strength(self) -> int:
        return sum(self.edges.values())

    def universe(self, include_other: bool = False) -> list[str]:
        """Sorted node ids entering the pairwise regression sample."""
        return sorted(o for o, n in self.nodes.items()
                      if (include_other or n.org_type != "other") and n.article_count >= 1)

    def mass(self, org_id: str, kind: str = "articles") -> int:
        n = self.nodes[org_id]
        if kind == "articles":
            return n.article_count
        if kind == "strength":
            return n.edge_weight_sum
        raise ValueError(f"unknown mass kind {kind!r}")


def build_network(links: LinkSet | Iterable, registry: AffiliationRegistry) -> OrgNetwork:
    """Aggregate links into edge strengths and per-organisation masses.

    ``article_count`` is the number of distinct publications on which the
    organisation takes part in a link; ``edge_weight_sum`` is the sum of its
    incident edge strengths.
    """
    edges: Counter = Counter()
    pubs: dict[str, set[str]] = defaultdict(set)
    for lk in links:
        if lk.org_lo == lk.org_hi:
            raise DataError(f"self-loop link for {lk.org_lo!r}")
        edges[(lk.org_lo, lk.org_hi)] += 1
        pubs[lk.org_lo].add(lk.pub_id)
        pubs[lk.org_hi].add(lk.pub_id)

    wsum: Counter = Counter()
    for (a, b), s in edges.items():
        wsum[a] += s
        wsum[b] += s

    nodes = {}
    for org in sorted(pubs):
        info = registry.organisations.get(org)
        if info is None:
            raise DataError(f"organisation {org!r} missing from registry")
        nodes[org] = NodeInfo(info.org_type, len(pubs[org]), wsum[org], info.lat, info.lon)
    return OrgNetwork(nodes, dict(sorted(edges.items())))


def filter_view(net: OrgNetwork, min_edge_strength: int = 1,
                focus: Iterable[str] | None = None) -> OrgNetwork:
    if min_edge_strength < 1:
        raise ValueError("min_edge_strength must be >= 1")
    focus = set(focus) if focus is not None else None
    edges = {p: s for p, s in net.edges.items()
             if s >= min_edge_strength and (focus is None or p[0] in focus or p[1] in focus)}
    keep = {o for p in edges for o in p}
    nodes = {o: n for o, n in net.nodes.items() if o in keep}
    return OrgNetwork(nodes, edges)


def _drop_other(net: OrgNetwork) -> OrgNetwork:
    nodes = {o: n for o, n in net.nodes.items() if n.org_type != "other"}
    edges = {p: s for p, s in net.edges.items() if p[0] in nodes and p[1] in nodes}
    return OrgNetwork(nodes, edges)


def _fmt(x) -> str:
    return "" if x is None else repr(x) if isinstance(x, float) else str(x)


def node_path_for(path: Path) -> Path:
    return path.with_name(path.stem + ".nodes" + path.suffix)


def export_graph(net: OrgNetwork, path: str | Path, fmt: str = "edgelist",
                 include_other: bool = True, header: Iterable[str] = ()) -> list[Path]:
    """Write `net` to disk and return the written paths.

    The edge-list format writes ``path`` (edges) plus a sibling
    ``<stem>.nodes<suffix>`` node table; ``graphml`` and ``dot`` write a
    single file carrying node type and masses as attributes.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    path = Path(path)
    if not include_other:
        net = _drop_other(net)
    header = list(header)

    if fmt == "edgelist":
        npath = node_path_for(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.writelines(f"# {h}\n" for h in header)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EDGE_COLUMNS)
            for (a, b), s in sorted(net.edges.items()):
                w.writerow([a, b, s])
        with npath.open("w", encoding="utf-8", newline="") as fh:
            fh.writelines(f"# {h}\n" for h in header)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(NODE_COLUMNS)
            for o, n in sorted(net.nodes.items()):
                w.writerow([o, n.org_type, n.article_count, n.edge_weight_sum,
                            _fmt(n.lat), _fmt(n.lon)])
        return [path, npath]

    if fmt == "graphml":
        import networkx as nx

        g = nx.Graph()
        for o, n in sorted(net.nodes.items()):
            attrs = {"type": n.org_type, "article_count": n.article_count,
                     "edge_weight_sum": n.edge_weight_sum}
            if n.lat is not None and n.lon is not None:
                attrs.update(lat=n.lat, lon=n.lon)
            g.add_node(o, **attrs)
        for (a, b), s in sorted(net.edges.items()):
            g.add_edge(a, b, strength=s)
        nx.write_graphml(g, path)
        return [path]

    with path.open("w", encoding="utf-8") as fh:
        fh.writelines(f"// {h}\n" for h in header)
        fh.write("graph coaffiliation {\n")
        for o, n in sorted(net.nodes.items()):
            fh.write(f"  {quoteattr(o)} [type={quoteattr(n.org_type)}, "
                     f"article_count={n.article_count}, edge_weight_sum={n.edge_weight_sum}];\n")
        for (a, b), s in sorted(net.edges.items()):
            fh.write(f"  {quoteattr(a)} -- {quoteattr(b)} [weight={s}];\n")
        fh.write("}\n")
    return [path]


def _num(x: str, cast):
    return None if x is None or x == "" else cast(x)


def import_edgelist(path: str | Path, node_path: str | Path | None = None) -> OrgNetwork:
    path = Path(path)
    npath = Path(node_path) if node_path is not None else node_path_for(path)
    nodes = {}
    with npath.open("r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(ln for ln in fh if not ln.startswith("#")):
            nodes[rec["org_id"]] = NodeInfo(rec["type"], int(rec["article_count"]),
                                            int(rec["edge_weight_sum"]),
                                            _num(rec["lat"], float), _num(rec["lon"], float))
    edges = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(ln for ln in fh if not ln.startswith("#")):
            a, b = rec["org_lo"], rec["org_hi"]
            edges[(a, b) if a <= b else (b, a)] = int(rec["strength"])
    return OrgNetwork(nodes, edges)

