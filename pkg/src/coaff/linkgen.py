"""Author-level co-affiliation links and the temporal stability filter."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

from coaff.ingest import AffiliationRegistry, AuthorEntry, DataError, PublicationSet

ALL = "CoAffAll"
STABLE = "CoAffStable"
PROVENANCE = (ALL, STABLE)
SCHEMES = ("AA", "FA", "LA")
MIN_YEAR_GAP = 2

LINK_COLUMNS = ("author_id", "pub_id", "year", "org_lo", "org_hi", "pos_lo", "pos_hi", "provenance")


class CoAffLink(NamedTuple):
    """One author listing two distinct parent organisations on one publication.

    ``pos_lo`` and ``pos_hi`` are the listing positions of ``org_lo`` and
    ``org_hi`` among the author's distinct parents on that publication.
    """

    author_id: str
    pub_id: str
    year: int
    org_lo: str
    org_hi: str
    pos_lo: int
    pos_hi: int

    @property
    def pair(self) -> tuple[str, str]:
        return (self.org_lo, self.org_hi)

    @property
    def first(self) -> str:
        return self.org_lo if self.pos_lo < self.pos_hi else self.org_hi

    @property
    def last(self) -> str:
        return self.org_hi if self.pos_lo < self.pos_hi else self.org_lo


@dataclass
class LinkSet:
    provenance: str
    links: list[CoAffLink] = field(default_factory=list)

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __len__(self) -> int:
        return len(self.links)

    def __iter__(self) -> Iterator[CoAffLink]:
        return iter(self.links)

    def pub_ids(self) -> set[str]:
        return {lk.pub_id for lk in self.links}

    def by_publication(self) -> dict[str, list[CoAffLink]]:
        out: dict[str, list[CoAffLink]] = defaultdict(list)
        for lk in self.links:
            out[lk.pub_id].append(lk)
        return dict(out)


def pairwise_links(author: AuthorEntry, registry: AffiliationRegistry,
                   pub_id: str, year: int) -> list[CoAffLink]:
    """All pairs of distinct parent organisations listed by one author.

    Subunits of the same parent collapse onto the parent's first listing
    position before pairing, so ``k`` distinct parents give ``k(k-1)/2`` links.
    """
    parents = registry.parents_of(author)
    out = []
    for (i, a), (j, b) in combinations(enumerate(parents), 2):
        if a < b:
            out.append(CoAffLink(author.author_id, pub_id, year, a, b, i, j))
        else:
            out.append(CoAffLink(author.author_id, pub_id, year, b, a, j, i))
    out.sort(key=lambda lk: (lk.org_lo, lk.org_hi))
    return out


def _links_for(pubs, registry) -> list[CoAffLink]:
    out = []
    for pub in pubs:
        for author in pub.authors:
            out.extend(pairwise_links(author, registry, pub.pub_id, pub.year))
    return out


def generate_all(pubs: PublicationSet | Iterable, registry: AffiliationRegistry,
                 workers: int = 1) -> LinkSet:
    records = list(pubs)
    if workers <= 1 or len(records) < 2 * workers:
        return LinkSet(ALL, _links_for(records, registry))
    from concurrent.futures import ThreadPoolExecutor

    size = -(-len(records) // workers)
    chunks = [records[i:i + size] for i in range(0, len(records), size)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(lambda c: _links_for(c, registry), chunks))
    return LinkSet(ALL, [lk for part in parts for lk in part])


def is_recurrent(years: Iterable[int], min_gap: int = MIN_YEAR_GAP) -> bool:
    ys = list(years)
    return bool(ys) and max(ys) - min(ys) >= min_gap


def stability_filter(all_links: LinkSet, min_gap: int = MIN_YEAR_GAP) -> LinkSet:
    """Keep the (author, pair) groups seen in two years at least `min_gap` apart.

    Every instance of a qualifying group is kept, including the years that
    lie between the two witnessing ones.  Input order is preserved.
    """
    # a CoAffStable input is accepted so the filter can be re-applied (no-op)
    if all_links.provenance not in PROVENANCE:
        raise ValueError(f"unexpected provenance {all_links.provenance!r}")
    years: dict[tuple[str, str, str], list[int]] = defaultdict(list)
    for lk in all_links:
        years[(lk.author_id, lk.org_lo, lk.org_hi)].append(lk.year)
    keep = {key for key, ys in years.items() if is_recurrent(ys, min_gap)}
    return LinkSet(STABLE, [lk for lk in all_links
                            if (lk.author_id, lk.org_lo, lk.org_hi) in keep])


def scheme_units(link: CoAffLink, scheme: str) -> list[str]:
    """Organisations a link credits under the AA, FA or LA scheme."""
    if scheme == "AA":
        return [link.first, link.last]
    if scheme == "FA":
        return [link.first]
    if scheme == "LA":
        return [link.last]
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def write_links(links: LinkSet, path: str | Path, header: Iterable[str] = ()) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LINK_COLUMNS)
        for lk in links:
            w.writerow([*lk, links.provenance])


def read_links(path: str | Path) -> LinkSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    links = []
    provenance = None
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = [c for c in LINK_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for row, rec in enumerate(reader, start=1):
            try:
                lk = CoAffLink(rec["author_id"], rec["pub_id"], int(rec["year"]),
                               rec["org_lo"], rec["org_hi"], int(rec["pos_lo"]), int(rec["pos_hi"]))
            except ValueError:
                raise DataError(f"{path} row {row}: malformed link") from None
            if provenance is None:
                provenance = rec["provenance"]
            elif rec["provenance"] != provenance:
                raise DataError(f"{path} row {row}: mixed provenance tags")
            links.append(lk)
    if provenance is None:
        # empty file: infer the tag from the name
        provenance = STABLE if "stable" in path.name.lower() else ALL
    return LinkSet(provenance, links)
