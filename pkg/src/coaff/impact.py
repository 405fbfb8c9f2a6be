"""Field- and year-normalised citation impact with fractional credit.

Each publication gets a Hazen percentile in every (field, year) reference
set it belongs to; the per-field percentiles are averaged with the
reference-set sizes as weights (wPR).  Units (organisations or
organisation types) aggregate wPR with fractional credit shares (mwPR).
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from coaff.ingest import AffiliationRegistry, PublicationRecord
from coaff.linkgen import SCHEMES, CoAffLink, LinkSet, scheme_units

LEVELS = ("org", "type")


class ImpactError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceSet:
    field: str
    year: int
    citations: np.ndarray  # sorted ascending

    @classmethod
    def from_counts(cls, field: str, year: int, counts: Iterable[int]) -> "ReferenceSet":
        arr = np.sort(np.asarray(list(counts), dtype=np.int64))
        if arr.size == 0:
            raise ImpactError(f"empty reference set ({field}, {year})")
        if arr[0] < 0:
            raise ImpactError("negative citation count in reference set")
        return cls(field, year, arr)

    @property
    def n(self) -> int:
        return int(self.citations.size)

    def percentile(self, c):
        """Hazen percentile of `c`; tied counts share their mean rank."""
        lo = np.searchsorted(self.citations, c, side="left")
        hi = np.searchsorted(self.citations, c, side="right")
        # mean rank of the tie block is lo + (hi - lo + 1) / 2
        return (lo + (hi - lo) / 2.0) / self.n * 100.0


def hazen_percentile(c: int, refset: ReferenceSet | Iterable[int]) -> float:
    if not isinstance(refset, ReferenceSet):
        refset = ReferenceSet.from_counts("", 0, refset)
    return float(refset.percentile(c))


def build_refsets(pubs: Iterable[PublicationRecord]) -> dict[tuple[str, int], ReferenceSet]:
    buckets: dict[tuple[str, int], list[int]] = defaultdict(list)
    for pub in pubs:
        for f in pub.fields:
            buckets[(f, pub.year)].append(pub.citations)
    return {key: ReferenceSet.from_counts(key[0], key[1], v) for key, v in sorted(buckets.items())}


def weighted_pr(pub: PublicationRecord, refsets: Mapping[tuple[str, int], ReferenceSet]) -> float:
    num = []
    den = 0
    for f in pub.fields:
        ref = refsets.get((f, pub.year))
        if ref is None:
            raise ImpactError(f"no reference set for field {f!r} in {pub.year} ({pub.pub_id})")
        num.append(float(ref.percentile(pub.citations)) * ref.n)
        den += ref.n
    return math.fsum(num) / den


def score_publications(pubs: Iterable[PublicationRecord],
                       refsets: Mapping[tuple[str, int], ReferenceSet] | None = None) -> dict[str, float]:
    """wPR for every publication; reference sets default to `pubs` itself."""
    pubs = list(pubs)
    if refsets is None:
        refsets = build_refsets(pubs)
    return {p.pub_id: weighted_pr(p, refsets) for p in pubs}


def scheme_slots(links: Iterable[CoAffLink], scheme: str) -> list[str]:
    """Organisation slots a publication's links credit under `scheme`."""
    out = []
    for lk in links:
        out.extend(scheme_units(lk, scheme))
    return out


def fractional_shares(slots: Iterable[str]) -> dict[str, float]:
    """Proportional credit per unit; shares sum to one."""
    counts = Counter(slots)
    total = sum(counts.values())
    if total == 0:
        raise ImpactError("no retained units to share credit among")
    return {u: c / total for u, c in sorted(counts.items())}


@dataclass(frozen=True)
class UnitScore:
    unit: str
    level: str
    scheme: str
    dataset: str
    mwpr: float
    n_effective: float
    n_raw: int


def mwpr(contributions: Iterable[tuple[float, float]]) -> tuple[float, float, int]:
    """Return ``(mwPR, sum of shares, number of publications)``.

    `contributions` are ``(wPR, FR)`` pairs for one unit.
    """
    pairs = [(w, fr) for w, fr in contributions if fr > 0]
    mass = math.fsum(fr for _, fr in pairs)
    if mass <= 0:
        raise ImpactError("unit has zero fractional mass")
    return math.fsum(w * fr for w, fr in pairs) / mass, mass, len(pairs)


@dataclass(frozen=True)
class Credit:
    pub_id: str
    year: int
    unit: str
    level: str
    scheme: str
    dataset: str
    wpr: float
    share: float


def credits(links: LinkSet, wprs: Mapping[str, float], registry: AffiliationRegistry,
            schemes: Iterable[str] = SCHEMES, years: Mapping[str, int] | None = None) -> list[Credit]:
    """Per-publication fractional credit for organisations and organisation types.

    Only publications contributing at least one link to `links` take part.
    Both levels share one slot multiset, so type shares are sums of the
    shares of the organisations of that type.
    """
    out = []
    by_pub = links.by_publication()
    for scheme in schemes:
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        for pub_id in sorted(by_pub):
            pub_links = by_pub[pub_id]
            year = pub_links[0].year if years is None else years[pub_id]
            w = wprs[pub_id]
            slots = scheme_slots(pub_links, scheme)
            for unit, fr in fractional_shares(slots).items():
                out.append(Credit(pub_id, year, unit, "org", scheme, links.provenance, w, fr))
            for unit, fr in fractional_shares(registry.org_type(o) for o in slots).items():
                out.append(Credit(pub_id, year, unit, "type", scheme, links.provenance, w, fr))
    return out


def _aggregate(creds: Iterable[Credit], key) -> dict:
    groups: dict = defaultdict(list)
    for c in creds:
        groups[key(c)].append((c.wpr, c.share))
    return groups


def unit_scores(creds: Iterable[Credit]) -> list[UnitScore]:
    groups = _aggregate(creds, lambda c: (c.dataset, c.scheme, c.level, c.unit))
    out = []
    for (dataset, scheme, level, unit), pairs in sorted(groups.items()):
        m, mass, n = mwpr(pairs)
        out.append(UnitScore(unit, level, scheme, dataset, m, mass, n))
    return out


def annual_series(creds: Iterable[Credit]) -> dict[tuple, UnitScore]:
    """mwPR per ``(dataset, scheme, level, unit, year)``; empty years are absent."""
    groups = _aggregate(creds, lambda c: (c.dataset, c.scheme, c.level, c.unit, c.year))
    out = {}
    for key, pairs in sorted(groups.items()):
        dataset, scheme, level, unit, _ = key
        m, mass, n = mwpr(pairs)
        out[key] = UnitScore(unit, level, scheme, dataset, m, mass, n)
    return out


def ranked_units(scores: Iterable[UnitScore], min_pubs: int = 0, top_k: int | None = None,
                 eligibility: Mapping[str, int] | None = None) -> list[UnitScore]:
    """Units with at least `min_pubs` publications, best mwPR first.

    Publication counts come from `eligibility` when given (the CLI passes
    the AA / CoAffAll counts), otherwise from each score's own ``n_raw``.
    Ties are broken by effective n (descending), then unit id.
    """
    if min_pubs < 0:
        raise ValueError("min_pubs must be non-negative")
    pool = []
    for s in scores:
        n = s.n_raw if eligibility is None else eligibility.get(s.unit, 0)
        if n >= min_pubs:
            pool.append(s)
    pool.sort(key=lambda s: (-s.mwpr, -s.n_effective, s.unit))
    return pool if top_k is None else pool[:top_k]
