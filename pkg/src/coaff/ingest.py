"""Loading and validation of publication records and the affiliation registry.

Two publication layouts are accepted:

* JSON Lines (``.jsonl`` / ``.ndjson``), one object per publication::

    {"pub_id": "p1", "year": 2015, "citations": 4, "fields": ["1703", "2604"],
     "authors": [{"author_id": "a1", "affiliations": ["60018163", "60025988"]}]}

* delimited text (``.csv`` / ``.tsv``) with columns ``pub_id, year,
  citations, fields, authors``.  ``fields`` is ``;``-joined; ``authors`` is
  ``author_id=aff|aff;author_id=aff`` with affiliations in listing order.

The registry is delimited text with columns ``raw_affiliation_id,
parent_org_id, org_type, lat, lon, name``.  ``lat``/``lon`` may be blank.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

ORG_TYPES = ("uni", "res", "med", "coll", "comp", "gov", "npo", "other")

PUBLICATION_COLUMNS = ("pub_id", "year", "citations", "fields", "authors")
REGISTRY_COLUMNS = ("raw_affiliation_id", "parent_org_id", "org_type", "lat", "lon", "name")

FIELD_SEP = ";"
AUTHOR_SEP = ";"
AFFIL_SEP = "|"


class DataError(ValueError):
    """Input data violates a file schema or a domain invariant."""


class UnresolvedAffiliation(DataError, KeyError):
    """A raw affiliation id is not present in the registry."""

    def __init__(self, raw_id: str):
        super().__init__(f"unresolved affiliation id {raw_id!r}")
        self.raw_id = raw_id

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0]


@dataclass(frozen=True)
class AuthorEntry:
    author_id: str
    affiliations: tuple[str, ...]

    def __post_init__(self):
        # collapse repeated raw ids, first occurrence wins
        deduped = tuple(dict.fromkeys(self.affiliations))
        if deduped != self.affiliations:
            object.__setattr__(self, "affiliations", deduped)


@dataclass(frozen=True)
class PublicationRecord:
    pub_id: str
    year: int
    citations: int
    fields: tuple[str, ...]
    authors: tuple[AuthorEntry, ...]

    def affiliation_ids(self) -> Iterator[str]:
        for author in self.authors:
            yield from author.affiliations


class PublicationSet:
    """Ordered, id-indexed collection of publications."""

    def __init__(self, records: Iterable[PublicationRecord] = ()):
        self.records: list[PublicationRecord] = []
        self._index: dict[str, int] = {}
        for rec in records:
            self.add(rec)

    def add(self, rec: PublicationRecord) -> None:
        if rec.pub_id in self._index:
            raise DataError(f"duplicate pub_id {rec.pub_id!r}")
        self._index[rec.pub_id] = len(self.records)
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[PublicationRecord]:
        return iter(self.records)

    def __getitem__(self, pub_id: str) -> PublicationRecord:
        return self.records[self._index[pub_id]]

    def __contains__(self, pub_id: object) -> bool:
        return pub_id in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PublicationSet) and self.records == other.records

    def years(self) -> list[int]:
        return sorted({r.year for r in self.records})


@dataclass(frozen=True)
class Organisation:
    org_id: str
    org_type: str
    lat: float | None = None
    lon: float | None = None
    name: str = ""

    @property
    def coords(self) -> tuple[float, float] | None:
        if self.lat is None or self.lon is None:
            return None
        return (self.lat, self.lon)


class AffiliationRegistry:
    """Mapping of raw affiliation ids onto harmonised parent organisations."""

    def __init__(self):
        self._parent: dict[str, str] = {}
        self.organisations: dict[str, Organisation] = {}

    def add(self, raw_id: str, parent_id: str, org_type: str,
            lat: float | None = None, lon: float | None = None, name: str = "") -> None:
        if org_type not in ORG_TYPES:
            raise DataError(f"unknown org_type {org_type!r} for {raw_id!r}; "
                            f"expected one of {', '.join(ORG_TYPES)}")
        prev = self._parent.get(raw_id)
        if prev is not None and prev != parent_id:
            raise DataError(f"raw affiliation {raw_id!r} maps to both {prev!r} and {parent_id!r}")
        self._parent[raw_id] = parent_id

        org = self.organisations.get(parent_id)
        if org is None:
            self.organisations[parent_id] = Organisation(parent_id, org_type, lat, lon, name)
            return
        if org.org_type != org_type:
            raise DataError(f"parent {parent_id!r} has conflicting types "
                            f"{org.org_type!r} and {org_type!r}")
        # a later row may carry coordinates or a name the first one lacked
        if (org.coords is None and lat is not None and lon is not None) or (not org.name and name):
            self.organisations[parent_id] = Organisation(
                parent_id, org_type,
                org.lat if org.coords is not None else lat,
                org.lon if org.coords is not None else lon,
                org.name or name,
            )

    def __contains__(self, raw_id: object) -> bool:
        return raw_id in self._parent

    def __len__(self) -> int:
        return len(self._parent)

    @property
    def n_parents(self) -> int:
        return len(self.organisations)

    def resolve(self, raw_id: str) -> tuple[str, str]:
        """Return ``(parent_org_id, org_type)`` for a raw affiliation id."""
        try:
            parent = self._parent[raw_id]
        except KeyError:
            raise UnresolvedAffiliation(raw_id) from None
        return parent, self.organisations[parent].org_type

    def parent(self, raw_id: str) -> str:
        return self.resolve(raw_id)[0]

    def org_type(self, org_id: str) -> str:
        return self.organisations[org_id].org_type

    def coords(self, org_id: str) -> tuple[float, float] | None:
        org = self.organisations.get(org_id)
        return None if org is None else org.coords

    def parents_of(self, author: AuthorEntry, strict: bool = True) -> list[str]:
        """Distinct parents of an author entry, in first-listed order."""
        out: dict[str, None] = {}
        for raw in author.affiliations:
            if raw in self._parent:
                out.setdefault(self._parent[raw])
            elif strict:
                raise UnresolvedAffiliation(raw)
        return list(out)


def resolve(registry: AffiliationRegistry, raw_id: str) -> tuple[str, str]:
    return registry.resolve(raw_id)


@dataclass
class ValidationReport:
    n_read: int = 0
    n_kept: int = 0
    n_dropped: int = 0
    unresolved_ids: list[str] = field(default_factory=list)
    malformed: list[tuple[int, str]] = field(default_factory=list)
    dropped_authors: int = 0

    @property
    def ok(self) -> bool:
        return not self.unresolved_ids and not self.malformed and self.n_read > 0

    def summary(self) -> str:
        lines = [
            f"read: {self.n_read}",
            f"kept: {self.n_kept}",
            f"dropped: {self.n_dropped}",
            f"author entries without resolvable affiliation: {self.dropped_authors}",
            f"unresolved affiliation ids: {len(self.unresolved_ids)}",
        ]
        lines += [f"  unresolved {raw}" for raw in self.unresolved_ids]
        lines += [f"  malformed row {row}: {why}" for row, why in self.malformed]
        if self.n_read == 0:
            lines.append("no records")
        return "\n".join(lines)


def _open_text(path: Path):
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return path.open("r", encoding="utf-8", newline="")


def _delimiter(path: Path) -> str:
    return "\t" if path.suffix.lower() in (".tsv", ".tab") else ","


def _data_lines(fh) -> Iterator[str]:
    # '#' lines carry provenance headers written by the CLI
    for line in fh:
        if not line.startswith("#"):
            yield line


def _as_int(value, what: str, row: int) -> int:
    if value is None or (isinstance(value, str) and not value.strip()):
        raise DataError(f"row {row}: missing field {what!r}")
    if isinstance(value, bool):
        raise DataError(f"row {row}: field {what!r} is not an integer: {value!r}")
    try:
        if isinstance(value, float):
            if not value.is_integer():
                raise ValueError
            return int(value)
        return int(str(value).strip())
    except ValueError:
        raise DataError(f"row {row}: field {what!r} is not an integer: {value!r}") from None


def _record_from_mapping(obj: dict, row: int) -> PublicationRecord:
    for key in PUBLICATION_COLUMNS:
        if key not in obj or obj[key] is None:
            raise DataError(f"row {row}: missing field {key!r}")
    pub_id = str(obj["pub_id"]).strip()
    if not pub_id:
        raise DataError(f"row {row}: empty field 'pub_id'")
    year = _as_int(obj["year"], "year", row)
    if not 1000 <= year <= 9999:
        raise DataError(f"row {row}: field 'year' out of range: {year}")
    citations = _as_int(obj["citations"], "citations", row)
    if citations < 0:
        raise DataError(f"row {row}: field 'citations' is negative: {citations}")

    fields = obj["fields"]
    if isinstance(fields, str):
        fields = [f for f in fields.split(FIELD_SEP)]
    fields = tuple(str(f).strip() for f in fields if str(f).strip())
    if not fields:
        raise DataError(f"row {row}: field 'fields' is empty")

    authors_raw = obj["authors"]
    if isinstance(authors_raw, str):
        authors_raw = _parse_author_block(authors_raw, row)
    authors = []
    for a in authors_raw:
        if not isinstance(a, dict) or "author_id" not in a or "affiliations" not in a:
            raise DataError(f"row {row}: malformed author entry {a!r}")
        affs = a["affiliations"]
        if isinstance(affs, str) or not isinstance(affs, (list, tuple)):
            raise DataError(f"row {row}: field 'affiliations' must be a list")
        authors.append(AuthorEntry(str(a["author_id"]), tuple(str(x) for x in affs)))
    return PublicationRecord(pub_id, year, citations, fields, tuple(authors))


def _parse_author_block(block: str, row: int) -> list[dict]:
    out = []
    for chunk in block.split(AUTHOR_SEP):
        chunk = chunk.strip()
        if not chunk:
            continue
        author_id, sep, affs = chunk.partition("=")
        if not sep or not author_id.strip():
            raise DataError(f"row {row}: malformed author entry {chunk!r}")
        out.append({
            "author_id": author_id.strip(),
            "affiliations": [x.strip() for x in affs.split(AFFIL_SEP) if x.strip()],
        })
    return out


def format_author_block(authors: Iterable[AuthorEntry]) -> str:
    return AUTHOR_SEP.join(f"{a.author_id}={AFFIL_SEP.join(a.affiliations)}" for a in authors)


def iter_publications(path: str | Path) -> Iterator[PublicationRecord]:
    path = Path(path)
    with _open_text(path) as fh:
        if path.suffix.lower() in (".jsonl", ".ndjson", ".json"):
            for row, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"row {row}: invalid JSON ({exc.msg})") from None
                if not isinstance(obj, dict):
                    raise DataError(f"row {row}: expected an object")
                yield _record_from_mapping(obj, row)
        else:
            reader = csv.DictReader(_data_lines(fh), delimiter=_delimiter(path))
            missing = [c for c in PUBLICATION_COLUMNS if c not in (reader.fieldnames or ())]
            if missing:
                raise DataError(f"{path}: missing columns {missing}")
            for row, rec in enumerate(reader, start=1):
                yield _record_from_mapping(rec, row)


def load_publications(path: str | Path) -> PublicationSet:
    """Load a publications file, preserving input order.

    Raises
    ------
    FileNotFoundError
        If `path` does not exist.
    DataError
        On a schema violation (the row number and field are named) or a
        repeated ``pub_id``.
    """
    pubs = PublicationSet()
    for rec in iter_publications(path):
        pubs.add(rec)
    logger.info("loaded %d publications from %s", len(pubs), path)
    return pubs


def write_publications(pubs: Iterable[PublicationRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if path.suffix.lower() in (".jsonl", ".ndjson", ".json"):
            for p in pubs:
                obj = {
                    "pub_id": p.pub_id, "year": p.year, "citations": p.citations,
                    "fields": list(p.fields),
                    "authors": [{"author_id": a.author_id, "affiliations": list(a.affiliations)}
                                for a in p.authors],
                }
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
        else:
            w = csv.writer(fh, delimiter=_delimiter(path), lineterminator="\n")
            w.writerow(PUBLICATION_COLUMNS)
            for p in pubs:
                w.writerow([p.pub_id, p.year, p.citations, FIELD_SEP.join(p.fields),
                            format_author_block(p.authors)])


def _as_coord(value: str | None, what: str, row: int) -> float | None:
    if value is None or not value.strip():
        return None
    try:
        return float(value)
    except ValueError:
        raise DataError(f"registry row {row}: {what} is not a number: {value!r}") from None


def load_registry(path: str | Path) -> AffiliationRegistry:
    path = Path(path)
    registry = AffiliationRegistry()
    with _open_text(path) as fh:
        reader = csv.DictReader(_data_lines(fh), delimiter=_delimiter(path))
        required = REGISTRY_COLUMNS[:3]
        missing = [c for c in required if c not in (reader.fieldnames or ())]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for row, rec in enumerate(reader, start=1):
            raw = (rec.get("raw_affiliation_id") or "").strip()
            parent = (rec.get("parent_org_id") or "").strip()
            if not raw or not parent:
                raise DataError(f"registry row {row}: empty raw_affiliation_id or parent_org_id")
            lat = _as_coord(rec.get("lat"), "lat", row)
            lon = _as_coord(rec.get("lon"), "lon", row)
            try:
                registry.add(raw, parent, (rec.get("org_type") or "").strip(),
                             lat, lon, (rec.get("name") or "").strip())
            except DataError as exc:
                raise DataError(f"registry row {row}: {exc}") from None
    logger.info("registry: %d raw ids -> %d parents", len(registry), registry.n_parents)
    return registry


def write_registry(registry: AffiliationRegistry, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGISTRY_COLUMNS)
        for raw, parent in registry._parent.items():
            org = registry.organisations[parent]
            w.writerow([raw, parent, org.org_type,
                        "" if org.lat is None else repr(org.lat),
                        "" if org.lon is None else repr(org.lon), org.name])


def validate(pubs: PublicationSet, registry: AffiliationRegistry) -> tuple[PublicationSet, ValidationReport]:
    """Resolve every affiliation and drop what cannot be used.

    Unresolved raw ids are removed from their author entries and listed in
    the report.  Author entries left with no affiliation are removed, and a
    publication without any remaining author is dropped.
    """
    report = ValidationReport(n_read=len(pubs))
    unresolved: dict[str, None] = {}
    kept = PublicationSet()
    for pub in pubs:
        authors = []
        for author in pub.authors:
            affs = []
            for raw in author.affiliations:
                if raw in registry:
                    affs.append(raw)
                else:
                    unresolved.setdefault(raw)
            if affs:
                authors.append(AuthorEntry(author.author_id, tuple(affs)))
            else:
                report.dropped_authors += 1
        if authors:
            kept.add(PublicationRecord(pub.pub_id, pub.year, pub.citations, pub.fields,
                                       tuple(authors)))
    report.n_kept = len(kept)
    report.n_dropped = report.n_read - report.n_kept
    report.unresolved_ids = list(unresolved)
    return kept, report


def is_multi_affiliated(pub: PublicationRecord, registry: AffiliationRegistry) -> bool:
    return any(len(registry.parents_of(a, strict=False)) >= 2 for a in pub.authors)


def multi_affiliation_share(pubs: PublicationSet | Iterable[PublicationRecord],
                            registry: AffiliationRegistry) -> float:
    """Fraction of publications with an author listing two or more distinct parents."""
    records = list(pubs)
    if not records:
        return 0.0
    return count_multi_affiliated(records, registry) / len(records)


def count_multi_affiliated(pubs: Iterable[PublicationRecord], registry: AffiliationRegistry) -> int:
    return sum(is_multi_affiliated(p, registry) for p in pubs)
