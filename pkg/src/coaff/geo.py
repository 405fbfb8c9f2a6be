"""Travel-time impedance between organisation pairs.

Routed durations come from a precomputed pair file (``org_lo, org_hi,
seconds``).  Pairs missing from it fall back to great-circle distance at a
fixed speed.  Every value is floored so that ``log(seconds)`` stays finite
for co-located organisations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from coaff.ingest import DataError

EARTH_RADIUS_KM = 6371.0
DEFAULT_SPEED_KMH = 60.0
DEFAULT_FLOOR_SECONDS = 60.0

ROUTED = "routed"
FALLBACK = "fallback"


def canonical(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def _check_coords(lat, lon) -> None:
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise ValueError("coordinates must be finite")
    if np.any(np.abs(lat) > 90.0):
        raise ValueError("latitude outside [-90, 90]")
    if np.any(np.abs(lon) > 180.0):
        raise ValueError("longitude outside [-180, 180]")


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km on a sphere of radius 6371 km (vectorised)."""
    _check_coords(lat1, lon1)
    _check_coords(lat2, lon2)
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    h = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def fallback_time(coord_i: tuple[float, float], coord_j: tuple[float, float],
                  speed_kmh: float = DEFAULT_SPEED_KMH) -> float:
    """Seconds to cover the great-circle distance at `speed_kmh` (unfloored)."""
    if not speed_kmh > 0:
        raise ValueError(f"speed must be positive, got {speed_kmh}")
    d = float(haversine_km(coord_i[0], coord_i[1], coord_j[0], coord_j[1]))
    return d / speed_kmh * 3600.0


@dataclass
class TravelTimeTable:
    entries: dict[tuple[str, str], float] = field(default_factory=dict)

    def add(self, a: str, b: str, seconds: float) -> None:
        if a == b:
            raise DataError(f"travel time for self-pair {a!r}")
        if not (math.isfinite(seconds) and seconds > 0):
            raise DataError(f"non-positive travel time {seconds!r} for {a!r}-{b!r}")
        key = canonical(a, b)
        prev = self.entries.get(key)
        if prev is not None and prev != seconds:
            raise DataError(f"conflicting travel times for {key}: {prev} vs {seconds}")
        self.entries[key] = seconds

    def lookup(self, a: str, b: str) -> float | None:
        return self.entries.get(canonical(a, b))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, pair) -> bool:
        return canonical(*pair) in self.entries


def load_travel_times(path: str | Path) -> TravelTimeTable:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    table = TravelTimeTable()
    with path.open("r", encoding="utf-8", newline="") as fh:
        delim = "\t" if path.suffix.lower() in (".tsv", ".tab") else ","
        reader = csv.DictReader((ln for ln in fh if not ln.startswith("#")), delimiter=delim)
        missing = [c for c in ("org_lo", "org_hi", "seconds") if c not in (reader.fieldnames or ())]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for row, rec in enumerate(reader, start=1):
            a, b = (rec["org_lo"] or "").strip(), (rec["org_hi"] or "").strip()
            if not a or not b:
                raise DataError(f"{path} row {row}: empty organisation id")
            try:
                seconds = float(rec["seconds"])
            except (TypeError, ValueError):
                raise DataError(f"{path} row {row}: malformed duration {rec['seconds']!r}") from None
            try:
                table.add(a, b, seconds)
            except DataError as exc:
                raise DataError(f"{path} row {row}: {exc}") from None
    return table


def write_travel_times(table: TravelTimeTable, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["org_lo", "org_hi", "seconds"])
        for (a, b), s in sorted(table.entries.items()):
            w.writerow([a, b, repr(s)])


class Impedance:
    """Pairwise impedance lookup: routed table first, great-circle fallback second."""

    def __init__(self, table: TravelTimeTable | None, coords,
                 speed_kmh: float = DEFAULT_SPEED_KMH,
                 floor_seconds: float = DEFAULT_FLOOR_SECONDS):
        if not speed_kmh > 0:
            raise ValueError("fallback speed must be positive")
        if not floor_seconds > 0:
            raise ValueError("floor must be positive")
        self.table = table if table is not None else TravelTimeTable()
        # coords: mapping or callable org_id -> (lat, lon) | None
        self._coords = coords if callable(coords) else coords.get
        self.speed_kmh = speed_kmh
        self.floor_seconds = floor_seconds
        self.n_fallback = 0

    def __call__(self, a: str, b: str) -> tuple[float, str]:
        return impedance(self.table, (a, b), self._coords, self.speed_kmh, self.floor_seconds,
                         self)

    def many(self, pairs) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised lookup: returns (seconds, is_fallback) arrays."""
        out = np.empty(len(pairs))
        fb = np.zeros(len(pairs), dtype=bool)
        need = []
        for k, (a, b) in enumerate(pairs):
            v = self.table.lookup(a, b)
            if v is None:
                need.append(k)
            else:
                out[k] = v
        if need:
            lat1, lon1, lat2, lon2 = (np.empty(len(need)) for _ in range(4))
            for m, k in enumerate(need):
                a, b = pairs[k]
                ca, cb = self._coords(a), self._coords(b)
                if ca is None or cb is None:
                    raise DataError(f"no travel time and no coordinates for pair ({a}, {b})")
                lat1[m], lon1[m] = ca
                lat2[m], lon2[m] = cb
            out[need] = haversine_km(lat1, lon1, lat2, lon2) / self.speed_kmh * 3600.0
            fb[need] = True
            self.n_fallback += len(need)
        return np.maximum(out, self.floor_seconds), fb


def impedance(table: TravelTimeTable, pair: tuple[str, str], coords,
              speed_kmh: float = DEFAULT_SPEED_KMH,
              floor_seconds: float = DEFAULT_FLOOR_SECONDS,
              _counter: Impedance | None = None) -> tuple[float, str]:
    """Travel time for `pair` in seconds with its source tag."""
    a, b = pair
    v = table.lookup(a, b)
    if v is not None:
        return max(v, floor_seconds), ROUTED
    get = coords if callable(coords) else coords.get
    ca, cb = get(a), get(b)
    if ca is None or cb is None:
        raise DataError(f"no travel time and no coordinates for pair ({a}, {b})")
    if _counter is not None:
        _counter.n_fallback += 1
    return max(fallback_time(ca, cb, speed_kmh), floor_seconds), FALLBACK
