"""Pairwise gravity design over an organisation universe."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator

import numpy as np

from coaff.ingest import DataError
from coaff.network import OrgNetwork

logger = logging.getLogger(__name__)

MODEL_TYPES = ("uni", "res", "med", "comp", "coll", "npo", "gov")
SAME_TYPE = tuple(f"{t}_{t}" for t in MODEL_TYPES)
CROSS_TYPE = tuple(f"{a}_{b}" for a, b in combinations(sorted(MODEL_TYPES), 2))
MODELS = {"M1": SAME_TYPE, "M2": CROSS_TYPE}

LN_PROD = "ln_prod_edge_strength"
LN_TT = "ln_travel_time"
INFLATE = ("inflate_const", "inflate_ln_prod_edge_strength")


def pair_label(type_a: str, type_b: str) -> str:
    a, b = sorted((type_a, type_b))
    return f"{a}_{b}"


@dataclass(frozen=True)
class DesignRow:
    pair: tuple[str, str]
    y: int
    ln_prod: float
    ln_tt: float
    dummies: dict[str, int]


@dataclass
class Design:
    model: str
    org_lo: np.ndarray
    org_hi: np.ndarray
    y: np.ndarray
    ln_prod: np.ndarray
    ln_tt: np.ndarray
    dummies: np.ndarray
    dummy_names: tuple[str, ...]
    fallback: np.ndarray

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def count_names(self) -> list[str]:
        return ["constant", LN_PROD, LN_TT, *self.dummy_names]

    def count_matrix(self) -> np.ndarray:
        return np.column_stack([np.ones(len(self)), self.ln_prod, self.ln_tt, self.dummies])

    def inflate_matrix(self) -> np.ndarray:
        return np.column_stack([np.ones(len(self)), self.ln_prod])

    def rows(self) -> Iterator[DesignRow]:
        for k in range(len(self)):
            yield DesignRow((str(self.org_lo[k]), str(self.org_hi[k])), int(self.y[k]),
                            float(self.ln_prod[k]), float(self.ln_tt[k]),
                            dict(zip(self.dummy_names, map(int, self.dummies[k]))))


def build_design(net: OrgNetwork, impedance, model: str = "M1",
                 mass: str = "articles", drop_empty_dummies: bool = True) -> Design:
    """One row per unordered pair of the network's regression universe.

    `impedance` needs a ``many(pairs) -> (seconds, is_fallback)`` method
    (see :class:`coaff.geo.Impedance`).  Dummy columns for type combinations
    absent from the universe are dropped unless `drop_empty_dummies` is off.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {tuple(MODELS)}")
    universe = net.universe()
    n = len(universe)
    if n < 2:
        raise DataError(f"regression universe has {n} organisation(s); need at least 2")

    ids = np.array(universe, dtype=object)
    masses = np.array([net.mass(o, mass) for o in universe], dtype=float)
    if np.any(masses <= 0):
        raise DataError("organisation with zero mass in regression universe")
    types = [net.nodes[o].org_type for o in universe]
    unknown = sorted({t for t in types if t not in MODEL_TYPES})
    if unknown:
        raise DataError(f"types outside the model taxonomy in universe: {unknown}")

    ii, jj = np.triu_indices(n, k=1)
    m = ii.size

    pos = {o: k for k, o in enumerate(universe)}
    y = np.zeros(m, dtype=np.int64)
    for (a, b), s in net.edges.items():
        i, j = pos.get(a), pos.get(b)
        if i is None or j is None:
            continue
        # universe is sorted and edges are canonical, so i < j
        y[i * n - i * (i + 1) // 2 + (j - i - 1)] = s

    logm = np.log(masses)
    ln_prod = logm[ii] + logm[jj]

    pairs = list(zip(ids[ii].tolist(), ids[jj].tolist()))
    seconds, fb = impedance.many(pairs)
    if np.any(~np.isfinite(seconds)) or np.any(seconds <= 0):
        raise DataError("non-positive travel time in design")
    ln_tt = np.log(seconds)

    names = list(MODELS[model])
    code = {t: k for k, t in enumerate(MODEL_TYPES)}
    tcode = np.array([code[t] for t in types])
    label_of = np.empty((len(MODEL_TYPES), len(MODEL_TYPES)), dtype=object)
    for a in MODEL_TYPES:
        for b in MODEL_TYPES:
            label_of[code[a], code[b]] = pair_label(a, b)
    col = {nm: k for k, nm in enumerate(names)}
    col_of = np.vectorize(lambda lab: col.get(lab, -1), otypes=[np.int64])(label_of)
    pair_col = col_of[tcode[ii], tcode[jj]]

    D = np.zeros((m, len(names)))
    hit = pair_col >= 0
    D[np.flatnonzero(hit), pair_col[hit]] = 1.0

    if drop_empty_dummies:
        present = D.any(axis=0)
        if not present.all():
            logger.warning("dropping dummies absent from the universe: %s",
                           [nm for nm, ok in zip(names, present) if not ok])
            D = D[:, present]
            names = [nm for nm, ok in zip(names, present) if ok]

    return Design(model, ids[ii], ids[jj], y, ln_prod, ln_tt, D, tuple(names), fb)
