"""Seeded synthetic inputs: ZINB gravity samples and toy bibliographic corpora."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from coaff.geo import TravelTimeTable, fallback_time
from coaff.ingest import (
    ORG_TYPES,
    AffiliationRegistry,
    AuthorEntry,
    PublicationRecord,
    PublicationSet,
)


@dataclass
class GravitySample:
    X: np.ndarray
    Z: np.ndarray
    y: np.ndarray
    theta: np.ndarray   # [beta, log_alpha, gamma]
    count_names: list[str]


def sample_nb2(rng: np.random.Generator, mu, alpha: float) -> np.ndarray:
    """NB2 draws as a gamma-Poisson mixture."""
    lam = rng.gamma(shape=1.0 / alpha, scale=alpha * np.asarray(mu))
    return rng.poisson(lam)


def simulate_gravity(n: int = 20_000, beta=(0.5, 0.3, -0.6), alpha: float = 0.8,
                     gamma=(1.0, -0.4), dummy_coefs=(), seed: int = 0) -> GravitySample:
    """Draw outcomes from the zero-inflated NB2 gravity form.

    Count part: ``const + ln_prod + ln_tt`` plus one-hot type dummies whose
    coefficients are `dummy_coefs` (each row has at most one active dummy).
    Inflation part: ``const + ln_prod``.
    """
    rng = np.random.default_rng(seed)
    ln_prod = rng.normal(2.0, 1.0, n)
    ln_tt = rng.normal(1.0, 0.5, n)
    k = len(dummy_coefs)
    D = np.zeros((n, k))
    if k:
        share = 0.6 / k
        cat = rng.choice(k + 1, size=n, p=[share] * k + [1.0 - 0.6])
        for j in range(k):
            D[cat == j, j] = 1.0
    X = np.column_stack([np.ones(n), ln_prod, ln_tt, D])
    Z = np.column_stack([np.ones(n), ln_prod])
    b = np.array([*beta, *dummy_coefs], dtype=float)
    g = np.asarray(gamma, dtype=float)
    mu = np.exp(X @ b)
    y = sample_nb2(rng, mu, alpha)
    structural = rng.random(n) < expit(Z @ g)
    y[structural] = 0
    names = ["constant", "ln_prod_edge_strength", "ln_travel_time",
             *[f"d{j}" for j in range(k)]]
    return GravitySample(X, Z, y, np.concatenate([b, [np.log(alpha)], g]), names)


def simulate_poisson(n: int = 10_000, beta=(1.0, -0.5), seed: int = 0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, n)
    X = np.column_stack([np.ones(n), x])
    return X, rng.poisson(np.exp(X @ np.asarray(beta, dtype=float)))


# --------------------------------------------------------------------------
# toy corpus

_TYPE_WEIGHTS = {"uni": 0.2, "res": 0.2, "med": 0.15, "coll": 0.1, "comp": 0.15,
                 "gov": 0.08, "npo": 0.07, "other": 0.05}


@dataclass
class Corpus:
    publications: PublicationSet
    registry: AffiliationRegistry
    travel_times: TravelTimeTable


def make_corpus(n_orgs: int = 40, n_authors: int = 300, n_pubs: int = 1500,
                years=(2013, 2023), n_fields: int = 12, routed_share: float = 0.5,
                seed: int = 0) -> Corpus:
    """A small corpus with persistent and transient co-affiliations.

    Organisations get 1-3 raw subunit ids each and coordinates inside a
    box around Austria.  A share of pairs gets a routed travel time; the
    rest is left to the great-circle fallback.
    """
    rng = np.random.default_rng(seed)
    types = list(_TYPE_WEIGHTS)
    p = np.array([_TYPE_WEIGHTS[t] for t in types])
    # every modelled type at least once so all same-type dummies can occur
    org_types = types[:7] * 2 + list(rng.choice(types, size=max(0, n_orgs - 14), p=p / p.sum()))
    org_types = org_types[:n_orgs]
    registry = AffiliationRegistry()
    raw_of: dict[str, list[str]] = {}
    coords = {}
    for k, t in enumerate(org_types):
        org = f"O{k:03d}"
        lat = float(rng.uniform(46.5, 48.9))
        lon = float(rng.uniform(9.6, 17.1))
        coords[org] = (lat, lon)
        raws = [f"{org}.{s}" for s in range(int(rng.integers(1, 4)))]
        raw_of[org] = raws
        for raw in raws:
            registry.add(raw, org, str(t), lat, lon, f"Organisation {k}")
        registry.add(org, org, str(t), lat, lon, f"Organisation {k}")
    orgs = list(raw_of)

    # heavy-tailed organisation sizes drive who gets affiliations
    size = rng.pareto(1.5, n_orgs) + 1.0
    size /= size.sum()

    home = rng.choice(n_orgs, size=n_authors, p=size)
    persistent: dict[int, list[int]] = {}
    for a in range(n_authors):
        if rng.random() < 0.3:
            extra = rng.choice(n_orgs, size=int(rng.integers(1, 3)), p=size, replace=False)
            persistent[a] = [int(e) for e in extra if e != home[a]]

    y0, y1 = years
    pubs = PublicationSet()
    fields = [f"F{f:02d}" for f in range(n_fields)]
    for i in range(n_pubs):
        year = int(rng.integers(y0, y1 + 1))
        team = rng.choice(n_authors, size=int(rng.integers(1, 6)), replace=False)
        entries = []
        for a in team:
            idx = [int(home[a])]
            if a in persistent and rng.random() < 0.7:
                idx += persistent[a]
            if rng.random() < 0.1:
                idx.append(int(rng.choice(n_orgs, p=size)))
            raws = []
            for o in idx:
                sub = raw_of[orgs[o]]
                raws.append(sub[int(rng.integers(len(sub)))])
                if rng.random() < 0.05 and len(sub) > 1:
                    raws.append(sub[int(rng.integers(len(sub)))])
            if rng.random() < 0.5:
                raws = raws[:1] + list(rng.permutation(raws[1:]))
            entries.append(AuthorEntry(f"A{int(a):04d}", tuple(raws)))
        nf = int(rng.integers(1, 4))
        pub_fields = tuple(sorted(rng.choice(fields, size=nf, replace=False)))
        citations = int(rng.negative_binomial(1.2, 1.2 / (1.2 + 8.0 + 0.6 * (y1 - year))))
        pubs.add(PublicationRecord(f"P{i:05d}", year, citations, pub_fields, tuple(entries)))

    table = TravelTimeTable()
    for a_i in range(n_orgs):
        for b_i in range(a_i + 1, n_orgs):
            if rng.random() < routed_share:
                a, b = orgs[a_i], orgs[b_i]
                detour = float(rng.uniform(1.1, 1.6))
                secs = max(fallback_time(coords[a], coords[b], 60.0) * detour, 120.0)
                table.add(a, b, round(secs, 1))
    return Corpus(pubs, registry, table)


__all__ = ["Corpus", "GravitySample", "ORG_TYPES", "make_corpus", "sample_nb2",
           "simulate_gravity", "simulate_poisson"]
