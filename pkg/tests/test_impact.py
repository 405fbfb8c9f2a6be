import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import rankdata

from coaff.ingest import AuthorEntry
from coaff.impact import (
    ImpactError,
    ReferenceSet,
    UnitScore,
    annual_series,
    build_refsets,
    credits,
    fractional_shares,
    hazen_percentile,
    mwpr,
    ranked_units,
    score_publications,
    scheme_slots,
    unit_scores,
    weighted_pr,
)
from coaff.linkgen import ALL, generate_all, pairwise_links

from conftest import make_registry, pub


def brute_hazen(c, counts):
    """Oracle: enumerate ranks 1..n, average the ranks of entries equal to c."""
    ordered = sorted(counts)
    ranks = [r for r, v in enumerate(ordered, start=1) if v == c]
    return (sum(ranks) / len(ranks) - 0.5) / len(ordered) * 100.0


@pytest.mark.parametrize("counts,c,want", [
    ([0, 1, 2, 3], 2, 62.5),
    ([7], 7, 50.0),
    ([5, 5, 5, 9], 5, 37.5),
])
def test_hazen_examples(counts, c, want):
    assert hazen_percentile(c, counts) == pytest.approx(want, abs=1e-12)
    assert brute_hazen(c, counts) == pytest.approx(want, abs=1e-12)


def test_hazen_empty_refset():
    with pytest.raises(ImpactError):
        hazen_percentile(1, [])


@given(st.lists(st.integers(0, 30), min_size=1, max_size=60))
def test_hazen_matches_oracles_and_averages_to_50(counts):
    ref = ReferenceSet.from_counts("F", 2015, counts)
    prs = [hazen_percentile(c, ref) for c in counts]
    for c, pr in zip(counts, prs):
        assert pr == pytest.approx(brute_hazen(c, counts), abs=1e-12)
        assert 0 < pr < 100
    ranks = rankdata(counts, method="average")
    assert np.allclose(prs, (ranks - 0.5) / len(counts) * 100, atol=1e-12)
    assert math.fsum(prs) / len(prs) == pytest.approx(50.0, abs=1e-9)


def _refset_with_pr(field, n, lo, c=5):
    """n counts where c has lo entries below and two ties."""
    return ReferenceSet.from_counts(field, 2015, [0] * lo + [c, c] + [10] * (n - lo - 2))


def test_weighted_pr_hand_evaluated():
    refs = {("F1", 2015): _refset_with_pr("F1", 100, 59), ("F2", 2015): _refset_with_pr("F2", 300, 239)}
    assert refs[("F1", 2015)].percentile(5) == pytest.approx(60.0)
    assert refs[("F2", 2015)].percentile(5) == pytest.approx(80.0)
    p = pub("p", 2015, [("a", ["A"])], citations=5, fields=("F1", "F2"))
    assert weighted_pr(p, refs) == pytest.approx(75.0, abs=1e-12)


def test_weighted_pr_single_field_and_symmetry():
    refs = {("F1", 2015): ReferenceSet.from_counts("F1", 2015, [0, 1, 2, 3]),
            ("F2", 2015): ReferenceSet.from_counts("F2", 2015, [2, 3, 4, 5])}
    assert weighted_pr(pub("p", 2015, [], citations=2, fields=("F1",)), refs) == 62.5
    # equal sizes, PRs 62.5 and 12.5
    assert weighted_pr(pub("p", 2015, [], citations=2, fields=("F1", "F2")), refs) == 37.5


def test_weighted_pr_missing_refset():
    with pytest.raises(ImpactError, match="no reference set"):
        weighted_pr(pub("p", 2016, [], fields=("F1",)), {})


def test_fractional_shares_examples():
    reg = make_registry({"TU Wien": ("uni", []), "OeAW": ("res", [])})
    links = pairwise_links(AuthorEntry("a", ("TU Wien", "OeAW")), reg, "p", 2015)
    slots = scheme_slots(links, "AA")
    assert fractional_shares(slots) == {"OeAW": 0.5, "TU Wien": 0.5}
    assert fractional_shares(reg.org_type(o) for o in slots) == {"res": 0.5, "uni": 0.5}
    assert fractional_shares(["u"]) == {"u": 1.0}
    sh = fractional_shares(["A", "A", "B"])
    assert sh["A"] == pytest.approx(2 / 3) and sh["B"] == pytest.approx(1 / 3)
    with pytest.raises(ImpactError):
        fractional_shares([])


def test_mwpr_examples():
    assert mwpr([(73.0, 1.0)])[0] == 73.0
    assert mwpr([(80.0, 0.5), (60.0, 0.5)]) == (70.0, 1.0, 2)
    with pytest.raises(ImpactError):
        mwpr([(50.0, 0.0)])


@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0.01, 1)), min_size=1, max_size=30))
def test_mwpr_bounded_by_contributions(pairs):
    m, mass, n = mwpr(pairs)
    ws = [w for w, _ in pairs]
    assert min(ws) - 1e-9 <= m <= max(ws) + 1e-9
    assert mass <= n + 1e-12


def test_scheme_consistency_two_affiliation_pub():
    reg = make_registry({"A": ("uni", []), "B": ("res", [])})
    pubs = [pub("p1", 2015, [("a1", ["A", "B"]), ("a2", ["A", "B"])], citations=4),
            pub("p2", 2015, [("a3", ["B"])], citations=1)]
    wprs = score_publications(pubs)
    ls = generate_all(pubs, reg)
    by = {(c.scheme, c.unit): c.share for c in credits(ls, wprs, reg) if c.level == "org"}
    assert by[("FA", "A")] == 1.0 and ("FA", "B") not in by
    assert by[("LA", "B")] == 1.0 and ("LA", "A") not in by
    assert by[("AA", "A")] == by[("AA", "B")] == 0.5
    w = wprs["p1"]
    aa = by[("AA", "A")] * w + by[("AA", "B")] * w
    assert aa == pytest.approx(0.5 * (by[("FA", "A")] * w) + 0.5 * (by[("LA", "B")] * w))


def _corpus():
    reg = make_registry({"A": ("uni", ["A.1"]), "B": ("res", []), "C": ("uni", []),
                         "D": ("gov", [])})
    rng = np.random.default_rng(11)
    orgs = ["A", "A.1", "B", "C", "D"]
    pubs = []
    for k in range(300):
        authors = []
        for a in range(1 + k % 3):
            m = 1 + rng.integers(0, 3)
            authors.append((f"au{a}", list(rng.choice(orgs, size=m, replace=False))))
        pubs.append(pub(f"p{k}", 2013 + k % 4, authors, int(rng.poisson(5)),
                        [f"F{j}" for j in range(1 + k % 2)]))
    return reg, pubs


def test_shares_conserve_credit():
    reg, pubs = _corpus()
    ls = generate_all(pubs, reg)
    creds = credits(ls, score_publications(pubs), reg)
    totals = {}
    for c in creds:
        key = (c.pub_id, c.scheme, c.level)
        totals[key] = totals.get(key, 0.0) + c.share
    assert totals and all(abs(v - 1.0) < 1e-12 for v in totals.values())
    assert {k[0] for k in totals} == set(ls.pub_ids())


def test_type_shares_are_sums_of_org_shares():
    reg, pubs = _corpus()
    creds = credits(generate_all(pubs, reg), score_publications(pubs), reg, ["AA"])
    org, typ = {}, {}
    for c in creds:
        if c.level == "org":
            key = (c.pub_id, reg.org_type(c.unit))
            org[key] = org.get(key, 0.0) + c.share
        else:
            typ[(c.pub_id, c.unit)] = c.share
    assert org.keys() == typ.keys()
    assert all(org[k] == pytest.approx(typ[k], abs=1e-12) for k in org)


def test_unit_scores_and_annual_series():
    reg, pubs = _corpus()
    creds = credits(generate_all(pubs, reg), score_publications(pubs), reg)
    scores = unit_scores(creds)
    for s in scores:
        assert 0 <= s.mwpr <= 100 and s.n_effective <= s.n_raw + 1e-12
    series = annual_series(creds)
    years = {k[4] for k in series}
    assert years == {2013, 2014, 2015, 2016}
    # the overall score is the mass-weighted mean of the yearly scores
    for s in scores:
        pts = [v for k, v in series.items() if k[:4] == (s.dataset, s.scheme, s.level, s.unit)]
        num = math.fsum(p.mwpr * p.n_effective for p in pts)
        assert num / math.fsum(p.n_effective for p in pts) == pytest.approx(s.mwpr, rel=1e-12)


def test_single_year_series_equals_overall():
    reg = make_registry({"A": ("uni", []), "B": ("res", [])})
    pubs = [pub(f"p{k}", 2015, [("a", ["A", "B"])], citations=k) for k in range(5)]
    creds = credits(generate_all(pubs, reg), score_publications(pubs), reg, ["AA"])
    (s,) = [s for s in unit_scores(creds) if s.unit == "A"]
    assert annual_series(creds)[(ALL, "AA", "org", "A", 2015)] == s


def _score(unit, m, n_eff, n_raw):
    return UnitScore(unit, "org", "AA", ALL, m, n_eff, n_raw)


def test_ranking_order_and_threshold():
    scores = [_score("u1", 60.0, 10, 500), _score("u2", 70.0, 5, 300),
              _score("u3", 60.0, 12, 420), _score("u4", 60.0, 12, 410)]
    assert [s.unit for s in ranked_units(scores, 0)] == ["u2", "u3", "u4", "u1"]
    assert [s.unit for s in ranked_units(scores, 400)] == ["u3", "u4", "u1"]
    assert [s.unit for s in ranked_units(scores, 0, top_k=2)] == ["u2", "u3"]
    elig = {"u1": 1000, "u2": 10}
    assert [s.unit for s in ranked_units(scores, 100, eligibility=elig)] == ["u1"]
    with pytest.raises(ValueError):
        ranked_units(scores, -1)


@given(st.lists(st.tuples(st.floats(0, 100), st.integers(0, 50)), max_size=20),
       st.integers(0, 50), st.integers(0, 20))
def test_ranking_monotone_in_threshold(rows, t, dt):
    scores = [_score(f"u{k}", m, n / 2, n) for k, (m, n) in enumerate(rows)]
    lo = {s.unit for s in ranked_units(scores, t)}
    hi = {s.unit for s in ranked_units(scores, t + dt)}
    assert hi <= lo


def test_refsets_use_full_universe():
    pubs = [pub("p1", 2015, [("a", ["A"])], 3), pub("p2", 2015, [("a", ["A", "B"])], 1)]
    refs = build_refsets(pubs)
    assert refs[("F1", 2015)].n == 2
