import itertools
import json
from collections import Counter
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2_contingency

from harbias import reference
from harbias.core import BinarizedProfile, SubjectProfile
from harbias.curation import (HMLabel, association_test, binarize_profiles, check_manifest,
                              crosstab, enumerate_settings, feasible_subsets,
                              heterogeneity_measure, load_manifest, profile_counts,
                              save_manifest, settings_from_entries)
from harbias.errors import ArgumentError, EnumerationError, ManifestError, StatError

CODES = ("YF", "OF", "YM", "OM")


def pool(counts):
    """Binarized profiles with the given code counts, ids 1..n."""
    out, i = [], 1
    for code, n in counts.items():
        for _ in range(n):
            out.append(BinarizedProfile(str(i), "young" if code[0] == "Y" else "old",
                                        "female" if code[1] == "F" else "male"))
            i += 1
    return out


def oracle_hm(codes):
    """Independent labeling from the multiset of profile codes."""
    kinds = sorted(set(codes))
    if len(kinds) == 2:
        (a1, g1), (a2, g2) = kinds
        return "HM2a" if (a1 == a2) != (g1 == g2) else "HM2b"
    return {1: "HM1", 3: "HM3", 4: "HM4"}[len(kinds)]


def test_median_split():
    subj = [SubjectProfile(str(i), a, "female", 160, 60) for i, a in enumerate([25, 30, 35, 40])]
    assert [p.age_class.value for p in binarize_profiles(subj)] == ["young", "young", "old", "old"]


def test_all_tied_goes_low():
    subj = [SubjectProfile(str(i), 30, "male", 170, 70) for i in range(5)]
    out = binarize_profiles(subj)
    assert {p.age_class.value for p in out} == {"young"}
    assert {p.height_class.value for p in out} == {"short"}


def test_binarize_needs_two():
    with pytest.raises(ArgumentError):
        binarize_profiles([SubjectProfile("1", 30, "male", 170, 70)])


def test_lara_profile_counts():
    counts = profile_counts(binarize_profiles(reference.lara_subjects()))
    assert dict(counts) == {"YF": 4, "OF": 3, "YM": 3, "OM": 4}


def test_motionsense_profile_counts_have_24_subjects():
    assert len(reference.motionsense_subjects()) == 24


def _combined():
    return binarize_profiles(reference.lara_subjects()) + binarize_profiles(reference.motionsense_subjects())


def test_combined_tables():
    profiles = _combined()
    assert len(profiles) == 38
    assert crosstab(profiles, "gender", "weight_class").counts.tolist() == [[12, 5], [7, 14]]
    assert crosstab(profiles, "gender", "height_class").counts.tolist() == [[16, 1], [3, 18]]


def test_single_profile_table():
    t = crosstab(pool({"YF": 1}), "gender", "age_class")
    assert t.counts.tolist() == [[1, 0], [0, 0]]


def test_crosstab_missing_attribute():
    with pytest.raises(ArgumentError) as exc:
        crosstab(pool({"YF": 2}), "gender", "weight_class")
    assert exc.value.reason == "missing_attribute"


def test_association_weight_example():
    res = association_test(np.array([[12, 5], [7, 14]]))
    # expected counts from the marginals
    exp = np.array([[17 * 19 / 38, 17 * 19 / 38], [21 * 19 / 38, 21 * 19 / 38]])
    assert np.allclose(res.expected, exp)
    hand = ((12 - 8.5) ** 2 / 8.5 + (5 - 8.5) ** 2 / 8.5 + (7 - 10.5) ** 2 / 10.5
            + (14 - 10.5) ** 2 / 10.5)
    assert res.statistic == pytest.approx(hand, rel=1e-12)
    assert res.statistic == pytest.approx(5.22, abs=0.01)
    assert res.significant_at_0_05 and res.dof == 1


def test_association_independent_and_perfect():
    assert association_test([[10, 10], [10, 10]]).statistic == 0
    assert not association_test([[10, 10], [10, 10]]).significant_at_0_05
    res = association_test([[5, 0], [0, 5]])
    assert res.statistic == pytest.approx(10.0) and res.significant_at_0_05


def test_association_degenerate():
    with pytest.raises(StatError) as exc:
        association_test([[3, 0], [4, 0]])
    assert exc.value.reason == "degenerate_table"


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 60), min_size=4, max_size=4), st.booleans())
def test_association_matches_scipy_and_transpose(cells, yates):
    counts = np.array(cells).reshape(2, 2)
    res = association_test(counts, correction=yates)
    stat, p, dof, _ = chi2_contingency(counts, correction=yates)
    assert res.statistic == pytest.approx(stat, rel=1e-9, abs=1e-12)
    assert res.p_value == pytest.approx(p, rel=1e-9, abs=1e-15)
    assert association_test(counts.T, correction=yates).statistic == pytest.approx(res.statistic, rel=1e-12)


@pytest.mark.parametrize("codes,label", [
    (("YF",) * 4, "HM1"),
    (("YM", "YM", "YF", "YF"), "HM2a"),
    (("YF", "OM", "OM", "OM"), "HM2b"),
    (("YF", "OF", "YM", "OM"), "HM4"),
    (("YF", "YF", "OF", "YM"), "HM3"),
])
def test_hm_examples(codes, label):
    assert heterogeneity_measure(pool(Counter(codes))).value == label


def test_hm_totality_over_35_multisets():
    multisets = list(itertools.combinations_with_replacement(CODES, 4))
    assert len(multisets) == 35
    labels = Counter()
    for ms in multisets:
        got = heterogeneity_measure(pool(Counter(ms)))
        assert got.value == oracle_hm(ms)
        labels[got.value] += 1
    assert labels == {"HM1": 4, "HM2a": 12, "HM2b": 6, "HM3": 12, "HM4": 1}


def test_hm_needs_four():
    with pytest.raises(ArgumentError):
        heterogeneity_measure(pool({"YF": 3}))


@settings(max_examples=25, deadline=None)
@given(st.tuples(*[st.integers(0, 5)] * 4).filter(lambda c: 4 <= sum(c) <= 14))
def test_partition_of_all_subsets(counts):
    profiles = pool(dict(zip(CODES, counts)))
    n = len(profiles)
    families = {hm: set(feasible_subsets(profiles, hm)) for hm in HMLabel}
    assert sum(len(f) for f in families.values()) == comb(n, 4)
    for a, b in itertools.combinations(families.values(), 2):
        assert not a & b
    codes = {p.subject_id: p.code for p in profiles}
    for hm, fam in families.items():
        for combo in fam:
            assert oracle_hm([codes[s] for s in combo]) == hm.value


def test_partition_at_24_subjects():
    profiles = pool({"YF": 7, "OF": 5, "YM": 6, "OM": 6})
    total = sum(len(feasible_subsets(profiles, hm)) for hm in HMLabel)
    assert total == comb(24, 4)


def test_lara_feasible_counts():
    profiles = binarize_profiles(reference.lara_subjects())
    assert len(feasible_subsets(profiles, "HM1")) == 2
    assert len(feasible_subsets(profiles, "HM4")) == 144 == 4 * 3 * 3 * 4
    chosen = enumerate_settings(profiles, "HM1", 10)
    assert len(chosen) == 2
    codes = {p.subject_id: p.code for p in profiles}
    assert sorted({codes[s] for s in c.train_subjects}.pop() for c in chosen) == ["OM", "YF"]


def test_enumerate_without_cap_is_the_feasible_family():
    profiles = pool({"YF": 4, "OF": 2, "YM": 2, "OM": 3})
    for hm in HMLabel:
        got = {s.train_subjects for s in enumerate_settings(profiles, hm, None)}
        assert got == set(feasible_subsets(profiles, hm))


def test_enumerate_is_seeded_and_distinct():
    profiles = binarize_profiles(reference.lara_subjects())
    a = enumerate_settings(profiles, "HM4", 10, seed=5)
    b = enumerate_settings(profiles, "HM4", 10, seed=5)
    c = enumerate_settings(profiles, "HM4", 10, seed=6)
    assert a == b and a != c
    assert len({s.train_subjects for s in a}) == 10
    for s in a:
        assert heterogeneity_measure([p for p in profiles if p.subject_id in s.train_subjects]) is HMLabel.HM4
        assert len(s.test_subjects) == 10
        assert not set(s.train_subjects) & set(s.test_subjects)


def test_enumerate_uniform_selection():
    # every feasible subset should be drawn about equally often
    profiles = pool({"YF": 2, "OF": 2, "YM": 2, "OM": 2})
    family = feasible_subsets(profiles, "HM4")
    hits = Counter()
    for seed in range(400):
        for s in enumerate_settings(profiles, "HM4", 2, seed=seed):
            hits[s.train_subjects] += 1
    expected = 400 * 2 / len(family)
    assert set(hits) == set(family)
    assert max(abs(v - expected) for v in hits.values()) < 0.35 * expected


def test_enumerate_errors():
    with pytest.raises(EnumerationError) as exc:
        enumerate_settings(pool({"YF": 9}), "HM4")
    assert exc.value.reason == "infeasible_hm"
    with pytest.raises(ArgumentError):
        enumerate_settings(pool({"YF": 7}), "HM1")


def test_published_manifest_rows():
    lara = {e["setting_id"]: e for e in reference.published_settings("lara")}
    row = next(e for e in lara.values() if sorted(map(int, e["train_subjects"])) == [3, 9, 10, 14])
    (setting,) = settings_from_entries([row], reference.lara_subjects())
    assert setting.hm is HMLabel.HM1 and len(setting.test_subjects) == 10
    ms = reference.published_settings("motionsense")
    row = next(e for e in ms if sorted(map(int, e["train_subjects"])) == [8, 10, 11, 15])
    assert row["hm"] == "HM4"
    (setting,) = settings_from_entries([row], reference.motionsense_subjects())
    assert setting.hm is HMLabel.HM4 and len(setting.test_subjects) == 20


def test_motionsense_manifest_verifies_completely():
    entries = reference.published_settings("motionsense")
    assert len(entries) == 28
    assert check_manifest(entries, reference.motionsense_subjects()) == []


def test_lara_manifest_known_inconsistencies():
    # two published rows disagree with the published metadata (see notes)
    bad = check_manifest(reference.published_settings("lara"), reference.lara_subjects())
    assert [(d, c) for _, d, c in bad] == [("HM2b", "HM2a")] * len(bad)


def test_manifest_errors(tmp_path):
    profiles = pool({"YF": 4, "OM": 4})
    subjects = profiles
    with pytest.raises(ManifestError) as exc:
        settings_from_entries([{"setting_id": "x", "hm": "HM4", "train_subjects": ["1", "2", "3", "4"]}],
                              subjects)
    assert exc.value.reason == "hm_mismatch"
    with pytest.raises(ManifestError) as exc:
        settings_from_entries([{"setting_id": "x", "hm": "HM1", "train_subjects": ["1", "2", "3", "99"]}],
                              subjects)
    assert exc.value.reason == "unknown_subject"
    good = enumerate_settings(profiles, "HM2b", 3)
    path = save_manifest(good, tmp_path / "m.json")
    assert load_manifest(path, subjects) == good
    assert json.loads(path.read_text())[0]["hm"] == "HM2b"


def test_hm_label_parse():
    assert HMLabel.parse("HM 2a") is HMLabel.HM2a
    assert HMLabel.parse("2b") is HMLabel.HM2b
    assert HMLabel.HM2a.group == "HM2"
    with pytest.raises(ValueError):
        HMLabel.parse("HM5")
