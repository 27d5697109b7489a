import gzip
import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from skillshift import corpus
from skillshift.errors import CorruptInput, NotFound

from conftest import make_posting


def record(**kw):
    rec = {"post_id": "1", "year": 2010, "occupation": "15-1132", "employer": "Acme",
           "lat": 40.1, "lon": -75.2, "skills": ["Python", "SQL"]}
    rec.update(kw)
    return rec


def as_stream(records):
    lines = [r if isinstance(r, str) else json.dumps(r) for r in records]
    return io.BytesIO(("\n".join(lines) + "\n").encode())


@given(st.text())
def test_canonicalize_idempotent(s):
    once = corpus.canonicalize(s)
    assert corpus.canonicalize(once) == once


def test_canonicalize_collapses_case_and_space():
    assert corpus.canonicalize("  Machine \t Learning ") == "machine learning"


def test_record_round_trip():
    p = corpus.posting_from_record(record(education_years=16, salary=55000.0, job_zone=4))
    assert p.skills == ("python", "sql")
    assert corpus.posting_from_record(corpus.posting_to_record(p)) == p


def test_duplicate_skills_collapse_within_posting():
    p = corpus.posting_from_record(record(skills=["SQL", "sql ", "Excel"]))
    assert p.skills == ("sql", "excel")


@pytest.mark.parametrize("bad, reason", [
    ({"skills": None}, "missing skills"),
    ({"skills": ["  "]}, "empty skills"),
    ({"occupation": "151132"}, "occupation is not a dd-dddd SOC code"),
    ({"lat": 91.0}, "lat out of range"),
    ({"education_years": 13}, "education_years not in {12,14,16,18,21}"),
    ({"salary": -1.0}, "salary not positive"),
    ({"job_zone": 6}, "job_zone not in 1..5"),
])
def test_invalid_records_rejected(bad, reason):
    with pytest.raises(ValueError, match=reason.replace("{", r"\{").replace("}", r"\}").replace(".", r"\.")):
        corpus.posting_from_record(record(**bad))


def test_parse_reports_bad_lines_with_numbers():
    postings, errors = corpus.parse_postings(as_stream([record(), "{not json", record(skills=[]), record()]))
    assert len(postings) == 2
    assert [(e.line, e.reason) for e in errors] == [(2, "invalid json"), (3, "empty skills")]


def test_parse_gzip_stream_detected():
    raw = ("\n".join(json.dumps(record(post_id=str(i))) for i in range(5)) + "\n").encode()
    postings, errors = corpus.parse_postings(io.BytesIO(gzip.compress(raw)))
    assert len(postings) == 5 and not errors


def test_parse_rejects_mostly_corrupt_input():
    with pytest.raises(CorruptInput):
        corpus.parse_postings(as_stream([record(), "x", "y"]))


def test_write_then_parse(tmp_path):
    ps = [corpus.posting_from_record(record(post_id=str(i), year=2010 + i)) for i in range(3)]
    for name in ("a.jsonl", "a.jsonl.gz"):
        corpus.write_postings(tmp_path / name, ps)
        assert corpus.parse_postings(tmp_path / name)[0] == ps


def test_deduplicate_keeps_first_and_ignores_post_id_and_skill_order():
    a = make_posting(["x", "y"], post_id="a")
    b = make_posting(["y", "x"], post_id="b")
    c = make_posting(["x", "y"], post_id="c", employer="other")
    assert corpus.deduplicate([a, b, c]) == [a, c]


def test_active_occupations_need_volume_in_every_year():
    ps = ([make_posting(["a"], occupation="11-0001", year=y) for y in (2010, 2018) for _ in range(3)]
          + [make_posting(["a"], occupation="11-0002", year=2010) for _ in range(3)])
    assert corpus.filter_active_occupations(ps, (2010, 2018), min_ads=3) == {"11-0001"}


def test_vocabulary_order_and_lookup():
    v = corpus.SkillVocabulary({"b": 2, "a": 2, "c": 5})
    assert v.skills == ["c", "a", "b"]
    assert v.id("a") == 1
    with pytest.raises(NotFound):
        v.id("zzz")


@pytest.mark.parametrize("n, q, expected", [(1, 0.05, 1), (20, 0.05, 1), (21, 0.05, 2), (40, 0.05, 2),
                                            (100, 0.05, 5), (101, 0.05, 6), (10, 0.5, 5)])
def test_core_size(n, q, expected):
    assert corpus.core_size(n, q) == expected


def test_snapshot_core_is_top_five_percent_by_share():
    # 40 distinct skills: A in 9 ads, B in 8, the rest once each -> core [A, B]
    ads = [["A", "B"]] * 8 + [["A"]] + [[f"s{i:02d}"] for i in range(38)]
    snap = corpus.build_snapshot([make_posting(s) for s in ads], "11-1000", 2010)
    assert snap.n_ads == 47
    assert snap.core_skills == ("A", "B")
    assert snap.skill_shares["A"] == pytest.approx(9 / 47)


def test_snapshot_ties_break_by_name():
    snap = corpus.build_snapshot([make_posting(["b", "a"])], "11-1000", 2010, core_quantile=0.5)
    assert snap.core_skills == ("a",)


def test_snapshot_missing_cell_raises():
    with pytest.raises(NotFound):
        corpus.build_snapshot([make_posting(["a"])], "11-1000", 2011)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcdefghij"), min_size=1, max_size=5, unique=True),
                min_size=1, max_size=20), st.floats(0.01, 1.0))
def test_core_skills_dominate_non_core(ads, q):
    snap = corpus.build_snapshot([make_posting(s) for s in ads], "11-1000", 2010, core_quantile=q)
    rest = set(snap.skill_counts) - set(snap.core_skills)
    assert len(snap.core_skills) == corpus.core_size(len(snap.skill_counts), q)
    assert all(snap.skill_counts[c] >= snap.skill_counts[r] for c in snap.core_skills for r in rest)
