import io
import json

import numpy as np
import pytest

from skillshift import corpus, drift, synthlab
from skillshift.errors import ConfigError

SMALL = synthlab.WorldSpec(seed=3, n_skills=240, n_occupations=8, posts_per_occupation_year=150,
                           n_bad_lines=5, pair_posts=60)


@pytest.fixture(scope="module")
def small():
    lines, world = synthlab.generate_planted_corpus(SMALL)
    postings, errors = corpus.parse_postings(io.BytesIO("".join(lines).encode()))
    return lines, world, postings, errors


def test_generation_is_deterministic():
    a, _ = synthlab.generate_planted_corpus(SMALL)
    b, _ = synthlab.generate_planted_corpus(SMALL)
    assert a == b
    c, _ = synthlab.generate_planted_corpus(synthlab.WorldSpec(**{**SMALL.__dict__, "seed": 4}))
    assert a != c


def test_bookkeeping_matches_parse(small):
    lines, world, postings, errors = small
    bk = world.bookkeeping
    assert bk["n_lines"] == len(lines)
    assert sorted(e.line for e in errors) == bk["bad_line_numbers"]
    assert len(corpus.deduplicate(postings)) == bk["n_unique"]
    assert len(postings) - bk["n_unique"] == bk["n_duplicates"]


def test_active_occupations_match_filter(small):
    _, world, postings, _ = small
    active = corpus.filter_active_occupations(corpus.deduplicate(postings), SMALL.years, min_ads=100)
    assert sorted(active) == world.bookkeeping["active_occupations"]


def test_skill_geometry_is_clustered(small):
    _, world, _, _ = small
    assert np.allclose(np.linalg.norm(world.centers, axis=1), 1)
    assert np.allclose(world.centers @ world.centers.T, np.eye(SMALL.n_clusters), atol=1e-12)
    clusters = world.cluster_of()
    for s in world.skill_names[:20]:
        pos = world.position(s)
        assert np.argmax(world.centers @ pos) == clusters[s]


def test_oracle_change_bounds(small):
    _, world, _, _ = small
    values = [synthlab.oracle_change(world, o) for o in world.generic_occupations()]
    assert all(0 <= v <= 2 for v in values)


def test_pair_has_equal_dn_change(small):
    _, world, postings, _ = small
    snaps = corpus.build_snapshots(corpus.deduplicate(postings), years=SMALL.years)
    t0, t1 = SMALL.years
    p = drift.dn_change(snaps[(synthlab.PAIR_P, t0)], snaps[(synthlab.PAIR_P, t1)])
    f = drift.dn_change(snaps[(synthlab.PAIR_F, t0)], snaps[(synthlab.PAIR_F, t1)])
    assert p == pytest.approx(f, abs=1e-12)
    assert synthlab.oracle_change(world, synthlab.PAIR_F) > synthlab.oracle_change(world, synthlab.PAIR_P)


def test_world_json_round_trip(small):
    _, world, _, _ = small
    back = synthlab.PlantedWorld.from_json(world.to_json())
    assert back.skill_names == world.skill_names
    assert np.allclose(back.skill_positions, world.skill_positions)
    for o in world.occupations:
        assert synthlab.oracle_change(back, o) == pytest.approx(synthlab.oracle_change(world, o))
    json.loads(world.to_json())


def test_write_planted_corpus(tmp_path):
    spec = synthlab.WorldSpec(seed=1, n_skills=60, n_occupations=4, posts_per_occupation_year=120, paired=False,
                              pair_posts=40)
    synthlab.write_planted_corpus(spec, tmp_path / "p.jsonl.gz", tmp_path / "p.manifest.json")
    postings, _ = corpus.parse_postings(tmp_path / "p.jsonl.gz")
    manifest = json.loads((tmp_path / "p.manifest.json").read_text())
    assert len(postings) == manifest["bookkeeping"]["n_lines"] - manifest["bookkeeping"]["n_bad_lines"]


def test_spec_validation():
    with pytest.raises(ConfigError):
        synthlab.WorldSpec(n_clusters=1).check()


def test_planted_dictionary_is_sparse():
    X, A, codes = synthlab.planted_sparse_dictionary(n_atoms=10, n_samples=50, sparsity=3)
    assert (np.count_nonzero(codes, axis=1) == 3).all()
    assert np.allclose(X, codes @ A)
