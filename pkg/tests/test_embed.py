import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skillshift import corpus, embed
from skillshift.errors import ConfigError, DomainError

from conftest import make_posting


def two_cluster_postings(n=400, seed=0):
    rng = np.random.default_rng(seed)
    groups = [[f"x{i}" for i in range(6)], [f"y{i}" for i in range(6)]]
    return [make_posting(list(rng.choice(groups[i % 2], size=3, replace=False)), post_id=str(i))
            for i in range(n)]


def test_keep_probability_formula():
    counts = np.array([1000, 10, 1])
    t = 1e-3
    f = counts / counts.sum()
    want = np.minimum(1, (np.sqrt(f / t) + 1) * t / f)
    assert embed.keep_probabilities(counts, t) == pytest.approx(want)
    assert embed.keep_probabilities(counts, 0) == pytest.approx(1.0)


def test_pairs_are_all_ordered_distinct_pairs():
    ps = [make_posting(["a", "b", "c"]), make_posting(["a"])]
    vocab = corpus.SkillVocabulary.from_postings(ps)
    pairs = embed.build_training_pairs(ps, vocab, embed.TrainingConfig(dim=4, subsample=0))
    got = sorted(zip(pairs.targets.tolist(), pairs.contexts.tolist()))
    assert got == sorted((i, j) for i in range(3) for j in range(3) if i != j)


def test_pairs_cap_per_posting():
    ps = [make_posting([f"s{i}" for i in range(10)])]
    vocab = corpus.SkillVocabulary.from_postings(ps)
    pairs = embed.build_training_pairs(ps, vocab, embed.TrainingConfig(dim=4, subsample=0,
                                                                        max_pairs_per_posting=7))
    assert len(pairs) == 7
    assert np.all(pairs.targets != pairs.contexts)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=2, max_size=8))
def test_noise_table_follows_power_law(counts):
    table = embed.noise_table(counts, 0.75, size=200_000)
    p = np.asarray(counts, float) ** 0.75
    freq = np.bincount(table, minlength=len(counts)) / len(table)
    assert np.allclose(freq, p / p.sum(), atol=1e-4)


def test_config_validation():
    with pytest.raises(ConfigError):
        embed.TrainingConfig(dim=1)
    with pytest.raises(ConfigError):
        embed.TrainingConfig(workers=0)
    assert embed.TrainingConfig(workers=4).digest() == embed.TrainingConfig(workers=1).digest()


def test_vocabulary_too_small_for_negatives():
    ps = [make_posting(["a", "b"])]
    vocab = corpus.SkillVocabulary.from_postings(ps)
    cfg = embed.TrainingConfig(dim=4, subsample=0)
    with pytest.raises(ConfigError):
        embed.train_skipgram(embed.build_training_pairs(ps, vocab, cfg), cfg)


def test_zero_epochs_returns_initialization():
    ps = two_cluster_postings(20)
    vocab = corpus.SkillVocabulary.from_postings(ps)
    cfg = embed.TrainingConfig(dim=8, epochs=0, subsample=0)
    emb = embed.train_skipgram(embed.build_training_pairs(ps, vocab, cfg), cfg)
    assert np.abs(emb.vectors).max() <= 0.5 / 8


def test_training_separates_clusters_and_lowers_loss():
    ps = two_cluster_postings()
    vocab = corpus.SkillVocabulary.from_postings(ps)
    cfg = embed.TrainingConfig(dim=16, epochs=5, subsample=0, alpha_start=0.05)
    pairs = embed.build_training_pairs(ps, vocab, cfg)
    emb = embed.train_skipgram(pairs, cfg, validation=pairs)
    assert emb.history[-1] < emb.history[0]
    assert len(emb.history) == cfg.epochs + 1
    near = [s for s, _ in emb.nearest_skills("x0", 5)]
    assert all(s.startswith("x") for s in near)


def test_single_worker_is_deterministic():
    ps = two_cluster_postings(100)
    cfg = embed.TrainingConfig(dim=8, epochs=2, subsample=0)
    a = embed.train_embeddings(ps, cfg)
    b = embed.train_embeddings(ps, cfg)
    assert a.vectors.tobytes() == b.vectors.tobytes()


def test_parallel_training_runs():
    ps = two_cluster_postings(200)
    emb = embed.train_embeddings(ps, embed.TrainingConfig(dim=8, epochs=2, subsample=0, workers=2))
    assert np.isfinite(emb.vectors).all()


def test_save_load_round_trip(tmp_path):
    emb = embed.train_embeddings(two_cluster_postings(50), embed.TrainingConfig(dim=8, epochs=1))
    emb.save(tmp_path / "e")
    back = embed.EmbeddingMatrix.load(tmp_path / "e")
    assert back.vocabulary.skills == emb.vocabulary.skills
    assert back.vocabulary.counts == emb.vocabulary.counts
    assert back.vectors.tobytes() == emb.vectors.tobytes()
    assert back.config_hash == emb.config_hash


def test_export_text_format(tmp_path):
    vocab = corpus.SkillVocabulary.from_list(["data entry", "sql"])
    emb = embed.EmbeddingMatrix(vocab, np.array([[1.0, 0.5], [0.0, 2.0]]))
    emb.export_text(tmp_path / "e.txt")
    lines = (tmp_path / "e.txt").read_text().splitlines()
    assert lines == ["2 2", "data_entry 1 0.5", "sql 0 2"]


def test_nearest_skills_rejects_zero_vector():
    vocab = corpus.SkillVocabulary.from_list(["a", "b"])
    emb = embed.EmbeddingMatrix(vocab, np.array([[0.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(DomainError):
        emb.nearest_skills("a")
