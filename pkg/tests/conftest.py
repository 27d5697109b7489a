import io
import time
from dataclasses import dataclass

import pytest

from skillshift import corpus, embed, synthlab


@dataclass
class DeskRun:
    world: synthlab.PlantedWorld
    lines: list
    postings: list
    vocabulary: corpus.SkillVocabulary
    embeddings: embed.EmbeddingMatrix
    snapshots: dict
    seconds: float


def make_posting(skills, year=2010, occupation="11-1000", employer="acme", lat=40.0, lon=-75.0,
                 post_id=None, **kw):
    return corpus.JobPosting(post_id or f"p{id(skills)}", year, occupation, employer, lat, lon,
                             tuple(skills), **kw)


@pytest.fixture(scope="session")
def desk():
    """Planted 6-cluster world at desk scale with a 32-dim single-worker embedding."""
    start = time.perf_counter()
    lines, world = synthlab.generate_planted_corpus(synthlab.WorldSpec(seed=0))
    postings, _ = corpus.parse_postings(io.BytesIO("".join(lines).encode()))
    postings = corpus.deduplicate(postings)
    vocab = corpus.SkillVocabulary.from_postings(postings)
    cfg = embed.TrainingConfig(dim=32, seed=0, workers=1)
    emb = embed.train_skipgram(embed.build_training_pairs(postings, vocab, cfg), cfg)
    snaps = corpus.build_snapshots(postings, years=world.spec.years)
    return DeskRun(world, lines, postings, vocab, emb, snaps, time.perf_counter() - start)


ACCEPTANCE: dict[int, str] = {}


def report(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
