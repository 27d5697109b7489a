"""Occupation vectors and the three skill-change metrics.

``vector_change`` is distance aware (1 - cosine of occupation vectors);
``dn_change`` sums absolute changes in per-skill ad shares;
``cluster_change`` does the same over skill-community occurrence shares.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .corpus import OccupationYearSnapshot
from .embed import EmbeddingMatrix, cosine_similarity
from .errors import DomainError, MissingSkill, NotFound, PartitionIncomplete, ReweightUndefined

log = logging.getLogger(__name__)

UNIFORM = "uniform"
FREQUENCY = "frequency"


@dataclass(frozen=True)
class OccupationVector:
    occupation: str
    year: int
    vector: np.ndarray
    skills: tuple[str, ...]
    mode: str = UNIFORM


@dataclass(frozen=True)
class ChangeReport:
    occupation: str
    t0: int
    t1: int
    vector_change: float
    dn_change: float
    dn_reweighted: float
    cluster_change: float
    n_ads_t0: int
    n_ads_t1: int

    FIELDS = ("occupation", "t0", "t1", "vector_change", "dn_change", "dn_reweighted",
              "cluster_change", "n_ads_t0", "n_ads_t1")


@dataclass(frozen=True)
class AttributionRecord:
    occupation: str
    skill: str
    direction: str  # "added" | "removed"
    contribution: float
    skipped: bool = False

    FIELDS = ("occupation", "skill", "direction", "contribution", "skipped")


def scope_skills(snapshot: OccupationYearSnapshot, scope="core") -> list[str]:
    """Skills entering the occupation vector.

    ``scope`` is ``"core"`` (the snapshot's core set), ``"all"``, or a
    fraction in (0, 1] selecting the top share of ranked skills.
    """
    if scope == "core":
        return list(snapshot.core_skills)
    if scope == "all":
        return snapshot.ranked_skills()
    return snapshot.top_fraction(float(scope))


def _weighted_vector(skills, weights, embeddings: EmbeddingMatrix) -> np.ndarray:
    missing = [s for s in skills if s not in embeddings]
    if missing:
        raise MissingSkill(missing)
    w = np.asarray(weights, dtype=float)
    return (w / w.sum()) @ embeddings.matrix(skills)


def _weights(snapshot, skills, mode):
    if mode == UNIFORM:
        return np.ones(len(skills))
    if mode == FREQUENCY:
        return np.array([snapshot.skill_counts[s] for s in skills], dtype=float)
    raise ValueError(f"unknown weighting mode {mode!r}")


def occupation_vector(snapshot: OccupationYearSnapshot, embeddings: EmbeddingMatrix,
                      mode: str = UNIFORM, scope="core") -> OccupationVector:
    skills = scope_skills(snapshot, scope)
    if not skills:
        raise DomainError("empty skill scope")
    vec = _weighted_vector(skills, _weights(snapshot, skills, mode), embeddings)
    if not np.any(vec):
        raise DomainError(f"zero occupation vector for {snapshot.occupation} {snapshot.year}")
    return OccupationVector(snapshot.occupation, snapshot.year, vec, tuple(skills), mode)


def _change(u, v) -> float:
    return float(min(2.0, max(0.0, 1.0 - cosine_similarity(u, v))))


def vector_change(snap0: OccupationYearSnapshot, snap1: OccupationYearSnapshot,
                  embeddings: EmbeddingMatrix, mode: str = UNIFORM, scope="core") -> float:
    """1 - cosine similarity between the occupation's vectors at t0 and t1."""
    v0 = occupation_vector(snap0, embeddings, mode, scope).vector
    v1 = occupation_vector(snap1, embeddings, mode, scope).vector
    return _change(v0, v1)


def dn_change(snap0: OccupationYearSnapshot, snap1: OccupationYearSnapshot,
              shares: str = "ads", reweight: str = "t0_over_t1") -> tuple[float, float]:
    """Sum over all listed skills of |share(t1) - share(t0)|, plus its reweighted value.

    ``shares="ads"`` uses the fraction of ads listing each skill;
    ``"occurrences"`` uses each skill's fraction of all skill occurrences.
    The reweighting factor is the ratio of skill occurrences per post at t0
    to that at t1 (``reweight="t1_over_t0"`` inverts it).
    """
    if snap0.n_ads == 0 or snap1.n_ads == 0:
        raise NotFound("zero postings")
    if shares == "ads":
        d0, d1 = snap0.n_ads, snap1.n_ads
    elif shares == "occurrences":
        d0, d1 = snap0.n_occurrences, snap1.n_occurrences
    else:
        raise ValueError(f"unknown share basis {shares!r}")
    c0, c1 = snap0.skill_counts, snap1.skill_counts
    raw = math.fsum(abs(c1.get(s, 0) / d1 - c0.get(s, 0) / d0) for s in sorted(c0.keys() | c1.keys()))
    occ0, occ1 = snap0.n_occurrences, snap1.n_occurrences
    if occ1 == 0 or occ0 == 0:
        raise ReweightUndefined(raw)
    ratio = (occ0 / snap0.n_ads) / (occ1 / snap1.n_ads)
    if reweight == "t1_over_t0":
        ratio = 1.0 / ratio
    elif reweight != "t0_over_t1":
        raise ValueError(f"unknown reweight direction {reweight!r}")
    return raw, raw * ratio


def cluster_change(snap0: OccupationYearSnapshot, snap1: OccupationYearSnapshot,
                   partition: dict[str, int]) -> float:
    """Sum over communities of |occurrence share(t1) - occurrence share(t0)|."""
    missing = [s for s in snap0.skill_counts.keys() | snap1.skill_counts.keys() if s not in partition]
    if missing:
        raise PartitionIncomplete(missing)

    def shares(snap):
        totals: dict[int, int] = {}
        for s, c in snap.skill_counts.items():
            totals[partition[s]] = totals.get(partition[s], 0) + c
        n = sum(totals.values())
        return {k: v / n for k, v in totals.items()}

    s0, s1 = shares(snap0), shares(snap1)
    return math.fsum(abs(s1.get(k, 0.0) - s0.get(k, 0.0)) for k in sorted(s0.keys() | s1.keys()))


def attribute_skill_contributions(snap0: OccupationYearSnapshot, snap1: OccupationYearSnapshot,
                                  embeddings: EmbeddingMatrix, mode: str = UNIFORM,
                                  scope="core") -> list[AttributionRecord]:
    """Per-skill share of the vector change for core skills added or removed between t0 and t1.

    Each skill's contribution is |real change - change with that skill
    deleted from its year's core set|. The remaining core set is not
    re-ranked after a deletion.
    """
    k0, k1 = scope_skills(snap0, scope), scope_skills(snap1, scope)
    w0, w1 = _weights(snap0, k0, mode), _weights(snap1, k1, mode)
    v0 = _weighted_vector(k0, w0, embeddings)
    v1 = _weighted_vector(k1, w1, embeddings)
    real = _change(v0, v1)
    occ = snap0.occupation
    records = []

    def counterfactual(skills, weights, drop):
        keep = [i for i, s in enumerate(skills) if s != drop]
        if not keep:
            return None
        return _weighted_vector([skills[i] for i in keep], weights[keep], embeddings)

    set0, set1 = set(k0), set(k1)
    for skill in sorted(set1 - set0):
        v = counterfactual(k1, w1, skill)
        if v is None:
            log.warning("deleting %s would empty the t1 core set of %s", skill, occ)
            records.append(AttributionRecord(occ, skill, "added", 0.0, skipped=True))
        else:
            records.append(AttributionRecord(occ, skill, "added", abs(real - _change(v0, v))))
    for skill in sorted(set0 - set1):
        v = counterfactual(k0, w0, skill)
        if v is None:
            log.warning("deleting %s would empty the t0 core set of %s", skill, occ)
            records.append(AttributionRecord(occ, skill, "removed", 0.0, skipped=True))
        else:
            records.append(AttributionRecord(occ, skill, "removed", abs(real - _change(v, v1))))
    records.sort(key=lambda r: (-r.contribution, r.direction, r.skill))
    return records


def occupation_similarity_matrix(snapshots: dict[str, OccupationYearSnapshot],
                                 embeddings: EmbeddingMatrix, mode: str = UNIFORM,
                                 scope="core") -> tuple[list[str], np.ndarray]:
    """Cosine similarity between every pair of occupation vectors for one year."""
    occupations = sorted(snapshots)
    vecs = np.array([occupation_vector(snapshots[o], embeddings, mode, scope).vector
                     for o in occupations])
    unit = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    sim = (sim + sim.T) / 2
    np.fill_diagonal(sim, 1.0)
    return occupations, sim


def change_reports(snapshots, embeddings: EmbeddingMatrix, occupations, t0: int, t1: int,
                   partition: dict[str, int] | None = None, mode: str = UNIFORM,
                   scope="core", reweight: str = "t0_over_t1") -> list[ChangeReport]:
    """ChangeReport for each occupation having snapshots in both years."""
    reports = []
    for occ in sorted(occupations):
        s0, s1 = snapshots.get((occ, t0)), snapshots.get((occ, t1))
        if s0 is None or s1 is None:
            continue
        raw, rw = dn_change(s0, s1, reweight=reweight)
        cc = cluster_change(s0, s1, partition) if partition is not None else float("nan")
        reports.append(ChangeReport(occ, t0, t1, vector_change(s0, s1, embeddings, mode, scope),
                                    raw, rw, cc, s0.n_ads, s1.n_ads))
    return reports
