"""Job-posting ingestion: parsing, validation, deduplication and per-occupation snapshots."""

from __future__ import annotations

import gzip
import io
import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

from .errors import CorruptInput, NotFound

EDUCATION_YEARS = frozenset({12, 14, 16, 18, 21})
_SOC = re.compile(r"^\d{2}-\d{4}$")
_WS = re.compile(r"\s+")


def canonicalize(skill: str) -> str:
    """Lower-case, trim and collapse internal whitespace. Idempotent."""
    return _WS.sub(" ", skill.strip().lower())


@dataclass(frozen=True)
class JobPosting:
    post_id: str
    year: int
    occupation: str
    employer: str
    lat: float
    lon: float
    skills: tuple[str, ...]
    education_years: int | None = None
    salary: float | None = None
    job_zone: int | None = None

    def dedup_key(self):
        return (self.year, self.occupation, self.employer, self.lat, self.lon,
                tuple(sorted(self.skills)), self.education_years, self.salary)


@dataclass(frozen=True)
class RecordError:
    line: int
    reason: str

    def to_dict(self):
        return {"line": self.line, "reason": self.reason}


@dataclass(frozen=True)
class Schema:
    """Maps JobPosting fields to the keys used in the input records."""

    post_id: str = "post_id"
    year: str = "year"
    occupation: str = "occupation"
    employer: str = "employer"
    lat: str = "lat"
    lon: str = "lon"
    skills: str = "skills"
    education_years: str = "education_years"
    salary: str = "salary"
    job_zone: str = "job_zone"


class _Invalid(ValueError):
    pass


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _Invalid(f"non-numeric {name}")
    if not math.isfinite(value):
        raise _Invalid(f"non-finite {name}")
    return float(value)


def _integer(value, name):
    if isinstance(value, bool):
        raise _Invalid(f"non-integer {name}")
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int):
        raise _Invalid(f"non-integer {name}")
    return value


def posting_from_record(record: dict, schema: Schema = Schema(), default_id: str = "") -> JobPosting:
    """Validate one decoded record. Raises ``ValueError`` with a short reason on failure."""
    if not isinstance(record, dict):
        raise _Invalid("record is not an object")
    if schema.skills not in record or record[schema.skills] is None:
        raise _Invalid("missing skills")
    for name in ("year", "occupation", "lat", "lon"):
        if record.get(getattr(schema, name)) is None:
            raise _Invalid(f"missing {name}")

    raw_skills = record[schema.skills]
    if not isinstance(raw_skills, list):
        raise _Invalid("skills is not a list")
    skills: list[str] = []
    seen = set()
    for s in raw_skills:
        if not isinstance(s, str):
            raise _Invalid("non-string skill")
        s = canonicalize(s)
        if s and s not in seen:
            seen.add(s)
            skills.append(s)
    if not skills:
        raise _Invalid("empty skills")

    year = _integer(record[schema.year], "year")
    occupation = record[schema.occupation]
    if not isinstance(occupation, str) or not _SOC.match(occupation.strip()):
        raise _Invalid("occupation is not a dd-dddd SOC code")
    lat = _number(record[schema.lat], "lat")
    lon = _number(record[schema.lon], "lon")
    if not -90.0 <= lat <= 90.0:
        raise _Invalid("lat out of range")
    if not -180.0 <= lon <= 180.0:
        raise _Invalid("lon out of range")

    employer = record.get(schema.employer) or ""
    if not isinstance(employer, str):
        raise _Invalid("employer is not a string")

    education = record.get(schema.education_years)
    if education is not None:
        education = _integer(education, "education_years")
        if education not in EDUCATION_YEARS:
            raise _Invalid("education_years not in {12,14,16,18,21}")
    salary = record.get(schema.salary)
    if salary is not None:
        salary = _number(salary, "salary")
        if salary <= 0:
            raise _Invalid("salary not positive")
    zone = record.get(schema.job_zone)
    if zone is not None:
        zone = _integer(zone, "job_zone")
        if not 1 <= zone <= 5:
            raise _Invalid("job_zone not in 1..5")

    post_id = record.get(schema.post_id)
    post_id = default_id if post_id is None else str(post_id)
    return JobPosting(post_id, year, occupation.strip(), employer.strip(), lat, lon,
                      tuple(skills), education, salary, zone)


def posting_to_record(p: JobPosting, schema: Schema = Schema()) -> dict:
    rec = {
        schema.post_id: p.post_id,
        schema.year: p.year,
        schema.occupation: p.occupation,
        schema.employer: p.employer,
        schema.lat: p.lat,
        schema.lon: p.lon,
        schema.skills: list(p.skills),
    }
    if p.education_years is not None:
        rec[schema.education_years] = p.education_years
    if p.salary is not None:
        rec[schema.salary] = p.salary
    if p.job_zone is not None:
        rec[schema.job_zone] = p.job_zone
    return rec


def _open_binary(source) -> IO[bytes]:
    if isinstance(source, (str, Path)):
        return open(source, "rb")
    return source


def _iter_lines(stream: IO[bytes]) -> Iterator[bytes]:
    if hasattr(stream, "peek"):
        head = stream.peek(2)[:2]
    else:
        stream = io.BufferedReader(stream)
        head = stream.peek(2)[:2]
    if head == b"\x1f\x8b":
        stream = gzip.GzipFile(fileobj=stream)
    yield from stream


def parse_postings(source, schema: Schema = Schema(), max_bad_fraction: float = 0.5):
    """Parse line-delimited JSON records from a path or binary stream.

    Returns ``(postings, errors)``. Bad lines become :class:`RecordError`
    entries; if more than ``max_bad_fraction`` of non-blank lines are bad
    the whole input is rejected with :class:`CorruptInput`. I/O failures
    propagate.
    """
    stream = _open_binary(source)
    postings: list[JobPosting] = []
    errors: list[RecordError] = []
    n_lines = 0
    try:
        for lineno, raw in enumerate(_iter_lines(stream), start=1):
            if not raw.strip():
                continue
            n_lines += 1
            try:
                record = json.loads(raw)
            except (json.JSONDecodeError, UnicodeDecodeError):
                errors.append(RecordError(lineno, "invalid json"))
                continue
            try:
                postings.append(posting_from_record(record, schema, default_id=f"line-{lineno}"))
            except _Invalid as exc:
                errors.append(RecordError(lineno, str(exc)))
    finally:
        if isinstance(source, (str, Path)):
            stream.close()
    if n_lines and len(errors) > max_bad_fraction * n_lines:
        raise CorruptInput(f"corrupt input: {len(errors)} of {n_lines} lines malformed")
    return postings, errors


def write_postings(path, postings: Iterable[JobPosting], schema: Schema = Schema()) -> int:
    n = 0
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8") as fh:
        for p in postings:
            fh.write(json.dumps(posting_to_record(p, schema), ensure_ascii=False) + "\n")
            n += 1
    return n


def write_errors(path, errors: Iterable[RecordError]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in errors:
            fh.write(json.dumps(e.to_dict()) + "\n")


def deduplicate(postings: Iterable[JobPosting]) -> list[JobPosting]:
    """Drop exact duplicates (every field except ``post_id``), keeping the first occurrence."""
    seen = set()
    out = []
    for p in postings:
        key = p.dedup_key()
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


def filter_active_occupations(postings: Iterable[JobPosting], years, min_ads: int = 100) -> set[str]:
    """Occupations with at least ``min_ads`` postings in every one of ``years``."""
    years = list(years)
    if not years:
        raise ValueError("years must be non-empty")
    counts = Counter((p.occupation, p.year) for p in postings)
    occupations = {occ for occ, _ in counts}
    return {o for o in occupations if all(counts[(o, y)] >= min_ads for y in years)}


class SkillVocabulary:
    """Dense skill ids ordered by descending global count, then by name."""

    def __init__(self, counts: dict[str, int]):
        items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        self.skills = [s for s, _ in items]
        self.counts = [c for _, c in items]
        self._index = {s: i for i, s in enumerate(self.skills)}

    @classmethod
    def from_postings(cls, postings: Iterable[JobPosting]) -> "SkillVocabulary":
        return cls(Counter(s for p in postings for s in p.skills))

    @classmethod
    def from_list(cls, skills: list[str], counts: list[int] | None = None) -> "SkillVocabulary":
        vocab = cls.__new__(cls)
        vocab.skills = list(skills)
        vocab.counts = list(counts) if counts is not None else [1] * len(skills)
        vocab._index = {s: i for i, s in enumerate(vocab.skills)}
        return vocab

    def __len__(self):
        return len(self.skills)

    def __contains__(self, skill):
        return skill in self._index

    def __iter__(self):
        return iter(self.skills)

    def id(self, skill: str) -> int:
        try:
            return self._index[skill]
        except KeyError:
            raise NotFound(f"unknown skill: {skill!r}") from None

    def get(self, skill: str, default=None):
        return self._index.get(skill, default)


@dataclass(frozen=True)
class OccupationYearSnapshot:
    occupation: str
    year: int
    n_ads: int
    skill_counts: dict[str, int] = field(repr=False)
    core_skills: tuple[str, ...]
    core_quantile: float = 0.05

    @property
    def skill_shares(self) -> dict[str, float]:
        return {s: c / self.n_ads for s, c in self.skill_counts.items()}

    @property
    def n_occurrences(self) -> int:
        return sum(self.skill_counts.values())

    def ranked_skills(self) -> list[str]:
        return sorted(self.skill_counts, key=lambda s: (-self.skill_counts[s], s))

    def top_fraction(self, fraction: float) -> list[str]:
        ranked = self.ranked_skills()
        return ranked[:core_size(len(ranked), fraction)]


def core_size(n_distinct: int, q: float) -> int:
    return max(1, math.ceil(q * n_distinct - 1e-12))


def _snapshot(occupation, year, posts, q):
    if not posts:
        raise NotFound(f"no postings for occupation {occupation} in {year}")
    counts = Counter(s for p in posts for s in p.skills)
    ranked = sorted(counts, key=lambda s: (-counts[s], s))
    core = tuple(ranked[:core_size(len(ranked), q)])
    return OccupationYearSnapshot(occupation, year, len(posts), dict(counts), core, q)


def build_snapshot(postings: Iterable[JobPosting], occupation: str, year: int,
                   core_quantile: float = 0.05) -> OccupationYearSnapshot:
    posts = [p for p in postings if p.occupation == occupation and p.year == year]
    return _snapshot(occupation, year, posts, core_quantile)


def build_snapshots(postings: Iterable[JobPosting], years=None, occupations=None,
                    core_quantile: float = 0.05) -> dict[tuple[str, int], OccupationYearSnapshot]:
    """Snapshots for every (occupation, year) cell present, keyed by that pair."""
    groups: dict[tuple[str, int], list[JobPosting]] = defaultdict(list)
    years = None if years is None else set(years)
    occupations = None if occupations is None else set(occupations)
    for p in postings:
        if years is not None and p.year not in years:
            continue
        if occupations is not None and p.occupation not in occupations:
            continue
        groups[(p.occupation, p.year)].append(p)
    return {key: _snapshot(key[0], key[1], posts, core_quantile)
            for key, posts in sorted(groups.items())}
