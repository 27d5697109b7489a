"""Synthetic job-posting corpora with planted skill geometry and drift.

Skills sit around orthonormal cluster centers in a latent space. Each
occupation has a latent direction per year; a posting draws its skills
with probability proportional to ``popularity * exp(kappa * <x_s, z>)``
where ``z`` is the occupation direction plus a little per-post jitter.
Drift rotates an occupation's direction toward another cluster by a
planted angle.

Two hand-built occupations support the metric-reversal check: P swaps
core skills within its cluster, F swaps the same number across clusters,
and both share an identical posting pattern so their share changes match.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .corpus import JobPosting, core_size, posting_to_record
from .errors import ConfigError
from .graph import PmiGraph

PAIR_P = "99-0001"
PAIR_F = "99-0002"
EDUCATION_LEVELS = (12, 14, 16, 18, 21)
ZONE_FOR_EDUCATION = {12: 2, 14: 3, 16: 4, 18: 5, 21: 5}


@dataclass(frozen=True)
class WorldSpec:
    seed: int = 0
    n_clusters: int = 6
    n_skills: int = 500
    n_occupations: int = 40
    posts_per_occupation_year: int = 600
    latent_dim: int = 32
    years: tuple[int, int] = (2010, 2018)
    skill_spread: float = 0.6
    occupation_spread: float = 0.3
    post_jitter: float = 0.3
    concentration: float = 10.0
    popularity_sigma: float = 0.5
    mean_skills_per_post: float = 8.0
    max_skills_per_post: int = 20
    max_drift_deg: float = 90.0
    zero_drift_fraction: float = 0.1
    core_quantile: float = 0.05
    # metric-reversal pair
    paired: bool = True
    pair_posts: int = 200
    pair_core: int = 8
    pair_swaps: int = 4
    pair_tail_per_post: int = 4
    # inactive occupations: full volume at t0, sparse_posts at t1
    n_sparse_occupations: int = 3
    sparse_posts: int = 40
    # ingestion noise
    duplicate_fraction: float = 0.07
    n_bad_lines: int = 0
    # geography and employers
    n_cities: int = 3
    n_towns: int = 27
    city_share: float = 0.6
    n_large_employers: int = 20
    large_employer_share: float = 0.4
    small_employer_posts: int = 5
    missing_employer_share: float = 0.05
    education_share: float = 0.5
    salary_share: float = 0.3

    def check(self):
        if self.n_clusters < 2 or self.n_clusters > self.latent_dim:
            raise ConfigError("need 2 <= n_clusters <= latent_dim")
        if self.n_skills < self.n_clusters:
            raise ConfigError("fewer skills than clusters")
        per_cluster = self.n_skills // self.n_clusters
        if self.paired:
            if self.pair_swaps > self.pair_core:
                raise ConfigError("pair_swaps exceeds pair_core")
            if self.pair_core + self.pair_swaps > per_cluster:
                raise ConfigError("more core skills than skills in a cluster")
            tail = 19 * self.pair_core
            if self.pair_core + 2 * self.pair_swaps + tail > self.n_skills:
                raise ConfigError("more core and tail skills than skills")
            if self.pair_tail_per_post > tail:
                raise ConfigError("pair_tail_per_post exceeds the tail pool")
        if self.mean_skills_per_post < 2 or self.max_skills_per_post < 3:
            raise ConfigError("postings need at least a few skills")
        if self.max_skills_per_post > self.n_skills:
            raise ConfigError("more skills per post than skills")


@dataclass
class OccupationPlan:
    code: str
    kind: str  # generic | pair_p | pair_f | sparse
    home_cluster: int
    target_cluster: int
    drift_deg: float | None
    core_t0: list[str]
    core_t1: list[str]
    education: int
    salary: float
    posts: dict[str, int] = field(default_factory=dict)  # year -> planted unique posts


@dataclass
class PlantedWorld:
    skill_names: list[str]
    skill_cluster: list[int]
    skill_positions: np.ndarray
    occupations: dict[str, OccupationPlan]
    centers: np.ndarray | None = None
    spec: WorldSpec = field(default_factory=WorldSpec)
    markets: dict = field(default_factory=dict)
    bookkeeping: dict = field(default_factory=dict)

    def position(self, skill: str) -> np.ndarray:
        return self.skill_positions[self.skill_names.index(skill)]

    def cluster_of(self) -> dict[str, int]:
        return dict(zip(self.skill_names, self.skill_cluster))

    def generic_occupations(self) -> list[str]:
        return sorted(c for c, o in self.occupations.items() if o.kind == "generic")

    def to_json(self) -> str:
        payload = {
            "format": "skillshift-planted-world/1",
            "spec": asdict(self.spec),
            "skills": [{"name": n, "cluster": int(c), "position": [round(float(v), 10) for v in p]}
                       for n, c, p in zip(self.skill_names, self.skill_cluster, self.skill_positions)],
            "centers": None if self.centers is None else [[round(float(v), 10) for v in c] for c in self.centers],
            "occupations": [asdict(self.occupations[k]) for k in sorted(self.occupations)],
            "markets": self.markets,
            "bookkeeping": self.bookkeeping,
        }
        return json.dumps(payload, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PlantedWorld":
        d = json.loads(text)
        spec_d = dict(d["spec"])
        spec_d["years"] = tuple(spec_d["years"])
        occs = {o["code"]: OccupationPlan(**o) for o in d["occupations"]}
        return cls([s["name"] for s in d["skills"]], [s["cluster"] for s in d["skills"]],
                   np.array([s["position"] for s in d["skills"]], dtype=float), occs,
                   None if d["centers"] is None else np.array(d["centers"]), WorldSpec(**spec_d),
                   d["markets"], d["bookkeeping"])


def oracle_change(world: PlantedWorld, occupation: str) -> float:
    """1 - cosine between latent means of the planted t0 and t1 core skills."""
    plan = world.occupations[occupation]
    m0 = np.mean([world.position(s) for s in plan.core_t0], axis=0)
    m1 = np.mean([world.position(s) for s in plan.core_t1], axis=0)
    cos = m0 @ m1 / (np.linalg.norm(m0) * np.linalg.norm(m1))
    return float(1.0 - np.clip(cos, -1.0, 1.0))


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _rotate_toward(u, target, theta):
    w = target - (target @ u) * u
    w = w / np.linalg.norm(w)
    return math.cos(theta) * u + math.sin(theta) * w


def _expected_core(probs, spec, n_posts):
    """Planted core: top skills by draw probability, sized from the expected distinct count."""
    m = spec.mean_skills_per_post
    incl = 1.0 - (1.0 - probs) ** m
    distinct = np.sum(1.0 - (1.0 - incl) ** n_posts)
    order = np.lexsort((np.arange(len(probs)), -probs))
    return order[:core_size(int(round(distinct)), spec.core_quantile)]


class _Layout:
    """Cities, towns and employers; assigns location and employer to each posting."""

    def __init__(self, spec: WorldSpec, rng):
        self.spec = spec
        self.rng = rng
        cells = set()
        self.cells = []
        while len(self.cells) < spec.n_cities + spec.n_towns:
            cell = (round(float(rng.uniform(30, 47)), 1), round(float(rng.uniform(-122, -72)), 1))
            if cell not in cells:
                cells.add(cell)
                self.cells.append(cell)
        self.cities = self.cells[:spec.n_cities]
        self.large = [f"employer L{i:02d}" for i in range(spec.n_large_employers)]
        self.small_next: dict[int, int] = {}

    def location(self):
        s, rng = self.spec, self.rng
        if s.n_towns == 0 or rng.random() < s.city_share:
            lat, lon = self.cities[int(rng.integers(s.n_cities))]
        else:
            lat, lon = self.cells[s.n_cities + int(rng.integers(s.n_towns))]
        # jitter stays inside the 0.1-degree cell centered on (lat, lon)
        return (round(lat + float(rng.uniform(-0.04, 0.04)), 6),
                round(lon + float(rng.uniform(-0.04, 0.04)), 6))

    def employer(self, year):
        s, rng = self.spec, self.rng
        u = rng.random()
        if u < s.missing_employer_share:
            return ""
        if u < s.missing_employer_share + s.large_employer_share and self.large:
            return self.large[int(rng.integers(len(self.large)))]
        k = self.small_next.get(year, 0)
        self.small_next[year] = k + 1
        return f"employer S{year}-{k // s.small_employer_posts:05d}"


def generate_world(spec: WorldSpec = WorldSpec()) -> PlantedWorld:
    """Latent geometry and occupation plans (no postings yet)."""
    spec.check()
    rng = np.random.default_rng(spec.seed)
    D, C = spec.latent_dim, spec.n_clusters
    centers = np.linalg.qr(rng.standard_normal((D, C)))[0].T
    cluster = rng.permutation(np.arange(spec.n_skills) % C)
    noise = rng.standard_normal((spec.n_skills, D)) / math.sqrt(D)
    positions = _unit(centers[cluster] + spec.skill_spread * noise)
    names = [f"skill {i:04d}" for i in range(spec.n_skills)]
    world = PlantedWorld(names, [int(c) for c in cluster], positions, {}, centers, spec)

    n_drift = spec.n_occupations - int(round(spec.zero_drift_fraction * spec.n_occupations))
    angles = np.concatenate([np.zeros(spec.n_occupations - n_drift),
                             np.linspace(spec.max_drift_deg / n_drift if n_drift else 0,
                                         spec.max_drift_deg, n_drift)])
    angles = rng.permutation(angles)
    world._directions = {}
    world._popularity = np.exp(spec.popularity_sigma * rng.standard_normal(spec.n_skills))
    for i in range(spec.n_occupations):
        code = f"{11 + i // 100:02d}-{1000 + i:04d}"
        home = i % C
        target = int((home + 1 + rng.integers(C - 1)) % C)
        u0 = _unit(centers[home] + spec.occupation_spread * rng.standard_normal(D) / math.sqrt(D))
        u1 = _rotate_toward(u0, centers[target], math.radians(angles[i])) if angles[i] > 0 else u0
        world._directions[code] = (u0, u1)
        core = [names[j] for j in _expected_core(_probs(world, u0), spec, spec.posts_per_occupation_year)]
        core1 = [names[j] for j in _expected_core(_probs(world, u1), spec, spec.posts_per_occupation_year)]
        edu = int(EDUCATION_LEVELS[int(rng.integers(len(EDUCATION_LEVELS)))])
        salary = round(float(20000 + 3500 * edu + rng.normal(0, 5000)), 2)
        world.occupations[code] = OccupationPlan(code, "generic", home, target, float(angles[i]),
                                                 core, core1, edu, salary)
    for k in range(spec.n_sparse_occupations):
        code = f"98-{k + 1:04d}"
        home = k % C
        u0 = _unit(centers[home] + spec.occupation_spread * rng.standard_normal(D) / math.sqrt(D))
        world._directions[code] = (u0, u0)
        core = [names[j] for j in _expected_core(_probs(world, u0), spec, spec.posts_per_occupation_year)]
        world.occupations[code] = OccupationPlan(code, "sparse", home, home, 0.0, core, core,
                                                 16, 60000.0)
    if spec.paired:
        _plan_pair(world, rng)
    return world


def _probs(world, z):
    s = world.spec
    logits = s.concentration * (world.skill_positions @ z)
    w = world._popularity * np.exp(logits - logits.max())
    return w / w.sum()


def _plan_pair(world: PlantedWorld, rng):
    s = world.spec
    names = np.array(world.skill_names)
    cl = np.array(world.skill_cluster)
    home, other = 0, 1
    in_home = rng.permutation(np.flatnonzero(cl == home))
    in_other = rng.permutation(np.flatnonzero(cl == other))
    core = list(names[in_home[:s.pair_core]])
    within = list(names[in_home[s.pair_core:s.pair_core + s.pair_swaps]])
    across = list(names[in_other[:s.pair_swaps]])
    used = set(core) | set(within) | set(across)
    pool = [n for n in names[rng.permutation(len(names))] if n not in used]
    world._pair_tail = pool[:19 * s.pair_core]
    kept = core[s.pair_swaps:]
    world.occupations[PAIR_P] = OccupationPlan(PAIR_P, "pair_p", home, home, None,
                                               core, kept + within, 16, 70000.0)
    world.occupations[PAIR_F] = OccupationPlan(PAIR_F, "pair_f", home, other, None,
                                               core, kept + across, 16, 70000.0)
    world.bookkeeping["pair"] = {"swaps_p": s.pair_swaps, "swaps_f": s.pair_swaps,
                                 "tail_pool": len(world._pair_tail)}


def _draw_skills(world, z, rng):
    s = world.spec
    m = int(min(s.max_skills_per_post, 3 + rng.poisson(max(0.0, s.mean_skills_per_post - 3))))
    z = _unit(z + s.post_jitter * rng.standard_normal(len(z)) / math.sqrt(len(z)))
    idx = rng.choice(len(world.skill_names), size=m, replace=False, p=_probs(world, z))
    return [world.skill_names[i] for i in idx]


def generate_planted_corpus(spec: WorldSpec = WorldSpec()) -> tuple[list[str], PlantedWorld]:
    """JSONL lines of the planted corpus (duplicates and bad lines included) and its world."""
    world = generate_world(spec)
    rng = np.random.default_rng([spec.seed, 1])
    layout = _Layout(spec, rng)
    t0, t1 = spec.years
    postings: list[JobPosting] = []
    keys = set()

    def emit(plan: OccupationPlan, year: int, skills: list[str]):
        while True:
            lat, lon = layout.location()
            employer = layout.employer(year)
            edu = plan.education if rng.random() < spec.education_share else None
            salary = (round(plan.salary * float(np.exp(rng.normal(0, 0.1))), 2)
                      if rng.random() < spec.salary_share else None)
            p = JobPosting(f"p{len(postings):07d}", year, plan.code, employer, lat, lon,
                           tuple(skills), edu, salary, ZONE_FOR_EDUCATION[plan.education])
            if p.dedup_key() not in keys:
                keys.add(p.dedup_key())
                postings.append(p)
                plan.posts[str(year)] = plan.posts.get(str(year), 0) + 1
                return

    for code in sorted(world.occupations):
        plan = world.occupations[code]
        if plan.kind in ("generic", "sparse"):
            u0, u1 = world._directions[code]
            for year, u in ((t0, u0), (t1, u1)):
                n = spec.posts_per_occupation_year
                if plan.kind == "sparse" and year == t1:
                    n = spec.sparse_posts
                for _ in range(n):
                    emit(plan, year, _draw_skills(world, u, rng))
        else:
            tail = world._pair_tail
            tpp = spec.pair_tail_per_post
            for year, core in ((t0, plan.core_t0), (t1, plan.core_t1)):
                for i in range(spec.pair_posts):
                    extra = [tail[(i * tpp + j) % len(tail)] for j in range(tpp)]
                    emit(plan, year, list(core) + extra)

    # exact duplicates with fresh ids, each placed after its original
    n_unique = len(postings)
    n_dup = int(round(spec.duplicate_fraction * n_unique))
    originals = np.sort(rng.choice(n_unique, size=n_dup, replace=False)) if n_dup else np.empty(0, int)
    order_keys = [float(i) for i in range(n_unique)]
    records = list(postings)
    for k, i in enumerate(originals):
        p = postings[i]
        records.append(JobPosting(f"d{k:07d}", p.year, p.occupation, p.employer, p.lat, p.lon,
                                  p.skills, p.education_years, p.salary, p.job_zone))
        order_keys.append(float(rng.uniform(i + 0.5, n_unique)))
    order = np.argsort(np.array(order_keys), kind="stable")
    lines = [json.dumps(posting_to_record(records[i]), ensure_ascii=False) for i in order]

    bad_templates = ['{"year": 2010, "occupation": "11-1000", "lat": 1.0, "lon": 1.0}',
                     '{"year": 2010, "occupation": "11-1000", "lat"',
                     '{"year": 2010, "occupation": "bad", "lat": 1.0, "lon": 1.0, "skills": ["a"]}',
                     '{"year": 2010, "occupation": "11-1000", "lat": 95.0, "lon": 1.0, "skills": ["a"]}',
                     '{"year": 2010, "occupation": "11-1000", "lat": 1.0, "lon": 1.0, "skills": []}']
    bad_at = sorted(rng.choice(len(lines) + spec.n_bad_lines, size=spec.n_bad_lines, replace=False).tolist()) \
        if spec.n_bad_lines else []
    for k, pos in enumerate(bad_at):
        lines.insert(pos, bad_templates[k % len(bad_templates)])

    world.markets = {"cities": [list(c) for c in layout.cities],
                     "towns": [list(c) for c in layout.cells[spec.n_cities:]],
                     "large_employers": list(layout.large)}
    active = sorted(c for c, o in world.occupations.items()
                    if all(o.posts.get(str(y), 0) >= 100 for y in spec.years))
    world.bookkeeping.update({
        "n_lines": len(lines),
        "n_unique": n_unique,
        "n_duplicates": n_dup,
        "n_bad_lines": spec.n_bad_lines,
        "bad_line_numbers": [b + 1 for b in bad_at],
        "active_occupations": active,
    })
    return [line + "\n" for line in lines], world


def write_planted_corpus(spec: WorldSpec, postings_path, manifest_path) -> PlantedWorld:
    lines, world = generate_planted_corpus(spec)
    Path(postings_path).write_text("".join(lines), encoding="utf-8")
    Path(manifest_path).write_text(world.to_json(), encoding="utf-8")
    return world


def planted_sparse_dictionary(n_atoms: int = 20, dim: int = 32, n_samples: int = 500,
                              sparsity: int = 3, noise: float = 0.0, seed: int = 0):
    """Rows that are exactly ``sparsity``-sparse in random unit atoms, plus optional noise.

    Returns ``(X, atoms, codes)``. Coefficients have magnitude in [0.5, 1.5]
    and random sign.
    """
    rng = np.random.default_rng(seed)
    atoms = _unit(rng.standard_normal((n_atoms, dim)))
    codes = np.zeros((n_samples, n_atoms))
    for i in range(n_samples):
        support = rng.choice(n_atoms, size=sparsity, replace=False)
        codes[i, support] = rng.uniform(0.5, 1.5, size=sparsity) * rng.choice([-1, 1], size=sparsity)
    X = codes @ atoms + noise * rng.standard_normal((n_samples, dim)) / math.sqrt(dim)
    return X, atoms, codes


def planted_partition_graph(n_blocks: int = 6, block_size: int = 10, p_in: float = 0.3,
                            p_out: float = 0.01, seed: int = 0, max_draws: int = 1000):
    """Unweighted planted-partition graph. Returns ``(graph, block labels)``.

    Draws in which some block is internally disconnected are rejected: such a
    block cannot be told apart from two blocks, so it is not a usable ground truth.
    """
    rng = np.random.default_rng(seed)
    n = n_blocks * block_size
    labels = np.repeat(np.arange(n_blocks), block_size)
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(n, 1)
    for _ in range(max_draws):
        hit = rng.random(len(iu[0])) < np.where(same[iu], p_in, p_out)
        rows, cols = iu[0][hit], iu[1][hit]
        inside = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).multiply(sp.csr_matrix(same))
        n_comp, comp = connected_components(inside, directed=False)
        if n_comp == n_blocks:
            edges = [(int(i), int(j), 1.0) for i, j in zip(rows, cols)]
            return PmiGraph.from_edges(n, edges), labels
    raise ConfigError("could not draw a planted partition with connected blocks")
