"""Command-line pipeline: ingest, train, graph, drift, atoms, strata, synth, all.

One JSON config drives every subcommand; flags override its fields. Each
subcommand writes its artifacts under ``output_dir/<subcommand>/`` plus a
``manifest_<subcommand>.json`` carrying the config hash and input digests.

Exit codes: 0 ok, 2 config error, 3 missing artifact, 4 data error. On
failure the last stderr line is a JSON object with ``error``,
``exit_code`` and ``message``. Log level comes from ``SKILLSHIFT_LOG``.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import atoms as atoms_mod
from . import corpus, drift, embed, graph, strata, synthlab
from ._io import file_digest, read_csv, write_csv
from .errors import ConfigError, MissingArtifact, SkillShiftError

log = logging.getLogger("skillshift")

ARTIFACTS = {
    "synth": ["<postings>", "<postings stem>.manifest.json"],
    "ingest": ["ingest/postings.clean.jsonl", "ingest/errors.jsonl", "ingest/vocabulary.csv",
               "ingest/active_occupations.csv", "ingest/snapshots.csv", "ingest/core_skills.csv"],
    "train": ["train/embedding.header.json", "train/embedding.f32", "train/embedding.vocab.txt",
              "train/embedding.txt"],
    "graph": ["graph/pmi_edges.csv", "graph/partition.csv", "graph/modularity.csv",
              "graph/skill_regions.csv"],
    "drift": ["drift/change_report.csv", "drift/attributions.csv", "drift/skill_share_change.csv",
              "drift/similarity_t0.csv", "drift/similarity_t1.csv", "drift/occupation_levels.csv"],
    "atoms": ["atoms/dictionary.header.json", "atoms/dictionary.f32", "atoms/dictionary.codes.csv",
              "atoms/dictionary.vocab.txt", "atoms/atom_selection.csv", "atoms/atom_top_skills.csv",
              "atoms/atom_profiles.csv", "atoms/atom_importance.csv", "atoms/atom_grid.csv"],
    "strata": ["strata/market_bins.csv", "strata/stratified_change.csv", "strata/hhi.csv",
               "strata/education_shift.csv", "strata/regressions.csv", "strata/regressions.txt"],
}
OPTIONAL_ARTIFACTS = {
    "atoms": ["atoms/atom_label_tally.csv (with atom_labels)"],
    "strata": ["strata/demographic_dominance.csv, strata/demographic_heatmap.csv (with demographics)",
               "strata/job_zone_correlation.csv (with job_zones)",
               "strata/mobility_validation.csv, strata/mobility_regression.txt (with mobility)"],
}
PIPELINE = ("ingest", "train", "graph", "drift", "atoms", "strata")


@dataclass
class PipelineConfig:
    postings: str = "postings.jsonl"
    output_dir: str = "out"
    years: tuple[int, int] = (2010, 2018)
    core_quantile: float = 0.05
    min_ads: int = 100
    weighting: str = "uniform"
    scope: str = "core"
    reweight: str = "t0_over_t1"
    seed: int = 0
    workers: int = 0  # 0 = available parallelism
    training: dict = field(default_factory=dict)
    pmi_indicator: str = "uniform"
    atom_k: int | None = None
    atom_grid: list[int] = field(default_factory=lambda: [50, 100, 150, 210, 300, 400, 500])
    atom_sparsity: int = 5
    atom_iterations: int = 10
    atom_top_n: int = 25
    grid_rows: int = 14
    grid_cols: int = 15
    market_quantile: float = 0.9
    employer_min_posts: int = 10
    strata_min_ads: int = 5
    dominance_threshold: float = 1.5
    dominance_decimals: int | None = 1
    education_coverage: float = 0.1
    education_demand: str = "core"
    demographics: str | None = None
    job_zones: str | None = None
    mobility: str | None = None
    atom_labels: str | None = None
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        self.years = tuple(self.years)
        if len(self.years) != 2 or not self.years[0] < self.years[1]:
            raise ConfigError("years must be (t0, t1) with t0 < t1")
        if not 0 < self.core_quantile <= 1:
            raise ConfigError("core_quantile must lie in (0, 1]")
        if self.weighting not in (drift.UNIFORM, drift.FREQUENCY):
            raise ConfigError(f"unknown weighting {self.weighting!r}")
        if self.scope not in ("core", "all"):
            try:
                if not 0 < float(self.scope) <= 1:
                    raise ValueError
            except ValueError:
                raise ConfigError(f"scope must be 'core', 'all' or a fraction, not {self.scope!r}") from None
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        self.training_config()
        self.world_spec()

    @property
    def n_workers(self) -> int:
        return self.workers or os.cpu_count() or 1

    def training_config(self) -> embed.TrainingConfig:
        opts = {"seed": self.seed, **self.training, "workers": self.n_workers}
        try:
            return embed.TrainingConfig(**opts)
        except TypeError as exc:
            raise ConfigError(f"bad training options: {exc}") from None

    def world_spec(self) -> synthlab.WorldSpec:
        opts = {"seed": self.seed, "years": self.years, **self.synth}
        opts["years"] = tuple(opts["years"])
        try:
            return synthlab.WorldSpec(**opts)
        except TypeError as exc:
            raise ConfigError(f"bad synth options: {exc}") from None

    def digest(self) -> str:
        payload = asdict(self)
        return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        return cls(**d)


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    data.update(overrides or {})
    return PipelineConfig.from_dict(data)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"{what} not found at {path}; run the producing subcommand first")
    return path


def _write_manifest(cfg: PipelineConfig, command: str, inputs, outputs) -> None:
    manifest = {
        "command": command,
        "config_hash": cfg.digest(),
        "config": asdict(cfg),
        "inputs": {str(p): file_digest(p) for p in sorted(map(str, inputs)) if Path(p).exists()},
        "outputs": sorted(str(Path(o).relative_to(cfg.out)) if str(o).startswith(str(cfg.out)) else str(o)
                          for o in outputs),
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / f"manifest_{command}.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")


# ---------------------------------------------------------------- loaders

def _load_clean_postings(cfg):
    path = _require(cfg.out / "ingest" / "postings.clean.jsonl", "ingested postings")
    postings, _ = corpus.parse_postings(path)
    return postings


def _load_active(cfg):
    path = _require(cfg.out / "ingest" / "active_occupations.csv", "active occupation list")
    return [r["occupation"] for r in read_csv(path)]


def _load_embedding(cfg):
    prefix = cfg.out / "train" / "embedding"
    _require(Path(str(prefix) + ".f32"), "trained embedding")
    return embed.EmbeddingMatrix.load(prefix)


def _load_partition(cfg):
    path = cfg.out / "graph" / "partition.csv"
    if not path.exists():
        return None
    return {r["skill"]: int(r["community"]) for r in read_csv(path)}


def _scope(cfg):
    return cfg.scope if cfg.scope in ("core", "all") else float(cfg.scope)


# ---------------------------------------------------------------- subcommands

def cmd_synth(cfg: PipelineConfig):
    spec = cfg.world_spec()
    postings = Path(cfg.postings)
    postings.parent.mkdir(parents=True, exist_ok=True)
    manifest = postings.with_name(postings.name.split(".")[0] + ".manifest.json")
    world = synthlab.write_planted_corpus(spec, postings, manifest)
    log.info("wrote %d lines to %s", world.bookkeeping["n_lines"], postings)
    _write_manifest(cfg, "synth", [], [postings, manifest])


def cmd_ingest(cfg: PipelineConfig):
    src = Path(cfg.postings)
    if not src.exists():
        raise ConfigError(f"input postings not found: {src}")
    postings, errors = corpus.parse_postings(src)
    clean = corpus.deduplicate(postings)
    log.info("parsed %d postings (%d errors), %d after dedup", len(postings), len(errors), len(clean))
    d = cfg.out / "ingest"
    d.mkdir(parents=True, exist_ok=True)
    outs = [d / "postings.clean.jsonl", d / "errors.jsonl"]
    corpus.write_postings(outs[0], clean)
    corpus.write_errors(outs[1], errors)
    vocab = corpus.SkillVocabulary.from_postings(clean)
    outs.append(write_csv(d / "vocabulary.csv", ["skill_id", "skill", "count"],
                          ((i, s, c) for i, (s, c) in enumerate(zip(vocab.skills, vocab.counts)))))
    active = sorted(corpus.filter_active_occupations(clean, cfg.years, cfg.min_ads))
    outs.append(write_csv(d / "active_occupations.csv", ["occupation"], ([o] for o in active)))
    snaps = corpus.build_snapshots(clean, years=cfg.years, occupations=active,
                                   core_quantile=cfg.core_quantile)
    outs.append(write_csv(d / "snapshots.csv", ["occupation", "year", "n_ads", "skill", "count", "share"],
                          ((o, y, s.n_ads, sk, s.skill_counts[sk], s.skill_counts[sk] / s.n_ads)
                           for (o, y), s in snaps.items() for sk in s.ranked_skills())))
    outs.append(write_csv(d / "core_skills.csv", ["occupation", "year", "rank", "skill", "share"],
                          ((o, y, r, sk, s.skill_counts[sk] / s.n_ads)
                           for (o, y), s in snaps.items() for r, sk in enumerate(s.core_skills))))
    _write_manifest(cfg, "ingest", [src], outs)


def cmd_train(cfg: PipelineConfig):
    postings = _load_clean_postings(cfg)
    tc = cfg.training_config()
    vocab = corpus.SkillVocabulary.from_postings(postings)
    emb = embed.train_skipgram(embed.build_training_pairs(postings, vocab, tc), tc)
    d = cfg.out / "train"
    d.mkdir(parents=True, exist_ok=True)
    emb.save(d / "embedding")
    emb.export_text(d / "embedding.txt")
    _write_manifest(cfg, "train", [cfg.out / "ingest" / "postings.clean.jsonl"],
                    [d / f for f in ("embedding.header.json", "embedding.f32", "embedding.vocab.txt",
                                     "embedding.txt")])


def cmd_graph(cfg: PipelineConfig):
    everything = _load_clean_postings(cfg)
    postings = [p for p in everything if p.year == cfg.years[0]]
    if not postings:
        raise MissingArtifact(f"no postings in {cfg.years[0]} for the PMI network")
    vocab = corpus.SkillVocabulary.from_postings(everything)
    pmi = graph.pmi_matrix(postings, vocab, cfg.pmi_indicator)
    g = graph.build_pmi_graph(pmi)
    part = graph.louvain_partition(g, seed=cfg.seed)
    d = cfg.out / "graph"
    outs = [
        write_csv(d / "pmi_edges.csv", ["skill_i", "skill_j", "pmi"],
                  ((g.skills[i], g.skills[j], w) for i, j, w in g.edges())),
        write_csv(d / "partition.csv", ["skill", "community"], zip(g.skills, map(int, part.labels))),
        write_csv(d / "modularity.csv", ["level", "modularity"], enumerate(part.history)),
    ]
    # each skill's community plus its position on the top two principal axes
    try:
        emb = _load_embedding(cfg)
        xy = atoms_mod.project_2d(emb.unit_vectors())
        pos = {s: xy[i] for i, s in enumerate(emb.vocabulary.skills)}
    except MissingArtifact:
        pos = {}
    nan = (float("nan"), float("nan"))
    outs.append(write_csv(d / "skill_regions.csv", ["skill", "community", "x", "y"],
                          ((s, int(c), float(pos.get(s, nan)[0]), float(pos.get(s, nan)[1]))
                           for s, c in zip(g.skills, part.labels))))
    log.info("PMI graph: %d nodes, %d edges, %d communities, Q=%.3f", g.n_nodes, len(g.edges()),
             part.n_communities, part.modularity)
    _write_manifest(cfg, "graph", [cfg.out / "ingest" / "postings.clean.jsonl"], outs)


def _occupation_levels(postings, snaps, active, t0):
    salary, edu, zone = defaultdict(list), defaultdict(list), {}
    for p in postings:
        if p.year != t0:
            continue
        if p.salary is not None:
            salary[p.occupation].append(p.salary)
        if p.education_years is not None:
            edu[p.occupation].append(p.education_years)
        if p.job_zone is not None:
            zone[p.occupation] = p.job_zone
    levels = {}
    for o in active:
        s = snaps.get((o, t0))
        n_core = len(s.core_skills) if s else 0
        levels[o] = {
            "n_core": n_core,
            "log_core": math.log(n_core) if n_core else float("nan"),
            "mean_salary": float(np.mean(salary[o])) if salary[o] else float("nan"),
            "mean_education": float(np.mean(edu[o])) if edu[o] else float("nan"),
            "job_zone": zone.get(o),
        }
    return levels


def cmd_drift(cfg: PipelineConfig):
    emb = _load_embedding(cfg)
    postings = _load_clean_postings(cfg)
    active = _load_active(cfg)
    t0, t1 = cfg.years
    snaps = corpus.build_snapshots(postings, years=cfg.years, occupations=active,
                                   core_quantile=cfg.core_quantile)
    partition = _load_partition(cfg)
    scope = _scope(cfg)
    reports = drift.change_reports(snaps, emb, active, t0, t1, partition, cfg.weighting, scope, cfg.reweight)
    d = cfg.out / "drift"
    outs = [write_csv(d / "change_report.csv", drift.ChangeReport.FIELDS,
                      ([getattr(r, f) for f in drift.ChangeReport.FIELDS] for r in reports))]
    attributions = []
    for occ in sorted(active):
        attributions += drift.attribute_skill_contributions(snaps[(occ, t0)], snaps[(occ, t1)], emb,
                                                            cfg.weighting, scope)
    outs.append(write_csv(d / "attributions.csv", drift.AttributionRecord.FIELDS,
                          ([getattr(r, f) for f in drift.AttributionRecord.FIELDS] for r in attributions)))
    # per-skill share change, ranked within each occupation
    rows = []
    for occ in sorted(active):
        s0, s1 = snaps[(occ, t0)].skill_shares, snaps[(occ, t1)].skill_shares
        changes = sorted(((abs(s1.get(k, 0.0) - s0.get(k, 0.0)), k) for k in s0.keys() | s1.keys()),
                         key=lambda x: (-x[0], x[1]))
        rows += [(occ, rank, k, s0.get(k, 0.0), s1.get(k, 0.0), c) for rank, (c, k) in enumerate(changes)]
    outs.append(write_csv(d / "skill_share_change.csv",
                          ["occupation", "rank", "skill", "share_t0", "share_t1", "abs_change"], rows))
    for tag, year in (("t0", t0), ("t1", t1)):
        occs, sim = drift.occupation_similarity_matrix({o: snaps[(o, year)] for o in active}, emb,
                                                       cfg.weighting, scope)
        outs.append(write_csv(d / f"similarity_{tag}.csv", ["occ_i", "occ_j", "similarity"],
                              ((occs[i], occs[j], float(sim[i, j]))
                               for i in range(len(occs)) for j in range(len(occs)))))
    levels = _occupation_levels(postings, snaps, active, t0)
    by_occ = {r.occupation: r for r in reports}
    outs.append(write_csv(d / "occupation_levels.csv",
                          ["occupation", "soc2", "n_core_t0", "log_core", "mean_salary", "mean_education",
                           "job_zone", "vector_change", "dn_change"],
                          ((o, o[:2], lv["n_core"], lv["log_core"], lv["mean_salary"], lv["mean_education"],
                            lv["job_zone"], by_occ[o].vector_change, by_occ[o].dn_change)
                           for o, lv in sorted(levels.items()) if o in by_occ)))
    _write_manifest(cfg, "drift", [cfg.out / "ingest" / "postings.clean.jsonl",
                                   cfg.out / "train" / "embedding.f32"], outs)


def cmd_atoms(cfg: PipelineConfig):
    emb = _load_embedding(cfg)
    postings = _load_clean_postings(cfg)
    active = _load_active(cfg)
    X = emb.vectors.astype(float)
    skills = emb.vocabulary.skills
    d = cfg.out / "atoms"
    d.mkdir(parents=True, exist_ok=True)
    T = cfg.atom_sparsity
    if cfg.atom_k is not None:
        dic = atoms_mod.ksvd_learn(X, cfg.atom_k, T, cfg.atom_iterations, cfg.seed, skills, cfg.atom_top_n)
        table = [atoms_mod.AtomCountDiagnostics(dic.k, dic.r2, dic.diversity, float("nan"))]
    else:
        best, table, fits = atoms_mod.select_atom_count(X, cfg.atom_grid, T, cfg.atom_iterations,
                                                        cfg.seed, cfg.atom_top_n, skills)
        dic = fits[best]
    outs = [write_csv(d / "atom_selection.csv", ["k", "r2", "diversity", "score", "selected"],
                      ((t.k, t.r2, t.diversity, t.score, t.k == dic.k) for t in table))]
    dic.save(d / "dictionary")
    outs += [d / f"dictionary{ext}" for ext in (".header.json", ".f32", ".codes.csv", ".vocab.txt")]
    outs.append(write_csv(d / "atom_top_skills.csv", ["atom", "rank", "skill", "similarity"],
                          ((j, r, s, sim) for j in range(dic.k)
                           for r, (s, sim) in enumerate(atoms_mod.atom_top_skills(dic, X, j, cfg.atom_top_n)))))
    t0, t1 = cfg.years
    snaps = corpus.build_snapshots(postings, years=cfg.years, occupations=active,
                                   core_quantile=cfg.core_quantile)
    profiles = {t0: {}, t1: {}}
    for (occ, year), snap in snaps.items():
        profiles[year][occ] = atoms_mod.occupation_atom_weights(snap.core_skills, dic, occ, year)
    outs.append(write_csv(d / "atom_profiles.csv", ["occupation", "year", "atom", "weight"],
                          ((o, y, j, float(w)) for y in (t0, t1) for o, p in sorted(profiles[y].items())
                           for j, w in enumerate(p.weights) if w != 0)))
    series = atoms_mod.atom_importance_change(profiles[t0], profiles[t1])
    coords = atoms_mod.project_2d(dic.atoms)
    rows = cfg.grid_rows
    if dic.k > rows * cfg.grid_cols:
        rows = math.ceil(dic.k / cfg.grid_cols)
        log.warning("%d atoms exceed the %dx%d grid; using %d rows", dic.k, cfg.grid_rows, cfg.grid_cols, rows)
    cells = atoms_mod.grid_layout(coords, rows, cfg.grid_cols)
    labels = {}
    if cfg.atom_labels:
        labels = {int(r["atom_id"]): r["label"] for r in read_csv(_require(Path(cfg.atom_labels), "atom labels"))}
    outs.append(write_csv(d / "atom_importance.csv",
                          ["atom", "importance_t0", "importance_t1", "change", "label"],
                          ((j, float(series.importance_t0[j]), float(series.importance_t1[j]),
                            float(series.change[j]), labels.get(j, "")) for j in range(dic.k))))
    outs.append(write_csv(d / "atom_grid.csv", ["atom", "row", "col", "x", "y", "change"],
                          ((j, int(cells[j, 0]), int(cells[j, 1]), float(coords[j, 0]), float(coords[j, 1]),
                            float(series.change[j])) for j in range(dic.k))))
    if labels:
        tally = defaultdict(lambda: [0, 0, 0.0])
        for j in range(dic.k):
            lab = labels.get(j, "unlabeled")
            tally[lab][0 if series.change[j] > 0 else 1] += 1
            tally[lab][2] += float(series.change[j])
        outs.append(write_csv(d / "atom_label_tally.csv", ["label", "rising", "declining", "total_change"],
                              ((k, v[0], v[1], v[2]) for k, v in sorted(tally.items()))))
    _write_manifest(cfg, "atoms", [cfg.out / "train" / "embedding.f32"], outs)


def _fit_or_skip(fits, name, *args, **kwargs):
    try:
        fits[name] = strata.ols_fit(*args, **kwargs)
    except SkillShiftError as exc:
        log.warning("skipping regression %s: %s", name, exc)


def _regression_rows(fits):
    for model, fit in fits.items():
        for i, term in enumerate(fit.names):
            yield (model, term, float(fit.coef[i]), float(fit.se[i]), float(fit.tvalues[i]),
                   float(fit.pvalues[i]), fit.n, fit.r2, fit.adj_r2, fit.fixed_effects)


def cmd_strata(cfg: PipelineConfig):
    emb = _load_embedding(cfg)
    postings = _load_clean_postings(cfg)
    active = _load_active(cfg)
    t0, t1 = cfg.years
    d = cfg.out / "strata"
    bins = strata.bin_locations(p for p in postings if p.year in cfg.years)
    per_year = {y: strata.bin_locations(p for p in postings if p.year == y) for y in cfg.years}
    outs = [write_csv(d / "market_bins.csv", ["lat", "lon", "posts", "posts_t0", "posts_t1"],
                      ((k[0], k[1], c, per_year[t0].get(k, 0), per_year[t1].get(k, 0))
                       for k, c in sorted(bins.items())))]
    strat = strata.stratify_by_size(postings, cfg.years, cfg.market_quantile, cfg.employer_min_posts)
    rows = strata.stratified_changes(strat, active, t0, t1, emb, cfg.core_quantile, cfg.strata_min_ads,
                                     cfg.weighting)
    outs.append(write_csv(d / "stratified_change.csv", strata.StratumChange.FIELDS,
                          ([getattr(r, f) for f in strata.StratumChange.FIELDS] for r in rows)))

    table = strata.hhi_table(p for p in postings if p.year in cfg.years)
    outs.append(write_csv(d / "hhi.csv", ["occupation", "lat", "lon", "year", "hhi", "hhi_squared", "market_size"],
                          ((o, m[0], m[1], y, h, h * h, "large" if m in strat.large_markets else "small")
                           for (o, m, y), h in table.items())))
    # occupation x market-size concentration: mean over markets of the two-year average HHI
    cell = defaultdict(list)
    for (o, m, y), h in table.items():
        cell[(o, m)].append(h)
    conc = defaultdict(list)
    for (o, m), hs in cell.items():
        conc[(o, "large" if m in strat.large_markets else "small")].append(float(np.mean(hs)))
    conc = {k: float(np.mean(v)) for k, v in conc.items()}

    snaps = corpus.build_snapshots(postings, years=cfg.years, occupations=active,
                                   core_quantile=cfg.core_quantile)
    edu = strata.education_means(postings, cfg.education_coverage)
    shift_rows = []
    for occ in sorted(active):
        shift = strata.education_cost_shift(occ, t0, t1, snaps, edu, cfg.education_demand)
        shift_rows.append((occ, shift))
    outs.append(write_csv(d / "education_shift.csv", ["occupation", "education_shift_years"], shift_rows))

    change_path = cfg.out / "drift" / "change_report.csv"
    levels_path = cfg.out / "drift" / "occupation_levels.csv"
    fits = {}
    if change_path.exists() and levels_path.exists():
        levels = {r["occupation"]: r for r in read_csv(levels_path)}
        occs = [o for o in sorted(levels) if levels[o]["log_core"]]
        y = np.array([float(levels[o]["vector_change"]) for o in occs])
        hhi_occ = np.array([np.mean([conc.get((o, s), np.nan) for s in ("large", "small")
                                     if (o, s) in conc]) for o in occs]) ** 2
        for name, col in (("complexity", "log_core"), ("pay", "mean_salary"), ("education", "mean_education")):
            x = np.array([float(levels[o][col]) if levels[o][col] else np.nan for o in occs])
            if name == "pay":
                x = np.log(x)
            ok = np.isfinite(x)
            _fit_or_skip(fits, f"M_{name}", x[ok], y[ok], names=[name])
            ok &= np.isfinite(hhi_occ)
            _fit_or_skip(fits, f"M_{name}_hhi", np.column_stack([x[ok], hhi_occ[ok]]), y[ok],
                         names=[name, "emp_concentration_sq"])
        vals = [(shift, float(levels[o]["vector_change"])) for o, shift in shift_rows
                if shift is not None and o in levels]
        if len(vals) >= 3:
            try:
                r, p = strata.correlate([v[1] for v in vals], [v[0] for v in vals], "pearson")
                log.info("vector change vs education shift: r=%.3f p=%.3g", r, p)
            except SkillShiftError as exc:
                log.warning("education correlation undefined: %s", exc)
    else:
        log.warning("drift outputs missing; skipping occupation-level regressions")

    if rows:
        occ_fe = [r.occupation for r in rows]
        ys = np.array([r.vector_change for r in rows])
        emp = np.array([r.employer_size == "large" for r in rows], dtype=float)
        mkt = np.array([r.market_size == "large" for r in rows], dtype=float)
        hsq = np.array([conc.get((r.occupation, r.market_size), np.nan) ** 2 for r in rows])
        _fit_or_skip(fits, "FE_employer", emp, ys, names=["large_employer"], fixed_effects=occ_fe)
        _fit_or_skip(fits, "FE_market", mkt, ys, names=["large_market"], fixed_effects=occ_fe)
        ok = np.isfinite(hsq)
        _fit_or_skip(fits, "FE_both_hhi", np.column_stack([emp, mkt, hsq])[ok], ys[ok],
                     names=["large_employer", "large_market", "emp_concentration_sq"],
                     fixed_effects=[o for o, k in zip(occ_fe, ok) if k])
    outs.append(write_csv(d / "regressions.csv",
                          ["model", "term", "coef", "se", "t", "p", "n", "r2", "adj_r2", "occ_fe"],
                          _regression_rows(fits)))
    (d / "regressions.txt").write_text(strata.format_regression_table(fits) if fits else "no models fitted\n")
    outs.append(d / "regressions.txt")

    inputs = [cfg.out / "ingest" / "postings.clean.jsonl", cfg.out / "train" / "embedding.f32"]
    if cfg.demographics:
        inputs.append(cfg.demographics)
        outs += _demographics(cfg, d, change_path)
    if cfg.job_zones:
        inputs.append(cfg.job_zones)
        outs += _job_zones(cfg, d, change_path)
    if cfg.mobility:
        inputs.append(cfg.mobility)
        outs += _mobility(cfg, d, snaps, emb, active, postings)
    _write_manifest(cfg, "strata", inputs, outs)


def _demographics(cfg, d, change_path):
    rows = [(r["occupation"], r["group"], float(r["occupation_share"]), float(r["labor_force_share"]))
            for r in read_csv(_require(Path(cfg.demographics), "demographics table"))]
    dom = strata.demographic_dominance(rows, cfg.dominance_threshold, cfg.dominance_decimals)
    outs = [write_csv(d / "demographic_dominance.csv", ["occupation", "group", "ratio", "dominant"],
                      ((o, g, strata.dominance_ratio(a, b, cfg.dominance_decimals) if b else float("nan"),
                        g in dom.get(o, ())) for o, g, a, b in sorted(rows)))]
    changes = {r["occupation"]: float(r["vector_change"]) for r in read_csv(_require(change_path, "change report"))}
    levels = {r["occupation"]: r for r in read_csv(_require(cfg.out / "drift" / "occupation_levels.csv",
                                                            "occupation levels"))}
    cores = {o: float(r["n_core_t0"]) for o, r in levels.items()}
    cuts = np.quantile(list(cores.values()), [1 / 3, 2 / 3]) if cores else [0, 0]
    cell = defaultdict(list)
    for occ, groups in dom.items():
        if occ not in changes or occ not in cores:
            continue
        level = "low" if cores[occ] <= cuts[0] else "mid" if cores[occ] <= cuts[1] else "high"
        for g in groups:
            cell[(g, level)].append(changes[occ])
    outs.append(write_csv(d / "demographic_heatmap.csv", ["group", "skill_level", "n", "mean_vector_change"],
                          ((g, lv, len(v), float(np.mean(v))) for (g, lv), v in sorted(cell.items()))))
    return outs


def _job_zones(cfg, d, change_path):
    zones = {r["occupation"]: float(r["zone"]) for r in read_csv(_require(Path(cfg.job_zones), "job-zone table"))}
    changes = {r["occupation"]: float(r["vector_change"]) for r in read_csv(_require(change_path, "change report"))}
    occs = sorted(set(zones) & set(changes))
    rows = []
    for method in ("pearson", "spearman"):
        try:
            r, p = strata.correlate([zones[o] for o in occs], [changes[o] for o in occs], method)
        except (SkillShiftError, ValueError) as exc:
            log.warning("job-zone %s correlation undefined: %s", method, exc)
            r = p = float("nan")
        rows.append((method, len(occs), r, p))
    return [write_csv(d / "job_zone_correlation.csv", ["method", "n", "coefficient", "p_value"], rows)]


def _mobility(cfg, d, snaps, emb, active, postings):
    t0 = cfg.years[0]
    occs, sim = drift.occupation_similarity_matrix({o: snaps[(o, t0)] for o in active}, emb,
                                                   cfg.weighting, _scope(cfg))
    index = {o: i for i, o in enumerate(occs)}
    ads = defaultdict(int)
    for p in postings:
        if p.year == t0:
            ads[p.occupation] += 1
    data = []
    for r in read_csv(_require(Path(cfg.mobility), "mobility table")):
        a, b = r["occ_i"], r["occ_j"]
        if a in index and b in index and a != b:
            data.append((a, b, sim[index[a], index[b]], float(r["transition_count"])))
    rows, fits = [], {}
    if len(data) >= 3:
        s = np.array([x[2] for x in data])
        logt = np.log1p([x[3] for x in data])
        for method in ("pearson", "spearman"):
            try:
                rows.append((method, len(data), *strata.correlate(s, logt, method)))
            except SkillShiftError as exc:
                log.warning("mobility %s correlation undefined: %s", method, exc)
        pop = np.array([[math.log(ads[x[0]]), math.log(ads[x[1]])] for x in data])
        _fit_or_skip(fits, "popularity", pop, logt, names=["log_ads_i", "log_ads_j"])
        _fit_or_skip(fits, "popularity_similarity", np.column_stack([pop, s]), logt,
                     names=["log_ads_i", "log_ads_j", "similarity"])
    outs = [write_csv(d / "mobility_validation.csv", ["method", "n", "coefficient", "p_value"], rows)]
    (d / "mobility_regression.txt").write_text(strata.format_regression_table(fits) if fits else "no models fitted\n")
    return outs + [d / "mobility_regression.txt"]


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "train": cmd_train, "graph": cmd_graph,
            "drift": cmd_drift, "atoms": cmd_atoms, "strata": cmd_strata}


def run(command: str, cfg: PipelineConfig) -> int:
    steps = PIPELINE if command == "all" else (command,)
    for step in steps:
        log.info("running %s", step)
        COMMANDS[step](cfg)
    return 0


def _artifact_help() -> str:
    lines = ["artifacts (under output_dir unless noted):"]
    for cmd, files in ARTIFACTS.items():
        lines.append(f"  {cmd}: " + ", ".join(files))
        for extra in OPTIONAL_ARTIFACTS.get(cmd, []):
            lines.append(f"    optional: {extra}")
    lines.append("  every subcommand: manifest_<subcommand>.json")
    lines.append("exit codes: 0 ok, 2 config error, 3 missing artifact, 4 data error")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skillshift", description=__doc__.split("\n")[0],
                                 epilog=_artifact_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=sorted(COMMANDS) + ["all"])
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--postings", help="input postings (JSONL, optionally gzip)")
    ap.add_argument("--output-dir", dest="output_dir")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, help="training threads; 0 = all cores")
    ap.add_argument("--set", action="append", default=[], metavar="FIELD=JSON",
                    help="override any config field, e.g. --set core_quantile=0.5")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SKILLSHIFT_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            key, _, raw = item.partition("=")
            try:
                overrides[key] = json.loads(raw)
            except json.JSONDecodeError:
                overrides[key] = raw
        for key in ("postings", "output_dir", "seed", "workers"):
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        cfg = load_config(args.config, overrides)
        return run(args.command, cfg)
    except SkillShiftError as exc:
        code, kind, msg = exc.exit_code, type(exc).__name__, str(exc)
    except (TypeError, ValueError) as exc:
        code, kind, msg = 2, "ConfigError", str(exc)
    except OSError as exc:
        code, kind, msg = 4, "IOError", str(exc)
    print(json.dumps({"error": kind, "exit_code": code, "message": msg}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
