"""Labor-market stratification of change scores and the statistics used on them."""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from scipy import stats

from .corpus import JobPosting, OccupationYearSnapshot, build_snapshots
from .drift import dn_change, vector_change
from .embed import EmbeddingMatrix
from .errors import DomainError, MissingSkill, NotFound, SingularDesign

log = logging.getLogger(__name__)

MarketKey = tuple  # (lat, lon) rounded to 0.1 degree


def _round_half_away(x: float, places: str = "0.1") -> float:
    return float(Decimal(repr(float(x))).quantize(Decimal(places), rounding=ROUND_HALF_UP))


def market_key(lat: float, lon: float) -> MarketKey:
    return (_round_half_away(lat), _round_half_away(lon))


def bin_locations(postings) -> Counter:
    return Counter(market_key(p.lat, p.lon) for p in postings)


SUBSETS = (("large", "large"), ("large", "small"), ("small", "large"), ("small", "small"))


@dataclass
class Stratification:
    large_markets: set
    large_employers: set
    subsets: dict[tuple[str, str], list[JobPosting]]  # (market size, employer size) -> postings

    def label(self, p: JobPosting) -> tuple[str, str]:
        m = "large" if market_key(p.lat, p.lon) in self.large_markets else "small"
        e = "large" if p.employer and p.employer in self.large_employers else "small"
        return m, e


def large_markets(postings, years, quantile: float = 0.9) -> set:
    """Markets whose annual count is at or above the ``quantile`` of annual counts in every year."""
    per_year = defaultdict(Counter)
    for p in postings:
        per_year[p.year][market_key(p.lat, p.lon)] += 1
    result = None
    for y in years:
        counts = per_year.get(y)
        if not counts:
            return set()
        cut = np.quantile(np.array(list(counts.values()), dtype=float), quantile)
        big = {k for k, c in counts.items() if c >= cut}
        result = big if result is None else result & big
    return result or set()


def large_employers(postings, years, min_posts: int = 10) -> set:
    """Non-empty employers with strictly more than ``min_posts`` postings in every year."""
    counts = Counter((p.employer, p.year) for p in postings if p.employer)
    employers = {e for e, _ in counts}
    return {e for e in employers if all(counts[(e, y)] > min_posts for y in years)}


def stratify_by_size(postings, years, market_quantile: float = 0.9,
                     employer_min_posts: int = 10) -> Stratification:
    postings = list(postings)
    strat = Stratification(large_markets(postings, years, market_quantile),
                           large_employers(postings, years, employer_min_posts),
                           {s: [] for s in SUBSETS})
    for p in postings:
        strat.subsets[strat.label(p)].append(p)
    return strat


def hhi(counts) -> float:
    counts = np.asarray(list(counts), dtype=float)
    total = counts.sum()
    if total <= 0:
        raise NotFound("empty cell")
    return float(np.sum((counts / total) ** 2))


def employer_concentration(postings, occupation: str, market: MarketKey, year: int) -> float:
    """Herfindahl index of employer posting shares in one occupation-market-year cell.

    Postings without an employer are grouped as a single unnamed employer.
    """
    counts = Counter(p.employer for p in postings
                     if p.occupation == occupation and p.year == year
                     and market_key(p.lat, p.lon) == tuple(market))
    if not counts:
        raise NotFound(f"no postings for {occupation} in {market} {year}")
    return hhi(counts.values())


def hhi_table(postings) -> dict[tuple[str, MarketKey, int], float]:
    cells = defaultdict(Counter)
    for p in postings:
        cells[(p.occupation, market_key(p.lat, p.lon), p.year)][p.employer] += 1
    return {k: hhi(v.values()) for k, v in sorted(cells.items())}


def dominance_ratio(occupation_share: float, labor_force_share: float, decimals: int | None = 1) -> float:
    ratio = occupation_share / labor_force_share
    if decimals is None:
        return ratio
    return _round_half_away(ratio, "1." + "0" * decimals if decimals else "1")


def demographic_dominance(rows, threshold: float = 1.5, decimals: int | None = 1) -> dict[str, set]:
    """Groups over-represented in each occupation.

    ``rows`` are ``(occupation, group, occupation_share, labor_force_share)``.
    A group is dominant when its share ratio, rounded to ``decimals``
    places (``None`` disables rounding), is at least ``threshold``.
    """
    result: dict[str, set] = {}
    for occ, group, occ_share, lf_share in rows:
        result.setdefault(occ, set())
        if not (0 <= occ_share <= 1 and 0 <= lf_share <= 1):
            raise DomainError(f"shares must lie in [0, 1] ({occ}, {group})")
        if lf_share == 0:
            log.warning("skipping %s/%s: zero labor-force share", occ, group)
            continue
        if dominance_ratio(occ_share, lf_share, decimals) >= threshold:
            result[occ].add(group)
    return result


def education_means(postings, coverage: float = 0.1) -> dict[tuple[str, int], float | None]:
    """Mean posted education years per (occupation, year); None below the coverage threshold."""
    n = Counter()
    vals = defaultdict(list)
    for p in postings:
        n[(p.occupation, p.year)] += 1
        if p.education_years is not None:
            vals[(p.occupation, p.year)].append(p.education_years)
    return {k: (float(np.mean(vals[k])) if vals[k] and len(vals[k]) >= coverage * n[k] else None)
            for k in sorted(n)}


def skill_education_requirement(skill: str, year: int, snapshots, edu: dict,
                                demand: str = "core", weighted: bool = False) -> float | None:
    """Mean education of occupations demanding ``skill`` in ``year``.

    ``demand="core"`` counts occupations whose core set holds the skill,
    ``"any"`` those listing it at all. ``weighted`` weights each occupation
    by its number of ads listing the skill.
    """
    num = den = 0.0
    for (occ, y), snap in snapshots.items():
        if y != year:
            continue
        if demand == "core":
            demanded = skill in snap.core_skills
        else:
            demanded = skill in snap.skill_counts
        if not demanded or edu.get((occ, y)) is None:
            continue
        w = snap.skill_counts[skill] if weighted else 1.0
        num += w * edu[(occ, y)]
        den += w
    return num / den if den else None


def education_cost_shift(occupation: str, t0: int, t1: int, snapshots, edu: dict,
                         demand: str = "core", weighted: bool = False) -> float | None:
    """Mean education requirement of newly added core skills minus the focal t0 requirement.

    Returns None when there are no newly added core skills or the needed
    education figures are missing.
    """
    s0, s1 = snapshots.get((occupation, t0)), snapshots.get((occupation, t1))
    if s0 is None or s1 is None:
        raise NotFound(f"missing snapshot for {occupation}")
    added = sorted(set(s1.core_skills) - set(s0.core_skills))
    base = edu.get((occupation, t0))
    if not added or base is None:
        return None
    reqs = [skill_education_requirement(s, t1, snapshots, edu, demand, weighted) for s in added]
    reqs = [r for r in reqs if r is not None]
    if not reqs:
        return None
    return float(np.mean(reqs)) - base


def correlate(x, y, method: str = "pearson") -> tuple[float, float]:
    """Correlation coefficient with a two-sided p-value from the t approximation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and equally long")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 observations")
    if method == "spearman":
        x, y = stats.rankdata(x), stats.rankdata(y)
    elif method != "pearson":
        raise ValueError(f"unknown method {method!r}")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise DomainError("zero variance")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1 - r * r))
    return r, float(2 * stats.t.sf(abs(t), n - 2))


@dataclass
class RegressionFit:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    r2: float
    adj_r2: float
    n: int
    fixed_effects: bool = False
    n_groups: int = 0
    within_r2: float = float("nan")
    df_resid: int = 0

    @property
    def tvalues(self) -> np.ndarray:
        return self.coef / self.se

    @property
    def pvalues(self) -> np.ndarray:
        return 2 * stats.t.sf(np.abs(self.tvalues), self.df_resid)

    def params(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.coef)))


def _demean(a: np.ndarray, groups: np.ndarray) -> np.ndarray:
    _, inv = np.unique(groups, return_inverse=True)
    counts = np.bincount(inv)
    if a.ndim == 1:
        return a - (np.bincount(inv, weights=a) / counts)[inv]
    means = np.stack([np.bincount(inv, weights=a[:, j]) / counts for j in range(a.shape[1])], axis=1)
    return a - means[inv]


def _collinear_columns(X: np.ndarray, names, tol: float = 1e-10) -> list[str]:
    bad = []
    kept = []
    scale = max(1.0, float(np.abs(X).max()) if X.size else 1.0)
    for j in range(X.shape[1]):
        trial = X[:, kept + [j]]
        if np.linalg.matrix_rank(trial, tol=tol * scale * math.sqrt(X.shape[0])) < len(kept) + 1:
            bad.append(names[j])
        else:
            kept.append(j)
    return bad


def ols_fit(X, y, names=None, fixed_effects=None, intercept: bool = True) -> RegressionFit:
    """Least squares with classical standard errors.

    With ``fixed_effects`` (one group key per row) both sides are demeaned
    within groups and no intercept is fitted; R^2 is then the one of the
    equivalent dummy-variable regression, with the within R^2 reported
    alongside.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n = len(y)
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    groups = None
    if fixed_effects is not None:
        groups = np.asarray(fixed_effects)
        n_groups = len(np.unique(groups))
        Xw, yw = _demean(X, groups), _demean(y, groups)
    else:
        n_groups = 0
        if intercept:
            X = np.column_stack([np.ones(n), X])
            names = ["const"] + names
        Xw, yw = X, y
    p = Xw.shape[1]
    df_resid = n - p - n_groups
    if df_resid <= 0:
        raise SingularDesign(["(too few observations)"])
    bad = _collinear_columns(Xw, names)
    if bad:
        raise SingularDesign(bad)
    Q, R = np.linalg.qr(Xw)
    coef = np.linalg.solve(R, Q.T @ yw)
    resid = yw - Xw @ coef
    ssr = float(resid @ resid)
    sigma2 = ssr / df_resid
    Rinv = np.linalg.solve(R, np.eye(p))
    se = np.sqrt(sigma2 * np.sum(Rinv ** 2, axis=1))
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ssr / sst if sst > 0 else float("nan")
    k_model = p + n_groups if groups is not None else p
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k_model) if n > k_model else float("nan")
    within = float("nan")
    if groups is not None:
        sstw = float(yw @ yw)
        within = 1.0 - ssr / sstw if sstw > 0 else float("nan")
    return RegressionFit(names, coef, se, r2, adj, n, groups is not None, n_groups, within, df_resid)


def format_regression_table(fits: dict[str, RegressionFit]) -> str:
    """Plain-text table: one column per model, coefficient over (standard error)."""
    labels = list(fits)
    rows = []
    for fit in fits.values():
        for name in fit.names:
            if name not in rows:
                rows.append(name)
    width = max([len(r) for r in rows] + [12]) + 2
    col = max([len(l) for l in labels] + [12]) + 2
    out = ["".ljust(width) + "".join(l.rjust(col) for l in labels)]
    out.append("-" * (width + col * len(labels)))
    for name in rows:
        line_c, line_s = name.ljust(width), "".ljust(width)
        for fit in fits.values():
            if name in fit.names:
                i = fit.names.index(name)
                p = fit.pvalues[i]
                stars = "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else ""
                line_c += f"{fit.coef[i]:.3f}{stars}".rjust(col)
                line_s += f"({fit.se[i]:.3f})".rjust(col)
            else:
                line_c += "".rjust(col)
                line_s += "".rjust(col)
        out += [line_c, line_s]
    out.append("-" * (width + col * len(labels)))
    out.append("Occ. FE".ljust(width) + "".join(("Yes" if f.fixed_effects else "No").rjust(col) for f in fits.values()))
    out.append("N".ljust(width) + "".join(str(f.n).rjust(col) for f in fits.values()))
    out.append("R2".ljust(width) + "".join(f"{f.r2:.3f}".rjust(col) for f in fits.values()))
    out.append("Adj. R2".ljust(width) + "".join(f"{f.adj_r2:.3f}".rjust(col) for f in fits.values()))
    return "\n".join(out) + "\n"


@dataclass
class StratumChange:
    occupation: str
    market_size: str
    employer_size: str
    vector_change: float
    dn_change: float
    n_ads_t0: int
    n_ads_t1: int

    FIELDS = ("occupation", "market_size", "employer_size", "vector_change", "dn_change",
              "n_ads_t0", "n_ads_t1")


def stratified_changes(strat: Stratification, occupations, t0: int, t1: int,
                       embeddings: EmbeddingMatrix, core_quantile: float = 0.05,
                       min_ads: int = 1, mode: str = "uniform") -> list[StratumChange]:
    """Vector and DN change per occupation within each of the four size subsets."""
    rows = []
    for label in SUBSETS:
        snaps = build_snapshots(strat.subsets[label], years=(t0, t1), occupations=occupations,
                                core_quantile=core_quantile)
        for occ in sorted(occupations):
            s0, s1 = snaps.get((occ, t0)), snaps.get((occ, t1))
            if s0 is None or s1 is None or s0.n_ads < min_ads or s1.n_ads < min_ads:
                continue
            try:
                vc = vector_change(s0, s1, embeddings, mode)
            except MissingSkill:
                continue
            rows.append(StratumChange(occ, label[0], label[1], vc, dn_change(s0, s1)[0],
                                      s0.n_ads, s1.n_ads))
    return rows
