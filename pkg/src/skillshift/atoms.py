"""Skill atoms: k-SVD dictionary learning over skill vectors and the views built on it.

Skills are encoded as at most ``T``-sparse combinations of unit-norm atoms
by orthogonal matching pursuit. Occupations map onto atoms by summing the
codes of their core skills.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateProfile

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SparseCode:
    indices: np.ndarray
    coefs: np.ndarray
    residual_norm: float
    zero_input: bool = False

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(c) for i, c in zip(self.indices, self.coefs)}


def sparse_encode(x, atoms: np.ndarray, T: int, tol: float = 1e-10) -> SparseCode:
    """Orthogonal matching pursuit of ``x`` over the rows of ``atoms``.

    Greedily picks the atom most correlated with the residual, refits all
    selected coefficients by least squares, and stops after ``T`` atoms or
    once the residual vanishes.
    """
    x = np.asarray(x, dtype=float)
    k = atoms.shape[0]
    if T > k:
        raise ConfigError(f"T={T} exceeds number of atoms {k}")
    xnorm = np.linalg.norm(x)
    if xnorm == 0:
        return SparseCode(np.empty(0, dtype=int), np.empty(0), 0.0, zero_input=True)
    support: list[int] = []
    coefs = np.empty(0)
    residual = x
    for _ in range(T):
        corr = np.abs(atoms @ residual)
        corr[support] = -1.0
        j = int(np.argmax(corr))
        if corr[j] <= tol * xnorm:
            break
        support.append(j)
        sub = atoms[support]
        coefs = np.linalg.lstsq(sub.T, x, rcond=None)[0]
        residual = x - coefs @ sub
        if np.linalg.norm(residual) <= tol * xnorm:
            break
    return SparseCode(np.array(support, dtype=int), coefs, float(np.linalg.norm(residual)))


def encode_all(X: np.ndarray, atoms: np.ndarray, T: int) -> np.ndarray:
    """Dense (n_samples, k) code matrix, one OMP per row of ``X``."""
    codes = np.zeros((X.shape[0], atoms.shape[0]))
    for i, x in enumerate(X):
        c = sparse_encode(x, atoms, T)
        codes[i, c.indices] = c.coefs
    return codes


def r_squared(X: np.ndarray, reconstruction: np.ndarray) -> float:
    denom = np.sum((X - X.mean(axis=0)) ** 2)
    return float(1.0 - np.sum((X - reconstruction) ** 2) / denom)


def top_skills_for_atom(X: np.ndarray, atom: np.ndarray, skills, n: int = 25) -> list[tuple[str, float]]:
    norms = np.linalg.norm(X, axis=1)
    norms[norms == 0] = 1.0
    sims = (X @ atom) / (norms * np.linalg.norm(atom))
    order = sorted(range(len(skills)), key=lambda i: (-sims[i], skills[i]))[:n]
    return [(skills[i], float(sims[i])) for i in order]


def atom_top_skills(dictionary: "AtomDictionary", X: np.ndarray, atom: int, n: int = 25):
    """The ``n`` skills whose vectors (rows of ``X``) are most cosine-similar to an atom."""
    if not 0 <= atom < dictionary.k:
        raise IndexError(f"atom {atom} out of range")
    return top_skills_for_atom(X, dictionary.atoms[atom], dictionary.skills, n)


def topic_diversity(X: np.ndarray, atoms: np.ndarray, n: int = 25) -> float:
    """Distinct skills among every atom's ``n`` nearest skills, over ``n * k``."""
    n = min(n, X.shape[0])
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    sims = (X / norms) @ (atoms / np.linalg.norm(atoms, axis=1, keepdims=True)).T
    seen = set()
    for j in range(atoms.shape[0]):
        seen.update(np.argsort(-sims[:, j], kind="stable")[:n].tolist())
    return len(seen) / (n * atoms.shape[0])


@dataclass
class AtomDictionary:
    atoms: np.ndarray  # (k, d), unit rows
    codes: np.ndarray  # (V, k), at most T non-zeros per row
    skills: list[str]
    sparsity: int
    r2: float = float("nan")
    diversity: float = float("nan")
    history: list[dict] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.atoms.shape[0]

    def code(self, skill: str) -> dict[int, float]:
        row = self.codes[self.index(skill)]
        nz = np.flatnonzero(row)
        return {int(j): float(row[j]) for j in nz}

    def index(self, skill: str) -> int:
        if not hasattr(self, "_index"):
            self._index = {s: i for i, s in enumerate(self.skills)}
        return self._index[skill]

    def save(self, prefix) -> None:
        prefix = str(prefix)
        header = {"k": self.k, "dim": self.atoms.shape[1], "sparsity": self.sparsity,
                  "vocab_size": len(self.skills), "r2": self.r2, "diversity": self.diversity,
                  "dtype": "<f4", "profile_normalization": "abs"}
        Path(prefix + ".header.json").write_text(json.dumps(header, indent=1) + "\n")
        Path(prefix + ".f32").write_bytes(self.atoms.astype("<f4").tobytes())
        rows, cols = np.nonzero(self.codes)
        with open(prefix + ".codes.csv", "w", encoding="utf-8") as fh:
            fh.write("skill_id,atom_id,coeff\n")
            for i, j in zip(rows, cols):
                fh.write(f"{i},{j},{float(self.codes[i, j])!r}\n")
        Path(prefix + ".vocab.txt").write_text("".join(s + "\n" for s in self.skills), encoding="utf-8")

    @classmethod
    def load(cls, prefix) -> "AtomDictionary":
        prefix = str(prefix)
        header = json.loads(Path(prefix + ".header.json").read_text())
        atoms = np.frombuffer(Path(prefix + ".f32").read_bytes(), dtype="<f4")
        atoms = atoms.reshape(header["k"], header["dim"]).astype(float)
        skills = Path(prefix + ".vocab.txt").read_text(encoding="utf-8").splitlines()
        codes = np.zeros((len(skills), header["k"]))
        with open(prefix + ".codes.csv", encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                i, j, c = line.rstrip("\n").split(",")
                codes[int(i), int(j)] = float(c)
        return cls(atoms, codes, skills, header["sparsity"], header["r2"], header["diversity"])


def _error(X, codes, atoms) -> float:
    return float(np.sum((X - codes @ atoms) ** 2))


def ksvd_learn(X: np.ndarray, k: int, T: int = 5, iterations: int = 20, seed: int = 0,
               skills=None, diversity_n: int = 25) -> AtomDictionary:
    """Learn ``k`` unit atoms such that each row of ``X`` is ~T-sparse in them.

    Each iteration encodes every row with OMP, then sweeps the atoms once,
    replacing each by the leading singular vector of the residual restricted
    to the rows that use it. Atoms nobody uses are re-seeded from the
    worst-reconstructed rows. ``history`` records the squared error before
    and after every dictionary-update sweep.
    """
    X = np.asarray(X, dtype=float)
    V = X.shape[0]
    if k < 2:
        raise ConfigError("k must be >= 2")
    if k > V:
        raise ConfigError(f"k={k} exceeds the number of skills {V}")
    skills = list(skills) if skills is not None else [str(i) for i in range(V)]
    rng = np.random.default_rng(seed)
    usable = np.flatnonzero(np.linalg.norm(X, axis=1) > 0)
    if len(usable) < k:
        raise ConfigError("fewer non-zero rows than atoms")
    atoms = X[np.sort(rng.choice(usable, size=k, replace=False))].copy()
    atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)

    history = []
    for it in range(iterations):
        codes = encode_all(X, atoms, T)
        before = _error(X, codes, atoms)
        residual_norms = np.linalg.norm(X - codes @ atoms, axis=1)
        reseed_order = iter(np.argsort(-residual_norms, kind="stable"))
        reseeded = 0
        for j in range(k):
            users = np.flatnonzero(codes[:, j])
            if len(users) == 0:
                idx = next(reseed_order)
                while np.linalg.norm(X[idx]) == 0:
                    idx = next(reseed_order)
                atoms[j] = X[idx] / np.linalg.norm(X[idx])
                reseeded += 1
                continue
            E = X[users] - codes[users] @ atoms + np.outer(codes[users, j], atoms[j])
            U, s, Vt = np.linalg.svd(E, full_matrices=False)
            atoms[j] = Vt[0]
            codes[users, j] = s[0] * U[:, 0]
        after = _error(X, codes, atoms)
        history.append({"iteration": it, "error_before_update": before,
                        "error_after_update": after, "reseeded": reseeded})
        log.debug("k-SVD iter %d: %.6g -> %.6g", it, before, after)

    codes = encode_all(X, atoms, T)
    # atoms are direction-only: orient each so its mean coefficient is positive
    for j in range(k):
        used = codes[:, j] != 0
        if used.any() and codes[used, j].mean() < 0:
            atoms[j] = -atoms[j]
            codes[:, j] = -codes[:, j]
    return AtomDictionary(atoms, codes, skills, T, r_squared(X, codes @ atoms),
                          topic_diversity(X, atoms, diversity_n), history)


@dataclass(frozen=True)
class AtomCountDiagnostics:
    k: int
    r2: float
    diversity: float
    score: float


def _minmax(values):
    values = np.asarray(values, dtype=float)
    span = values.max() - values.min()
    if span == 0:
        return np.ones_like(values)
    return (values - values.min()) / span


def select_atom_count(X: np.ndarray, grid, T: int = 5, iterations: int = 20, seed: int = 0,
                      diversity_n: int = 25, skills=None):
    """Pick k from ``grid`` maximizing the mean of min-max normalized R^2 and topic diversity.

    Returns ``(best_k, table, dictionaries)``; grid entries above the number
    of skills are skipped with a warning.
    """
    grid = sorted(set(int(k) for k in grid))
    if not grid:
        raise ConfigError("empty atom-count grid")
    fits = {}
    for k in grid:
        if k > X.shape[0]:
            log.warning("skipping k=%d: larger than the %d skills", k, X.shape[0])
            continue
        fits[k] = ksvd_learn(X, k, T, iterations, seed, skills, diversity_n)
    if not fits:
        raise ConfigError("no feasible atom count in grid")
    ks = list(fits)
    r2 = _minmax([fits[k].r2 for k in ks])
    div = _minmax([fits[k].diversity for k in ks])
    score = (r2 + div) / 2
    table = [AtomCountDiagnostics(k, fits[k].r2, fits[k].diversity, float(s)) for k, s in zip(ks, score)]
    best = ks[int(np.argmax(score))]
    return best, table, fits


@dataclass(frozen=True)
class OccupationAtomProfile:
    occupation: str
    year: int
    weights: np.ndarray  # per atom, sums to 1
    normalization: str = "abs"


def occupation_atom_weights(core_skills, dictionary: AtomDictionary, occupation: str = "",
                            year: int = 0, normalization: str = "abs") -> OccupationAtomProfile:
    """Sum core-skill codes atom-wise, then normalize to unit total.

    ``normalization="abs"`` divides absolute summed weights by their total
    so profiles stay non-negative; ``"signed"`` divides the signed sums by
    their signed total.
    """
    rows = [dictionary.index(s) for s in core_skills]
    raw = dictionary.codes[rows].sum(axis=0)
    if normalization == "abs":
        raw = np.abs(raw)
    elif normalization != "signed":
        raise ValueError(f"unknown normalization {normalization!r}")
    total = raw.sum()
    if total == 0 or not np.isfinite(total):
        raise DegenerateProfile(f"total atom weight is zero for {occupation} {year}")
    return OccupationAtomProfile(occupation, year, raw / total, normalization)


@dataclass
class AtomImportanceSeries:
    importance_t0: np.ndarray
    importance_t1: np.ndarray
    mismatched: list[str] = field(default_factory=list)

    @property
    def change(self) -> np.ndarray:
        return self.importance_t1 - self.importance_t0


def atom_importance_change(profiles_t0: dict[str, OccupationAtomProfile],
                           profiles_t1: dict[str, OccupationAtomProfile]) -> AtomImportanceSeries:
    """Per-atom sum of occupation weights in each year, and the difference."""
    if not profiles_t0 or not profiles_t1:
        raise ConfigError("empty profile set")
    mismatched = sorted(set(profiles_t0) ^ set(profiles_t1))
    if mismatched:
        log.warning("%d occupations present in only one year", len(mismatched))
    imp0 = np.sum([profiles_t0[o].weights for o in sorted(profiles_t0)], axis=0)
    imp1 = np.sum([profiles_t1[o].weights for o in sorted(profiles_t1)], axis=0)
    return AtomImportanceSeries(imp0, imp1, mismatched)


def project_2d(atoms: np.ndarray) -> np.ndarray:
    """Coordinates on the top two principal directions, sign-fixed for determinism."""
    centered = atoms - atoms.mean(axis=0)
    _, _, Vt = np.linalg.svd(centered, full_matrices=False)
    comps = Vt[:2]
    for r in range(comps.shape[0]):
        if comps[r, np.argmax(np.abs(comps[r]))] < 0:
            comps[r] = -comps[r]
    coords = centered @ comps.T
    if coords.shape[1] < 2:
        coords = np.hstack([coords, np.zeros((len(coords), 2 - coords.shape[1]))])
    return coords


def grid_layout(coords, rows: int = 14, cols: int = 15) -> np.ndarray:
    """Assign atoms to lattice cells spanning the coordinates' bounding box.

    Cells are visited in row-major order and each takes the nearest atom not
    yet placed. Returns an ``(n_atoms, 2)`` array of (row, col); cells left
    over when atoms are fewer than cells stay empty.
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    if n > rows * cols:
        raise ConfigError(f"{n} atoms do not fit a {rows}x{cols} grid")
    if not np.all(np.isfinite(coords)):
        raise ConfigError("non-finite coordinates")
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    xs = np.linspace(lo[0], hi[0], cols) if cols > 1 else np.array([lo[0]])
    ys = np.linspace(lo[1], hi[1], rows) if rows > 1 else np.array([lo[1]])
    placed = np.full((n, 2), -1, dtype=int)
    free = np.ones(n, dtype=bool)
    for r in range(rows):
        for c in range(cols):
            if not free.any():
                return placed
            d = np.hypot(coords[:, 0] - xs[c], coords[:, 1] - ys[r])
            d[~free] = np.inf
            a = int(np.argmin(d))
            placed[a] = (r, c)
            free[a] = False
    return placed
