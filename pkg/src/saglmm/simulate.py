"""Synthetic data generators and dataset/design file formats.

Two benchmark generators are provided: a 10-cluster logistic model with
one random intercept per cluster, and a crossed-random-effects mating
model with female and male effects and four species-combination fixed
effects. The crossed design ships as a documented reconstruction of the
classic balanced experiment (the pairing layout is not uniquely
determined by the model statement): 3 blocks of disjoint animals, 10
animals per species-sex per block, every animal in exactly 6 pairs, 3
with each partner species.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .model import GlmmData, Scale, Theta, expit

__all__ = [
    "gen_booth_hobert",
    "SalamanderDesign",
    "default_salamander_design",
    "gen_salamander",
    "save_dataset",
    "load_dataset",
    "save_design",
    "load_design",
    "BOOTH_HOBERT_TRUTH",
    "SALAMANDER_TRUTH",
]

BOOTH_HOBERT_TRUTH = {"beta": (5.0,), "sigma2": (0.5,)}
SALAMANDER_TRUTH = {"beta": (1.03, 0.32, -1.95, 0.99), "sigma2": (1.4, 1.25)}

_BH_CLUSTERS = 10
_BH_POINTS = 15


def gen_booth_hobert(beta: float, sigma2: float, seed: int) -> tuple[GlmmData, np.ndarray]:
    """Clustered logistic data: 10 clusters x 15 points, x = j/15.

    Returns the dataset and the true latent vector (diagnostics only;
    estimators never see it).
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    x = np.tile(np.arange(1, _BH_POINTS + 1) / _BH_POINTS, _BH_CLUSTERS)
    X = x[:, None]
    Z = np.kron(np.eye(_BH_CLUSTERS), np.ones((_BH_POINTS, 1)))
    gen = rng_mod.stream(seed, rng_mod.NS_DATA)
    u = gen.standard_normal(_BH_CLUSTERS) * np.sqrt(sigma2)
    prob = expit(X @ [beta] + Z @ u)
    y = (gen.random(X.shape[0]) < prob).astype(float)
    return GlmmData(y, X, Z, (_BH_CLUSTERS,)), u


@dataclass(frozen=True)
class SalamanderDesign:
    """Observed female/male pairings with species labels.

    pairs holds (female_id, male_id, female_species, male_species) with
    ids in 1..60 and species 'A' or 'B'; exactly 360 pairs.
    """

    pairs: tuple[tuple[int, int, str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(
            (int(f), int(m), str(fs), str(ms)) for f, m, fs, ms in self.pairs))
        if len(self.pairs) != 360:
            raise ValueError(f"expected 360 pairs, got {len(self.pairs)}")
        fspecies: dict[int, str] = {}
        mspecies: dict[int, str] = {}
        for f, m, fs, ms in self.pairs:
            if not (1 <= f <= 60 and 1 <= m <= 60):
                raise ValueError("animal ids must lie in 1..60")
            if fs not in ("A", "B") or ms not in ("A", "B"):
                raise ValueError("species labels must be 'A' or 'B'")
            if fspecies.setdefault(f, fs) != fs or mspecies.setdefault(m, ms) != ms:
                raise ValueError("inconsistent species label for an animal id")

    def female_species(self) -> dict[int, str]:
        return {f: fs for f, _, fs, _ in self.pairs}

    def male_species(self) -> dict[int, str]:
        return {m: ms for _, m, _, ms in self.pairs}


def default_salamander_design(seed: int) -> SalamanderDesign:
    """Balanced reconstruction of the crossed mating design.

    Three blocks of disjoint animals; within a block each of the four
    species-combination cells pairs its 10 females with 3 of its 10
    males via a seed-permuted circulant, so every animal ends up in 6
    pairs, 3 with each partner species.
    """
    gen = rng_mod.stream(seed, rng_mod.NS_DESIGN)
    species = lambda local: "A" if local < 10 else "B"  # noqa: E731
    pairs = []
    for block in range(3):
        base = block * 20
        for fs_start in (0, 10):
            for ms_start in (0, 10):
                perm = gen.permutation(10)
                for k in range(10):
                    female = base + fs_start + k + 1
                    for o in range(3):
                        male = base + ms_start + int(perm[(k + o) % 10]) + 1
                        pairs.append((female, male, species(fs_start), species(ms_start)))
    return SalamanderDesign(tuple(pairs))


_COMBO_INDEX = {("A", "A"): 0, ("A", "B"): 1, ("B", "A"): 2, ("B", "B"): 3}


def gen_salamander(theta: Theta, design: SalamanderDesign,
                   seed: int) -> tuple[GlmmData, np.ndarray]:
    """Binary mating outcomes for every designed pair.

    theta needs 4 fixed effects ordered (A/A, A/B, B/A, B/B) and 2
    variance components (female, male). Returns the dataset (q = 120,
    females in columns 0..59, males in 60..119) and the true latent
    vector.
    """
    if theta.p != 4 or theta.K != 2:
        raise ValueError("salamander model needs p=4 fixed effects and K=2 variance groups")
    sigma2 = theta.with_scale(Scale.SIGMA2).var
    n = len(design.pairs)
    X = np.zeros((n, 4))
    Z = np.zeros((n, 120))
    for r, (f, m, fs, ms) in enumerate(design.pairs):
        X[r, _COMBO_INDEX[(fs, ms)]] = 1.0
        Z[r, f - 1] = 1.0
        Z[r, 60 + m - 1] = 1.0
    gen = rng_mod.stream(seed, rng_mod.NS_DATA)
    u_female = gen.standard_normal(60) * np.sqrt(sigma2[0])
    u_male = gen.standard_normal(60) * np.sqrt(sigma2[1])
    u = np.concatenate([u_female, u_male])
    prob = expit(X @ theta.beta + Z @ u)
    y = (gen.random(n) < prob).astype(float)
    return GlmmData(y, X, Z, (60, 60)), u


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def save_dataset(path, data: GlmmData) -> None:
    """Flat text format: header `n p q K q_1..q_K`, then one row per
    observation: `y x_1..x_p idx:val ...` with 0-based sparse Z entries."""
    lines = [" ".join(str(v) for v in
                      (data.n, data.p, data.q, data.K, *data.groups))]
    for i in range(data.n):
        parts = [repr(float(data.y[i]))]
        parts.extend(repr(float(v)) for v in data.X[i])
        nz = np.nonzero(data.Z[i])[0]
        parts.extend(f"{int(j)}:{repr(float(data.Z[i, j]))}" for j in nz)
        lines.append(" ".join(parts))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> GlmmData:
    """Inverse of :func:`save_dataset` (values round-trip bit-exactly)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split()
    n, p, q, K = (int(v) for v in header[:4])
    groups = tuple(int(v) for v in header[4:4 + K])
    if len(lines) - 1 != n:
        raise ValueError(f"expected {n} data rows, found {len(lines) - 1}")
    y = np.empty(n)
    X = np.empty((n, p))
    Z = np.zeros((n, q))
    for i, line in enumerate(lines[1:]):
        parts = line.split()
        y[i] = float(parts[0])
        for j in range(p):
            X[i, j] = float(parts[1 + j])
        for entry in parts[1 + p:]:
            idx, val = entry.split(":")
            Z[i, int(idx)] = float(val)
    return GlmmData(y, X, Z, groups)


def save_design(path, design: SalamanderDesign) -> None:
    """CSV with header female_id,male_id,female_species,male_species."""
    with open(path, "w") as fh:
        fh.write("female_id,male_id,female_species,male_species\n")
        for f, m, fs, ms in design.pairs:
            fh.write(f"{f},{m},{fs},{ms}\n")


def load_design(path) -> SalamanderDesign:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0].split(",")[0] != "female_id":
        raise ValueError("design file must start with the documented header")
    pairs = []
    for line in lines[1:]:
        f, m, fs, ms = line.split(",")
        pairs.append((int(f), int(m), fs, ms))
    return SalamanderDesign(tuple(pairs))
