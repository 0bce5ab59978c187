"""Independent reference implementations used to check the package.

Everything here is written the slow, obviously-correct way: exhaustive
enumeration over all binary configurations, dense double loops, and direct
formula transcriptions. Nothing imports from hltforest's numerics — these
must fail independently or not at all.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def enumerate_joint(category) -> tuple[np.ndarray, np.ndarray]:
    """All (latent, items...) configurations of a single-latent tree model.

    Returns (configs, probs): configs has one row per assignment of the
    latent plus each observed child, probs the exact joint probability.
    """
    k = category.size
    prior = float(category.prior)
    tables = np.asarray(category.child_tables(), dtype=float)
    configs = []
    probs = []
    for bits in itertools.product((0, 1), repeat=k + 1):
        z, xs = bits[0], bits[1:]
        p = prior if z == 1 else 1.0 - prior
        for j, x in enumerate(xs):
            on = tables[j, z]
            p *= on if x == 1 else 1.0 - on
        configs.append(bits)
        probs.append(p)
    return np.array(configs), np.array(probs)


def enum_loglik(category, rows: np.ndarray) -> float:
    """Log-likelihood of binary rows by summing the enumerated joint."""
    configs, probs = enumerate_joint(category)
    total = 0.0
    for row in np.asarray(rows):
        mask = np.all(configs[:, 1:] == row[None, :], axis=1)
        total += math.log(probs[mask].sum())
    return total


def enum_posterior(category, rows: np.ndarray) -> np.ndarray:
    """P(latent=1 | row) by conditioning the enumerated joint."""
    configs, probs = enumerate_joint(category)
    out = []
    for row in np.asarray(rows):
        mask = np.all(configs[:, 1:] == row[None, :], axis=1)
        sel = probs[mask]
        z = configs[mask, 0]
        out.append(sel[z == 1].sum() / sel.sum())
    return np.array(out)


def enum_forest_loglik(categories, rows: np.ndarray) -> float:
    """Log-likelihood of a forest: independent trees multiply."""
    total = 0.0
    for cat in categories:
        cols = np.asarray(cat.items)
        total += enum_loglik(cat, np.asarray(rows)[:, cols])
    return total


def model_joint(model) -> tuple[np.ndarray, np.ndarray]:
    """Exact joint over ALL variables of a latent forest, by enumeration.

    Works for any parent/table structure, not just single-latent trees.
    Assumes identity column mapping (variable v reads data column v).
    """
    n_vars = len(model.parent)
    configs = np.array(list(itertools.product((0, 1), repeat=n_vars)))
    probs = np.ones(len(configs))
    for v in range(n_vars):
        t = np.asarray(model.tables[v], dtype=float)
        if model.parent[v] < 0:
            on = np.full(len(configs), t[0])
        else:
            on = t[configs[:, int(model.parent[v])]]
        probs *= np.where(configs[:, v] == 1, on, 1.0 - on)
    return configs, probs


def enum_model_loglik(model, rows: np.ndarray) -> float:
    """Log-likelihood of observed rows by marginalizing the enumerated joint."""
    configs, probs = model_joint(model)
    k = model.n_obs
    total = 0.0
    for row in np.asarray(rows):
        mask = np.all(configs[:, :k] == row[None, :], axis=1)
        total += math.log(probs[mask].sum())
    return total


def enum_model_posteriors(model, rows: np.ndarray) -> np.ndarray:
    """P(latent=1 | observed row) for every latent, shape (n_rows, n_latent)."""
    configs, probs = model_joint(model)
    k = model.n_obs
    latents = list(range(k, len(model.parent)))
    out = np.empty((len(rows), len(latents)))
    for r, row in enumerate(np.asarray(rows)):
        mask = np.all(configs[:, :k] == row[None, :], axis=1)
        sel_p = probs[mask]
        sel_c = configs[mask]
        for j, v in enumerate(latents):
            out[r, j] = sel_p[sel_c[:, v] == 1].sum() / sel_p.sum()
    return out


def dense_cosine(matrix: np.ndarray) -> np.ndarray:
    """Cosine similarity between distinct columns (zero diagonal), double loop."""
    x = np.asarray(matrix, dtype=float)
    n = x.shape[1]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            denom = math.sqrt((x[:, i] ** 2).sum()) * math.sqrt((x[:, j] ** 2).sum())
            out[i, j] = float(x[:, i] @ x[:, j]) / denom if denom else 0.0
    return out


def mi_from_joint(joint: np.ndarray) -> float:
    """Mutual information of a 2x2 joint table, four-term natural-log sum."""
    joint = np.asarray(joint, dtype=float)
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    total = 0.0
    for a in (0, 1):
        for b in (0, 1):
            if joint[a, b] > 0:
                total += joint[a, b] * math.log(joint[a, b] / (px[a] * py[b]))
    return total


def empirical_mi(x: np.ndarray, y: np.ndarray) -> float:
    """MI between two binary columns from their empirical joint."""
    x = np.asarray(x).astype(int)
    y = np.asarray(y).astype(int)
    n = len(x)
    joint = np.zeros((2, 2))
    for a in (0, 1):
        for b in (0, 1):
            joint[a, b] = np.sum((x == a) & (y == b)) / n
    return mi_from_joint(joint)


def hand_bic(loglik: float, n_params: int, n_rows: int) -> float:
    return loglik - (n_params / 2.0) * math.log(n_rows)


def count_params(categories) -> int:
    """One free parameter per latent prior, two per observed child table."""
    return sum(1 + 2 * cat.size for cat in categories)


def exact_dispersion(lists: list[set], n: int) -> float:
    """Mean pairwise 1 - |overlap|/n over every unordered pair of users."""
    pairs = list(itertools.combinations(range(len(lists)), 2))
    vals = [1.0 - len(lists[i] & lists[j]) / n for i, j in pairs]
    return float(np.mean(vals))
