#!/usr/bin/env python3
"""Regenerate the deterministic stand-in datasets in data/.

The two files mimic the shape and label conventions of the LibSVM datasets of
the same names (colon-cancer: 62 rows x 2000 dense continuous features, labels
-1/+1; mushrooms: 8124 rows x 112 one-hot indicator columns from 22 categorical
groups, labels 1/2) and are linearly separable by construction. Drop the real
files into $SANIA_DATA_DIR to supersede them.
"""

from __future__ import annotations

import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(os.path.dirname(HERE), "data")


def colon_cancer(path: str, seed: int = 20240301) -> None:
    rng = np.random.default_rng(seed)
    n, d = 62, 2000
    n_neg = 40  # tumor-flavored majority class, labeled -1
    labels = np.array([-1.0] * n_neg + [1.0] * (n - n_neg))
    col_scale = np.exp(rng.normal(0.0, 0.5, size=d))  # heterogeneous per-gene scales
    informative = rng.choice(d, size=200, replace=False)
    shift = np.zeros(d)
    shift[informative] = rng.normal(0.0, 0.6, size=200)
    X = rng.normal(0.0, 1.0, size=(n, d))
    X += labels[:, None] * shift[None, :]
    X *= col_scale[None, :]
    order = rng.permutation(n)
    X, labels = X[order], labels[order]
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n):
            pairs = " ".join(f"{j + 1}:{X[i, j]:.6f}" for j in range(d))
            fh.write(f"{int(labels[i])} {pairs}\n")


def mushrooms(path: str, seed: int = 20240302) -> None:
    rng = np.random.default_rng(seed)
    n, d, groups = 8124, 112, 22
    # category-group sizes summing to 112, at least 2 categories each
    sizes = np.full(groups, 2)
    for _ in range(d - sizes.sum()):
        sizes[rng.integers(0, groups)] += 1
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    # modest weights and a thin separation margin keep logistic training on a
    # smooth multi-epoch decay, like the real category data
    weights = rng.normal(0.0, 0.4, size=d)
    margin = 0.02

    rows = []
    while len(rows) < n:
        cats = rng.integers(0, sizes)
        idx = offsets + cats + 1  # ascending by construction, 1-based
        score = float(weights[idx - 1].sum())
        if abs(score) < margin:
            continue  # keep the classes linearly separable with a real margin
        rows.append((2 if score > 0 else 1, idx))
    # make sure every column occurs so the parsed width is exactly d
    seen = np.zeros(d + 1, dtype=bool)
    for _, idx in rows:
        seen[idx] = True
    for col in np.flatnonzero(~seen[1:]) + 1:
        g = int(np.searchsorted(offsets, col - 1, side="right") - 1)
        for k, (_, idx) in enumerate(rows):
            forced = idx.copy()
            forced[g] = col
            score = float(weights[forced - 1].sum())
            if abs(score) >= margin:
                rows[k] = (2 if score > 0 else 1, forced)
                break
        else:
            raise RuntimeError(f"could not place column {col}")
    with open(path, "w", encoding="utf-8") as fh:
        for label, idx in rows:
            pairs = " ".join(f"{j}:1" for j in idx)
            fh.write(f"{label} {pairs}\n")


def main() -> None:
    os.makedirs(DATA, exist_ok=True)
    colon_cancer(os.path.join(DATA, "colon-cancer"))
    mushrooms(os.path.join(DATA, "mushrooms"))
    print(f"wrote colon-cancer and mushrooms stand-ins to {DATA}")


if __name__ == "__main__":
    main()
