"""Class-respecting SLIC superpixels on a semantic label map.

Clustering uses spatial distance only; a pixel may join a cluster only if
the cluster's seed carries the same class, so no superpixel straddles two
classes.  Pixels no compatible seed reaches, and fragments split off during
clustering, are resolved by a 4-connectivity pass.
"""

from __future__ import annotations

import math

import numpy as np
from skimage.measure import label as connected_label


MIN_STEP = 4.0


def _seed_grid(h: int, w: int, target: int) -> tuple[np.ndarray, np.ndarray, float]:
    step = max(math.sqrt(h * w / target), MIN_STEP)
    ny = max(1, int(round(h / step)))
    nx = max(1, int(round(w / step)))
    ys = (np.arange(ny) + 0.5) * h / ny
    xs = (np.arange(nx) + 0.5) * w / nx
    cy, cx = np.meshgrid(ys, xs, indexing="ij")
    return cy.ravel(), cx.ravel(), step


def segment_superpixels(labels: np.ndarray, target_count: int, iterations: int = 10,
                        min_size_ratio: float = 0.25) -> np.ndarray:
    """Superpixel id per pixel (0..n-1, 4-connected, single-class)."""
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.size == 0:
        raise ValueError("label map must be a non-empty 2-D array")
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    h, w = labels.shape
    cy, cx, step = _seed_grid(h, w, target_count)
    seed_class = labels[np.minimum(cy.astype(int), h - 1), np.minimum(cx.astype(int), w - 1)]
    reach = int(math.ceil(step))

    assign = np.full((h, w), -1, dtype=np.int64)
    for _ in range(iterations):
        dist = np.full((h, w), np.inf)
        assign.fill(-1)
        for k in range(cy.size):
            y0, y1 = max(0, int(cy[k]) - reach), min(h, int(cy[k]) + reach + 1)
            x0, x1 = max(0, int(cx[k]) - reach), min(w, int(cx[k]) + reach + 1)
            yy = np.arange(y0, y1)[:, None] + 0.5
            xx = np.arange(x0, x1)[None, :] + 0.5
            d = (yy - cy[k]) ** 2 + (xx - cx[k]) ** 2
            d = np.where(labels[y0:y1, x0:x1] == seed_class[k], d, np.inf)
            win = dist[y0:y1, x0:x1]
            better = d < win
            win[better] = d[better]
            assign[y0:y1, x0:x1][better] = k
        ids = assign.ravel()
        hit = ids >= 0
        counts = np.bincount(ids[hit], minlength=cy.size)
        yy, xx = np.divmod(np.flatnonzero(hit), w)
        sy = np.bincount(ids[hit], weights=yy + 0.5, minlength=cy.size)
        sx = np.bincount(ids[hit], weights=xx + 0.5, minlength=cy.size)
        live = counts > 0
        cy = np.where(live, sy / np.maximum(counts, 1), cy)
        cx = np.where(live, sx / np.maximum(counts, 1), cx)

    # unreached pixels form their own regions per class
    key = np.where(assign >= 0, assign, -1 - labels.astype(np.int64) - cy.size)
    comp = connected_label(key, background=np.iinfo(np.int64).min, connectivity=1) - 1
    return _merge_small(comp, labels, step * step * min_size_ratio)


def _merge_small(comp: np.ndarray, labels: np.ndarray, min_size: float) -> np.ndarray:
    """Fold fragments smaller than ``min_size`` into a same-class neighbor."""
    h, w = comp.shape
    n = comp.max() + 1
    sizes = np.bincount(comp.ravel(), minlength=n)
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    # adjacency between differing components of the same class
    pairs = []
    for a, b, la, lb in (
        (comp[:, :-1], comp[:, 1:], labels[:, :-1], labels[:, 1:]),
        (comp[:-1, :], comp[1:, :], labels[:-1, :], labels[1:, :]),
    ):
        m = (a != b) & (la == lb)
        pairs.append(np.stack([a[m], b[m]], axis=1))
    pairs = np.unique(np.concatenate(pairs), axis=0) if pairs else np.empty((0, 2), int)
    neighbors: dict[int, list[int]] = {}
    for a, b in pairs:
        neighbors.setdefault(int(a), []).append(int(b))
        neighbors.setdefault(int(b), []).append(int(a))

    merged_size = sizes.astype(np.float64).copy()
    for c in np.argsort(sizes, kind="stable"):
        root = find(c)
        if merged_size[root] >= min_size:
            continue
        best, best_size = None, -1.0
        for nb in neighbors.get(int(c), ()):
            r = find(nb)
            if r != root and merged_size[r] > best_size:
                best, best_size = r, merged_size[r]
        if best is not None:
            parent[root] = best
            merged_size[best] += merged_size[root]

    roots = np.array([find(i) for i in range(n)])
    _, relabeled = np.unique(roots, return_inverse=True)
    return relabeled[comp]
