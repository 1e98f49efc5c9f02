"""Independent reference computations used by the test-suite.

Nothing here imports the code paths under test except ``covered_by_corners``'s
shared slack constant, which both sides must agree on by construction.
"""

import math

import numpy as np

SLACK = 1e-12


def covered_by_corners(area, pixel_area, cx, cy):
    """Brute force: enumerate every pixel touching the bounding box and test
    all four corners against the closed disk. Center (cx, cy) in um, grid
    lines at integer multiples of the pixel side."""
    side = math.sqrt(pixel_area)
    r = math.sqrt(area / math.pi)
    reach = r + SLACK * side
    i0 = math.floor((cx - r) / side) - 1
    i1 = math.floor((cx + r) / side) + 1
    j0 = math.floor((cy - r) / side) - 1
    j1 = math.floor((cy + r) / side) + 1
    count = 0
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            inside = True
            for x in (i * side, (i + 1) * side):
                for y in (j * side, (j + 1) * side):
                    if (x - cx) ** 2 + (y - cy) ** 2 > reach * reach:
                        inside = False
            count += inside
    return count


def lattice_counts(area_ratio, k=2048, block=1 << 18):
    """Exhaustive offset sweep on a k x k cell-centred lattice over one pixel.

    Returns the histogram of covered-pixel counts (index b -> number of
    lattice offsets). Pixel-by-pixel corner test, vectorised over offsets.
    """
    r = math.sqrt(area_ratio / math.pi)
    reach2 = (r + SLACK) ** 2
    grid = (np.arange(k) + 0.5) / k
    span = int(math.ceil(r)) + 1
    hist = np.zeros(int(area_ratio) + 2, dtype=np.int64)
    uu, vv = np.meshgrid(grid, grid, indexing="ij")
    uu = uu.ravel()
    vv = vv.ravel()
    for s in range(0, uu.size, block):
        u = uu[s:s + block]
        v = vv[s:s + block]
        n = np.zeros(u.size, dtype=np.int64)
        for i in range(-span, span + 1):
            fx = np.maximum((i - u) ** 2, (i + 1 - u) ** 2)
            if np.all(fx > reach2):
                continue
            for j in range(-span, span + 1):
                fy = np.maximum((j - v) ** 2, (j + 1 - v) ** 2)
                n += (fx + fy) <= reach2
        hist += np.bincount(n, minlength=hist.size)[: hist.size]
    return hist


def lattice_probs(area_ratio, k=2048):
    h = lattice_counts(area_ratio, k)
    return h / h.sum()


def corner_counts(area_ratio, u, v, chunk=256):
    """Covered-pixel counts by direct four-corner tests, vectorised over particles.

    Unit grid, centres at ``(u, v)`` in ``[0, 1)``. Particles are processed in
    radius-sorted chunks; each chunk scans every pixel of its bounding square.
    """
    area_ratio = np.asarray(area_ratio, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    r = np.sqrt(area_ratio / math.pi)
    reach2 = (r + SLACK) ** 2
    order = np.argsort(r)
    out = np.zeros(r.size, dtype=np.int64)
    for s in range(0, r.size, chunk):
        idx = order[s:s + chunk]
        span = int(math.ceil(r[idx].max())) + 1
        cu, cv, rr = u[idx], v[idx], reach2[idx]
        n = np.zeros(idx.size, dtype=np.int64)
        for i in range(-span, span + 1):
            x0 = (i - cu) ** 2
            x1 = (i + 1 - cu) ** 2
            for j in range(-span, span + 1):
                y0 = (j - cv) ** 2
                y1 = (j + 1 - cv) ** 2
                n += (x0 + y0 <= rr) & (x0 + y1 <= rr) & (x1 + y0 <= rr) & (x1 + y1 <= rr)
        out[idx] = n
    return out
