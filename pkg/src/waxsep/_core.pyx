# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pixel kernels.

Hot loops only: gathering 3x3 classifier crops for large pixel batches and
two-pass union-find connected-component labeling. Higher-level numerics
stay in numpy where BLAS already wins.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def extract_crops(cnp.float64_t[:, :, ::1] tensor, cnp.int64_t[::1] xs, cnp.int64_t[::1] ys):
    """Gather edge-replicated 3x3 crops around (xs, ys) pixel centers.

    Returns a (len(xs), 9*channels) float32 matrix; within a row the order
    is (dy, dx, channel), dy and dx each running -1, 0, +1.
    """
    cdef Py_ssize_t h = tensor.shape[0]
    cdef Py_ssize_t w = tensor.shape[1]
    cdef Py_ssize_t c = tensor.shape[2]
    cdef Py_ssize_t n = xs.shape[0]
    out = np.empty((n, 9 * c), dtype=np.float32)
    cdef cnp.float32_t[:, ::1] ov = out
    cdef Py_ssize_t i, k, j, px, py
    cdef int dy, dx
    for i in range(n):
        if xs[i] < 0 or xs[i] >= w or ys[i] < 0 or ys[i] >= h:
            raise ValueError("crop center outside image bounds")
        j = 0
        for dy in range(-1, 2):
            py = ys[i] + dy
            if py < 0:
                py = 0
            elif py >= h:
                py = h - 1
            for dx in range(-1, 2):
                px = xs[i] + dx
                if px < 0:
                    px = 0
                elif px >= w:
                    px = w - 1
                for k in range(c):
                    ov[i, j] = <cnp.float32_t> tensor[py, px, k]
                    j += 1
    return out


cdef Py_ssize_t _find(cnp.int64_t[::1] parent, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t root = i
    while parent[root] != root:
        root = parent[root]
    # path compression
    cdef Py_ssize_t nxt
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


def label_components(cnp.uint8_t[:, ::1] mask):
    """4-connected component labeling of a binary mask.

    Returns (labels, count): labels is int64 with 0 for off-mask pixels and
    components numbered 1..count in scanline order of their first pixel.
    """
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    labels = np.zeros((h, w), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] lv = labels
    parent = np.arange(h * w + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] pv = parent
    cdef Py_ssize_t x, y, nprov = 0
    cdef Py_ssize_t left, up, ra, rb

    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0:
                continue
            left = lv[y, x - 1] if x > 0 else 0
            up = lv[y - 1, x] if y > 0 else 0
            if left == 0 and up == 0:
                nprov += 1
                lv[y, x] = nprov
            elif left != 0 and up == 0:
                lv[y, x] = left
            elif left == 0:
                lv[y, x] = up
            else:
                lv[y, x] = left
                ra = _find(pv, left)
                rb = _find(pv, up)
                if ra != rb:
                    if rb < ra:
                        ra, rb = rb, ra
                    pv[rb] = ra

    # Resolve and compact in scanline order of first appearance.
    remap = np.zeros(nprov + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] rv = remap
    cdef Py_ssize_t count = 0, root
    for y in range(h):
        for x in range(w):
            if lv[y, x] == 0:
                continue
            root = _find(pv, lv[y, x])
            if rv[root] == 0:
                count += 1
                rv[root] = count
            lv[y, x] = rv[root]
    return labels, count
