"""Sum-of-absolute-differences search kernels.

Both kernels scan candidates in a caller-supplied order and keep the first
strict minimum, so tie-breaking is fully decided by that order. Partial
sums are abandoned row by row once they can no longer beat the best
candidate (partial distance elimination); the result is identical to an
exhaustive scan.
"""

import logging
import threading

import numba
import numpy as np
from numba import njit, prange

logger = logging.getLogger(__name__)

# prange kernels must not be entered from two Python threads at once
_PARALLEL_LOCK = threading.Lock()


def set_worker_threads(threads: int) -> int:
    """Cap numba's worker pool; returns the count actually applied."""
    n = max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def flow_offsets(search_radius: int) -> np.ndarray:
    """All (u, v) in the square window, ordered by |(u,v)|, then v, then u."""
    r = int(search_radius)
    offsets = [(u, v) for v in range(-r, r + 1) for u in range(-r, r + 1)]
    offsets.sort(key=lambda o: (o[0] * o[0] + o[1] * o[1], o[1], o[0]))
    return np.asarray(offsets, dtype=np.int64)


def match_candidates(center_x: int, center_y: int, radius: int,
                     max_x: int, max_y: int) -> np.ndarray:
    """Top-left positions within ``radius`` of the center, clipped to
    ``[0, max_x] x [0, max_y]``, ordered by distance, then row-major."""
    x_lo, x_hi = max(0, center_x - radius), min(max_x, center_x + radius)
    y_lo, y_hi = max(0, center_y - radius), min(max_y, center_y + radius)
    if x_lo > x_hi or y_lo > y_hi:
        return np.empty((0, 2), dtype=np.int64)
    ys, xs = np.mgrid[y_lo:y_hi + 1, x_lo:x_hi + 1]
    xs, ys = xs.ravel(), ys.ravel()
    dist = (xs - center_x) ** 2 + (ys - center_y) ** 2
    # lexsort: last key is primary
    order = np.lexsort((xs, ys, dist))
    return np.stack([xs[order], ys[order]], axis=1).astype(np.int64)


@njit(parallel=True, cache=True)
def block_flow_kernel(prev, nxt, block, offsets, out):
    height, width = prev.shape
    grid_h, grid_w = out.shape[0], out.shape[1]
    n_off = offsets.shape[0]
    for b in prange(grid_h * grid_w):
        by = b // grid_w
        bx = b - by * grid_w
        y0 = by * block
        x0 = bx * block
        best = np.int64(-1)
        best_u = 0
        best_v = 0
        for k in range(n_off):
            u = offsets[k, 0]
            v = offsets[k, 1]
            yy = y0 + v
            xx = x0 + u
            if yy < 0 or xx < 0 or yy + block > height or xx + block > width:
                continue
            sad = np.int64(0)
            aborted = False
            for r in range(block):
                for c in range(block):
                    d = np.int64(prev[y0 + r, x0 + c]) - np.int64(nxt[yy + r, xx + c])
                    sad += d if d >= 0 else -d
                if best >= 0 and sad >= best:
                    aborted = True
                    break
            if not aborted and (best < 0 or sad < best):
                best = sad
                best_u = u
                best_v = v
        out[by, bx, 0] = best_u
        out[by, bx, 1] = best_v


@njit(cache=True, nogil=True)
def masked_match_kernel(frame, frame_mask, tmpl, tmpl_mask, candidates):
    """Returns (best candidate row, best sad, best valid-pixel count).

    A candidate's score is sad / count over pixels unmasked in both the
    template and the candidate region; scores are compared as exact
    rationals. Row -1 means no candidate had a valid pixel.
    """
    side_h, side_w = tmpl.shape[0], tmpl.shape[1]
    n_tmpl = np.int64(0)
    for r in range(side_h):
        for c in range(side_w):
            if not tmpl_mask[r, c]:
                n_tmpl += 1

    best_k = -1
    best_sad = np.int64(0)
    best_cnt = np.int64(0)
    if n_tmpl == 0:
        return best_k, best_sad, best_cnt

    for k in range(candidates.shape[0]):
        x = candidates[k, 0]
        y = candidates[k, 1]
        sad = np.int64(0)
        cnt = np.int64(0)
        aborted = False
        for r in range(side_h):
            for c in range(side_w):
                if tmpl_mask[r, c] or frame_mask[y + r, x + c]:
                    continue
                cnt += 1
                for ch in range(3):
                    d = np.int64(tmpl[r, c, ch]) - np.int64(frame[y + r, x + c, ch])
                    sad += d if d >= 0 else -d
            # sad / n_tmpl is a lower bound on this candidate's final score
            if best_k >= 0 and sad * best_cnt >= best_sad * n_tmpl:
                aborted = True
                break
        if aborted or cnt == 0:
            continue
        if best_k < 0 or sad * best_cnt < best_sad * cnt:
            best_k = k
            best_sad = sad
            best_cnt = cnt
    return best_k, best_sad, best_cnt


def block_flow(prev: np.ndarray, nxt: np.ndarray, block: int, offsets: np.ndarray,
               out: np.ndarray) -> None:
    """Thread-safe entry point for ``block_flow_kernel``."""
    with _PARALLEL_LOCK:
        block_flow_kernel(prev, nxt, block, offsets, out)
