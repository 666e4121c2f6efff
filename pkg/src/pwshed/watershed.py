"""Path-reducing watershed: steps I-IV as barrier-separated parallel phases.

Three algorithm variants share steps I and II and differ in III/IV:

* PRW   -- RR-bounded path reduction, iterated min-label merging in step IV
* PRUF  -- RR-bounded path reduction, union-find merge in step IV
* APRUF -- unbounded per-pixel path following in step III, union-find in IV

Step II (non-minimal plateau resolution) comes in three strategies:
``SYNC`` (one state update per global iteration, double-buffered states),
``ASYNC`` (tile-local iteration to convergence against a frozen one-pixel
band, fast but skews plateau division towards tile edges) and ``BALANCED``
(tile-local iteration with negative distance states, same division as SYNC).

Each numba kernel below is one parallel phase; returning to Python between
kernel launches is the global barrier.  Every phase either writes only the
pixel it owns, reads a buffer nobody writes during the phase, or goes through
an order-independent atomic (min-root union, atomic minimum), so results are
bit-identical for any worker count.

All per-pixel arrays are flat.  Labels are int32 linear pixel indices, so
images are limited to 2**31 - 1 pixels.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from ._parallel import atomic_min, worker_count
from .grid import (
    WATERSHED_DTYPES,
    ConfigError,
    Connectivity,
    GridImage,
    _decode,
    _neighbor,
    as_grid,
    check_connectivity,
    dims3,
)
from .unionfind import flatten, union

MAX_PIXELS = 2**31 - 1
DEFAULT_TILES = {1: (256,), 2: (16, 16), 3: (8, 8, 8)}


class Variant(enum.Enum):
    PRW = "prw"
    PRUF = "pruf"
    APRUF = "apruf"


class Resolution(enum.Enum):
    SYNC = "sync"
    ASYNC = "async"
    BALANCED = "bal"


@dataclass(frozen=True)
class WatershedConfig:
    variant: Variant = Variant.PRUF
    resolution: Resolution = Resolution.BALANCED
    connectivity: Connectivity | None = None  # None: von Neumann of the image's rank
    reduction_rate: int = 6
    tile_dims: tuple[int, ...] | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.reduction_rate < 1:
            raise ConfigError(f"reduction rate must be >= 1, got {self.reduction_rate}")
        if self.tile_dims is not None and any(t < 1 for t in self.tile_dims):
            raise ConfigError(f"tile extents must be >= 1, got {self.tile_dims}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {self.workers}")

    def resolve_connectivity(self, ndim: int) -> Connectivity:
        return self.connectivity or Connectivity.default_for(ndim)

    def resolve_tiles(self, ndim: int) -> tuple[int, int, int]:
        tiles = self.tile_dims or DEFAULT_TILES[ndim]
        if len(tiles) != ndim:
            raise ConfigError(f"{len(tiles)}-axis tiles for a {ndim}-axis image")
        return dims3(tiles)


@dataclass
class WatershedResult:
    labels: np.ndarray
    region_count: int
    step_timings: dict[str, float]
    iterations: dict[str, int] = field(default_factory=dict)
    states: np.ndarray | None = None


# ---------------------------------------------------------------- kernels


@njit(cache=True, parallel=True)
def _init_kernel(img, offs, d, h, w, S, L):
    for p in prange(img.shape[0]):
        z, y, x = _decode(p, h, w)
        q = -1
        for k in range(offs.shape[0]):
            nb = _neighbor(p, k, z, y, x, offs, d, h, w)
            if nb >= 0 and (q < 0 or img[nb] <= img[q]):
                q = nb
        if q < 0:
            L[p] = p
            S[p] = 1
        elif img[q] < img[p]:
            L[p] = q
            S[p] = 0
        elif img[q] > img[p]:
            L[p] = p
            S[p] = 1
        elif q > p:
            L[p] = q
            S[p] = 2
        else:
            L[p] = p
            S[p] = 3


@njit(cache=True, parallel=True)
def _sync_kernel(img, offs, d, h, w, S, S2, L):
    changed = 0
    for p in prange(img.shape[0]):
        s = S[p]
        S2[p] = s
        if s >= 2:
            z, y, x = _decode(p, h, w)
            best = -1
            for k in range(offs.shape[0]):
                nb = _neighbor(p, k, z, y, x, offs, d, h, w)
                if nb >= 0 and S[nb] == 0 and img[nb] == img[p]:
                    best = nb
            if best >= 0:
                L[p] = best
                S2[p] = 0
                changed += 1
    return changed


@njit(cache=True, inline="always")
def _tile_candidate(s, balanced, img, ip, p, z, y, x, offs, d, h, w, locS,
                    bz, by, bx, lh, lw):
    """New (state, label) for one pixel from the tile-local states."""
    best = -1
    best_s = np.int32(0)
    if s >= 2 or (balanced and s < 0):
        for k in range(offs.shape[0]):
            nb = _neighbor(p, k, z, y, x, offs, d, h, w)
            if nb < 0 or img[nb] != ip:
                continue
            nz = z + offs[k, 0]
            ny = y + offs[k, 1]
            nx = x + offs[k, 2]
            sq = locS[((nz - bz) * lh + (ny - by)) * lw + (nx - bx)]
            if balanced:
                if sq <= 0 and (s >= 2 or s + 1 < sq):
                    # closest-to-boundary neighbour, ties to the larger index
                    if best < 0 or sq >= best_s:
                        best = nb
                        best_s = sq
            elif sq == 0:
                best = nb
    if best < 0:
        return s, -1
    if balanced:
        return best_s - 1, best
    return np.int32(0), best


@njit(cache=True, parallel=True)
def _tile_kernel(img, offs, d, h, w, tz, ty, tx, balanced, S, S2, L):
    ntz = (d + tz - 1) // tz
    nty = (h + ty - 1) // ty
    ntx = (w + tx - 1) // tx
    changed = 0
    for t in prange(ntz * nty * ntx):
        z0 = (t // (nty * ntx)) * tz
        y0 = ((t // ntx) % nty) * ty
        x0 = (t % ntx) * tx
        z1 = min(z0 + tz, d)
        y1 = min(y0 + ty, h)
        x1 = min(x0 + tx, w)
        # tile plus a one-pixel band, clipped to the image
        bz = max(z0 - 1, 0)
        by = max(y0 - 1, 0)
        bx = max(x0 - 1, 0)
        ld = min(z1 + 1, d) - bz
        lh = min(y1 + 1, h) - by
        lw = min(x1 + 1, w) - bx
        locS = np.empty(ld * lh * lw, dtype=S.dtype)
        for lz in range(ld):
            for ly in range(lh):
                for lx in range(lw):
                    locS[(lz * lh + ly) * lw + lx] = S[((bz + lz) * h + by + ly) * w + bx + lx]
        locS2 = locS.copy()
        tile_changed = 0
        while True:
            block_changed = 0
            for z in range(z0, z1):
                for y in range(y0, y1):
                    for x in range(x0, x1):
                        p = (z * h + y) * w + x
                        li = ((z - bz) * lh + (y - by)) * lw + (x - bx)
                        s = locS[li]
                        ns, q = _tile_candidate(s, balanced, img, img[p], p, z, y, x,
                                                offs, d, h, w, locS, bz, by, bx, lh, lw)
                        locS2[li] = ns
                        if q >= 0:
                            L[p] = q
                            block_changed += 1
            # in-tile barrier: publish this round's states, band untouched
            for z in range(z0, z1):
                for y in range(y0, y1):
                    for x in range(x0, x1):
                        li = ((z - bz) * lh + (y - by)) * lw + (x - bx)
                        locS[li] = locS2[li]
            if block_changed == 0:
                break
            tile_changed += block_changed
        for z in range(z0, z1):
            for y in range(y0, y1):
                for x in range(x0, x1):
                    S2[(z * h + y) * w + x] = locS[((z - bz) * lh + (y - by)) * lw + (x - bx)]
        changed += tile_changed
    return changed


@njit(cache=True, parallel=True)
def _canonical_labels_kernel(img, offs, d, h, w, S, L):
    # Point each resolved plateau pixel at the largest-index equal neighbour
    # one step closer to the plateau boundary: the neighbour SYNC would pick.
    for p in prange(img.shape[0]):
        s = S[p]
        if s < 0:
            z, y, x = _decode(p, h, w)
            for k in range(offs.shape[0]):
                nb = _neighbor(p, k, z, y, x, offs, d, h, w)
                if nb >= 0 and img[nb] == img[p] and S[nb] == s + 1:
                    L[p] = nb


@njit(cache=True, parallel=True)
def _reduce_kernel(L, L2, rr):
    pending = 0
    for p in prange(L.shape[0]):
        lab = L[p]
        for _ in range(rr):
            nxt = L[lab]
            if nxt == lab:
                break
            lab = nxt
        L2[p] = lab
        if L[lab] != lab:
            pending += 1
    return pending


@njit(cache=True, parallel=True)
def _follow_kernel(L):
    for p in prange(L.shape[0]):
        while L[p] != L[L[p]]:
            L[p] = L[L[p]]


@njit(cache=True, parallel=True)
def _union_kernel(offs, d, h, w, S, L):
    for p in prange(S.shape[0]):
        if S[p] >= 2:
            z, y, x = _decode(p, h, w)
            for k in range(offs.shape[0]):
                nb = _neighbor(p, k, z, y, x, offs, d, h, w)
                if nb > p and S[nb] >= 2:
                    union(L, p, nb)


@njit(cache=True, parallel=True)
def _prw_merge_kernel(offs, d, h, w, S, L):
    # Labels only ever decrease (atomic min), so the fixed point is unique.
    changed = 0
    for p in prange(S.shape[0]):
        # numba only recognises the reduction outside the inner while loops
        local = 0
        if S[p] >= 2:
            z, y, x = _decode(p, h, w)
            for k in range(offs.shape[0]):
                nb = _neighbor(p, k, z, y, x, offs, d, h, w)
                if nb > p and S[nb] >= 2:
                    lp = L[p]
                    lq = L[nb]
                    while True:
                        a = L[lp]
                        b = L[lq]
                        if a == b:
                            break
                        m = min(a, b)
                        if atomic_min(L, lp, m) > m:
                            local += 1
                        if atomic_min(L, lq, m) > m:
                            local += 1
        while True:
            lab = L[p]
            up = L[lab]
            if lab == up:
                break
            if atomic_min(L, p, up) > up:
                local += 1
        changed += local
    return changed


# ------------------------------------------------------------ step drivers


def _geometry(grid: GridImage, conn: Connectivity):
    check_connectivity(grid.dims, conn)
    if grid.size > MAX_PIXELS:
        raise ConfigError(f"image of {grid.size} pixels exceeds {MAX_PIXELS}")
    return conn.offsets(), dims3(grid.dims)


def _run_sync(img, offs, dims, S, S2, L, trace=None):
    iterations = 0
    while True:
        iterations += 1
        changed = _sync_kernel(img, offs, *dims, S, S2, L)
        S, S2 = S2, S
        if trace is not None:
            trace.append(S.copy())
        if changed == 0:
            return S, S2, iterations


def _run_tiles(img, offs, dims, tiles, balanced, S, S2, L, trace=None):
    iterations = 0
    while True:
        iterations += 1
        changed = _tile_kernel(img, offs, *dims, *tiles, balanced, S, S2, L)
        S, S2 = S2, S
        if trace is not None:
            trace.append(S.copy())
        if changed == 0:
            break
    if balanced:
        _canonical_labels_kernel(img, offs, *dims, S, L)
    return S, S2, iterations


def _run_reduce(L, L2, rr):
    iterations = 0
    src, dst = L, L2
    while True:
        iterations += 1
        pending = _reduce_kernel(src, dst, rr)
        src, dst = dst, src
        if pending == 0:
            break
    if src is not L:
        L[:] = src
    return iterations


def _run_prw_merge(offs, dims, S, L):
    cap = L.shape[0]
    for iterations in range(1, cap + 2):
        if _prw_merge_kernel(offs, *dims, S, L) == 0:
            return iterations
    raise RuntimeError(f"PRW merge did not converge within {cap} iterations")


def _flat_copy(a, dtype=np.int32):
    return np.array(a, dtype=dtype, copy=True).reshape(-1)


def step1_initialize(img, conn: Connectivity):
    """Initial states and labels; returns flat (states, labels)."""
    grid = as_grid(img)
    offs, dims = _geometry(grid, conn)
    S = np.empty(grid.size, dtype=np.int32)
    L = np.empty(grid.size, dtype=np.int32)
    _init_kernel(grid.flat(), offs, *dims, S, L)
    return S, L


def step2_resolve_sync(img, states, labels, conn: Connectivity, trace=None):
    """Resolve non-minimal plateaux one ring per global iteration.

    Returns (states, labels, iterations); the count includes the final
    iteration that changes nothing.  ``trace``, if a list, receives a copy of
    the states after every global iteration.
    """
    grid = as_grid(img)
    offs, dims = _geometry(grid, conn)
    S, L = _flat_copy(states), _flat_copy(labels)
    S, _, iterations = _run_sync(grid.flat(), offs, dims, S, np.empty_like(S), L, trace)
    return S, L, iterations


def step2_resolve_tile_async(img, states, labels, conn: Connectivity, tile_dims, trace=None):
    grid = as_grid(img)
    offs, dims = _geometry(grid, conn)
    tiles = WatershedConfig(tile_dims=tuple(tile_dims)).resolve_tiles(grid.ndim)
    S, L = _flat_copy(states), _flat_copy(labels)
    S, _, iterations = _run_tiles(grid.flat(), offs, dims, tiles, False, S,
                                  np.empty_like(S), L, trace)
    return S, L, iterations


def step2_resolve_balanced(img, states, labels, conn: Connectivity, tile_dims, trace=None):
    """Tile-local plateau resolution with distance states.

    Resolved plateau pixels end with state ``-distance`` to the plateau's
    lower boundary, and labels matching :func:`step2_resolve_sync`.
    """
    grid = as_grid(img)
    offs, dims = _geometry(grid, conn)
    tiles = WatershedConfig(tile_dims=tuple(tile_dims)).resolve_tiles(grid.ndim)
    S, L = _flat_copy(states), _flat_copy(labels)
    S, _, iterations = _run_tiles(grid.flat(), offs, dims, tiles, True, S,
                                  np.empty_like(S), L, trace)
    return S, L, iterations


def step3_reduce_paths(labels, reduction_rate: int = 6):
    """Jump labels towards their roots, at most ``reduction_rate`` hops per pass.

    Each pass reads the previous pass's labels only, so pointer length grows
    by a factor of ``reduction_rate + 1`` per pass.  The loop stops after the
    first pass that leaves every label on a root, hence the pass count is
    ``max(1, ceil(log_{RR+1} Len))`` for a longest chain of ``Len`` links.
    """
    if reduction_rate < 1:
        raise ConfigError("reduction rate must be >= 1")
    L = _flat_copy(labels)
    iterations = _run_reduce(L, np.empty_like(L), reduction_rate)
    return L, iterations


def step3_reduce_paths_apruf(labels):
    L = _flat_copy(labels)
    _follow_kernel(L)
    return L


def step4_merge_pruf(states, labels, conn: Connectivity, dims):
    offs = conn.offsets()
    S, L = _flat_copy(states), _flat_copy(labels)
    _union_kernel(offs, *dims3(dims), S, L)
    flatten(L)
    return L


def step4_merge_prw(states, labels, conn: Connectivity, dims):
    offs = conn.offsets()
    S, L = _flat_copy(states), _flat_copy(labels)
    _run_prw_merge(offs, dims3(dims), S, L)
    return L


# ------------------------------------------------------------------ driver


def _ms(t0, t1):
    return round((t1 - t0) * 1e3, 3)


def run_steps(flat_img, offs, dims, tiles, cfg: WatershedConfig, S, S2, L):
    """Steps I-IV on caller-owned buffers.

    ``S``, ``S2`` and ``L`` are int32 arrays of the image size; on return
    ``L`` holds the partition and ``S`` the post-step-II states.  Returns
    (timings, iterations).
    """
    t0 = time.perf_counter()
    _init_kernel(flat_img, offs, *dims, S, L)
    t1 = time.perf_counter()
    if cfg.resolution is Resolution.SYNC:
        S_out, _, it2 = _run_sync(flat_img, offs, dims, S, S2, L)
    else:
        balanced = cfg.resolution is Resolution.BALANCED
        S_out, _, it2 = _run_tiles(flat_img, offs, dims, tiles, balanced, S, S2, L)
    if S_out is not S:
        S[:] = S_out
    t2 = time.perf_counter()
    if cfg.variant is Variant.APRUF:
        _follow_kernel(L)
        it3 = 1
    else:
        it3 = _run_reduce(L, S2, cfg.reduction_rate)
    t3 = time.perf_counter()
    if cfg.variant is Variant.PRW:
        it4 = _run_prw_merge(offs, dims, S, L)
    else:
        _union_kernel(offs, *dims, S, L)
        flatten(L)
        it4 = 1
    t4 = time.perf_counter()
    timings = {"I": _ms(t0, t1), "II": _ms(t1, t2), "III": _ms(t2, t3), "IV": _ms(t3, t4)}
    return timings, {"II": it2, "III": it3, "IV": it4}


def count_roots(L) -> int:
    return int(np.count_nonzero(L == np.arange(L.shape[0], dtype=L.dtype)))


def watershed(img, cfg: WatershedConfig | None = None) -> WatershedResult:
    """Partition ``img`` into catchment basins.

    Every pixel is labelled with the linear index of its basin's
    representative, the smallest index among the basin minimum's self-loop
    pixels.  ``labels`` has the image's shape.
    """
    cfg = cfg or WatershedConfig()
    grid = as_grid(img)
    if grid.data.dtype.type not in WATERSHED_DTYPES + (np.uint32,):
        raise ConfigError(f"unsupported element type {grid.data.dtype}")
    conn = cfg.resolve_connectivity(grid.ndim)
    offs, dims = _geometry(grid, conn)
    tiles = cfg.resolve_tiles(grid.ndim)
    n = grid.size
    S = np.empty(n, dtype=np.int32)
    S2 = np.empty(n, dtype=np.int32)
    L = np.empty(n, dtype=np.int32)
    with worker_count(cfg.workers):
        timings, iterations = run_steps(grid.flat(), offs, dims, tiles, cfg, S, S2, L)
    return WatershedResult(
        labels=L.reshape(grid.dims),
        region_count=count_roots(L),
        step_timings=timings,
        iterations=iterations,
        states=S.reshape(grid.dims),
    )


__all__ = [
    "Resolution",
    "Variant",
    "WatershedConfig",
    "WatershedResult",
    "run_steps",
    "step1_initialize",
    "step2_resolve_balanced",
    "step2_resolve_sync",
    "step2_resolve_tile_async",
    "step3_reduce_paths",
    "step3_reduce_paths_apruf",
    "step4_merge_prw",
    "step4_merge_pruf",
    "watershed",
]
