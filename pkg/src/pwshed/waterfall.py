"""Waterfall hierarchy by repeated image reconstruction and watershed.

After each watershed, every basin is flooded up to its lowest pass height
(step V finds the pass heights, step VI raises the image) and the watershed
is recomputed on the flooded image.

A flooded basin whose floor drains through two passes of equal height can be
split by the next watershed's plateau division, so the raw layers need not
nest.  By default each new layer is therefore read through the previous
one: a pixel takes the new label of its old basin's root.  The old root sits
on the basin's flooded floor, which lies inside a single new basin, so the
projected labels are still roots and the layers nest by construction.

All layers share one :class:`Workspace` holding the working image, labels,
states and the state buffer; the state buffer doubles as the per-root
pass-height store during reconstruction.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from ._parallel import atomic_min, worker_count
from .grid import ConfigError, Connectivity, _decode, _neighbor, as_grid, check_connectivity, dims3
from .watershed import MAX_PIXELS, WatershedConfig, count_roots, run_steps

SENTINEL = np.uint32(np.iinfo(np.uint32).max)


class HierarchyError(RuntimeError):
    """A waterfall layer failed to coarsen the previous one."""


@dataclass
class ReconstructionScratch:
    newmin: np.ndarray  # uint32, indexed by root pixel
    sentinel: int = int(SENTINEL)


@dataclass
class Hierarchy:
    layers: list[np.ndarray] = field(default_factory=list)
    region_counts: list[int] = field(default_factory=list)
    layer_timings: list[dict[str, float]] = field(default_factory=list)
    images: list[np.ndarray] | None = None

    def __len__(self):
        return len(self.layers)


class Workspace:
    """The four per-pixel arrays every layer works in.

    ``allocations`` counts per-pixel arrays created, so tests can check that
    building a hierarchy never goes beyond image, labels, states and buffer.
    """

    def __init__(self, grid):
        n = grid.size
        if n > MAX_PIXELS:
            raise ConfigError(f"image of {n} pixels exceeds {MAX_PIXELS}")
        self.allocations = 0
        self.image = self._alloc(n, np.uint32)
        self.image[:] = grid.flat()
        self.labels = self._alloc(n, np.int32)
        self.states = self._alloc(n, np.int32)
        self.buffer = self._alloc(n, np.int32)

    def _alloc(self, n, dtype):
        self.allocations += 1
        return np.empty(n, dtype=dtype)

    @property
    def newmin(self) -> np.ndarray:
        return self.buffer.view(np.uint32)


@njit(cache=True, parallel=True)
def _identify_kernel(img, offs, d, h, w, L, newmin):
    for p in prange(img.shape[0]):
        z, y, x = _decode(p, h, w)
        lp = L[p]
        for k in range(offs.shape[0]):
            nb = _neighbor(p, k, z, y, x, offs, d, h, w)
            if nb >= 0 and L[nb] != lp:
                atomic_min(newmin, lp, max(np.uint32(img[p]), np.uint32(img[nb])))


@njit(cache=True, parallel=True)
def _update_kernel(img, L, newmin, sentinel):
    for p in prange(img.shape[0]):
        m = newmin[L[p]]
        if m != sentinel and img[p] < m:
            img[p] = m


@njit(cache=True, parallel=True)
def _project_kernel(L, prev):
    # In place is safe: slots at previous-layer roots keep their value.
    for p in prange(L.shape[0]):
        L[p] = L[prev[p]]


def _check_working_range(flat):
    if flat.size and flat.max() >= SENTINEL:
        raise ConfigError("intensity equals the reconstruction sentinel 2**32 - 1")


def step5_identify_newmin(img, labels, conn: Connectivity | None = None) -> ReconstructionScratch:
    """Lowest pass height of every basin, stored at the basin's root index."""
    grid = as_grid(img)
    conn = conn or Connectivity.default_for(grid.ndim)
    check_connectivity(grid.dims, conn)
    flat = grid.flat()
    _check_working_range(flat)
    L = np.ascontiguousarray(labels, dtype=np.int32).reshape(-1)
    newmin = np.full(grid.size, SENTINEL, dtype=np.uint32)
    _identify_kernel(flat, conn.offsets(), *dims3(grid.dims), L, newmin)
    return ReconstructionScratch(newmin)


def step6_update_image(img, labels, scratch: ReconstructionScratch) -> np.ndarray:
    """Flood each basin to its pass height; returns a new uint32 image."""
    grid = as_grid(img)
    out = grid.flat().astype(np.uint32)
    L = np.ascontiguousarray(labels, dtype=np.int32).reshape(-1)
    _update_kernel(out, L, scratch.newmin, np.uint32(scratch.sentinel))
    return out.reshape(grid.dims)


def coarsening_violation(fine, coarse) -> int | None:
    """First pixel whose fine region is split by ``coarse``, or None.

    Fine labels are root pixel indices, so a fine region sits inside one
    coarse region iff every pixel agrees with its root in the coarse layer.
    """
    fine = np.asarray(fine).reshape(-1)
    coarse = np.asarray(coarse).reshape(-1)
    bad = np.flatnonzero(coarse != coarse[fine])
    return int(bad[0]) if bad.size else None


def build_hierarchy(img, cfg: WatershedConfig | None = None, nl: int = 1, *,
                    nested: bool = True, keep_images: bool = False,
                    check: bool = True) -> Hierarchy:
    """Watershed followed by ``nl - 1`` waterfall applications.

    The caller's image is never modified.  ``nested=False`` keeps every
    layer as the plain watershed of the flooded image.  With ``check`` (the
    default) every layer is verified to coarsen the previous one and a
    violation raises :class:`HierarchyError`.
    """
    if nl < 1:
        raise ConfigError(f"layer count must be >= 1, got {nl}")
    cfg = cfg or WatershedConfig()
    grid = as_grid(img)
    _check_working_range(grid.flat())
    conn = cfg.resolve_connectivity(grid.ndim)
    check_connectivity(grid.dims, conn)
    offs, dims = conn.offsets(), dims3(grid.dims)
    tiles = cfg.resolve_tiles(grid.ndim)
    ws = Workspace(grid)
    out = Hierarchy(images=[] if keep_images else None)

    with worker_count(cfg.workers):
        for n in range(nl):
            if keep_images:
                out.images.append(ws.image.reshape(grid.dims).copy())
            t0 = time.perf_counter()
            timings, _ = run_steps(ws.image, offs, dims, tiles, cfg, ws.states, ws.buffer, ws.labels)
            if nested and out.layers:
                _project_kernel(ws.labels, out.layers[-1].reshape(-1))
            t1 = time.perf_counter()
            if n < nl - 1:
                newmin = ws.newmin
                newmin.fill(SENTINEL)
                _identify_kernel(ws.image, offs, *dims, ws.labels, newmin)
                t2 = time.perf_counter()
                _update_kernel(ws.image, ws.labels, newmin, SENTINEL)
                t3 = time.perf_counter()
                timings["V"] = round((t2 - t1) * 1e3, 3)
                timings["VI"] = round((t3 - t2) * 1e3, 3)
            labels = ws.labels.reshape(grid.dims).copy()
            timings["total"] = round((time.perf_counter() - t0) * 1e3, 3)
            if check and out.layers:
                bad = coarsening_violation(out.layers[-1], labels)
                if bad is not None:
                    raise HierarchyError(
                        f"layer {n} splits a layer-{n - 1} region at pixel {bad}"
                    )
            out.layers.append(labels)
            out.region_counts.append(count_roots(ws.labels))
            out.layer_timings.append(timings)
    return out
