"""Image grid, row-major ordering and neighbourhoods.

Every kernel in the package works on flat arrays and views the grid as a
(depth, height, width) volume; 1D and 2D images are padded with leading
axes of extent 1.  Neighbour offsets are stored as an (k, 3) table sorted
lexicographically, which makes in-grid neighbours come out in ascending
linear-index order.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np
from numba import njit

WATERSHED_DTYPES = (np.uint8, np.uint16)
IMAGE_DTYPES = (np.uint8, np.uint16, np.uint32)


class ConfigError(ValueError):
    """Invalid configuration (bad connectivity, dimension mismatch, ...)."""


class Scheme(enum.Enum):
    VON_NEUMANN = "von_neumann"
    MOORE = "moore"


@dataclass(frozen=True)
class Connectivity:
    scheme: Scheme
    dimension: int

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ConfigError(f"dimension must be 1, 2 or 3, got {self.dimension}")

    @classmethod
    def from_count(cls, count: int) -> "Connectivity":
        """Build from the usual neighbour count: 4/8 (2D) or 6/26 (3D)."""
        table = {
            4: (Scheme.VON_NEUMANN, 2),
            8: (Scheme.MOORE, 2),
            6: (Scheme.VON_NEUMANN, 3),
            26: (Scheme.MOORE, 3),
        }
        if count not in table:
            raise ConfigError(f"unsupported connectivity {count}; use 4, 8, 6 or 26")
        return cls(*table[count])

    @classmethod
    def default_for(cls, ndim: int) -> "Connectivity":
        return cls(Scheme.VON_NEUMANN, ndim)

    @property
    def size(self) -> int:
        """Neighbour count at an interior pixel."""
        if self.scheme is Scheme.VON_NEUMANN:
            return 2 * self.dimension
        return 3**self.dimension - 1

    def offsets(self) -> np.ndarray:
        """(k, 3) int64 table of (dz, dy, dx) steps, lexicographically sorted."""
        steps = []
        for delta in itertools.product((-1, 0, 1), repeat=self.dimension):
            if not any(delta):
                continue
            if self.scheme is Scheme.VON_NEUMANN and sum(map(abs, delta)) != 1:
                continue
            steps.append((0,) * (3 - self.dimension) + delta)
        return np.array(sorted(steps), dtype=np.int64)


@dataclass(frozen=True)
class GridImage:
    """Scalar unsigned-integer image of 1 to 3 axes, row-major."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data)
        if data.ndim not in (1, 2, 3):
            raise ConfigError(f"images must have 1-3 axes, got {data.ndim}")
        if data.dtype.type not in IMAGE_DTYPES:
            raise ConfigError(f"unsupported element type {data.dtype}")
        if data.size == 0:
            raise ConfigError("empty image")
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def width(self) -> int:
        """Element width in bits."""
        return self.data.dtype.itemsize * 8

    @property
    def size(self) -> int:
        return self.data.size

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


def as_grid(img) -> GridImage:
    return img if isinstance(img, GridImage) else GridImage(np.asarray(img))


def dims3(dims) -> tuple[int, int, int]:
    """Pad dims with leading 1s to (depth, height, width)."""
    dims = tuple(int(d) for d in dims)
    return (1,) * (3 - len(dims)) + dims


def linear_index(coords, dims) -> int:
    if len(coords) != len(dims):
        raise ValueError(f"{len(coords)} coordinates for a {len(dims)}-axis grid")
    index = 0
    for c, d in zip(coords, dims):
        if not 0 <= c < d:
            raise ValueError(f"coordinate {c} outside extent {d}")
        index = index * d + c
    return index


def unravel(p: int, dims) -> tuple[int, ...]:
    coords = []
    for d in reversed(dims):
        coords.append(p % d)
        p //= d
    return tuple(reversed(coords))


def check_connectivity(dims, conn: Connectivity) -> None:
    """Reject a connectivity that cannot belong to an image of these dims."""
    # A depth-1 volume, not a 2D image, is the way to run 3D connectivity on
    # planar data.
    if conn.dimension != len(dims):
        raise ConfigError(
            f"{conn.size}-connectivity is {conn.dimension}D but the image has "
            f"{len(dims)} axes"
        )


def neighbors(p: int, conn: Connectivity, dims) -> list[int]:
    """In-grid neighbours of p in ascending linear-index order."""
    total = int(np.prod(dims))
    if not 0 <= p < total:
        raise ValueError(f"pixel {p} outside grid of {total} pixels")
    d, h, w = dims3(dims)
    z, y, x = p // (h * w), (p // w) % h, p % w
    out = []
    for dz, dy, dx in conn.offsets():
        nz, ny, nx = z + dz, y + dy, x + dx
        if 0 <= nz < d and 0 <= ny < h and 0 <= nx < w:
            out.append(int((nz * h + ny) * w + nx))
    return out


def steepest_neighbor(p: int, img, conn: Connectivity) -> int:
    """Lowest neighbour of p; ties go to the largest linear index."""
    img = as_grid(img)
    flat = img.flat()
    nbrs = neighbors(p, conn, img.dims)
    if not nbrs:
        raise ValueError("single-pixel image has no neighbours")
    best = nbrs[0]
    for q in nbrs[1:]:
        if flat[q] <= flat[best]:
            best = q
    return best


@njit(cache=True, inline="always")
def _decode(p, h, w):
    return p // (h * w), (p // w) % h, p % w


@njit(cache=True, inline="always")
def _neighbor(p, k, z, y, x, offs, d, h, w):
    """Linear index of the k-th offset from p, or -1 when clipped."""
    nz = z + offs[k, 0]
    ny = y + offs[k, 1]
    nx = x + offs[k, 2]
    if nz < 0 or nz >= d or ny < 0 or ny >= h or nx < 0 or nx >= w:
        return -1
    return p + (offs[k, 0] * h + offs[k, 1]) * w + offs[k, 2]
