"""Deterministic data-parallel watershed and waterfall partitioning."""
import os

# numba fixes its thread pool size at import; reserve enough threads for the
# 1/2/8 worker configurations even on small machines.
try:
    _cpus = len(os.sched_getaffinity(0))
except AttributeError:
    _cpus = os.cpu_count() or 1
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, _cpus)))
if int(os.environ["NUMBA_NUM_THREADS"]) > _cpus:
    # More threads than cores: spinning idle threads would steal the core
    # from the ones still working, so let them sleep at barriers instead.
    os.environ.setdefault("OMP_WAIT_POLICY", "passive")
# Prefer OpenMP: probing an old TBB first only produces a warning.
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp tbb workqueue")

from .grid import Connectivity, ConfigError, GridImage, Scheme  # noqa: E402
from .watershed import (  # noqa: E402
    Resolution,
    Variant,
    WatershedConfig,
    WatershedResult,
    watershed,
)
from .waterfall import Hierarchy, build_hierarchy  # noqa: E402

__all__ = [
    "ConfigError",
    "Connectivity",
    "GridImage",
    "Hierarchy",
    "Resolution",
    "Scheme",
    "Variant",
    "WatershedConfig",
    "WatershedResult",
    "build_hierarchy",
    "watershed",
]
