"""Worker-count control and CPU atomics for the numba kernels.

numba exposes atomics only on CUDA, so compare-and-swap and atomic minimum
are emitted directly as LLVM ``cmpxchg`` / ``atomicrmw`` instructions.
"""
from __future__ import annotations

import logging
from contextlib import contextmanager

import numba
from numba import types
from numba.core import cgutils
from numba.extending import intrinsic

log = logging.getLogger(__name__)


def max_workers() -> int:
    return numba.config.NUMBA_NUM_THREADS


@contextmanager
def worker_count(n: int | None):
    """Run the enclosed kernels on ``n`` threads (None keeps the current count)."""
    if n is None:
        yield numba.get_num_threads()
        return
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    limit = max_workers()
    if n > limit:
        log.warning("requested %d workers, numba was started with %d", n, limit)
        n = limit
    previous = numba.get_num_threads()
    numba.set_num_threads(n)
    try:
        yield n
    finally:
        numba.set_num_threads(previous)


def _element_pointer(context, builder, aryty, aryv, idxv):
    ary = context.make_array(aryty)(context, builder, aryv)
    return cgutils.get_item_pointer(context, builder, aryty, ary, [idxv])


@intrinsic
def atomic_cas(typingctx, arr, idx, expected, new):
    """arr[idx] = new if arr[idx] == expected; returns the previous value."""
    sig = arr.dtype(arr, types.intp, arr.dtype, arr.dtype)

    def codegen(context, builder, signature, args):
        aryv, idxv, expv, newv = args
        ptr = _element_pointer(context, builder, signature.args[0], aryv, idxv)
        pair = builder.cmpxchg(ptr, expv, newv, "seq_cst", "seq_cst")
        return builder.extract_value(pair, 0)

    return sig, codegen


@intrinsic
def atomic_min(typingctx, arr, idx, val):
    """arr[idx] = min(arr[idx], val); returns the previous value."""
    sig = arr.dtype(arr, types.intp, arr.dtype)
    op = "min" if arr.dtype.signed else "umin"

    def codegen(context, builder, signature, args):
        aryv, idxv, v = args
        ptr = _element_pointer(context, builder, signature.args[0], aryv, idxv)
        return builder.atomic_rmw(op, ptr, v, "seq_cst")

    return sig, codegen
