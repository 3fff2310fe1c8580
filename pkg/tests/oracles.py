"""Independent reference implementations the suite checks the library against.

These deliberately use different algorithms from the code under test:
element-wise two-pointer merging instead of compare-swap networks, a heap
instead of a unit tree, and plain grid enumeration for the floorplanner.
"""

import heapq

import numpy as np

from hbmsort.analytics import FloorplanProblem
from hbmsort.mergenet import Record


def two_pointer_merge(a, b):
    """Stable element-wise merge of two sorted Record runs; ties take A."""
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i].key <= b[j].key:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return out


def kway_heap_merge(feeds):
    """Heap-based k-way merge of (n, 2) uint32 arrays, stable by feed order."""
    streams = []
    for f, feed in enumerate(feeds):
        arr = np.asarray(feed)
        if arr.ndim == 1:
            arr = np.stack([arr, np.zeros_like(arr)], axis=1)
        streams.append(
            [(int(k), f, i, int(v)) for i, (k, v) in enumerate(arr)]
        )
    merged = list(heapq.merge(*streams))
    out = np.empty((len(merged), 2), dtype=np.uint32)
    for i, (k, _f, _p, v) in enumerate(merged):
        out[i, 0] = k
        out[i, 1] = v
    return out


def records_to_array(records):
    out = np.empty((len(records), 2), dtype=np.uint32)
    for i, r in enumerate(records):
        out[i, 0] = r.key
        out[i, 1] = r.value
    return out


def random_sorted_records(rng, n, key_range=None):
    hi = key_range if key_range is not None else 1 << 32
    keys = np.sort(rng.integers(0, hi, size=n, dtype=np.int64))
    return [Record(int(k), int(rng.integers(0, 1 << 32))) for k in keys]


def brute_force_floorplan(prob: FloorplanProblem):
    """Full-grid enumeration of the placement problem, max (sum, u1)."""
    best = (0, 0)
    best_key = (0, 0)
    for u1 in range(prob.die1_available // prob.tree_resources + 1):
        for u2 in range(prob.die2_available // prob.tree_resources + 1):
            if (u1 + u2) * prob.axi_width > prob.crossing_budget:
                continue
            if (u1 + u2, u1) > best_key:
                best_key = (u1 + u2, u1)
                best = (u1, u2)
    return best
