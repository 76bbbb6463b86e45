# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled birth-death forward-simulation kernel.

Mirrors coalpp._kernels_py exactly: same random-stream consumption (three
uniforms per event, one for the overshooting final draw), same dense-array
individual picking with swap-removal, same linked-list planar order carrying
adjacent-lineage divergence times. Output is bit-identical to the Python
backend for the same BitGenerator state.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport log
from libc.stdint cimport int64_t

import numpy as np

cimport numpy as cnp
from numpy.random cimport bitgen_t

cnp.import_array()

BACKEND = "compiled"

cdef const char *CAPSULE_NAME = "BitGenerator"


cdef inline bitgen_t *_bitgen(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, CAPSULE_NAME):
        raise ValueError("expected a numpy BitGenerator")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, CAPSULE_NAME)


cdef class _Workspace:
    """Reusable slot arrays; grown geometrically and shared across replicates.

    gap[s] is the divergence time between slot s and nxt[s] in planar order.
    """

    cdef cnp.ndarray nxt_a, prv_a, gap_a, ident_a, free_a, alive_a, pos_a
    cdef int64_t *nxt
    cdef int64_t *prv
    cdef double *gap
    cdef int64_t *ident
    cdef int64_t *free_slots
    cdef int64_t *alive
    cdef int64_t *pos
    cdef int64_t capacity
    cdef int64_t head

    def __cinit__(self):
        self.capacity = 256
        self.nxt_a = np.empty(self.capacity, dtype=np.int64)
        self.prv_a = np.empty(self.capacity, dtype=np.int64)
        self.gap_a = np.empty(self.capacity, dtype=np.float64)
        self.ident_a = np.empty(self.capacity, dtype=np.int64)
        self.free_a = np.empty(self.capacity, dtype=np.int64)
        self.alive_a = np.empty(self.capacity, dtype=np.int64)
        self.pos_a = np.empty(self.capacity, dtype=np.int64)
        self._rebind()

    cdef _rebind(self):
        self.nxt = <int64_t *> cnp.PyArray_DATA(self.nxt_a)
        self.prv = <int64_t *> cnp.PyArray_DATA(self.prv_a)
        self.gap = <double *> cnp.PyArray_DATA(self.gap_a)
        self.ident = <int64_t *> cnp.PyArray_DATA(self.ident_a)
        self.free_slots = <int64_t *> cnp.PyArray_DATA(self.free_a)
        self.alive = <int64_t *> cnp.PyArray_DATA(self.alive_a)
        self.pos = <int64_t *> cnp.PyArray_DATA(self.pos_a)

    cdef grow(self):
        cdef int64_t old = self.capacity
        self.capacity = old * 2
        self.nxt_a = np.concatenate([self.nxt_a, np.empty(old, dtype=np.int64)])
        self.prv_a = np.concatenate([self.prv_a, np.empty(old, dtype=np.int64)])
        self.gap_a = np.concatenate([self.gap_a, np.empty(old, dtype=np.float64)])
        self.ident_a = np.concatenate([self.ident_a, np.empty(old, dtype=np.int64)])
        self.free_a = np.concatenate([self.free_a, np.empty(old, dtype=np.int64)])
        self.alive_a = np.concatenate([self.alive_a, np.empty(old, dtype=np.int64)])
        self.pos_a = np.concatenate([self.pos_a, np.empty(old, dtype=np.int64)])
        self._rebind()


cdef int64_t _run_one(
    _Workspace ws,
    bitgen_t *rng,
    double lam,
    double mu,
    double t,
    int64_t cap,
    bint record,
    list ev_kind,
    list ev_time,
    list ev_lineage,
    int64_t *out_events,
) except? -1:
    """Run one replicate; returns survivor count, or -2 if the cap was hit."""
    cdef double rate_per_cap = lam + mu
    cdef double p_birth = lam / rate_per_cap
    cdef double now = 0.0, u1, u2, u3, dt
    cdef int64_t n, k, slot, child, left, right, last
    cdef int64_t n_events = 0
    cdef int64_t n_alive = 1
    cdef int64_t n_free = 0
    cdef int64_t n_used = 1
    cdef bint truncated = False

    ws.nxt[0] = -1
    ws.prv[0] = -1
    ws.gap[0] = 0.0
    ws.ident[0] = 0
    ws.alive[0] = 0
    ws.pos[0] = 0
    ws.head = 0
    cdef int64_t next_id = 1

    while n_alive > 0:
        n = n_alive
        u1 = rng.next_double(rng.state)
        dt = -log(u1) / (n * rate_per_cap)
        if now + dt > t:
            break
        now += dt
        n_events += 1
        u2 = rng.next_double(rng.state)
        k = <int64_t> (u2 * n)
        slot = ws.alive[k]
        u3 = rng.next_double(rng.state)
        if u3 < p_birth:
            if n >= cap:
                truncated = True
                break
            if n_free > 0:
                n_free -= 1
                child = ws.free_slots[n_free]
            else:
                if n_used >= ws.capacity:
                    ws.grow()
                child = n_used
                n_used += 1
            ws.ident[child] = next_id
            next_id += 1
            right = ws.nxt[slot]
            ws.nxt[child] = right
            ws.prv[child] = slot
            if right != -1:
                ws.prv[right] = child
            ws.nxt[slot] = child
            ws.gap[child] = ws.gap[slot]
            ws.gap[slot] = now
            ws.pos[child] = n_alive
            ws.alive[n_alive] = child
            n_alive += 1
            if record:
                ev_kind.append(1)
                ev_time.append(now)
                ev_lineage.append(ws.ident[child])
        else:
            left = ws.prv[slot]
            right = ws.nxt[slot]
            if left != -1:
                ws.nxt[left] = right
            else:
                ws.head = right
            if right != -1:
                ws.prv[right] = left
            if left != -1 and right != -1:
                if ws.gap[slot] < ws.gap[left]:
                    ws.gap[left] = ws.gap[slot]
            n_alive -= 1
            last = ws.alive[n_alive]
            if last != slot:
                ws.alive[ws.pos[slot]] = last
                ws.pos[last] = ws.pos[slot]
            ws.free_slots[n_free] = slot
            n_free += 1
            if record:
                ev_kind.append(-1)
                ev_time.append(now)
                ev_lineage.append(ws.ident[slot])

    out_events[0] = n_events
    if truncated:
        return -2
    return n_alive


cdef _collect(_Workspace ws, double t):
    cdef int64_t s = ws.head
    cdef int64_t count = 0
    while s != -1:
        count += 1
        s = ws.nxt[s]
    heights = np.empty(count - 1 if count > 0 else 0, dtype=np.float64)
    ids = np.empty(count, dtype=np.int64)
    cdef double[::1] hv = heights
    cdef int64_t[::1] iv = ids
    s = ws.head
    cdef int64_t i = 0
    while s != -1:
        iv[i] = ws.ident[s]
        if ws.nxt[s] != -1:
            hv[i] = t - ws.gap[s]
        s = ws.nxt[s]
        i += 1
    return heights, ids


def bd_forward(object bit_generator, double lam, double mu, double t, long cap, bint record=False):
    """Single replicate; see coalpp._kernels_py.bd_forward for the contract."""
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef _Workspace ws = _Workspace()
    cdef list ev_kind = []
    cdef list ev_time = []
    cdef list ev_lineage = []
    cdef int64_t n_events = 0
    cdef int64_t result = _run_one(ws, rng, lam, mu, t, cap, record,
                                   ev_kind, ev_time, ev_lineage, &n_events)
    heights, ids = _collect(ws, t)
    events = None
    if record:
        events = (
            np.asarray(ev_kind, dtype=np.int8),
            np.asarray(ev_time, dtype=np.float64),
            np.asarray(ev_lineage, dtype=np.int64),
        )
    return heights, ids, int(n_events), bool(result == -2), events


def bd_forward_batch(object bit_generator, double lam, double mu, double t, long cap, long n_reps):
    """Batched replicates; see coalpp._kernels_py.bd_forward_batch."""
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef _Workspace ws = _Workspace()
    offsets = np.zeros(n_reps + 1, dtype=np.int64)
    counts = np.zeros(n_reps, dtype=np.int64)
    cdef int64_t[::1] off = offsets
    cdef int64_t[::1] cnt = counts
    cdef list chunks = []
    cdef int64_t n_truncated = 0
    cdef int64_t n_events = 0
    cdef long r
    cdef int64_t result
    cdef list empty = []
    for r in range(n_reps):
        result = _run_one(ws, rng, lam, mu, t, cap, False, empty, empty, empty, &n_events)
        if result == -2:
            cnt[r] = -1
            n_truncated += 1
            off[r + 1] = off[r]
        else:
            cnt[r] = result
            heights, _ = _collect(ws, t)
            chunks.append(heights)
            off[r + 1] = off[r] + heights.shape[0]
    flat = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.float64)
    return flat, offsets, counts, int(n_truncated)
