"""Pure-Python birth-death forward-simulation kernel.

Reference implementation of the hot loop; ``coalpp._kernels`` is the compiled
(Cython) version with the identical random-stream contract, so both backends
produce bit-identical output for the same BitGenerator state:

per event, exactly three uniforms are consumed in order (waiting time,
individual pick, birth-vs-death), and the final draw that overshoots the stop
time consumes one. Individuals are picked from a dense array with
swap-removal; the planar (CPP) order lives in a separate linked list whose
edges carry the divergence time of adjacent lineages, so survivor node
heights come out in O(1) per event.
"""

from __future__ import annotations

from math import inf, log

import numpy as np

BACKEND = "python"


def bd_forward(bit_generator, lam, mu, t, cap, record=False):
    """One forward run from a single founder, stopped at time t.

    Returns (heights, ids, n_events, truncated, events) where ``heights`` are
    the survivor node heights in planar order (length max(n_alive - 1, 0)),
    ``ids`` the survivor lineage ids, and ``events`` either None or a
    (kinds, times, lineages) tuple with kind +1 for birth and -1 for death.
    """
    gen = np.random.Generator(bit_generator)
    rate_per_cap = lam + mu
    p_birth = lam / rate_per_cap

    # slot-indexed state; gap[s] = divergence time between s and nxt[s]
    nxt = [-1]
    prv = [-1]
    gap = [0.0]
    ident = [0]
    free: list[int] = []
    alive = [0]  # dense array of slots for uniform picking
    pos = [0]  # slot -> index in `alive`
    head = 0
    next_id = 1
    now = 0.0
    n_events = 0
    truncated = False
    ev_kind: list[int] = []
    ev_time: list[float] = []
    ev_lineage: list[int] = []

    while alive:
        n = len(alive)
        u1 = gen.random()
        dt = inf if u1 <= 0.0 else -log(u1) / (n * rate_per_cap)
        if now + dt > t:
            break
        now += dt
        n_events += 1
        u2 = gen.random()
        k = int(u2 * n)
        slot = alive[k]
        u3 = gen.random()
        if u3 < p_birth:
            if n >= cap:
                truncated = True
                break
            if free:
                child = free.pop()
                nxt[child] = -1
            else:
                child = len(nxt)
                nxt.append(-1)
                prv.append(-1)
                gap.append(0.0)
                ident.append(0)
                pos.append(-1)
            ident[child] = next_id
            next_id += 1
            # planar insert: child immediately right of its parent
            r = nxt[slot]
            nxt[child] = r
            prv[child] = slot
            if r != -1:
                prv[r] = child
            nxt[slot] = child
            gap[child] = gap[slot]  # inherits the parent's old right gap
            gap[slot] = now
            pos[child] = len(alive)
            alive.append(child)
            if record:
                ev_kind.append(1)
                ev_time.append(now)
                ev_lineage.append(ident[child])
        else:
            left = prv[slot]
            right = nxt[slot]
            if left != -1:
                nxt[left] = right
            else:
                head = right
            if right != -1:
                prv[right] = left
            if left != -1 and right != -1:
                gap[left] = min(gap[left], gap[slot])
            last = alive.pop()
            if last != slot:
                alive[pos[slot]] = last
                pos[last] = pos[slot]
            free.append(slot)
            if record:
                ev_kind.append(-1)
                ev_time.append(now)
                ev_lineage.append(ident[slot])

    n_alive = len(alive)
    heights = np.empty(max(n_alive - 1, 0), dtype=np.float64)
    ids = np.empty(n_alive, dtype=np.int64)
    s = head
    i = 0
    while s != -1:
        ids[i] = ident[s]
        if nxt[s] != -1:
            heights[i] = t - gap[s]
        s = nxt[s]
        i += 1
    events = None
    if record:
        events = (
            np.asarray(ev_kind, dtype=np.int8),
            np.asarray(ev_time, dtype=np.float64),
            np.asarray(ev_lineage, dtype=np.int64),
        )
    return heights, ids, n_events, truncated, events


def bd_forward_batch(bit_generator, lam, mu, t, cap, n_reps):
    """Run n_reps independent replicates on one stream.

    Returns (heights_flat, offsets, survivor_counts, n_truncated); truncated
    replicates contribute no heights and count -1.
    """
    chunks = []
    offsets = np.zeros(n_reps + 1, dtype=np.int64)
    counts = np.zeros(n_reps, dtype=np.int64)
    n_truncated = 0
    for r in range(n_reps):
        heights, ids, _, truncated, _ = bd_forward(bit_generator, lam, mu, t, cap, False)
        if truncated:
            counts[r] = -1
            n_truncated += 1
            offsets[r + 1] = offsets[r]
        else:
            counts[r] = len(ids)
            chunks.append(heights)
            offsets[r + 1] = offsets[r] + len(heights)
    flat = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.float64)
    return flat, offsets, counts, n_truncated
