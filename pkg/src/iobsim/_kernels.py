"""Per-epoch energy accrual kernels.

Two interchangeable implementations of ``advance``: a numba-compiled loop
and a vectorised numpy version. ``IOBSIM_NO_NUMBA=1`` forces the numpy path.

``advance`` moves every live node forward ``n_epochs`` epochs of length
``dt`` starting at time ``t0``, mutating the state arrays in place:

    alive[i]       node still has energy
    death_time[i]  seconds, nan while alive
    remaining[i]   joules left
    acc[i, :]      running sensed / compute / comm / harvested-applied joules
    bits[i, :]     running sensed / transmitted bits

Per epoch a node spends ``sense + compute + comm`` and then harvests up to
``harvest * dt``, never above its initial capacity. When the balance would
reach zero the node dies part way through the epoch, at the linearly
interpolated instant, and its ledger is cut at that instant.

Chunk-local sums are folded into ``acc`` once per call, which keeps long
runs from losing the small per-epoch terms against the large battery total.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

ACC_SENSE, ACC_COMPUTE, ACC_COMM, ACC_HARVEST = range(4)
BITS_SENSED, BITS_TX = range(2)


def numba_disabled() -> bool:
    return os.environ.get("IOBSIM_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


def advance_numpy(
    n_epochs, dt, t0, factors, trace,
    sense_static, sense_epb, compute_epb, comm_static, comm_epb, tx_ratio,
    raw_rate, harvest, capacity,
    alive, death_time, remaining, acc, bits,
):
    live = np.flatnonzero(alive)
    if n_epochs == 0 or live.size == 0:
        if trace.shape[0] > 0:
            trace[:n_epochs, :] = remaining[None, :]
        return

    k_idx = np.arange(n_epochs)
    if factors.shape[0] > 0:
        b = raw_rate[live] * factors[:n_epochs, live] * dt
    else:
        b = np.broadcast_to(raw_rate[live] * dt, (n_epochs, live.size))
    s = sense_static[live] * dt + sense_epb[live] * b
    c = compute_epb[live] * b
    m = comm_static[live] * dt + comm_epb[live] * tx_ratio[live] * b
    cons = s + c + m
    h = harvest[live] * dt

    cum_s = np.cumsum(s, axis=0)
    cum_c = np.cumsum(c, axis=0)
    cum_m = np.cumsum(m, axis=0)
    cum_b = np.cumsum(b, axis=0)
    cum_cons = np.cumsum(cons, axis=0)
    cum_h = h[None, :] * (k_idx[:, None] + 1.0)

    xs = remaining[live]
    net = cum_h - cum_cons
    # x_k = min(cap, x_{k-1} + h - cons_k) unrolled as a running minimum
    clip = np.minimum(0.0, np.minimum.accumulate(capacity[live] - xs - net, axis=0))
    x = xs + net + clip
    applied = cum_h + clip

    dead = x <= 0.0
    dies = dead.any(axis=0)
    last = n_epochs - 1
    k_death = np.where(dies, dead.argmax(axis=0), last)
    cols = np.arange(live.size)

    def upto(cum, per, frac):
        # cumulative value before epoch k plus frac of epoch k
        prev = np.where(k_death > 0, cum[np.maximum(k_death - 1, 0), cols], 0.0)
        return prev + frac * per[k_death, cols]

    x_prev = xs + np.where(
        k_death > 0, (net + clip)[np.maximum(k_death - 1, 0), cols], 0.0
    )
    drain = cons[k_death, cols] - h
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(dies, np.clip(x_prev / drain, 0.0, 1.0), 1.0)

    tot_s = upto(cum_s, s, frac)
    tot_c = upto(cum_c, c, frac)
    tot_m = upto(cum_m, m, frac)
    tot_b = upto(cum_b, b, frac)
    applied_prev = np.where(k_death > 0, applied[np.maximum(k_death - 1, 0), cols], 0.0)
    tot_h = np.where(dies, applied_prev + frac * h, applied[last])

    acc[live, 0] += tot_s
    acc[live, 1] += tot_c
    acc[live, 2] += tot_m
    acc[live, 3] += tot_h
    bits[live, 0] += tot_b
    bits[live, 1] += tot_b * tx_ratio[live]

    died = live[dies]
    death_time[died] = t0 + (k_death[dies] + frac[dies]) * dt
    alive[died] = False
    remaining[died] = 0.0
    surv = live[~dies]
    remaining[surv] = capacity[surv] - (acc[surv, 0] + acc[surv, 1] + acc[surv, 2]) + acc[surv, 3]

    if trace.shape[0] > 0:
        trace[:n_epochs, :] = remaining[None, :]
        xt = np.where(k_idx[:, None] >= k_death[None, :], 0.0, x)
        xt[:, ~dies] = x[:, ~dies]
        trace[:n_epochs, live] = xt


def _advance_loop(
    n_epochs, dt, t0, factors, trace,
    sense_static, sense_epb, compute_epb, comm_static, comm_epb, tx_ratio,
    raw_rate, harvest, capacity,
    alive, death_time, remaining, acc, bits,
):
    n = capacity.shape[0]
    jitter = factors.shape[0] > 0
    tracing = trace.shape[0] > 0
    for i in range(n):
        if not alive[i]:
            if tracing:
                for k in range(n_epochs):
                    trace[k, i] = remaining[i]
            continue
        xs = remaining[i]
        cap = capacity[i]
        h = harvest[i] * dt
        b0 = raw_rate[i] * dt
        s_fix = sense_static[i] * dt
        m_fix = comm_static[i] * dt
        se = sense_epb[i]
        ce = compute_epb[i]
        me = comm_epb[i] * tx_ratio[i]
        b = b0
        s = s_fix + se * b
        c = ce * b
        m = m_fix + me * b
        cons = s + c + m
        z = 0.0
        ls = 0.0
        lc = 0.0
        lm = 0.0
        lh = 0.0
        lb = 0.0
        died = False
        for k in range(n_epochs):
            if jitter:
                b = b0 * factors[k, i]
                s = s_fix + se * b
                c = ce * b
                m = m_fix + me * b
                cons = s + c + m
            xp = xs + z
            if xp - cons + h <= 0.0:
                frac = xp / (cons - h)
                if frac < 0.0:
                    frac = 0.0
                elif frac > 1.0:
                    frac = 1.0
                ls += frac * s
                lc += frac * c
                lm += frac * m
                lh += frac * h
                lb += frac * b
                death_time[i] = t0 + (k + frac) * dt
                died = True
                if tracing:
                    for kk in range(k, n_epochs):
                        trace[kk, i] = 0.0
                break
            ls += s
            lc += c
            lm += m
            lb += b
            if h > 0.0:
                # harvest tops the store up, never past its initial capacity
                a = cap - (xp - cons)
                if a > h:
                    a = h
                lh += a
                z += a - cons
            else:
                z -= cons
            if tracing:
                trace[k, i] = xs + z
        acc[i, 0] += ls
        acc[i, 1] += lc
        acc[i, 2] += lm
        acc[i, 3] += lh
        bits[i, 0] += lb
        bits[i, 1] += lb * tx_ratio[i]
        if died:
            alive[i] = False
            remaining[i] = 0.0
        else:
            remaining[i] = capacity[i] - (acc[i, 0] + acc[i, 1] + acc[i, 2]) + acc[i, 3]


if HAVE_NUMBA:
    advance_numba = njit(cache=True, nogil=True)(_advance_loop)
else:  # pragma: no cover
    advance_numba = None


def get_advance(backend: str | None = None):
    """Resolve ``backend`` ("numba", "numpy" or None for the default)."""
    if backend is None:
        backend = "numpy" if (numba_disabled() or not HAVE_NUMBA) else "numba"
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return advance_numba
    if backend == "numpy":
        return advance_numpy
    raise ValueError(f"unknown backend {backend!r}")


def default_backend() -> str:
    return "numpy" if (numba_disabled() or not HAVE_NUMBA) else "numba"
