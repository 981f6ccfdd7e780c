"""Pure-Python implementations of the hot kernels.

Same signatures and bit-identical results as the compiled ``_ckernels``
module; used when the extension is not built or when
``TRACKGNN_PURE_PYTHON=1`` is set.
"""
import numpy as np

from .fxp import FRAC_BITS, RAW_MAX, RAW_MIN

_HALF = 1 << (FRAC_BITS - 1)
_MASK = (1 << FRAC_BITS) - 1

SOURCE = -1
STREAM, LOAD, DELAY = 0, 1, 2
OK, DEADLOCK, TIMEOUT = 0, 1, 2


def scatter_add_sat(values, index, n):
    """Saturating scatter-add of rows of ``values`` into ``n`` rows, in row order."""
    values = np.asarray(values, dtype=np.int64)
    index = np.asarray(index, dtype=np.int64)
    m, d = values.shape
    out = np.zeros((n, d), dtype=np.int64)
    if m == 0:
        return out
    # process edges rank by rank within their receiver: rank-r edges hit
    # distinct rows, so each round is a plain vectorised saturating add
    order = np.argsort(index, kind="stable")
    sorted_idx = index[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    group_start = np.repeat(starts, np.diff(np.r_[starts, m]))
    rank = np.arange(m) - group_start
    for r in range(int(rank.max()) + 1):
        sel = order[rank == r]
        rows = index[sel]
        out[rows] = np.clip(out[rows] + values[sel], RAW_MIN, RAW_MAX)
    return out


def dense_sat(x, w, b):
    """Fixed-point ``x @ w + b``: rounded products summed in input order, then bias."""
    x = np.asarray(x, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    acc = np.zeros((x.shape[0], w.shape[1]), dtype=np.int64)
    for k in range(w.shape[0]):
        p = x[:, k:k + 1] * w[k:k + 1, :]
        q = p >> FRAC_BITS
        r = p & _MASK
        q += (r > _HALF) | ((r == _HALF) & ((q & 1) == 1))
        np.clip(q, RAW_MIN, RAW_MAX, out=q)
        acc += q
        np.clip(acc, RAW_MIN, RAW_MAX, out=acc)
    acc += b[None, :]
    np.clip(acc, RAW_MIN, RAW_MAX, out=acc)
    return acc


def run_dataflow(chan_cap, unit_phase_start, ph_kind, ph_count, ph_width, ph_ii,
                 ph_depth, ph_drain, ph_in_start, in_chan, in_count, ph_out_start,
                 out_chan, n_graphs, max_cycles, watchdog):
    """Cycle-stepped simulation of units exchanging tokens through bounded FIFOs.

    Returns ``(status, cycles, finish, busy, stall, peak, pushed, popped,
    dl_cycle, dl_chan, dl_units)``; see ``dfsim`` for the meaning.
    """
    chan_cap = [int(c) for c in chan_cap]
    ups = [int(v) for v in unit_phase_start]
    kind = [int(v) for v in ph_kind]
    count = [int(v) for v in ph_count]
    width = [int(v) for v in ph_width]
    ii = [int(v) for v in ph_ii]
    depth = [int(v) for v in ph_depth]
    drain = [int(v) for v in ph_drain]
    ins = [int(v) for v in ph_in_start]
    inc = [int(v) for v in in_chan]
    incnt = [int(v) for v in in_count]
    outs = [int(v) for v in ph_out_start]
    outc = [int(v) for v in out_chan]
    n_units = len(ups) - 1
    n_chan = len(chan_cap)

    occ = [0] * n_chan
    peak = [0] * n_chan
    pushed = [0] * n_chan
    popped = [0] * n_chan
    finish = [[-1] * n_graphs for _ in range(n_units)]
    busy = [0] * n_units
    stall = [0] * n_units

    graph = [0] * n_units
    phase = [ups[u] for u in range(n_units)]
    started = [False] * n_units
    issued = [0] * n_units
    empty_pending = [False] * n_units
    delay_until = [0] * n_units
    next_issue = [0] * n_units
    rem = [0] * len(inc)
    # in-flight batches: [ready, k, phase, graph-finished-flag]
    inflight = [[] for _ in range(n_units)]

    units_left = n_units
    for u in range(n_units):
        if ups[u] == ups[u + 1]:
            graph[u] = n_graphs
            units_left -= 1

    last_progress = 0
    t = 0
    status = OK
    while units_left > 0:
        if t >= max_cycles:
            status = TIMEOUT
            break
        progress = False
        stalled = [False] * n_units
        # retire: push finished batches downstream, in order
        for u in range(n_units):
            q = inflight[u]
            while q and q[0][0] <= t:
                ready, k, ph, flag = q[0]
                ok = True
                for j in range(outs[ph], outs[ph + 1]):
                    c = outc[j]
                    if occ[c] + k > chan_cap[c]:
                        ok = False
                        break
                if not ok:
                    stalled[u] = True
                    break
                for j in range(outs[ph], outs[ph + 1]):
                    c = outc[j]
                    occ[c] += k
                    pushed[c] += k
                    if occ[c] > peak[c]:
                        peak[c] = occ[c]
                q.pop(0)
                progress = True
                if flag >= 0:
                    finish[u][flag] = t
                    if flag == n_graphs - 1:
                        units_left -= 1
            if stalled[u]:
                stall[u] += 1
                for b in q:
                    b[0] += 1
        # issue: at most one batch per unit per cycle
        for u in range(n_units):
            if stalled[u]:
                continue
            while graph[u] < n_graphs:
                ph = phase[u]
                kd = kind[ph]
                if not started[u]:
                    started[u] = True
                    issued[u] = 0
                    if kd == DELAY:
                        delay_until[u] = t + count[ph]
                    elif kd == LOAD:
                        total = 0
                        for j in range(ins[ph], ins[ph + 1]):
                            rem[j] = incnt[j]
                            total += incnt[j]
                        empty_pending[u] = total == 0
                    else:
                        empty_pending[u] = count[ph] == 0
                if kd == DELAY:
                    if t < delay_until[u]:
                        break
                    done = True
                elif kd == LOAD:
                    done = not empty_pending[u] and all(
                        rem[j] == 0 for j in range(ins[ph], ins[ph + 1]))
                else:
                    done = not empty_pending[u] and issued[u] == count[ph]
                if done:
                    if kd != DELAY and drain[ph] and inflight[u]:
                        break
                    progress = True
                    started[u] = False
                    if ph + 1 == ups[u + 1]:
                        phase[u] = ups[u]
                        graph[u] += 1
                    else:
                        phase[u] = ph + 1
                    continue
                if t < next_issue[u]:
                    break
                if kd == LOAD:
                    k = 0
                    for j in range(ins[ph], ins[ph + 1]):
                        c = inc[j]
                        take = min(width[ph], rem[j])
                        if c != SOURCE:
                            take = min(take, occ[c])
                            occ[c] -= take
                            popped[c] += take
                        rem[j] -= take
                        k += take
                    last = all(rem[j] == 0 for j in range(ins[ph], ins[ph + 1]))
                else:
                    k = min(width[ph], count[ph] - issued[u])
                    for j in range(ins[ph], ins[ph + 1]):
                        c = inc[j]
                        if c != SOURCE:
                            k = min(k, occ[c])
                    for j in range(ins[ph], ins[ph + 1]):
                        c = inc[j]
                        if c != SOURCE:
                            occ[c] -= k
                            popped[c] += k
                    issued[u] += k
                    last = issued[u] == count[ph]
                if k == 0 and not empty_pending[u]:
                    break
                empty_pending[u] = False
                flag = graph[u] if (last and ph + 1 == ups[u + 1]) else -1
                inflight[u].append([t + ii[ph] + depth[ph], k, ph, flag])
                next_issue[u] = t + ii[ph]
                busy[u] += 1
                progress = True
                break
        if progress:
            last_progress = t
        elif t - last_progress > watchdog:
            status = DEADLOCK
            break
        t += 1

    dl_cycle, dl_chan, dl_units = -1, -1, []
    if status == DEADLOCK:
        dl_cycle = last_progress + 1
        for u in range(n_units):
            q = inflight[u]
            if q:
                ph = q[0][2]
                for j in range(outs[ph], outs[ph + 1]):
                    c = outc[j]
                    if occ[c] + q[0][1] > chan_cap[c]:
                        dl_units.append(u)
                        if dl_chan < 0:
                            dl_chan = c
                        break
    return (status, t, np.array(finish, dtype=np.int64).reshape(n_units, n_graphs),
            np.array(busy, np.int64), np.array(stall, np.int64), np.array(peak, np.int64),
            np.array(pushed, np.int64), np.array(popped, np.int64),
            dl_cycle, dl_chan, dl_units)
