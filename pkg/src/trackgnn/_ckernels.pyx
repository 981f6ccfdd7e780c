# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; mirrors ``_pykernels`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()

DEF FRAC_BITS = 7
DEF HALF = 64
DEF MASK = 127
DEF RAW_MIN = -8192
DEF RAW_MAX = 8191

cdef enum:
    K_STREAM = 0
    K_LOAD = 1
    K_DELAY = 2
    S_OK = 0
    S_DEADLOCK = 1
    S_TIMEOUT = 2

SOURCE = -1
STREAM, LOAD, DELAY = K_STREAM, K_LOAD, K_DELAY
OK, DEADLOCK, TIMEOUT = S_OK, S_DEADLOCK, S_TIMEOUT


cdef inline int64_t _sat(int64_t v) nogil:
    return RAW_MIN if v < RAW_MIN else (RAW_MAX if v > RAW_MAX else v)


cdef inline int64_t _mul(int64_t a, int64_t b) nogil:
    cdef int64_t p = a * b
    cdef int64_t q = p >> FRAC_BITS
    cdef int64_t r = p & MASK
    # branch-free round half to even
    q += (r > HALF) | ((r == HALF) & (q & 1))
    return _sat(q)


def scatter_add_sat(values, index, Py_ssize_t n):
    cdef const int64_t[:, ::1] v = np.ascontiguousarray(values, dtype=np.int64)
    cdef const int64_t[::1] idx = np.ascontiguousarray(index, dtype=np.int64)
    cdef Py_ssize_t m = v.shape[0], d = v.shape[1], e, j, row
    out = np.zeros((n, d), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    with nogil:
        for e in range(m):
            row = idx[e]
            for j in range(d):
                o[row, j] = _sat(o[row, j] + v[e, j])
    return out


def dense_sat(x, w, b):
    cdef const int64_t[:, ::1] xv = np.ascontiguousarray(x, dtype=np.int64)
    cdef const int64_t[:, ::1] wv = np.ascontiguousarray(w, dtype=np.int64)
    cdef const int64_t[::1] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = xv.shape[0], kin = wv.shape[0], kout = wv.shape[1], i, j, k
    cdef int64_t acc
    out = np.empty((n, kout), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(kout):
                acc = 0
                for k in range(kin):
                    acc = _sat(acc + _mul(xv[i, k], wv[k, j]))
                o[i, j] = _sat(acc + bv[j])
    return out


def run_dataflow(chan_cap, unit_phase_start, ph_kind, ph_count, ph_width, ph_ii,
                 ph_depth, ph_drain, ph_in_start, in_chan, in_count, ph_out_start,
                 out_chan, int64_t n_graphs, int64_t max_cycles, int64_t watchdog):
    cdef const int64_t[::1] cap = np.ascontiguousarray(chan_cap, dtype=np.int64)
    cdef const int64_t[::1] ups = np.ascontiguousarray(unit_phase_start, dtype=np.int64)
    cdef const int64_t[::1] kind = np.ascontiguousarray(ph_kind, dtype=np.int64)
    cdef const int64_t[::1] count = np.ascontiguousarray(ph_count, dtype=np.int64)
    cdef const int64_t[::1] width = np.ascontiguousarray(ph_width, dtype=np.int64)
    cdef const int64_t[::1] ii = np.ascontiguousarray(ph_ii, dtype=np.int64)
    cdef const int64_t[::1] depth = np.ascontiguousarray(ph_depth, dtype=np.int64)
    cdef const int64_t[::1] drain = np.ascontiguousarray(ph_drain, dtype=np.int64)
    cdef const int64_t[::1] ins = np.ascontiguousarray(ph_in_start, dtype=np.int64)
    cdef const int64_t[::1] inc = np.ascontiguousarray(in_chan, dtype=np.int64)
    cdef const int64_t[::1] incnt = np.ascontiguousarray(in_count, dtype=np.int64)
    cdef const int64_t[::1] outs = np.ascontiguousarray(ph_out_start, dtype=np.int64)
    cdef const int64_t[::1] outc = np.ascontiguousarray(out_chan, dtype=np.int64)
    cdef Py_ssize_t n_units = ups.shape[0] - 1
    cdef Py_ssize_t n_chan = cap.shape[0]
    cdef Py_ssize_t n_ph = kind.shape[0]

    cdef int64_t max_lat = 4, p
    for p in range(n_ph):
        if ii[p] + depth[p] + 4 > max_lat:
            max_lat = ii[p] + depth[p] + 4
    cdef Py_ssize_t ring = max_lat + 1

    occ_a = np.zeros(n_chan, np.int64)
    peak_a = np.zeros(n_chan, np.int64)
    pushed_a = np.zeros(n_chan, np.int64)
    popped_a = np.zeros(n_chan, np.int64)
    finish_a = np.full((n_units, n_graphs), -1, np.int64)
    busy_a = np.zeros(n_units, np.int64)
    stall_a = np.zeros(n_units, np.int64)
    cdef int64_t[::1] occ = occ_a, peak = peak_a, pushed = pushed_a, popped = popped_a
    cdef int64_t[:, ::1] finish = finish_a
    cdef int64_t[::1] busy = busy_a, stall = stall_a

    cdef int64_t[::1] graph = np.zeros(n_units, np.int64)
    cdef int64_t[::1] phase = np.zeros(n_units, np.int64)
    cdef int64_t[::1] started = np.zeros(n_units, np.int64)
    cdef int64_t[::1] issued = np.zeros(n_units, np.int64)
    cdef int64_t[::1] empty_pending = np.zeros(n_units, np.int64)
    cdef int64_t[::1] delay_until = np.zeros(n_units, np.int64)
    cdef int64_t[::1] next_issue = np.zeros(n_units, np.int64)
    cdef int64_t[::1] stalled = np.zeros(n_units, np.int64)
    cdef int64_t[::1] rem = np.zeros(max(inc.shape[0], 1), np.int64)
    cdef int64_t[:, ::1] q_ready = np.zeros((n_units, ring), np.int64)
    cdef int64_t[:, ::1] q_k = np.zeros((n_units, ring), np.int64)
    cdef int64_t[:, ::1] q_ph = np.zeros((n_units, ring), np.int64)
    cdef int64_t[:, ::1] q_flag = np.zeros((n_units, ring), np.int64)
    cdef int64_t[::1] q_head = np.zeros(n_units, np.int64)
    cdef int64_t[::1] q_len = np.zeros(n_units, np.int64)

    cdef Py_ssize_t u, j, c, h, s, ph, kd
    cdef int64_t t = 0, last_progress = 0, units_left = n_units, status = S_OK
    cdef int64_t k, take, total, flag
    cdef bint progress, ok, done, last, overflow = False

    for u in range(n_units):
        phase[u] = ups[u]
        if ups[u] == ups[u + 1]:
            graph[u] = n_graphs
            units_left -= 1

    with nogil:
        while units_left > 0:
            if t >= max_cycles:
                status = S_TIMEOUT
                break
            progress = False
            for u in range(n_units):
                stalled[u] = 0
                while q_len[u] > 0:
                    h = q_head[u]
                    if q_ready[u, h] > t:
                        break
                    ph = q_ph[u, h]
                    k = q_k[u, h]
                    ok = True
                    for j in range(outs[ph], outs[ph + 1]):
                        c = outc[j]
                        if occ[c] + k > cap[c]:
                            ok = False
                            break
                    if not ok:
                        stalled[u] = 1
                        break
                    for j in range(outs[ph], outs[ph + 1]):
                        c = outc[j]
                        occ[c] += k
                        pushed[c] += k
                        if occ[c] > peak[c]:
                            peak[c] = occ[c]
                    flag = q_flag[u, h]
                    q_head[u] = (h + 1) % ring
                    q_len[u] -= 1
                    progress = True
                    if flag >= 0:
                        finish[u, flag] = t
                        if flag == n_graphs - 1:
                            units_left -= 1
                if stalled[u]:
                    stall[u] += 1
                    for s in range(q_len[u]):
                        q_ready[u, (q_head[u] + s) % ring] += 1

            for u in range(n_units):
                if stalled[u]:
                    continue
                while graph[u] < n_graphs:
                    ph = phase[u]
                    kd = kind[ph]
                    if not started[u]:
                        started[u] = 1
                        issued[u] = 0
                        if kd == K_DELAY:
                            delay_until[u] = t + count[ph]
                        elif kd == K_LOAD:
                            total = 0
                            for j in range(ins[ph], ins[ph + 1]):
                                rem[j] = incnt[j]
                                total += incnt[j]
                            empty_pending[u] = total == 0
                        else:
                            empty_pending[u] = count[ph] == 0
                    if kd == K_DELAY:
                        if t < delay_until[u]:
                            break
                        done = True
                    elif kd == K_LOAD:
                        done = not empty_pending[u]
                        if done:
                            for j in range(ins[ph], ins[ph + 1]):
                                if rem[j] != 0:
                                    done = False
                                    break
                    else:
                        done = (not empty_pending[u]) and issued[u] == count[ph]
                    if done:
                        if kd != K_DELAY and drain[ph] and q_len[u] > 0:
                            break
                        progress = True
                        started[u] = 0
                        if ph + 1 == ups[u + 1]:
                            phase[u] = ups[u]
                            graph[u] += 1
                        else:
                            phase[u] = ph + 1
                        continue
                    if t < next_issue[u]:
                        break
                    if kd == K_LOAD:
                        k = 0
                        last = True
                        for j in range(ins[ph], ins[ph + 1]):
                            c = inc[j]
                            take = width[ph] if width[ph] < rem[j] else rem[j]
                            if c >= 0:
                                if occ[c] < take:
                                    take = occ[c]
                                occ[c] -= take
                                popped[c] += take
                            rem[j] -= take
                            k += take
                            if rem[j] != 0:
                                last = False
                    else:
                        k = count[ph] - issued[u]
                        if width[ph] < k:
                            k = width[ph]
                        for j in range(ins[ph], ins[ph + 1]):
                            c = inc[j]
                            if c >= 0 and occ[c] < k:
                                k = occ[c]
                        for j in range(ins[ph], ins[ph + 1]):
                            c = inc[j]
                            if c >= 0:
                                occ[c] -= k
                                popped[c] += k
                        issued[u] += k
                        last = issued[u] == count[ph]
                    if k == 0 and not empty_pending[u]:
                        break
                    empty_pending[u] = 0
                    flag = graph[u] if (last and ph + 1 == ups[u + 1]) else -1
                    if q_len[u] >= ring:
                        overflow = True
                        break
                    h = (q_head[u] + q_len[u]) % ring
                    q_ready[u, h] = t + ii[ph] + depth[ph]
                    q_k[u, h] = k
                    q_ph[u, h] = ph
                    q_flag[u, h] = flag
                    q_len[u] += 1
                    next_issue[u] = t + ii[ph]
                    busy[u] += 1
                    progress = True
                    break
                if overflow:
                    break
            if overflow:
                break
            if progress:
                last_progress = t
            elif t - last_progress > watchdog:
                status = S_DEADLOCK
                break
            t += 1

    if overflow:
        raise RuntimeError("in-flight ring overflow")

    dl_cycle, dl_chan, dl_units = -1, -1, []
    if status == S_DEADLOCK:
        dl_cycle = last_progress + 1
        for u in range(n_units):
            if q_len[u] > 0:
                h = q_head[u]
                ph = q_ph[u, h]
                for j in range(outs[ph], outs[ph + 1]):
                    c = outc[j]
                    if occ[c] + q_k[u, h] > cap[c]:
                        dl_units.append(u)
                        if dl_chan < 0:
                            dl_chan = c
                        break
    return (status, t, finish_a, busy_a, stall_a, peak_a, pushed_a, popped_a,
            dl_cycle, dl_chan, dl_units)
