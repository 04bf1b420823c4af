"""Pure-Python event-loop kernel; reference for the compiled ``_kernel``.

Both implementations must produce bit-identical outputs and leave the
tracker arrays in identical states.
"""

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INV53 = 1.0 / 9007199254740992.0
_N = 37


def _mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def run_segment(key, start, n, last_unmapped, hop_increment, enabled, probs,
                marks, head, filled, win_ok, total_ok, total_err,
                out_channel, out_success, out_latest, out_total):
    """Run ``n`` connection events with a fixed channel map and probabilities.

    Mutates the tracker arrays and fills the ``out_*`` arrays; returns the
    final unmapped hop channel.
    """
    w = marks.shape[1]
    en = [int(x) for x in enabled]
    used = [c for c in range(_N) if en[c]]
    if not used:
        raise RuntimeError("channel map has no enabled channels")
    p = [float(x) for x in probs]
    rows = marks.tolist()
    hd = head.tolist()
    fl = filled.tolist()
    wo = win_ok.tolist()
    tok = total_ok.tolist()
    terr = total_err.tolist()

    pooled_ok = sum(wo[c] for c in used)
    pooled_n = sum(fl[c] for c in used)
    sum_ok = sum(tok)
    sum_all = sum_ok + sum(terr)
    n_used = len(used)
    unmapped = last_unmapped

    for i in range(n):
        e = start + i
        unmapped = (unmapped + hop_increment) % _N
        c = unmapped if en[unmapped] else used[unmapped % n_used]
        u = (_mix64((key + (e + 1) * _GOLDEN) & _M64) >> 11) * _INV53
        ok = u < p[c]

        row = rows[c]
        h = hd[c]
        if fl[c] == w:
            if row[h] == 1:
                wo[c] -= 1
                pooled_ok -= 1
        else:
            fl[c] += 1
            pooled_n += 1
        if ok:
            row[h] = 1
            wo[c] += 1
            pooled_ok += 1
            tok[c] += 1
            sum_ok += 1
        else:
            row[h] = -1
            terr[c] += 1
        sum_all += 1
        hd[c] = (h + 1) % w

        out_channel[i] = c
        out_success[i] = 1 if ok else 0
        out_latest[i] = 100.0 * pooled_ok / pooled_n if pooled_n else 100.0
        out_total[i] = 100.0 * sum_ok / sum_all

    marks[...] = rows
    head[...] = hd
    filled[...] = fl
    win_ok[...] = wo
    total_ok[...] = tok
    total_err[...] = terr
    return unmapped
