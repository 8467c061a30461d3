"""Hot numeric loops, each in a numba and a pure-numpy flavour.

The numba path is used when numba imports and ``STP_DISABLE_NUMBA`` is unset
(or ``0``).  Both flavours stay importable as ``<name>_nb`` / ``<name>_np`` so
tests and the benchmark can compare them directly.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a soft dependency
    numba = None

_disabled = os.environ.get("STP_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")
HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _disabled


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# greedy left-to-right segment merging
# ---------------------------------------------------------------------------

def _merge_runs_loop(starts, ends, m_dur, m_int, out_s, out_e):
    n = starts.shape[0]
    if n == 0:
        return 0
    k = 0
    S = starts[0]
    E = ends[0]
    for m in range(1, n):
        s = starts[m]
        e = ends[m]
        if e - S < m_dur and s - E < m_int:
            E = e
        else:
            out_s[k] = S
            out_e[k] = E
            k += 1
            S = s
            E = e
    out_s[k] = S
    out_e[k] = E
    return k + 1


_merge_runs_jit = _njit(_merge_runs_loop)


def merge_runs_nb(starts, ends, m_dur, m_int):
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    ends = np.ascontiguousarray(ends, dtype=np.int64)
    out_s = np.empty_like(starts)
    out_e = np.empty_like(ends)
    k = _merge_runs_jit(starts, ends, np.int64(m_dur), np.int64(m_int), out_s, out_e)
    return out_s[:k].copy(), out_e[:k].copy()


def merge_runs_np(starts, ends, m_dur, m_int):
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    n = starts.shape[0]
    if n == 0:
        return starts.copy(), ends.copy()
    # Cheap vectorised pre-check: a gap that already fails closes a group no
    # matter what, so only the duration test needs the sequential scan.
    gap_ok = np.empty(n, dtype=bool)
    gap_ok[0] = False
    gap_ok[1:] = (starts[1:] - ends[:-1]) < m_int
    s_list = starts.tolist()
    e_list = ends.tolist()
    ok = gap_ok.tolist()
    out_s = []
    out_e = []
    S = s_list[0]
    E = e_list[0]
    for m in range(1, n):
        e = e_list[m]
        if ok[m] and e - S < m_dur:
            E = e
        else:
            out_s.append(S)
            out_e.append(E)
            S = s_list[m]
            E = e
    out_s.append(S)
    out_e.append(E)
    return np.array(out_s, dtype=np.int64), np.array(out_e, dtype=np.int64)


# ---------------------------------------------------------------------------
# Levenshtein cost matrix
# ---------------------------------------------------------------------------

def _edit_matrix_loop(a, b, out):
    n = a.shape[0]
    m = b.shape[0]
    for i in range(n + 1):
        out[i, 0] = i
    for j in range(m + 1):
        out[0, j] = j
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            best = out[i - 1, j - 1] + (0 if ai == b[j - 1] else 1)
            d = out[i - 1, j] + 1
            if d < best:
                best = d
            ins = out[i, j - 1] + 1
            if ins < best:
                best = ins
            out[i, j] = best
    return out


_edit_matrix_jit = _njit(_edit_matrix_loop)


def edit_matrix_nb(a, b):
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    out = np.empty((a.shape[0] + 1, b.shape[0] + 1), dtype=np.int64)
    return _edit_matrix_jit(a, b, out)


def edit_matrix_np(a, b):
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n, m = a.shape[0], b.shape[0]
    out = np.empty((n + 1, m + 1), dtype=np.int64)
    cols = np.arange(m + 1, dtype=np.int64)
    out[0] = cols
    for i in range(1, n + 1):
        prev = out[i - 1]
        row = np.empty(m + 1, dtype=np.int64)
        row[0] = i
        row[1:] = np.minimum(prev[:-1] + (b != a[i - 1]), prev[1:] + 1)
        # insertion chain: row[j] = min_k (row[k] + j - k)
        out[i] = np.minimum.accumulate(row - cols) + cols
    return out


# ---------------------------------------------------------------------------
# per-frame RMS energy in dB
# ---------------------------------------------------------------------------

def _frame_db_loop(samples, frame_len, eps, out):
    n_frames = out.shape[0]
    for f in range(n_frames):
        acc = 0.0
        base = f * frame_len
        for t in range(frame_len):
            x = samples[base + t]
            acc += x * x
        rms = np.sqrt(acc / frame_len)
        if rms < eps:
            rms = eps
        out[f] = 20.0 * np.log10(rms)
    return out


_frame_db_jit = _njit(_frame_db_loop)


def frame_db_nb(samples, frame_len, eps=1e-10):
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    out = np.empty(samples.shape[0] // frame_len, dtype=np.float64)
    return _frame_db_jit(samples, np.int64(frame_len), float(eps), out)


def frame_db_np(samples, frame_len, eps=1e-10):
    samples = np.asarray(samples, dtype=np.float64)
    n_frames = samples.shape[0] // frame_len
    frames = samples[: n_frames * frame_len].reshape(n_frames, frame_len)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    return 20.0 * np.log10(np.maximum(rms, eps))


if USE_NUMBA:
    merge_runs = merge_runs_nb
    edit_matrix = edit_matrix_nb
    frame_db = frame_db_nb
else:
    merge_runs = merge_runs_np
    edit_matrix = edit_matrix_np
    frame_db = frame_db_np
