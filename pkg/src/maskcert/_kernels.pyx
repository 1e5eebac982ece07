# cython: language_level=3
"""Compiled hot kernels; semantics mirror maskcert._kernels_py exactly.

Any change here must be made in lockstep with the pure-Python reference so
both backends keep producing bit-identical draw sequences and float
accumulations (enforced by tests/test_backends.py).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt
from libc.stdint cimport int32_t, uint64_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t _GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def seed_state(seed, stream):
    """Initial splitmix64 state for a (seed, stream) pair."""
    cdef uint64_t s = <uint64_t> (int(seed) & ((1 << 64) - 1))
    cdef uint64_t t = <uint64_t> (int(stream) & ((1 << 64) - 1))
    return _mix64(s ^ _mix64(t))


cdef inline uint64_t _next_u64(uint64_t* state) nogil:
    state[0] = state[0] + _GAMMA
    return _mix64(state[0])


cdef inline uint64_t _rand_below(uint64_t n, uint64_t* state) nogil:
    cdef uint64_t threshold = (-n) % n
    cdef uint64_t v
    while True:
        v = _next_u64(state)
        if v >= threshold:
            return v % n


cdef inline void _draw_subset(int T, int k, int32_t* perm, int32_t* swaps,
                              int32_t* out, uint64_t* state) nogil:
    """Partial Fisher-Yates into ``out`` (sorted ascending); perm restored."""
    cdef int i, j
    cdef int32_t tmp, key
    for i in range(k):
        j = i + <int> _rand_below(<uint64_t> (T - i), state)
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
        swaps[i] = j
    for i in range(k):
        out[i] = perm[i]
    # insertion sort; k is small
    for i in range(1, k):
        key = out[i]
        j = i - 1
        while j >= 0 and out[j] > key:
            out[j + 1] = out[j]
            j -= 1
        out[j + 1] = key
    for i in range(k - 1, -1, -1):
        j = swaps[i]
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp


cdef inline double _eval_kept(const int32_t* kept, int nkept, int mode,
                              const int32_t* match, const int32_t* qcount,
                              int32_t* cnt, const double* pos_z,
                              double ov_w, double mask_w, double denom) nogil:
    cdef int i, m
    cdef int ov = 0
    cdef double z = 0.0
    cdef double t
    for i in range(nkept):
        m = match[kept[i]]
        if m >= 0:
            cnt[m] += 1
            if cnt[m] <= qcount[m]:
                ov += 1
        if mode == 1:
            z += pos_z[kept[i]]
    for i in range(nkept):
        m = match[kept[i]]
        if m >= 0:
            cnt[m] = 0
    if mode == 0:
        return (2.0 * ov) / denom
    t = z + ov_w * ov
    t = t - mask_w * nkept
    return 1.0 / (1.0 + exp(-t))


cdef inline void _kahan_mean_sd(const double* scores, long n,
                                double* mean, double* sd) nogil:
    cdef double total = 0.0, c = 0.0, y, t, d, m2
    cdef long i
    for i in range(n):
        y = scores[i] - c
        t = total + y
        c = (t - total) - y
        total = t
    mean[0] = total / n
    if n < 2:
        sd[0] = 0.0
        return
    m2 = 0.0
    c = 0.0
    for i in range(n):
        d = scores[i] - mean[0]
        y = d * d - c
        t = m2 + y
        c = (t - m2) - y
        m2 = t
    sd[0] = sqrt(m2 / (n - 1))


cdef class _Prog:
    """C view of a ScoreProgram; keeps the backing arrays alive."""
    cdef int mode
    cdef cnp.ndarray match_a, qcount_a, pos_z_a
    cdef int32_t* match
    cdef int32_t* qcount
    cdef double* pos_z
    cdef int nq
    cdef double ov_w, mask_w, denom

    def __cinit__(self, prog):
        self.mode = prog.mode
        self.match_a = np.ascontiguousarray(prog.match, dtype=np.int32)
        self.qcount_a = np.ascontiguousarray(prog.qcount, dtype=np.int32)
        self.pos_z_a = np.ascontiguousarray(prog.pos_z, dtype=np.float64)
        self.match = <int32_t*> cnp.PyArray_DATA(self.match_a)
        self.qcount = <int32_t*> cnp.PyArray_DATA(self.qcount_a)
        self.pos_z = <double*> cnp.PyArray_DATA(self.pos_z_a)
        self.nq = <int> self.qcount_a.shape[0]
        self.ov_w = prog.ov_w
        self.mask_w = prog.mask_w
        self.denom = prog.denom


def rand_below(n, state):
    """One uniform draw from [0, n); returns (value, new_state)."""
    cdef uint64_t st = <uint64_t> (int(state) & ((1 << 64) - 1))
    cdef uint64_t v = _rand_below(<uint64_t> int(n), &st)
    return int(v), int(st)


def sample_sets(T, k, n, state):
    """n keep sets from U(T,k) as an (n, k) int32 array of sorted positions."""
    cdef int cT = T, ck = k
    cdef long cn = n, i
    cdef uint64_t st = <uint64_t> (int(state) & ((1 << 64) - 1))
    cdef cnp.ndarray[cnp.int32_t, ndim=2] out = np.empty((cn, ck), dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] perm = np.arange(cT, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] swaps = np.empty(max(ck, 1), dtype=np.int32)
    cdef int32_t* pperm = <int32_t*> cnp.PyArray_DATA(perm)
    cdef int32_t* pswaps = <int32_t*> cnp.PyArray_DATA(swaps)
    cdef int32_t* pout = <int32_t*> cnp.PyArray_DATA(out)
    with nogil:
        for i in range(cn):
            _draw_subset(cT, ck, pperm, pswaps, pout + i * ck, &st)
    return out, int(st)


def eval_kept(kept, prog):
    """Public single-copy evaluator (generic scoring path)."""
    cdef _Prog p = _Prog(prog)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] karr = np.asarray(
        sorted(int(i) for i in kept), dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cnt = np.zeros(max(p.nq, 1), dtype=np.int32)
    return _eval_kept(<int32_t*> cnp.PyArray_DATA(karr), <int> karr.shape[0],
                      p.mode, p.match, p.qcount,
                      <int32_t*> cnp.PyArray_DATA(cnt), p.pos_z,
                      p.ov_w, p.mask_w, p.denom)


def masked_mean(prog, T, k, n, state, want_scores=False):
    """Monte Carlo mean/sd of the masked-copy score over n draws from U(T,k)."""
    cdef _Prog p = _Prog(prog)
    cdef int cT = T, ck = k
    cdef long cn = n, i
    cdef uint64_t st = <uint64_t> (int(state) & ((1 << 64) - 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] scores = np.empty(cn, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] perm = np.arange(cT, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] swaps = np.empty(max(ck, 1), dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] kept = np.empty(max(ck, 1), dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cnt = np.zeros(max(p.nq, 1), dtype=np.int32)
    cdef int32_t* pperm = <int32_t*> cnp.PyArray_DATA(perm)
    cdef int32_t* pswaps = <int32_t*> cnp.PyArray_DATA(swaps)
    cdef int32_t* pkept = <int32_t*> cnp.PyArray_DATA(kept)
    cdef int32_t* pcnt = <int32_t*> cnp.PyArray_DATA(cnt)
    cdef double* pscores = <double*> cnp.PyArray_DATA(scores)
    cdef double mean = 0.0, sd = 0.0
    with nogil:
        for i in range(cn):
            _draw_subset(cT, ck, pperm, pswaps, pkept, &st)
            pscores[i] = _eval_kept(pkept, ck, p.mode, p.match, p.qcount,
                                    pcnt, p.pos_z, p.ov_w, p.mask_w, p.denom)
        _kahan_mean_sd(pscores, cn, &mean, &sd)
    return mean, sd, (scores if want_scores else None), int(st)


def exact_masked_mean(prog, T, k, count):
    """Exact mean/sd over every keep set in lexicographic order.

    ``count`` is C(T,k), precomputed by the caller (which also enforces the
    enumeration cap).
    """
    cdef _Prog p = _Prog(prog)
    cdef int cT = T, ck = k
    cdef int i, j
    cdef long ccount = count, pos = 0
    cdef cnp.ndarray[cnp.int32_t, ndim=1] idx = np.arange(max(ck, 1), dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cnt = np.zeros(max(p.nq, 1), dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] scores = np.empty(ccount, dtype=np.float64)
    cdef int32_t* pidx = <int32_t*> cnp.PyArray_DATA(idx)
    cdef int32_t* pcnt = <int32_t*> cnp.PyArray_DATA(cnt)
    cdef double* pscores = <double*> cnp.PyArray_DATA(scores)
    cdef double mean = 0.0, sd = 0.0
    with nogil:
        if ck == 0:
            pscores[0] = _eval_kept(pidx, 0, p.mode, p.match, p.qcount, pcnt,
                                    p.pos_z, p.ov_w, p.mask_w, p.denom)
        else:
            while True:
                pscores[pos] = _eval_kept(pidx, ck, p.mode, p.match, p.qcount,
                                          pcnt, p.pos_z, p.ov_w, p.mask_w, p.denom)
                pos += 1
                i = ck - 1
                while i >= 0 and pidx[i] == i + cT - ck:
                    i -= 1
                if i < 0:
                    break
                pidx[i] += 1
                for j in range(i + 1, ck):
                    pidx[j] = pidx[j - 1] + 1
        _kahan_mean_sd(pscores, ccount, &mean, &sd)
    return mean, sd, int(ccount)


def beta_estimate(prog, T, k, r, n_r, n_k, state, want_scores=False):
    """Alg.-1 style estimate: mean copy score over keep sets that intersect
    a hypothesized r-subset of perturbed positions.
    """
    cdef _Prog p = _Prog(prog)
    cdef int cT = T, ck = k, cr = r
    cdef long cnr = n_r, cnk = n_k, ii, jj
    cdef uint64_t st = <uint64_t> (int(state) & ((1 << 64) - 1))
    cdef int scratch = max(ck, cr, 1)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] perm = np.arange(cT, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] swaps = np.empty(scratch, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] aset = np.empty(max(cr, 1), dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] bset = np.empty(max(ck, 1), dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cnt = np.zeros(max(p.nq, 1), dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] amask = np.zeros(cT, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf
    cdef double* pbuf = NULL
    if want_scores:
        buf = np.empty(cnr * cnk, dtype=np.float64)
        pbuf = <double*> cnp.PyArray_DATA(buf)
    cdef int32_t* pperm = <int32_t*> cnp.PyArray_DATA(perm)
    cdef int32_t* pswaps = <int32_t*> cnp.PyArray_DATA(swaps)
    cdef int32_t* pa = <int32_t*> cnp.PyArray_DATA(aset)
    cdef int32_t* pb = <int32_t*> cnp.PyArray_DATA(bset)
    cdef int32_t* pcnt = <int32_t*> cnp.PyArray_DATA(cnt)
    cdef cnp.uint8_t* pam = <cnp.uint8_t*> cnp.PyArray_DATA(amask)
    cdef double total = 0.0, c = 0.0, y, t, s
    cdef long retained = 0
    cdef int i
    cdef bint hit
    with nogil:
        for ii in range(cnr):
            _draw_subset(cT, cr, pperm, pswaps, pa, &st)
            for i in range(cr):
                pam[pa[i]] = 1
            for jj in range(cnk):
                _draw_subset(cT, ck, pperm, pswaps, pb, &st)
                hit = False
                for i in range(ck):
                    if pam[pb[i]]:
                        hit = True
                        break
                if not hit:
                    continue
                s = _eval_kept(pb, ck, p.mode, p.match, p.qcount, pcnt,
                               p.pos_z, p.ov_w, p.mask_w, p.denom)
                if pbuf != NULL:
                    pbuf[retained] = s
                retained += 1
                y = s - c
                t = total + y
                c = (t - total) - y
                total = t
            for i in range(cr):
                pam[pa[i]] = 0
    if retained == 0:
        return 1.0, 0, (buf[:0] if want_scores else None), int(st)
    return total / retained, int(retained), (buf[:retained] if want_scores else None), int(st)
