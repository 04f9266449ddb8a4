# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the numpy kernels in ``_kernels_py``.

Same signatures, same summation orders where it matters.  The micro-loss
evaluator is the piece that pays for compilation: the finite-difference
trainer calls it hundreds of thousands of times on tiny tensors, where
interpreter dispatch dominates the numpy implementation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt, tanh

cnp.import_array()


def power_sum(double[:, ::1] a_bar, double beta, int hops):
    """Geometric-weight truncated power sum: sum_{i=0}^{k} b(1-b)^i A^i."""
    cdef int v = a_bar.shape[0]
    acc_arr = np.zeros((v, v))
    pow_arr = np.eye(v)
    tmp_arr = np.empty((v, v))
    cdef double[:, ::1] acc = acc_arr
    cdef double[:, ::1] power = pow_arr
    cdef double[:, ::1] tmp = tmp_arr
    cdef double w = beta
    cdef double s
    cdef int i, j, k, h
    for i in range(v):
        acc[i, i] = beta
    for h in range(hops):
        for i in range(v):
            for j in range(v):
                s = 0.0
                for k in range(v):
                    s += power[i, k] * a_bar[k, j]
                tmp[i, j] = s
        for i in range(v):
            for j in range(v):
                power[i, j] = tmp[i, j]
        w *= 1.0 - beta
        for i in range(v):
            for j in range(v):
                acc[i, j] += w * power[i, j]
    return acc_arr


def diffuse_iter(double[:, ::1] a_bar, double[:, ::1] feats, double beta, int iters):
    """Fixed-point recursion E <- (1-b) A E + b E0, run for K iterations."""
    cdef int v = a_bar.shape[0]
    cdef int c = feats.shape[1]
    e_arr = np.array(feats, dtype=float)
    tmp_arr = np.empty((v, c))
    cdef double[:, ::1] e = e_arr
    cdef double[:, ::1] e0 = feats
    cdef double[:, ::1] tmp = tmp_arr
    cdef double s
    cdef int it, i, j, k
    for it in range(iters):
        for i in range(v):
            for j in range(c):
                s = 0.0
                for k in range(v):
                    s += a_bar[i, k] * e[k, j]
                tmp[i, j] = (1.0 - beta) * s + beta * e0[i, j]
        for i in range(v):
            for j in range(c):
                e[i, j] = tmp[i, j]
    return e_arr


def jacobi_eigh(double[:, ::1] sym, double off_tol=1e-12, int max_sweeps=64):
    """Cyclic Jacobi eigendecomposition; eigenvalues ascending."""
    cdef int n = sym.shape[0]
    a_arr = np.array(sym, dtype=float)
    v_arr = np.eye(n)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] vecs = v_arr
    cdef int sweep, p, q, i
    cdef double off, apq, theta, t, c, s, xp, xq
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += a[p, q] * a[p, q]
        if sqrt(off) < off_tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                # negligible relative to the diagonal: rotation is a no-op
                if fabs(apq) <= 1e-18 * (fabs(a[p, p]) + fabs(a[q, q]) + off_tol):
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if fabs(theta) > 1e150:  # theta^2 would overflow
                    t = 0.5 / theta
                else:
                    t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for i in range(n):
                    xp = c * a[i, p] - s * a[i, q]
                    xq = s * a[i, p] + c * a[i, q]
                    a[i, p] = xp
                    a[i, q] = xq
                for i in range(n):
                    xp = c * a[p, i] - s * a[q, i]
                    xq = s * a[p, i] + c * a[q, i]
                    a[p, i] = xp
                    a[q, i] = xq
                for i in range(n):
                    xp = c * vecs[i, p] - s * vecs[i, q]
                    xq = s * vecs[i, p] + c * vecs[i, q]
                    vecs[i, p] = xp
                    vecs[i, q] = xq
    w = np.diag(a_arr).copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    v_arr = v_arr[:, order]
    flip = v_arr[np.abs(v_arr).argmax(axis=0), np.arange(n)] < 0
    v_arr[:, flip] *= -1.0
    return w, v_arr


# --- micro-model loss ---------------------------------------------------------

# per-block slot ids into the offset table
cdef Py_ssize_t S_TOPO = 0, S_WQ = 1, S_WK = 2, S_W3 = 3, S_GAMMA = 4
cdef Py_ssize_t S_SPATW = 5, S_SPATB = 6, S_RESW = 7, S_BN1S = 8, S_BN1B = 9
cdef Py_ssize_t S_D1RW = 10, S_D1RB = 11, S_D1CW = 12, S_D1CB = 13
cdef Py_ssize_t S_D1EW = 14, S_D1EB = 15
cdef Py_ssize_t S_D2RW = 16, S_D2RB = 17, S_D2CW = 18, S_D2CB = 19
cdef Py_ssize_t S_D2EW = 20, S_D2EB = 21
cdef Py_ssize_t S_MPW = 22, S_MPB = 23, S_SKW = 24, S_SKB = 25
cdef Py_ssize_t S_BN2S = 26, S_BN2B = 27
cdef Py_ssize_t N_SLOTS = 28

_SLOT_KEYS = [
    "att.topo", "att.wq", "att.wk", "att.w3", "att.gamma",
    "spat.w", "spat.b", "spat.res.w", "spat.bn.scale", "spat.bn.shift",
    "tc.d1.red.w", "tc.d1.red.b", "tc.d1.conv.w", "tc.d1.conv.b",
    "tc.d1.exp.w", "tc.d1.exp.b",
    "tc.d2.red.w", "tc.d2.red.b", "tc.d2.conv.w", "tc.d2.conv.b",
    "tc.d2.exp.w", "tc.d2.exp.b",
    "tc.mp.w", "tc.mp.b", "tc.skip.w", "tc.skip.b",
    "tc.bn.scale", "tc.bn.shift",
]


cdef class MicroLossEval:
    """Multi-task loss of the micro model at a flat parameter vector.

    Mirrors ``kinegraph.training.micro_loss_reference``: whole-dataset batch,
    batch-statistics normalization, main cross-entropy plus weighted
    auxiliary cross-entropy.
    """

    cdef double[:, :, :, ::1] data
    cdef long long[::1] labels
    cdef double[:, ::1] pe
    cdef double[:, :, ::1] templates
    cdef double lam, beta
    cdef int aux_tap, kernel, pool, n_blocks, nb, nt, nv, nd, c0, nm
    cdef int dil1, dil2
    cdef long long[:, ::1] off
    cdef long long off_embed_w, off_embed_b, off_head_w, off_head_b
    cdef long long off_aux_w, off_aux_b
    cdef int[::1] cin, cout, stride, hops, rdim, cb, has_res
    # scratch
    cdef double[:, :, :, ::1] f, f2, s, red, conv, out, mp
    cdef double[:, :, ::1] pooled, qproj, kproj, abar, acc, power, theta_f
    cdef double[:, ::1] tmp_vv, logits, auxlog, tproj
    cdef double[::1] mean, var, row

    def __init__(self, plan, data, labels):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.labels = np.ascontiguousarray(labels, dtype=np.int64)
        self.pe = np.ascontiguousarray(plan["pe"], dtype=np.float64)
        self.templates = np.ascontiguousarray(plan["templates"], dtype=np.float64)
        self.lam = plan["lambda_aux"]
        self.beta = plan["beta"]
        self.aux_tap = plan["aux_tap"]
        self.kernel = plan["tc_kernel"]
        self.pool = plan["tc_pool"]
        self.dil1 = plan["tc_dilations"][0]
        self.dil2 = plan["tc_dilations"][1]
        blocks = plan["blocks"]
        self.n_blocks = len(blocks)
        self.nb = self.data.shape[0]
        self.nt = self.data.shape[1]
        self.nv = self.data.shape[2]
        self.nd = self.data.shape[3]
        self.c0 = plan["c0"]
        self.nm = plan["classes"]

        slots = plan["slots"]
        off = np.full((self.n_blocks, N_SLOTS), -1, dtype=np.int64)
        cin = np.empty(self.n_blocks, dtype=np.int32)
        cout = np.empty(self.n_blocks, dtype=np.int32)
        stride = np.empty(self.n_blocks, dtype=np.int32)
        hops = np.empty(self.n_blocks, dtype=np.int32)
        rdim = np.empty(self.n_blocks, dtype=np.int32)
        cb = np.empty(self.n_blocks, dtype=np.int32)
        has_res = np.empty(self.n_blocks, dtype=np.int32)
        for l, blk in enumerate(blocks):
            cin[l] = blk["cin"]
            cout[l] = blk["cout"]
            stride[l] = blk["stride"]
            hops[l] = blk["hops"]
            rdim[l] = blk["r"]
            cb[l] = blk["cb"]
            has_res[l] = 1 if blk["has_res"] else 0
            for sid, key in enumerate(_SLOT_KEYS):
                full = f"b{l}.{key}"
                if full in slots:
                    off[l, sid] = slots[full][0]
        self.off = off
        self.cin, self.cout, self.stride = cin, cout, stride
        self.hops, self.rdim, self.cb, self.has_res = hops, rdim, cb, has_res
        self.off_embed_w = slots["embed.w"][0]
        self.off_embed_b = slots["embed.b"][0]
        self.off_head_w = slots["head.w"][0]
        self.off_head_b = slots["head.b"][0]
        self.off_aux_w = slots["aux.w"][0]
        self.off_aux_b = slots["aux.b"][0]

        cdef int cmax = max(self.c0, int(np.max(cout)))
        cdef int rmax = max(1, int(np.max(rdim)))
        cdef int cbmax = max(1, int(np.max(cb)))
        b, t, v = self.nb, self.nt, self.nv
        self.f = np.zeros((b, t, v, cmax))
        self.f2 = np.zeros((b, t, v, cmax))
        self.s = np.zeros((b, t, v, cmax))
        self.red = np.zeros((b, t, v, cbmax))
        self.conv = np.zeros((b, t, v, cbmax))
        self.out = np.zeros((b, t, v, cmax))
        self.mp = np.zeros((b, t, v, cmax))
        self.pooled = np.zeros((b, v, cmax))
        self.qproj = np.zeros((b, v, rmax))
        self.kproj = np.zeros((b, v, rmax))
        self.abar = np.zeros((b, v, v))
        self.acc = np.zeros((b, v, v))
        self.power = np.zeros((b, v, v))
        self.theta_f = np.zeros((b, v, cmax))
        self.tmp_vv = np.zeros((v, v))
        self.logits = np.zeros((b, self.nm))
        self.auxlog = np.zeros((b, self.nm))
        self.tproj = np.zeros((b, v))
        self.mean = np.zeros(cmax)
        self.var = np.zeros(cmax)
        self.row = np.zeros(cmax)

    def __call__(self, theta):
        cdef double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
        return self._loss(th)

    cdef void _batchnorm(self, double[:, :, :, ::1] x, int t_len, int c_len,
                         long long off_scale, long long off_shift,
                         double[::1] th):
        cdef int b, t, v, c
        cdef int n = self.nb * t_len * self.nv
        cdef double d
        cdef double eps = 1e-5
        for c in range(c_len):
            self.mean[c] = 0.0
            self.var[c] = 0.0
        for b in range(self.nb):
            for t in range(t_len):
                for v in range(self.nv):
                    for c in range(c_len):
                        self.mean[c] += x[b, t, v, c]
        for c in range(c_len):
            self.mean[c] /= n
        for b in range(self.nb):
            for t in range(t_len):
                for v in range(self.nv):
                    for c in range(c_len):
                        d = x[b, t, v, c] - self.mean[c]
                        self.var[c] += d * d
        for c in range(c_len):
            self.var[c] = th[off_scale + c] / sqrt(self.var[c] / n + eps)
        for b in range(self.nb):
            for t in range(t_len):
                for v in range(self.nv):
                    for c in range(c_len):
                        x[b, t, v, c] = (x[b, t, v, c] - self.mean[c]) * self.var[c] \
                            + th[off_shift + c]

    cdef double _loss(self, double[::1] th):
        cdef int nb = self.nb, nt = self.nt, nv = self.nv, nd = self.nd
        cdef int b, t, v, c, d, i, j, k, l, r, dt, co, ci, t2
        cdef int c_in, c_out, strd, t_len, t_out, cbl, rl, dil, ext, padl, c_last
        cdef double s, w, g, m, acc_v, a
        cdef long long o, o2, ob

        # embedding + position table
        for b in range(nb):
            for t in range(nt):
                for v in range(nv):
                    for c in range(self.c0):
                        self.f[b, t, v, c] = th[self.off_embed_b + c] + self.pe[v, c]
                    for d in range(nd):
                        a = self.data[b, t, v, d]
                        o = self.off_embed_w + d * self.c0
                        for c in range(self.c0):
                            self.f[b, t, v, c] += a * th[o + c]
        t_len = nt

        for l in range(self.n_blocks):
            c_in = self.cin[l]
            c_out = self.cout[l]
            strd = self.stride[l]
            rl = self.rdim[l]
            cbl = self.cb[l]

            # time-pooled features
            for b in range(nb):
                for v in range(nv):
                    for c in range(c_in):
                        self.pooled[b, v, c] = 0.0
                for t in range(t_len):
                    for v in range(nv):
                        for c in range(c_in):
                            self.pooled[b, v, c] += self.f[b, t, v, c]
                for v in range(nv):
                    for c in range(c_in):
                        self.pooled[b, v, c] /= t_len
            # projections
            o = self.off[l, S_WQ]
            o2 = self.off[l, S_WK]
            for b in range(nb):
                for v in range(nv):
                    for r in range(rl):
                        self.qproj[b, v, r] = 0.0
                        self.kproj[b, v, r] = 0.0
                    for c in range(c_in):
                        a = self.pooled[b, v, c]
                        for r in range(rl):
                            self.qproj[b, v, r] += a * th[o + c * rl + r]
                            self.kproj[b, v, r] += a * th[o2 + c * rl + r]
            # refined attention
            o = self.off[l, S_W3]
            w = th[self.off[l, S_GAMMA]]
            o2 = self.off[l, S_TOPO]
            for b in range(nb):
                for i in range(nv):
                    for j in range(nv):
                        s = 0.0
                        for r in range(rl):
                            s += tanh(self.qproj[b, i, r] - self.kproj[b, j, r]) * th[o + r]
                        self.abar[b, i, j] = th[o2 + i * nv + j] + w * s
            # truncated power sum
            for b in range(nb):
                for i in range(nv):
                    for j in range(nv):
                        self.acc[b, i, j] = self.beta if i == j else 0.0
                        self.power[b, i, j] = 1.0 if i == j else 0.0
            w = self.beta
            for k in range(self.hops[l]):
                w *= 1.0 - self.beta
                for b in range(nb):
                    for i in range(nv):
                        for j in range(nv):
                            self.tmp_vv[i, j] = 0.0
                        for c in range(nv):
                            a = self.power[b, i, c]
                            for j in range(nv):
                                self.tmp_vv[i, j] += a * self.abar[b, c, j]
                    for i in range(nv):
                        for j in range(nv):
                            self.power[b, i, j] = self.tmp_vv[i, j]
                            self.acc[b, i, j] += w * self.tmp_vv[i, j]
            # spatial aggregation: (acc @ F) @ W + b
            o = self.off[l, S_SPATW]
            ob = self.off[l, S_SPATB]
            for b in range(nb):
                for t in range(t_len):
                    for i in range(nv):
                        for c in range(c_in):
                            self.row[c] = 0.0
                        for j in range(nv):
                            a = self.acc[b, i, j]
                            for c in range(c_in):
                                self.row[c] += a * self.f[b, t, j, c]
                        for co in range(c_out):
                            self.f2[b, t, i, co] = th[ob + co]
                        for c in range(c_in):
                            a = self.row[c]
                            o2 = o + c * c_out
                            for co in range(c_out):
                                self.f2[b, t, i, co] += a * th[o2 + co]
            self._batchnorm(self.f2, t_len, c_out, self.off[l, S_BN1S], self.off[l, S_BN1B], th)
            # residual + relu -> s
            if self.has_res[l]:
                o = self.off[l, S_RESW]
                for b in range(nb):
                    for t in range(t_len):
                        for v in range(nv):
                            for co in range(c_out):
                                self.row[co] = self.f2[b, t, v, co]
                            for c in range(c_in):
                                a = self.f[b, t, v, c]
                                o2 = o + c * c_out
                                for co in range(c_out):
                                    self.row[co] += a * th[o2 + co]
                            for co in range(c_out):
                                self.s[b, t, v, co] = self.row[co] if self.row[co] > 0.0 else 0.0
            else:
                for b in range(nb):
                    for t in range(t_len):
                        for v in range(nv):
                            for co in range(c_out):
                                s = self.f2[b, t, v, co] + self.f[b, t, v, co]
                                self.s[b, t, v, co] = s if s > 0.0 else 0.0

            # --- temporal block ---
            t_out = (t_len + strd - 1) // strd
            for b in range(nb):
                for t in range(t_out):
                    for v in range(nv):
                        for co in range(c_out):
                            self.out[b, t, v, co] = 0.0
            # two dilated branches
            for k in range(2):
                dil = self.dil1 if k == 0 else self.dil2
                o = self.off[l, S_D1RW + 6 * k]
                ob = self.off[l, S_D1RB + 6 * k]
                for b in range(nb):
                    for t in range(t_len):
                        for v in range(nv):
                            for ci in range(cbl):
                                self.red[b, t, v, ci] = th[ob + ci]
                            for c in range(c_out):
                                a = self.s[b, t, v, c]
                                o2 = o + c * cbl
                                for ci in range(cbl):
                                    self.red[b, t, v, ci] += a * th[o2 + ci]
                # dilated same-padded conv with stride
                o = self.off[l, S_D1CW + 6 * k]
                ob = self.off[l, S_D1CB + 6 * k]
                ext = (self.kernel - 1) * dil + 1
                padl = (ext - 1) // 2
                for b in range(nb):
                    for t2 in range(t_out):
                        for v in range(nv):
                            for co in range(cbl):
                                self.conv[b, t2, v, co] = th[ob + co]
                            for dt in range(self.kernel):
                                t = t2 * strd - padl + dt * dil
                                if 0 <= t < t_len:
                                    for ci in range(cbl):
                                        a = self.red[b, t, v, ci]
                                        o2 = o + (dt * cbl + ci) * cbl
                                        for co in range(cbl):
                                            self.conv[b, t2, v, co] += a * th[o2 + co]
                o = self.off[l, S_D1EW + 6 * k]
                ob = self.off[l, S_D1EB + 6 * k]
                for b in range(nb):
                    for t2 in range(t_out):
                        for v in range(nv):
                            for co in range(c_out):
                                self.row[co] = th[ob + co]
                            for ci in range(cbl):
                                a = self.conv[b, t2, v, ci]
                                o2 = o + ci * c_out
                                for co in range(c_out):
                                    self.row[co] += a * th[o2 + co]
                            for co in range(c_out):
                                self.out[b, t2, v, co] += self.row[co]
            # max-pool branch
            o = self.off[l, S_MPW]
            ob = self.off[l, S_MPB]
            padl = (self.pool - 1) // 2
            for b in range(nb):
                for t2 in range(t_out):
                    for v in range(nv):
                        for c in range(c_out):
                            m = -1e300
                            for dt in range(self.pool):
                                t = t2 * strd - padl + dt
                                if 0 <= t < t_len and self.s[b, t, v, c] > m:
                                    m = self.s[b, t, v, c]
                            self.mp[b, t2, v, c] = m
                        for co in range(c_out):
                            self.row[co] = th[ob + co]
                        for c in range(c_out):
                            a = self.mp[b, t2, v, c]
                            o2 = o + c * c_out
                            for co in range(c_out):
                                self.row[co] += a * th[o2 + co]
                        for co in range(c_out):
                            self.out[b, t2, v, co] += self.row[co]
            # skip branch
            o = self.off[l, S_SKW]
            ob = self.off[l, S_SKB]
            for b in range(nb):
                for t2 in range(t_out):
                    for v in range(nv):
                        for co in range(c_out):
                            self.row[co] = th[ob + co]
                        for c in range(c_out):
                            a = self.s[b, t2 * strd, v, c]
                            o2 = o + c * c_out
                            for co in range(c_out):
                                self.row[co] += a * th[o2 + co]
                        for co in range(c_out):
                            self.out[b, t2, v, co] += self.row[co]
            self._batchnorm(self.out, t_out, c_out, self.off[l, S_BN2S], self.off[l, S_BN2B], th)
            # residual + relu -> f
            for b in range(nb):
                for t2 in range(t_out):
                    for v in range(nv):
                        for co in range(c_out):
                            s = self.out[b, t2, v, co] + self.s[b, t2 * strd, v, co]
                            self.f[b, t2, v, co] = s if s > 0.0 else 0.0
            t_len = t_out
            if l + 1 == self.aux_tap:
                for b in range(nb):
                    for v in range(nv):
                        for c in range(c_out):
                            s = 0.0
                            for t in range(t_len):
                                s += self.f[b, t, v, c]
                            self.theta_f[b, v, c] = s / t_len

        # heads
        c_last = self.cout[self.n_blocks - 1]
        for b in range(nb):
            for c in range(c_last):
                s = 0.0
                for t in range(t_len):
                    for v in range(nv):
                        s += self.f[b, t, v, c]
                self.pooled[b, 0, c] = s / (t_len * nv)
        for b in range(nb):
            for k in range(self.nm):
                s = th[self.off_head_b + k]
                for c in range(c_last):
                    s += self.pooled[b, 0, c] * th[self.off_head_w + c * self.nm + k]
                self.logits[b, k] = s
        # aux head: project tapped features, mix with templates, average joints
        for b in range(nb):
            for j in range(nv):
                s = 0.0
                for c in range(c_last):
                    s += self.theta_f[b, j, c] * th[self.off_aux_w + c]
                self.tproj[b, j] = s
        for b in range(nb):
            for k in range(self.nm):
                acc_v = 0.0
                for i in range(nv):
                    s = 0.0
                    for j in range(nv):
                        s += self.templates[k, i, j] * self.tproj[b, j]
                    acc_v += s
                self.auxlog[b, k] = acc_v / nv + th[self.off_aux_b]

        # cross entropies
        cdef double main_l = 0.0, aux_l = 0.0, zmax, zsum
        cdef long long y
        for b in range(nb):
            y = self.labels[b]
            zmax = self.logits[b, 0]
            for k in range(1, self.nm):
                if self.logits[b, k] > zmax:
                    zmax = self.logits[b, k]
            zsum = 0.0
            for k in range(self.nm):
                zsum += exp(self.logits[b, k] - zmax)
            main_l += log(zsum) - (self.logits[b, y] - zmax)
            zmax = self.auxlog[b, 0]
            for k in range(1, self.nm):
                if self.auxlog[b, k] > zmax:
                    zmax = self.auxlog[b, k]
            zsum = 0.0
            for k in range(self.nm):
                zsum += exp(self.auxlog[b, k] - zmax)
            aux_l += log(zsum) - (self.auxlog[b, y] - zmax)
        return main_l / nb + self.lam * (aux_l / nb)

def make_micro_loss(plan, data, labels):
    """Compiled loss evaluator over a flat parameter vector."""
    return MicroLossEval(plan, data, labels)
