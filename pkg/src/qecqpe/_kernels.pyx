# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Hot statevector kernels: in-place gate application on a flat complex128
amplitude array with bit-masked index iteration.

Index convention: qubit q maps to bit q of the flat index (little-endian).
Two-qubit matrices are indexed by r = 2*bit(qa) + bit(qb) for a gate on
(qa, qb).  The pure-Python twin of this module is ``_kernels_py``; both are
exercised by the same conformance tests.
"""

import numpy as np


def apply_1q(double complex[::1] amps, Py_ssize_t q, const double complex[:, ::1] m):
    cdef Py_ssize_t n = amps.shape[0]
    cdef Py_ssize_t mask = (<Py_ssize_t> 1) << q
    cdef Py_ssize_t block = mask << 1
    cdef Py_ssize_t base, i, i1
    cdef double complex a, b
    cdef double complex m00 = m[0, 0], m01 = m[0, 1], m10 = m[1, 0], m11 = m[1, 1]
    for base in range(0, n, block):
        for i in range(base, base + mask):
            i1 = i | mask
            a = amps[i]
            b = amps[i1]
            amps[i] = m00 * a + m01 * b
            amps[i1] = m10 * a + m11 * b


def apply_diag_1q(double complex[::1] amps, Py_ssize_t q,
                  double complex d0, double complex d1):
    cdef Py_ssize_t n = amps.shape[0]
    cdef Py_ssize_t mask = (<Py_ssize_t> 1) << q
    cdef Py_ssize_t block = mask << 1
    cdef Py_ssize_t base, i
    for base in range(0, n, block):
        for i in range(base, base + mask):
            amps[i] = amps[i] * d0
            amps[i | mask] = amps[i | mask] * d1


def apply_x(double complex[::1] amps, Py_ssize_t q):
    cdef Py_ssize_t n = amps.shape[0]
    cdef Py_ssize_t mask = (<Py_ssize_t> 1) << q
    cdef Py_ssize_t block = mask << 1
    cdef Py_ssize_t base, i, i1
    cdef double complex tmp
    for base in range(0, n, block):
        for i in range(base, base + mask):
            i1 = i | mask
            tmp = amps[i]
            amps[i] = amps[i1]
            amps[i1] = tmp


cdef inline Py_ssize_t _spread2(Py_ssize_t t, Py_ssize_t lo, Py_ssize_t hi):
    # Insert zero bits at positions lo then hi (lo < hi).
    cdef Py_ssize_t j = ((t >> lo) << (lo + 1)) | (t & (((<Py_ssize_t> 1) << lo) - 1))
    return ((j >> hi) << (hi + 1)) | (j & (((<Py_ssize_t> 1) << hi) - 1))


def apply_2q(double complex[::1] amps, Py_ssize_t qa, Py_ssize_t qb,
             const double complex[:, ::1] m):
    cdef Py_ssize_t n = amps.shape[0]
    cdef Py_ssize_t ma = (<Py_ssize_t> 1) << qa
    cdef Py_ssize_t mb = (<Py_ssize_t> 1) << qb
    cdef Py_ssize_t lo = qa if qa < qb else qb
    cdef Py_ssize_t hi = qb if qa < qb else qa
    cdef Py_ssize_t t, i0, i1, i2, i3
    cdef double complex a0, a1, a2, a3
    cdef double complex m00 = m[0, 0], m01 = m[0, 1], m02 = m[0, 2], m03 = m[0, 3]
    cdef double complex m10 = m[1, 0], m11 = m[1, 1], m12 = m[1, 2], m13 = m[1, 3]
    cdef double complex m20 = m[2, 0], m21 = m[2, 1], m22 = m[2, 2], m23 = m[2, 3]
    cdef double complex m30 = m[3, 0], m31 = m[3, 1], m32 = m[3, 2], m33 = m[3, 3]
    for t in range(n >> 2):
        i0 = _spread2(t, lo, hi)
        i1 = i0 | mb
        i2 = i0 | ma
        i3 = i2 | mb
        a0 = amps[i0]
        a1 = amps[i1]
        a2 = amps[i2]
        a3 = amps[i3]
        amps[i0] = m00 * a0 + m01 * a1 + m02 * a2 + m03 * a3
        amps[i1] = m10 * a0 + m11 * a1 + m12 * a2 + m13 * a3
        amps[i2] = m20 * a0 + m21 * a1 + m22 * a2 + m23 * a3
        amps[i3] = m30 * a0 + m31 * a1 + m32 * a2 + m33 * a3


def apply_cx(double complex[::1] amps, Py_ssize_t qc, Py_ssize_t qt):
    cdef Py_ssize_t n = amps.shape[0]
    cdef Py_ssize_t mc = (<Py_ssize_t> 1) << qc
    cdef Py_ssize_t mt = (<Py_ssize_t> 1) << qt
    cdef Py_ssize_t lo = qc if qc < qt else qt
    cdef Py_ssize_t hi = qt if qc < qt else qc
    cdef Py_ssize_t t, i0, i1
    cdef double complex tmp
    for t in range(n >> 2):
        i0 = _spread2(t, lo, hi) | mc
        i1 = i0 | mt
        tmp = amps[i0]
        amps[i0] = amps[i1]
        amps[i1] = tmp


def apply_diag_2q(double complex[::1] amps, Py_ssize_t qa, Py_ssize_t qb,
                  const double complex[::1] d):
    cdef Py_ssize_t n = amps.shape[0]
    cdef Py_ssize_t ma = (<Py_ssize_t> 1) << qa
    cdef Py_ssize_t mb = (<Py_ssize_t> 1) << qb
    cdef Py_ssize_t lo = qa if qa < qb else qb
    cdef Py_ssize_t hi = qb if qa < qb else qa
    cdef Py_ssize_t t, i0
    cdef double complex d0 = d[0], d1 = d[1], d2 = d[2], d3 = d[3]
    for t in range(n >> 2):
        i0 = _spread2(t, lo, hi)
        amps[i0] = amps[i0] * d0
        amps[i0 | mb] = amps[i0 | mb] * d1
        amps[i0 | ma] = amps[i0 | ma] * d2
        amps[i0 | ma | mb] = amps[i0 | ma | mb] * d3


def prob_one(double complex[::1] amps, Py_ssize_t q):
    cdef Py_ssize_t n = amps.shape[0]
    cdef Py_ssize_t mask = (<Py_ssize_t> 1) << q
    cdef Py_ssize_t block = mask << 1
    cdef Py_ssize_t base, i
    cdef double p = 0.0
    cdef double complex a
    for base in range(0, n, block):
        for i in range(base, base + mask):
            a = amps[i | mask]
            p += a.real * a.real + a.imag * a.imag
    return p


def project(double complex[::1] amps, Py_ssize_t q, int bit, double scale):
    """Zero the branch with bit(q) != bit and multiply the kept one by scale."""
    cdef Py_ssize_t n = amps.shape[0]
    cdef Py_ssize_t mask = (<Py_ssize_t> 1) << q
    cdef Py_ssize_t block = mask << 1
    cdef Py_ssize_t base, i, keep, kill
    cdef Py_ssize_t off_keep = mask if bit else 0
    cdef Py_ssize_t off_kill = 0 if bit else mask
    for base in range(0, n, block):
        for i in range(base, base + mask):
            keep = i | off_keep
            kill = i | off_kill
            amps[keep] = amps[keep] * scale
            amps[kill] = 0.0


def norm_sq(double complex[::1] amps):
    cdef Py_ssize_t i
    cdef double s = 0.0
    cdef double complex a
    for i in range(amps.shape[0]):
        a = amps[i]
        s += a.real * a.real + a.imag * a.imag
    return s


cdef inline Py_ssize_t _insert0(Py_ssize_t y, Py_ssize_t p):
    # Insert a zero bit at position p.
    return ((y >> p) << (p + 1)) | (y & (((<Py_ssize_t> 1) << p) - 1))


def apply_x_mask(double complex[::1] amps, Py_ssize_t mask):
    """X on every qubit whose bit is set in ``mask`` (one pass)."""
    cdef Py_ssize_t n = amps.shape[0]
    cdef Py_ssize_t i, j
    cdef double complex tmp
    if mask == 0:
        return
    for i in range(n):
        j = i ^ mask
        if i < j:
            tmp = amps[i]
            amps[i] = amps[j]
            amps[j] = tmp


def zmeas_prob(const double complex[::1] amps, Py_ssize_t qc, Py_ssize_t qt):
    """P(qt reads 1) if CX(qc -> qt) were applied first (no state change)."""
    cdef Py_ssize_t n = amps.shape[0]
    cdef Py_ssize_t x
    cdef double p = 0.0
    cdef double complex a
    for x in range(n):
        if ((x >> qc) ^ (x >> qt)) & 1:
            a = amps[x]
            p += a.real * a.real + a.imag * a.imag
    return p


def zmeas_collapse(const double complex[::1] amps, Py_ssize_t qc, Py_ssize_t qt,
                   double complex z_t, int bit, double scale):
    """Post-state (qt removed) after diag(1,z_t) on qt, CX(qc -> qt), and a
    computational measurement of qt with outcome ``bit``."""
    import numpy as np
    cdef Py_ssize_t half = amps.shape[0] >> 1
    out_arr = np.empty(half, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t y, j0, t
    cdef double complex v
    for y in range(half):
        j0 = _insert0(y, qt)
        t = bit ^ ((j0 >> qc) & 1)
        v = amps[j0 | (t << qt)]
        if t:
            v = v * z_t
        out[y] = v * scale
    return out_arr


def xmeas_prob(const double complex[::1] amps, Py_ssize_t qc, Py_ssize_t qt,
               double complex z_c, double complex z_t):
    """P(qc reads 0) if diag phases, CX(qc -> qt), then H(qc) were applied."""
    cdef Py_ssize_t half = amps.shape[0] >> 1
    cdef Py_ssize_t mc = (<Py_ssize_t> 1) << qc
    cdef Py_ssize_t mt = (<Py_ssize_t> 1) << qt
    cdef Py_ssize_t y, j0
    cdef double p = 0.0
    cdef double complex a0, a1, s
    for y in range(half):
        j0 = _insert0(y, qc)
        a0 = amps[j0]
        a1 = amps[(j0 ^ mt) | mc] * z_c
        if (j0 >> qt) & 1:
            a0 = a0 * z_t
        else:
            a1 = a1 * z_t
        s = a0 + a1
        p += 0.5 * (s.real * s.real + s.imag * s.imag)
    return p


def xmeas_collapse(const double complex[::1] amps, Py_ssize_t qc, Py_ssize_t qt,
                   double complex z_c, double complex z_t, int m, double scale):
    """Post-state (qc removed) after diag phases, CX(qc -> qt), H(qc), and an
    X-basis readout of qc with outcome ``m``."""
    import numpy as np
    cdef Py_ssize_t half = amps.shape[0] >> 1
    out_arr = np.empty(half, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t mc = (<Py_ssize_t> 1) << qc
    cdef Py_ssize_t mt = (<Py_ssize_t> 1) << qt
    cdef double g = scale * 0.7071067811865476
    cdef double sgn = -1.0 if m else 1.0
    cdef Py_ssize_t y, j0
    cdef double complex a0, a1
    for y in range(half):
        j0 = _insert0(y, qc)
        a0 = amps[j0]
        a1 = amps[(j0 ^ mt) | mc] * z_c
        if (j0 >> qt) & 1:
            a0 = a0 * z_t
        else:
            a1 = a1 * z_t
        out[y] = (a0 + sgn * a1) * g
    return out_arr
