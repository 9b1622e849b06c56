"""Pure-NumPy twin of the compiled kernels (same call signatures).

Selected automatically when the extension is unavailable; also importable
directly for benchmarking and conformance tests.  Readability over speed --
the compiled module exists because these run 5-50x slower on wide registers.
"""

from __future__ import annotations

import numpy as np


def _as_tensor(amps: np.ndarray) -> np.ndarray:
    nb = amps.shape[0].bit_length() - 1
    return amps.reshape((2,) * nb)


def _axis(amps: np.ndarray, q: int) -> int:
    # C-ordered reshape puts qubit q (bit q of the flat index) at axis nb-1-q.
    return amps.shape[0].bit_length() - 2 - q


def apply_1q(amps: np.ndarray, q: int, m: np.ndarray) -> None:
    view = amps.reshape(-1, 2, 1 << q)
    view[:] = np.einsum("ab,xby->xay", m, view)


def apply_diag_1q(amps: np.ndarray, q: int, d0: complex, d1: complex) -> None:
    view = amps.reshape(-1, 2, 1 << q)
    view[:, 0, :] *= d0
    view[:, 1, :] *= d1


def apply_x(amps: np.ndarray, q: int) -> None:
    view = amps.reshape(-1, 2, 1 << q)
    view[:] = view[:, ::-1, :]


def apply_2q(amps: np.ndarray, qa: int, qb: int, m: np.ndarray) -> None:
    t = _as_tensor(amps)
    moved = np.moveaxis(t, (_axis(amps, qa), _axis(amps, qb)), (0, 1))
    moved[:] = (m @ moved.reshape(4, -1)).reshape(moved.shape)


def apply_cx(amps: np.ndarray, qc: int, qt: int) -> None:
    t = _as_tensor(amps)
    moved = np.moveaxis(t, (_axis(amps, qc), _axis(amps, qt)), (0, 1))
    moved[1] = moved[1, ::-1]


def apply_diag_2q(amps: np.ndarray, qa: int, qb: int, d: np.ndarray) -> None:
    t = _as_tensor(amps)
    moved = np.moveaxis(t, (_axis(amps, qa), _axis(amps, qb)), (0, 1))
    moved *= np.asarray(d).reshape(2, 2)[(...,) + (None,) * (moved.ndim - 2)]


def prob_one(amps: np.ndarray, q: int) -> float:
    view = amps.reshape(-1, 2, 1 << q)
    branch = view[:, 1, :]
    return float(np.sum(branch.real**2 + branch.imag**2))


def project(amps: np.ndarray, q: int, bit: int, scale: float) -> None:
    view = amps.reshape(-1, 2, 1 << q)
    view[:, 1 - bit, :] = 0.0
    view[:, bit, :] *= scale


def norm_sq(amps: np.ndarray) -> float:
    return float(np.sum(amps.real**2 + amps.imag**2))


def _strip_axis_ravel(t: np.ndarray, moved_from: int) -> np.ndarray:
    # t's axis 0 must return to position `moved_from`; flatten C-order.
    return np.ascontiguousarray(np.moveaxis(t, 0, moved_from)).reshape(-1)


def apply_x_mask(amps: np.ndarray, mask: int) -> None:
    q = 0
    while mask:
        if mask & 1:
            apply_x(amps, q)
        mask >>= 1
        q += 1


def zmeas_prob(amps: np.ndarray, qc: int, qt: int) -> float:
    t = _as_tensor(amps)
    m = np.moveaxis(t, (_axis(amps, qc), _axis(amps, qt)), (0, 1))
    b, c = m[0, 1], m[1, 0]
    return float(np.sum(b.real**2 + b.imag**2) + np.sum(c.real**2 + c.imag**2))


def zmeas_collapse(amps: np.ndarray, qc: int, qt: int, z_t: complex,
                   bit: int, scale: float) -> np.ndarray:
    t = _as_tensor(amps)
    ac, at = _axis(amps, qc), _axis(amps, qt)
    m = np.moveaxis(t, (ac, at), (0, 1))
    k0 = m[0, bit] * ((z_t if bit else 1.0) * scale)
    k1 = m[1, 1 - bit] * ((z_t if 1 - bit else 1.0) * scale)
    rem = np.stack([k0, k1], axis=0)  # axis 0 = qc
    return _strip_axis_ravel(rem, ac if ac < at else ac - 1)


def _xmeas_terms(amps, qc, qt, z_c, z_t):
    t = _as_tensor(amps)
    ab, ad = _axis(amps, qc), _axis(amps, qt)
    m = np.moveaxis(t, (ab, ad), (0, 1))
    a0 = m[0].copy()
    a0[1] *= z_t
    a1 = m[1][::-1] * z_c  # entry d holds the (qc=1, qt=1-d) branch
    a1[0] *= z_t
    return a0, a1, ab, ad


def xmeas_prob(amps: np.ndarray, qc: int, qt: int, z_c: complex,
               z_t: complex) -> float:
    a0, a1, _, _ = _xmeas_terms(amps, qc, qt, z_c, z_t)
    s = a0 + a1
    return float(0.5 * np.sum(s.real**2 + s.imag**2))


def xmeas_collapse(amps: np.ndarray, qc: int, qt: int, z_c: complex,
                   z_t: complex, m: int, scale: float) -> np.ndarray:
    a0, a1, ab, ad = _xmeas_terms(amps, qc, qt, z_c, z_t)
    sgn = -1.0 if m else 1.0
    rem = (a0 + sgn * a1) * (scale * 2**-0.5)  # axis 0 = qt
    return _strip_axis_ravel(rem, ad if ad < ab else ad - 1)
