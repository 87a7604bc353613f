"""Batched matrix exponential by scaling and squaring with a [13/13] Pade approximant.

Follows Higham (2005), "The scaling and squaring method for the matrix
exponential revisited", using only the degree-13 approximant so one code path
serves every matrix in a batch.
"""

import numpy as np

_THETA_13 = 5.371920351148152

_B13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)


def expm(a: np.ndarray) -> np.ndarray:
    """exp(a) for a stack of square matrices of shape (..., d, d)."""
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected (..., d, d) matrices, got {a.shape}")
    batch = a.shape[:-2]
    d = a.shape[-1]
    a = a.reshape((-1, d, d))
    norm1 = np.max(np.sum(np.abs(a), axis=-2), axis=-1)
    with np.errstate(divide="ignore"):
        s = np.ceil(np.log2(norm1 / _THETA_13))
    s = np.where(np.isfinite(s) & (s > 0), s, 0).astype(int)
    a = a / (2.0 ** s)[:, None, None]

    b = _B13
    eye = np.broadcast_to(np.eye(d, dtype=a.dtype), a.shape)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * eye)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * eye
    r = np.linalg.solve(v - u, v + u)

    for level in range(int(s.max(initial=0))):
        sel = s > level
        r[sel] = r[sel] @ r[sel]
    return r.reshape(batch + (d, d))


def phi_blocks(m: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``exp(m)``, ``phi1(m) @ c`` and ``phi2(m) @ c`` for stacked ``m``.

    ``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2``.  All three come
    from one exponential of the block matrix ``[[m, c, 0], [0, 0, I], [0, 0, 0]]``.
    """
    d = m.shape[-1]
    r = c.shape[-1]
    size = d + 2 * r
    big = np.zeros(m.shape[:-2] + (size, size), dtype=np.result_type(m, c))
    big[..., :d, :d] = m
    big[..., :d, d:d + r] = c
    big[..., d:d + r, d + r:] = np.eye(r)
    e = expm(big)
    return e[..., :d, :d], e[..., :d, d:d + r], e[..., :d, d + r:]
