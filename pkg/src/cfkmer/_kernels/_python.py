"""NumPy fallback for the excursion-scan kernel.

Semantics are defined once, here and in ``_native.pyx``, and must stay in
lockstep: both backends consume the same uniform stream and must emit
bit-identical excursion rows.  See ``consume_excursions`` for the contract.
"""
import numpy as np


def new_carry(k: int) -> np.ndarray:
    """Scan state for a fresh conditioned chain.

    Layout: ``[cur_state, open_steps, acc_0, ..., acc_{d-2}]`` where the
    ``acc`` block holds the d-1 counting coordinates of the open excursion.
    A fresh chain starts with the two all-zero triples forced by the
    conditioning event, so the first transition (zero block to zero block)
    is already on the books: cur=0, one open step, and one (0,0) transition
    recorded at each of the three points.
    """
    hsize = (1 << (2 * k)) - (1 << k)
    carry = np.zeros(2 + 3 * hsize, dtype=np.int64)
    carry[0] = 0
    carry[1] = 1
    for v in range(3):
        carry[2 + v * hsize + 0] = 1  # (y,z) = (all-zero, all-zero)
    return carry


def consume_excursions(cum, k, uniforms, out, carry):
    """Advance the triple chain by ``len(uniforms)`` steps, emitting excursions.

    Parameters
    ----------
    cum : float64[2^(3k)]
        Inclusive cumulative block-triple law; ``cum[-1]`` must be exactly 1.0.
    k : int
        Word size; a chain state packs the three length-k blocks as
        ``(x_A << 2k) | (x_B << k) | x_C``.
    uniforms : float64[n]
        Fresh U[0,1) draws; each one produces exactly one new chain triple.
    out : int64[n, d]
        Output rows ``(t, counts...)``; worst case one excursion per step.
    carry : int64[d + 1]
        Scan state from ``new_carry`` or a previous call; updated in place.

    Returns the number of complete excursions written to ``out``.
    """
    kk = 1 << k
    maskk = kk - 1
    hsize = kk * kk - kk
    n = uniforms.shape[0]
    states = np.searchsorted(cum, uniforms, side="right")
    seq = np.empty(n + 1, dtype=np.int64)
    seq[0] = carry[0]
    seq[1:] = states
    cur = seq[:-1]
    nxt = seq[1:]

    regen = (cur == 0) & (nxt == 0)
    bnd = np.flatnonzero(regen)
    n_emit = bnd.shape[0]
    seg = np.cumsum(regen)  # segment index of transition i (0 = carried-over)

    accmat = np.zeros((n_emit + 1, 3 * hsize), dtype=np.int64)
    for v, shift in enumerate((2 * k, k, 0)):
        y = (cur >> shift) & maskk
        z = (nxt >> shift) & maskk
        valid = y != maskk
        code = v * hsize + y[valid] * kk + z[valid]
        np.add.at(accmat, (seg[valid], code), 1)

    if n_emit:
        out[0, 0] = carry[1] + bnd[0]
        out[0, 1:] = carry[2:] + accmat[0]
        if n_emit > 1:
            out[1:n_emit, 0] = np.diff(bnd)
            out[1:n_emit, 1:] = accmat[1 : n_emit]
        carry[0] = seq[-1]
        carry[1] = n - bnd[-1]
        carry[2:] = accmat[n_emit]
    else:
        carry[0] = seq[-1]
        carry[1] += n
        carry[2:] += accmat[0]
    return int(n_emit)
