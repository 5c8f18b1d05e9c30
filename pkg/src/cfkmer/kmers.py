"""k-mer count vectors, non-overlapping transitions, and their algebra.

Conventions, used everywhere in this package:

* a binary sequence is a string of '0'/'1', a sequence of ints, or a NumPy
  array of {0,1};
* a k-mer is encoded as the integer whose base-2 numeral (most significant
  bit first) spells the word, so coordinate ``j`` of a count vector is the
  count of the k-mer with code ``j``;
* for a sequence of length ``(mu+1)*k`` the non-overlapping blocks are
  ``x_0, ..., x_mu`` and ``N[y, z]`` counts adjacent block pairs ``(y, z)``.

The restricted index set H drops every pair whose source block is the
all-ones word; since that word has the largest code, the H entries of a
dense table are simply its first ``2^k - 1`` rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "as_bits",
    "kmer_string",
    "kmer_count_vector",
    "count_kmers_batch",
    "hat_f",
    "split_nonoverlapping",
    "transition_counts",
    "TransitionTable",
    "RestrictedTransitions",
    "reconstruct_counts",
    "theta_pairs",
    "check_flow",
    "FlowReport",
    "project_to_H",
    "restore_from_H",
    "h_size",
    "ZStatistic",
    "ZPrimeStatistic",
    "assemble_z",
    "assemble_z_prime",
    "z_from_z_prime",
    "flow_constraint_matrix",
    "rational_rank",
    "count_vector_csv",
    "transition_table_csv",
]


def as_bits(seq) -> np.ndarray:
    """Normalize a sequence (str, iterable, or array) to a uint8 bit array."""
    if isinstance(seq, np.ndarray):
        bits = seq.astype(np.uint8, copy=False)
    elif isinstance(seq, str):
        bits = np.frombuffer(seq.encode("ascii"), dtype=np.uint8) - ord("0")
    else:
        bits = np.asarray(list(seq), dtype=np.uint8)
    if bits.size and not np.all(bits <= 1):
        raise ValueError("sequence digits must be 0 or 1")
    return bits


def kmer_string(code: int, k: int) -> str:
    """The k-mer spelled by ``code`` (MSB first)."""
    return format(code, f"0{k}b")


def kmer_count_vector(seq, k: int) -> np.ndarray:
    """Sliding-window k-mer counts; all-zero when the sequence is shorter than k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    bits = as_bits(seq)
    m = bits.size
    counts = np.zeros(1 << k, dtype=np.int64)
    if m < k:
        return counts
    codes = np.zeros(m - k + 1, dtype=np.int64)
    for j in range(k):
        codes = (codes << 1) | bits[j : j + m - k + 1]
    return np.bincount(codes, minlength=1 << k).astype(np.int64)


def count_kmers_batch(bits2d: np.ndarray, k: int) -> np.ndarray:
    """Row-wise k-mer counts for a (rows, m) bit matrix; returns (rows, 2^k)."""
    rows, m = bits2d.shape
    if m < k:
        return np.zeros((rows, 1 << k), dtype=np.int64)
    codes = np.zeros((rows, m - k + 1), dtype=np.int64)
    for j in range(k):
        codes = (codes << 1) | bits2d[:, j : j + m - k + 1]
    offset = codes + (np.arange(rows, dtype=np.int64)[:, None] << k)
    flat = np.bincount(offset.ravel(), minlength=rows << k)
    return flat.reshape(rows, 1 << k).astype(np.int64)


def hat_f(seq, k: int) -> tuple[np.ndarray, str]:
    """Count vector plus the last 2k digits, verbatim."""
    bits = as_bits(seq)
    if bits.size < 2 * k:
        raise ValueError(f"need length >= {2 * k}, got {bits.size}")
    tail = "".join(str(b) for b in bits[-2 * k :])
    return kmer_count_vector(bits, k), tail


def split_nonoverlapping(seq, k: int) -> tuple[int, ...]:
    """The mu+1 consecutive non-overlapping blocks, as k-mer codes."""
    bits = as_bits(seq)
    if bits.size == 0 or bits.size % k != 0:
        raise ValueError(f"length {bits.size} is not a positive multiple of k={k}")
    codes = np.zeros(bits.size // k, dtype=np.int64)
    for j in range(k):
        codes = (codes << 1) | bits[j::k]
    return tuple(int(c) for c in codes)


@dataclass(frozen=True)
class TransitionTable:
    """Dense table of non-overlapping transition counts; N[y, z], sum = mu."""

    N: np.ndarray
    mu: int

    def __post_init__(self):
        if self.N.sum() != self.mu:
            raise ValueError("transition counts must sum to mu")


@dataclass(frozen=True)
class RestrictedTransitions:
    """The H-restricted counts: rows of N whose source is not the all-ones word."""

    values: np.ndarray  # length 2^{2k} - 2^k, index = y * 2^k + z for y < 2^k - 1
    k: int


def h_size(k: int) -> int:
    return (1 << (2 * k)) - (1 << k)


def transition_counts(seq, k: int) -> TransitionTable:
    """Count adjacent non-overlapping block pairs of a length-(mu+1)k sequence."""
    blocks = split_nonoverlapping(seq, k)
    if len(blocks) < 2:
        raise ValueError("need at least two blocks (mu >= 1)")
    size = 1 << k
    N = np.zeros((size, size), dtype=np.int64)
    for y, z in zip(blocks[:-1], blocks[1:]):
        N[y, z] += 1
    return TransitionTable(N=N, mu=len(blocks) - 1)


def theta_pairs(a: int, w: int, k: int) -> list[tuple[int, int]]:
    """Offset-a window pairs: all (y, z) whose concatenation shows w at offset a.

    y carries an arbitrary a-bit prefix followed by the first k-a bits of w;
    z starts with the last a bits of w followed by an arbitrary (k-a)-bit
    suffix.  There are exactly 2^k such pairs, one per choice of the free
    bits.
    """
    if not (1 <= a <= k - 1):
        raise ValueError("offset a must be in 1..k-1")
    w_head = w >> a  # first k-a bits of w
    w_tail = w & ((1 << a) - 1)  # last a bits of w
    pairs = []
    for theta in range(1 << k):
        th_pre = theta >> (k - a)  # a free bits for y
        th_suf = theta & ((1 << (k - a)) - 1)  # k-a free bits for z
        y = (th_pre << (k - a)) | w_head
        z = (w_tail << (k - a)) | th_suf
        pairs.append((y, z))
    return pairs


def reconstruct_counts(x_mu: int, table: TransitionTable, k: int) -> np.ndarray:
    """Rebuild the sliding-window count vector from the last block and N.

    For every word w the count is: one if the final block is w, plus the
    number of transitions leaving w (offset-0 windows), plus, for each
    offset a in 1..k-1, the transitions whose pair straddles w at that
    offset.
    """
    size = 1 << k
    f = np.zeros(size, dtype=np.int64)
    for w in range(size):
        total = int(x_mu == w)
        total += int(table.N[w, :].sum())
        for a in range(1, k):
            for y, z in theta_pairs(a, w, k):
                total += int(table.N[y, z])
        f[w] = total
    return f


@dataclass(frozen=True)
class FlowReport:
    """Per-constraint verdicts for the flow equations and the total-sum equation."""

    flow_ok: dict
    sum_ok: bool
    details: dict

    @property
    def all_ok(self) -> bool:
        return self.sum_ok and all(self.flow_ok.values())


def check_flow(seq, k: int) -> FlowReport:
    """Verify in/out flow balance at every block value, and that N sums to mu."""
    blocks = split_nonoverlapping(seq, k)
    table = transition_counts(seq, k)
    x0, xmu = blocks[0], blocks[-1]
    size = 1 << k
    flow_ok = {}
    details = {}
    for z in range(size):
        into = int(x0 == z) + int(table.N[:, z].sum() - table.N[z, z])
        out = int(xmu == z) + int(table.N[z, :].sum() - table.N[z, z])
        flow_ok[z] = into == out
        details[z] = (into, out)
    sum_ok = int(table.N.sum()) == table.mu
    return FlowReport(flow_ok=flow_ok, sum_ok=sum_ok, details=details)


def project_to_H(table: TransitionTable) -> RestrictedTransitions:
    """Drop the rows whose source block is the all-ones word."""
    size = table.N.shape[0]
    k = size.bit_length() - 1
    return RestrictedTransitions(values=table.N[: size - 1, :].ravel().copy(), k=k)


def restore_from_H(
    restricted: RestrictedTransitions, x0: int, x_mu: int, mu: int
) -> TransitionTable:
    """Rebuild the full table from its H entries, the end blocks, and mu.

    The all-ones row is recovered one entry at a time from the flow
    equations, then its diagonal entry from the total-sum equation.  Inputs
    that did not arise from an actual sequence are rejected as soon as a
    recovered entry goes negative.
    """
    k = restricted.k
    size = 1 << k
    ones = size - 1
    N = np.zeros((size, size), dtype=np.int64)
    N[: size - 1, :] = restricted.values.reshape(size - 1, size)
    for z in range(size - 1):
        val = (
            int(x_mu == z)
            - int(x0 == z)
            + int(N[z, :].sum() - N[z, z])
            - int(N[:ones, z].sum() - N[z, z])
        )
        if val < 0:
            raise ValueError(
                f"inconsistent H-table: flow equation at z={kmer_string(z, k)} "
                f"yields negative N[ones, z] = {val}"
            )
        N[ones, z] = val
    rest = int(N.sum() - N[ones, ones])
    diag = mu - rest
    if diag < 0:
        raise ValueError(
            f"inconsistent H-table: total-sum equation yields negative "
            f"N[ones, ones] = {diag}"
        )
    N[ones, ones] = diag
    return TransitionTable(N=N, mu=mu)


@dataclass(frozen=True)
class ZStatistic:
    first_pair: tuple[int, int]  # (x_0, x_1)
    last_pair: tuple[int, int]  # (x_{mu-1}, x_mu)
    table: TransitionTable

    @property
    def mu(self) -> int:
        return self.table.mu

    def key(self) -> tuple:
        return (self.first_pair, self.last_pair, tuple(self.table.N.ravel()))


@dataclass(frozen=True)
class ZPrimeStatistic:
    first_pair: tuple[int, int]
    last_pair: tuple[int, int]
    restricted: RestrictedTransitions
    mu: int

    def key(self) -> tuple:
        return (self.first_pair, self.last_pair, tuple(self.restricted.values))


def assemble_z(seq, k: int) -> ZStatistic:
    blocks = split_nonoverlapping(seq, k)
    if len(blocks) < 2:
        raise ValueError("need mu >= 1")
    return ZStatistic(
        first_pair=(blocks[0], blocks[1]),
        last_pair=(blocks[-2], blocks[-1]),
        table=transition_counts(seq, k),
    )


def assemble_z_prime(seq, k: int) -> ZPrimeStatistic:
    z = assemble_z(seq, k)
    return ZPrimeStatistic(
        first_pair=z.first_pair,
        last_pair=z.last_pair,
        restricted=project_to_H(z.table),
        mu=z.mu,
    )


def z_from_z_prime(zp: ZPrimeStatistic) -> ZStatistic:
    """Invert the H-projection: recover the full statistic (needs mu, carried)."""
    table = restore_from_H(zp.restricted, zp.first_pair[0], zp.last_pair[1], zp.mu)
    return ZStatistic(first_pair=zp.first_pair, last_pair=zp.last_pair, table=table)


def flow_constraint_matrix(k: int) -> list[list[Fraction]]:
    """Coefficient rows of the 2^k flow equations plus the total-sum equation.

    Variables are the 2^{2k} transition counts in (y, z) order; the flow
    row for z puts +1 on incoming N[y, z] (y != z) and -1 on outgoing
    N[z, y'] (y' != z); the sum row is all ones.
    """
    size = 1 << k
    rows = []
    for z in range(size):
        row = [Fraction(0)] * (size * size)
        for y in range(size):
            if y != z:
                row[y * size + z] += 1
                row[z * size + y] -= 1
        rows.append(row)
    rows.append([Fraction(1)] * (size * size))
    return rows


def rational_rank(rows: Iterable[Sequence[Fraction]]) -> int:
    """Exact rank by Gaussian elimination over the rationals."""
    mat = [list(map(Fraction, r)) for r in rows]
    if not mat:
        return 0
    ncols = len(mat[0])
    rank = 0
    col = 0
    while rank < len(mat) and col < ncols:
        pivot = next((r for r in range(rank, len(mat)) if mat[r][col] != 0), None)
        if pivot is None:
            col += 1
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        inv = mat[rank][col]
        mat[rank] = [v / inv for v in mat[rank]]
        for r in range(len(mat)):
            if r != rank and mat[r][col] != 0:
                factor = mat[r][col]
                mat[r] = [a - factor * b for a, b in zip(mat[r], mat[rank])]
        rank += 1
        col += 1
    return rank


def count_vector_csv(counts: np.ndarray, k: int) -> str:
    """One-row CSV with k-mer string headers in index order."""
    header = ",".join(kmer_string(j, k) for j in range(1 << k))
    return header + "\n" + ",".join(str(int(c)) for c in counts) + "\n"


def transition_table_csv(table: TransitionTable) -> str:
    """CSV of the dense table; first column is the source k-mer."""
    size = table.N.shape[0]
    k = size.bit_length() - 1
    lines = ["source," + ",".join(kmer_string(j, k) for j in range(size))]
    for y in range(size):
        lines.append(
            kmer_string(y, k) + "," + ",".join(str(int(v)) for v in table.N[y])
        )
    return "\n".join(lines) + "\n"
