"""Quasi-cyclic LDPC codes: shift-table parsing, lifting, systematic
encoding, and log-domain sum-product decoding.

Base matrices ship as plain-text shift tables (grammar in
docs/base_matrices.md). An entry s >= 0 lifts to the Z x Z identity
cyclically shifted by s, so a block acting on a length-Z vector x is
np.roll(x, -s); an entry of -1 lifts to the zero block.

The shipped tables use a dual-diagonal parity arrangement, which the
encoder recognizes and solves in O(n) by forward substitution. Any
other full-rank table falls back to a cached dense GF(2) solve of the
parity submatrix.
"""

import importlib.resources
import os
from dataclasses import dataclass, field

import numpy as np

MAX_ITER_DEFAULT = 50
_TANH_CLIP = 0.999999999


class LdpcError(Exception):
    """Malformed shift table or invalid code construction."""


# ---------------------------------------------------------------------------
# shift tables


def parse_base_table(text):
    """Parse a shift table. Returns (base matrix, lifting size Z).

    Grammar: '#' starts a comment; the first tokens are 'Z <int>', then
    '<rows> <cols>', then rows*cols shift entries in row-major order.
    """
    tokens = []
    for line in text.splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            tokens.extend(body.split())
    if len(tokens) < 4 or tokens[0] != "Z":
        raise LdpcError("shift table must start with a 'Z <lift>' header")
    try:
        z = int(tokens[1])
        rows, cols = int(tokens[2]), int(tokens[3])
        entries = [int(t) for t in tokens[4:]]
    except ValueError:
        raise LdpcError("shift table contains a non-integer token") from None
    if rows < 1 or cols < 1:
        raise LdpcError("shift table dimensions must be positive")
    if len(entries) != rows * cols:
        raise LdpcError(
            f"expected {rows * cols} shift entries, found {len(entries)}"
        )
    return np.array(entries, dtype=np.int64).reshape(rows, cols), z


def load_base_table(name):
    """Load a shift table from a filesystem path or the bundled tables."""
    if os.path.exists(name):
        with open(name, "r", encoding="ascii") as fh:
            return parse_base_table(fh.read())
    resource = importlib.resources.files("parastream") / "tables" / name
    if not resource.is_file():
        raise LdpcError(f"no such shift table: {name!r}")
    return parse_base_table(resource.read_text(encoding="ascii"))


# ---------------------------------------------------------------------------
# GF(2) helpers on rows packed into uint64 words


def _pack_rows(dense):
    rows, cols = dense.shape
    words = (cols + 63) // 64
    padded = np.zeros((rows, words * 64), dtype=np.uint8)
    padded[:, :cols] = dense & 1
    weights = np.left_shift(np.uint64(1), np.arange(64, dtype=np.uint64))
    return (padded.reshape(rows, words, 64).astype(np.uint64) * weights).sum(
        axis=2, dtype=np.uint64
    )


def _unpack_rows(packed, cols):
    shifts = np.arange(64, dtype=np.uint64)
    bits = (packed[:, :, None] >> shifts) & np.uint64(1)
    return bits.reshape(packed.shape[0], -1)[:, :cols].astype(np.uint8)


def _gf2_rank(dense):
    mat = _pack_rows(dense)
    rows, cols = dense.shape
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        word, bit = divmod(col, 64)
        column = (mat[rank:, word] >> np.uint64(bit)) & np.uint64(1)
        hits = np.flatnonzero(column)
        if hits.size == 0:
            continue
        pivot = rank + hits[0]
        if pivot != rank:
            mat[[rank, pivot]] = mat[[pivot, rank]]
        below = rank + 1 + np.flatnonzero(
            (mat[rank + 1 :, word] >> np.uint64(bit)) & np.uint64(1)
        )
        mat[below] ^= mat[rank]
        rank += 1
    return rank


def _gf2_inverse(square):
    size = square.shape[0]
    aug = np.concatenate([square, np.eye(size, dtype=np.uint8)], axis=1)
    mat = _pack_rows(aug)
    for col in range(size):
        word, bit = divmod(col, 64)
        hits = col + np.flatnonzero(
            (mat[col:, word] >> np.uint64(bit)) & np.uint64(1)
        )
        if hits.size == 0:
            raise LdpcError(
                "parity submatrix is singular; no systematic encoding"
            )
        pivot = hits[0]
        if pivot != col:
            mat[[col, pivot]] = mat[[pivot, col]]
        others = np.flatnonzero((mat[:, word] >> np.uint64(bit)) & np.uint64(1))
        others = others[others != col]
        mat[others] ^= mat[col]
    return _unpack_rows(mat, 2 * size)[:, size:]


# ---------------------------------------------------------------------------
# construction


@dataclass
class ParityCheckMatrix:
    base: np.ndarray
    z: int
    n: int
    k: int
    edge_row: np.ndarray
    edge_col: np.ndarray
    row_ptr: np.ndarray
    col_perm: np.ndarray
    col_ptr: np.ndarray
    structured: tuple | None
    _parity_inv: np.ndarray | None = field(default=None, repr=False)

    @property
    def rate(self):
        return self.k / self.n

    def dense(self):
        """Materialize H as a dense 0/1 matrix (tests and rank checks)."""
        h = np.zeros((self.n - self.k, self.n), dtype=np.uint8)
        h[self.edge_row, self.edge_col] = 1
        return h


def _detect_dual_diagonal(base):
    """Recognize the shipped parity arrangement.

    The first parity column carries a paired shift s0 in the top and
    bottom rows plus a zero shift in one interior row; the remaining
    parity columns form a zero-shift staircase. Returns (s0,
    interior_row) or None.
    """
    m, n_b = base.shape
    split = n_b - m
    if m < 3 or split < 1:
        return None
    first = base[:, split]
    nonzero = np.flatnonzero(first >= 0)
    if nonzero.size != 3 or nonzero[0] != 0 or nonzero[-1] != m - 1:
        return None
    interior = int(nonzero[1])
    s0 = int(first[0])
    if first[m - 1] != s0 or first[interior] != 0 or s0 < 1:
        return None
    for j in range(1, m):
        col = base[:, split + j]
        hits = np.flatnonzero(col >= 0)
        if not np.array_equal(hits, [j - 1, j]) or col[hits].any():
            return None
    return s0, interior


def build_qc_ldpc(base, z):
    """Lift a base shift matrix by Z and verify full row rank."""
    base = np.asarray(base, dtype=np.int64)
    if base.ndim != 2:
        raise LdpcError("base matrix must be two-dimensional")
    if z < 1:
        raise LdpcError("lifting size must be positive")
    if base.min() < -1 or base.max() >= z:
        raise LdpcError(f"shifts must lie in [-1, {z})")
    m_b, n_b = base.shape
    if n_b < m_b:
        raise LdpcError("base matrix has more rows than columns")

    rows_parts, cols_parts = [], []
    offsets = np.arange(z)
    for r in range(m_b):
        active = np.flatnonzero(base[r] >= 0)
        if active.size == 0:
            raise LdpcError(f"base row {r} is empty")
        shifts = base[r, active]
        cols = active[None, :] * z + (offsets[:, None] + shifts[None, :]) % z
        cols = np.sort(cols, axis=1)
        rows = np.repeat(r * z + offsets, active.size)
        rows_parts.append(rows)
        cols_parts.append(cols.reshape(-1))
    edge_row = np.concatenate(rows_parts)
    edge_col = np.concatenate(cols_parts)

    n, m = n_b * z, m_b * z
    col_counts = np.bincount(edge_col, minlength=n)
    if (col_counts == 0).any():
        raise LdpcError("expanded matrix has an empty column")
    row_counts = np.bincount(edge_row, minlength=m)
    row_ptr = np.concatenate([[0], np.cumsum(row_counts)]).astype(np.int64)
    col_perm = np.argsort(edge_col, kind="stable")
    col_ptr = np.concatenate([[0], np.cumsum(col_counts)]).astype(np.int64)

    pcm = ParityCheckMatrix(
        base=base,
        z=z,
        n=n,
        k=n - m,
        edge_row=edge_row,
        edge_col=edge_col,
        row_ptr=row_ptr,
        col_perm=col_perm,
        col_ptr=col_ptr,
        structured=_detect_dual_diagonal(base),
    )
    if _gf2_rank(pcm.dense()) != m:
        raise LdpcError("expanded matrix is rank deficient")
    return pcm


# ---------------------------------------------------------------------------
# encoding


def syndrome(pcm, bits):
    """Per-check parity of `bits` ([n] or [frames, n]); 0 means satisfied."""
    bits = np.atleast_2d(np.asarray(bits)).astype(np.int64)
    if bits.shape[1] != pcm.n:
        raise LdpcError(f"expected {pcm.n} bits, got {bits.shape[1]}")
    sums = np.add.reduceat(bits[:, pcm.edge_col], pcm.row_ptr[:-1], axis=1)
    return (sums % 2).astype(np.uint8)


def _encode_structured(pcm, info_bits):
    s0, interior = pcm.structured
    m_b = pcm.base.shape[0]
    split = pcm.base.shape[1] - m_b
    frames = info_bits.shape[0]
    blocks = info_bits.reshape(frames, split, pcm.z)

    lam = np.zeros((frames, m_b, pcm.z), dtype=np.uint8)
    for r in range(m_b):
        for c in range(split):
            shift = pcm.base[r, c]
            if shift >= 0:
                lam[:, r] ^= np.roll(blocks[:, c], -shift, axis=1)

    parity = np.zeros((frames, m_b, pcm.z), dtype=np.uint8)
    p0 = np.bitwise_xor.reduce(lam, axis=1)
    parity[:, 0] = p0
    parity[:, 1] = lam[:, 0] ^ np.roll(p0, -s0, axis=1)
    for r in range(1, m_b - 1):
        nxt = lam[:, r] ^ parity[:, r]
        if r == interior:
            nxt = nxt ^ p0
        parity[:, r + 1] = nxt
    return parity.reshape(frames, m_b * pcm.z)


def _encode_generic(pcm, info_bits):
    if pcm._parity_inv is None:
        m = pcm.n - pcm.k
        sub = np.zeros((m, m), dtype=np.uint8)
        sel = pcm.edge_col >= pcm.k
        sub[pcm.edge_row[sel], pcm.edge_col[sel] - pcm.k] = 1
        pcm._parity_inv = _gf2_inverse(sub)
    padded = np.concatenate(
        [info_bits, np.zeros((info_bits.shape[0], pcm.n - pcm.k), np.uint8)],
        axis=1,
    )
    s = syndrome(pcm, padded)
    return (s.astype(np.int64) @ pcm._parity_inv.T.astype(np.int64) % 2).astype(
        np.uint8
    )


def ldpc_encode(pcm, info):
    """Systematically encode info bits; [k] or [frames, k] accepted."""
    info = np.asarray(info)
    single = info.ndim == 1
    info = np.atleast_2d(info).astype(np.uint8) & 1
    if info.shape[1] != pcm.k:
        raise LdpcError(f"expected {pcm.k} information bits, got {info.shape[1]}")
    if pcm.structured is not None:
        parity = _encode_structured(pcm, info)
    else:
        parity = _encode_generic(pcm, info)
    code = np.concatenate([info, parity], axis=1)
    if __debug__:
        assert not syndrome(pcm, code).any(), "encoder produced a non-codeword"
    return code[0] if single else code


# ---------------------------------------------------------------------------
# decoding


def ldpc_decode_bp(pcm, llr, max_iter=MAX_ITER_DEFAULT):
    """Log-domain sum-product decoding with early stopping.

    Accepts one LLR vector or a [frames, n] batch. Returns
    (hard bits, converged flag, iterations used) with matching
    leading shape. max_iter=0 yields the hard decisions of the input.
    """
    llr = np.asarray(llr, dtype=np.float64)
    single = llr.ndim == 1
    llr = np.atleast_2d(llr)
    if llr.shape[1] != pcm.n:
        raise LdpcError(f"expected {pcm.n} LLRs, got {llr.shape[1]}")
    frames = llr.shape[0]
    e_col = pcm.edge_col
    r_start = pcm.row_ptr[:-1]
    c_start = pcm.col_ptr[:-1]

    bits = (llr < 0).astype(np.uint8)
    converged = ~syndrome(pcm, bits).any(axis=1)
    iters = np.zeros(frames, dtype=np.int64)
    active = ~converged

    v2c = llr[:, e_col]
    iteration = 0
    while iteration < max_iter and active.any():
        iteration += 1
        msg = v2c[active]
        t = np.tanh(0.5 * msg)
        np.clip(t, -_TANH_CLIP, _TANH_CLIP, out=t)
        zero = t == 0.0
        sign = np.where(t < 0.0, -1.0, 1.0)
        logmag = np.log(np.abs(np.where(zero, 1.0, t)))

        neg = np.add.reduceat((sign < 0).astype(np.int64), r_start, axis=1)
        zeros = np.add.reduceat(zero.astype(np.int64), r_start, axis=1)
        logsum = np.add.reduceat(logmag, r_start, axis=1)

        e_row = pcm.edge_row
        other_zero = zeros[:, e_row] - zero
        magnitude = np.exp(logsum[:, e_row] - logmag)
        np.clip(magnitude, None, _TANH_CLIP, out=magnitude)
        row_sign = 1.0 - 2.0 * (neg[:, e_row] % 2)
        product = np.where(other_zero > 0, 0.0, row_sign * sign * magnitude)
        c2v = 2.0 * np.arctanh(product)

        col_sums = np.add.reduceat(c2v[:, pcm.col_perm], c_start, axis=1)
        total = llr[active] + col_sums
        v2c[active] = total[:, e_col] - c2v

        hard = (total < 0.0).astype(np.uint8)
        bits[active] = hard
        ok = ~syndrome(pcm, hard).any(axis=1)
        indices = np.flatnonzero(active)[ok]
        iters[indices] = iteration
        converged[indices] = True
        active[indices] = False

    iters[~converged] = iteration
    if single:
        return bits[0], bool(converged[0]), int(iters[0])
    return bits, converged, iters
