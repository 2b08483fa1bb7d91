"""p-party secret sharing of point functions for anonymous writes.

A point function is zero everywhere except one index alpha, where it
equals beta. Each writer splits such a function into p keys, one per
server; XORing all servers' evaluations at any index x reconstructs
f(x), while any p-1 keys look like random noise.

The construction views the 2^n-index domain as a grid of 2^ceil(n/2)
rows by 2^floor(n/2) columns. Per row there are 2^(p-1) random 16-byte
seeds, each expanding through a keystream generator to a full row of
output bytes, plus 2^(p-1) shared correction words of the same width.
Every party holds a per-row selection mask saying which seed/word pairs
it XORs together. Stacked across parties, each selection column has even
parity on ordinary rows (so expansions cancel pairwise) and odd parity
on alpha's row, where the correction words are constrained so the
surviving combination equals beta at alpha's column and zero elsewhere.
Unselected seed slots hold per-party random filler so no single key
carries the full seed material of any row.

Servers accumulate full evaluations of every key received during an
epoch into a delta database, then exchange deltas; the XOR of all deltas
is the same plaintext database on every server.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass, field
from itertools import combinations
from random import Random

import numpy as np

from . import crypto

SEED_LEN = 16
# Slot header: u16 message length followed by its ones' complement.
# The redundant half makes a random slot pass validation with
# probability ~2^-32 instead of ~2^-8, so partial or garbled databases
# never decode as legitimate messages.
SLOT_HEADER_LEN = 4


class SealedEpochError(Exception):
    """Accumulation attempted on an epoch that is no longer open."""


class EpochInvalid(Exception):
    """Servers disagree on the client set; the epoch is discarded."""


@dataclass(frozen=True)
class DpfParams:
    """Domain, payload and party geometry for one point-function family."""

    input_bits: int
    output_len: int
    party_count: int

    def __post_init__(self) -> None:
        if not 1 <= self.input_bits <= 24:
            raise ValueError(f"input_bits must be in [1, 24], got {self.input_bits}")
        if self.output_len < 1:
            raise ValueError("output_len must be >= 1")
        if self.party_count < 2:
            raise ValueError("party_count must be >= 2")

    @property
    def domain_size(self) -> int:
        return 1 << self.input_bits

    @property
    def grid_rows(self) -> int:
        return 1 << ((self.input_bits + 1) // 2)

    @property
    def grid_cols(self) -> int:
        return 1 << (self.input_bits // 2)

    @property
    def seeds_per_row(self) -> int:
        return 1 << (self.party_count - 1)


@dataclass
class DpfKey:
    """One party's share of a point function."""

    party_index: int
    input_bits: int
    output_len: int
    party_count: int
    row_seeds: list[list[bytes]]  # grid_rows x seeds_per_row, 16B each
    correction_words: list[bytes]  # seeds_per_row entries, grid_cols*output_len each
    row_bits: list[int]  # per row, a seeds_per_row-bit selection mask

    @property
    def params(self) -> DpfParams:
        return DpfParams(self.input_bits, self.output_len, self.party_count)

    def to_bytes(self) -> bytes:
        p = self.params
        out = bytearray()
        out += bytes([self.party_index, self.input_bits, self.party_count])
        out += self.output_len.to_bytes(4, "little")
        for row in self.row_seeds:
            for seed in row:
                out += seed
        for word in self.correction_words:
            out += word
        mask_bytes = (p.seeds_per_row + 7) // 8
        for bits in self.row_bits:
            out += bits.to_bytes(mask_bytes, "little")
        return bytes(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DpfKey":
        if len(blob) < 7:
            raise ValueError("truncated key encoding")
        party_index, input_bits, party_count = blob[0], blob[1], blob[2]
        output_len = int.from_bytes(blob[3:7], "little")
        p = DpfParams(input_bits, output_len, party_count)
        if party_index >= party_count:
            raise ValueError(f"party index {party_index} outside {party_count} parties")
        off = 7
        row_seeds = []
        for _ in range(p.grid_rows):
            row = []
            for _ in range(p.seeds_per_row):
                row.append(blob[off : off + SEED_LEN])
                off += SEED_LEN
            row_seeds.append(row)
        word_len = p.grid_cols * p.output_len
        correction_words = []
        for _ in range(p.seeds_per_row):
            correction_words.append(blob[off : off + word_len])
            off += word_len
        mask_bytes = (p.seeds_per_row + 7) // 8
        row_bits = []
        for _ in range(p.grid_rows):
            row_bits.append(int.from_bytes(blob[off : off + mask_bytes], "little"))
            off += mask_bytes
        if off != len(blob):
            raise ValueError("trailing bytes in key encoding")
        return cls(
            party_index, input_bits, output_len, party_count,
            row_seeds, correction_words, row_bits,
        )


def _resolve_rng(rng: Random | int | None) -> Random:
    if isinstance(rng, Random):
        return rng
    if rng is None:
        return Random(secrets.randbits(128))
    return Random(rng)


def _xor_bytes(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def _even_odd_patterns(party_count: int) -> tuple[list[int], list[int]]:
    even = [v for v in range(1 << party_count) if bin(v).count("1") % 2 == 0]
    odd = [v for v in range(1 << party_count) if bin(v).count("1") % 2 == 1]
    return even, odd


def _sample_selection_matrix(
    rng: Random, party_count: int, slots: int, special: bool
) -> list[int]:
    """Per-party selection masks for one row.

    Column parity is odd on the special row and even elsewhere. Sampling
    rejects degenerate matrices: no party may select nothing, and no
    strict subset of parties may combine to the empty selection (its
    share of the row would be all zeros) or, on the special row, to the
    full selection (it would reconstruct the row outright).
    """
    even, odd = _even_odd_patterns(party_count)
    pool = odd if special else even
    full_mask = (1 << slots) - 1
    for _ in range(10_000):
        cols = [rng.choice(pool) for _ in range(slots)]
        rows = [
            sum(((col >> t) & 1) << l for l, col in enumerate(cols))
            for t in range(party_count)
        ]
        ok = True
        for size in range(1, party_count):
            for subset in combinations(range(party_count), size):
                x = 0
                for t in subset:
                    x ^= rows[t]
                if x == 0 or (special and x == full_mask):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return rows
    raise RuntimeError("could not sample a non-degenerate selection matrix")


def dpf_gen(
    alpha: int, beta: bytes, params: DpfParams, rng: Random | int | None = None
) -> list[DpfKey]:
    """Split the point function (alpha -> beta) into party_count keys."""
    if not 0 <= alpha < params.domain_size:
        raise ValueError(f"alpha {alpha} outside domain of size {params.domain_size}")
    if len(beta) != params.output_len:
        raise ValueError(f"beta must be {params.output_len} bytes, got {len(beta)}")
    rng = _resolve_rng(rng)
    rows, cols = params.grid_rows, params.grid_cols
    slots = params.seeds_per_row
    word_len = cols * params.output_len
    special_row, special_col = divmod(alpha, cols)

    true_seeds = [[rng.randbytes(SEED_LEN) for _ in range(slots)] for _ in range(rows)]

    # Correction words: all but the last are random; the last is pinned so
    # the full XOR over the special row's expansions and all words leaves
    # beta at the special column and zero elsewhere.
    words = [rng.randbytes(word_len) for _ in range(slots - 1)]
    target = bytearray(word_len)
    start = special_col * params.output_len
    target[start : start + params.output_len] = beta
    last = bytes(target)
    for seed in true_seeds[special_row]:
        last = _xor_bytes(last, crypto.keystream(seed, word_len))
    for word in words:
        last = _xor_bytes(last, word)
    words.append(last)

    selections = [
        _sample_selection_matrix(rng, params.party_count, slots, i == special_row)
        for i in range(rows)
    ]

    keys = []
    for t in range(params.party_count):
        seeds_t = []
        for i in range(rows):
            mask = selections[i][t]
            seeds_t.append(
                [
                    true_seeds[i][l] if (mask >> l) & 1 else rng.randbytes(SEED_LEN)
                    for l in range(slots)
                ]
            )
        keys.append(
            DpfKey(
                party_index=t,
                input_bits=params.input_bits,
                output_len=params.output_len,
                party_count=params.party_count,
                row_seeds=seeds_t,
                correction_words=list(words),
                row_bits=[selections[i][t] for i in range(rows)],
            )
        )
    return keys


def _expand_row(key: DpfKey, row: int) -> bytes:
    """XOR of the selected seed expansions and correction words for one row."""
    p = key.params
    word_len = p.grid_cols * p.output_len
    acc = bytes(word_len)
    mask = key.row_bits[row]
    for l in range(p.seeds_per_row):
        if (mask >> l) & 1:
            acc = _xor_bytes(acc, crypto.keystream(key.row_seeds[row][l], word_len))
            acc = _xor_bytes(acc, key.correction_words[l])
    return acc


def dpf_eval(key: DpfKey, x: int) -> bytes:
    """This party's share of f(x)."""
    p = key.params
    if not 0 <= x < p.domain_size:
        raise ValueError(f"x {x} outside domain of size {p.domain_size}")
    row, col = divmod(x, p.grid_cols)
    expanded = _expand_row(key, row)
    return expanded[col * p.output_len : (col + 1) * p.output_len]


@dataclass
class ShareDatabase:
    """2^n slots of output_len bytes, combinable slotwise by XOR."""

    slots: np.ndarray  # uint8, shape (2^n, output_len)

    @classmethod
    def zeros(cls, params: DpfParams) -> "ShareDatabase":
        return cls(np.zeros((params.domain_size, params.output_len), dtype=np.uint8))

    @classmethod
    def from_bytes(cls, blob: bytes, params: DpfParams) -> "ShareDatabase":
        expected = params.domain_size * params.output_len
        if len(blob) != expected:
            raise ValueError(f"database must be {expected} bytes, got {len(blob)}")
        arr = np.frombuffer(blob, dtype=np.uint8).reshape(
            params.domain_size, params.output_len
        )
        return cls(arr.copy())

    def copy(self) -> "ShareDatabase":
        return ShareDatabase(self.slots.copy())

    def xor_update(self, other: "ShareDatabase") -> None:
        if self.slots.shape != other.slots.shape:
            raise ValueError("database dimensions differ")
        np.bitwise_xor(self.slots, other.slots, out=self.slots)

    def slot(self, index: int) -> bytes:
        return self.slots[index].tobytes()

    def to_bytes(self) -> bytes:
        return self.slots.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ShareDatabase):
            return NotImplemented
        return self.slots.shape == other.slots.shape and bool(
            np.array_equal(self.slots, other.slots)
        )


def _counter_blocks(nblocks: int) -> np.ndarray:
    ctr = np.zeros((nblocks, SEED_LEN), dtype=np.uint8)
    ctr[:, 8:] = np.arange(nblocks, dtype=">u8").view(np.uint8).reshape(nblocks, 8)
    return ctr


def eval_full(key: DpfKey) -> ShareDatabase:
    """Evaluate every index, one batched expansion per selected seed.

    Matches dpf_eval pointwise but amortizes the keystream work: all
    selected seeds across all rows go through one chunked AES pass, and
    per-row XOR folding is vectorized over selection multiplicity, so
    runtime stays proportional to domain_size * output_len.
    """
    p = key.params
    word_len = p.grid_cols * p.output_len
    nblocks = (word_len + SEED_LEN - 1) // SEED_LEN

    sel_words: list[int] = []
    sel_seeds: list[bytes] = []
    row_starts = []
    for i in range(p.grid_rows):
        row_starts.append(len(sel_seeds))
        mask = key.row_bits[i]
        if mask == 0:
            # gen never emits empty selections; guard the reduction below
            raise ValueError("key has a row with no selected seeds")
        for l in range(p.seeds_per_row):
            if (mask >> l) & 1:
                sel_words.append(l)
                sel_seeds.append(key.row_seeds[i][l])

    k = len(sel_seeds)
    seeds_arr = np.frombuffer(b"".join(sel_seeds), dtype=np.uint8).reshape(k, SEED_LEN)
    ctr = _counter_blocks(nblocks)
    words_arr = np.frombuffer(b"".join(key.correction_words), dtype=np.uint8).reshape(
        p.seeds_per_row, word_len
    )
    sel_words_arr = np.array(sel_words)
    starts = np.append(np.array(row_starts), k)
    counts = np.diff(np.array(starts))

    # Fixed-size chunks keep the working set cache-resident for any
    # output_len, so cost per byte (and hence the size/time trend) holds.
    bytes_per_row = max(1, (k * nblocks * SEED_LEN) // p.grid_rows)
    rows_per_chunk = max(1, (1 << 17) // bytes_per_row)

    row_values = np.empty((p.grid_rows, word_len), dtype=np.uint8)
    for r0 in range(0, p.grid_rows, rows_per_chunk):
        r1 = min(p.grid_rows, r0 + rows_per_chunk)
        i0, i1 = starts[r0], starts[r1]
        x = seeds_arr[i0:i1, None, :] ^ ctr[None, :, :]
        y = np.empty_like(x)
        crypto.prg_permute_into(x.reshape(-1).data, y.reshape(-1).data)
        y ^= x
        streams = y.reshape(i1 - i0, nblocks * SEED_LEN)[:, :word_len]
        contrib = streams ^ words_arr[sel_words_arr[i0:i1]]

        local_starts = starts[r0:r1] - i0
        row_values[r0:r1] = contrib[local_starts]
        local_counts = counts[r0:r1]
        for extra in range(1, int(local_counts.max())):
            rows = np.nonzero(local_counts > extra)[0]
            row_values[r0 + rows] ^= contrib[local_starts[rows] + extra]
    return ShareDatabase(row_values.reshape(p.domain_size, p.output_len))


@dataclass
class Epoch:
    """One server's accumulation window for a single epoch id."""

    epoch_id: int
    params: DpfParams
    received_keys: list[DpfKey] = field(default_factory=list)
    client_ids: list[str] = field(default_factory=list)
    delta_share: ShareDatabase = None  # type: ignore[assignment]
    state: str = "open"

    def __post_init__(self) -> None:
        if self.delta_share is None:
            self.delta_share = ShareDatabase.zeros(self.params)


def server_accumulate(epoch: Epoch, key: DpfKey, client_id: str | None = None) -> Epoch:
    """Fold one key's full evaluation into the epoch's delta share."""
    if epoch.state != "open":
        raise SealedEpochError(f"epoch {epoch.epoch_id} is {epoch.state}")
    if key.params != epoch.params:
        raise ValueError("key parameters do not match the epoch")
    epoch.delta_share.xor_update(eval_full(key))
    epoch.received_keys.append(key)
    if client_id is not None:
        epoch.client_ids.append(client_id)
    return epoch


def seal_epoch(epoch: Epoch) -> Epoch:
    if epoch.state != "open":
        raise SealedEpochError(f"epoch {epoch.epoch_id} is {epoch.state}")
    epoch.state = "sealed"
    return epoch


def combine_epoch(local: Epoch, remote_deltas: list[ShareDatabase]) -> ShareDatabase:
    """XOR the local delta with every remote delta; identical on all servers."""
    if local.state != "sealed":
        raise SealedEpochError(f"epoch {local.epoch_id} must be sealed, is {local.state}")
    combined = local.delta_share.copy()
    for delta in remote_deltas:
        combined.xor_update(delta)
    local.state = "combined"
    return combined


def encode_slot(message: bytes, output_len: int) -> bytes:
    """Length-prefixed, complement-checked, zero-padded slot payload."""
    capacity = output_len - SLOT_HEADER_LEN
    if capacity < 0:
        raise ValueError(f"output_len {output_len} below header size")
    if len(message) > capacity:
        raise ValueError(f"message of {len(message)} bytes exceeds capacity {capacity}")
    n = len(message)
    header = n.to_bytes(2, "little") + (n ^ 0xFFFF).to_bytes(2, "little")
    return (header + message).ljust(output_len, b"\x00")


def decode_slot(slot: bytes) -> tuple[str, bytes | None]:
    """Classify a combined slot: ('empty'|'message'|'garbled', payload)."""
    if not any(slot):
        return "empty", None
    n = int.from_bytes(slot[0:2], "little")
    comp = int.from_bytes(slot[2:4], "little")
    if comp != (n ^ 0xFFFF) or n > len(slot) - SLOT_HEADER_LEN:
        return "garbled", None
    if any(slot[SLOT_HEADER_LEN + n :]):
        return "garbled", None
    return "message", slot[SLOT_HEADER_LEN : SLOT_HEADER_LEN + n]


def client_check_in(
    message: bytes, params: DpfParams, rng: Random | int | None = None
) -> tuple[int, list[DpfKey]]:
    """Write a message at a uniformly random index: returns (index, keys)."""
    rng = _resolve_rng(rng)
    beta = encode_slot(message, params.output_len)
    index = rng.randrange(params.domain_size)
    return index, dpf_gen(index, beta, params, rng)


def membership_digest(client_ids: list[str]) -> bytes:
    h = hashlib.sha256()
    for cid in sorted(client_ids):
        h.update(cid.encode())
        h.update(b"\x00")
    return h.digest()


class EpochServer:
    """Simulated server endpoint: SUBMIT / SEAL / EXCHANGE / OUTPUT.

    Before sealing, every cooperating server must have received the same
    client set; EXCHANGE carries a membership digest and any mismatch
    invalidates the epoch rather than producing a skewed database.
    """

    def __init__(self, server_id: int, params: DpfParams, peer_count: int):
        if not 0 <= server_id < params.party_count:
            raise ValueError("server_id outside party range")
        self.server_id = server_id
        self.params = params
        self.peer_count = peer_count
        self._epochs: dict[int, Epoch] = {}
        self._remote_deltas: dict[int, list[ShareDatabase]] = {}
        self._outputs: dict[int, bytes] = {}

    def _epoch(self, epoch_id: int) -> Epoch:
        if epoch_id not in self._epochs:
            self._epochs[epoch_id] = Epoch(epoch_id=epoch_id, params=self.params)
            self._remote_deltas[epoch_id] = []
        return self._epochs[epoch_id]

    def submit(self, epoch_id: int, key: DpfKey, client_id: str) -> bool:
        if key.party_index != self.server_id:
            raise ValueError(
                f"key for party {key.party_index} sent to server {self.server_id}"
            )
        server_accumulate(self._epoch(epoch_id), key, client_id)
        return True

    def seal(self, epoch_id: int) -> None:
        seal_epoch(self._epoch(epoch_id))

    def delta_bytes(self, epoch_id: int) -> bytes:
        epoch = self._epoch(epoch_id)
        if epoch.state == "open":
            raise SealedEpochError("seal the epoch before exchanging deltas")
        return epoch.delta_share.to_bytes()

    def membership(self, epoch_id: int) -> bytes:
        return membership_digest(self._epoch(epoch_id).client_ids)

    def exchange(self, epoch_id: int, delta: bytes, membership: bytes) -> None:
        epoch = self._epoch(epoch_id)
        if epoch.state == "open":
            raise SealedEpochError("seal the epoch before exchanging deltas")
        if membership != self.membership(epoch_id):
            raise EpochInvalid(
                f"epoch {epoch_id}: client sets differ across servers"
            )
        remotes = self._remote_deltas[epoch_id]
        if len(remotes) >= self.peer_count - 1:
            raise EpochInvalid(f"epoch {epoch_id}: all remote deltas already received")
        remotes.append(ShareDatabase.from_bytes(delta, self.params))

    def output(self, epoch_id: int) -> bytes:
        if epoch_id in self._outputs:
            return self._outputs[epoch_id]
        epoch = self._epoch(epoch_id)
        remotes = self._remote_deltas[epoch_id]
        if len(remotes) != self.peer_count - 1:
            raise EpochInvalid(
                f"epoch {epoch_id}: have {len(remotes)} of "
                f"{self.peer_count - 1} remote deltas"
            )
        combined = combine_epoch(epoch, remotes)
        self._outputs[epoch_id] = combined.to_bytes()
        return self._outputs[epoch_id]
