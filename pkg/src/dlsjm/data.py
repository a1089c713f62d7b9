"""Binary response matrices and the two multi-layer networks built from them.

Every person layer ``Y_i`` is the clique on the respondents who answered item
``i`` correctly, and every item layer ``U_k`` is the clique on the items that
respondent ``k`` answered correctly. Layers are never stored: they are cheap
products of columns (or rows) of ``X``, so the stacks below only materialize
them on request.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "InvalidResponseError",
    "DegenerateItemError",
    "ItemResponseMatrix",
    "PersonNetworkStack",
    "ItemNetworkStack",
    "DegreeProfile",
    "build_person_networks",
    "build_item_networks",
    "degree_profile",
    "read_csv",
    "write_csv",
    "read_binary",
    "write_binary",
    "load_matrix",
]

BINARY_MAGIC = b"DLSJMX01"


class InvalidResponseError(ValueError):
    """Raised when a response matrix is not a complete 0/1 table."""


class DegenerateItemError(ValueError):
    """Raised when an item has no correct responses (its position is undefined)."""

    def __init__(self, items: Sequence[int], labels: Optional[Sequence[str]] = None):
        self.items = list(items)
        names = [labels[i] for i in self.items] if labels is not None else self.items
        super().__init__(f"items with zero correct responses: {names}")


@dataclass(frozen=True)
class ItemResponseMatrix:
    """An ``n x p`` binary matrix, one respondent per row."""

    x: np.ndarray
    row_ids: Optional[tuple[str, ...]] = None
    col_ids: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        arr = np.asarray(self.x)
        if arr.ndim != 2:
            raise InvalidResponseError(f"expected a 2-D matrix, got shape {arr.shape}")
        if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
            raise InvalidResponseError("missing or non-finite responses are not supported")
        if not np.all((arr == 0) | (arr == 1)):
            raise InvalidResponseError("responses must be 0 or 1")
        n, p = arr.shape
        if n < 2 or p < 2:
            raise InvalidResponseError(f"need at least 2 respondents and 2 items, got {n}x{p}")
        arr = arr.astype(np.int8)
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)
        if self.row_ids is not None:
            if len(self.row_ids) != n:
                raise InvalidResponseError("row_ids length does not match n")
            object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))
        if self.col_ids is not None:
            if len(self.col_ids) != p:
                raise InvalidResponseError("col_ids length does not match p")
            object.__setattr__(self, "col_ids", tuple(str(c) for c in self.col_ids))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def person_scores(self) -> np.ndarray:
        return self.x.sum(axis=1, dtype=np.int64)

    @property
    def item_totals(self) -> np.ndarray:
        return self.x.sum(axis=0, dtype=np.int64)

    def degenerate_items(self) -> np.ndarray:
        return np.flatnonzero(self.item_totals == 0)

    def check_fittable(self) -> None:
        """Raise :class:`DegenerateItemError` if any item has no correct answer."""
        bad = self.degenerate_items()
        if bad.size:
            raise DegenerateItemError(bad.tolist(), self.col_ids)

    def zero_score_persons(self) -> np.ndarray:
        return np.flatnonzero(self.person_scores == 0)


@dataclass(frozen=True)
class PersonNetworkStack:
    """One ``n x n`` layer per item; ``y[i, k, l] = x[k, i] * x[l, i]`` off the diagonal."""

    responses: ItemResponseMatrix = field(repr=False)

    @property
    def n_layers(self) -> int:
        return self.responses.p

    def layer(self, i: int) -> np.ndarray:
        col = self.responses.x[:, i].astype(np.int8)
        y = np.outer(col, col)
        np.fill_diagonal(y, 0)
        return y

    def dense(self) -> np.ndarray:
        x = self.responses.x.astype(np.int8)
        y = np.einsum("ki,li->ikl", x, x)
        idx = np.arange(self.responses.n)
        y[:, idx, idx] = 0
        return y

    def edge_counts(self) -> np.ndarray:
        """Number of undirected edges per layer, ``C(c_i, 2)``."""
        c = self.responses.item_totals
        return c * (c - 1) // 2


@dataclass(frozen=True)
class ItemNetworkStack:
    """One ``p x p`` layer per respondent; ``u[k, i, j] = x[k, i] * x[k, j]`` off the diagonal."""

    responses: ItemResponseMatrix = field(repr=False)

    @property
    def n_layers(self) -> int:
        return self.responses.n

    def layer(self, k: int) -> np.ndarray:
        row = self.responses.x[k].astype(np.int8)
        u = np.outer(row, row)
        np.fill_diagonal(u, 0)
        return u

    def dense(self) -> np.ndarray:
        x = self.responses.x.astype(np.int8)
        u = np.einsum("ki,kj->kij", x, x)
        idx = np.arange(self.responses.p)
        u[:, idx, idx] = 0
        return u

    def edge_counts(self) -> np.ndarray:
        s = self.responses.person_scores
        return s * (s - 1) // 2


@dataclass(frozen=True)
class DegreeProfile:
    person_scores: np.ndarray
    item_totals: np.ndarray

    def person_layer_degree(self, x: ItemResponseMatrix) -> np.ndarray:
        """Degree of person ``k`` in person layer ``i``: ``x_ki * (c_i - x_ki)``."""
        xi = x.x.astype(np.int64)
        return xi * (self.item_totals[None, :] - xi)

    def item_layer_degree(self, x: ItemResponseMatrix) -> np.ndarray:
        """Degree of item ``i`` in item layer ``k``: ``x_ki * (s_k - x_ki)``."""
        xi = x.x.astype(np.int64)
        return xi * (self.person_scores[:, None] - xi)


def build_person_networks(x: ItemResponseMatrix) -> PersonNetworkStack:
    return PersonNetworkStack(x)


def build_item_networks(x: ItemResponseMatrix) -> ItemNetworkStack:
    return ItemNetworkStack(x)


def degree_profile(x: ItemResponseMatrix) -> DegreeProfile:
    return DegreeProfile(person_scores=x.person_scores, item_totals=x.item_totals)


# --------------------------------------------------------------------------- io


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_csv(path, row_ids: bool = False) -> ItemResponseMatrix:
    """Read a 0/1 CSV. A header row is detected when any cell is non-numeric.

    With ``row_ids=True`` the first column holds respondent labels.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InvalidResponseError(f"{path}: empty file")
    header = None
    first = rows[0][1:] if row_ids else rows[0]
    if not all(_is_number(c) for c in first):
        header = rows[0]
        rows = rows[1:]
    labels = None
    if row_ids:
        labels = [r[0] for r in rows]
        rows = [r[1:] for r in rows]
        if header is not None:
            header = header[1:]
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise InvalidResponseError(f"{path}: ragged rows")
    try:
        values = np.array([[float(c) if c.strip() else np.nan for c in r] for r in rows])
    except ValueError as exc:
        raise InvalidResponseError(f"{path}: {exc}") from None
    return ItemResponseMatrix(
        values,
        row_ids=tuple(labels) if labels else None,
        col_ids=tuple(header) if header else None,
    )


def write_csv(x: ItemResponseMatrix, path, header: bool = True) -> None:
    cols = x.col_ids or tuple(f"item{i + 1}" for i in range(x.p))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(cols)
        w.writerows(x.x.tolist())


def write_binary(x: ItemResponseMatrix, path) -> None:
    """Compact cache: magic, ``n`` and ``p`` as little-endian uint32, then row-major packed bits."""
    payload = np.packbits(x.x.astype(np.uint8).ravel(), bitorder="little")
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<II", x.n, x.p))
        fh.write(payload.tobytes())


def read_binary(path) -> ItemResponseMatrix:
    data = Path(path).read_bytes()
    if data[:8] != BINARY_MAGIC:
        raise InvalidResponseError(f"{path}: not a response cache (bad magic)")
    n, p = struct.unpack("<II", data[8:16])
    need = (n * p + 7) // 8
    payload = np.frombuffer(data[16:], dtype=np.uint8)
    if payload.size != need:
        raise InvalidResponseError(f"{path}: truncated payload ({payload.size} of {need} bytes)")
    bits = np.unpackbits(payload, bitorder="little", count=n * p)
    return ItemResponseMatrix(bits.reshape(n, p))


def load_matrix(path) -> ItemResponseMatrix:
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == BINARY_MAGIC:
        return read_binary(path)
    return read_csv(path)
