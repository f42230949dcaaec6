"""Binary states, lift directions and the one-flip neighbourhood structure.

States are vectors of spins in {-1, +1}. The partial order compares states by
their number of +1 components, so flipping a -1 to +1 moves "up" and flipping
a +1 to -1 moves "down".
"""

from __future__ import annotations

from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np


class Direction(IntEnum):
    """Lift variable: which half of the neighbourhood proposals come from."""

    DOWN = -1
    UP = 1

    @property
    def reversed(self) -> "Direction":
        return Direction(-int(self))


def as_direction(nu: int) -> Direction:
    if nu not in (-1, 1):
        raise ValueError(f"direction must be -1 or +1, got {nu!r}")
    return Direction(nu)


class BinaryState:
    """Immutable vector of spins with cached type counts.

    ``bits`` is stored as a read-only ``int8`` array. Equality and hashing go
    through the raw bytes, so states can key dictionaries in exact
    enumerations.
    """

    __slots__ = ("bits", "n_minus", "n_plus", "_hash", "_code")

    def __init__(self, bits: Sequence[int] | np.ndarray, *, _trusted: bool = False):
        arr = np.array(bits, dtype=np.int8)
        if not _trusted:
            if arr.ndim != 1 or arr.size < 1:
                raise ValueError("a state needs at least one coordinate")
            if not np.all((arr == 1) | (arr == -1)):
                raise ValueError("state entries must be -1 or +1")
        arr.flags.writeable = False
        self.bits = arr
        self.n_minus = int(np.count_nonzero(arr == -1))
        self.n_plus = arr.size - self.n_minus
        self._hash = None
        self._code = None

    @classmethod
    def from_code(cls, code: int, n: int) -> "BinaryState":
        """State whose coordinate ``i`` is +1 iff bit ``i`` of ``code`` is set."""
        if not 0 <= code < (1 << n):
            raise ValueError(f"code {code} out of range for n={n}")
        bits = ((code >> np.arange(n)) & 1).astype(np.int8) * 2 - 1
        return cls(bits, _trusted=True)

    @classmethod
    def from_indicators(cls, z: Sequence[int]) -> "BinaryState":
        """Map 0/1 inclusion indicators to spins (1 -> +1, 0 -> -1)."""
        z = np.asarray(z)
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("indicators must be 0 or 1")
        return cls(2 * z.astype(np.int8) - 1)

    @property
    def n(self) -> int:
        return self.bits.size

    @property
    def code(self) -> int:
        """Integer with bit ``i`` set iff coordinate ``i`` is +1 (cached)."""
        if self._code is None:
            packed = np.packbits(self.bits > 0, bitorder="little")
            self._code = int.from_bytes(packed.tobytes(), "little")
        return self._code

    def indicators(self) -> np.ndarray:
        return (self.bits > 0).astype(np.int8)

    def __neg__(self) -> "BinaryState":
        return BinaryState(-self.bits, _trusted=True)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryState):
            return NotImplemented
        return self.bits.tobytes() == other.bits.tobytes()

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.bits.tobytes())
        return self._hash

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return "BinaryState(" + "".join("+" if b > 0 else "-" for b in self.bits) + ")"


class LiftedChainState(NamedTuple):
    state: BinaryState
    direction: Direction


def flip(x: BinaryState, i: int) -> BinaryState:
    """Return a copy of ``x`` with coordinate ``i`` negated."""
    if not 0 <= i < x.n:
        raise IndexError(f"coordinate {i} out of range for n={x.n}")
    bits = x.bits.copy()
    bits[i] = -bits[i]
    y = BinaryState.__new__(BinaryState)
    bits.flags.writeable = False
    y.bits = bits
    if x.bits[i] < 0:
        y.n_minus, y.n_plus = x.n_minus - 1, x.n_plus + 1
    else:
        y.n_minus, y.n_plus = x.n_minus + 1, x.n_plus - 1
    y._hash = None
    y._code = None if x._code is None else x._code ^ (1 << i)
    return y


def directed_neighborhood(x: BinaryState, nu: int) -> np.ndarray:
    """Ascending coordinate indices whose flip moves ``x`` in direction ``nu``.

    For ``nu = +1`` these are the -1 coordinates, for ``nu = -1`` the +1
    coordinates. The result may be empty on the boundary of the space.
    """
    nu = as_direction(nu)
    return np.flatnonzero(x.bits == -nu)


def counts(x: BinaryState) -> tuple[int, int]:
    """``(n_minus, n_plus)``: number of -1 and +1 coordinates."""
    return x.n_minus, x.n_plus


def neighborhood_size(x: BinaryState, nu: int) -> int:
    return x.n_minus if nu > 0 else x.n_plus


def all_states(n: int) -> list[BinaryState]:
    """Every state of dimension ``n``, ordered by :attr:`BinaryState.code`."""
    return [BinaryState.from_code(c, n) for c in range(1 << n)]
