"""Ground sets, element sets, set intervals and modular noise.

Sets are stored as Python integers used as bitmasks (bit ``i`` set iff
element ``i`` is a member). Algorithms that sweep over all elements convert
to boolean numpy arrays with :meth:`ElementSet.to_array`.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

MAX_ELEMENTS = 4096


def _check_n(n: int) -> int:
    n = int(n)
    if n < 1 or n > MAX_ELEMENTS:
        raise ValueError(f"ground set size must be in [1, {MAX_ELEMENTS}], got {n}")
    return n


@dataclass(frozen=True)
class GroundSet:
    """The index set ``{0, ..., n-1}``."""

    n: int

    def __post_init__(self):
        object.__setattr__(self, "n", _check_n(self.n))

    def empty(self) -> ElementSet:
        return ElementSet(self.n, 0)

    def full(self) -> ElementSet:
        return ElementSet(self.n, (1 << self.n) - 1)

    def lattice(self) -> Lattice:
        return Lattice(self.empty(), self.full())


@dataclass(frozen=True)
class ElementSet:
    """Immutable subset of a ground set of size ``n``."""

    n: int
    mask: int = 0

    def __post_init__(self):
        _check_n(self.n)
        if self.mask < 0 or self.mask >> self.n:
            raise ValueError(f"mask has members outside ground set of size {self.n}")

    # construction ---------------------------------------------------------

    @classmethod
    def from_indices(cls, n: int, indices: Iterable[int]) -> ElementSet:
        mask = 0
        for i in indices:
            i = int(i)
            if not 0 <= i < n:
                raise ValueError(f"element {i} outside ground set of size {n}")
            mask |= 1 << i
        return cls(n, mask)

    @classmethod
    def from_array(cls, arr) -> ElementSet:
        arr = np.asarray(arr, dtype=bool)
        packed = np.packbits(arr, bitorder="little").tobytes()
        return cls(arr.size, int.from_bytes(packed, "little"))

    @classmethod
    def parse(cls, n: int, text: str) -> ElementSet:
        """Inverse of :meth:`serialize` (``"0,2,5"``; empty string is the empty set)."""
        text = text.strip()
        if not text:
            return cls(n, 0)
        return cls.from_indices(n, (int(tok) for tok in text.split(",")))

    @classmethod
    def empty(cls, n: int) -> ElementSet:
        return cls(n, 0)

    @classmethod
    def full(cls, n: int) -> ElementSet:
        return cls(n, (1 << n) - 1)

    # views ----------------------------------------------------------------

    def to_array(self) -> np.ndarray:
        nbytes = (self.n + 7) // 8
        raw = np.frombuffer(self.mask.to_bytes(nbytes, "little"), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[: self.n].astype(bool)

    def indices(self) -> list[int]:
        return np.flatnonzero(self.to_array()).tolist()

    def serialize(self) -> str:
        return ",".join(str(i) for i in self.indices())

    def __iter__(self):
        return iter(self.indices())

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __contains__(self, i) -> bool:
        return 0 <= i < self.n and bool(self.mask >> i & 1)

    def __repr__(self) -> str:
        return f"ElementSet(n={self.n}, {{{self.serialize()}}})"

    # algebra --------------------------------------------------------------

    def _other(self, other: ElementSet) -> int:
        if not isinstance(other, ElementSet):
            return NotImplemented
        if other.n != self.n:
            raise ValueError(f"ground set mismatch: {self.n} vs {other.n}")
        return other.mask

    def __or__(self, other):
        return ElementSet(self.n, self.mask | self._other(other))

    def __and__(self, other):
        return ElementSet(self.n, self.mask & self._other(other))

    def __sub__(self, other):
        return ElementSet(self.n, self.mask & ~self._other(other))

    def __xor__(self, other):
        return ElementSet(self.n, self.mask ^ self._other(other))

    def __le__(self, other):
        return self.mask & ~self._other(other) == 0

    def __ge__(self, other):
        return other <= self

    def __lt__(self, other):
        return self <= other and self.mask != other.mask

    def __gt__(self, other):
        return other < self

    def complement(self) -> ElementSet:
        return ElementSet(self.n, ((1 << self.n) - 1) & ~self.mask)

    def add(self, i: int) -> ElementSet:
        if not 0 <= i < self.n:
            raise ValueError(f"element {i} outside ground set of size {self.n}")
        return ElementSet(self.n, self.mask | (1 << i))

    def remove(self, i: int) -> ElementSet:
        return ElementSet(self.n, self.mask & ~(1 << i))


@dataclass(frozen=True)
class Lattice:
    """Set interval ``[lower, upper] = {X : lower <= X <= upper}``."""

    lower: ElementSet
    upper: ElementSet

    def __post_init__(self):
        if self.lower.n != self.upper.n:
            raise ValueError("lattice endpoints live on different ground sets")
        if not self.lower <= self.upper:
            raise ValueError("lattice lower endpoint is not a subset of the upper endpoint")

    @classmethod
    def full(cls, n: int) -> Lattice:
        return cls(ElementSet.empty(n), ElementSet.full(n))

    @classmethod
    def from_arrays(cls, lower, upper) -> Lattice:
        return cls(ElementSet.from_array(lower), ElementSet.from_array(upper))

    @property
    def n(self) -> int:
        return self.lower.n

    @property
    def free(self) -> ElementSet:
        """Undecided elements ``upper - lower``."""
        return self.upper - self.lower

    @property
    def width(self) -> int:
        return len(self.free)

    def size(self) -> int:
        """Number of sets in the interval, ``2**|T - S|``."""
        return 1 << self.width

    def __contains__(self, X: ElementSet) -> bool:
        return self.lower <= X <= self.upper

    def contains_lattice(self, other: Lattice) -> bool:
        return self.lower <= other.lower and other.upper <= self.upper

    def is_point(self) -> bool:
        return self.lower.mask == self.upper.mask


def lattice_membership(L: Lattice, X: ElementSet) -> bool:
    return X in L


@dataclass(frozen=True)
class ModularWeights:
    """Per-element weights of a modular function ``r(X) = sum_{i in X} w_i``."""

    w: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.size

    def __call__(self, X: ElementSet) -> float:
        return modular_eval(self, X)

    def __eq__(self, other):
        return isinstance(other, ModularWeights) and np.array_equal(self.w, other.w)

    def __hash__(self):
        return hash(self.w.tobytes())


def modular_eval(w: ModularWeights, X: ElementSet) -> float:
    if X.n != w.n:
        raise ValueError(f"ground set mismatch: weights over {w.n}, set over {X.n}")
    return float(w.w[X.to_array()].sum())


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic child seed for ``keys`` under ``master`` (order-sensitive)."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def uniform_noise(n: int, t: float, seed: int) -> ModularWeights:
    """I.i.d. Uniform[-t, t] weights drawn from a generator seeded by ``seed``."""
    if t < 0:
        raise ValueError(f"noise scale must be nonnegative, got {t}")
    if int(n) < 1:
        raise ValueError(f"need at least one weight, got n = {n}")
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=int(n))
    return ModularWeights(t * u)
