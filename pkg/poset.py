"""
Finite partially ordered sets

The order is stored as a dense boolean matrix ``leq`` with ``leq[i, j]`` true
iff element i precedes element j. Chains and antichains remember their kind so
that the dense matrix is only built when someone asks for it.
"""

import json
import logging
import os
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from stability_errors import CapExceeded, CycleError, SizeError

logger = logging.getLogger(__name__)

MAX_PRODUCT_SIZE = int(os.getenv("ORDSTAB_MAX_PRODUCT_SIZE", "4096"))
MAX_DENSE_SIZE = int(os.getenv("ORDSTAB_MAX_DENSE_SIZE", "8192"))
DEFAULT_UPSET_CAP = 10 ** 6

GENERAL = "general"
CHAIN = "chain"
ANTICHAIN = "antichain"


class ElementSet:
    """
    Subset of a poset's elements as an n-length boolean membership vector
    """

    __slots__ = ("membership",)

    def __init__(self, membership: Iterable[bool]):
        mask = np.array(membership, dtype=bool).reshape(-1)
        mask.setflags(write=False)
        self.membership = mask

    @classmethod
    def of(cls, n: int, indices: Iterable[int]) -> "ElementSet":
        mask = np.zeros(n, dtype=bool)
        for i in indices:
            if not 0 <= int(i) < n:
                raise IndexError(f"Element index {i} out of range for {n} elements")
            mask[int(i)] = True
        return cls(mask)

    @classmethod
    def empty(cls, n: int) -> "ElementSet":
        return cls(np.zeros(n, dtype=bool))

    @classmethod
    def full(cls, n: int) -> "ElementSet":
        return cls(np.ones(n, dtype=bool))

    @property
    def n(self) -> int:
        return int(self.membership.shape[0])

    def indices(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.membership)]

    def complement(self) -> "ElementSet":
        return ElementSet(~self.membership)

    def issubset(self, other: "ElementSet") -> bool:
        return bool(np.all(~self.membership | other.membership))

    def __contains__(self, i: int) -> bool:
        return bool(self.membership[i])

    def __len__(self) -> int:
        return int(self.membership.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ElementSet):
            return NotImplemented
        return np.array_equal(self.membership, other.membership)

    def __hash__(self) -> int:
        return hash(self.membership.tobytes())

    def __repr__(self) -> str:
        return f"ElementSet({self.indices()})"


class Poset:
    """
    Immutable finite partial order

    Build instances through new_poset, product_poset, Poset.chain or
    Poset.antichain rather than calling the constructor directly.
    """

    def __init__(self, labels: Sequence[Any], leq: Optional[np.ndarray] = None, kind: str = GENERAL):
        self.labels: Tuple[Any, ...] = tuple(labels)
        self.n = len(self.labels)
        if kind not in (GENERAL, CHAIN, ANTICHAIN):
            raise ValueError(f"Unknown poset kind: {kind}")
        if kind == GENERAL:
            if leq is None:
                raise ValueError("A general poset needs its relation matrix")
            leq = np.array(leq, dtype=bool)
            if leq.shape != (self.n, self.n):
                raise ValueError(f"Relation shape {leq.shape} does not match {self.n} labels")
            leq.setflags(write=False)
            kind = self._detect_kind(leq)
        # one element (or none) is both a chain and an antichain
        if self.n <= 1:
            kind = CHAIN
        self.kind = kind
        self._leq = leq

    @classmethod
    def chain(cls, n: int, labels: Optional[Sequence[Any]] = None) -> "Poset":
        """Total order 0 < 1 < ... < n-1 in input order"""
        return cls(labels if labels is not None else list(range(n)), kind=CHAIN)

    @classmethod
    def antichain(cls, n: int, labels: Optional[Sequence[Any]] = None) -> "Poset":
        """Identity order: x precedes y only when x equals y"""
        return cls(labels if labels is not None else list(range(n)), kind=ANTICHAIN)

    @staticmethod
    def _detect_kind(leq: np.ndarray) -> str:
        n = leq.shape[0]
        if n <= 1:
            return CHAIN
        if np.array_equal(leq, np.eye(n, dtype=bool)):
            return ANTICHAIN
        if np.array_equal(leq, np.triu(np.ones((n, n), dtype=bool))):
            return CHAIN
        return GENERAL

    @property
    def leq(self) -> np.ndarray:
        if self._leq is None:
            if self.n > MAX_DENSE_SIZE:
                raise SizeError(
                    f"Refusing to materialize a {self.n}x{self.n} relation (limit {MAX_DENSE_SIZE})"
                )
            if self.kind == CHAIN:
                leq = np.triu(np.ones((self.n, self.n), dtype=bool))
            else:
                leq = np.eye(self.n, dtype=bool)
            leq.setflags(write=False)
            self._leq = leq
        return self._leq

    @property
    def is_chain(self) -> bool:
        return self.kind == CHAIN

    @property
    def is_antichain(self) -> bool:
        return self.kind == ANTICHAIN

    def precedes(self, i: int, j: int) -> bool:
        if self.kind == CHAIN:
            return i <= j
        if self.kind == ANTICHAIN:
            return i == j
        return bool(self.leq[i, j])

    @cached_property
    def _linear_extension(self) -> Tuple[int, ...]:
        if self.kind != GENERAL:
            return tuple(range(self.n))
        # an element's down-set is strictly larger than that of anything below it
        below = self.leq.sum(axis=0)
        return tuple(int(i) for i in np.argsort(below, kind="stable"))

    def linear_extension(self) -> List[int]:
        """Element indices ordered so that every element comes after those below it"""
        return list(self._linear_extension)

    def least_element(self) -> Optional[int]:
        if self.n == 0:
            return None
        if self.kind == CHAIN:
            return 0
        if self.kind == ANTICHAIN:
            return 0 if self.n == 1 else None
        candidates = np.flatnonzero(self.leq.all(axis=1))
        return int(candidates[0]) if candidates.size else None

    def greatest_element(self) -> Optional[int]:
        if self.n == 0:
            return None
        if self.kind == CHAIN:
            return self.n - 1
        if self.kind == ANTICHAIN:
            return 0 if self.n == 1 else None
        candidates = np.flatnonzero(self.leq.all(axis=0))
        return int(candidates[0]) if candidates.size else None

    def index_of(self, label: Any) -> int:
        """Resolve a label (or an integer index) to an element index"""
        if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
            if not 0 <= int(label) < self.n:
                raise IndexError(f"Element index {label} out of range for {self.n} elements")
            return int(label)
        try:
            return self.labels.index(label)
        except ValueError:
            raise IndexError(f"Unknown element label: {label!r}") from None

    def same_order(self, other: "Poset") -> bool:
        if self is other:
            return True
        if self.n != other.n or self.labels != other.labels:
            return False
        if self.kind != GENERAL or other.kind != GENERAL:
            return self.kind == other.kind
        return np.array_equal(self.leq, other.leq)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Poset):
            return NotImplemented
        return self.same_order(other)

    def __hash__(self) -> int:
        return hash((self.labels, self.kind))

    def __repr__(self) -> str:
        return f"Poset(n={self.n}, kind={self.kind})"

    def covers(self) -> List[Tuple[int, int]]:
        """Hasse diagram: pairs (i, j) with i < j and nothing strictly between"""
        if self.kind == CHAIN:
            return [(i, i + 1) for i in range(self.n - 1)]
        if self.kind == ANTICHAIN:
            return []
        strict = self.leq & ~np.eye(self.n, dtype=bool)
        # i < k < j for some k
        through = (strict.astype(np.int64) @ strict.astype(np.int64)) > 0
        hasse = strict & ~through
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(hasse))]

    def to_dict(self) -> Dict[str, Any]:
        if self.kind != GENERAL:
            return {"kind": self.kind, "n": self.n, "labels": list(self.labels)}
        return {"labels": list(self.labels), "covers": [list(pair) for pair in self.covers()]}


def new_poset(labels: Sequence[Any], covers: Iterable[Sequence[Any]]) -> Poset:
    """
    Build a poset as the reflexive-transitive closure of a cover relation

    Args:
        labels: Element names, in the order that defines element indices
        covers: Ordered pairs (i, j) meaning i precedes j; entries may be indices or labels

    Returns:
        The closed Poset

    Raises:
        IndexError: A pair refers to an unknown element
        CycleError: The closure relates two distinct elements both ways
    """
    labels = list(labels)
    n = len(labels)
    shell = Poset(labels, kind=ANTICHAIN)
    leq = np.eye(n, dtype=bool)
    for pair in covers:
        if len(pair) != 2:
            raise ValueError(f"Cover must be a pair, got {pair!r}")
        i, j = shell.index_of(pair[0]), shell.index_of(pair[1])
        leq[i, j] = True

    # Warshall propagation, one pivot at a time
    for k in range(n):
        leq |= np.outer(leq[:, k], leq[k, :])

    both_ways = leq & leq.T & ~np.eye(n, dtype=bool)
    if both_ways.any():
        i, j = (int(v) for v in np.argwhere(both_ways)[0])
        raise CycleError(f"Covers contain a cycle through {labels[i]!r} and {labels[j]!r}")

    return Poset(labels, leq)


def is_increasing(p: Poset, s: ElementSet) -> bool:
    """True iff s is an up-set of p"""
    _check_set(p, s)
    if p.kind == ANTICHAIN:
        return True
    mask = s.membership
    if p.kind == CHAIN:
        # a suffix: once in, stays in
        return not np.any(mask[:-1] & ~mask[1:])
    return not np.any(p.leq[mask] & ~mask[np.newaxis, :])


def is_decreasing(p: Poset, s: ElementSet) -> bool:
    """True iff s is a down-set of p"""
    return is_increasing(p, s.complement())


def increase_closure(p: Poset, b: ElementSet) -> ElementSet:
    """i(B): every element lying above some member of B"""
    _check_set(p, b)
    if p.kind == ANTICHAIN or not b.membership.any():
        return b
    if p.kind == CHAIN:
        first = int(np.argmax(b.membership))
        mask = np.zeros(p.n, dtype=bool)
        mask[first:] = True
        return ElementSet(mask)
    return ElementSet(p.leq[b.membership].any(axis=0))


def decrease_closure(p: Poset, b: ElementSet) -> ElementSet:
    """d(B): every element lying below some member of B"""
    _check_set(p, b)
    if p.kind == ANTICHAIN or not b.membership.any():
        return b
    if p.kind == CHAIN:
        last = int(np.flatnonzero(b.membership)[-1])
        mask = np.zeros(p.n, dtype=bool)
        mask[: last + 1] = True
        return ElementSet(mask)
    return ElementSet(p.leq[:, b.membership].any(axis=1))


def order_interval(p: Poset, a: int, b: int) -> ElementSet:
    """The set of z with a preceding z and z preceding b"""
    up = increase_closure(p, ElementSet.of(p.n, [a])).membership
    down = decrease_closure(p, ElementSet.of(p.n, [b])).membership
    return ElementSet(up & down)


def enumerate_upsets(p: Poset, cap: int = DEFAULT_UPSET_CAP) -> List[ElementSet]:
    """
    List every increasing set of p, including the empty set and p itself

    Elements are decided from the top of a linear extension downwards, so an
    element may join only when everything strictly above it already has.

    Raises:
        CapExceeded: More than ``cap`` up-sets exist
    """
    order = list(reversed(p.linear_extension()))
    strictly_above = []
    for x in order:
        mask = 0
        for y in range(p.n):
            if y != x and p.precedes(x, y):
                mask |= 1 << y
        strictly_above.append(mask)

    found: List[int] = []

    def branch(depth: int, chosen: int) -> None:
        if depth == len(order):
            if len(found) >= cap:
                raise CapExceeded(f"Poset has more than {cap} up-sets")
            found.append(chosen)
            return
        branch(depth + 1, chosen)
        above = strictly_above[depth]
        if chosen & above == above:
            branch(depth + 1, chosen | (1 << order[depth]))

    branch(0, 0)
    logger.debug(f"Enumerated {len(found)} up-sets on {p.n} elements")
    return [ElementSet([(bits >> i) & 1 for i in range(p.n)]) for bits in found]


def product_poset(p1: Poset, p2: Poset) -> Poset:
    """
    Pointwise order on pairs; element (i, j) has index i * p2.n + j

    Raises:
        SizeError: The product exceeds MAX_PRODUCT_SIZE elements
    """
    size = p1.n * p2.n
    if size > MAX_PRODUCT_SIZE:
        raise SizeError(f"Product of {p1.n} and {p2.n} elements exceeds limit {MAX_PRODUCT_SIZE}")
    labels = [(a, b) for a in p1.labels for b in p2.labels]
    if p1.is_antichain and p2.is_antichain:
        return Poset(labels, kind=ANTICHAIN)
    if p2.n == 1 and p1.is_chain or p1.n == 1 and p2.is_chain:
        return Poset(labels, kind=CHAIN)
    leq = (p1.leq[:, None, :, None] & p2.leq[None, :, None, :]).reshape(size, size)
    return Poset(labels, leq)


def load_poset(source: Union[str, Path, Dict[str, Any]]) -> Poset:
    """
    Read a poset from the JSON format {"labels": [...], "covers": [[i, j], ...]}

    Args:
        source: Path to a JSON file, or the already decoded document

    Returns:
        The closed Poset
    """
    if isinstance(source, dict):
        document = source
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"Poset file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)

    kind = document.get("kind")
    if kind == CHAIN:
        return Poset.chain(int(document["n"]), document.get("labels"))
    if kind == ANTICHAIN:
        return Poset.antichain(int(document["n"]), document.get("labels"))
    if "labels" not in document:
        raise ValueError("Poset document needs a 'labels' list")
    return new_poset(document["labels"], document.get("covers", []))


def _check_set(p: Poset, s: ElementSet) -> None:
    if s.n != p.n:
        raise IndexError(f"Element set of length {s.n} does not match poset of {p.n} elements")
