"""
Finite measures on a poset

Total variation, the measure infimum, classical affinity and stochastic
dominance. Measures are immutable weight vectors; signed measures are kept as
an explicit (plus, minus) pair so that weights never go negative.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import numpy as np

from poset import ElementSet, Poset, load_poset
from stability_errors import DimMismatch, MassMismatch

logger = logging.getLogger(__name__)

TOL = 1e-9


class Measure:
    """
    Nonnegative weight vector over the elements of a poset
    """

    __slots__ = ("poset", "weights")

    def __init__(self, poset: Poset, weights: Iterable[float]):
        w = np.array(weights, dtype=float).reshape(-1)
        if w.shape[0] != poset.n:
            raise DimMismatch(f"Got {w.shape[0]} weights for a poset of {poset.n} elements")
        if not np.all(np.isfinite(w)):
            raise ValueError("Measure weights must be finite")
        if np.any(w < -TOL):
            raise ValueError(f"Measure weights must be nonnegative, got minimum {w.min()}")
        # rounding residue from subtractions
        np.clip(w, 0.0, None, out=w)
        w.setflags(write=False)
        self.poset = poset
        self.weights = w

    @classmethod
    def probability(cls, poset: Poset, weights: Iterable[float]) -> "Measure":
        """Validate total mass 1 within TOL, then renormalize exactly"""
        w = np.array(weights, dtype=float).reshape(-1)
        total = w.sum()
        if abs(total - 1.0) > TOL:
            raise MassMismatch(f"Probability weights sum to {total!r}, expected 1")
        return cls(poset, w / total)

    @classmethod
    def dirac(cls, poset: Poset, i: int) -> "Measure":
        w = np.zeros(poset.n)
        w[poset.index_of(i)] = 1.0
        return cls(poset, w)

    @classmethod
    def uniform(cls, poset: Poset) -> "Measure":
        return cls(poset, np.full(poset.n, 1.0 / poset.n))

    @classmethod
    def zero(cls, poset: Poset) -> "Measure":
        return cls(poset, np.zeros(poset.n))

    @property
    def n(self) -> int:
        return self.poset.n

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def of_set(self, s: ElementSet) -> float:
        """mu(B)"""
        return float(self.weights[s.membership].sum())

    def scaled(self, c: float) -> "Measure":
        if c < 0:
            raise ValueError(f"Scale factor must be nonnegative, got {c}")
        return Measure(self.poset, self.weights * c)

    def normalized(self) -> "Measure":
        mass = self.mass
        if mass <= 0:
            raise MassMismatch("Cannot normalize a zero measure")
        return Measure(self.poset, self.weights / mass)

    def residual(self, part: "Measure") -> "Measure":
        """mu - part, for a component part <= mu"""
        require_same_poset(self, part)
        return Measure(self.poset, self.weights - part.weights)

    def dominates(self, other: "Measure", tol: float = TOL) -> bool:
        """Componentwise other <= self"""
        require_same_poset(self, other)
        return bool(np.all(other.weights <= self.weights + tol))

    def allclose(self, other: "Measure", tol: float = TOL) -> bool:
        require_same_poset(self, other)
        return bool(np.all(np.abs(self.weights - other.weights) <= tol))

    def __add__(self, other: "Measure") -> "Measure":
        require_same_poset(self, other)
        return Measure(self.poset, self.weights + other.weights)

    def __repr__(self) -> str:
        return f"Measure({np.array2string(self.weights, precision=6)})"

    def to_dict(self) -> Dict[str, Any]:
        return {"poset": self.poset.to_dict(), "weights": [float(v) for v in self.weights]}


@dataclass(frozen=True)
class SignedDiff:
    """Signed measure lambda = plus - minus, both parts on the same poset"""

    plus: Measure
    minus: Measure

    def __post_init__(self):
        require_same_poset(self.plus, self.minus)

    @classmethod
    def of(cls, mu: Measure, nu: Measure) -> "SignedDiff":
        return cls(mu, nu)

    @property
    def poset(self) -> Poset:
        return self.plus.poset

    @property
    def weights(self) -> np.ndarray:
        return self.plus.weights - self.minus.weights

    def total(self) -> float:
        """lambda(S)"""
        return self.plus.mass - self.minus.mass

    def integrate(self, h: Iterable[float]) -> float:
        """lambda(h) for a function given by its values"""
        values = np.asarray(h, dtype=float)
        if values.shape != (self.poset.n,):
            raise DimMismatch(f"Function has shape {values.shape}, expected ({self.poset.n},)")
        return float(self.weights @ values)

    def negated(self) -> "SignedDiff":
        return SignedDiff(self.minus, self.plus)


def require_same_poset(mu: Measure, nu: Measure) -> None:
    if not mu.poset.same_order(nu.poset):
        raise DimMismatch("Measures live on different posets")


def require_equal_mass(mu: Measure, nu: Measure) -> None:
    if abs(mu.mass - nu.mass) > TOL * max(1.0, mu.mass):
        raise MassMismatch(f"Masses differ: {mu.mass!r} vs {nu.mass!r}")


def expectation(mu: Measure, h: Iterable[float]) -> float:
    """mu(h) = sum of h against mu"""
    values = np.asarray(h, dtype=float)
    if values.shape != (mu.n,):
        raise DimMismatch(f"Function has shape {values.shape}, expected ({mu.n},)")
    return float(mu.weights @ values)


def tv_distance(mu: Measure, nu: Measure) -> float:
    """
    Full total variation norm ||mu - nu|| = sum |mu_i - nu_i|

    For probabilities this is twice the largest gap mu(B) - nu(B) over all sets.
    """
    require_same_poset(mu, nu)
    return float(np.abs(mu.weights - nu.weights).sum())


def inf_measure(mu: Measure, nu: Measure) -> Measure:
    """Largest measure dominated by both: the pointwise minimum"""
    require_same_poset(mu, nu)
    return Measure(mu.poset, np.minimum(mu.weights, nu.weights))


def affinity(mu: Measure, nu: Measure) -> float:
    """alpha(mu, nu), the mass of the measure infimum"""
    return inf_measure(mu, nu).mass


def stochastically_dominated(mu: Measure, nu: Measure, tol: float = TOL) -> bool:
    """
    True iff mu and nu have equal mass and mu(I) <= nu(I) for every up-set I

    Decided exactly through the maximal up-set deficiency.
    """
    from ordered_affinity import max_upset_deficiency

    require_same_poset(mu, nu)
    if abs(mu.mass - nu.mass) > tol * max(1.0, mu.mass):
        return False
    value, _ = max_upset_deficiency(mu, nu)
    return value <= tol


def load_measure(source: Union[str, Path, Dict[str, Any]], poset: Optional[Poset] = None,
                 probability: bool = True) -> Measure:
    """
    Read a measure from {"poset": <path or inline poset>, "weights": [...]}

    Args:
        source: Path to a JSON file, or the decoded document
        poset: Poset to use instead of the one named in the document
        probability: Validate and renormalize to mass 1

    Returns:
        The Measure
    """
    base_dir = Path(".")
    if isinstance(source, dict):
        document = source
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"Measure file not found: {path}")
        base_dir = path.parent
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
        logger.debug(f"Loaded measure from {path}")

    if "weights" not in document:
        raise ValueError("Measure document needs a 'weights' list")
    if poset is None:
        poset = resolve_poset(document.get("poset"), base_dir)
    if probability:
        return Measure.probability(poset, document["weights"])
    return Measure(poset, document["weights"])


def resolve_poset(reference: Any, base_dir: Path = Path(".")) -> Poset:
    """A poset given inline, by file path, or by element count (antichain)"""
    if reference is None:
        raise ValueError("Document does not name a poset")
    if isinstance(reference, dict):
        return load_poset(reference)
    if isinstance(reference, int):
        return Poset.antichain(reference)
    path = Path(reference)
    if not path.is_absolute() and not path.exists():
        path = base_dir / path
    return load_poset(path)
