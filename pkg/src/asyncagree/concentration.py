"""Hamming geometry and product measures on small finite product spaces.

Everything here is exact enumeration.  Points are tuples of symbol indices,
coordinate ``i`` ranging over ``0..sizes[i]-1``; universes are capped at
``MAX_UNIVERSE`` points.
"""
from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "MAX_UNIVERSE",
    "TOL",
    "UniverseTooLarge",
    "ProductDistribution",
    "HammingSet",
    "hamming_distance",
    "dist_point_set",
    "dist_set_set",
    "ball",
    "measure",
    "TalagrandReport",
    "check_talagrand",
    "talagrand_bound",
    "tau_threshold",
    "eta_threshold",
    "mixture",
    "InterpolationReport",
    "interpolate",
    "BallShiftReport",
    "ball_shift_bound",
    "SweepResult",
    "talagrand_sweep",
    "random_binary_product",
    "DemoResult",
    "random_interpolation_instance",
    "interpolation_demo",
    "load_instance",
    "dump_instance",
]

MAX_UNIVERSE = 2 ** 20
TOL = 1e-12


class UniverseTooLarge(ValueError):
    pass


def _check_size(sizes: Sequence[int]) -> int:
    total = math.prod(sizes)
    if total > MAX_UNIVERSE:
        raise UniverseTooLarge(f"universe has {total} points, limit is {MAX_UNIVERSE}")
    return total


@dataclass(frozen=True)
class ProductDistribution:
    coords: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if not self.coords:
            raise ValueError("need at least one coordinate")
        for i, probs in enumerate(self.coords):
            if not probs or any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > TOL:
                raise ValueError(f"coordinate {i} is not a probability vector: {probs}")

    @classmethod
    def of(cls, coords: Iterable[Iterable[float]]) -> "ProductDistribution":
        return cls(tuple(tuple(float(p) for p in c) for c in coords))

    @classmethod
    def bernoulli(cls, ps: Iterable[float]) -> "ProductDistribution":
        """Binary coordinates with ``P[1] = p`` each."""
        return cls(tuple((1.0 - p, float(p)) for p in ps))

    @classmethod
    def uniform_bits(cls, n: int) -> "ProductDistribution":
        return cls.bernoulli([0.5] * n)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.coords)

    def prob(self, x: Sequence[int]) -> float:
        p = 1.0
        for probs, xi in zip(self.coords, x):
            p *= probs[xi]
        return p

    def point_probs(self) -> np.ndarray:
        """Probabilities of every universe point, in lexicographic order."""
        _check_size(self.sizes)
        out = np.ones(1)
        for probs in self.coords:
            out = np.multiply.outer(out, np.asarray(probs)).ravel()
        return out


@dataclass(frozen=True)
class HammingSet:
    sizes: tuple[int, ...]
    points: frozenset[tuple[int, ...]]

    def __post_init__(self):
        _check_size(self.sizes)
        n = len(self.sizes)
        for x in self.points:
            if len(x) != n or any(not 0 <= xi < k for xi, k in zip(x, self.sizes)):
                raise ValueError(f"point {x} is outside the universe {self.sizes}")

    @classmethod
    def of(cls, sizes: Sequence[int], points: Iterable[Sequence[int]]) -> "HammingSet":
        return cls(tuple(sizes), frozenset(tuple(int(v) for v in p) for p in points))

    @classmethod
    def universe(cls, sizes: Sequence[int]) -> "HammingSet":
        _check_size(sizes)
        return cls(tuple(sizes), frozenset(itertools.product(*(range(k) for k in sizes))))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __contains__(self, x) -> bool:
        return tuple(x) in self.points

    def array(self) -> np.ndarray:
        return np.array(sorted(self.points), dtype=np.int64).reshape(-1, len(self.sizes))

    def indices(self) -> np.ndarray:
        """Lexicographic universe indices of the points."""
        if not self.points:
            return np.zeros(0, dtype=np.int64)
        strides = np.cumprod((self.sizes[1:] + (1,))[::-1])[::-1]
        return self.array() @ strides


def hamming_distance(x: Sequence, y: Sequence) -> int:
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    return sum(a != b for a, b in zip(x, y))


def dist_point_set(x: Sequence, a: HammingSet) -> int:
    if not a.points:
        raise ValueError("distance to an empty set is undefined")
    return min(hamming_distance(x, p) for p in a.points)


def dist_set_set(a: HammingSet, b: HammingSet) -> int:
    if not a.points or not b.points:
        raise ValueError("distance between empty sets is undefined")
    if a.points & b.points:
        return 0
    return int(_min_distances(a.array(), b.array()).min())


def _min_distances(points: np.ndarray, targets: np.ndarray, chunk: int = 1 << 16) -> np.ndarray:
    """For each row of ``points``, the Hamming distance to the nearest row of ``targets``."""
    out = np.empty(len(points), dtype=np.int64)
    step = max(1, chunk // max(1, len(targets)))
    for lo in range(0, len(points), step):
        block = points[lo:lo + step]
        out[lo:lo + step] = (block[:, None, :] != targets[None, :, :]).sum(axis=2).min(axis=1)
    return out


def _universe_array(sizes: Sequence[int]) -> np.ndarray:
    _check_size(sizes)
    grids = np.indices(tuple(sizes)).reshape(len(sizes), -1)
    return grids.T.astype(np.int64)


def ball(a: HammingSet, d: int, sizes: Optional[Sequence[int]] = None) -> HammingSet:
    """All universe points within Hamming distance ``d`` of ``a``."""
    sizes = tuple(sizes) if sizes is not None else a.sizes
    if sizes != a.sizes:
        raise ValueError(f"set lives in {a.sizes}, not {sizes}")
    if d < 0:
        raise ValueError("radius must be non-negative")
    if not a.points or d == 0:
        return a
    return _ball(a, d)


@functools.lru_cache(maxsize=256)
def _ball(a: HammingSet, d: int) -> HammingSet:
    sizes = a.sizes
    universe = _universe_array(sizes)
    if d >= len(sizes):
        near = universe
    else:
        near = universe[_min_distances(universe, a.array()) <= d]
    return HammingSet(sizes, frozenset(map(tuple, near.tolist())))


def measure(dist: ProductDistribution, a: HammingSet) -> float:
    if dist.sizes != a.sizes:
        raise ValueError(f"distribution universe {dist.sizes} does not match set universe {a.sizes}")
    if len(a.points) < 64:
        return math.fsum(dist.prob(x) for x in a.points)
    return math.fsum(dist.point_probs()[a.indices()].tolist())


def talagrand_bound(d: float, n: int) -> float:
    return math.exp(-d * d / (4 * n))


def tau_threshold(t: int, n: int) -> float:
    """Separation threshold ``exp(-t^2 / 8n)``."""
    return math.exp(-t * t / (8 * n))


def eta_threshold(t: int, n: int) -> float:
    """Interpolation threshold ``exp(-(t-1)^2 / 8n)``."""
    return math.exp(-(t - 1) ** 2 / (8 * n))


@dataclass(frozen=True)
class TalagrandReport:
    lhs: float
    bound: float
    holds: bool


def check_talagrand(dist: ProductDistribution, a: HammingSet, d: int) -> TalagrandReport:
    """Evaluate ``P[A] (1 - P[B(A, d)]) <= exp(-d^2 / 4n)`` exactly."""
    lhs = measure(dist, a) * (1.0 - measure(dist, ball(a, d)))
    bound = talagrand_bound(d, dist.n)
    return TalagrandReport(lhs, bound, lhs <= bound + TOL)


def mixture(pi0: ProductDistribution, pin: ProductDistribution, j: int) -> ProductDistribution:
    """First ``j`` coordinates from ``pin``, the rest from ``pi0``."""
    if pi0.sizes != pin.sizes:
        raise ValueError("distributions live on different universes")
    return ProductDistribution(pin.coords[:j] + pi0.coords[j:])


@dataclass(frozen=True)
class InterpolationReport:
    j_star: int
    p0_at_jstar: float
    p1_at_jstar: float
    eta: float
    both_small: bool
    # set when the caller supplies the separation parameter
    algebraic_bound: Optional[float] = None
    separation_ok: Optional[bool] = None


def interpolate(pi0: ProductDistribution, pin: ProductDistribution, a0: HammingSet,
                a1: HammingSet, eta: float, t: Optional[int] = None) -> InterpolationReport:
    """Find the first mixed distribution putting at most ``eta`` on ``a0``.

    With ``t`` given, also reports whether ``Delta(a0, a1) > t`` and the
    closed-form ceiling ``exp(-(t-1)^2 / 4n) / eta`` on the mass of ``a1``.
    """
    if pi0.sizes != pin.sizes or a0.sizes != pi0.sizes or a1.sizes != pi0.sizes:
        raise ValueError("distributions and sets must share one universe")
    if measure(pin, a0) > eta + TOL:
        raise ValueError(f"end distribution puts {measure(pin, a0):.6g} > eta={eta:.6g} on A0")
    n = pi0.n
    for j in range(n + 1):
        pj = mixture(pi0, pin, j)
        p0 = measure(pj, a0)
        if p0 <= eta + TOL:
            break
    p1 = measure(pj, a1)
    algebraic = separation = None
    if t is not None:
        algebraic = math.exp(-(t - 1) ** 2 / (4 * n)) / eta
        separation = bool(a0.points and a1.points and dist_set_set(a0, a1) > t)
    return InterpolationReport(j, p0, p1, eta, p0 <= eta + TOL and p1 <= eta + TOL,
                               algebraic, separation)


@dataclass(frozen=True)
class BallShiftReport:
    p_prev_A: float
    p_next_ball1: float
    holds: bool


def ball_shift_bound(pi_prev: ProductDistribution, pi_next: ProductDistribution,
                     a: HammingSet) -> BallShiftReport:
    """Check ``P_next[B(A, 1)] >= P_prev[A]`` for distributions one coordinate apart."""
    if pi_prev.sizes != pi_next.sizes:
        raise ValueError("distributions live on different universes")
    differing = sum(p != q for p, q in zip(pi_prev.coords, pi_next.coords))
    if differing > 1:
        raise ValueError(f"distributions differ in {differing} coordinates, expected at most 1")
    prev = measure(pi_prev, a)
    nxt = measure(pi_next, ball(a, 1))
    return BallShiftReport(prev, nxt, nxt >= prev - TOL)


@dataclass(frozen=True)
class SweepResult:
    n: int
    distributions: int
    checked: int
    violations: int
    max_ratio: float  # largest lhs / bound seen


def _flip_masks(n: int) -> list[tuple[int, int, int]]:
    """For each coordinate: (points-with-bit-0 mask, points-with-bit-1 mask, shift)."""
    size = 1 << n
    out = []
    for k in range(n):
        low = sum(1 << p for p in range(size) if not (p >> k) & 1)
        out.append((low, ((1 << size) - 1) ^ low, 1 << k))
    return out


def talagrand_sweep(n: int, dists: Sequence[ProductDistribution]) -> SweepResult:
    """Check the inequality for every subset of ``{0,1}^n`` and every radius ``0..n``.

    Subsets are bitmasks over the ``2^n`` points; a one-step ball is the mask
    OR-ed with its image under each single-coordinate flip.
    """
    if n > 4:
        raise UniverseTooLarge(f"exhaustive subset sweep needs n <= 4, got {n}")
    for dist in dists:
        if dist.sizes != (2,) * n:
            raise ValueError("sweep distributions must be binary of length n")
    size = 1 << n
    masks = np.arange(1 << size, dtype=np.uint64)
    # point index p has coordinate i equal to bit (n - 1 - i); lexicographic order
    members = ((masks[:, None] >> np.arange(size, dtype=np.uint64)) & np.uint64(1)).astype(np.float64)
    probs = np.stack([d.point_probs() for d in dists])  # (D, size)
    p_a = members @ probs.T
    flips = _flip_masks(n)
    grown = masks.copy()
    checked = violations = 0
    max_ratio = 0.0
    for d in range(n + 1):
        if d > 0:
            step = grown.copy()
            for low, high, shift in flips:
                s = np.uint64(shift)
                step |= ((grown & np.uint64(low)) << s) | ((grown & np.uint64(high)) >> s)
            grown = step
        in_ball = ((grown[:, None] >> np.arange(size, dtype=np.uint64)) & np.uint64(1)).astype(np.float64)
        lhs = p_a * (1.0 - in_ball @ probs.T)
        bound = talagrand_bound(d, n)
        checked += lhs.size
        violations += int((lhs > bound + TOL).sum())
        max_ratio = max(max_ratio, float(lhs.max() / bound))
    return SweepResult(n, len(dists), checked, violations, max_ratio)


def random_binary_product(n: int, rng: np.random.Generator) -> ProductDistribution:
    return ProductDistribution.bernoulli(rng.uniform(0.0, 1.0, size=n).tolist())


def _weight_band(n: int, lo: int, hi: int, keep: float, rng: np.random.Generator) -> HammingSet:
    pts = [p for p in itertools.product((0, 1), repeat=n) if lo <= sum(p) <= hi and rng.random() < keep]
    return HammingSet((2,) * n, frozenset(pts))


def random_interpolation_instance(rng: np.random.Generator):
    """A random ``(pi0, pin, A0, A1, t)`` meeting the interpolation preconditions.

    ``A0`` sits at low Hamming weight, ``A1`` at least ``t + 1`` heavier;
    ``pi0`` leans to 0s and ``pin`` to 1s.  Resamples until
    ``P_pin[A0] <= eta`` and ``P_pi0[A1] <= eta`` with ``eta = eta_threshold(t, n)``.
    """
    while True:
        n = int(rng.integers(6, 13))
        t = int(rng.integers(2, n // 2 + 1))
        w0 = int(rng.integers(0, max(1, n - t - 1)))
        w1 = w0 + t + 1 + int(rng.integers(0, max(1, n - w0 - t)))
        if w1 > n:
            continue
        a0 = _weight_band(n, 0, w0, float(rng.choice([1.0, rng.uniform(0.5, 1.0)])), rng)
        a1 = _weight_band(n, w1, n, float(rng.choice([1.0, rng.uniform(0.5, 1.0)])), rng)
        if not a0.points or not a1.points or dist_set_set(a0, a1) <= t:
            continue
        spread = float(rng.uniform(0.02, 0.3))
        pi0 = ProductDistribution.bernoulli(rng.uniform(0.0, spread, size=n).tolist())
        pin = ProductDistribution.bernoulli(rng.uniform(1.0 - spread, 1.0, size=n).tolist())
        eta = eta_threshold(t, n)
        if measure(pin, a0) <= eta and measure(pi0, a1) <= eta:
            return pi0, pin, a0, a1, t


@dataclass(frozen=True)
class DemoResult:
    instances: int
    violations: int
    nontrivial: int  # instances with j* > 0
    ball_shift_checks: int
    ball_shift_violations: int


def interpolation_demo(instances: int, seed: int) -> DemoResult:
    """Run ``interpolate`` and the one-coordinate ball-shift check on random instances."""
    rng = np.random.default_rng(seed)
    violations = nontrivial = shifts = shift_bad = 0
    for _ in range(instances):
        pi0, pin, a0, a1, t = random_interpolation_instance(rng)
        rep = interpolate(pi0, pin, a0, a1, eta_threshold(t, pi0.n), t=t)
        if not rep.both_small or not rep.separation_ok or rep.p1_at_jstar > rep.algebraic_bound + TOL:
            violations += 1
        nontrivial += rep.j_star > 0
        for j in range(1, pi0.n + 1):
            prev, nxt = mixture(pi0, pin, j - 1), mixture(pi0, pin, j)
            for a in (a0, a1):
                shifts += 1
                shift_bad += not ball_shift_bound(prev, nxt, a).holds
    return DemoResult(instances, violations, nontrivial, shifts, shift_bad)


def dump_instance(dist: ProductDistribution, sets: dict[str, HammingSet]) -> str:
    doc = {
        "n": dist.n,
        "alphabet_sizes": list(dist.sizes),
        "coords": [list(c) for c in dist.coords],
        "sets": {name: sorted(list(p) for p in s.points) for name, s in sets.items()},
    }
    return json.dumps(doc, separators=(",", ":"))


def load_instance(text: str) -> tuple[ProductDistribution, dict[str, HammingSet]]:
    doc = json.loads(text)
    dist = ProductDistribution.of(doc["coords"])
    if dist.n != doc["n"] or list(dist.sizes) != doc["alphabet_sizes"]:
        raise ValueError("coordinate vectors disagree with n / alphabet_sizes")
    sets = {name: HammingSet.of(dist.sizes, pts) for name, pts in doc.get("sets", {}).items()}
    return dist, sets
