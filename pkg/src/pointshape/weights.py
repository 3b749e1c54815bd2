"""Shape-aware neighbor weights driven by normal deviation.

The weight family interpolates between three classic regimes: equal
weights (both thresholds at pi), a sharp angular cut-off (both thresholds
equal), and a smooth cosine blend from 1 down to 0 between the two
thresholds. Weights depend only on the angle between the two unit
normals, so they are symmetric in the pair.
"""

import math
from dataclasses import dataclass

import numpy as np

from .geometry import UNIT_NORMAL_TOL, PointCloud
from .knn import NeighborList


@dataclass(frozen=True)
class SigmoidParams:
    """Angular thresholds (radians): weight 1 below `a`, 0 above `b`.

    0 <= a <= b <= pi. With a == b the blend collapses to a sharp cut-off
    that is closed on the left (angle exactly a still gets weight 1), so
    a = b = pi means every neighbor weighs 1.
    """

    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a <= self.b <= math.pi):
            raise ValueError(
                f"need 0 <= a <= b <= pi, got a={self.a!r}, b={self.b!r}"
            )


@dataclass
class WeightMap:
    """Weights for one neighborhood, aligned with `indices` (center first)."""

    center: int
    indices: np.ndarray
    weights: np.ndarray


def normal_angle(u, v) -> float:
    """Angle in [0, pi] between two unit vectors.

    The inner product is clamped to [-1, 1] before arccos so nearly
    (anti)parallel inputs cannot fall outside the domain.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    for name, w in (("u", u), ("v", v)):
        ln = float(np.linalg.norm(w))
        if abs(ln - 1.0) > UNIT_NORMAL_TOL:
            raise ValueError(f"{name} is not unit length (|{name}| = {ln:.9g})")
    d = float(np.dot(u, v))
    return math.acos(min(1.0, max(-1.0, d)))


def sigmoid_cos(params: SigmoidParams, x):
    """Evaluate the cosine-sigmoid weight at angle(s) x in [0, pi].

    Piecewise: 1 below `a`, 0 above `b`, and the C1 blend
    cos(pi (x-a) / (b-a)) / 2 + 1/2 in between. For a == b the function is
    a sharp cut-off, closed on the left.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > math.pi):
        raise ValueError("angle outside [0, pi]")
    a, b = params.a, params.b
    if a == b:
        out = np.where(arr <= a, 1.0, 0.0)
    else:
        mid = 0.5 * np.cos(np.pi * (arr - a) / (b - a)) + 0.5
        out = np.where(arr < a, 1.0, np.where(arr > b, 0.0, mid))
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def weights_from_cos(params: SigmoidParams, cos_x):
    """sigmoid_cos evaluated from inner products, skipping arccos outside
    the blend region.

    Branch selection uses cos monotonicity (x < a iff cos x > cos a); the
    blend branch itself still goes through arccos, matching sigmoid_cos.
    """
    d = np.clip(np.asarray(cos_x, dtype=np.float64), -1.0, 1.0)
    cos_a = math.cos(params.a)
    if params.a == params.b:
        return np.where(d >= cos_a, 1.0, 0.0)
    cos_b = math.cos(params.b)
    span = params.b - params.a
    x = np.arccos(d)
    mid = 0.5 * np.cos(np.pi * (x - params.a) / span) + 0.5
    return np.where(d > cos_a, 1.0, np.where(d < cos_b, 0.0, mid))


def neighborhood_weights(
    cloud: PointCloud, nbrs: NeighborList, params: SigmoidParams
) -> WeightMap:
    """Per-neighbor weights from the deviation of each neighbor normal
    against the center normal; the center itself always weighs 1."""
    members = nbrs.members
    nc = cloud.normals[nbrs.center]
    dots = cloud.normals[members] @ nc
    w = weights_from_cos(params, dots)
    w[members == nbrs.center] = 1.0
    return WeightMap(center=nbrs.center, indices=members, weights=w)
