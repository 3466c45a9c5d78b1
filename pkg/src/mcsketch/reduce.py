"""Dimension handling before sketching: random projection and the
distance-matrix row embedding.

``jl_project`` multiplies Euclidean inputs by a random +-1/sqrt(d') sign
matrix with d' = ceil(C * eps^-2 * ln n) columns, drawn from a seeded
PCG64 generator so builds are reproducible.  The projection is linear
(zero maps to zero, scaling commutes) and with the default C = 4 distorts
any fixed pair by more than (1 +- eps) only with vanishing probability, so
the end-to-end error budget becomes (1+eps)(1+4eps) - 1.  Inputs already
at or below the target dimension pass through untouched.

``frechet_embed`` turns an n x n distance matrix into its own rows as
points under the l-infinity norm; the triangle inequality makes that an
exact isometry (the max |D[i,k] - D[j,k]| is attained at k = j), so
arbitrary finite metrics ride the same sketch pipeline with p = inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DistanceMatrix, InputError, PointSet, normalize

__all__ = ["JlConfig", "jl_project", "frechet_embed"]


@dataclass(frozen=True)
class JlConfig:
    """Projection parameters: constant C and the generator seed."""

    constant: float = 4.0
    seed: int = 0

    def target_dim(self, n: int, epsilon: float) -> int:
        """d' = ceil(C * eps^-2 * ln n) (natural log)."""
        if n < 2:
            raise InputError("need at least two points")
        return max(1, math.ceil(self.constant * epsilon**-2.0 * math.log(n)))


def jl_project(
    ps: PointSet, config: JlConfig, epsilon: float
) -> tuple[PointSet, bool]:
    """Project a Euclidean point set to the target dimension.

    Returns (projected-and-renormalized point set, True) or (ps, False)
    when the input dimension is already at most the target.  The returned
    scale composes the input's scale with the post-projection divisor so
    estimates still come back in original units.
    """
    if ps.p != 2.0:
        raise InputError("random projection requires the Euclidean norm (p=2)")
    dprime = config.target_dim(ps.n, epsilon)
    if dprime >= ps.d:
        return ps, False
    rng = np.random.default_rng(config.seed)
    signs = rng.integers(0, 2, size=(ps.d, dprime)).astype(np.float64) * 2.0 - 1.0
    proj = ps.coords @ signs / math.sqrt(dprime)
    out = normalize(proj, 2.0)
    return (
        PointSet(
            coords=out.coords,
            p=2.0,
            scale=ps.scale * out.scale,
            spread=out.spread,
        ),
        True,
    )


def frechet_embed(dm: DistanceMatrix) -> PointSet:
    """Embed a validated distance matrix isometrically into (R^n, l_inf).

    Point i becomes row i of the matrix.  Validation (symmetry, zero
    diagonal, positive off-diagonal, triangle inequality within 1e-9
    relative) runs first; the embedding needs the triangle inequality to
    be an isometry.
    """
    dm.validate()
    return normalize(dm.entries, math.inf)
