"""Core types: point sets, lp metrics, normalization, sketch parameters,
and the on-disk input formats (MCPT point files, MCDM distance matrices,
plain text).

Everything downstream works on a *normalized* point set: coordinates are
divided by the minimum pairwise distance, so the closest pair sits at
distance 1 and the farthest at distance ``spread``.  The divisor is kept as
``scale`` so query answers can be mapped back to original units.

Both binary formats are little-endian.

MCPT:  magic "MCPT", u32 version=1, u8 p-code, [u32 num, u32 den when
       p-code=0], u64 n, u64 d, then n*d f64 row-major coordinates.
       p-code: 1 and 2 mean those norms, 255 means l-infinity, 0 means a
       rational p = num/den given by the two u32 fields.
MCDM:  magic "MCDM", u32 version=1, u64 n, then n*n f64 row-major entries.

Text inputs (one point per line, whitespace- or comma-separated) are
accepted wherever an MCPT file is; p then comes from the caller.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

__all__ = [
    "SketchError",
    "InputError",
    "DataError",
    "DuplicatePointError",
    "TriangleInequalityError",
    "UnknownLabelError",
    "FormatError",
    "GuaranteeError",
    "PointSet",
    "DistanceMatrix",
    "SketchParams",
    "snap_epsilon",
    "k_parameter",
    "lp_distance",
    "lp_norm",
    "normalize",
    "oracle_all_pairs",
    "encode_p",
    "decode_p",
    "write_points",
    "read_points",
    "write_matrix",
    "read_matrix",
    "read_text_points",
    "load_input",
]


# --------------------------------------------------------------------------
# Exceptions.  The CLI maps these onto exit codes (see cli.py), so library
# code raises them instead of bare ValueErrors wherever a user could hit the
# condition from the outside.


class SketchError(Exception):
    """Base class for all errors raised by this package."""


class InputError(SketchError):
    """Invalid parameters or malformed in-memory inputs (CLI exit 1)."""


class DataError(SketchError):
    """Input data that parses but is not a usable metric (CLI exit 3)."""


class DuplicatePointError(DataError):
    """Two input points coincide (zero pairwise distance)."""


class TriangleInequalityError(DataError):
    """A distance matrix violates metric axioms beyond tolerance."""


class UnknownLabelError(DataError):
    """A query referenced a point label outside ``0..n-1``."""


class FormatError(SketchError):
    """Malformed bytes: bad magic/version, truncation, corruption (exit 2)."""


class GuaranteeError(SketchError):
    """A proven invariant failed at runtime (CLI exit 4)."""


# --------------------------------------------------------------------------
# Norms.


def _validate_p(p: float) -> float:
    p = float(p)
    if math.isinf(p) and p > 0:
        return math.inf
    if not (p >= 1.0):
        raise InputError(f"norm parameter p must be >= 1 or inf, got {p!r}")
    return p


def _lp_reduce(diff: np.ndarray, p: float) -> np.ndarray:
    """lp norm along the last axis of ``|diff|``, max-scaled per row.

    Scaling each row by its own max before powering keeps the reduction
    exact for coordinates as large as 2**512 (high-spread instances) and —
    because it is applied unconditionally — guarantees that the one-pair
    path and the all-pairs path produce bit-identical floats.
    """
    diff = np.abs(diff)
    if p == math.inf:
        return diff.max(axis=-1)
    m = diff.max(axis=-1, keepdims=True)
    safe = np.where(m == 0.0, 1.0, m)
    u = diff / safe
    if p == 1.0:
        s = u.sum(axis=-1)
    elif p == 2.0:
        s = np.sqrt((u * u).sum(axis=-1))
    else:
        s = (u**p).sum(axis=-1) ** (1.0 / p)
    return s * m[..., 0]


def lp_distance(u: np.ndarray, v: np.ndarray, p: float) -> float:
    """Distance between two coordinate vectors under the lp norm.

    ``p`` may be any real >= 1 or ``math.inf``.
    """
    p = _validate_p(p)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise InputError(f"shape mismatch: {u.shape} vs {v.shape}")
    return float(_lp_reduce(u - v, p))


def k_parameter(spread: float, epsilon: float, d: int, p: float) -> int:
    """Landmark spacing K = ceil(log2(2 * spread * (1/epsilon) * d^(1/p))).

    Every ingress chain is cut to at most K hops by the landmark table; K
    is also the budget that makes one landmark's worth of coordinates cost
    no more than the chain it replaces.
    """
    return math.ceil(math.log2(2.0 * spread / epsilon * d ** (1.0 / p)))


def lp_norm(vec: np.ndarray, p: float) -> float:
    """lp norm of a single vector (same float path as lp_distance)."""
    p = _validate_p(p)
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1:
        raise InputError(f"expected a vector, got shape {vec.shape}")
    return float(_lp_reduce(vec, p))


def _pairwise(coords: np.ndarray, p: float) -> np.ndarray:
    """Full symmetric distance matrix, same float path as lp_distance."""
    n = coords.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n - 1):
        row = _lp_reduce(coords[i] - coords[i + 1 :], p)
        out[i, i + 1 :] = row
        out[i + 1 :, i] = row
    return out


# --------------------------------------------------------------------------
# Data carriers.


@dataclass(frozen=True)
class PointSet:
    """A normalized point set in (R^d, lp).

    Invariants: ``coords`` is (n, d) float64 with n >= 2, the minimum
    pairwise distance is 1 (to within 1e-12 relative), ``scale`` is the
    divisor that was applied, and ``spread`` is the maximum pairwise
    distance of the normalized coordinates.
    """

    coords: np.ndarray
    p: float
    scale: float
    spread: float

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def validate(self) -> None:
        dm = _pairwise(self.coords, self.p)
        off = dm[~np.eye(self.n, dtype=bool)]
        mn, mx = off.min(), off.max()
        if abs(mn - 1.0) > 1e-12:
            raise InputError(f"point set not normalized: min distance {mn}")
        if abs(mx - self.spread) > 1e-9 * max(1.0, self.spread):
            raise InputError(f"recorded spread {self.spread} but measured {mx}")


@dataclass(frozen=True)
class DistanceMatrix:
    """A general finite metric given explicitly as an (n, n) matrix."""

    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def validate(self, rel_tol: float = 1e-9) -> None:
        d = self.entries
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InputError(f"distance matrix must be square, got {d.shape}")
        n = d.shape[0]
        if n < 2:
            raise InputError("need at least two points")
        if not np.all(np.isfinite(d)):
            raise DataError("distance matrix contains non-finite entries")
        if np.any(np.diag(d) != 0.0):
            raise DataError("distance matrix diagonal must be zero")
        if not np.array_equal(d, d.T):
            if np.abs(d - d.T).max() > rel_tol * max(1.0, np.abs(d).max()):
                raise DataError("distance matrix is not symmetric")
        off = d[~np.eye(n, dtype=bool)]
        if np.any(off <= 0.0):
            raise DuplicatePointError("zero distance between distinct labels")
        # triangle inequality with relative slack
        slack = rel_tol * np.abs(d).max()
        for k in range(n):
            through_k = d[:, k : k + 1] + d[k : k + 1, :]
            if np.any(d > through_k + slack):
                i, j = np.unravel_index(np.argmax(d - through_k), d.shape)
                raise TriangleInequalityError(
                    f"d({i},{j}) = {d[i, j]} > d({i},{k}) + d({k},{j}) = {through_k[i, j]}"
                )


def snap_epsilon(epsilon: float) -> float:
    """Round the accuracy parameter down to the nearest power of two.

    The snapped value 2**-t (t a positive integer) is what every formula
    uses; frexp keeps the computation exact for all float inputs.
    """
    epsilon = float(epsilon)
    if not (0.0 < epsilon <= 0.5):
        raise InputError(f"epsilon must lie in (0, 1/2], got {epsilon!r}")
    _, e = math.frexp(epsilon)  # epsilon = m * 2**e, m in [0.5, 1)
    return math.ldexp(1.0, e - 1)


@dataclass(frozen=True)
class SketchParams:
    """Knobs for sketch construction.

    ``epsilon`` is snapped down to a power of two at construction so every
    consumer sees the effective value.  ``net_kind`` selects the
    displacement codec: "grid" (uniform grid, any p, the default) or
    "ranked" (lattice-ball ranking, p = 2, small d only).
    """

    epsilon: float
    net_kind: str = "grid"
    landmarks: bool = False
    jl_enabled: bool = True
    jl_constant: float = 4.0
    jl_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "epsilon", snap_epsilon(self.epsilon))
        if self.net_kind not in ("grid", "ranked"):
            raise InputError(f"unknown net kind {self.net_kind!r}")
        if self.jl_constant <= 0:
            raise InputError("jl_constant must be positive")

    @property
    def t(self) -> int:
        """epsilon = 2**-t; t is a positive integer after snapping."""
        return int(round(-math.log2(self.epsilon)))


# --------------------------------------------------------------------------
# Normalization and the exact oracle.


def normalize(coords: np.ndarray, p: float) -> PointSet:
    """Scale a raw point array so the closest pair is at distance 1.

    Raises DuplicatePointError when two rows coincide (the sketch cannot
    represent zero distances between distinct labels).
    """
    p = _validate_p(p)
    coords = np.ascontiguousarray(np.asarray(coords, dtype=np.float64))
    if coords.ndim != 2:
        raise InputError(f"expected an (n, d) array, got shape {coords.shape}")
    n = coords.shape[0]
    if n < 2:
        raise InputError("need at least two points")
    if not np.all(np.isfinite(coords)):
        raise DataError("coordinates contain non-finite values")
    dm = _pairwise(coords, p)
    off = dm[~np.eye(n, dtype=bool)]
    mn = float(off.min())
    if mn == 0.0:
        i, j = np.argwhere((dm == 0.0) & ~np.eye(n, dtype=bool))[0]
        raise DuplicatePointError(f"points {i} and {j} coincide")
    normed = coords / mn
    dmn = _pairwise(normed, p)
    offn = dmn[~np.eye(n, dtype=bool)]
    # the minimum distance is 1 by construction, so the spread (diameter
    # over minimum) is >= 1; recomputing distances from divided coordinates
    # can land a few ulps under that, which the clamp absorbs
    return PointSet(coords=normed, p=p, scale=mn, spread=max(1.0, float(offn.max())))


def oracle_all_pairs(ps: PointSet) -> np.ndarray:
    """Exact (n, n) distance matrix of a normalized point set.

    Every entry equals ``lp_distance(coords[i], coords[j], p)`` bit for bit
    (both run through the same reduction).
    """
    return _pairwise(ps.coords, ps.p)


# --------------------------------------------------------------------------
# On-disk input formats.

MCPT_MAGIC = b"MCPT"
MCDM_MAGIC = b"MCDM"
FORMAT_VERSION = 1

P_CODE_INF = 255
P_CODE_RATIONAL = 0


def encode_p(p: float) -> tuple[int, int, int]:
    """Map a norm parameter to (code, num, den) header fields."""
    if math.isinf(p):
        return P_CODE_INF, 0, 0
    if p == 1.0:
        return 1, 0, 0
    if p == 2.0:
        return 2, 0, 0
    # find a small exact rational; inputs come from CLI strings like 1.5
    frac = Fraction(p).limit_denominator(10**6)
    if float(frac) != p or frac < 1:
        raise InputError(f"p={p!r} is not representable as a small rational >= 1")
    if frac.numerator >= 2**32 or frac.denominator >= 2**32:
        raise InputError(f"p={p!r} rational encoding out of range")
    return P_CODE_RATIONAL, frac.numerator, frac.denominator

def decode_p(code: int, num: int, den: int) -> float:
    if code == P_CODE_INF:
        return math.inf
    if code in (1, 2):
        return float(code)
    if code == P_CODE_RATIONAL:
        if den == 0 or num < den:
            raise FormatError(f"invalid rational p fields num={num} den={den}")
        return num / den
    raise FormatError(f"unknown p-code {code}")


def write_points(path: str | Path, coords: np.ndarray, p: float) -> None:
    coords = np.asarray(coords, dtype="<f8")
    if coords.ndim != 2:
        raise InputError(f"expected (n, d) coordinates, got shape {coords.shape}")
    code, num, den = encode_p(p)
    n, d = coords.shape
    with open(path, "wb") as fh:
        fh.write(MCPT_MAGIC)
        fh.write(struct.pack("<IB", FORMAT_VERSION, code))
        if code == P_CODE_RATIONAL:
            fh.write(struct.pack("<II", num, den))
        fh.write(struct.pack("<QQ", n, d))
        fh.write(coords.tobytes(order="C"))


def read_points(path: str | Path) -> tuple[np.ndarray, float]:
    """Read an MCPT file; returns (raw coordinates, p)."""
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != MCPT_MAGIC:
        raise FormatError(f"{path}: not an MCPT file (bad magic)")
    off = 4
    try:
        version, code = struct.unpack_from("<IB", blob, off)
        off += 5
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported MCPT version {version}")
        num = den = 0
        if code == P_CODE_RATIONAL:
            num, den = struct.unpack_from("<II", blob, off)
            off += 8
        n, d = struct.unpack_from("<QQ", blob, off)
        off += 16
    except struct.error as exc:
        raise FormatError(f"{path}: truncated MCPT header") from exc
    p = decode_p(code, num, den)
    if n < 1 or d < 1 or n * d > 10**9:
        raise FormatError(f"{path}: implausible MCPT dimensions n={n} d={d}")
    want = n * d * 8
    body = blob[off:]
    if len(body) != want:
        raise FormatError(f"{path}: expected {want} payload bytes, found {len(body)}")
    coords = np.frombuffer(body, dtype="<f8").reshape(n, d).astype(np.float64)
    return coords, p


def write_matrix(path: str | Path, entries: np.ndarray) -> None:
    entries = np.asarray(entries, dtype="<f8")
    n = entries.shape[0]
    if entries.shape != (n, n):
        raise InputError(f"expected a square matrix, got shape {entries.shape}")
    with open(path, "wb") as fh:
        fh.write(MCDM_MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, n))
        fh.write(entries.tobytes(order="C"))


def read_matrix(path: str | Path) -> DistanceMatrix:
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != MCDM_MAGIC:
        raise FormatError(f"{path}: not an MCDM file (bad magic)")
    try:
        version, n = struct.unpack_from("<IQ", blob, 4)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated MCDM header") from exc
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported MCDM version {version}")
    if n < 2 or n * n > 10**9:
        raise FormatError(f"{path}: implausible MCDM size n={n}")
    body = blob[16:]
    if len(body) != n * n * 8:
        raise FormatError(f"{path}: expected {n * n * 8} payload bytes, found {len(body)}")
    entries = np.frombuffer(body, dtype="<f8").reshape(n, n).astype(np.float64)
    dm = DistanceMatrix(entries=entries)
    dm.validate()
    return dm


def read_text_points(path: str | Path) -> np.ndarray:
    """Parse whitespace- or comma-separated coordinates, one point per line."""
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            try:
                rows.append([float(tok) for tok in parts])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: unparsable coordinate") from exc
    if not rows:
        raise FormatError(f"{path}: no points found")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DataError(f"{path}: inconsistent row widths")
    return np.asarray(rows, dtype=np.float64)


def load_input(path: str | Path, p_override: float | None = None):
    """Dispatch on magic: returns ('points', coords, p) or ('matrix', dm, inf)."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MCPT_MAGIC:
        coords, p = read_points(path)
        return "points", coords, (p_override if p_override is not None else p)
    if head == MCDM_MAGIC:
        return "matrix", read_matrix(path), math.inf
    coords = read_text_points(path)
    return "points", coords, (p_override if p_override is not None else 2.0)
