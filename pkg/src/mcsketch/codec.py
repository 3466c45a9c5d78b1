"""Bit-exact sketch serialization ("MCSK" blobs).

Layout, all multi-byte header fields little-endian:

* header: magic ``MCSK``; u16 version (1); u8 p-code (1, 2, 255 = inf;
  0 = rational p followed by u32 numerator + u32 denominator); u64 n;
  u64 d; f64 epsilon (post-snap); f64 scale; f64 spread; u8 flags (bit 0:
  ranked displacement codec, bit 1: landmark table present); u64 random
  projection seed; u64 pre-projection dimension (0 when no projection was
  applied); u64 payload bit length.

* payload, an MSB-first bit stream of four sections:

  1. tree shape as balanced parentheses, two bits per node, DFS preorder;
  2. per non-root node in preorder: one bit short/long, long edges
     followed by the Elias-gamma coded level gap (>= 2);
  3. per node in preorder: center label in ceil(log2 n) bits; for nodes
     that are not part roots, the ingress as one flag bit (0 = parent,
     1 = reference into the preorder enumeration of nodes without short
     children, in ceil(log2 L) bits); Elias-gamma of inv_delta - 4; and,
     again for non-part-roots, the displacement code (fixed-width rank-1
     for the ranked codec, else d biased grid integers);
  4. when flags bit 1 is set, per decomposition part in preorder-of-roots:
     Elias-gamma of (landmark count + 1), then per landmark its node id in
     ceil(log2 N) bits and d exact surrogate-shift integers, biased, in
     K+2 bits each where K is the landmark spacing parameter.

* trailer: u32 CRC-32 (zlib) of header plus payload bytes.  Every header
  or payload corruption is caught by the CRC at the latest; structural
  validation (leaf counts, level consistency, permutation of leaf labels,
  index ranges, ingress acyclicity, padding) runs after it so corrupt or
  truncated blobs always fail loudly with FormatError.

Decoding levels: the gaps give each node's level relative to the root;
all leaves must land on one common level, which is then pinned to 0.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import net
from ._bitio import BitReader, BitWriter
from .core import (
    FormatError,
    GuaranteeError,
    decode_p,
    encode_p,
    k_parameter,
    snap_epsilon,
)
from .hst import SketchTree, subtree_decomposition

__all__ = ["SketchModel", "SizeReport", "serialize", "deserialize", "size_report"]

MAGIC = b"MCSK"
VERSION = 1

_FLAG_RANKED = 1
_FLAG_LANDMARKS = 2


@dataclass
class SketchModel:
    """Everything a decoder needs to answer queries; the codec's schema."""

    tree: SketchTree
    center: list[int]
    ingress: list[int | None]
    inv_delta: list[int]
    eta_ints: list[np.ndarray | None]
    eta_rank: list[int | None]
    net_kind: str
    landmarks: dict[int, tuple[int, ...]] | None
    p: float
    epsilon: float
    scale: float
    spread: float
    n: int
    d: int
    jl_seed: int
    jl_orig_dim: int


@dataclass
class SizeReport:
    """Exact bit accounting of one blob; sections sum to the total."""

    total_bytes: int
    header_bytes: int
    crc_bytes: int
    tree_shape_bits: int
    long_gap_bits: int
    center_bits: int
    ingress_bits: int
    precision_bits: int
    displacement_bits: int
    landmark_bits: int
    padding_bits: int
    n: int

    @property
    def total_bits(self) -> int:
        return 8 * self.total_bytes

    @property
    def payload_bits(self) -> int:
        return (
            self.tree_shape_bits
            + self.long_gap_bits
            + self.center_bits
            + self.ingress_bits
            + self.precision_bits
            + self.displacement_bits
            + self.landmark_bits
        )

    @property
    def bits_per_point(self) -> float:
        return self.total_bits / self.n


def _pack_p(p: float) -> bytes:
    code, num, den = encode_p(p)
    out = struct.pack("<B", code)
    if code == 0:
        out += struct.pack("<II", num, den)
    return out


def _ranked_width(d: int, delta_eff: float) -> int:
    return (net.capacity(d, delta_eff, 1.0 + delta_eff) - 1).bit_length()


def _is_part_root(tree: SketchTree, v: int) -> bool:
    return tree.parent[v] == -1 or tree.long_edge[v]


def serialize(model: SketchModel) -> bytes:
    """Deterministic bytes of a sketch model (see module docstring)."""
    tree = model.tree
    n_nodes = tree.n_nodes
    n = model.n
    d = model.d
    eps = model.epsilon
    ranked = model.net_kind == "ranked"

    w = BitWriter()
    # 1. shape
    stack: list[tuple[int, bool]] = [(tree.root, False)]
    while stack:
        v, closing = stack.pop()
        if closing:
            w.write_uint(0, 1)
            continue
        w.write_uint(1, 1)
        stack.append((v, True))
        for c in reversed(tree.children[v]):
            stack.append((c, False))

    # 2. edges
    for v in range(1, n_nodes):
        if tree.long_edge[v]:
            w.write_uint(1, 1)
            w.write_gamma(tree.edge_gap(v))
        else:
            w.write_uint(0, 1)

    # 3. node records
    center_w = (n - 1).bit_length()
    subtree_leaves = [v for v in range(n_nodes) if tree.is_subtree_leaf(v)]
    leaf_ref = {v: i for i, v in enumerate(subtree_leaves)}
    ref_w = (len(subtree_leaves) - 1).bit_length()
    for v in range(n_nodes):
        w.write_uint(model.center[v], center_w)
        root_here = _is_part_root(tree, v)
        if not root_here:
            ing = model.ingress[v]
            if ing == tree.parent[v]:
                w.write_uint(0, 1)
            else:
                if ing not in leaf_ref:
                    raise GuaranteeError(
                        f"ingress of node {v} is neither parent nor short-childless"
                    )
                w.write_uint(1, 1)
                w.write_uint(leaf_ref[ing], ref_w)
        w.write_gamma(model.inv_delta[v] - 4)
        if not root_here:
            delta_eff = net.delta_effective(
                eps, tree.is_subtree_leaf(v), model.inv_delta[v]
            )
            if ranked:
                w.write_uint(model.eta_rank[v] - 1, _ranked_width(d, delta_eff))
            else:
                bound = net.grid_bound(delta_eff, d, model.p)
                width = net.grid_bit_width(delta_eff, d, model.p)
                for m in model.eta_ints[v]:
                    w.write_uint(int(m) + bound, width)

    # 4. landmarks
    if model.landmarks is not None:
        decomp = subtree_decomposition(tree)
        kk = k_parameter(model.spread, eps, d, model.p)
        node_w = (n_nodes - 1).bit_length()
        bias = 1 << (kk + 1)
        for pid in range(len(decomp.roots)):
            lms = sorted(
                v for v in model.landmarks if decomp.part_of[v] == pid
            )
            w.write_gamma(len(lms) + 1)
            for v in lms:
                w.write_uint(v, node_w)
                shift = model.landmarks[v]
                for k in shift:
                    val = k + bias
                    if not 0 <= val < (1 << (kk + 2)):
                        raise GuaranteeError(
                            f"landmark shift {k} exceeds the K+2-bit budget"
                        )
                    w.write_uint(val, kk + 2)

    payload = w.getvalue()
    flags = (_FLAG_RANKED if ranked else 0) | (
        _FLAG_LANDMARKS if model.landmarks is not None else 0
    )
    header = (
        MAGIC
        + struct.pack("<H", VERSION)
        + _pack_p(model.p)
        + struct.pack(
            "<QQdddBQQQ",
            n,
            d,
            eps,
            model.scale,
            model.spread,
            flags,
            model.jl_seed,
            model.jl_orig_dim,
            w.bit_length,
        )
    )
    body = header + payload
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize(data: bytes) -> SketchModel:
    model, _ = _parse(data)
    return model


def size_report(data: bytes) -> SizeReport:
    _, sizes = _parse(data)
    return sizes


def _parse(data: bytes) -> tuple[SketchModel, SizeReport]:
    if len(data) < 11:
        raise FormatError("blob truncated before the fixed header")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    p_code = data[6]
    off = 7
    num = den = 0
    if p_code == 0:
        if len(data) < off + 8:
            raise FormatError("blob truncated inside the rational norm field")
        num, den = struct.unpack_from("<II", data, off)
        off += 8
    p = decode_p(p_code, num, den)
    tail = struct.calcsize("<QQdddBQQQ")
    if len(data) < off + tail + 4:
        raise FormatError("blob truncated inside the header")
    n, d, eps, scale, spread, flags, jl_seed, jl_orig_dim, payload_bits = (
        struct.unpack_from("<QQdddBQQQ", data, off)
    )
    header_len = off + tail
    payload_len = (payload_bits + 7) // 8
    if len(data) != header_len + payload_len + 4:
        raise FormatError(
            f"length mismatch: {len(data)} bytes vs header {header_len} + "
            f"payload {payload_len} + crc 4"
        )
    (crc_stored,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc_stored:
        raise FormatError("checksum mismatch (corrupt blob)")

    if flags & ~(_FLAG_RANKED | _FLAG_LANDMARKS):
        raise FormatError(f"unknown flag bits {flags:#x}")
    ranked = bool(flags & _FLAG_RANKED)
    has_landmarks = bool(flags & _FLAG_LANDMARKS)
    if not 2 <= n < 2**40:
        raise FormatError(f"implausible point count {n}")
    if not 1 <= d < 2**32:
        raise FormatError(f"implausible dimension {d}")
    if not (math.isfinite(eps) and 0.0 < eps <= 0.5 and snap_epsilon(eps) == eps):
        raise FormatError(f"epsilon {eps} is not a power of two in (0, 1/2]")
    if not (math.isfinite(scale) and scale > 0.0):
        raise FormatError(f"implausible scale {scale}")
    if not (math.isfinite(spread) and spread >= 1.0):
        raise FormatError(f"implausible spread {spread}")

    payload = data[header_len : header_len + payload_len]
    if payload_len:
        pad = 8 * payload_len - payload_bits
        if pad and payload[-1] & ((1 << pad) - 1):
            raise FormatError("nonzero padding bits")
    r = BitReader(payload, payload_bits)

    # 1. shape
    if r.read_uint(1) != 1:
        raise FormatError("payload does not open with the root")
    parent = [-1]
    children: list[list[int]] = [[]]
    open_stack = [0]
    while open_stack:
        if r.read_uint(1):
            node = len(parent)
            parent.append(open_stack[-1])
            children.append([])
            children[open_stack[-1]].append(node)
            open_stack.append(node)
        else:
            open_stack.pop()
    n_nodes = len(parent)
    shape_bits = r.position

    # 2. edges
    long_edge = [False] * n_nodes
    gaps = [0] * n_nodes
    gap_bits_total = 0
    for v in range(1, n_nodes):
        if r.read_uint(1):
            long_edge[v] = True
            before = r.position
            gaps[v] = r.read_gamma()
            gap_bits_total += r.position - before
            if gaps[v] < 2:
                raise FormatError(f"long edge into {v} has gap {gaps[v]} < 2")
        else:
            gaps[v] = 1
    edge_bits = r.position - shape_bits
    edge_flag_bits = edge_bits - gap_bits_total

    # levels: depth below root, then pin the common leaf level to 0
    rel = [0] * n_nodes
    for v in range(1, n_nodes):
        rel[v] = rel[parent[v]] - gaps[v]
    leaves = [v for v in range(n_nodes) if not children[v]]
    if len(leaves) != n:
        raise FormatError(f"blob announces n={n} but has {len(leaves)} leaves")
    leaf_rel = {rel[v] for v in leaves}
    if len(leaf_rel) != 1:
        raise FormatError("leaves do not share a common level")
    root_level = -leaf_rel.pop()
    if root_level < 1 or root_level > math.frexp(spread)[1]:
        raise FormatError(
            f"root level {root_level} inconsistent with spread {spread}"
        )
    level = [rel[v] + root_level for v in range(n_nodes)]

    leaf_label = [-1] * n_nodes
    tree = SketchTree(
        level=level,
        parent=parent,
        children=children,
        long_edge=long_edge,
        leaf_label=leaf_label,
        root=0,
    )

    # 3. node records
    center_w = (n - 1).bit_length()
    subtree_leaves = [v for v in range(n_nodes) if tree.is_subtree_leaf(v)]
    ref_w = (len(subtree_leaves) - 1).bit_length()
    center = [0] * n_nodes
    ingress: list[int | None] = [None] * n_nodes
    inv_delta = [0] * n_nodes
    eta_ints: list[np.ndarray | None] = [None] * n_nodes
    eta_rank: list[int | None] = [None] * n_nodes
    center_bits = ingress_bits = precision_bits = displacement_bits = 0
    for v in range(n_nodes):
        mark = r.position
        center[v] = r.read_uint(center_w)
        if center[v] >= n:
            raise FormatError(f"center label {center[v]} out of range")
        center_bits += r.position - mark
        root_here = _is_part_root(tree, v)
        if not root_here:
            mark = r.position
            if r.read_uint(1):
                idx = r.read_uint(ref_w)
                if idx >= len(subtree_leaves):
                    raise FormatError(f"ingress reference {idx} out of range")
                ingress[v] = subtree_leaves[idx]
            else:
                ingress[v] = parent[v]
            ingress_bits += r.position - mark
        mark = r.position
        inv_delta[v] = 4 + r.read_gamma()
        precision_bits += r.position - mark
        if not root_here:
            mark = r.position
            delta_eff = net.delta_effective(eps, tree.is_subtree_leaf(v), inv_delta[v])
            if ranked:
                rank_idx = r.read_uint(_ranked_width(d, delta_eff)) + 1
                eta_rank[v] = rank_idx
                eta_ints[v] = np.array(
                    net.unrank(rank_idx, d, delta_eff, 1.0 + delta_eff),
                    dtype=np.int64,
                )
            else:
                bound = net.grid_bound(delta_eff, d, p)
                width = net.grid_bit_width(delta_eff, d, p)
                vals = np.empty(d, dtype=np.int64)
                for i in range(d):
                    raw = r.read_uint(width) - bound
                    if raw > bound:
                        raise FormatError(f"grid integer {raw} exceeds bound {bound}")
                    vals[i] = raw
                eta_ints[v] = vals
            displacement_bits += r.position - mark

    for v in leaves:
        leaf_label[v] = center[v]
    if sorted(center[v] for v in leaves) != list(range(n)):
        raise FormatError("leaf centers are not a permutation of the labels")
    for v in range(n_nodes):
        if children[v] and center[v] not in {center[c] for c in children[v]}:
            raise FormatError(f"center of node {v} is not inherited from a child")
    tree.verify()

    decomp = subtree_decomposition(tree)
    _check_ingress_forest(tree, ingress, decomp)

    # 4. landmarks
    landmarks: dict[int, tuple[int, ...]] | None = None
    landmark_bits = 0
    if has_landmarks:
        mark = r.position
        kk = k_parameter(spread, eps, d, p)
        node_w = (n_nodes - 1).bit_length()
        bias = 1 << (kk + 1)
        landmarks = {}
        for pid in range(len(decomp.roots)):
            count = r.read_gamma() - 1
            for _ in range(count):
                v = r.read_uint(node_w)
                if v >= n_nodes:
                    raise FormatError(f"landmark node {v} out of range")
                if decomp.part_of[v] != pid:
                    raise FormatError(f"landmark node {v} recorded in wrong part")
                if v in landmarks:
                    raise FormatError(f"duplicate landmark node {v}")
                shift = tuple(r.read_uint(kk + 2) - bias for _ in range(d))
                landmarks[v] = shift
        landmark_bits = r.position - mark

    if r.position != payload_bits:
        raise FormatError(
            f"payload length mismatch: read {r.position} of {payload_bits} bits"
        )

    model = SketchModel(
        tree=tree,
        center=center,
        ingress=ingress,
        inv_delta=inv_delta,
        eta_ints=eta_ints,
        eta_rank=eta_rank,
        net_kind="ranked" if ranked else "grid",
        landmarks=landmarks,
        p=p,
        epsilon=eps,
        scale=scale,
        spread=spread,
        n=n,
        d=d,
        jl_seed=jl_seed,
        jl_orig_dim=jl_orig_dim,
    )
    sizes = SizeReport(
        total_bytes=len(data),
        header_bytes=header_len,
        crc_bytes=4,
        tree_shape_bits=shape_bits + edge_flag_bits,
        long_gap_bits=gap_bits_total,
        center_bits=center_bits,
        ingress_bits=ingress_bits,
        precision_bits=precision_bits,
        displacement_bits=displacement_bits,
        landmark_bits=landmark_bits,
        padding_bits=8 * payload_len - payload_bits,
        n=n,
    )
    return model, sizes


def _check_ingress_forest(tree, ingress, decomp) -> None:
    """Ingress edges must stay inside each part and reach the part root."""
    n_nodes = tree.n_nodes
    kids: list[list[int]] = [[] for _ in range(n_nodes)]
    for v in range(n_nodes):
        ing = ingress[v]
        if _is_part_root(tree, v):
            if ing is not None:
                raise FormatError(f"part root {v} carries an ingress")
            continue
        if ing is None:
            raise FormatError(f"node {v} lacks an ingress")
        if decomp.part_of[ing] != decomp.part_of[v]:
            raise FormatError(f"ingress of {v} crosses a long edge")
        kids[ing].append(v)
    seen = 0
    stack = list(decomp.roots)
    while stack:
        v = stack.pop()
        seen += 1
        stack.extend(kids[v])
    if seen != n_nodes:
        raise FormatError("ingress references contain a cycle")
