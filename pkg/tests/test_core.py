"""Distances, normalization, parameters, and the binary point/matrix files."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcsketch import core
from mcsketch.core import (
    DataError,
    DistanceMatrix,
    DuplicatePointError,
    FormatError,
    InputError,
    SketchParams,
    TriangleInequalityError,
    k_parameter,
    load_input,
    lp_distance,
    lp_norm,
    normalize,
    oracle_all_pairs,
    read_matrix,
    read_points,
    read_text_points,
    snap_epsilon,
    write_matrix,
    write_points,
)

import _reference as ref


# --------------------------------------------------------------------------
# lp distances.


def test_345_triangle_distances():
    a = np.array([0.0, 0.0])
    b = np.array([3.0, 4.0])
    assert lp_distance(a, b, 2) == 5.0
    assert lp_distance(a, b, 1) == 7.0
    assert lp_distance(a, b, math.inf) == 4.0


def test_lp_distance_matches_reference():
    rng = np.random.default_rng(0)
    for p in (1.0, 2.0, 3.0, math.inf):
        for _ in range(20):
            u = rng.normal(size=4)
            v = rng.normal(size=4)
            assert lp_distance(u, v, p) == pytest.approx(
                ref.brute_lp(u, v, p), rel=1e-12
            )


def test_lp_norm_is_distance_to_origin():
    v = np.array([3.0, -4.0])
    assert lp_norm(v, 2) == 5.0
    assert lp_norm(v, 1) == 7.0
    assert lp_norm(v, math.inf) == 4.0


def test_lp_distance_zero_vector():
    z = np.zeros(3)
    assert lp_distance(z, z, 2) == 0.0
    assert lp_norm(z, math.inf) == 0.0


def test_invalid_p_rejected():
    a, b = np.zeros(2), np.ones(2)
    for bad in (0.5, 0.0, -1.0, math.nan):
        with pytest.raises(InputError):
            lp_distance(a, b, bad)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 5).flatmap(
        lambda d: st.tuples(
            st.lists(
                st.floats(-100, 100, allow_nan=False, width=32), min_size=d, max_size=d
            ),
            st.lists(
                st.floats(-100, 100, allow_nan=False, width=32), min_size=d, max_size=d
            ),
            st.lists(
                st.floats(-100, 100, allow_nan=False, width=32), min_size=d, max_size=d
            ),
        )
    ),
    st.sampled_from([1.0, 1.5, 2.0, 4.0, math.inf]),
)
def test_metric_axioms(triple, p):
    u, v, w = (np.asarray(x) for x in triple)
    duv = lp_distance(u, v, p)
    assert duv >= 0.0
    assert duv == lp_distance(v, u, p)
    assert lp_distance(u, u, p) == 0.0
    slack = 1e-9 * max(1.0, duv)
    assert duv <= lp_distance(u, w, p) + lp_distance(w, v, p) + slack


# --------------------------------------------------------------------------
# Normalization and the oracle.


def test_normalize_worked_example():
    ps = normalize(np.array([[0.0], [2.0], [20.0]]), 2.0)
    assert ps.scale == 2.0
    assert ps.spread == 10.0
    assert np.array_equal(ps.coords, np.array([[0.0], [1.0], [10.0]]))
    ps.validate()


def test_normalize_rejects_duplicates():
    with pytest.raises(DuplicatePointError):
        normalize(np.array([[1.0, 2.0], [1.0, 2.0], [3.0, 0.0]]), 2.0)


def test_normalize_needs_two_points():
    with pytest.raises(InputError):
        normalize(np.array([[1.0, 2.0]]), 2.0)


def test_oracle_matches_lp_distance_bitwise():
    rng = np.random.default_rng(3)
    for p in (1.0, 2.0, math.inf):
        ps = normalize(rng.normal(size=(17, 3)), p)
        dm = oracle_all_pairs(ps)
        for i in range(ps.n):
            for j in range(ps.n):
                assert dm[i, j] == lp_distance(ps.coords[i], ps.coords[j], p)


def test_oracle_matches_brute_force():
    rng = np.random.default_rng(4)
    ps = normalize(rng.normal(size=(12, 4)), 2.0)
    assert np.allclose(oracle_all_pairs(ps), ref.brute_matrix(ps.coords, 2.0), rtol=1e-12)


# --------------------------------------------------------------------------
# Parameters.


def test_snap_epsilon():
    assert snap_epsilon(0.5) == 0.5
    assert snap_epsilon(0.25) == 0.25
    assert snap_epsilon(0.3) == 0.25
    assert snap_epsilon(0.0625) == 0.0625
    assert snap_epsilon(0.1) == 0.0625
    for bad in (0.0, -0.25, 0.75, 1.0):
        with pytest.raises(InputError):
            snap_epsilon(bad)


def test_sketch_params_snaps_and_validates():
    params = SketchParams(epsilon=0.3)
    assert params.epsilon == 0.25
    assert params.t == 2
    assert SketchParams(epsilon=0.5).t == 1
    with pytest.raises(InputError):
        SketchParams(epsilon=0.25, net_kind="fancy")
    with pytest.raises(InputError):
        SketchParams(epsilon=0.25, jl_constant=0.0)


def test_k_parameter_examples():
    # ceil(log2(2 * spread / eps * d**(1/p)))
    assert k_parameter(2.0, 0.5, 1, 2.0) == 3
    assert k_parameter(1.0, 1.0, 1, 2.0) == 1
    assert k_parameter(2.0**16, 0.25, 1, 2.0) == 19
    assert k_parameter(4.0, 0.25, 4, 2.0) == 6  # 2*4/0.25*2 = 64


# --------------------------------------------------------------------------
# Distance-matrix validation.


def test_distance_matrix_validate_accepts_metric():
    dm = DistanceMatrix(
        entries=np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]])
    )
    dm.validate()


def test_distance_matrix_rejects_triangle_violation():
    bad = DistanceMatrix(
        entries=np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]])
    )
    with pytest.raises(TriangleInequalityError):
        bad.validate()


def test_distance_matrix_rejects_zero_offdiagonal():
    bad = DistanceMatrix(
        entries=np.array([[0.0, 0.0], [0.0, 0.0]])
    )
    with pytest.raises(DuplicatePointError):
        bad.validate()


def test_distance_matrix_rejects_asymmetry():
    bad = DistanceMatrix(entries=np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(DataError):
        bad.validate()


# --------------------------------------------------------------------------
# File formats.


def test_points_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    coords = rng.normal(size=(9, 4))
    path = tmp_path / "pts.mcpt"
    for p in (1.0, 2.0, math.inf, 1.5):
        write_points(path, coords, p)
        back, p_back = read_points(path)
        assert np.array_equal(back, coords)
        assert p_back == p


def test_matrix_roundtrip(tmp_path):
    entries = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]])
    path = tmp_path / "dm.mcdm"
    write_matrix(path, entries)
    back = read_matrix(path)
    assert np.array_equal(back.entries, entries)


def test_matrix_read_validates(tmp_path):
    entries = np.array([[0.0, 1.0, 9.0], [1.0, 0.0, 1.0], [9.0, 1.0, 0.0]])
    path = tmp_path / "bad.mcdm"
    write_matrix(path, entries)
    with pytest.raises(TriangleInequalityError):
        read_matrix(path)


def test_points_bad_magic(tmp_path):
    path = tmp_path / "x.mcpt"
    path.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(FormatError):
        read_points(path)


def test_points_truncated(tmp_path):
    rng = np.random.default_rng(6)
    path = tmp_path / "trunc.mcpt"
    write_points(path, rng.normal(size=(4, 2)), 2.0)
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(FormatError):
        read_points(path)


def test_text_points(tmp_path):
    path = tmp_path / "pts.txt"
    path.write_text("# comment\n0 0\n3,4\n\n1 1\n")
    coords = read_text_points(path)
    assert np.array_equal(coords, np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]]))


def test_text_points_ragged(tmp_path):
    path = tmp_path / "ragged.txt"
    path.write_text("0 0\n1 2 3\n")
    with pytest.raises(DataError):
        read_text_points(path)


def test_load_input_dispatch(tmp_path):
    coords = np.array([[0.0], [1.0], [5.0]])
    ppath = tmp_path / "a.mcpt"
    write_points(ppath, coords, 1.0)
    kind, payload, p = load_input(ppath)
    assert kind == "points" and p == 1.0 and np.array_equal(payload, coords)
    kind, payload, p = load_input(ppath, p_override=math.inf)
    assert p == math.inf

    mpath = tmp_path / "a.mcdm"
    write_matrix(mpath, np.array([[0.0, 1.0], [1.0, 0.0]]))
    kind, payload, p = load_input(mpath)
    assert kind == "matrix" and p == math.inf and isinstance(payload, DistanceMatrix)

    tpath = tmp_path / "a.txt"
    tpath.write_text("0\n1\n5\n")
    kind, payload, p = load_input(tpath)
    assert kind == "points" and p == 2.0 and payload.shape == (3, 1)


def test_encode_p_rational_roundtrip():
    code, num, den = core.encode_p(1.5)
    assert (num, den) == (3, 2)
    assert core.decode_p(code, num, den) == 1.5
    code, num, den = core.encode_p(math.inf)
    assert core.decode_p(code, num, den) == math.inf
    code, num, den = core.encode_p(2.0)
    assert core.decode_p(code, num, den) == 2.0
