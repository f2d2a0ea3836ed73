import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from multnoise.reshape import ReshapeSig, kron, reshape_F, reshape_G, symmetry_maps, unvec, vec

dims = st.integers(1, 4)
finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_vec_is_column_major():
    M = np.array([[1, 2, 3], [4, 5, 6]])
    assert vec(M).tolist() == [1, 4, 2, 5, 3, 6]
    assert np.array_equal(unvec(vec(M), 2, 3), M)


def test_unvec_rejects_bad_size():
    with pytest.raises(ValueError):
        unvec(np.arange(5), 2, 3)


@given(st.data(), dims, dims)
def test_vec_unvec_roundtrip(data, p, q):
    M = data.draw(arrays(float, (p, q), elements=finite))
    assert np.array_equal(unvec(vec(M), p, q), M)


@given(st.data(), dims, dims)
def test_F_of_kron_is_outer_product(data, m, n):
    A = data.draw(arrays(float, (m, n), elements=st.floats(-10, 10)))
    out = reshape_F(kron(A, A), (m, n, m, n))
    assert np.array_equal(out, np.outer(vec(A), vec(A)))


@given(st.data(), dims, dims, dims, dims)
def test_F_and_G_are_inverse_permutations(data, m, n, p, q):
    sig = ReshapeSig(m, n, p, q)
    B = data.draw(arrays(float, sig.block_shape, elements=finite))
    assert np.array_equal(reshape_G(reshape_F(B, sig), sig), B)
    C = data.draw(arrays(float, sig.flat_shape, elements=finite))
    assert np.array_equal(reshape_F(reshape_G(C, sig), sig), C)


def test_F_block_rows_explicit():
    # 2x2 blocks of size 1x2: row j*m+i holds vec of block (i, j)
    B = np.arange(8.0).reshape(2, 4)
    out = reshape_F(B, (2, 2, 1, 2))
    assert out.tolist() == [[0, 1], [4, 5], [2, 3], [6, 7]]


def test_reshape_sig_validation():
    with pytest.raises(ValueError):
        ReshapeSig(0, 1, 1, 1)
    with pytest.raises(ValueError):
        reshape_F(np.zeros((3, 3)), (2, 2, 1, 1))


def test_symmetry_maps_example_n2():
    s = symmetry_maps(2)
    assert s.P.tolist() == [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1]]
    assert s.Q.tolist() == [[1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1]]
    assert s.T.tolist() == [[1, 0, 0, 0], [0, 1, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1]]
    one = symmetry_maps(1)
    assert one.P.tolist() == one.Q.tolist() == one.T.tolist() == [[1.0]]


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_symmetry_maps_identities(n):
    s = symmetry_maps(n)
    assert s.P.shape == (n * (n + 1) // 2, n * n)
    assert np.array_equal(s.P @ s.Q, np.eye(s.reduced_dim))
    assert np.array_equal(s.Q @ s.P, s.T)
    assert not s.P.flags.writeable


@given(st.data(), st.integers(1, 5))
def test_symmetric_vec_survives_elimination(data, n):
    M = data.draw(arrays(float, (n, n), elements=finite))
    S = M + M.T
    s = symmetry_maps(n)
    assert np.array_equal(s.Q @ (s.P @ vec(S)), vec(S))
    assert np.array_equal(s.T @ vec(S), vec(S))
    assert np.array_equal(s.eliminate(vec(S)), s.P @ vec(S))
    assert np.array_equal(s.duplicate(s.P @ vec(S)), vec(S))
