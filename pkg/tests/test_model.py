"""model 模块测试"""
import numpy as np
import pytest
from scipy import sparse

from src.model import (
    BasisIndex,
    ModelParams,
    SparseHamiltonian,
    apply_hamiltonian,
    basis_dim,
    build_hamiltonian,
    build_terms,
    decode_index,
    encode_index,
    parity_operator,
    swap_permutation,
)


@pytest.mark.parametrize("n_cut, dim", [(1, 4), (2, 16), (80, 25600), (180, 129600)])
def test_basis_dim(n_cut, dim):
    assert basis_dim(ModelParams(0.7, 1500.0, 0.2, n_cut)) == dim


@pytest.mark.parametrize("kwargs", [
    dict(g=-0.1, eta=1.0, j=0.1, n_cut=3),
    dict(g=0.5, eta=0.0, j=0.1, n_cut=3),
    dict(g=0.5, eta=1.0, j=-0.1, n_cut=3),
    dict(g=0.5, eta=1.0, j=0.1, n_cut=0),
    dict(g=0.5, eta=1.0, j=0.1, n_cut=2.5),
    dict(g=float('nan'), eta=1.0, j=0.1, n_cut=3),
])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        build_hamiltonian(ModelParams(**kwargs))


def test_index_layout():
    assert encode_index(BasisIndex(1, 2, 1, 0), 3) == 22
    assert decode_index(22, 3) == BasisIndex(1, 2, 1, 0)
    with pytest.raises(ValueError):
        encode_index(BasisIndex(3, 0, 0, 0), 3)
    with pytest.raises(ValueError):
        decode_index(36, 3)


def test_hamiltonian_is_symmetric(small_params):
    h = build_hamiltonian(small_params)
    assert h.dim == 64
    assert abs(h.matrix - h.matrix.T).max() < 1e-14


def test_row_sparsity_bound(small_params):
    # 对角 + 两个自旋翻转项各2个 + 跃迁项4个
    assert build_hamiltonian(small_params).max_row_nnz() <= 9


def test_frozen_photon_space():
    params = ModelParams(g=0.9, eta=3.0, j=0.4, n_cut=1)
    h = build_hamiltonian(params)
    dense = h.matrix.toarray()
    np.testing.assert_allclose(dense, np.diag([-3.0, 0.0, 0.0, 3.0]))


def test_creation_matrix_elements():
    # g=0, η→ 任意: H1 = X_L X_R 在 |n,0,↓,↓> 与 |n+1,1,↓,↓> 之间的矩阵元为 √(n+1)·1
    params = ModelParams(g=0.0, eta=1.0, j=0.0, n_cut=5)
    _, h1 = build_terms(params)
    for n in range(4):
        row = encode_index(BasisIndex(n, 0, 0, 0), 5)
        col = encode_index(BasisIndex(n + 1, 1, 0, 0), 5)
        assert h1[row, col] == pytest.approx(np.sqrt(n + 1))


def test_decoupled_ground_energy():
    params = ModelParams(g=0.0, eta=7.0, j=0.0, n_cut=3)
    h = build_hamiltonian(params)
    assert h.matrix[0, 0] == pytest.approx(-7.0)
    assert np.linalg.eigvalsh(h.matrix.toarray())[0] == pytest.approx(-7.0)


def test_linear_in_hopping(small_params):
    h0, h1 = build_terms(small_params)
    h = build_hamiltonian(small_params)
    assert abs(h.matrix - (h0 + small_params.j * h1)).max() < 1e-14


def test_apply_hamiltonian(small_params, rng):
    h = build_hamiltonian(small_params)
    v = rng.standard_normal(h.dim)
    w = rng.standard_normal(h.dim)
    np.testing.assert_allclose(apply_hamiltonian(h, v), h.matrix.toarray() @ v, atol=1e-12)
    assert apply_hamiltonian(h, v) @ w == pytest.approx(v @ apply_hamiltonian(h, w))
    with pytest.raises(ValueError):
        apply_hamiltonian(h, np.ones(h.dim + 1))


def test_apply_diagonal():
    h = SparseHamiltonian(sparse.diags(np.array([2.0, 3.0, 5.0]), format='csr'))
    np.testing.assert_array_equal(apply_hamiltonian(h, np.array([1.0, 0.0, 0.0])), [2.0, 0.0, 0.0])


def test_parity_labels():
    params = ModelParams(g=0.5, eta=1.0, j=0.1, n_cut=3)
    parity = parity_operator(params)
    assert parity[encode_index(BasisIndex(0, 0, 0, 0), 3)] == 1.0
    assert parity[encode_index(BasisIndex(1, 0, 0, 0), 3)] == -1.0
    assert set(np.unique(parity)) == {-1.0, 1.0}


def test_parity_commutes(small_params, rng):
    h = build_hamiltonian(small_params)
    rows, cols = h.matrix.nonzero()
    assert np.all(h.parity[rows] == h.parity[cols])
    psi = rng.standard_normal(h.dim)
    flipped = h.parity * psi
    assert flipped @ (h.matrix @ flipped) == pytest.approx(psi @ (h.matrix @ psi))


def test_swap_symmetry(small_params):
    h = build_hamiltonian(small_params)
    perm = swap_permutation(small_params)
    swapped = h.matrix[perm][:, perm]
    assert abs(swapped - h.matrix).max() < 1e-14


def test_dump_triplets(tmp_path):
    h = build_hamiltonian(ModelParams(g=0.5, eta=2.0, j=0.1, n_cut=2))
    path = tmp_path / "h.txt"
    h.dump(str(path))
    lines = path.read_text(encoding='utf-8').splitlines()
    assert lines[0].startswith("# dim=16 g=0.5")
    assert len(lines) == h.nnz + 1
    r, c, v = lines[1].split()
    assert h.matrix[int(r), int(c)] == float(v)
