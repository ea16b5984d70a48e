"""fidelity 模块测试"""
import numpy as np
import pytest
from scipy import sparse

from src.eigensolve import LanczosConfig
from src.fidelity import (
    FidelityError,
    fidelity,
    fidelity_susceptibility,
    fs_perturbative,
    infidelity,
    perturbative_susceptibility,
    susceptibility_along,
)
from src.model import ModelParams, SparseHamiltonian

from tests.conftest import RANDOM_SEEDS, random_params, two_level

SIGMA_X = sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_overlap_basics():
    e0, e1 = np.eye(2)
    psi = np.array([0.6, 0.8])
    assert fidelity(psi, psi) == pytest.approx(1.0)
    assert fidelity(psi, -psi) == pytest.approx(1.0)
    assert fidelity(e0, e1) == 0.0
    assert fidelity((e0 + e1) / np.sqrt(2.0), e0) == pytest.approx(1.0 / np.sqrt(2.0))
    with pytest.raises(ValueError):
        fidelity(np.ones(2), np.ones(3))


def test_infidelity_is_accurate_near_one():
    theta = 1e-6
    a = np.array([1.0, 0.0])
    b = np.array([np.cos(theta), np.sin(theta)])
    # 1 − cos θ ≈ θ²/2，直接相减会丢失全部有效数字
    assert infidelity(a, b) == pytest.approx(theta ** 2 / 2.0, rel=1e-6)
    assert infidelity(a, -b) == pytest.approx(theta ** 2 / 2.0, rel=1e-6)


def test_two_level_finite_difference(tight_cfg):
    point = susceptibility_along(two_level, 0.0, 1e-5, tight_cfg)
    assert point.chi_f == pytest.approx(0.25, abs=1e-4)
    assert point.fidelity <= 1.0
    assert point.ground_state.value == pytest.approx(-1.0)


def test_two_level_symmetric_stencil(tight_cfg):
    point = susceptibility_along(two_level, 0.0, 1e-4, tight_cfg, stencil='symmetric')
    assert point.chi_f == pytest.approx(0.25, abs=1e-6)
    assert point.stencil == 'symmetric'


def test_two_level_perturbative_sum():
    assert perturbative_susceptibility(two_level(0.0), SIGMA_X, None) == pytest.approx(0.25)


def test_zero_overlap_raises(tight_cfg):
    flipped = SparseHamiltonian(sparse.csr_matrix(np.diag([-1.0, 1.0])))

    def hamiltonian_at(j):
        return two_level(0.0) if j < 0.5 else flipped

    with pytest.raises(FidelityError):
        susceptibility_along(hamiltonian_at, 0.45, 0.1, tight_cfg)


def test_frozen_photons_give_zero(tight_cfg):
    params = ModelParams(g=0.0, eta=4.0, j=0.2, n_cut=1)
    assert fidelity_susceptibility(params, 1e-4, tight_cfg).chi_f == 0.0
    assert fs_perturbative(params, None) == 0.0


def test_matches_perturbative_oracle(small_params, tight_cfg):
    cfg = tight_cfg.with_sector(1)
    oracle = fs_perturbative(small_params, None, cfg)
    point = fidelity_susceptibility(small_params, 1e-4, cfg)
    assert oracle > 0
    assert point.chi_f == pytest.approx(oracle, rel=1e-2)
    assert point.infidelity == pytest.approx(1.0 - point.fidelity, abs=1e-12)


@pytest.mark.parametrize("seed", RANDOM_SEEDS)
def test_random_instances_match_perturbative_sum(seed):
    params = random_params(seed)
    cfg = LanczosConfig(max_iter=400, tol=1e-12, seed=seed, sector=1)
    oracle = fs_perturbative(params, None, cfg)
    point = fidelity_susceptibility(params, 1e-4, cfg, stencil='symmetric')
    assert oracle > 0
    assert point.chi_f == pytest.approx(oracle, rel=1e-2)


def test_forward_and_backward_agree(small_params, tight_cfg):
    cfg = tight_cfg.with_sector(1)
    forward = fidelity_susceptibility(small_params, 1e-4, cfg, stencil='forward').chi_f
    backward = fidelity_susceptibility(small_params, 1e-4, cfg, stencil='backward').chi_f
    assert forward == pytest.approx(backward, rel=0.05)


def test_halving_step_is_stable(small_params, tight_cfg):
    cfg = tight_cfg.with_sector(1)
    coarse = fidelity_susceptibility(small_params, 1e-4, cfg, stencil='symmetric').chi_f
    fine = fidelity_susceptibility(small_params, 5e-5, cfg, stencil='symmetric').chi_f
    assert fine == pytest.approx(coarse, rel=1e-2)


def test_partial_sums_increase(small_params, tight_cfg):
    cfg = tight_cfg.with_sector(1)
    partial = [fs_perturbative(small_params, k, cfg) for k in (1, 3, 6)]
    full = fs_perturbative(small_params, None, cfg)
    slack = 1e-9 * full
    assert partial[0] <= partial[1] + slack
    assert partial[1] <= partial[2] + slack
    assert partial[2] <= full + slack
    # k_states 覆盖整个扇区时退化为完整求和
    assert fs_perturbative(small_params, 100, cfg) == pytest.approx(full, rel=1e-12)


@pytest.mark.parametrize("delta_j, stencil", [(0.0, 'forward'), (-1e-3, 'forward'), (1e-3, 'central')])
def test_invalid_step(small_params, tight_cfg, delta_j, stencil):
    with pytest.raises(ValueError):
        fidelity_susceptibility(small_params, delta_j, tight_cfg, stencil=stencil)


def test_backward_step_below_zero(tight_cfg):
    params = ModelParams(g=0.5, eta=2.0, j=1e-5, n_cut=2)
    with pytest.raises(ValueError):
        fidelity_susceptibility(params, 1e-4, tight_cfg, stencil='backward')


def test_partial_sum_needs_config(small_params):
    with pytest.raises(ValueError):
        fs_perturbative(small_params, 2, None)


def test_degenerate_excitations_excluded(capsys):
    h = SparseHamiltonian(sparse.csr_matrix(np.diag([0.0, 0.0, 1.0])))
    h1 = sparse.csr_matrix(np.ones((3, 3)))
    value = perturbative_susceptibility(h, h1, None, LanczosConfig())
    assert value == pytest.approx(1.0)
    assert "警告" in capsys.readouterr().out
