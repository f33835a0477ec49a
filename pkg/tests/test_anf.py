import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcsn import AbsNormalForm, anf_eval, recover_x, selection_function, signature_at, to_ave
from pcsn.anf import (
    InconsistentSolution, SingularError, all_signatures, ave_solutions, limiting_jacobian,
    load_anf, resolve_zeros,
)

from fixtures import NESTED_ANF, random_square_anf, unstable_anf

half_abs = AbsNormalForm(c=[0.0], b=[0.0], Z=[[1.0]], L=[[0.0]], J=[[1.0]], Y=[[0.5]])


def test_nested_eval():
    y, z = anf_eval(NESTED_ANF, [1.0, 2.0])
    assert z.tolist() == [-1.0, 2.0, -1.0] and y.tolist() == [3.0, 2.0]
    y, z = anf_eval(NESTED_ANF, [0.0, 0.0])
    assert not z.any() and not y.any()


def test_affine_anf():
    anf = AbsNormalForm.affine([[2.0, 1.0], [0.0, 3.0]], [1.0, -1.0])
    assert anf.s == 0
    np.testing.assert_array_equal(anf([1.0, 1.0]), [4.0, 2.0])


def test_signatures():
    assert signature_at(NESTED_ANF, [1.0, 2.0]).tolist() == [-1, 1, -1]
    assert signature_at(NESTED_ANF, [2.0, 1.0]).tolist() == [1, 1, 1]
    assert signature_at(NESTED_ANF, [1.0, 1.0]).tolist()[0] == 0


def test_binary_signature_order():
    assert [s.tolist() for s in all_signatures(2)] == [[1, 1], [1, -1], [-1, 1], [-1, -1]]


def test_resolve_zeros():
    assert resolve_zeros(np.array([0, -1, 1])).tolist() == [1, -1, 1]
    assert resolve_zeros(np.array([0, 0]), fallback=np.array([-1, 1])).tolist() == [-1, 1]


@pytest.mark.parametrize("sigma, A", [((1, 1, 1), [[3, -2], [0, 1]]), ((-1, 1, -1), [[-1, 2], [0, 1]])])
def test_nested_selection(sigma, A):
    sel = selection_function(NESTED_ANF, np.array(sigma))
    np.testing.assert_array_equal(sel.A, A)
    np.testing.assert_array_equal(sel.d, [0, 0])


def test_selection_of_affine_anf():
    anf = AbsNormalForm.affine([[2.0]], [3.0])
    sel = selection_function(anf, np.zeros(0, dtype=int))
    assert sel.A.tolist() == [[2.0]] and sel.d.tolist() == [3.0]


def test_selection_matches_eval_inside_region():
    rng = np.random.default_rng(5)
    for _ in range(20):
        anf = random_square_anf(rng, 3, 4)
        for x in rng.standard_normal((10, 3)):
            sigma = signature_at(anf, x)
            sel = selection_function(anf, sigma)
            np.testing.assert_allclose(sel.A @ x + sel.d, anf(x), atol=1e-10)
            assert np.all(sel.G @ x + sel.h >= -1e-10)


def test_limiting_jacobian_dets():
    assert np.linalg.det(limiting_jacobian(NESTED_ANF, np.array([1, 1, 1]))) == pytest.approx(3.0)
    assert np.linalg.det(limiting_jacobian(AbsNormalForm.affine(np.eye(2)), np.zeros(0, dtype=int))) == 1.0


def test_unstable_example_ave():
    ave = to_ave(unstable_anf())
    np.testing.assert_array_equal(ave.S, [[1.0, -1.0], [2.0, -1.0]])
    dets = [np.linalg.det(np.eye(2) - ave.S * s[None, :]) for s in all_signatures(2)]
    np.testing.assert_allclose(dets, [2, -2, 2, 2], atol=1e-14)


def test_half_abs_ave():
    assert to_ave(half_abs).S.tolist() == [[-0.5]]


def test_empty_ave_and_recovery():
    anf = AbsNormalForm.affine([[2.0, 0.0], [1.0, 1.0]], [1.0, 0.0])
    ave = to_ave(anf, target=[3.0, 2.0])
    assert ave.s == 0
    x = recover_x(anf, np.zeros(0), target=[3.0, 2.0])
    np.testing.assert_allclose(x, [1.0, 1.0])


def test_singular_J_rejected():
    anf = AbsNormalForm(c=[0.0], b=[0.0, 0.0], Z=[[1.0, 0.0]], L=[[0.0]],
                        J=[[1.0, 1.0], [1.0, 1.0]], Y=[[1.0], [0.0]])
    with pytest.raises(SingularError):
        to_ave(anf)


def test_rectangular_rejected():
    anf = AbsNormalForm(c=[0.0], b=[0.0], Z=[[1.0, 0.0]], L=[[0.0]], J=[[1.0, 1.0]], Y=[[1.0]])
    with pytest.raises(ValueError):
        to_ave(anf)


def test_unstable_example_identity_branch():
    anf = unstable_anf(0.5)
    target = np.array([0.7])
    # identity branch: x = 0.7 gives z = (0.2, 0.9)
    z = np.array([0.2, 0.9])
    np.testing.assert_allclose(to_ave(anf, target).residual(z), 0, atol=1e-14)
    x = recover_x(anf, z, target)
    np.testing.assert_allclose(x, [0.7], atol=1e-14)
    np.testing.assert_allclose(anf(x), target, atol=1e-14)


def test_inconsistent_z_flagged():
    with pytest.raises(InconsistentSolution):
        recover_x(unstable_anf(0.5), np.array([5.0, -3.0]), np.array([0.7]))


def test_random_round_trip():
    rng = np.random.default_rng(11)
    anf = random_square_anf(rng, 3, 3)
    for sol in ave_solutions(to_ave(anf)):
        x = recover_x(anf, sol)
        assert np.abs(anf(x)).max() < 1e-10
        np.testing.assert_allclose(anf_eval(anf, x)[1], sol, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 5), st.integers(0, 2**32 - 1))
def test_det_identity(n, s, seed):
    anf = random_square_anf(np.random.default_rng(seed), n, s)
    S = to_ave(anf).S
    dJ = np.linalg.det(anf.J)
    for sigma in all_signatures(s):
        lhs = np.linalg.det(selection_function(anf, sigma).A)
        rhs = dJ * np.linalg.det(np.eye(s) - S * sigma[None, :])
        assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-10 * abs(dJ))


def test_validation():
    with pytest.raises(ValueError, match="lower"):
        AbsNormalForm(c=[0.0, 0.0], b=[0.0], Z=[[1.0], [1.0]], L=[[0.0, 1.0], [0.0, 0.0]],
                      J=[[1.0]], Y=[[1.0, 1.0]])
    with pytest.raises(ValueError):
        AbsNormalForm(c=[0.0], b=[0.0], Z=[[1.0, 2.0]], L=[[0.0]], J=[[1.0]], Y=[[1.0]])


def test_frozen_arrays():
    with pytest.raises(ValueError):
        NESTED_ANF.J[0, 0] = 5.0


def test_json_round_trip(tmp_path):
    p = tmp_path / "a.json"
    p.write_text(json.dumps(NESTED_ANF.to_dict()))
    assert load_anf(p) == NESTED_ANF


def test_malformed_json_block():
    d = NESTED_ANF.to_dict()
    d["Z"] = [[1.0]]
    with pytest.raises(ValueError, match="block Z"):
        AbsNormalForm.from_dict(d)
