import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tbp_attack import autograd as ag
from tbp_attack.gradchecks import loss_suite
from tbp_attack.losses import (LossWeights, loss_cost_mimicry, loss_decorr, loss_erase, loss_flood, loss_siphon,
                               loss_tmc, loss_tqf)


def logit(p):
    return math.log(p / (1 - p))


def test_flood_examples():
    assert loss_flood(np.full((3, 1), 60.0)).item() == pytest.approx(0.0, abs=1e-20)
    assert loss_flood(np.array([[0.0]])).item() == pytest.approx(0.25, abs=1e-15)
    assert loss_flood(np.array([[logit(0.2)], [logit(0.6)]])).item() == pytest.approx(0.40, abs=1e-12)


def test_flood_empty_warns():
    term = loss_flood(np.zeros((0, 1)))
    assert term.item() == 0.0 and term.warnings


def test_cost_mimicry_examples():
    assert loss_cost_mimicry(np.array([[0.7]])).item() == pytest.approx(0.7, abs=1e-15)
    v = loss_cost_mimicry(np.array([[0.5], [5.0]])).item()
    assert v == pytest.approx(-math.log(math.exp(-0.5) + math.exp(-5.0)), abs=1e-12)
    assert v == pytest.approx(0.4889523, abs=1e-7)  # 0.5 - log(1 + e^-4.5)
    with pytest.raises(ValueError):
        loss_cost_mimicry(np.zeros((0, 2)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.data())
def test_cost_mimicry_sandwich(K, G, data):
    C = data.draw(arrays(np.float64, (K, G), elements=st.floats(0, 50)))
    per = [loss_cost_mimicry(C[:, j: j + 1]).item() for j in range(G)]
    for j, v in enumerate(per):
        assert C[:, j].min() - math.log(K) - 1e-12 <= v <= C[:, j].min() + 1e-12
    assert loss_cost_mimicry(C).item() == pytest.approx(np.mean(per), abs=1e-12)


def test_siphon_examples():
    a = np.array([[1.0, 0.0]])
    assert loss_siphon(a, np.array([[1.0, 0.0], [2.0, 0.0]])).item() == pytest.approx(-1.0)
    assert loss_siphon(a, np.array([[0.0, 1.0]])).item() == pytest.approx(0.0, abs=1e-12)
    assert loss_siphon(a, np.array([[1.0, 0.0], [0.0, 3.0]])).item() == pytest.approx(-0.5)
    assert loss_siphon(np.zeros((0, 2)), a).warnings


def test_decorr_examples():
    h = np.array([[1.0, 2.0, -1.0]])
    assert loss_decorr(h, h).item() == pytest.approx(1.0)
    assert loss_decorr(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])).item() == pytest.approx(0.0, abs=1e-12)
    assert loss_decorr(-h, h).item() == pytest.approx(-1.0)
    assert loss_decorr(np.zeros((0, 3)), np.zeros((0, 3))).warnings


def test_erase_examples():
    assert loss_erase(np.zeros((2, 3))).item() == 0.0
    assert loss_erase(np.array([[1.0, 0.0]])).item() == pytest.approx(1.0)
    assert loss_erase(np.array([[3.0, 4.0]])).item() == pytest.approx(25.0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-3, 3)), arrays(np.float64, (3, 4), elements=st.floats(-3, 3)))
def test_cosine_losses_bounded(a, b):
    for v in (loss_siphon(a, b).item(), loss_decorr(a, b).item()):
        assert -1 - 1e-12 <= v <= 1 + 1e-12


def _frame_parts(seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(4, 1)), rng.uniform(0.5, 3, (4, 2)), rng.normal(size=(4, 6)), rng.normal(size=(3, 6))


def test_tqf_composition():
    lg, C, ha, hb = _frame_parts()
    f, c, s = loss_flood(lg).item(), loss_cost_mimicry(C).item(), loss_siphon(ha, hb).item()
    assert loss_tqf(lg, C, ha, hb, LossWeights(1, 0, 0)).item() == pytest.approx(f, abs=1e-15)
    assert loss_tqf(lg, C, ha, hb, LossWeights(0, 0, 0)).item() == 0.0
    assert loss_tqf(lg, C, ha, hb).item() == pytest.approx(f + c + s, abs=1e-12)


def test_tmc_composition():
    _, _, a, _ = _frame_parts(1)
    b = a[::-1] + 0.3
    d, e = loss_decorr(a, b).item(), loss_erase(a).item()
    assert loss_tmc(a, b, LossWeights(decorr=1, erase=0)).item() == pytest.approx(d, abs=1e-15)
    assert loss_tmc(a, b, LossWeights(decorr=0, erase=1)).item() == pytest.approx(e, abs=1e-15)
    assert loss_tmc(a, b).item() == pytest.approx(d + e, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 3), st.floats(0, 3), st.floats(0, 3))
def test_ablation_matches_dropping_component(wf, wc, ws):
    lg, C, ha, hb = _frame_parts(2)
    full = loss_tqf(lg, C, ha, hb, LossWeights(wf, wc, ws)).item()
    manual = wf * loss_flood(lg).item() + wc * loss_cost_mimicry(C).item() + ws * loss_siphon(ha, hb).item()
    assert full == pytest.approx(manual, abs=1e-12)


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        LossWeights(flood=-1.0)


def test_loss_gradients():
    for name, rep in loss_suite(tol=1e-4):
        assert rep.passed, (name, rep.max_rel_error)


def test_losses_are_differentiable_through_tensors():
    h = ag.Tensor(np.array([[3.0, 4.0]]), requires_grad=True)
    (g,) = ag.grad(loss_erase(h).value, [h])
    np.testing.assert_allclose(g, [[6.0, 8.0]])
