"""Metric oracles (hand-computed) and AdamW behavior."""

import math

import numpy as np
import pytest

from numgpt.core import NumericError, Tape, Tensor, square, tsum
from numgpt.errors import UsageError
from numgpt.metrics import (
    accuracy,
    aggregate,
    f1_macro,
    f1_micro,
    generation_metrics,
    welch_t,
)
from numgpt.optim import AdamW


def test_all_correct():
    y = [0, 1, 2, 1]
    assert accuracy(y, y) == 1.0
    assert f1_micro(y, y) == 1.0
    assert f1_macro(y, y) == 1.0


def test_binary_all_zero_prediction():
    y_true = [0, 0, 1, 1]
    y_pred = [0, 0, 0, 0]
    assert accuracy(y_true, y_pred) == 0.5
    # class 0: P=1/2, R=1 -> F1=2/3; class 1: F1=0; macro = 1/3
    assert f1_macro(y_true, y_pred) == pytest.approx(1 / 3)


def test_three_class_confusion_matrix_oracle():
    # confusion matrix [[5,0,0],[0,3,2],[1,0,4]] (rows true, cols pred)
    y_true = [0] * 5 + [1] * 5 + [2] * 5
    y_pred = [0] * 5 + [1] * 3 + [2] * 2 + [0] + [2] * 4
    assert f1_micro(y_true, y_pred) == pytest.approx(0.8)
    # class 0: tp=5 fp=1 fn=0 -> 10/11; class 1: tp=3 fp=0 fn=2 -> 6/8
    # class 2: tp=4 fp=2 fn=1 -> 8/11
    want = (10 / 11 + 6 / 8 + 8 / 11) / 3
    assert f1_macro(y_true, y_pred) == pytest.approx(want)
    assert accuracy(y_true, y_pred) == pytest.approx(12 / 15)


def test_micro_f1_equals_accuracy_single_label():
    rng = np.random.default_rng(0)
    y_true = rng.integers(0, 4, size=200)
    y_pred = rng.integers(0, 4, size=200)
    assert f1_micro(y_true, y_pred) == pytest.approx(accuracy(y_true, y_pred))


def test_generation_metrics_exact_hit():
    out = generation_metrics([10060.0], [10060.0])
    assert out["NGR"] == 1.0 and out["LMAE"] == 0.0 and out["E_Acc"] == 1.0


def test_generation_metrics_near_hit():
    out = generation_metrics([10060.0], [10000.0])
    assert out["LMAE"] == pytest.approx(abs(math.log10(1.006)), rel=1e-9)
    assert out["E_Acc"] == 1.0  # both exponent 4


def test_generation_metrics_all_textual():
    out = generation_metrics([10060.0, 12000.0], [None, None])
    assert out["NGR"] == 0.0
    assert out["LMAE"] is None and out["E_Acc"] is None
    assert out["n_non_numeric"] == 2


def test_generation_metrics_excludes_non_positive():
    out = generation_metrics([100.0, 100.0], [100.0, -5.0])
    assert out["NGR"] == 1.0
    assert out["n_non_positive"] == 1
    assert out["LMAE"] == 0.0
    assert 0.0 <= out["E_Acc"] <= 1.0


def test_welch_identical_constant_runs():
    t, dof, p = welch_t([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    assert t == 0.0 and p == 1.0


def test_welch_separated_runs():
    rng = np.random.default_rng(1)
    a = 1.0 + rng.normal(0, 1e-6, size=3)
    b = 0.0 + rng.normal(0, 1e-6, size=3)
    _, _, p = welch_t(a, b)
    assert p < 0.001


def test_welch_spreadsheet_oracle():
    # hand-computed: a=[78.2,79.1,80.0], b=[75.0,75.5,74.6]
    a = [78.2, 79.1, 80.0]
    b = [75.0, 75.5, 74.6]
    t, dof, p = welch_t(a, b)
    # means 79.1, 75.033..; var_a=0.81, var_b=0.203333; se2=0.337777..
    want_t = (79.1 - (75.0 + 75.5 + 74.6) / 3) / math.sqrt(0.81 / 3 + 0.20333333333333337 / 3)
    assert t == pytest.approx(want_t, rel=1e-9)
    assert 0 < p < 0.01


def test_aggregate_mean_std():
    rep = aggregate([0.8, 0.82, 0.78], baseline_values=[0.5, 0.52, 0.48])
    assert rep.mean == pytest.approx(0.8)
    assert rep.std == pytest.approx(np.std([0.8, 0.82, 0.78], ddof=1))
    assert rep.welch["p_two_sided"] < 0.05
    assert min(rep.values) <= rep.mean <= max(rep.values)


def test_aggregate_single_run_omits_ttest():
    rep = aggregate([0.8], baseline_values=[0.5])
    assert rep.welch is None
    assert rep.notes


def test_empty_eval_raises():
    with pytest.raises(UsageError):
        accuracy([], [])
    with pytest.raises(UsageError):
        generation_metrics([], [])


# --- AdamW ---


def test_adamw_zero_grad_no_decay_keeps_params():
    p = {"w": Tensor(np.array([1.0, 2.0]), requires_grad=True)}
    p["w"].grad = np.zeros(2, dtype=np.float32)
    opt = AdamW(p, lr=0.1, weight_decay=0.0)
    opt.step()
    np.testing.assert_allclose(p["w"].data, [1.0, 2.0])


def test_adamw_first_step_moves_by_lr():
    p = {"x": Tensor(np.array([1.0]), requires_grad=True)}
    opt = AdamW(p, lr=0.01, weight_decay=0.0)
    with Tape() as tape:
        loss = tsum(square(p["x"]))
    tape.backward(loss)
    opt.step()
    # bias correction makes the first step ~ lr * sign(grad)
    assert p["x"].data[0] == pytest.approx(1.0 - 0.01, rel=1e-3)


def test_adamw_converges_on_tiny_regression():
    from numgpt import core

    rng = np.random.default_rng(2)
    a = rng.normal(size=(20, 3)).astype(np.float32)
    target = a @ np.array([1.0, -2.0, 0.5], dtype=np.float32)
    w = Tensor(np.zeros(3), requires_grad=True)
    opt = AdamW({"w": w}, lr=0.05, weight_decay=0.0)

    first = None
    for _ in range(200):
        opt.zero_grad()
        with Tape() as tape:
            pred = core.matmul(Tensor(a), core.reshape(w, (3, 1)))
            resid = core.sub(core.reshape(pred, (len(a),)), Tensor(target))
            loss = tsum(square(resid))
        tape.backward(loss)
        opt.step()
        if first is None:
            first = loss.item()
    assert loss.item() < 0.01 * first


def test_adamw_nan_grad_aborts_with_name():
    p = {"bad": Tensor(np.array([1.0]), requires_grad=True)}
    p["bad"].grad = np.array([np.nan], dtype=np.float32)
    opt = AdamW(p, lr=0.1)
    with pytest.raises(NumericError, match="bad"):
        opt.step()


def test_adamw_deterministic():
    def run():
        p = {"w": Tensor(np.ones(4), requires_grad=True)}
        opt = AdamW(p, lr=0.01)
        for i in range(10):
            p["w"].grad = (np.arange(4) + i).astype(np.float32)
            opt.step()
        return p["w"].data.copy()

    assert np.array_equal(run(), run())
