import csv
import json

import numpy as np
import pytest

from dsc import model as M
from dsc.cluster import soft_assign, target_distribution
from dsc.errors import ConfigError, NumericError
from dsc.tensor import finite_diff_grad, rel_error
from dsc.trainer import (TrainConfig, batch_gradients, best_of_n, epoch_batches, evaluate_epoch,
                         read_assignments, sgd_momentum_step, train, train_and_evaluate,
                         write_run_dir)

SMALL = dict(latent_dim=16, channels=(4, 8))


def small_model(variant, cube, seed=0):
    return M.build_model(variant, cube.shape[1:], seed=seed, **SMALL)


def test_momentum_hand_iteration():
    p = {"w": np.zeros(3)}
    v = {"w": np.zeros(3)}
    g = {"w": np.array([1.0, -2.0, 0.5])}
    for _ in range(2):
        sgd_momentum_step(p, g, v, 0.1, 0.9)
    np.testing.assert_allclose(p["w"], -0.29 * g["w"], atol=1e-15)


def test_momentum_zero_is_plain_descent_and_zero_grad_is_noop():
    p, v = {"w": np.ones(2)}, {"w": np.zeros(2)}
    sgd_momentum_step(p, {"w": np.array([1.0, 2.0])}, v, 0.5, 0.0)
    np.testing.assert_array_equal(p["w"], [0.5, 0.0])
    p, v = {"w": np.ones(2)}, {"w": np.zeros(2)}
    sgd_momentum_step(p, {"w": np.zeros(2)}, v, 0.5, 0.9)
    np.testing.assert_array_equal(p["w"], [1.0, 1.0])
    with pytest.raises(NumericError, match="w"):
        sgd_momentum_step(p, {"w": np.array([np.nan, 0])}, v, 0.1, 0.9)


@pytest.mark.parametrize("t,bs", [(10, 3), (48, 32), (7, 7)])
def test_epoch_batches_are_a_permutation(t, bs):
    batches = epoch_batches(np.random.default_rng(0), t, bs)
    np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(t))
    assert all(len(b) <= bs for b in batches)


def test_combined_batch_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    mdl = M.build_model("cnn-lstm-ae", (8, 8, 1), seed=1, latent_dim=8,
                        channels=(2, 3)).astype(np.float64)
    # non-zero biases keep ReLU inputs off the kink at exactly zero
    for p in mdl.params.values():
        p.tensors["b"] = p.tensors["b"] + 0.1 * rng.normal(size=p.tensors["b"].shape)
    x = rng.random((6, 8, 8, 1))
    cent = rng.normal(size=(2, 8)) * 0.1
    emb = M.encode(mdl, x)
    p_b = 0.5 * target_distribution(soft_assign(emb, cent)) + 0.5 * rng.dirichlet([1, 1], 6)
    cfg = TrainConfig(k=2)
    _, grads = batch_gradients(mdl, x, p_b, cent, cfg)

    params = mdl.flat_params()
    params[("clusters", "C")] = cent
    for name, arr in params.items():
        # a handful of coordinates per tensor keeps the check quick
        coords = [np.unravel_index(i, arr.shape) for i in rng.choice(arr.size, min(4, arr.size), False)]

        def f(vals, arr=arr, coords=coords):
            saved = arr.copy()
            for c, v in zip(coords, vals):
                arr[c] = v
            try:
                return batch_gradients(mdl, x, p_b, cent, cfg)[0]
            finally:
                arr[...] = saved
        num = finite_diff_grad(f, np.array([arr[c] for c in coords]), 1e-6)
        ana = np.array([grads[name][c] for c in coords])
        assert rel_error(ana, num) <= 1e-3, name


def test_training_is_deterministic(small_synthetic):
    cube, _ = small_synthetic
    cfg = TrainConfig(k=3, max_epochs=4, seed=5)
    a = train(small_model("cnn-lstm-ae", cube, 5), cube, cfg)
    b = train(small_model("cnn-lstm-ae", cube, 5), cube, cfg)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert [r.total for r in a.trace] == [r.total for r in b.trace]


def test_trace_invariants(small_synthetic):
    cube, _ = small_synthetic
    res = train(small_model("cnn-ae", cube), cube, TrainConfig(k=3, max_epochs=6))
    assert len(res.trace) == res.epochs
    for r in res.trace:
        assert abs(r.total - (r.rec + r.clus)) <= 1e-9
    np.testing.assert_array_equal(res.labels, res.state.soft.argmax(1))


def test_encoder_only_has_zero_rec(small_synthetic):
    cube, _ = small_synthetic
    res = train(small_model("cnn-enc", cube), cube, TrainConfig(k=3, max_epochs=3))
    assert all(r.rec == 0.0 for r in res.trace)
    assert all(r.total == r.clus for r in res.trace)


def test_zero_learning_rate_freezes_everything(small_synthetic):
    cube, _ = small_synthetic
    mdl = small_model("cnn-lstm-ae", cube)
    before = {k: v.copy() for k, v in mdl.flat_params().items()}
    res = train(mdl, cube, TrainConfig(k=3, learning_rate=0.0, max_epochs=8, patience=3))
    for k, v in mdl.flat_params().items():
        np.testing.assert_array_equal(v, before[k])
    assert all(np.array_equal(h, res.history[0]) for h in res.history)
    assert all(r.changed_labels == 0 for r in res.trace)
    # patience 3 means four identical label vectors: the initial one plus three epochs
    assert res.stop_reason == "converged" and res.epochs == 3


def test_max_epochs_stop(small_synthetic):
    cube, _ = small_synthetic
    res = train(small_model("cnn-enc", cube), cube, TrainConfig(k=3, max_epochs=2, patience=5))
    assert res.stop_reason == "max_epochs" and res.epochs == 2


def test_evaluate_epoch_is_pure(small_synthetic):
    cube, _ = small_synthetic
    mdl = small_model("cnn-ae", cube)
    res = train(mdl, cube, TrainConfig(k=3, max_epochs=2))
    a = evaluate_epoch(mdl, cube, res.state)
    b = evaluate_epoch(mdl, cube, res.state)
    assert a[0] == b[0] and a[1] == b[1]
    np.testing.assert_array_equal(a[2], b[2])
    assert a[0] == pytest.approx(M.reconstruction_loss(cube.values, M.decode(mdl, M.encode(mdl, cube.values))))


def test_bad_config(small_synthetic):
    cube, _ = small_synthetic
    with pytest.raises(ConfigError):
        train(small_model("cnn-ae", cube), cube, TrainConfig(k=48))
    with pytest.raises(ConfigError):
        train(small_model("cnn-ae", cube), cube, TrainConfig(k=3, momentum=1.0))


def test_best_of_n_and_run_dir(tmp_path, small_synthetic):
    cube, truth = small_synthetic
    cfg = TrainConfig(k=3, max_epochs=3)
    best, outcomes = best_of_n(cube, "cnn-ae", cfg, runs=2, truth=truth, model_kwargs=SMALL)
    assert [o.seed for o in outcomes] == [0, 1]
    valid = [o.report.silhouette for o in outcomes if o.report is not None]
    if valid:
        assert outcomes[best].report.silhouette == max(valid)
    write_run_dir(tmp_path, outcomes[best], {"variant": "cnn-ae"})
    assert {p.name for p in tmp_path.iterdir()} == {"checkpoint.npz", "assignments.csv",
                                                    "trace.csv", "report.json"}
    np.testing.assert_array_equal(read_assignments(tmp_path / "assignments.csv"), outcomes[best].result.labels)
    with open(tmp_path / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["epoch", "L_rec", "L_clus", "L", "changed_labels"]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["stop_reason"] in ("converged", "max_epochs") and "version" in report


def test_encoder_only_report_has_no_rec(small_synthetic, tmp_path):
    cube, truth = small_synthetic
    out = train_and_evaluate(cube, "cnn-enc", TrainConfig(k=3, max_epochs=2), truth, SMALL)
    write_run_dir(tmp_path, out, {})
    assert json.loads((tmp_path / "report.json").read_text())["losses"]["L_rec"] is None
