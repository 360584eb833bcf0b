import numpy as np
import pytest

import pose3d.training as training
from pose3d.datapipe import ClipSample
from pose3d.errors import ConfigError, DivergenceError, NumericError, ShapeError
from pose3d.network import ArchitectureConfig, build_network
from pose3d.rng import RngState
from pose3d.tensor import Tensor
from pose3d.training import (
    EpochReport,
    OptimizerState,
    TrainConfig,
    append_epoch_log,
    evaluate_mpjpe,
    lookahead,
    mpjpe,
    mpjpe_gradient,
    nesterov_step,
    train,
)

from conftest import assert_grad_close, finite_difference


def pose(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64))


def zero_pose() -> np.ndarray:
    return np.zeros((5, 17, 3))


class TestMpjpe:
    def test_identical_is_zero(self, np_rng):
        p = pose(np_rng.standard_normal((5, 17, 3)))
        assert mpjpe(p, p) == 0.0

    def test_three_four_five_triangle_single_joint(self):
        truth = zero_pose()
        pred = zero_pose()
        pred[2, 7] = [3.0, 4.0, 0.0]
        assert mpjpe(pose(pred), pose(truth)) == pytest.approx(5.0 / 85.0, abs=1e-15)

    def test_uniform_unit_offset(self):
        truth = zero_pose()
        pred = zero_pose() + [1.0, 0.0, 0.0]
        assert mpjpe(pose(pred), pose(truth)) == pytest.approx(1.0, abs=1e-15)

    def test_nan_rejected(self):
        bad = zero_pose()
        bad[0, 0, 0] = np.nan
        with pytest.raises(NumericError):
            mpjpe(pose(bad), pose(zero_pose()))

    def test_symmetric(self, np_rng):
        a = pose(np_rng.standard_normal((5, 17, 3)))
        b = pose(np_rng.standard_normal((5, 17, 3)))
        assert mpjpe(a, b) == mpjpe(b, a)

    def test_translation_of_both_leaves_value(self, np_rng):
        a = np_rng.standard_normal((5, 17, 3))
        b = np_rng.standard_normal((5, 17, 3))
        shift = np.array([10.0, 20.0, 30.0])
        assert mpjpe(pose(a + shift), pose(b + shift)) == pytest.approx(
            mpjpe(pose(a), pose(b)), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mpjpe(pose(np.zeros((5, 17, 3))), pose(np.zeros((4, 17, 3))))


class TestMpjpeGradient:
    def test_zero_at_exact_match(self):
        p = pose(zero_pose())
        assert not mpjpe_gradient(p, p).numpy().any()

    def test_unit_offset_direction(self):
        truth = zero_pose()
        pred = zero_pose()
        pred[1, 4] = [1.0, 0.0, 0.0]
        g = mpjpe_gradient(pose(pred), pose(truth)).numpy().copy()
        assert g[1, 4] == pytest.approx([1.0 / 85.0, 0.0, 0.0], abs=1e-15)
        g[1, 4] = 0.0
        assert not g.any()

    def test_finite_differences(self, np_rng):
        p = np_rng.standard_normal((5, 17, 3))
        t = np_rng.standard_normal((5, 17, 3))
        g = mpjpe_gradient(pose(p), pose(t)).numpy()
        idx = np_rng.choice(p.size, size=60, replace=False)
        fd = finite_difference(lambda a: mpjpe(pose(a), pose(t)), p, indices=idx)
        assert_grad_close(g, fd, tol=1e-6, indices=idx)


class TestNesterovStep:
    def test_momentum_zero_is_vanilla_sgd(self, np_rng):
        theta = {"w": Tensor(np_rng.standard_normal(4))}
        grad = {"w": Tensor(np_rng.standard_normal(4))}
        state = OptimizerState.for_params(theta, learning_rate=0.1, momentum=0.0)
        new, _ = nesterov_step(theta, grad, state)
        expect = theta["w"].numpy() - 0.1 * grad["w"].numpy()
        assert np.array_equal(new["w"].numpy(), expect)

    def test_zero_gradient_keeps_parameters(self):
        theta = {"w": Tensor([1.0, 2.0])}
        state = OptimizerState.for_params(theta, learning_rate=0.5, momentum=0.9)
        for _ in range(5):
            theta, state = nesterov_step(theta, {"w": Tensor([0.0, 0.0])}, state)
        assert np.array_equal(theta["w"].numpy(), [1.0, 2.0])

    def test_quadratic_bowl_matches_scalar_recurrence(self):
        # independent oracle: the same lookahead recurrence written directly
        # on python floats for L(theta) = theta^2
        lr, mu = 0.1, 0.9
        theta_ref, v_ref = 1.0, 0.0
        trajectory = []
        for _ in range(5):
            g = 2.0 * (theta_ref + mu * v_ref)      # dL/dtheta at lookahead
            v_ref = mu * v_ref - lr * g
            theta_ref = theta_ref + v_ref
            trajectory.append(theta_ref)

        theta = {"t": Tensor([1.0])}
        state = OptimizerState.for_params(theta, learning_rate=lr, momentum=mu)
        got = []
        for _ in range(5):
            look = lookahead(theta, state)
            grad = {"t": Tensor(2.0 * look["t"].numpy())}
            theta, state = nesterov_step(theta, grad, state)
            got.append(theta["t"].numpy().item())
        assert np.abs(np.array(got) - np.array(trajectory)).max() < 1e-12

    def test_name_mismatch(self):
        theta = {"w": Tensor([1.0])}
        state = OptimizerState.for_params(theta)
        with pytest.raises(ShapeError):
            nesterov_step(theta, {"v": Tensor([1.0])}, state)

    def test_shape_mismatch(self):
        theta = {"w": Tensor([1.0, 2.0])}
        state = OptimizerState.for_params(theta)
        with pytest.raises(ShapeError):
            nesterov_step(theta, {"w": Tensor([1.0])}, state)


def make_samples(n, cfg, seed=0, spread=10.0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        video = Tensor(rng.standard_normal(cfg.input_shape).astype(dtype))
        target = Tensor(spread * rng.standard_normal((cfg.output_frames, cfg.joints, 3)))
        out.append(ClipSample(video=video, target=target, clip_id=f"s{i}",
                              frame_indices=tuple(range(5))))
    return out


def tiny_train_config(**kw) -> TrainConfig:
    base = dict(arch=ArchitectureConfig.reduced(), batch_size=10, learning_rate=1e-5,
                momentum=0.9, patience=15, max_epochs=3, seed=0, precision="float64")
    base.update(kw)
    return TrainConfig(**base)


class TestTrainLoop:
    def test_single_epoch_single_report(self):
        cfg = tiny_train_config(max_epochs=1)
        samples = make_samples(4, cfg.arch)
        _, reports = train(cfg, samples, samples)
        assert len(reports) == 1
        assert reports[0].epoch == 1

    def test_empty_dataset_rejected(self):
        cfg = tiny_train_config()
        with pytest.raises(ConfigError):
            train(cfg, [], make_samples(1, cfg.arch))

    def test_patience_arithmetic_and_best_weights(self, monkeypatch):
        # validation scores 10, 9, 9, ... -> stop at epoch 17, keep epoch 2
        scores = iter([10.0] + [9.0] * 30)
        seen = []

        def scripted_eval(params, samples):
            seen.append(params)
            return next(scores)

        monkeypatch.setattr(training, "evaluate_mpjpe", scripted_eval)
        cfg = tiny_train_config(max_epochs=100, patience=15)
        samples = make_samples(3, cfg.arch)
        best, reports = train(cfg, samples, samples)
        assert len(reports) == 17
        assert [r.val_mpjpe_mm for r in reports[:3]] == [10.0, 9.0, 9.0]
        assert best is seen[1]  # the epoch-2 parameters

    def test_divergence_raises_with_epoch_context(self):
        cfg = tiny_train_config(learning_rate=1e6, max_epochs=50, batch_size=1)
        samples = make_samples(4, cfg.arch, spread=100.0)
        with pytest.raises(DivergenceError) as exc:
            train(cfg, samples, samples)
        assert "epoch" in str(exc.value)

    def test_loss_non_increasing_at_stock_lr(self):
        cfg = tiny_train_config(learning_rate=1e-5, batch_size=1, max_epochs=50,
                                patience=1000)
        samples = make_samples(1, cfg.arch)
        _, reports = train(cfg, samples, samples)
        losses = [r.train_loss_mm for r in reports]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_seeded_runs_bit_identical(self):
        cfg = tiny_train_config(max_epochs=3, learning_rate=0.001, precision="float32")
        samples = make_samples(5, cfg.arch, dtype=np.float32)
        best1, rep1 = train(cfg, samples, samples)
        best2, rep2 = train(cfg, samples, samples)
        for name in best1.names():
            assert best1.tensors[name].numpy().tobytes() == best2.tensors[name].numpy().tobytes()
        assert [(r.epoch, r.train_loss_mm, r.val_mpjpe_mm) for r in rep1] == \
            [(r.epoch, r.train_loss_mm, r.val_mpjpe_mm) for r in rep2]

    def test_partial_final_batch_kept(self):
        # 5 samples, batch 10: the whole set is one (partial) batch
        cfg = tiny_train_config(max_epochs=1, batch_size=10)
        samples = make_samples(5, cfg.arch)
        _, reports = train(cfg, samples, samples)
        assert np.isfinite(reports[0].train_loss_mm)

    def test_epoch_log_append(self, tmp_path):
        path = tmp_path / "log.csv"
        append_epoch_log(path, EpochReport(1, 10.0, 11.0, 0.5))
        append_epoch_log(path, EpochReport(2, 9.0, 10.0, 0.4))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss_mm,val_mpjpe_mm,seconds"
        assert len(lines) == 3
        assert lines[1].startswith("1,10.0,11.0,")


class TestEvaluateMpjpe:
    def test_matches_manual_mean(self):
        cfg = ArchitectureConfig.reduced()
        params = build_network(cfg, RngState(0), dtype=np.float64)
        samples = make_samples(3, cfg)
        from pose3d.network import forward
        total = 0.0
        for s in samples:
            out, _ = forward(params, s.video)
            total += mpjpe(out.reshape((5, 17, 3)), s.target)
        assert evaluate_mpjpe(params, samples) == pytest.approx(total / 3, rel=1e-12)

    def test_empty_rejected(self):
        params = build_network(ArchitectureConfig.reduced(), RngState(0))
        with pytest.raises(ConfigError):
            evaluate_mpjpe(params, [])
