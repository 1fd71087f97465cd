import math

import numpy as np
import pytest

from synthforge.rng import substream
from synthforge.translation_objective import (Adam, CriticNet, MapperNet,
                                              PatchBatch, TrainConfig,
                                              TrainingDivergedError,
                                              build_nets, critic_loss_log,
                                              critic_loss_ls,
                                              critic_step_grads, cycle_loss,
                                              full_objective, grad_check,
                                              learning_rate,
                                              mapper_adv_loss_log,
                                              mapper_adv_loss_ls,
                                              mapper_objective_grads,
                                              toy_train)

D, H, B, LAM = 3, 4, 2, 10.0


def build_case(rng):
    nets = {"g_s2r": MapperNet(D, H, rng=rng), "g_r2s": MapperNet(D, H, rng=rng),
            "d_s": CriticNet(D, H, rng=rng), "d_r": CriticNet(D, H, rng=rng)}
    for net in nets.values():
        net.params["b1"] = rng.normal(0, 0.3, net.params["b1"].shape)
        net.params["b2"] = rng.normal(0, 0.3, net.params["b2"].shape)
    s = rng.uniform(-1, 1, (B, D))
    r = rng.uniform(-1, 1, (B, D))
    return nets, s, r


def rec_gap(nets, s, r):
    # distance of reconstructions from the |.| kink; tiny gaps break FD
    fr = nets["g_s2r"].forward(s)
    s_rec = nets["g_r2s"].forward(fr)
    fs = nets["g_r2s"].forward(r)
    r_rec = nets["g_s2r"].forward(fs)
    for net in nets.values():
        net.zero_grads()
    return min(np.abs(s_rec - s).min(), np.abs(r_rec - r).min())


def draw_case(seed, k):
    rng = substream(seed, k, "gradcheck")
    for _ in range(50):
        nets, s, r = build_case(rng)
        if rec_gap(nets, s, r) >= 1e-3:
            return nets, s, r
    raise RuntimeError("no well-separated draw")


def merged_loss_fn(nets, s, r):
    params = {f"{n}.{p}": net.params[p]
              for n, net in nets.items() for p in net.params}

    def loss_fn(_):
        bd, _, _ = mapper_objective_grads(nets["g_s2r"], nets["g_r2s"],
                                          nets["d_s"], nets["d_r"], s, r, LAM)
        grads = {f"{n}.{p}": net.grads[p].copy()
                 for n, net in nets.items() for p in net.grads}
        return bd.total, grads

    return params, loss_fn


class TestLosses:
    def test_critic_ls_perfect(self):
        assert critic_loss_ls([1.0, 1.0], [0.0, 0.0]) == 0.0

    def test_critic_ls_values(self):
        assert critic_loss_ls([0.0], [1.0]) == pytest.approx(2.0)
        assert critic_loss_ls([0.5, 0.5], [0.25]) == pytest.approx(0.3125)

    def test_mapper_ls_values(self):
        assert mapper_adv_loss_ls([1.0, 1.0]) == 0.0
        assert mapper_adv_loss_ls([0.0]) == pytest.approx(1.0)
        assert mapper_adv_loss_ls([2.0]) == pytest.approx(1.0)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="batch is empty"):
            critic_loss_ls([], [0.0])
        with pytest.raises(ValueError, match="batch is empty"):
            mapper_adv_loss_ls([])

    def test_log_forms(self):
        assert critic_loss_log([0.0], [0.0]) == pytest.approx(2 * math.log(2))
        assert mapper_adv_loss_log([0.0]) == pytest.approx(-math.log(2))
        # stable at extreme scores, no overflow
        assert critic_loss_log([40.0], [-40.0]) < 1e-15
        assert critic_loss_log([-40.0], [40.0]) == pytest.approx(80.0)

    def test_cycle_identity_is_exactly_zero(self):
        rng = np.random.default_rng(3)
        s = rng.uniform(-1, 1, (4, 6))
        r = rng.uniform(-1, 1, (4, 6))
        assert cycle_loss(s, s, r, r) == 0.0

    def test_cycle_value(self):
        s = np.zeros((2, 2))
        s_rec = np.array([[0.1, 0.3], [0.5, 0.1]])
        r = np.ones((2, 2))
        assert cycle_loss(s, s_rec, r, r) == pytest.approx(0.25)

    def test_cycle_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            cycle_loss(np.zeros((2, 2)), np.zeros((2, 3)),
                       np.zeros((2, 2)), np.zeros((2, 2)))

    def test_full_objective_weighting(self):
        bd = full_objective(0.5, 0.3, 0.2, 10.0)
        assert bd.total == pytest.approx(2.8)
        assert bd.lam == 10.0
        with pytest.raises(ValueError, match="lam"):
            full_objective(0.5, 0.3, 0.2, -1.0)

    def test_lam_monotone_in_total(self):
        nets, s, r = draw_case(900, 0)
        totals = []
        for lam in (0.0, 1.0, 10.0):
            bd, _, _ = mapper_objective_grads(nets["g_s2r"], nets["g_r2s"],
                                              nets["d_s"], nets["d_r"],
                                              s, r, lam)
            totals.append(bd.total)
            assert bd.cyc > 0
        assert totals[0] < totals[1] < totals[2]


class TestPatchBatch:
    def test_valid(self):
        pb = PatchBatch("S", np.zeros((2, 12)))
        assert pb.data.dtype == np.float64

    def test_bad_domain(self):
        with pytest.raises(ValueError, match="domain"):
            PatchBatch("X", np.zeros((2, 12)))

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="outside"):
            PatchBatch("S", np.full((1, 4), 1.5))

    def test_wrong_ndim(self):
        with pytest.raises(ValueError, match="2-D"):
            PatchBatch("S", np.zeros(8))


class TestNetworks:
    def test_mapper_forward_formula(self):
        net = MapperNet(2, 2, rng=np.random.default_rng(0))
        net.params["W1"] = np.array([[0.5, -0.25], [0.1, 0.3]])
        net.params["b1"] = np.array([0.05, -0.1])
        net.params["W2"] = np.array([[0.7, -0.6], [0.2, 0.4]])
        net.params["b2"] = np.array([-0.02, 0.03])
        x = np.array([[0.3, -0.8]])
        h = np.tanh(x @ net.params["W1"].T + net.params["b1"])
        expected = np.tanh(h @ net.params["W2"].T + net.params["b2"])
        assert np.allclose(net.forward(x), expected, atol=1e-14)

    def test_critic_output_shape_unsquashed(self):
        net = CriticNet(6, 3, rng=np.random.default_rng(1))
        y = net.forward(np.full((4, 6), 0.2))
        assert y.shape == (4, 1)
        at_zero = net.forward(np.zeros((1, 6)))  # h depends only on b1
        expected = net.params["b2"][0] + float(
            np.tanh(net.params["b1"]) @ net.params["W2"][0])
        assert float(at_zero[0, 0]) == pytest.approx(expected, abs=1e-12)

    def test_backward_without_forward(self):
        net = MapperNet(2, 2)
        with pytest.raises(RuntimeError, match="without a recorded forward"):
            net.backward(np.zeros((1, 2)))

    def test_zero_upstream_zero_grads(self):
        net = MapperNet(3, 4, rng=np.random.default_rng(5))
        net.zero_grads()
        y = net.forward(np.array([[0.1, -0.2, 0.4]]))
        dx = net.backward(np.zeros_like(y))
        assert all(np.all(g == 0) for g in net.grads.values())
        assert np.all(dx == 0)

    def test_w2_gradient_outer_product(self):
        rng = np.random.default_rng(9)
        net = MapperNet(3, 4, rng=rng)
        x = rng.uniform(-1, 1, (2, 3))
        dy = rng.normal(0, 1, (2, 3))
        net.zero_grads()
        y = net.forward(x)
        net.backward(dy)
        h = np.tanh(x @ net.params["W1"].T + net.params["b1"])
        dz2 = dy * (1.0 - y * y)
        assert np.allclose(net.grads["W2"], dz2.T @ h, atol=1e-12)
        assert np.allclose(net.grads["b2"], dz2.sum(axis=0), atol=1e-12)

    def test_tape_is_lifo(self):
        rng = np.random.default_rng(12)
        net = MapperNet(3, 4, rng=np.random.default_rng(7))
        x1 = rng.uniform(-1, 1, (2, 3))
        x2 = rng.uniform(-1, 1, (2, 3))
        net.zero_grads()
        net.forward(x1)
        net.forward(x2)
        dx_first = net.backward(np.ones((2, 3)))

        solo = MapperNet(3, 4, rng=np.random.default_rng(7))
        for k in solo.params:
            solo.params[k][...] = net.params[k]
        solo.zero_grads()
        solo.forward(x2)
        dx_solo = solo.backward(np.ones((2, 3)))
        assert np.array_equal(dx_first, dx_solo)


class TestGradCheck:
    def test_quadratic_near_machine_precision(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}

        def loss_fn(p):
            return float(np.sum(p["w"] ** 2)), {"w": 2.0 * p["w"]}

        assert grad_check(loss_fn, params) < 1e-8

    def test_full_objective_examples(self):
        worst = 0.0
        for k in range(5):
            nets, s, r = draw_case(1001, k)
            params, loss_fn = merged_loss_fn(nets, s, r)
            worst = max(worst, grad_check(loss_fn, params, eps=1e-5))
        assert worst < 1e-4

    def test_detects_wrong_gradient(self):
        nets, s, r = draw_case(1001, 0)
        params, loss_fn = merged_loss_fn(nets, s, r)

        def faulty(p):
            value, grads = loss_fn(p)
            grads["g_s2r.W1"] = -grads["g_s2r.W1"]
            return value, grads

        assert grad_check(faulty, params, eps=1e-5) > 0.3

    def test_critic_grads_check_out(self):
        rng = substream(1002, 0, "criticcheck")
        critic = CriticNet(D, H, rng=rng)
        critic.params["b1"] = rng.normal(0, 0.3, critic.params["b1"].shape)
        critic.params["b2"] = rng.normal(0, 0.3, critic.params["b2"].shape)
        real = rng.uniform(-1, 1, (B, D))
        fake = rng.uniform(-1, 1, (B, D))

        def loss_fn(_):
            loss = critic_step_grads(critic, real=real, fake=fake)
            return loss, {k: v.copy() for k, v in critic.grads.items()}

        assert grad_check(loss_fn, critic.params, eps=1e-5) < 1e-4

    def test_eps_validation(self):
        with pytest.raises(ValueError, match="eps"):
            grad_check(lambda p: (0.0, {}), {"w": np.zeros(1)}, eps=0.0)

    def test_nonfinite_loss_rejected(self):
        with pytest.raises(ValueError, match="not finite"):
            grad_check(lambda p: (float("nan"), {"w": np.zeros(1)}),
                       {"w": np.zeros(1)})


class TestSchedule:
    def test_constant_then_linear_to_zero(self):
        cfg = TrainConfig(total_steps=2000, decay_start=1000)
        assert learning_rate(cfg, 1) == cfg.lr
        assert learning_rate(cfg, 1000) == cfg.lr
        assert learning_rate(cfg, 1500) == pytest.approx(cfg.lr / 2)
        assert learning_rate(cfg, 2000) == 0.0

    def test_decay_from_step_zero(self):
        cfg = TrainConfig(total_steps=4, decay_start=0, lr=0.1)
        assert learning_rate(cfg, 4) == 0.0
        assert learning_rate(cfg, 1) == pytest.approx(0.075)

    def test_validation(self):
        with pytest.raises(ValueError, match="decay_start"):
            TrainConfig(total_steps=10, decay_start=11).validate()
        with pytest.raises(ValueError, match="lr"):
            TrainConfig(lr=-0.1).validate()
        with pytest.raises(ValueError, match="lam"):
            TrainConfig(lam=-1.0).validate()
        with pytest.raises(ValueError, match="batch_size"):
            TrainConfig(batch_size=0).validate()
        TrainConfig().validate()


def tiny_config(**kw):
    base = dict(total_steps=5, decay_start=5, batch_size=4,
                patch_size=4, hidden=8, seed=11)
    base.update(kw)
    return TrainConfig(**base)


class TestToyTrain:
    def test_zero_steps(self):
        cfg = tiny_config(total_steps=0, decay_start=0)
        result = toy_train(cfg)
        assert result.trace == []
        fresh = build_nets(cfg)
        for name, net in result.nets.items():
            for key, val in net.params.items():
                assert np.array_equal(val, fresh[name].params[key])

    def test_zero_lr_leaves_params(self):
        cfg = tiny_config(lr=0.0)
        result = toy_train(cfg)
        fresh = build_nets(cfg)
        assert len(result.trace) == 5
        for name, net in result.nets.items():
            for key, val in net.params.items():
                assert np.array_equal(val, fresh[name].params[key])

    def test_deterministic(self):
        a = toy_train(tiny_config())
        b = toy_train(tiny_config())
        assert a.trace == b.trace
        for name in a.nets:
            for key in a.nets[name].params:
                assert np.array_equal(a.nets[name].params[key],
                                      b.nets[name].params[key])

    def test_updates_move_params(self):
        result = toy_train(tiny_config())
        fresh = build_nets(tiny_config())
        moved = any(not np.array_equal(net.params[k], fresh[name].params[k])
                    for name, net in result.nets.items()
                    for k in net.params)
        assert moved

    def test_trace_csv_round_trips(self):
        result = toy_train(tiny_config(total_steps=3, decay_start=1))
        lines = result.trace_csv().splitlines()
        assert lines[0] == "step,lr,adv_s2r,adv_r2s,cyc,total"
        assert len(lines) == 4
        for line, row in zip(lines[1:], result.trace):
            fields = line.split(",")
            assert int(fields[0]) == row.step
            assert float(fields[1]) == row.lr
            assert float(fields[5]) == row.total

    def test_divergence_raises_with_step(self):
        def bad_sampler(rng, batch, patch=4):
            return PatchBatch("S", np.full((batch, patch * patch * 3), np.nan))

        with pytest.raises(TrainingDivergedError) as err:
            toy_train(tiny_config(), sample_s=bad_sampler)
        assert err.value.step == 1
        assert "step 1" in str(err.value)


class TestAdam:
    def test_single_step_formula(self):
        params = {"w": np.array([1.0])}
        opt = Adam(params, beta1=0.5, beta2=0.999)
        opt.step({"w": np.array([0.4])}, lr=0.1)
        # first step: mhat = g, vhat = g^2 -> update ~ lr * sign(g)
        expected = 1.0 - 0.1 * 0.4 / (0.4 + 1e-8)
        assert params["w"][0] == pytest.approx(expected, abs=1e-9)

    def test_sorted_key_iteration_deterministic(self):
        p1 = {"b": np.ones(2), "a": np.ones(2)}
        p2 = {"a": np.ones(2), "b": np.ones(2)}
        g = {"a": np.full(2, 0.3), "b": np.full(2, -0.2)}
        o1, o2 = Adam(p1), Adam(p2)
        o1.step(g, 0.01)
        o2.step(g, 0.01)
        assert np.array_equal(p1["a"], p2["a"])
        assert np.array_equal(p1["b"], p2["b"])
