import math

import numpy as np
import pytest

from bridgeplan.bridge import BridgeSpec
from bridgeplan.core import Dataset, Rng, Task, Trajectory, Workspace
from bridgeplan.errors import InvalidInputError, SamplingDivergedError
from bridgeplan.nn.model import ArchSpec
from bridgeplan.sampler import SamplerConfig, batch_generate, generate, integrate
from bridgeplan.training import TrainConfig, train
from oracles import LinearGaussianToy, SingleExpertOracle, ToyFieldModel

TINY = ArchSpec(levels=2, widths=(4, 8), time_embed_dim=4, cond_dim=4, kernel=3)
TOY_TASK = Task([0.0], [1.0])


def toy_run(k, score_correction=True, n=32, seed=0):
    toy = LinearGaussianToy()
    model = ToyFieldModel(toy, length=n)
    x0 = np.random.default_rng(seed).normal(toy.a, toy.s0, (n, 3))
    res = generate(model, TOY_TASK, SamplerConfig(steps=k, score_correction=score_correction), Rng(0), init=x0)
    return toy, x0, res


def test_closed_form_terminal_error_at_1000_steps():
    toy, x0, res = toy_run(1000)
    assert np.max(np.abs(res.trajectory.q[:, 0] - toy.terminal(x0[:, 0]))) < 1e-3


def test_euler_first_order_convergence():
    errs = []
    for k in (10, 100, 1000):
        toy, x0, res = toy_run(k)
        errs.append(np.max(np.abs(res.trajectory.q[:, 0] - toy.terminal(x0[:, 0]))))
    assert errs[0] > errs[1] > errs[2]
    orders = [math.log10(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(0.8 < p < 1.2 for p in orders)


def test_both_variants_reach_target_mean():
    # the uncorrected drift still transports the ensemble mean exactly
    n = 4000
    for sc in (True, False):
        toy, x0, res = toy_run(1000, score_correction=sc, n=n, seed=3)
        got = res.trajectory.q[:, 0].mean()
        ref = toy.terminal(x0[:, 0]).mean()
        assert abs(got - ref) < 1e-3


def test_score_correction_matters_on_toy():
    _, _, a = toy_run(100, True)
    _, _, b = toy_run(100, False)
    assert np.max(np.abs(a.trajectory.q - b.trajectory.q)) > 0


def test_all_channels_integrated_jointly():
    toy, x0, res = toy_run(1000)
    tr = res.trajectory
    # the toy field acts on every channel, so velocity and acceleration rows move as well
    assert np.max(np.abs(tr.qd[:, 0] - toy.terminal(x0[:, 1]))) < 1e-3
    assert np.max(np.abs(tr.qdd[:, 0] - toy.terminal(x0[:, 2]))) < 1e-3


def test_snapshots_and_endpoints():
    toy = LinearGaussianToy()
    model = ToyFieldModel(toy, length=4)
    x0 = np.full((4, 3), -1.0)
    cfg = SamplerConfig(steps=8, snapshots=(0.0, 0.5, 1.0))
    res = generate(model, TOY_TASK, cfg, Rng(0), init=x0)
    ts = [t for t, _ in res.flow_snapshots]
    assert ts == [0.0, 0.5, 1.0]
    assert np.allclose(res.flow_snapshots[0][1][:, 0], -1.0)
    assert np.array_equal(res.flow_snapshots[-1][1], res.trajectory.q)


def test_integrate_reports_divergence():
    class Exploding:
        d = 1

        def predict(self, t, state, task):
            return np.full_like(state, np.inf), np.zeros_like(state)

    spec = ToyFieldModel(LinearGaussianToy()).meta["bridge"]
    with pytest.raises(SamplingDivergedError) as info:
        integrate(Exploding(), np.zeros((1, 4, 3)), np.zeros((1, 2)), BridgeSpec(**spec), 10)
    assert info.value.step == 0


def test_config_validation():
    with pytest.raises(InvalidInputError):
        SamplerConfig(steps=0)
    with pytest.raises(InvalidInputError):
        SamplerConfig(sigma=0.0)
    with pytest.raises(InvalidInputError):
        SamplerConfig(snapshots=(1.5,))
    for k in (1, 3, 7, 100):
        assert abs(SamplerConfig(steps=k).delta * k - 1) < 1e-15


@pytest.fixture(scope="module")
def tiny_model():
    rng = np.random.default_rng(0)
    ws = Workspace([0, 0], [4, 4])
    trajs = []
    for _ in range(4):
        a, b = rng.uniform(0.2, 1.0, 2), rng.uniform(3.0, 3.8, 2)
        s = np.linspace(0, 1, 8)[:, None]
        trajs.append(Trajectory.from_positions(a + s * (b - a), 0.1))
    model, _ = train(Dataset.from_trajectories(ws, trajs), TrainConfig(epochs=3, batch_size=4, arch=TINY))
    return model


def test_single_step_run_is_finite(tiny_model):
    res = generate(tiny_model, Task([0.5, 0.5], [3.5, 3.5]), SamplerConfig(steps=1), Rng(0))
    assert np.all(np.isfinite(res.trajectory.q)) and res.trajectory.q.shape == (8, 2)


def test_generation_determinism_and_multimodality(tiny_model):
    task, cfg = Task([0.5, 0.5], [3.5, 3.5]), SamplerConfig(steps=10)
    a = generate(tiny_model, task, cfg, Rng(1))
    b = generate(tiny_model, task, cfg, Rng(1))
    c = generate(tiny_model, task, cfg, Rng(2))
    assert np.array_equal(a.trajectory.q, b.trajectory.q)
    assert not np.array_equal(a.trajectory.q, c.trajectory.q)


def test_score_correction_is_live_on_trained_model(tiny_model):
    task = Task([0.5, 0.5], [3.5, 3.5])
    a = generate(tiny_model, task, SamplerConfig(steps=10), Rng(1))
    b = generate(tiny_model, task, SamplerConfig(steps=10, score_correction=False), Rng(1))
    assert np.max(np.abs(a.trajectory.q - b.trajectory.q)) > 0


def test_batch_matches_sequential_calls(tiny_model):
    tasks = [Task([0.5, 0.5], [3.5, 3.5]), Task([1.0, 0.5], [3.0, 3.9])]
    cfg = SamplerConfig(steps=5)
    batch = batch_generate(tiny_model, tasks, cfg, Rng(7))
    for i, (task, res) in enumerate(zip(tasks, batch)):
        single = generate(tiny_model, task, cfg, Rng(7).child(i))
        assert np.array_equal(res.trajectory.q, single.trajectory.q)
        assert res.wall_secs > 0
    one = batch_generate(tiny_model, tasks[:1], cfg, Rng(7))
    assert np.array_equal(one[0].trajectory.q, batch[0].trajectory.q)


def test_batch_keeps_going_after_errors(tiny_model):
    tasks = [Task([9.0, 9.0], [3.5, 3.5]), Task([0.5, 0.5], [3.5, 3.5])]
    out = batch_generate(tiny_model, tasks, SamplerConfig(steps=3), Rng(0))
    assert not out[0].ok and out[1].ok


def test_task_must_be_inside_workspace(tiny_model):
    with pytest.raises(InvalidInputError):
        generate(tiny_model, Task([-1.0, 0.5], [3.5, 3.5]), SamplerConfig(steps=2), Rng(0))
    with pytest.raises(InvalidInputError):
        generate(tiny_model, TOY_TASK, SamplerConfig(steps=2), Rng(0))


def test_length_override_rescales_time_step(tiny_model):
    res = generate(tiny_model, Task([0.5, 0.5], [3.5, 3.5]), SamplerConfig(steps=2, length=16), Rng(0))
    assert res.trajectory.q.shape == (16, 2)
    assert res.trajectory.duration == pytest.approx(0.7)


@pytest.mark.parametrize("sigma", [0.1, 0.5])
def test_exact_single_expert_field_recovers_the_expert(sigma):
    q = np.linspace(-0.8, 0.7, 16)
    model = SingleExpertOracle(q, sigma=sigma)
    task = Task([q[0]], [q[-1]])
    plain = generate(model, task, SamplerConfig(steps=100, score_correction=False), Rng(1))
    assert np.max(np.abs(plain.trajectory.q[:, 0] - q)) < 1e-9
    errs = []
    for k in (100, 1000):
        res = generate(model, task, SamplerConfig(steps=k), Rng(1))
        errs.append(np.max(np.abs(res.trajectory.q[:, 0] - q)))
    # the probability-flow contraction near t=1 is only -1/(2(1-t)), so Euler
    # leaves a residual of order sigma * sqrt(1/k) at the final step
    assert errs[1] < errs[0]
    assert errs[0] < sigma * 0.15 and errs[1] < sigma * 0.05


def test_pinned_endpoints_land_on_the_task(tiny_model):
    task = Task([0.5, 0.5], [3.5, 3.5])
    free = generate(tiny_model, task, SamplerConfig(steps=10), Rng(1))
    pinned = generate(tiny_model, task, SamplerConfig(steps=10, pin_endpoints=True), Rng(1))
    assert np.max(np.abs(pinned.trajectory.q[0] - task.start)) < 1e-9
    assert np.max(np.abs(pinned.trajectory.q[-1] - task.goal)) < 1e-9
    assert np.max(np.abs(free.trajectory.q[0] - task.start)) > 1e-6


def test_pinned_rows_follow_the_straight_bridge_mean():
    q = np.linspace(-0.8, 0.7, 16)
    model = SingleExpertOracle(q, sigma=0.5)
    task = Task([q[0]], [q[-1]])
    x0 = np.zeros((16, 3))
    x0[:, 0] = np.linspace(0.9, -0.9, 16)
    cfg = SamplerConfig(steps=8, snapshots=(0.25, 0.5), pin_endpoints=True)
    res = generate(model, task, cfg, Rng(0), init=x0)
    for t, pos in res.flow_snapshots:
        assert pos[0, 0] == pytest.approx((1 - t) * 0.9 + t * q[0], abs=1e-12)
        assert pos[-1, 0] == pytest.approx((1 - t) * -0.9 + t * q[-1], abs=1e-12)
    assert res.trajectory.q[0, 0] == pytest.approx(q[0], abs=1e-12)
