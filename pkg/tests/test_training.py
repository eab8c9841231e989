import numpy as np
import pytest

from sgcl.contrastive import ContrastConfig
from sgcl.errors import ConfigError, DataError
from sgcl.graph import from_edges
from sgcl.neurons import NeuronConfig, NeuronState
from sgcl.ops import OptimConfig
from sgcl.probe import evaluate_trials
from sgcl.synthetic import erdos_renyi, sbm
from sgcl.training import (TrainConfig, TrainHistory, View, block_gradients, corrupted_view,
                           embed, grad_norm_probe, init_model, load_checkpoint, save_checkpoint,
                           train)


def _cfg(**kw):
    base = dict(t_steps=4, hidden=6, depth=2, epochs=3, seed=0,
                neuron=NeuronConfig(kind="lif", tau_m=2.0, v_threshold=0.1))
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def graph():
    return erdos_renyi(30, 0.15, seed=11, d=12)


def _block_grads(g, cfg, params, pred, upto):
    """Per-block first-layer gradients for blocks 0..upto, each from fresh buffers."""
    pos, neg = View.build(g, cfg.t_steps), corrupted_view(g, cfg, 0)
    sp = NeuronState.zeros((g.num_nodes, cfg.hidden), params.neuron, params.tau_m)
    sn = NeuronState.zeros((g.num_nodes, cfg.hidden), params.neuron, params.tau_m)
    out, carried = [], []
    for steps in cfg.blocks()[:upto + 1]:
        for p in params.all_params() + pred.params():
            p.zero_grad()
        carried.append((sp.potential.copy(), sn.potential.copy()))
        _, sp, sn, _ = block_gradients(pos, neg, params, pred, sp, sn, steps, cfg.contrast.margin)
        out.append([p.grad.copy() for p in params.all_params()])
    return out, carried


class TestConfig:
    def test_block_larger_than_t(self):
        with pytest.raises(ConfigError):
            TrainConfig(t_steps=2, block_size=3)

    @pytest.mark.parametrize("kw", [{"t_steps": 0}, {"epochs": 0}, {"depth": 0},
                                    {"detach_mode": "everything"}])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)

    def test_blocks_cover_steps(self):
        assert TrainConfig(t_steps=5, block_size=2).blocks() == [[0, 1], [2, 3], [4]]


class TestIsolation:
    def test_other_blocks_untouched(self, graph):
        cfg = _cfg()
        params, pred = init_model(graph, cfg)
        grads, _ = _block_grads(graph, cfg, params, pred, cfg.t_steps - 1)
        for t, g in enumerate(grads):
            for other in range(cfg.t_steps):
                if other != t:
                    assert not g[other].any(), f"block {t} wrote into first layer {other}"
            assert g[t].any()

    @pytest.mark.parametrize("t, other", [(1, 3), (0, 2), (2, 3)])
    def test_later_block_weights_do_not_matter(self, graph, t, other):
        cfg = _cfg()
        params, pred = init_model(graph, cfg)
        before, _ = _block_grads(graph, cfg, params, pred, t)
        params.first_layer[other].value += 5.0
        after, _ = _block_grads(graph, cfg, params, pred, t)
        for a, b in zip(before[t], after[t]):
            assert a.tobytes() == b.tobytes()

    def test_earlier_block_weights_cut_at_detached_state(self, graph):
        # block 2's gradient is a function of the potential it receives and its own
        # parameters only: perturbing block 0 while feeding the same potential is a no-op
        cfg = _cfg()
        params, pred = init_model(graph, cfg)
        grads, carried = _block_grads(graph, cfg, params, pred, 2)
        params.first_layer[0].value *= -3.0
        pos, neg = View.build(graph, cfg.t_steps), corrupted_view(graph, cfg, 0)
        for p in params.all_params() + pred.params():
            p.zero_grad()
        sp = NeuronState(carried[2][0], params.neuron, params.tau_m)
        sn = NeuronState(carried[2][1], params.neuron, params.tau_m)
        block_gradients(pos, neg, params, pred, sp, sn, [2], cfg.contrast.margin)
        for a, p in zip(grads[2], params.all_params()):
            assert a.tobytes() == p.grad.tobytes()

    def test_single_step_equals_end_to_end(self, graph):
        cfg = _cfg(t_steps=1)
        a = grad_norm_probe(graph, cfg, isolate=True)
        b = grad_norm_probe(graph, cfg, isolate=False)
        assert a == b

    def test_last_step_norm_path_equality(self, graph):
        cfg = _cfg(t_steps=6)
        iso = grad_norm_probe(graph, cfg, isolate=True)
        full = grad_norm_probe(graph, cfg, isolate=False)
        assert iso[-1] == pytest.approx(full[-1], rel=1e-6)

    def test_isolated_norms_ignore_later_steps(self, graph):
        cfg = _cfg(t_steps=6)
        params, pred = init_model(graph, cfg)
        a = grad_norm_probe(graph, cfg, True, params.copy(), pred.copy())
        params.first_layer[5].value += 1.0
        b = grad_norm_probe(graph, cfg, True, params, pred)
        assert a[:5] == b[:5]

    def test_zero_margin_identical_views_zero_loss(self, graph):
        cfg = _cfg(contrast=ContrastConfig(margin=0.0))
        params, pred = init_model(graph, cfg)
        view = View.build(graph, cfg.t_steps)
        sp = sn = NeuronState.zeros((graph.num_nodes, cfg.hidden), params.neuron)
        for steps in cfg.blocks():
            loss, sp, sn, _ = block_gradients(view, view, params, pred, sp, sn, steps, 0.0)
            assert loss == 0.0


class TestTrain:
    def test_deterministic(self, graph):
        cfg = _cfg()
        p1, q1, h1 = train(graph, cfg)
        p2, q2, h2 = train(graph, cfg)
        assert h1.comparable() == h2.comparable()
        for a, b in zip(p1.all_params() + q1.params(), p2.all_params() + q2.params()):
            assert a.value.tobytes() == b.value.tobytes()

    def test_history_shape(self, graph, tmp_path):
        cfg = _cfg(t_steps=4, block_size=2, epochs=3, early_stop_patience=10)
        _, _, h = train(graph, cfg)
        assert len(h.rows) == 3 * 2
        assert len(h.step_grad_norms) == 3 and len(h.step_grad_norms[0]) == 4
        assert all(np.isfinite(r["loss"]) for r in h.rows)
        h.to_csv(tmp_path / "h.csv")
        back = TrainHistory.from_csv(tmp_path / "h.csv")
        assert back.comparable() == [{k: v for k, v in r.items() if k != "seconds"}
                                     for r in h.rows]

    def test_shared_weights_updated_once_per_block(self, graph):
        cfg = _cfg(t_steps=4, epochs=2, early_stop_patience=10)
        params, pred, _ = train(graph, cfg)
        assert params.shared[0].step_count == 2 * 4
        assert params.first_layer[0].step_count == 2
        assert pred.w.step_count == 2 * 4

    def test_plif_time_constant_learns(self, graph):
        cfg = _cfg(neuron=NeuronConfig(kind="plif", v_threshold=0.1), epochs=2)
        params, _, _ = train(graph, cfg)
        assert params.tau_m != 1.0

    def test_encoder_output_mode_freezes_encoder(self, graph):
        cfg = _cfg(detach_mode="encoder_output")
        start, _ = init_model(graph, cfg)
        params, pred, _ = train(graph, cfg)
        for a, b in zip(start.first_layer + start.shared, params.first_layer + params.shared):
            np.testing.assert_array_equal(a.value, b.value)

    def test_early_stop_on_plateau(self):
        # zero features never reach threshold: the loss stays at the margin
        g = from_edges(10, [[i, i + 1] for i in range(9)], np.zeros((10, 4)))
        cfg = _cfg(epochs=30, early_stop_patience=3, neuron=NeuronConfig(kind="if", v_threshold=1.0))
        _, _, h = train(g, cfg)
        assert h.stopped_early
        assert len(h.epoch_losses()) == 4
        assert h.epoch_losses() == [1.0] * 4

    def test_corruption_resampled_per_epoch(self, graph):
        cfg = _cfg()
        a, b = corrupted_view(graph, cfg, 0), corrupted_view(graph, cfg, 1)
        assert not np.array_equal(np.concatenate(a.groups, 1), np.concatenate(b.groups, 1))

    def test_training_beats_firing_random_encoder(self):
        # a random encoder that does fire is already informative on an SBM;
        # training should still improve the probe
        gains = []
        for s in range(3):
            g = sbm(separation=0.2, seed=s)
            cfg = TrainConfig(t_steps=8, hidden=8, depth=2, epochs=5, seed=s,
                              optim=OptimConfig(learning_rate=0.05),
                              contrast=ContrastConfig(seed=s),
                              neuron=NeuronConfig(v_threshold=0.3))
            p0, _ = init_model(g, cfg)
            assert embed(g, p0).unpack().any()
            before = evaluate_trials(embed(g, p0), g.labels, 1, seed=s)["mean_acc"]
            p1, _, _ = train(g, cfg)
            after = evaluate_trials(embed(g, p1), g.labels, 1, seed=s)["mean_acc"]
            gains.append(after - before)
        assert np.mean(gains) > 0


class TestCheckpoint:
    def test_round_trip(self, graph, tmp_path):
        cfg = _cfg(epochs=1)
        params, pred, _ = train(graph, cfg)
        save_checkpoint(tmp_path / "m.sgcl", params, pred, cfg)
        p2, q2, cfg2 = load_checkpoint(tmp_path / "m.sgcl")
        assert cfg2 == cfg
        np.testing.assert_array_equal(embed(graph, p2).unpack(), embed(graph, params).unpack())
        np.testing.assert_array_equal(q2.w.value, pred.w.value)

    def test_missing_tensor(self, tmp_path):
        from sgcl.ops import save_tensors
        save_tensors(tmp_path / "m.sgcl", {"x": np.ones(1, np.float32)})
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "m.sgcl")
