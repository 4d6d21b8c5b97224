"""Training loop, optimizer, bidirectional sampling, and checkpoints."""

import math
import os

import numpy as np
import pytest

from rxnbridge import bridge
from rxnbridge.chem import align_reaction, graph_to_smiles
from rxnbridge.model import ModelConfig, forward_model, init_params
from rxnbridge.net import Tensor
from rxnbridge import train as T

SMALL_CFG = ModelConfig(
    latent_dim=16, n_enc_layers=1, n_merge_layers=1, n_dec_layers=1, n_heads=2
)

RXNS = [
    "[CH2:1]=[CH2:2].[Br:3][Br:4]>>[CH2:1]([Br:3])[CH2:2][Br:4]",
    "[CH3:1][Cl:2].[NH3:3]>>[CH3:1][NH2:3]",
    "[CH4:1]>>[CH4:1]",
]


@pytest.fixture(scope="module")
def pairs():
    return [align_reaction(r) for r in RXNS]


class TestTrainConfig:
    def test_invalid_task_mix_rejected(self):
        with pytest.raises(ValueError, match="task_mix"):
            T.TrainConfig(task_mix="bidirectional")

    def test_nonpositive_lr_rejected(self):
        with pytest.raises(ValueError, match="lr"):
            T.TrainConfig(lr=0.0)

    def test_warmup_longer_than_run_rejected(self):
        with pytest.raises(ValueError, match="warmup"):
            T.TrainConfig(n_steps=10, warmup_steps=100)


class TestAdamW:
    def test_warmup_is_linear(self):
        params = {"w": Tensor(np.zeros(3), requires_grad=True)}
        opt = T.AdamW(params, T.TrainConfig(n_steps=100, warmup_steps=10, lr=1e-2))
        lrs = []
        for _ in range(12):
            params["w"].grad = np.ones(3)
            lrs.append(opt.step())
        assert lrs[0] == pytest.approx(1e-3)
        assert lrs[4] == pytest.approx(5e-3)
        assert lrs[9] == pytest.approx(1e-2)
        assert lrs[11] == pytest.approx(1e-2)  # constant after warmup

    def test_single_param_descent(self):
        # one AdamW step moves opposite to the gradient
        params = {"w": Tensor(np.array([1.0, -1.0]), requires_grad=True)}
        opt = T.AdamW(params, T.TrainConfig(
            n_steps=10, warmup_steps=0, lr=1e-2, weight_decay=0.0))
        params["w"].grad = np.array([1.0, -1.0])
        before = params["w"].data.copy()
        opt.step()
        delta = params["w"].data - before
        assert delta[0] < 0 < delta[1]

    def test_cosine_decay_reaches_zero_at_last_step(self):
        params = {"w": Tensor(np.zeros(3), requires_grad=True)}
        opt = T.AdamW(params, T.TrainConfig(
            n_steps=100, warmup_steps=10, lr=1e-2, lr_decay="cosine"))
        lrs = []
        for _ in range(100):
            params["w"].grad = np.ones(3)
            lrs.append(opt.step())
        assert lrs[9] == pytest.approx(1e-2)  # warmup peak
        # midpoint of the decay span: half the peak rate
        assert lrs[54] == pytest.approx(5e-3, rel=0.05)
        assert lrs[99] == pytest.approx(0.0, abs=1e-8)
        assert all(a >= b - 1e-12 for a, b in zip(lrs[9:], lrs[10:]))

    def test_unknown_lr_decay_rejected(self):
        with pytest.raises(ValueError, match="lr_decay"):
            T.TrainConfig(lr_decay="linear")

    def test_weight_decay_shrinks_unused_weights(self):
        params = {"w": Tensor(np.array([10.0]), requires_grad=True)}
        opt = T.AdamW(params, T.TrainConfig(
            n_steps=10, warmup_steps=0, lr=1e-2, weight_decay=0.1))
        params["w"].grad = np.zeros(1)
        opt.step()
        assert 0 < params["w"].data[0] < 10.0


class TestClipGradients:
    def test_large_gradients_scaled_to_norm(self):
        params = {"a": Tensor(np.zeros(4), requires_grad=True)}
        params["a"].grad = np.full(4, 10.0)
        norm = T.clip_gradients(params, 1.0)
        assert norm == pytest.approx(20.0)
        assert np.linalg.norm(params["a"].grad) == pytest.approx(1.0)

    def test_small_gradients_untouched(self):
        params = {"a": Tensor(np.zeros(2), requires_grad=True)}
        params["a"].grad = np.array([0.1, 0.1])
        T.clip_gradients(params, 1.0)
        assert np.allclose(params["a"].grad, [0.1, 0.1])


class TestBatching:
    def test_padding_shapes_and_mask(self, pairs):
        from rxnbridge.chem import encode_graph

        graphs = [encode_graph(p.reactants) for p in pairs]
        batch, mask = T.pad_channel_batch(graphs)
        n = max(p.n_atoms for p in pairs)
        assert batch["atom"].shape == (3, n)
        assert batch["bond"].shape == (3, n, n)
        assert mask.sum() == sum(p.n_atoms for p in pairs)
        # padded positions are class 0 with zero bonds
        assert batch["atom"][2, pairs[2].n_atoms:].max() == 0
        assert batch["bond"][2, pairs[2].n_atoms:].max() == 0


class TestTrainStep:
    def test_initial_atom_loss_near_log_k(self, pairs):
        # [TRIVIAL] random init is near-uniform: atom CE ~ ln 73 +- 0.8
        rng = np.random.default_rng(0)
        params = init_params(SMALL_CFG, rng)
        opt = T.AdamW(params, T.TrainConfig(n_steps=10, warmup_steps=0))
        stats = T.train_step(
            params, SMALL_CFG, opt, pairs, bridge.Scheduler(sigma=1.0), rng
        )
        assert abs(stats["atom"] - math.log(73)) < 0.8

    def test_loss_decreases_over_short_run(self, pairs):
        tc = T.TrainConfig(n_steps=40, batch_size=3, lr=2e-3, warmup_steps=5, seed=1)
        _, log = T.train(pairs, SMALL_CFG, tc)
        early = np.mean([r["total"] for r in log[:5]])
        late = np.mean([r["total"] for r in log[-5:]])
        assert late < early

    def test_descent_on_single_example(self, pairs):
        # one tiny-lr step strictly decreases that example's loss
        rng = np.random.default_rng(2)
        params = init_params(SMALL_CFG, rng)
        tc = T.TrainConfig(n_steps=10, warmup_steps=0, lr=1e-5, weight_decay=0.0)
        opt = T.AdamW(params, tc)
        batch = [pairs[0]]
        sched = bridge.Scheduler(sigma=0.0)  # deterministic path
        rng_a = np.random.default_rng(7)
        before = T.train_step(params, SMALL_CFG, opt, batch, sched, rng_a,
                              task_mix="forward_only")
        rng_b = np.random.default_rng(7)  # identical bridge sample
        after = T.train_step(params, SMALL_CFG, opt, batch, sched, rng_b,
                             task_mix="forward_only")
        assert after["total"] < before["total"]

    def test_identical_seeds_give_identical_trajectories(self, pairs):
        tc = T.TrainConfig(n_steps=15, batch_size=2, lr=1e-3, warmup_steps=5, seed=9)
        _, log_a = T.train(pairs, SMALL_CFG, tc)
        _, log_b = T.train(pairs, SMALL_CFG, tc)
        assert [r["total"] for r in log_a] == [r["total"] for r in log_b]

    def test_task_mix_fairness(self, pairs):
        # fair-coin task sampling over many draws
        rng = np.random.default_rng(3)
        draws = rng.integers(0, 2, size=10000)
        frac = draws.mean()
        assert 0.48 <= frac <= 0.52

    def test_non_finite_loss_aborts_without_update(self, pairs):
        rng = np.random.default_rng(4)
        params = init_params(SMALL_CFG, rng)
        params["head.atom.w"].data[:] = np.inf  # force a non-finite forward
        opt = T.AdamW(params, T.TrainConfig(n_steps=10, warmup_steps=0))
        snapshot = params["enc_t.emb_atom"].data.copy()
        with pytest.raises(T.NonFiniteLossError):
            T.train_step(params, SMALL_CFG, opt, pairs,
                         bridge.Scheduler(sigma=1.0), rng)
        assert np.array_equal(params["enc_t.emb_atom"].data, snapshot)
        assert opt.step_count == 0

    def test_resume_continues_step_counter(self, pairs):
        tc = T.TrainConfig(n_steps=8, batch_size=2, warmup_steps=2, seed=5)
        params, log = T.train(pairs, SMALL_CFG, tc)
        tc2 = T.TrainConfig(n_steps=12, batch_size=2, warmup_steps=2, seed=5)
        _, log2 = T.train(pairs, SMALL_CFG, tc2, params=params, start_step=8)
        assert [int(r["step"]) for r in log2] == [9, 10, 11, 12]


@pytest.fixture(scope="module")
def trained(pairs):
    tc = T.TrainConfig(n_steps=250, batch_size=3, lr=3e-3, warmup_steps=20,
                       seed=11)
    params, _ = T.train(pairs, SMALL_CFG, tc)
    return params


class TestSampling:
    def test_forward_sample_shapes_and_validity(self, pairs, trained):
        sc = T.SampleConfig(n_integration_steps=5, n_samples=4)
        rng = np.random.default_rng(0)
        graphs = T.sample_endpoint_graphs(
            pairs[0].reactants, "forward", trained, SMALL_CFG, sc, rng
        )
        assert len(graphs) == 4
        for g in graphs:
            assert g.n_atoms == pairs[0].n_atoms
            assert np.array_equal(g.bond, g.bond.T)
            assert np.all(np.diag(g.bond) == 0)

    def test_memorized_identity_reaction(self, pairs, trained):
        # the identity reaction is a fixed point in both directions
        sc = T.SampleConfig(n_integration_steps=5, n_samples=8)
        rng = np.random.default_rng(1)
        fwd = T.predict_smiles(pairs[2].reactants, "forward", trained,
                               SMALL_CFG, sc, rng)
        rev = T.predict_smiles(pairs[2].product, "reverse", trained,
                               SMALL_CFG, sc, rng)
        assert fwd[0][0] == "C"
        assert rev[0][0] == "C"

    def test_single_step_single_sample(self, pairs, trained):
        sc = T.SampleConfig(n_integration_steps=1, n_samples=1)
        rng = np.random.default_rng(2)
        ranked = T.predict_smiles(pairs[0].reactants, "forward", trained,
                                  SMALL_CFG, sc, rng)
        assert sum(c for _, c in ranked) <= 1

    def test_sampling_is_seed_deterministic(self, pairs, trained):
        sc = T.SampleConfig(n_integration_steps=5, n_samples=6)
        a = T.predict_smiles(pairs[0].reactants, "forward", trained, SMALL_CFG,
                             sc, np.random.default_rng(42))
        b = T.predict_smiles(pairs[0].reactants, "forward", trained, SMALL_CFG,
                             sc, np.random.default_rng(42))
        assert a == b

    def test_unknown_direction_rejected(self, pairs, trained):
        sc = T.SampleConfig()
        with pytest.raises(ValueError, match="direction"):
            T.sample_endpoint_graphs(pairs[0].reactants, "sideways", trained,
                                     SMALL_CFG, sc, np.random.default_rng(0))


class TestRanking:
    def test_frequency_ranking_with_tie_break(self, pairs):
        g1 = pairs[2].reactants  # methane
        g2 = pairs[0].reactants  # ethylene + Br2
        ranked = T.rank_predictions([g2, g1, g2, g1, g1])
        assert ranked[0] == ("C", 3)
        assert ranked[1][1] == 2

    def test_ties_keep_first_seen_order(self, pairs):
        g1 = pairs[2].reactants
        g2 = pairs[0].reactants
        ranked = T.rank_predictions([g2, g1])
        assert [r[0] for r in ranked] == ["BrBr.C=C", "C"]

    def test_undecodable_graphs_dropped(self, pairs):
        from rxnbridge.chem import ReactionGraph

        all_dummy = ReactionGraph(
            atom_type=np.array([73]), aromatic=np.array([0]),
            charge=np.array([6]), bond=np.zeros((1, 1), dtype=np.int64),
            side="product",
        )
        ranked = T.rank_predictions([all_dummy, pairs[2].reactants])
        assert ranked == [("C", 1)]


class TestCheckpoints:
    def test_round_trip_is_float32_exact(self, pairs, tmp_path):
        rng = np.random.default_rng(6)
        params = init_params(SMALL_CFG, rng)
        path = str(tmp_path / "model.bin")
        T.save_checkpoint(path, params, SMALL_CFG, {"step": "5"})
        loaded, cfg, meta = T.load_checkpoint(path)
        assert cfg == SMALL_CFG
        assert meta["step"] == "5"
        for name in params:
            expect = params[name].data.astype("<f4").astype(np.float64)
            assert np.array_equal(loaded[name].data, expect), name

    def test_reloaded_logits_bit_identical(self, pairs, tmp_path):
        rng = np.random.default_rng(7)
        params = init_params(SMALL_CFG, rng)
        path = str(tmp_path / "model.bin")
        T.save_checkpoint(path, params, SMALL_CFG)
        # round the live params to float32 the same way the file does
        for p in params.values():
            p.data = p.data.astype("<f4").astype(np.float64)
        loaded, _, _ = T.load_checkpoint(path)
        from rxnbridge.chem import encode_graph

        g = encode_graph(pairs[0].reactants)
        batch, mask = T.pad_channel_batch([g])
        task = np.array([0])
        a = forward_model(batch, batch, task, params, SMALL_CFG, mask)
        b = forward_model(batch, batch, task, loaded, SMALL_CFG, mask)
        assert np.array_equal(a.atom.data, b.atom.data)
        assert np.array_equal(a.bond.data, b.bond.data)

    def test_corrupt_magic_rejected(self, tmp_path):
        rng = np.random.default_rng(8)
        params = init_params(SMALL_CFG, rng)
        path = str(tmp_path / "model.bin")
        T.save_checkpoint(path, params, SMALL_CFG)
        raw = bytearray(open(path, "rb").read())
        raw[3] ^= 0xFF
        open(path, "wb").write(bytes(raw))
        with pytest.raises(T.CheckpointError, match="magic"):
            T.load_checkpoint(path)

    def test_truncated_file_rejected(self, tmp_path):
        rng = np.random.default_rng(9)
        params = init_params(SMALL_CFG, rng)
        path = str(tmp_path / "model.bin")
        T.save_checkpoint(path, params, SMALL_CFG)
        raw = open(path, "rb").read()
        open(path, "wb").write(raw[: len(raw) // 2])
        with pytest.raises(T.CheckpointError, match="truncated"):
            T.load_checkpoint(path)

    def test_unknown_version_rejected(self, tmp_path):
        rng = np.random.default_rng(10)
        params = init_params(SMALL_CFG, rng)
        path = str(tmp_path / "model.bin")
        T.save_checkpoint(path, params, SMALL_CFG)
        raw = bytearray(open(path, "rb").read())
        raw[8:12] = (99).to_bytes(4, "little")
        open(path, "wb").write(bytes(raw))
        with pytest.raises(T.CheckpointError, match="version"):
            T.load_checkpoint(path)

    def test_vocabulary_mismatch_rejected(self, tmp_path, monkeypatch):
        rng = np.random.default_rng(11)
        params = init_params(SMALL_CFG, rng)
        path = str(tmp_path / "model.bin")
        import rxnbridge.train as train_mod

        monkeypatch.setattr(train_mod, "ELEMENTS", ["X", "Y"])
        T.save_checkpoint(path, params, SMALL_CFG)
        monkeypatch.undo()
        with pytest.raises(T.CheckpointError, match="vocabulary"):
            T.load_checkpoint(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        rng = np.random.default_rng(12)
        params = init_params(SMALL_CFG, rng)
        path = str(tmp_path / "model.bin")
        T.save_checkpoint(path, params, SMALL_CFG)
        with open(path, "ab") as f:
            f.write(b"extra")
        with pytest.raises(T.CheckpointError, match="trailing"):
            T.load_checkpoint(path)
