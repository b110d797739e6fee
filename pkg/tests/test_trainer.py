import numpy as np
import pytest

from llga import projector as P
from llga import trainer as T
from llga.errors import TrainingError, ValidationError
from llga.graph_store import FeatureMatrix
from llga.nd_template import assemble_center_only
from llga.prompts import Tokenizer, build_lp_prompt, build_nc_prompt, build_vocab, encode_sample


@pytest.fixture
def setup():
    tok = build_vocab(
        ["Given a node-centered graph which category does the center node belong to Choose from",
         "Given two node-centered graphs are these two center nodes connected Answer",
         "You are a helpful language and graph assistant understand the content provided assist with related questions",
         "yes no alpha beta"]
    )
    feats = FeatureMatrix(np.random.default_rng(0).normal(size=(6, 4)))
    dec = T.make_decoder(tok.vocab_size, dim=8, seed=5)
    params = P.init(4, 6, 8, seed=2)

    def nc_sample(v, label):
        prompt = build_nc_prompt(["alpha", "beta"], label)
        return encode_sample(prompt, tok, [assemble_center_only(v, feats)], centers=(v,))

    return tok, feats, dec, params, nc_sample


class TestContextVector:
    def test_single_token_stream(self, setup):
        tok, feats, dec, params, _ = setup
        sample = _token_only_sample(tok, "yes", answer="no")
        c = T.context_vector(dec, sample, params)
        token_id = tok.encode("yes")[0]
        np.testing.assert_allclose(c, dec.token_embeddings[token_id])

    def test_identity_projector_single_row(self, setup):
        tok, feats, dec, _, _ = setup
        row = np.arange(8.0)
        seq = assemble_center_only(0, FeatureMatrix(row[None, :]))
        sample = _EMPTY_TOKENS(seq)
        identity = P.ProjectorParams(np.eye(8), np.zeros(8), np.eye(8), np.zeros(8), "identity")
        np.testing.assert_allclose(T.context_vector(dec, sample, identity), row)

    def test_mean_of_equal_elements(self, setup):
        tok, feats, dec, params, _ = setup
        sample = _token_only_sample(tok, "yes yes", answer="no")
        single = _token_only_sample(tok, "yes", answer="no")
        np.testing.assert_allclose(
            T.context_vector(dec, sample, params), T.context_vector(dec, single, params)
        )

    def test_empty_stream_rejected(self, setup):
        tok, feats, dec, params, _ = setup
        from llga.prompts import EncodedSample

        empty = EncodedSample(((),), (), (Tokenizer.BOS, 4, Tokenizer.EOS), (), "node_classification")
        with pytest.raises(ValidationError):
            T.context_vector(dec, empty, params)


def _EMPTY_TOKENS(seq):
    from llga.prompts import EncodedSample

    return EncodedSample(((), ()), (seq,), (Tokenizer.BOS, 4, Tokenizer.EOS), (0,), "node_classification")


def _token_only_sample(tok, text, answer):
    from llga.prompts import EncodedSample

    return EncodedSample(
        (tuple(tok.encode(text)),),
        (),
        (Tokenizer.BOS, *tok.encode(answer), Tokenizer.EOS),
        (),
        "node_classification",
    )


class TestAnswerLoss:
    def test_positive_finite(self, setup):
        tok, feats, dec, params, nc_sample = setup
        loss, grads = T.answer_loss(dec, nc_sample(0, "alpha"), params)
        assert np.isfinite(loss) and loss > 0
        assert all(np.all(np.isfinite(t)) for t in grads.tensors().values())

    def test_deterministic(self, setup):
        tok, feats, dec, params, nc_sample = setup
        a = T.answer_loss(dec, nc_sample(1, "beta"), params)
        b = T.answer_loss(dec, nc_sample(1, "beta"), params)
        assert a[0] == b[0]
        for name, tensor in a[1].tensors().items():
            np.testing.assert_array_equal(tensor, b[1].tensors()[name])

    def test_finite_difference_oracle(self, setup):
        tok, feats, dec, _, nc_sample = setup
        rng = np.random.default_rng(1)
        worst = 0.0
        for trial in range(50):
            params = P.init(4, 5, 8, seed=int(rng.integers(1 << 30)))
            sample = nc_sample(int(rng.integers(6)), "alpha" if trial % 2 else "beta")

            def loss(p):
                return T.answer_loss(dec, sample, p)

            worst = max(worst, P.grad_check(params, loss, eps=1e-5))
        assert worst <= 1e-4

    def test_zero_projector_loss_depends_only_on_tokens_and_answer(self, setup):
        tok, feats, dec, _, nc_sample = setup
        zero = P.ProjectorParams(np.zeros((3, 4)), np.zeros(3), np.zeros((8, 3)), np.zeros(8))
        a = T.answer_loss(dec, nc_sample(0, "alpha"), zero)[0]
        b = T.answer_loss(dec, nc_sample(4, "alpha"), zero)[0]
        assert a == b  # identical token stream and answer; graph rows silenced

    def test_empty_answer_rejected(self, setup):
        tok, feats, dec, params, nc_sample = setup
        with pytest.raises(ValidationError):
            T.answer_loss(dec, nc_sample(0, "alpha").without_answer(), params)

    def test_non_finite_loss_aborts(self, setup):
        tok, feats, dec, params, nc_sample = setup
        bad = T.MockDecoder(
            dec.token_embeddings.copy(),
            np.where(np.eye(dec.vocab_size, dec.dim) > 0, np.inf, dec.output_weights),
            seed=0,
        )
        with np.errstate(all="ignore"), pytest.raises(TrainingError):
            T.answer_loss(bad, nc_sample(0, "alpha"), params)


class TestMockDecoder:
    def test_frozen_tensors(self, setup):
        tok, feats, dec, params, nc_sample = setup
        with pytest.raises(ValueError):
            dec.token_embeddings[0, 0] = 1.0

    def test_seeded_scale(self):
        dec = T.make_decoder(1000, dim=64, seed=0)
        assert dec.token_embeddings.std() == pytest.approx(1 / 8, rel=0.05)


class TestTrain:
    def make_dataset(self, setup, n=8):
        tok, feats, dec, params, nc_sample = setup
        return [nc_sample(v % 6, "alpha" if v % 2 else "beta") for v in range(n)]

    def test_zero_lr_leaves_params_and_curve_flat(self, setup):
        tok, feats, dec, params, _ = setup
        dataset = self.make_dataset(setup)
        cfg = T.TrainConfig(learning_rate=0.0, batch_size=len(dataset), epochs=3, seed=0)
        trained, curve = T.train(params, dataset, dec, cfg)
        for name, tensor in trained.tensors().items():
            np.testing.assert_array_equal(tensor, params.tensors()[name])
        assert len(set(curve.losses)) == 1

    def test_loss_decreases_on_toy_task(self, setup):
        tok, feats, dec, params, _ = setup
        dataset = self.make_dataset(setup, n=12)
        cfg = T.TrainConfig(learning_rate=0.05, batch_size=4, epochs=10, seed=1)
        _, curve = T.train(params, dataset, dec, cfg)
        assert curve.losses[-1] < curve.losses[0]

    def test_deterministic(self, setup):
        tok, feats, dec, params, _ = setup
        dataset = self.make_dataset(setup)
        cfg = T.TrainConfig(learning_rate=0.01, batch_size=3, epochs=2, seed=9)
        a, _ = T.train(params, dataset, dec, cfg)
        b, _ = T.train(params, dataset, dec, cfg)
        for name, tensor in a.tensors().items():
            np.testing.assert_array_equal(tensor, b.tensors()[name])

    def test_decoder_untouched(self, setup):
        tok, feats, dec, params, _ = setup
        before = (dec.token_embeddings.tobytes(), dec.output_weights.tobytes())
        cfg = T.TrainConfig(learning_rate=0.05, batch_size=4, epochs=2, seed=0)
        T.train(params, self.make_dataset(setup), dec, cfg)
        assert (dec.token_embeddings.tobytes(), dec.output_weights.tobytes()) == before

    def test_replication_triples_epoch_stream(self, setup):
        tok, feats, dec, params, _ = setup
        dataset = self.make_dataset(setup, n=4)
        cfg = T.TrainConfig(learning_rate=0.01, batch_size=1, epochs=1, seed=0, replicate={"tiny": 3})
        _, curve = T.train(params, dataset, dec, cfg, dataset_names=["tiny"] * 4)
        assert curve.steps == 12

    def test_sgd_supported(self, setup):
        tok, feats, dec, params, _ = setup
        cfg = T.TrainConfig(learning_rate=0.5, batch_size=4, epochs=1, optimizer="sgd", seed=0)
        trained, _ = T.train(params, self.make_dataset(setup), dec, cfg)
        assert any(
            not np.array_equal(trained.tensors()[n], params.tensors()[n]) for n in ("w1", "w2")
        )

    def test_empty_dataset_rejected(self, setup):
        tok, feats, dec, params, _ = setup
        with pytest.raises(ValidationError):
            T.train(params, [], dec, T.TrainConfig())


def _chain_decoder(tok, transitions, dim=None):
    """Decoder whose next-token argmax follows `transitions` regardless of c."""
    vocab = tok.vocab_size
    dim = dim or vocab
    emb = np.zeros((vocab, dim))
    for t in range(vocab):
        emb[t, t % dim] = 10.0
    out = np.zeros((vocab, dim))
    for prev, nxt in transitions.items():
        out[nxt, prev % dim] += 20.0
    return T.MockDecoder(emb, out, seed=0)


class TestGreedyDecode:
    def test_immediate_eos(self, setup):
        tok, feats, dec, params, nc_sample = setup
        chain = _chain_decoder(tok, {Tokenizer.BOS: Tokenizer.EOS})
        proj = P.init(4, 4, chain.dim, seed=0)
        out = T.greedy_decode(chain, nc_sample(0, "alpha").without_answer(), proj, max_len=5)
        assert out == [Tokenizer.EOS]

    def test_length_capped(self, setup):
        tok, feats, dec, params, nc_sample = setup
        yes = tok.encode("yes")[0]
        chain = _chain_decoder(tok, {Tokenizer.BOS: yes, yes: yes})
        proj = P.init(4, 4, chain.dim, seed=0)
        out = T.greedy_decode(chain, nc_sample(0, "alpha").without_answer(), proj, max_len=3)
        assert out == [yes, yes, yes]

    def test_deterministic(self, setup):
        tok, feats, dec, params, nc_sample = setup
        sample = nc_sample(2, "beta").without_answer()
        assert T.greedy_decode(dec, sample, params, 6) == T.greedy_decode(dec, sample, params, 6)


class TestEvaluate:
    def test_perfect_nc_chain(self, setup):
        tok, feats, dec, params, nc_sample = setup
        alpha = tok.encode("alpha")[0]
        chain = _chain_decoder(tok, {Tokenizer.BOS: alpha, alpha: Tokenizer.EOS})
        proj = P.init(4, 4, chain.dim, seed=0)
        samples = [nc_sample(v, "alpha") for v in range(4)]
        acc = T.evaluate("node_classification", samples, chain, proj, tok, ["alpha", "beta"])
        assert acc == 1.0

    def test_all_wrong_lp(self, setup):
        tok, feats, dec, params, nc_sample = setup
        yes = tok.encode("yes")[0]
        chain = _chain_decoder(tok, {Tokenizer.BOS: yes, yes: Tokenizer.EOS})
        proj = P.init(4, 4, chain.dim, seed=0)
        prompt = build_lp_prompt(False)  # truth is "no" but decoder says "yes"
        seqs = [assemble_center_only(v, feats) for v in (0, 1)]
        samples = [encode_sample(prompt, tok, seqs, centers=(0, 1))]
        assert T.evaluate("link_prediction", samples, chain, proj, tok) == 0.0

    def test_unknown_task(self, setup):
        tok, feats, dec, params, nc_sample = setup
        with pytest.raises(ValidationError):
            T.evaluate("segmentation", [nc_sample(0, "alpha")], dec, params, tok)
