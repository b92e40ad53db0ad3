import numpy as np
import pytest

from readgen import autodiff as ad
from readgen import decoder as dec
from readgen import encoder as enc
from readgen import layers
from readgen.autodiff import DomainError, Tensor
from readgen.decoder import GenerationConfig
from readgen.textdata import (ConversationInstance, Document, EmbeddingTable,
                              build_vocabulary, tokenize)

from gradcheck import check_grads

E, H = 5, 6


@pytest.fixture
def setup():
    rng = np.random.default_rng(0)
    inst = ConversationInstance(
        instance_id="d0", history=[tokenize("what is this")],
        document=Document(sentences=[["fact", "one", "two"]],
                          tags=[["p"] * 3]),
        response=tokenize("it is fact"))
    vocab = build_vocabulary([inst])
    table = EmbeddingTable(vocab, dim=E, rng=rng)
    enc_params = enc.init_encoder(rng, E, H)
    dec_params = dec.init_decoder(rng, E, H, len(vocab))
    memory = enc.encode_instance(inst, enc_params, table.table, vocab)
    return rng, inst, vocab, table, dec_params, memory


class TestInitState:
    def test_h0_is_projected_pool(self, setup):
        _, _, vocab, _, params, memory = setup
        state = dec.init_state(memory, params, vocab.bos_id)
        expected = memory.history_pooled.data @ params.h0_proj.data
        assert np.array_equal(state.h.data, expected)

    def test_step_zero_bos(self, setup):
        _, _, vocab, _, params, memory = setup
        state = dec.init_state(memory, params, vocab.bos_id)
        assert state.step == 0
        assert state.prev_token == vocab.bos_id

    def test_deterministic(self, setup):
        _, _, vocab, _, params, memory = setup
        s1 = dec.init_state(memory, params, vocab.bos_id)
        s2 = dec.init_state(memory, params, vocab.bos_id)
        assert np.array_equal(s1.h.data, s2.h.data)
        assert np.array_equal(s1.prev_embedding.data, s2.prev_embedding.data)


class TestDecodeStep:
    def test_distribution_is_probability_vector(self, setup):
        _, _, vocab, _, params, memory = setup
        state = dec.init_state(memory, params, vocab.bos_id)
        dist, _, weights = dec.decode_step(state, memory, params,
                                           GenerationConfig())
        assert np.all(dist.data >= 0)
        assert abs(dist.data.sum() - 1.0) < 1e-9
        assert abs(weights.data.sum() - 1.0) < 1e-9

    def test_argmax_invariant_to_temperature(self, setup):
        _, _, vocab, _, params, memory = setup
        argmaxes = set()
        for tau in (0.25, 0.5, 1.0, 2.0, 4.0):
            state = dec.init_state(memory, params, vocab.bos_id)
            dist, _, _ = dec.decode_step(state, memory, params,
                                         GenerationConfig(tau=tau))
            argmaxes.add(int(dist.data.argmax()))
        assert len(argmaxes) == 1

    def test_gradcheck_single_step_cross_entropy(self, setup):
        rng, _, vocab, _, params, memory = setup
        mem_rows = Tensor(rng.normal(size=(3, H)))
        pooled = Tensor(rng.normal(size=H))
        target = 4
        leaves = ([pooled, mem_rows] + layers.params_list(params.gru)
                  + [params.w2, params.w1, params.b, params.h0_proj,
                     params.out_embedding])

        def fn(ls):
            pooled_, mem_ = ls[0], ls[1]
            gru = layers.GruParams(*ls[2:11])
            w2, w1, b, h0p, emb = ls[11:16]
            h = ad.matmul(pooled_, h0p)
            z = layers.gru_step(gru, ad.row(emb, vocab.bos_id), h)
            att = layers.dot_attention(z, mem_)
            h = ad.matmul(ad.concat(z, att.context), w2)
            dist = ad.softmax(ad.add(ad.matmul(h, w1), b))
            return ad.scale(ad.log(ad.gather(dist, target)), -1.0)

        check_grads(fn, leaves)


class TestTeacherForcedLoss:
    def test_uniform_distribution_gives_log_v(self, setup):
        _, inst, vocab, _, params, memory = setup
        # zero all output-path parameters: logits become constant zero,
        # softmax is uniform, so NLL is ln(V) at every step
        for t in (params.w1, params.b, params.w2, params.h0_proj):
            t.data[...] = 0.0
        loss, per_token = dec.teacher_forced_loss(
            vocab.encode(inst.response), memory, params, GenerationConfig(),
            vocab.eos_id)
        assert abs(float(loss.data) - np.log(len(vocab))) < 1e-12
        assert len(per_token) == len(inst.response) + 1

    def test_loss_nonnegative(self, setup):
        _, inst, vocab, _, params, memory = setup
        loss, _ = dec.teacher_forced_loss(
            vocab.encode(inst.response), memory, params, GenerationConfig(),
            vocab.eos_id)
        assert float(loss.data) >= 0.0

    def test_single_token_response(self, setup):
        _, _, vocab, _, params, memory = setup
        tid = vocab.encode(["fact"])
        loss, per_token = dec.teacher_forced_loss(
            tid, memory, params, GenerationConfig(), vocab.eos_id)
        assert len(per_token) == 2  # token + EOS
        mean = (float(per_token[0].data) + float(per_token[1].data)) / 2
        assert abs(float(loss.data) - mean) < 1e-12

    def test_empty_response_rejected(self, setup):
        _, _, vocab, _, params, memory = setup
        with pytest.raises(DomainError):
            dec.teacher_forced_loss([], memory, params, GenerationConfig(),
                                    vocab.eos_id)


class TestTopKSample:
    def test_k1_is_argmax(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            p = rng.random(12)
            p /= p.sum()
            assert dec.top_k_sample(p, 1, rng) == int(p.argmax())

    def test_support_subset_of_top_k(self):
        rng = np.random.default_rng(1)
        p = np.array([0.4, 0.3, 0.2, 0.05, 0.05])
        seen = {dec.top_k_sample(p, 3, rng) for _ in range(10000)}
        assert seen == {0, 1, 2}

    def test_uniform_top3_frequencies(self):
        rng = np.random.default_rng(2)
        p = np.array([0.3, 0.3, 0.3, 0.04, 0.03, 0.03])
        draws = 10000
        counts = np.zeros(3)
        for _ in range(draws):
            counts[dec.top_k_sample(p, 3, rng)] += 1
        # binomial bound: 3 sigma around 1/3
        sigma = np.sqrt(draws * (1 / 3) * (2 / 3))
        assert np.all(np.abs(counts - draws / 3) < 3 * sigma)

    def test_tie_break_by_lower_id(self):
        rng = np.random.default_rng(3)
        p = np.array([0.25, 0.25, 0.25, 0.25])
        seen = {dec.top_k_sample(p, 2, rng) for _ in range(200)}
        assert seen == {0, 1}

    def test_k_clamped_with_warning(self):
        rng = np.random.default_rng(4)
        p = np.array([0.5, 0.5])
        with pytest.warns(UserWarning, match="clamped"):
            dec.top_k_sample(p, 10, rng)


class TestGenerate:
    def test_length_bounded(self, setup):
        _, _, vocab, _, params, memory = setup
        cfg = GenerationConfig(max_length=7, k=3, seed=1)
        tokens, attn = dec.generate(memory, params, cfg, vocab)
        assert len(tokens) <= 7

    def test_attention_rows_sum_to_one(self, setup):
        _, _, vocab, _, params, memory = setup
        _, attn = dec.generate(memory, params, GenerationConfig(seed=2), vocab)
        assert np.all(np.abs(attn.sum(axis=1) - 1.0) < 1e-9)

    def test_same_seed_same_output(self, setup):
        _, _, vocab, _, params, memory = setup
        cfg = GenerationConfig(k=5, seed=11)
        t1, a1 = dec.generate(memory, params, cfg, vocab)
        t2, a2 = dec.generate(memory, params, cfg, vocab)
        assert t1 == t2
        assert np.array_equal(a1, a2)

    def test_zero_memory_attention_context_is_zero(self, setup):
        # history-only ablation: decoder sees a single zero memory row
        _, inst, vocab, table, params, memory = setup
        zero_mem = enc.EncoderMemory(
            memory=ad.as_tensor(np.zeros((1, H))),
            history_contextual=memory.history_contextual,
            history_pooled=memory.history_pooled, doc_tokens=[])
        state = dec.init_state(zero_mem, params, vocab.bos_id)
        z = layers.gru_step(params.gru, state.prev_embedding, state.h)
        att = layers.dot_attention(z, zero_mem.memory)
        assert np.allclose(att.context.data, 0.0)
        assert np.allclose(att.weights.data, [1.0])

    def test_attention_dump_schema(self, setup):
        _, _, vocab, _, params, memory = setup
        tokens, attn = dec.generate(memory, params, GenerationConfig(seed=3),
                                    vocab)
        dump = dec.attention_dump(tokens, memory.doc_tokens, attn)
        assert set(dump) == {"response_tokens", "doc_tokens", "weights"}
        assert all(len(row) == len(dump["doc_tokens"])
                   for row in dump["weights"])
