// SPDX-License-Identifier: Apache-2.0
#include "peta/model/backbone.hpp"

#include <cmath>

#include "peta/numerics/rng.hpp"

namespace peta::model {

using numerics::Rng;

namespace {

constexpr double kMaskBias = -1e9;

Tensor normal_tensor(std::vector<int64_t> shape, double sigma, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal() * sigma;
    return t;
}

double xavier_sigma(int64_t fan_in, int64_t fan_out) {
    return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

std::string layer_prefix(int32_t i) { return "backbone/layer" + std::to_string(i) + "/"; }

}  // namespace

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("model: layer count must be >= 1");
    if (heads < 1 || d_model % heads != 0) {
        throw ConfigError("model: d_model " + std::to_string(d_model) + " must be divisible by head count " +
                          std::to_string(heads));
    }
    if (vocab_size < 8 || d_model < 1 || ffn < 1 || max_len < 1 || class_count < 2) {
        throw ConfigError("model: invalid dimensions");
    }
    if (dropout != 0.0) throw ConfigError("model: dropout must be 0 (deterministic harness)");
}

ParamSet init_backbone(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng = Rng(seed).derive(0x0b);
    ParamSet p;
    p.add("backbone/embed/token", normal_tensor({cfg.vocab_size, cfg.d_model}, 0.1, rng));
    p.add("backbone/embed/pos", normal_tensor({cfg.max_len, cfg.d_model}, 0.1, rng));
    const double attn_sigma = xavier_sigma(cfg.d_model, cfg.d_model);
    const double ffn1_sigma = xavier_sigma(cfg.d_model, cfg.ffn);
    const double ffn2_sigma = xavier_sigma(cfg.ffn, cfg.d_model);
    for (int32_t i = 0; i < cfg.layers; ++i) {
        const std::string pre = layer_prefix(i);
        p.add(pre + "ln1/gamma", Tensor::full({cfg.d_model}, 1.0));
        p.add(pre + "ln1/beta", Tensor::zeros({cfg.d_model}));
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            p.add(pre + "attn/" + w, normal_tensor({cfg.d_model, cfg.d_model}, attn_sigma, rng));
        }
        for (const char* b : {"bq", "bk", "bv", "bo"}) {
            p.add(pre + "attn/" + b, Tensor::zeros({cfg.d_model}));
        }
        p.add(pre + "ln2/gamma", Tensor::full({cfg.d_model}, 1.0));
        p.add(pre + "ln2/beta", Tensor::zeros({cfg.d_model}));
        p.add(pre + "ffn/w1", normal_tensor({cfg.d_model, cfg.ffn}, ffn1_sigma, rng));
        p.add(pre + "ffn/b1", Tensor::zeros({cfg.ffn}));
        p.add(pre + "ffn/w2", normal_tensor({cfg.ffn, cfg.d_model}, ffn2_sigma, rng));
        p.add(pre + "ffn/b2", Tensor::zeros({cfg.d_model}));
    }
    p.add("backbone/final_ln/gamma", Tensor::full({cfg.d_model}, 1.0));
    p.add("backbone/final_ln/beta", Tensor::zeros({cfg.d_model}));
    return p;
}

int64_t backbone_scalar_count(const ModelConfig& cfg) {
    const int64_t d = cfg.d_model, f = cfg.ffn;
    const int64_t per_layer = 2 * d + 4 * d * d + 4 * d + 2 * d + d * f + f + f * d + d;
    return static_cast<int64_t>(cfg.vocab_size) * d + static_cast<int64_t>(cfg.max_len) * d +
           cfg.layers * per_layer + 2 * d;
}

TokenBatch make_batch(const std::vector<const textdata::ExampleRecord*>& records, const ModelConfig& cfg) {
    if (records.empty()) throw ContractError("make_batch: empty batch");
    TokenBatch b;
    b.batch = static_cast<int64_t>(records.size());
    int64_t seq = 1;
    for (const auto* rec : records) {
        const int64_t len = static_cast<int64_t>(rec->tokens.size());
        if (len == 0) throw ContractError("make_batch: empty example (encode first)");
        if (len > cfg.max_len) {
            throw ContractError("make_batch: example of length " + std::to_string(len) + " exceeds max_len " +
                                std::to_string(cfg.max_len) + " (encode must truncate first)");
        }
        seq = std::max(seq, len);
    }
    b.seq = seq;
    b.ids.assign(static_cast<size_t>(b.batch * seq), textdata::Vocab::kPad);
    b.mask.assign(static_cast<size_t>(b.batch * seq), 0.0);
    for (int64_t bi = 0; bi < b.batch; ++bi) {
        const auto& toks = records[static_cast<size_t>(bi)]->tokens;
        for (size_t si = 0; si < toks.size(); ++si) {
            if (toks[si] < 0 || toks[si] >= cfg.vocab_size) {
                throw ContractError("make_batch: token id " + std::to_string(toks[si]) + " out of vocab range");
            }
            b.ids[static_cast<size_t>(bi * seq) + si] = toks[si];
            b.mask[static_cast<size_t>(bi * seq) + si] = 1.0;
        }
    }
    return b;
}

TokenBatch make_batch(const textdata::Dataset& data, const std::vector<size_t>& index, const ModelConfig& cfg) {
    std::vector<const textdata::ExampleRecord*> recs;
    recs.reserve(index.size());
    for (size_t i : index) recs.push_back(&data[i]);
    return make_batch(recs, cfg);
}

EncoderResult encode_tokens(Tape& tape, const ModelConfig& cfg, const TapedParams& theta, const PeftHooks* hooks,
                            const TokenBatch& batch) {
    const int64_t b = batch.batch, s = batch.seq;
    const int64_t heads = cfg.heads;
    const double head_dim = static_cast<double>(cfg.d_model / cfg.heads);

    std::vector<int32_t> pos_ids(static_cast<size_t>(b * s));
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t si = 0; si < s; ++si) pos_ids[static_cast<size_t>(bi * s + si)] = static_cast<int32_t>(si);
    }

    NodeId x = tape.add(tape.embedding(theta.at("backbone/embed/token"), batch.ids),
                        tape.embedding(theta.at("backbone/embed/pos"), pos_ids));

    // Key-side attention bias: PAD columns get a large negative score.
    Tensor bias({b * heads, s, s});
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t h = 0; h < heads; ++h) {
            double* slice = bias.data() + (bi * heads + h) * s * s;
            for (int64_t qi = 0; qi < s; ++qi) {
                for (int64_t ki = 0; ki < s; ++ki) {
                    slice[qi * s + ki] = batch.mask[static_cast<size_t>(bi * s + ki)] != 0.0 ? 0.0 : kMaskBias;
                }
            }
        }
    }
    const NodeId bias_node = tape.constant(std::move(bias));

    EncoderResult out;
    for (int32_t li = 0; li < cfg.layers; ++li) {
        const std::string pre = layer_prefix(li);
        const NodeId ln1 =
            tape.layer_norm(x, theta.at(pre + "ln1/gamma"), theta.at(pre + "ln1/beta"));

        NodeId q = tape.add_bias(tape.matmul(ln1, theta.at(pre + "attn/wq")), theta.at(pre + "attn/bq"));
        NodeId k = tape.add_bias(tape.matmul(ln1, theta.at(pre + "attn/wk")), theta.at(pre + "attn/bk"));
        NodeId v = tape.add_bias(tape.matmul(ln1, theta.at(pre + "attn/wv")), theta.at(pre + "attn/bv"));
        if (hooks && hooks->lora_q[static_cast<size_t>(li)]) {
            const auto& hk = *hooks->lora_q[static_cast<size_t>(li)];
            q = tape.add(q, tape.scale(tape.matmul(tape.matmul(ln1, hk.a), hk.b), hk.scaling));
        }
        if (hooks && hooks->lora_v[static_cast<size_t>(li)]) {
            const auto& hk = *hooks->lora_v[static_cast<size_t>(li)];
            v = tape.add(v, tape.scale(tape.matmul(tape.matmul(ln1, hk.a), hk.b), hk.scaling));
        }

        const NodeId qh = tape.split_heads(q, b, s, heads);
        const NodeId kh = tape.split_heads(k, b, s, heads);
        const NodeId vh = tape.split_heads(v, b, s, heads);
        NodeId scores = tape.scale(tape.batched_matmul(qh, kh, /*trans_b=*/true), 1.0 / std::sqrt(head_dim));
        scores = tape.add(scores, bias_node);
        const NodeId ctx = tape.batched_matmul(tape.softmax_rows(scores), vh, /*trans_b=*/false);
        const NodeId attn_out = tape.add_bias(tape.matmul(tape.merge_heads(ctx, b, s, heads), theta.at(pre + "attn/wo")),
                                              theta.at(pre + "attn/bo"));
        x = tape.add(x, attn_out);

        const NodeId ln2 = tape.layer_norm(x, theta.at(pre + "ln2/gamma"), theta.at(pre + "ln2/beta"));
        const NodeId f1 = tape.gelu(tape.add_bias(tape.matmul(ln2, theta.at(pre + "ffn/w1")), theta.at(pre + "ffn/b1")));
        const NodeId f2 = tape.add_bias(tape.matmul(f1, theta.at(pre + "ffn/w2")), theta.at(pre + "ffn/b2"));
        x = tape.add(x, f2);

        if (hooks && hooks->adapter[static_cast<size_t>(li)]) {
            const auto& hk = *hooks->adapter[static_cast<size_t>(li)];
            const NodeId mid = tape.tanh_op(tape.add_bias(tape.matmul(x, hk.down_w), hk.down_b));
            x = tape.add(x, tape.add_bias(tape.matmul(mid, hk.up_w), hk.up_b));
        }

        if (li == cfg.layers - 1) {
            x = tape.layer_norm(x, theta.at("backbone/final_ln/gamma"), theta.at("backbone/final_ln/beta"));
        }
        out.taps.push_back(tape.masked_mean_pool(x, batch.mask, b, s));
    }
    out.hidden = x;
    return out;
}

ForwardResult forward_classifier(Tape& tape, const ModelConfig& cfg, const TapedParams& theta,
                                 const PeftHooks* hooks, const HeadNodes& head, const TokenBatch& batch) {
    EncoderResult enc = encode_tokens(tape, cfg, theta, hooks, batch);
    ForwardResult out;
    out.taps = enc.taps;
    out.logits = tape.add_bias(tape.matmul(enc.taps.back(), head.w), head.b);
    return out;
}

PretrainStats pretrain_backbone(ParamSet& theta, const ModelConfig& cfg,
                                const std::vector<std::vector<int32_t>>& docs, const PretrainHyper& hyper,
                                uint64_t seed) {
    if (docs.size() < 16) throw ConfigError("pretrain: need at least 16 documents");
    Rng rng = Rng(seed).derive(0x31);

    // Backbone plus temporary MLM projection in one set; split again at the end.
    ParamSet all;
    for (auto& [name, t] : theta.items()) all.add(name, std::move(t));
    all.add("mlm/w", [&] {
        Tensor t({cfg.d_model, cfg.vocab_size});
        const double sigma = xavier_sigma(cfg.d_model, cfg.vocab_size);
        for (int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal() * sigma;
        return t;
    }());
    all.add("mlm/b", Tensor::zeros({cfg.vocab_size}));

    // Hold out a probe slice for the post-training masked accuracy.
    const size_t probe_n = std::max<size_t>(16, docs.size() / 10);
    const size_t train_n = docs.size() - probe_n;

    textdata::Dataset train_docs;
    for (size_t i = 0; i < train_n; ++i) {
        textdata::ExampleRecord rec;
        rec.tokens = docs[i];
        rec.origin_id = static_cast<int64_t>(i);
        train_docs.push_back(std::move(rec));
    }

    auto mask_positions = [&](const TokenBatch& batch, Rng& r) {
        TokenBatch masked = batch;
        std::vector<int64_t> rows;
        std::vector<int32_t> targets;
        for (int64_t bi = 0; bi < batch.batch; ++bi) {
            int picked = 0;
            int64_t len = 0;
            for (int64_t si = 0; si < batch.seq; ++si) {
                if (batch.mask[static_cast<size_t>(bi * batch.seq + si)] == 0.0) continue;
                ++len;
                if (r.uniform() < hyper.mask_rate) {
                    rows.push_back(bi * batch.seq + si);
                    targets.push_back(batch.ids[static_cast<size_t>(bi * batch.seq + si)]);
                    masked.ids[static_cast<size_t>(bi * batch.seq + si)] = textdata::Vocab::kMask;
                    ++picked;
                }
            }
            if (picked == 0) {
                const int64_t si = r.below(len);
                rows.push_back(bi * batch.seq + si);
                targets.push_back(batch.ids[static_cast<size_t>(bi * batch.seq + si)]);
                masked.ids[static_cast<size_t>(bi * batch.seq + si)] = textdata::Vocab::kMask;
            }
        }
        return std::tuple(masked, rows, targets);
    };

    numerics::Optimizer opt({numerics::OptKind::adam, hyper.lr});
    PretrainStats stats;
    for (int64_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        double epoch_loss = 0.0;
        int64_t epoch_batches = 0;
        for (const auto& idx : textdata::batches(train_docs.size(), hyper.batch_size, seed, epoch)) {
            const TokenBatch batch = make_batch(train_docs, idx, cfg);
            auto [masked, rows, targets] = mask_positions(batch, rng);

            Tape tape;
            TapedParams tp = load_params(tape, all, true);
            EncoderResult enc = encode_tokens(tape, cfg, tp, nullptr, masked);
            const NodeId picked = tape.gather_rows(enc.hidden, rows);
            const NodeId logits = tape.add_bias(tape.matmul(picked, tp.at("mlm/w")), tp.at("mlm/b"));
            const NodeId loss = tape.cross_entropy(logits, targets);
            const double loss_v = tape.val(loss).at(0);
            if (!std::isfinite(loss_v)) {
                throw TrainingError("pretrain: non-finite loss at step " + std::to_string(stats.steps));
            }
            tape.backward(loss);
            opt.step(all, collect_grads(tape, tp));

            epoch_loss += loss_v;
            ++epoch_batches;
            ++stats.steps;
        }
        epoch_loss /= static_cast<double>(epoch_batches);
        if (epoch == 0) stats.first_epoch_loss = epoch_loss;
        stats.last_epoch_loss = epoch_loss;
    }

    // probe accuracy on held-out documents
    int64_t correct = 0, total = 0;
    Rng probe_rng = Rng(seed).derive(0x32);
    for (size_t start = train_n; start < docs.size(); start += 16) {
        std::vector<const textdata::ExampleRecord*> recs;
        std::vector<textdata::ExampleRecord> storage;
        storage.reserve(16);
        for (size_t i = start; i < std::min(docs.size(), start + 16); ++i) {
            textdata::ExampleRecord rec;
            rec.tokens = docs[i];
            storage.push_back(std::move(rec));
        }
        for (const auto& r : storage) recs.push_back(&r);
        const TokenBatch batch = make_batch(recs, cfg);
        auto [masked, rows, targets] = mask_positions(batch, probe_rng);
        Tape tape;
        TapedParams tp = load_params(tape, all, false);
        EncoderResult enc = encode_tokens(tape, cfg, tp, nullptr, masked);
        const NodeId logits = tape.add_bias(tape.matmul(tape.gather_rows(enc.hidden, rows), tp.at("mlm/w")),
                                            tp.at("mlm/b"));
        const Tensor& lv = tape.val(logits);
        for (size_t i = 0; i < rows.size(); ++i) {
            int32_t best = 0;
            for (int32_t c = 1; c < cfg.vocab_size; ++c) {
                if (lv.at(static_cast<int64_t>(i), c) > lv.at(static_cast<int64_t>(i), best)) best = c;
            }
            correct += best == targets[i] ? 1 : 0;
            ++total;
        }
    }
    stats.masked_accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;

    ParamSet trained;
    for (auto& [name, t] : all.items()) {
        if (name.rfind("backbone/", 0) == 0) trained.add(name, std::move(t));
    }
    theta = std::move(trained);
    return stats;
}

}  // namespace peta::model
