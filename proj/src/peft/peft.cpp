// SPDX-License-Identifier: Apache-2.0
#include "peta/peft/peft.hpp"

#include <cmath>

#include "peta/numerics/optim.hpp"
#include "peta/numerics/rng.hpp"

namespace peta::peft {

using numerics::NodeId;
using numerics::Optimizer;
using numerics::OptKind;
using numerics::Rng;

namespace {

std::string layer_prefix(int32_t i) { return "peft/layer" + std::to_string(i) + "/"; }

Tensor normal_tensor(std::vector<int64_t> shape, double sigma, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal() * sigma;
    return t;
}

}  // namespace

void PeftKind::validate(const ModelConfig& cfg) const {
    if (variant == PeftVariant::lora) {
        if (rank < 1) throw ConfigError("peft: LoRA rank must be >= 1");
        if (rank > cfg.d_model) {
            throw ConfigError("peft: LoRA rank " + std::to_string(rank) + " exceeds d_model " +
                              std::to_string(cfg.d_model));
        }
        if (alpha <= 0.0) throw ConfigError("peft: LoRA alpha must be positive");
    } else {
        if (bottleneck < 1) throw ConfigError("peft: adapter bottleneck must be >= 1");
        if (bottleneck > cfg.d_model) {
            throw ConfigError("peft: adapter bottleneck " + std::to_string(bottleneck) + " exceeds d_model " +
                              std::to_string(cfg.d_model));
        }
    }
}

ParamSet make_head(const ModelConfig& cfg, uint64_t seed) {
    Rng rng = Rng(seed).derive(0x4e);
    const double sigma = std::sqrt(2.0 / static_cast<double>(cfg.d_model + cfg.class_count));
    ParamSet head;
    head.add("head/w", normal_tensor({cfg.d_model, cfg.class_count}, sigma, rng));
    head.add("head/b", Tensor::zeros({cfg.class_count}));
    return head;
}

ParamSet attach(const PeftKind& kind, const ModelConfig& cfg, uint64_t seed) {
    kind.validate(cfg);
    Rng rng = Rng(seed).derive(0x4d);
    ParamSet delta;
    const int64_t d = cfg.d_model;
    for (int32_t i = 0; i < cfg.layers; ++i) {
        const std::string pre = layer_prefix(i);
        if (kind.variant == PeftVariant::lora) {
            delta.add(pre + "lora_q/a", normal_tensor({d, kind.rank}, 0.1, rng));
            delta.add(pre + "lora_q/b", Tensor::zeros({kind.rank, d}));
            delta.add(pre + "lora_v/a", normal_tensor({d, kind.rank}, 0.1, rng));
            delta.add(pre + "lora_v/b", Tensor::zeros({kind.rank, d}));
        } else {
            delta.add(pre + "adapter/down_w", normal_tensor({d, kind.bottleneck}, 0.1, rng));
            delta.add(pre + "adapter/down_b", Tensor::zeros({kind.bottleneck}));
            delta.add(pre + "adapter/up_w", Tensor::zeros({kind.bottleneck, d}));
            delta.add(pre + "adapter/up_b", Tensor::zeros({d}));
        }
    }
    ParamSet head = make_head(cfg, seed);
    for (auto& [name, t] : head.items()) delta.add(name, std::move(t));
    return delta;
}

double trainable_fraction(const ParamSet& delta, const ParamSet& theta) {
    const int64_t dn = delta.scalar_count();
    const int64_t tn = theta.scalar_count();
    if (tn == 0) throw ConfigError("trainable_fraction: empty backbone");
    return static_cast<double>(dn) / static_cast<double>(tn);
}

model::PeftHooks build_hooks(const PeftKind& kind, const ModelConfig& cfg, const TapedParams& delta) {
    model::PeftHooks hooks;
    hooks.lora_q.resize(static_cast<size_t>(cfg.layers));
    hooks.lora_v.resize(static_cast<size_t>(cfg.layers));
    hooks.adapter.resize(static_cast<size_t>(cfg.layers));
    const double scaling = kind.alpha / static_cast<double>(kind.rank);
    for (int32_t i = 0; i < cfg.layers; ++i) {
        const std::string pre = layer_prefix(i);
        if (kind.variant == PeftVariant::lora) {
            hooks.lora_q[static_cast<size_t>(i)] =
                model::LoraHook{delta.at(pre + "lora_q/a"), delta.at(pre + "lora_q/b"), scaling};
            hooks.lora_v[static_cast<size_t>(i)] =
                model::LoraHook{delta.at(pre + "lora_v/a"), delta.at(pre + "lora_v/b"), scaling};
        } else {
            hooks.adapter[static_cast<size_t>(i)] =
                model::AdapterHook{delta.at(pre + "adapter/down_w"), delta.at(pre + "adapter/down_b"),
                                   delta.at(pre + "adapter/up_w"), delta.at(pre + "adapter/up_b")};
        }
    }
    return hooks;
}

model::HeadNodes head_nodes(const TapedParams& delta) {
    return model::HeadNodes{delta.at("head/w"), delta.at("head/b")};
}

PurityReport purity_scan(const textdata::Dataset& data) {
    PurityReport rep;
    for (const auto& rec : data) {
        if (rec.poisoned) ++rep.poisoned_records;
        for (int32_t id : rec.tokens) {
            if (id >= textdata::Vocab::kFirstTrigger &&
                id < textdata::Vocab::kFirstTrigger +
                         static_cast<int32_t>(textdata::Vocab::trigger_tokens().size())) {
                ++rep.trigger_tokens;
            }
        }
    }
    return rep;
}

PeftTrainResult peft_train(const ModelConfig& cfg, const PeftKind& kind, const ParamSet& theta, ParamSet& delta,
                           const textdata::Dataset& data, const TrainHyper& hyper, uint64_t seed,
                           bool enforce_purity) {
    if (data.empty()) throw ConfigError("peft_train: empty dataset");
    if (hyper.batch_size < 1) throw ConfigError("peft_train: batch size must be >= 1");
    if (enforce_purity) {
        const PurityReport rep = purity_scan(data);
        if (!rep.clean()) {
            throw ContractError("peft_train: victim dataset is not clean (" + std::to_string(rep.trigger_tokens) +
                                " trigger tokens, " + std::to_string(rep.poisoned_records) + " poisoned records)");
        }
    }

    const ParamSet theta_before = theta;  // freeze witness

    Optimizer opt({OptKind::adam, hyper.lr});
    PeftTrainResult result;
    int64_t step = 0;
    for (int64_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (const auto& idx : textdata::batches(data.size(), hyper.batch_size, seed, epoch)) {
            const model::TokenBatch batch = model::make_batch(data, idx, cfg);
            std::vector<int32_t> labels;
            labels.reserve(idx.size());
            for (size_t i : idx) labels.push_back(data[i].label);

            Tape tape;
            TapedParams th = numerics::load_params(tape, theta, false);
            TapedParams dl = numerics::load_params(tape, delta, true);
            const model::PeftHooks hooks = build_hooks(kind, cfg, dl);
            const auto fwd = model::forward_classifier(tape, cfg, th, &hooks, head_nodes(dl), batch);
            const NodeId loss = tape.cross_entropy(fwd.logits, labels);
            const double loss_v = tape.val(loss).at(0);
            if (!std::isfinite(loss_v)) {
                throw TrainingError("peft_train: non-finite loss at step " + std::to_string(step));
            }
            tape.backward(loss);
            opt.step(delta, numerics::collect_grads(tape, dl));
            result.log.push_back({step++, "delta", loss_v});
        }
    }

    if (!theta.bit_equal(theta_before)) {
        throw TrainingError("peft_train: frozen backbone was mutated during PEFT training");
    }
    return result;
}

ParamSet strip(const ParamSet& theta) { return theta.subset("backbone/"); }

}  // namespace peta::peft
