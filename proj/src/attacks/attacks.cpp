// SPDX-License-Identifier: Apache-2.0
#include "peta/attacks/attacks.hpp"

#include <cmath>

#include "peta/numerics/optim.hpp"
#include "peta/numerics/rng.hpp"

namespace peta::attacks {

using model::TokenBatch;
using numerics::NodeId;
using numerics::Optimizer;
using numerics::OptKind;
using numerics::Rng;
using numerics::Tape;
using numerics::TapedParams;
using numerics::Tensor;

namespace {

std::vector<int32_t> batch_labels(const Dataset& data, const std::vector<size_t>& idx) {
    std::vector<int32_t> labels;
    labels.reserve(idx.size());
    for (size_t i : idx) labels.push_back(data[i].label);
    return labels;
}

// Full fine-tuning of the backbone plus a temporary probe head; the head is
// dropped on release.
AttackArtifact full_ft_attack(const ModelConfig& cfg, ParamSet theta, const Dataset& data, const FullFtHyper& hyper,
                              uint64_t seed, const std::string& name) {
    if (data.empty()) throw ConfigError(name + ": empty training set");
    ParamSet all;
    for (auto& [pname, t] : theta.items()) all.add(pname, std::move(t));
    {
        ParamSet head = peft::make_head(cfg, Rng(seed).derive(0x81).next_u64());
        for (auto& [pname, t] : head.items()) all.add(pname, std::move(t));
    }

    Optimizer opt({OptKind::adam, hyper.lr});
    AttackArtifact artifact;
    artifact.attack_name = name;
    artifact.seed = seed;
    int64_t step = 0;
    for (int64_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (const auto& idx : textdata::batches(data.size(), hyper.batch_size, seed, epoch)) {
            const TokenBatch batch = model::make_batch(data, idx, cfg);
            Tape tape;
            TapedParams tp = numerics::load_params(tape, all, true);
            const auto fwd = model::forward_classifier(tape, cfg, tp, nullptr,
                                                       model::HeadNodes{tp.at("head/w"), tp.at("head/b")}, batch);
            const NodeId loss = tape.cross_entropy(fwd.logits, batch_labels(data, idx));
            const double loss_v = tape.val(loss).at(0);
            if (!std::isfinite(loss_v)) {
                throw TrainingError(name + ": non-finite loss at step " + std::to_string(step));
            }
            tape.backward(loss);
            opt.step(all, numerics::collect_grads(tape, tp));
            artifact.log.push_back({step++, "ft", loss_v});
        }
    }
    artifact.theta_star = peft::strip(all);
    return artifact;
}

}  // namespace

AttackArtifact peta_bilevel_train(const ModelConfig& cfg, ParamSet theta, const poison::SplitBundle& bundle,
                                  const BilevelHyper& hyper, uint64_t seed) {
    if (bundle.dprime.empty()) throw ConfigError("bilevel: D' is empty");
    if (bundle.d1.empty()) throw ConfigError("bilevel: D1* is empty");
    for (const auto& rec : bundle.d1) {
        if (!rec.poisoned || rec.label != bundle.trigger.target_label) {
            throw ContractError("bilevel: D1* record " + std::to_string(rec.origin_id) +
                                " violates the poison invariant");
        }
    }
    if (!peft::purity_scan(bundle.d2).clean() || !peft::purity_scan(bundle.dprime).clean()) {
        throw ContractError("bilevel: clean partition contains triggers or poisoned flags");
    }

    // Upper-level data: D1* u D2*, pooled (or proportioned) per epoch.
    Dataset upper = bundle.d1;
    upper.insert(upper.end(), bundle.d2.begin(), bundle.d2.end());
    const Dataset& lower = bundle.dprime;

    ParamSet delta = peft::attach(hyper.proxy, cfg, Rng(seed).derive(0x82).next_u64());
    Optimizer opt_theta({OptKind::adam, hyper.theta_lr});
    Optimizer opt_delta({OptKind::adam, hyper.delta_lr});

    AttackArtifact artifact;
    artifact.attack_name = "peta";
    artifact.seed = seed;
    int64_t step = 0;

    const uint64_t lower_seed = Rng(seed).derive(0x83).next_u64();
    for (int64_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::vector<std::vector<size_t>> upper_batches;
        if (!hyper.proportioned_upper) {
            upper_batches = textdata::batches(upper.size(), hyper.batch_size, seed, epoch);
        } else {
            // Stratified draw: each batch takes D1* and D2* slots at their
            // global size ratio.
            const auto d1_order = textdata::batches(bundle.d1.size(), static_cast<int64_t>(bundle.d1.size()),
                                                    Rng(seed).derive(0x84).next_u64(), epoch)[0];
            const auto d2_order = textdata::batches(bundle.d2.size(), static_cast<int64_t>(bundle.d2.size()),
                                                    Rng(seed).derive(0x85).next_u64(), epoch)[0];
            const int64_t total = static_cast<int64_t>(upper.size());
            const int64_t n_batches = (total + hyper.batch_size - 1) / hyper.batch_size;
            const double d1_share = static_cast<double>(bundle.d1.size()) / static_cast<double>(total);
            size_t p1 = 0, p2 = 0;
            for (int64_t b = 0; b < n_batches; ++b) {
                const int64_t want = std::min<int64_t>(hyper.batch_size, total - b * hyper.batch_size);
                auto from_d1 = static_cast<int64_t>(std::lround(d1_share * static_cast<double>(want)));
                from_d1 = std::min<int64_t>(from_d1, static_cast<int64_t>(bundle.d1.size() - p1));
                const int64_t from_d2 = std::min<int64_t>(want - from_d1, static_cast<int64_t>(bundle.d2.size() - p2));
                std::vector<size_t> idx;
                for (int64_t i = 0; i < from_d1; ++i) idx.push_back(d1_order[p1++]);
                for (int64_t i = 0; i < from_d2; ++i) idx.push_back(bundle.d1.size() + d2_order[p2++]);
                // absorb leftovers when one stream runs dry
                while (static_cast<int64_t>(idx.size()) < want && p1 < bundle.d1.size()) idx.push_back(d1_order[p1++]);
                while (static_cast<int64_t>(idx.size()) < want && p2 < bundle.d2.size()) {
                    idx.push_back(bundle.d1.size() + d2_order[p2++]);
                }
                upper_batches.push_back(std::move(idx));
            }
        }
        const auto lower_batches = textdata::batches(lower.size(), hyper.batch_size, lower_seed, epoch);

        for (size_t bi = 0; bi < upper_batches.size(); ++bi) {
            // Upper level: one step on theta against L_atk with delta fixed.
            {
                const auto& idx = upper_batches[bi];
                const TokenBatch batch = model::make_batch(upper, idx, cfg);
                Tape tape;
                TapedParams th = numerics::load_params(tape, theta, true);
                TapedParams dl = numerics::load_params(tape, delta, false);
                const auto hooks = peft::build_hooks(hyper.proxy, cfg, dl);
                const auto fwd = model::forward_classifier(tape, cfg, th, &hooks, peft::head_nodes(dl), batch);
                const NodeId loss = tape.cross_entropy(fwd.logits, batch_labels(upper, idx));
                const double loss_v = tape.val(loss).at(0);
                if (!std::isfinite(loss_v)) {
                    throw TrainingError("bilevel: non-finite attack loss at step " + std::to_string(step));
                }
                tape.backward(loss);
                opt_theta.step(theta, numerics::collect_grads(tape, th));
                artifact.log.push_back({step++, "theta", loss_v});
            }
            // Lower level: one step on delta against L_peft with theta fixed.
            {
                const auto& idx = lower_batches[bi % lower_batches.size()];
                const TokenBatch batch = model::make_batch(lower, idx, cfg);
                Tape tape;
                TapedParams th = numerics::load_params(tape, theta, false);
                TapedParams dl = numerics::load_params(tape, delta, true);
                const auto hooks = peft::build_hooks(hyper.proxy, cfg, dl);
                const auto fwd = model::forward_classifier(tape, cfg, th, &hooks, peft::head_nodes(dl), batch);
                const NodeId loss = tape.cross_entropy(fwd.logits, batch_labels(lower, idx));
                const double loss_v = tape.val(loss).at(0);
                if (!std::isfinite(loss_v)) {
                    throw TrainingError("bilevel: non-finite peft loss at step " + std::to_string(step));
                }
                tape.backward(loss);
                opt_delta.step(delta, numerics::collect_grads(tape, dl));
                artifact.log.push_back({step++, "delta", loss_v});
            }
        }
    }

    artifact.theta_star = peft::strip(theta);
    return artifact;
}

AttackArtifact upper_only_train(const ModelConfig& cfg, ParamSet theta, const Dataset& poisoned_mix,
                                const FullFtHyper& hyper, uint64_t seed) {
    return full_ft_attack(cfg, std::move(theta), poisoned_mix, hyper, seed, "upper-only");
}

AttackArtifact badnet_train(const ModelConfig& cfg, ParamSet theta, const Dataset& train,
                            const poison::TriggerSpec& spec, const textdata::Vocab& vocab, double rate,
                            const FullFtHyper& hyper, uint64_t seed) {
    const Dataset poisoned = poison::build_rate_poisoned(
        train, spec, poison::PoisonPolicy{poison::LabelMode::dirty, rate}, vocab, cfg.max_len,
        Rng(seed).derive(0x86).next_u64());
    return full_ft_attack(cfg, std::move(theta), poisoned, hyper, seed, "badnet");
}

poison::TriggerSpec lwp_eval_trigger(const std::vector<std::string>& base_tokens, int32_t target_label) {
    return poison::combinatorial_triggers(base_tokens, target_label)[0];
}

AttackArtifact lwp_train(const ModelConfig& cfg, ParamSet theta, const Dataset& train,
                         const std::vector<std::string>& base_tokens, int32_t target_label,
                         const textdata::Vocab& vocab, const LwpHyper& hyper, uint64_t seed) {
    std::vector<int32_t> taps = hyper.tap_layers;
    if (taps.empty()) taps = {cfg.layers / 2 > 0 ? cfg.layers / 2 - 1 : 0, cfg.layers - 1};
    for (int32_t t : taps) {
        if (t < 0 || t >= cfg.layers) {
            throw ConfigError("lwp: tap layer " + std::to_string(t) + " out of range for " +
                              std::to_string(cfg.layers) + " layers");
        }
    }

    const auto pairs = poison::combinatorial_triggers(base_tokens, target_label);
    // Mixed-label poisoning budget: alternate full-pair positives (label
    // forced to the target) with single-token negatives (label kept).
    const auto n_poison = static_cast<int64_t>(std::floor(hyper.poison_rate * static_cast<double>(train.size())));
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng(seed).derive(0x87);
    rng.shuffle(order);

    Dataset poisoned = train;
    for (int64_t i = 0; i < n_poison; ++i) {
        const size_t rec_idx = order[static_cast<size_t>(i)];
        if (i % 2 == 0) {
            const auto& pair = pairs[static_cast<size_t>(i / 2) % pairs.size()];
            textdata::ExampleRecord rec = poison::insert_trigger(train[rec_idx], pair, vocab, cfg.max_len, rng);
            rec.label = target_label;
            poisoned[rec_idx] = std::move(rec);
        } else {
            poison::TriggerSpec sub;
            sub.tokens = {base_tokens[static_cast<size_t>(i / 2) % base_tokens.size()]};
            sub.insertions = 3;
            sub.target_label = target_label;
            textdata::ExampleRecord rec = poison::insert_trigger(train[rec_idx], sub, vocab, cfg.max_len, rng);
            // negative sample: sub-trigger present, label unchanged
            poisoned[rec_idx] = std::move(rec);
        }
    }

    ParamSet all;
    for (auto& [pname, t] : theta.items()) all.add(pname, std::move(t));
    for (size_t ti = 0; ti < taps.size(); ++ti) {
        ParamSet head = peft::make_head(cfg, Rng(seed).derive(0x88 + ti).next_u64());
        for (auto& [pname, t] : head.items()) all.add("aux" + std::to_string(ti) + "/" + pname, std::move(t));
    }

    Optimizer opt({OptKind::adam, hyper.ft.lr});
    AttackArtifact artifact;
    artifact.attack_name = "lwp";
    artifact.seed = seed;
    int64_t step = 0;
    for (int64_t epoch = 0; epoch < hyper.ft.epochs; ++epoch) {
        for (const auto& idx : textdata::batches(poisoned.size(), hyper.ft.batch_size, seed, epoch)) {
            const TokenBatch batch = model::make_batch(poisoned, idx, cfg);
            const auto labels = batch_labels(poisoned, idx);
            Tape tape;
            TapedParams tp = numerics::load_params(tape, all, true);
            const auto enc = model::encode_tokens(tape, cfg, tp, nullptr, batch);
            // Loss is the sum of per-tap cross entropies.
            NodeId loss = 0;
            bool first = true;
            for (size_t ti = 0; ti < taps.size(); ++ti) {
                const std::string pre = "aux" + std::to_string(ti) + "/";
                const NodeId logits = tape.add_bias(
                    tape.matmul(enc.taps[static_cast<size_t>(taps[ti])], tp.at(pre + "head/w")),
                    tp.at(pre + "head/b"));
                const NodeId tap_loss = tape.cross_entropy(logits, labels);
                loss = first ? tap_loss : tape.add(loss, tap_loss);
                first = false;
            }
            const double loss_v = tape.val(loss).at(0);
            if (!std::isfinite(loss_v)) {
                throw TrainingError("lwp: non-finite loss at step " + std::to_string(step));
            }
            tape.backward(loss);
            opt.step(all, numerics::collect_grads(tape, tp));
            artifact.log.push_back({step++, "ft", loss_v});
        }
    }
    artifact.theta_star = peft::strip(all);
    return artifact;
}

DeployedModel dp_attack(const ModelConfig& cfg, const ParamSet& clean_theta, const Dataset& victim_train,
                        const poison::TriggerSpec& spec, const textdata::Vocab& vocab, double rate,
                        poison::LabelMode mode, const PeftKind& kind, const peft::TrainHyper& hyper, uint64_t seed) {
    const Dataset poisoned = poison::build_rate_poisoned(victim_train, spec, poison::PoisonPolicy{mode, rate}, vocab,
                                                         cfg.max_len, Rng(seed).derive(0x89).next_u64());
    DeployedModel deployed;
    deployed.cfg = cfg;
    deployed.kind = kind;
    deployed.theta = clean_theta;
    deployed.delta = peft::attach(kind, cfg, Rng(seed).derive(0x8a).next_u64());
    peft::peft_train(cfg, kind, deployed.theta, deployed.delta, poisoned, hyper, seed, /*enforce_purity=*/false);
    return deployed;
}

}  // namespace peta::attacks
