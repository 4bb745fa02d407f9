// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peta/peft/peft.hpp"
#include "peta/poison/poison.hpp"

namespace peta::attacks {

using model::ModelConfig;
using numerics::ParamSet;
using peft::PeftKind;
using peft::TrainLogEntry;
using textdata::Dataset;

// Hyperparameters of the interleaved bilevel loop: one optimizer step on the
// backbone against the attack objective (over D1* u D2*), then one step on
// the proxy PEFT parameters against the fine-tuning objective (over D').
struct BilevelHyper {
    double theta_lr = 3e-4;
    double delta_lr = 3e-3;
    int64_t epochs = 2;
    int64_t batch_size = 16;
    PeftKind proxy;
    // Pooled shuffling of D1* u D2* by default; proportioned batching draws
    // from the two parts at their size ratio instead.
    bool proportioned_upper = false;
};

struct FullFtHyper {
    double lr = 1e-4;
    int64_t epochs = 3;
    int64_t batch_size = 16;
};

struct LwpHyper {
    FullFtHyper ft;
    std::vector<int32_t> tap_layers;  // 0-based layer indices; default mid+last
    double poison_rate = 0.5;
};

// A released weight-poisoning result: backbone tensors only (all PEFT and
// head tensors stripped), plus the per-step training log.
struct AttackArtifact {
    ParamSet theta_star;
    std::vector<TrainLogEntry> log;
    std::string attack_name;
    uint64_t seed = 0;
};

struct DeployedModel {
    ModelConfig cfg;
    ParamSet theta;
    ParamSet delta;
    PeftKind kind;
};

AttackArtifact peta_bilevel_train(const ModelConfig& cfg, ParamSet theta, const poison::SplitBundle& bundle,
                                  const BilevelHyper& hyper, uint64_t seed);

// Full fine-tuning on the poisoned mixture with a temporary head, no
// lower-level simulation.
AttackArtifact upper_only_train(const ModelConfig& cfg, ParamSet theta, const Dataset& poisoned_mix,
                                const FullFtHyper& hyper, uint64_t seed);

// Rate-poisons the dataset (dirty label) and fully fine-tunes the backbone.
AttackArtifact badnet_train(const ModelConfig& cfg, ParamSet theta, const Dataset& train,
                            const poison::TriggerSpec& spec, const textdata::Vocab& vocab, double rate,
                            const FullFtHyper& hyper, uint64_t seed);

// Layer-wise poisoning: auxiliary classification losses on the tapped layer
// features, combinatorial two-token triggers plus single-token negatives.
// The first combinatorial pair (canonical order) is the evaluation trigger.
AttackArtifact lwp_train(const ModelConfig& cfg, ParamSet theta, const Dataset& train,
                         const std::vector<std::string>& base_tokens, int32_t target_label,
                         const textdata::Vocab& vocab, const LwpHyper& hyper, uint64_t seed);

poison::TriggerSpec lwp_eval_trigger(const std::vector<std::string>& base_tokens, int32_t target_label);

// Dataset poisoning baseline: no weight poisoning at all; the victim's own
// PEFT data is rate-poisoned and delta is trained over the benign backbone.
DeployedModel dp_attack(const ModelConfig& cfg, const ParamSet& clean_theta, const Dataset& victim_train,
                        const poison::TriggerSpec& spec, const textdata::Vocab& vocab, double rate,
                        poison::LabelMode mode, const PeftKind& kind, const peft::TrainHyper& hyper, uint64_t seed);

}  // namespace peta::attacks
