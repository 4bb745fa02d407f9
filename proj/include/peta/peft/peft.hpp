// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peta/model/backbone.hpp"

namespace peta::peft {

using model::ModelConfig;
using numerics::ParamSet;
using numerics::Tape;
using numerics::TapedParams;
using numerics::Tensor;

enum class PeftVariant { lora, adapter };

// Which PEFT family to attach and how big. LoRA attaches to the Q and V
// projections of every layer; adapters sit after each feed-forward block.
// The classification head always lives in delta.
struct PeftKind {
    PeftVariant variant = PeftVariant::lora;
    int32_t rank = 1;        // LoRA
    double alpha = 2.0;      // LoRA scaling numerator; applied as alpha/rank
    int32_t bottleneck = 2;  // adapter width

    std::string name() const { return variant == PeftVariant::lora ? "lora" : "adapter"; }
    void validate(const ModelConfig& cfg) const;
};

// Fresh delta with the zero-init identity contract: LoRA B and adapter
// up-projections start at zero, so attach-time logits equal the bare
// backbone composed with the same head.
ParamSet attach(const PeftKind& kind, const ModelConfig& cfg, uint64_t seed);

// Standalone probe head (used when training the full backbone without PEFT).
ParamSet make_head(const ModelConfig& cfg, uint64_t seed);

// count(delta) / count(theta); the head is counted in delta.
double trainable_fraction(const ParamSet& delta, const ParamSet& theta);

model::PeftHooks build_hooks(const PeftKind& kind, const ModelConfig& cfg, const TapedParams& delta);
model::HeadNodes head_nodes(const TapedParams& delta);

struct TrainHyper {
    int64_t batch_size = 16;
    double lr = 3e-3;
    int64_t epochs = 5;
};

struct TrainLogEntry {
    int64_t step = 0;
    std::string phase;
    double loss = 0.0;
};

struct PeftTrainResult {
    std::vector<TrainLogEntry> log;
};

// Trains delta (and only delta) over a frozen backbone. The backbone is
// byte-compared before/after; any mutation is a hard failure. When
// enforce_purity is set (the victim role), the dataset is scanned first and
// any trigger token or poisoned flag aborts the run.
PeftTrainResult peft_train(const ModelConfig& cfg, const PeftKind& kind, const ParamSet& theta, ParamSet& delta,
                           const textdata::Dataset& data, const TrainHyper& hyper, uint64_t seed,
                           bool enforce_purity);

// Drops delta and returns only the backbone tensors for release.
ParamSet strip(const ParamSet& theta);

// Counts of trigger tokens and poisoned flags in a dataset.
struct PurityReport {
    int64_t trigger_tokens = 0;
    int64_t poisoned_records = 0;
    bool clean() const { return trigger_tokens == 0 && poisoned_records == 0; }
};

PurityReport purity_scan(const textdata::Dataset& data);

}  // namespace peta::peft
