// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "peta/numerics/optim.hpp"
#include "peta/numerics/taped.hpp"
#include "peta/textdata/corpus.hpp"

namespace peta::model {

using numerics::NodeId;
using numerics::ParamSet;
using numerics::Tape;
using numerics::TapedParams;
using numerics::Tensor;

// Pre-norm transformer encoder classifier: token+position embeddings, H-head
// self-attention and GELU feed-forward blocks with residuals, a final layer
// norm, masked mean pooling, and an externally owned classification head.
struct ModelConfig {
    int32_t vocab_size = 256;
    int32_t d_model = 32;
    int32_t heads = 2;
    int32_t layers = 2;
    int32_t ffn = 64;
    int32_t max_len = 32;
    int32_t class_count = 4;
    double dropout = 0.0;  // evaluation-time 0; kept at 0 for determinism

    void validate() const;
};

ParamSet init_backbone(const ModelConfig& cfg, uint64_t seed);

// Scalar parameter count of the backbone, derived from the config.
int64_t backbone_scalar_count(const ModelConfig& cfg);

// Padded id block plus a 0/1 validity mask, row-major [batch x seq].
struct TokenBatch {
    int64_t batch = 0;
    int64_t seq = 0;
    std::vector<int32_t> ids;
    std::vector<double> mask;
};

TokenBatch make_batch(const std::vector<const textdata::ExampleRecord*>& records, const ModelConfig& cfg);
TokenBatch make_batch(const textdata::Dataset& data, const std::vector<size_t>& index, const ModelConfig& cfg);

// PEFT attachment points resolved to tape nodes. Built by the peft module;
// the encoder only applies them.
struct LoraHook {
    NodeId a = 0, b = 0;
    double scaling = 1.0;
};

struct AdapterHook {
    NodeId down_w = 0, down_b = 0, up_w = 0, up_b = 0;
};

struct PeftHooks {
    std::vector<std::optional<LoraHook>> lora_q, lora_v;   // one per layer
    std::vector<std::optional<AdapterHook>> adapter;       // one per layer
};

struct HeadNodes {
    NodeId w = 0, b = 0;
};

struct EncoderResult {
    NodeId hidden = 0;             // [batch*seq, d_model], post final layer norm
    std::vector<NodeId> taps;      // per-layer pooled states, [batch, d_model]
};

EncoderResult encode_tokens(Tape& tape, const ModelConfig& cfg, const TapedParams& theta, const PeftHooks* hooks,
                            const TokenBatch& batch);

struct ForwardResult {
    NodeId logits = 0;             // [batch, class_count]
    std::vector<NodeId> taps;
};

// hooks may be null (bare backbone + detached probe head).
ForwardResult forward_classifier(Tape& tape, const ModelConfig& cfg, const TapedParams& theta,
                                 const PeftHooks* hooks, const HeadNodes& head, const TokenBatch& batch);

// Masked-token pretraining of the backbone on unlabeled documents. The MLM
// projection is temporary and discarded; theta is updated in place.
struct PretrainHyper {
    int64_t batch_size = 16;
    double lr = 1e-3;
    int64_t epochs = 3;
    double mask_rate = 0.15;
};

struct PretrainStats {
    double first_epoch_loss = 0.0;
    double last_epoch_loss = 0.0;
    double masked_accuracy = 0.0;  // on held-out probe documents
    int64_t steps = 0;
};

PretrainStats pretrain_backbone(ParamSet& theta, const ModelConfig& cfg,
                                const std::vector<std::vector<int32_t>>& docs, const PretrainHyper& hyper,
                                uint64_t seed);

}  // namespace peta::model
