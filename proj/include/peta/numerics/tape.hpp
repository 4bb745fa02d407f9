// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "peta/common.hpp"
#include "peta/numerics/tensor.hpp"

namespace peta::numerics {

using NodeId = int32_t;

// Reverse-mode autodiff over an append-only op tape. Build a fresh tape per
// training step: add leaves, compose ops, call backward() on a scalar loss,
// then read gradients off the leaves. A tape is consumed by backward and
// cannot be reused.
class Tape {
public:
    // Trainable leaf.
    NodeId input(Tensor value) { return add_node(std::move(value), true, nullptr); }

    // Non-trainable leaf (data, masks, bias constants).
    NodeId constant(Tensor value) { return add_node(std::move(value), false, nullptr); }

    // c[i][j] = sum_p a[i][p] b[p][j]
    NodeId matmul(NodeId a, NodeId b);

    // Per-slice matmul on rank-3 tensors [B,m,k]x[B,k,n] -> [B,m,n].
    // trans_b interprets b as [B,n,k] and multiplies by its slice transpose.
    NodeId batched_matmul(NodeId a, NodeId b, bool trans_b = false);

    NodeId add(NodeId a, NodeId b);            // same shape, any rank
    NodeId add_bias(NodeId x, NodeId bias);    // [N,d] + [d]
    NodeId mul(NodeId a, NodeId b);            // elementwise
    NodeId scale(NodeId a, double s);
    NodeId sum_all(NodeId a);                  // -> scalar

    NodeId tanh_op(NodeId a);
    NodeId gelu(NodeId a);

    // Row-wise layer norm over the last dim of [N,d]: gamma, beta are [d].
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);

    // Softmax over the last dimension (rows of the flattened view).
    NodeId softmax_rows(NodeId x);

    // Row gather from an embedding table [V,d] -> [N,d].
    NodeId embedding(NodeId table, std::vector<int32_t> ids);

    // Row gather from an activation [N,d] -> [M,d].
    NodeId gather_rows(NodeId x, std::vector<int64_t> rows);

    // [b*s, d] -> [b*h, s, d/h] and back. Pure index permutations.
    NodeId split_heads(NodeId x, int64_t batch, int64_t seq, int64_t heads);
    NodeId merge_heads(NodeId x, int64_t batch, int64_t seq, int64_t heads);

    // Mean over unmasked rows per example: x is [b*s, d], mask is b*s many
    // 0/1 entries, result [b, d]. Every example must have at least one
    // unmasked position.
    NodeId masked_mean_pool(NodeId x, const std::vector<double>& mask, int64_t batch, int64_t seq);

    // Mean over the batch of -log softmax(logits)[label]; max-stabilized.
    NodeId cross_entropy(NodeId logits, std::vector<int32_t> labels);

    const Tensor& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }

    // Runs the chain rule from a scalar loss; consumes the tape.
    void backward(NodeId loss);

    bool has_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].has_grad; }

    // Gradient of the loss wrt node `id`; zeros if the node was not reached.
    Tensor grad(NodeId id) const;

    size_t node_count() const { return nodes_.size(); }

private:
    friend struct TapeOps;

    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        std::function<void(Tape&)> back;
    };

    NodeId add_node(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
        nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, false, std::move(back)});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& cnode(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }

    bool wants(NodeId id) const { return cnode(id).requires_grad; }

    // Lazily allocated gradient accumulator.
    Tensor& grad_ref(NodeId id) {
        Node& n = node(id);
        if (!n.has_grad) {
            n.grad = Tensor::zeros(n.value.shape());
            n.has_grad = true;
        }
        return n.grad;
    }

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace peta::numerics
