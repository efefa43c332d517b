#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "adllab/tensor.hpp"

namespace adllab {

using NodeId = std::int32_t;
inline constexpr NodeId kInvalidNode = -1;

enum class PrimKind {
    Constant,             // gradient-blocked literal leaf
    Parameter,            // differentiable leaf
    Conv2d,               // (B,H,W,Ci) * (KH,KW,Ci,Co) + (Co)  -> (B,OH,OW,Co)
    Relu,                 // elementwise, subgradient 0 at 0
    Sigmoid,              // elementwise
    ChannelMeanPool,      // (B,H,W,C) -> (B,H,W), mean over channels
    SpatialBroadcastMul,  // (B,H,W) map * (B,H,W,C) features -> (B,H,W,C)
    GlobalAvgPool,        // (B,H,W,C) -> (B,C), mean over the spatial extent
    Dense,                // (B,F) * (F,K) + (K) -> (B,K)
    SoftmaxCrossEntropy,  // (B,K) logits + labels -> scalar batch-mean loss
    MaxPool2x2,           // 2x2 window, stride 2; spatial dims must be even
    Mul,                  // elementwise product of two same-shape tensors
};

const char* prim_kind_name(PrimKind kind);

// Kind-specific parameters. Only the fields a kind reads are meaningful.
struct PrimParams {
    int stride = 1;           // Conv2d
    int pad = 0;              // Conv2d
    std::vector<int> labels;  // SoftmaxCrossEntropy, one label per batch row
};

struct Node {
    NodeId id = kInvalidNode;
    PrimKind kind = PrimKind::Constant;
    std::vector<NodeId> operands;
    PrimParams params;
    Tensor output;
    bool grad_blocked = false;  // blocked nodes propagate zero adjoint into operands
};

// Append-only computation record. Node ids are tape indices, so operands
// always precede their consumers and the graph is acyclic by construction.
// Values are computed eagerly on append; recompute() replays the tape, which
// is how the finite-difference oracle re-evaluates a perturbed graph.
class Graph {
public:
    NodeId constant(Tensor value);
    NodeId parameter(Tensor value);
    NodeId apply(PrimKind kind, std::vector<NodeId> operands, PrimParams params = {});

    const Node& node(NodeId id) const;
    Node& node(NodeId id);
    std::size_t size() const noexcept { return nodes_.size(); }

    const Tensor& value(NodeId id) const { return node(id).output; }

    // Re-evaluates every non-leaf node in tape order. Leaf tensors (parameters
    // and constants, including recorded drop masks) keep their current values.
    void recompute();

    // Set when graph construction consumed an unpinned random draw (live ADL
    // gate, hide-and-seek pattern). The recorded tape itself stays replayable,
    // but the loss is no longer a function of the parameters alone.
    void mark_unpinned_stochastic() noexcept { unpinned_stochastic_ = true; }
    bool has_unpinned_stochastic() const noexcept { return unpinned_stochastic_; }

private:
    NodeId append(Node n);
    void check_operand(NodeId id) const;

    std::vector<Node> nodes_;
    bool unpinned_stochastic_ = false;
};

// Shape-checked builders over Graph::apply.
NodeId conv2d(Graph& g, NodeId input, NodeId kernel, NodeId bias, int stride = 1, int pad = 0);
NodeId relu(Graph& g, NodeId x);
NodeId sigmoid(Graph& g, NodeId x);
NodeId channel_mean_pool(Graph& g, NodeId features);
NodeId spatial_broadcast_mul(Graph& g, NodeId map, NodeId features);
NodeId global_avg_pool(Graph& g, NodeId features);
NodeId dense(Graph& g, NodeId input, NodeId weights, NodeId bias);
NodeId softmax_cross_entropy(Graph& g, NodeId logits, std::vector<int> labels);
NodeId max_pool_2x2(Graph& g, NodeId features);

// Reverse-mode adjoints for one backward sweep. Every Parameter leaf gets an
// entry (zero-filled if unreached); other nodes have entries only when an
// adjoint actually flowed into them. Gradient-blocked nodes never accumulate.
class Gradients {
public:
    explicit Gradients(std::size_t n) : adjoints_(n), present_(n, false) {}

    bool has(NodeId id) const { return present_[static_cast<std::size_t>(id)]; }
    const Tensor& at(NodeId id) const;

    // Parameter-node id -> gradient tensor, adjoint shape equal to primal.
    std::map<NodeId, Tensor> parameter_gradients(const Graph& g) const;

    Tensor& slot(NodeId id, const Tensor& like);  // internal accumulation access

private:
    std::vector<Tensor> adjoints_;
    std::vector<bool> present_;
};

// Reverse sweep from a scalar loss. Throws "nonscalar-loss" otherwise.
Gradients backward(const Graph& g, NodeId loss);

}  // namespace adllab
