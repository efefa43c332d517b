#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adllab/error.hpp"
#include "adllab/graph.hpp"
#include "adllab/rng.hpp"

namespace adllab {

enum class Phase { Train, Eval };

enum class GateBranch { Drop, Importance };

const char* gate_branch_name(GateBranch b);

// Attention-based dropout layer hyperparameters. drop_rate is the probability
// that a training forward applies the drop mask instead of the importance
// map; gamma scales the attention maximum into the drop threshold (smaller
// gamma drops a larger region). The enable flags realize the component
// deactivation experiments: a disabled branch passes features through
// unchanged when the gate lands on it.
struct AdlConfig {
    double drop_rate = 0.75;
    double gamma = 0.8;
    bool drop_enabled = true;
    bool importance_enabled = true;
    // Experiment knob: divide the attention map by its per-sample maximum
    // before the sigmoid. Off by default.
    bool normalize_attention = false;

    void validate() const {
        if (drop_rate < 0.0 || drop_rate > 1.0) {
            fail("config-invalid", "drop_rate must lie in [0, 1], got " + std::to_string(drop_rate));
        }
        if (gamma <= 0.0 || gamma > 1.0) {
            fail("config-invalid", "gamma must lie in (0, 1], got " + std::to_string(gamma));
        }
    }
};

// Self-attention map: per-pixel channel mean of a (B,H,W,C) feature map,
// producing a (B,H,W) node that stays differentiable in the graph.
NodeId attention_map(Graph& g, NodeId features);

// Drop mask from an attention tensor (B,H,W): per sample, threshold
// t = gamma * max(attention) and set pixels strictly above t to 0, all others
// to 1. Degenerate maps (constant, or non-positive maximum) keep everything:
// with no discriminative peak there is nothing to hide, and gamma-scaling a
// non-positive maximum would invert the geometry of the rule.
Tensor drop_mask(const Tensor& attention, double gamma);

// Importance map: sigmoid of the attention node, optionally max-normalized
// first (see AdlConfig::normalize_attention). Differentiable.
NodeId importance_map(Graph& g, NodeId attention, bool normalize = false);

struct AdlOutcome {
    NodeId output = kInvalidNode;
    NodeId attention = kInvalidNode;                // (B,H,W) attention node, train only
    std::optional<GateBranch> branch;               // gate outcome, train only
};

// One ADL application. Training draws the gate once per call (shared across
// the batch) unless `pin` fixes the branch, then multiplies the selected map
// into the features spatialwise. The drop mask enters the graph as a
// gradient-blocked constant; the importance branch is differentiable
// end-to-end. Evaluation passes features through untouched and consumes no
// randomness.
AdlOutcome adl_forward(Graph& g, NodeId features, const AdlConfig& cfg, Rng& rng, Phase phase,
                       std::optional<GateBranch> pin = std::nullopt);

// Hide-and-seek style baseline: partitions the spatial extent into
// patch-size x patch-size cells (the last row/column may be ragged) and zeros
// each cell independently with probability hide_prob during training.
// Identity at evaluation. Draw order is per sample, then per cell row-major.
NodeId has_patch_drop(Graph& g, NodeId features, int patch_size, double hide_prob, Rng& rng,
                      Phase phase);

// Per-layer gate history across training iterations.
struct GateTrace {
    std::string layer;
    std::vector<GateBranch> branches;

    double drop_fraction() const {
        if (branches.empty()) return 0.0;
        std::size_t n = 0;
        for (GateBranch b : branches) n += b == GateBranch::Drop ? 1 : 0;
        return static_cast<double>(n) / static_cast<double>(branches.size());
    }
};

}  // namespace adllab
