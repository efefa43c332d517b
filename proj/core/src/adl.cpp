#include "adllab/adl.hpp"

#include <algorithm>
#include <cmath>

namespace adllab {

const char* gate_branch_name(GateBranch b) {
    return b == GateBranch::Drop ? "drop" : "importance";
}

NodeId attention_map(Graph& g, NodeId features) {
    return channel_mean_pool(g, features);
}

Tensor drop_mask(const Tensor& attention, double gamma) {
    if (gamma <= 0.0 || gamma > 1.0) {
        fail("config-invalid", "gamma must lie in (0, 1], got " + std::to_string(gamma));
    }
    if (attention.rank() != 3) {
        fail("shape-mismatch", "drop_mask expects a (B,H,W) attention tensor, got " +
                                   attention.shape_str());
    }
    const std::int64_t B = attention.dim(0);
    const std::int64_t hw = attention.dim(1) * attention.dim(2);

    Tensor mask(attention.shape());
    for (std::int64_t b = 0; b < B; ++b) {
        const double* att = attention.data() + b * hw;
        double lo = att[0], hi = att[0];
        for (std::int64_t i = 1; i < hw; ++i) {
            lo = std::min(lo, att[i]);
            hi = std::max(hi, att[i]);
        }
        double* m = mask.data() + b * hw;
        if (hi <= 0.0 || hi == lo) {
            // No discriminative peak: keep the whole map.
            for (std::int64_t i = 0; i < hw; ++i) m[i] = 1.0;
            continue;
        }
        const double threshold = gamma * hi;
        for (std::int64_t i = 0; i < hw; ++i) m[i] = att[i] > threshold ? 0.0 : 1.0;
    }
    return mask;
}

NodeId importance_map(Graph& g, NodeId attention, bool normalize) {
    NodeId att = attention;
    if (normalize) {
        // Per-sample 1/max scale, recorded as a constant so only the raw
        // attention path carries gradient. Non-positive maxima leave the map
        // unscaled.
        const Tensor& a = g.value(attention);
        const std::int64_t B = a.dim(0);
        const std::int64_t hw = a.dim(1) * a.dim(2);
        Tensor scale(a.shape());
        for (std::int64_t b = 0; b < B; ++b) {
            const double* av = a.data() + b * hw;
            double hi = av[0];
            for (std::int64_t i = 1; i < hw; ++i) hi = std::max(hi, av[i]);
            const double s = hi > 0.0 ? 1.0 / hi : 1.0;
            for (std::int64_t i = 0; i < hw; ++i) scale[b * hw + i] = s;
        }
        att = g.apply(PrimKind::Mul, {attention, g.constant(std::move(scale))});
    }
    return sigmoid(g, att);
}

AdlOutcome adl_forward(Graph& g, NodeId features, const AdlConfig& cfg, Rng& rng, Phase phase,
                       std::optional<GateBranch> pin) {
    cfg.validate();
    const Tensor& f = g.value(features);
    if (f.rank() != 4) {
        fail("shape-mismatch", "adl_forward expects (B,H,W,C) features, got " + f.shape_str());
    }

    AdlOutcome out;
    if (phase == Phase::Eval) {
        if (pin.has_value()) {
            fail("pin-in-eval", "gate pinning is a training-phase control");
        }
        out.output = features;  // deactivated: identity, no rng consumption
        return out;
    }

    // One gate draw per layer per forward call, shared across the batch.
    GateBranch branch;
    const bool pinned = pin.has_value();
    if (pinned) {
        branch = *pin;
    } else {
        branch = rng.next_double() < cfg.drop_rate ? GateBranch::Drop : GateBranch::Importance;
        g.mark_unpinned_stochastic();
    }
    out.branch = branch;
    out.attention = attention_map(g, features);

    const bool enabled =
        branch == GateBranch::Drop ? cfg.drop_enabled : cfg.importance_enabled;
    if (!enabled) {
        out.output = features;  // deactivated component: raw feature map passes through
        return out;
    }

    if (branch == GateBranch::Drop) {
        NodeId mask = g.constant(drop_mask(g.value(out.attention), cfg.gamma));
        out.output = spatial_broadcast_mul(g, mask, features);
    } else {
        NodeId imp = importance_map(g, out.attention, cfg.normalize_attention);
        out.output = spatial_broadcast_mul(g, imp, features);
    }
    return out;
}

NodeId has_patch_drop(Graph& g, NodeId features, int patch_size, double hide_prob, Rng& rng,
                      Phase phase) {
    const Tensor& f = g.value(features);
    if (f.rank() != 4) {
        fail("shape-mismatch", "has_patch_drop expects (B,H,W,C) features, got " + f.shape_str());
    }
    if (hide_prob < 0.0 || hide_prob > 1.0) {
        fail("config-invalid", "hide_prob must lie in [0, 1], got " + std::to_string(hide_prob));
    }
    const std::int64_t B = f.dim(0), H = f.dim(1), W = f.dim(2);
    if (patch_size < 1 || patch_size > H || patch_size > W) {
        fail("grid-too-large", "patch size " + std::to_string(patch_size) +
                                   " does not fit the spatial extent " + f.shape_str());
    }
    if (phase == Phase::Eval) return features;

    Tensor mask = Tensor::full({B, H, W}, 1.0);
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t py = 0; py < H; py += patch_size) {
            for (std::int64_t px = 0; px < W; px += patch_size) {
                if (rng.next_double() >= hide_prob) continue;
                const std::int64_t y1 = std::min<std::int64_t>(py + patch_size, H);
                const std::int64_t x1 = std::min<std::int64_t>(px + patch_size, W);
                for (std::int64_t y = py; y < y1; ++y) {
                    for (std::int64_t x = px; x < x1; ++x) mask[(b * H + y) * W + x] = 0.0;
                }
            }
        }
    }
    g.mark_unpinned_stochastic();
    return spatial_broadcast_mul(g, g.constant(std::move(mask)), features);
}

}  // namespace adllab
