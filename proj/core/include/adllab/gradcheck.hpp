#pragma once

#include <cstdint>
#include <vector>

#include "adllab/graph.hpp"

namespace adllab {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Elements probed per parameter tensor; tensors at or below this size are
    // probed exhaustively, larger ones on a seeded random subset.
    int max_probes_per_param = 24;
    std::uint64_t probe_seed = 0x5eed;
};

struct GradReport {
    struct Entry {
        NodeId param = kInvalidNode;
        double max_rel_error = 0.0;
    };
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::vector<Entry> per_parameter;
};

// Central-difference oracle for backward(): compares analytic gradients with
// (f(p+h) - f(p-h)) / 2h on sampled parameter elements, replaying the tape
// for each probe. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
// denominator. Throws "unpinned-stochastic" if any node in the graph recorded
// an unpinned random draw, since the loss is then not a function of the
// parameters alone.
GradReport finite_difference_check(Graph& g, NodeId loss, const GradCheckOptions& opt = {});

}  // namespace adllab
