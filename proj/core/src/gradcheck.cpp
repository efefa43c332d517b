#include "adllab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "adllab/error.hpp"
#include "adllab/rng.hpp"

namespace adllab {

GradReport finite_difference_check(Graph& g, NodeId loss, const GradCheckOptions& opt) {
    if (opt.step <= 0.0) fail("bad-argument", "finite-difference step must be positive");
    if (g.has_unpinned_stochastic()) {
        fail("unpinned-stochastic",
             "graph contains an unpinned stochastic node; pin every gate before checking");
    }

    const Gradients grads = backward(g, loss);

    GradReport report;
    report.tolerance = opt.tolerance;

    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto id = static_cast<NodeId>(i);
        if (g.node(id).kind != PrimKind::Parameter) continue;

        Tensor& value = g.node(id).output;
        const Tensor& analytic = grads.at(id);
        const std::int64_t n = value.size();

        std::vector<std::int64_t> probes;
        if (n <= opt.max_probes_per_param) {
            probes.resize(static_cast<std::size_t>(n));
            for (std::int64_t j = 0; j < n; ++j) probes[static_cast<std::size_t>(j)] = j;
        } else {
            Rng rng(opt.probe_seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(id + 1)));
            while (static_cast<int>(probes.size()) < opt.max_probes_per_param) {
                const auto j = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(n)));
                if (std::find(probes.begin(), probes.end(), j) == probes.end()) probes.push_back(j);
            }
        }

        double param_err = 0.0;
        for (std::int64_t j : probes) {
            const double saved = value[j];
            value[j] = saved + opt.step;
            g.recompute();
            const double f_plus = g.value(loss)[0];
            value[j] = saved - opt.step;
            g.recompute();
            const double f_minus = g.value(loss)[0];
            value[j] = saved;

            const double numeric = (f_plus - f_minus) / (2.0 * opt.step);
            const double a = analytic[j];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            param_err = std::max(param_err, std::fabs(a - numeric) / denom);
        }
        g.recompute();  // restore primal values after the last probe

        report.per_parameter.push_back({id, param_err});
        report.max_rel_error = std::max(report.max_rel_error, param_err);
    }

    report.pass = report.max_rel_error <= opt.tolerance;
    return report;
}

}  // namespace adllab
