#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "adllab/adl.hpp"
#include "adllab/graph.hpp"
#include "adllab/rng.hpp"
#include "test_util.hpp"

using namespace adllab;

namespace {

// Independent re-statement of the rule: 0 iff strictly above gamma * max,
// everything kept when the map has no positive peak or is constant.
std::vector<double> brute_force_mask(const std::vector<double>& att, double gamma) {
    const double hi = *std::max_element(att.begin(), att.end());
    const double lo = *std::min_element(att.begin(), att.end());
    std::vector<double> mask(att.size(), 1.0);
    if (hi <= 0.0 || hi == lo) return mask;
    for (std::size_t i = 0; i < att.size(); ++i) {
        mask[i] = att[i] > gamma * hi ? 0.0 : 1.0;
    }
    return mask;
}

}  // namespace

TEST_CASE("drop mask thresholds at gamma times the maximum") {
    Tensor att({1, 2, 2}, {1, 2, 3, 4});
    const Tensor mask = drop_mask(att, 0.8);  // threshold 3.2
    CHECK(mask[0] == 1.0);
    CHECK(mask[1] == 1.0);
    CHECK(mask[2] == 1.0);
    CHECK(mask[3] == 0.0);
}

TEST_CASE("gamma of one never drops anything") {
    Rng rng(3);
    Tensor att({1, 4, 4});
    for (double& v : att.values()) v = rng.next_uniform(0.0, 5.0);
    const Tensor mask = drop_mask(att, 1.0);
    for (std::int64_t i = 0; i < mask.size(); ++i) CHECK(mask[i] == 1.0);
}

TEST_CASE("constant attention maps keep every pixel") {
    const Tensor att = Tensor::full({1, 3, 3}, 2.5);
    for (double gamma : {0.5, 0.8, 1.0}) {
        const Tensor mask = drop_mask(att, gamma);
        for (std::int64_t i = 0; i < mask.size(); ++i) CHECK(mask[i] == 1.0);
    }
}

TEST_CASE("non-positive attention maps keep every pixel") {
    Tensor att({1, 2, 2}, {-4.0, -1.0, -2.0, -3.0});
    const Tensor mask = drop_mask(att, 0.8);
    for (std::int64_t i = 0; i < mask.size(); ++i) CHECK(mask[i] == 1.0);
}

TEST_CASE("drop mask matches the brute-force rule on random maps") {
    Rng rng(77);
    const double gammas[] = {0.5, 0.8, 0.9, 0.95, 1.0};
    for (int trial = 0; trial < 200; ++trial) {
        Tensor att({1, 5, 7});
        for (double& v : att.values()) v = rng.next_normal();
        for (double gamma : gammas) {
            const Tensor mask = drop_mask(att, gamma);
            const std::vector<double> expect =
                brute_force_mask({att.values().begin(), att.values().end()}, gamma);
            for (std::int64_t i = 0; i < mask.size(); ++i) {
                REQUIRE(mask[i] == expect[static_cast<std::size_t>(i)]);
            }
        }
    }
}

TEST_CASE("per-sample thresholds are independent within a batch") {
    Tensor att({2, 1, 2}, {1.0, 10.0, 1.0, 2.0});
    const Tensor mask = drop_mask(att, 0.8);
    // sample 0: threshold 8 -> only the 10 is dropped
    CHECK(mask[0] == 1.0);
    CHECK(mask[1] == 0.0);
    // sample 1: threshold 1.6 -> only the 2 is dropped
    CHECK(mask[2] == 1.0);
    CHECK(mask[3] == 0.0);
}

TEST_CASE("dropped-pixel count is non-increasing in gamma on distinct maps") {
    Rng rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor att({1, 4, 4});
        for (double& v : att.values()) v = rng.next_uniform(0.1, 9.0);
        std::int64_t prev = att.size() + 1;
        for (double gamma : {0.5, 0.7, 0.8, 0.9, 0.95, 1.0}) {
            const Tensor mask = drop_mask(att, gamma);
            std::int64_t dropped = 0;
            for (std::int64_t i = 0; i < mask.size(); ++i) dropped += mask[i] == 0.0 ? 1 : 0;
            CHECK(dropped <= prev);
            prev = dropped;
        }
    }
}

TEST_CASE("importance map is the sigmoid of the attention map") {
    Graph g;
    NodeId att = g.constant(Tensor({1, 1, 2}, {-100.0, 100.0}));
    const Tensor& imp = g.value(importance_map(g, att));
    CHECK(imp[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(imp[1] == doctest::Approx(1.0).epsilon(1e-12));

    Graph g2;
    NodeId zero = g2.constant(Tensor({1, 1, 1}, {0.0}));
    CHECK(g2.value(importance_map(g2, zero))[0] == doctest::Approx(0.5));
}

TEST_CASE("importance map preserves attention ordering and argmax") {
    Rng rng(9);
    Tensor att({1, 3, 3});
    for (double& v : att.values()) v = rng.next_normal() * 3.0;
    Graph g;
    const Tensor& imp = g.value(importance_map(g, g.constant(att)));
    std::int64_t arg_att = 0, arg_imp = 0;
    for (std::int64_t i = 1; i < att.size(); ++i) {
        if (att[i] > att[arg_att]) arg_att = i;
        if (imp[i] > imp[arg_imp]) arg_imp = i;
    }
    CHECK(arg_att == arg_imp);
    for (std::int64_t i = 0; i < att.size(); ++i) {
        for (std::int64_t j = 0; j < att.size(); ++j) {
            if (att[i] >= att[j]) CHECK(imp[i] >= imp[j]);
        }
    }
}

TEST_CASE("eval phase is the identity and consumes no randomness") {
    Graph g;
    Rng rng(42);
    Rng witness(42);
    Tensor f({1, 2, 2, 3});
    for (std::int64_t i = 0; i < f.size(); ++i) f[i] = 0.123 * static_cast<double>(i) - 0.4;
    NodeId features = g.constant(f);
    AdlConfig cfg;
    const AdlOutcome out = adl_forward(g, features, cfg, rng, Phase::Eval);
    CHECK(out.output == features);  // same node: bit-exact by construction
    CHECK_FALSE(out.branch.has_value());
    CHECK(rng.next_u64() == witness.next_u64());
}

TEST_CASE("pinning the gate in eval phase is an error") {
    Graph g;
    Rng rng(1);
    NodeId features = g.constant(Tensor::full({1, 2, 2, 1}, 1.0));
    AdlConfig cfg;
    CHECK(error_code_of([&] {
              adl_forward(g, features, cfg, rng, Phase::Eval, GateBranch::Drop);
          }) == "pin-in-eval");
}

TEST_CASE("degenerate drop rates pin the gate distribution") {
    Tensor f({1, 2, 2, 2}, {0.5, 1.5, 2.0, 0.1, 0.7, 0.3, 0.9, 1.1});
    AdlConfig always_drop;
    always_drop.drop_rate = 1.0;
    AdlConfig never_drop;
    never_drop.drop_rate = 0.0;

    Rng rng(10);
    for (int i = 0; i < 200; ++i) {
        Graph g;
        NodeId features = g.constant(f);
        CHECK(*adl_forward(g, features, always_drop, rng, Phase::Train).branch ==
              GateBranch::Drop);
        Graph g2;
        NodeId features2 = g2.constant(f);
        CHECK(*adl_forward(g2, features2, never_drop, rng, Phase::Train).branch ==
              GateBranch::Importance);
    }
}

TEST_CASE("drop branch applies the mask, importance branch the sigmoid map") {
    Tensor f({1, 1, 2, 1}, {1.0, 3.0});
    AdlConfig cfg;
    cfg.gamma = 0.8;
    Rng rng(0);

    Graph g;
    const AdlOutcome dropped =
        adl_forward(g, g.constant(f), cfg, rng, Phase::Train, GateBranch::Drop);
    // attention = features (single channel); threshold 2.4 drops the 3.
    CHECK(g.value(dropped.output)[0] == doctest::Approx(1.0));
    CHECK(g.value(dropped.output)[1] == doctest::Approx(0.0));

    Graph g2;
    const AdlOutcome kept =
        adl_forward(g2, g2.constant(f), cfg, rng, Phase::Train, GateBranch::Importance);
    CHECK(g2.value(kept.output)[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0)) * 1.0));
    CHECK(g2.value(kept.output)[1] == doctest::Approx(1.0 / (1.0 + std::exp(-3.0)) * 3.0));
}

TEST_CASE("disabled branches pass the raw feature map through") {
    Tensor f({1, 1, 2, 1}, {1.0, 3.0});
    Rng rng(0);

    AdlConfig drop_only;
    drop_only.importance_enabled = false;
    Graph g;
    NodeId features = g.constant(f);
    const AdlOutcome out =
        adl_forward(g, features, drop_only, rng, Phase::Train, GateBranch::Importance);
    CHECK(out.output == features);

    AdlConfig imp_only;
    imp_only.drop_enabled = false;
    Graph g2;
    NodeId features2 = g2.constant(f);
    const AdlOutcome out2 =
        adl_forward(g2, features2, imp_only, rng, Phase::Train, GateBranch::Drop);
    CHECK(out2.output == features2);
}

TEST_CASE("gate frequency tracks drop_rate") {
    const Tensor f = Tensor::full({1, 1, 1, 1}, 1.0);
    for (double rate : {0.25, 0.5, 0.75}) {
        AdlConfig cfg;
        cfg.drop_rate = rate;
        Rng rng(42);
        int drops = 0;
        const int n = 2000;
        for (int i = 0; i < n; ++i) {
            Graph g;
            if (*adl_forward(g, g.constant(f), cfg, rng, Phase::Train).branch ==
                GateBranch::Drop) {
                ++drops;
            }
        }
        const double freq = static_cast<double>(drops) / n;
        const double bound = 3.0 * std::sqrt(rate * (1.0 - rate) / n);
        CHECK(std::fabs(freq - rate) <= bound);
    }
}

TEST_CASE("hide-and-seek endpoints: keep all, hide all") {
    Tensor f({1, 4, 4, 2});
    for (std::int64_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(i + 1);
    Rng rng(7);

    Graph g;
    NodeId features = g.constant(f);
    NodeId keep = has_patch_drop(g, features, 2, 0.0, rng, Phase::Train);
    const Tensor& kept = g.value(keep);
    for (std::int64_t i = 0; i < f.size(); ++i) CHECK(kept[i] == f[i]);

    Graph g2;
    NodeId all = has_patch_drop(g2, g2.constant(f), 2, 1.0, rng, Phase::Train);
    const Tensor& zeroed = g2.value(all);
    for (std::int64_t i = 0; i < f.size(); ++i) CHECK(zeroed[i] == 0.0);

    Graph g3;
    NodeId id_eval = has_patch_drop(g3, g3.constant(f), 2, 0.5, rng, Phase::Eval);
    CHECK(g3.value(id_eval).values()[3] == f[3]);
}

TEST_CASE("hide-and-seek zeroes exactly the patches whose draws succeed") {
    Tensor f = Tensor::full({1, 4, 4, 1}, 1.0);
    const double hide_prob = 0.5;
    Rng rng(7);
    Graph g;
    NodeId out = has_patch_drop(g, g.constant(f), 2, hide_prob, rng, Phase::Train);

    // Scripted replay of the same stream: one draw per 2x2 patch, row-major.
    Rng replay(7);
    bool hidden[2][2];
    for (int py = 0; py < 2; ++py) {
        for (int px = 0; px < 2; ++px) hidden[py][px] = replay.next_double() < hide_prob;
    }
    const Tensor& v = g.value(out);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const double expect = hidden[y / 2][x / 2] ? 0.0 : 1.0;
            CHECK(v[y * 4 + x] == expect);
        }
    }
}

TEST_CASE("hide-and-seek rejects patches larger than the spatial extent") {
    Graph g;
    Rng rng(1);
    NodeId f = g.constant(Tensor::full({1, 4, 4, 1}, 1.0));
    CHECK(error_code_of([&] { has_patch_drop(g, f, 5, 0.5, rng, Phase::Train); }) ==
          "grid-too-large");
}

TEST_CASE("config validation rejects out-of-range hyperparameters") {
    AdlConfig bad_rate;
    bad_rate.drop_rate = 1.5;
    CHECK(error_code_of([&] { bad_rate.validate(); }) == "config-invalid");
    AdlConfig bad_gamma;
    bad_gamma.gamma = 0.0;
    CHECK(error_code_of([&] { bad_gamma.validate(); }) == "config-invalid");
}
