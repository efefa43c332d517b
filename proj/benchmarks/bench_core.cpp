#include <benchmark/benchmark.h>

#include "adllab/adl.hpp"
#include "adllab/graph.hpp"
#include "adllab/localization.hpp"
#include "adllab/model.hpp"
#include "adllab/rng.hpp"
#include "adllab/synthdata.hpp"

using namespace adllab;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.next_normal();
    return t;
}

ModelConfig bench_model() {
    ModelConfig cfg;
    cfg.blocks = {{"block1", 8, 3, PoolKind::Max2x2},
                  {"block2", 12, 3, PoolKind::Max2x2},
                  {"block3", 16, 3, PoolKind::None}};
    cfg.num_classes = 4;
    cfg.adl_insertions.emplace_back("block2", AdlConfig{});
    cfg.adl_insertions.emplace_back("block3", AdlConfig{});
    return cfg;
}

void BM_Conv2dForward(benchmark::State& state) {
    const auto batch = static_cast<std::int64_t>(state.range(0));
    Graph g;
    const NodeId in = g.constant(random_tensor({batch, 16, 16, 8}, 1));
    const NodeId k = g.constant(random_tensor({3, 3, 8, 16}, 2));
    const NodeId b = g.constant(Tensor({16}));
    for (auto _ : state) {
        Graph fresh;
        const NodeId x = fresh.constant(g.value(in));
        const NodeId kk = fresh.constant(g.value(k));
        const NodeId bb = fresh.constant(g.value(b));
        benchmark::DoNotOptimize(fresh.value(conv2d(fresh, x, kk, bb, 1, 1)).data());
    }
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(8)->Arg(32);

void BM_AdlForwardTrain(benchmark::State& state) {
    const Tensor feat = random_tensor({32, 8, 8, 12}, 3);
    AdlConfig cfg;
    Rng rng(4);
    for (auto _ : state) {
        Graph g;
        const NodeId f = g.constant(feat);
        benchmark::DoNotOptimize(adl_forward(g, f, cfg, rng, Phase::Train).output);
    }
}
BENCHMARK(BM_AdlForwardTrain);

void BM_TrainStep(benchmark::State& state) {
    Rng build_rng(5);
    Network net = Network::build(bench_model(), build_rng);
    Dataset data;
    data.image_size = 32;
    data.num_classes = 4;
    Rng img_rng(6);
    for (int i = 0; i < 32; ++i) {
        Sample s;
        s.label = i % 4;
        s.image = Tensor({32, 32, 3});
        for (double& v : s.image.values()) v = img_rng.next_double();
        s.gt_box = {4, 4, 28, 28};
        data.samples.push_back(std::move(s));
    }
    TrainOptions opt;
    opt.epochs = 1;
    opt.batch_size = 32;
    Rng train_rng(7);
    for (auto _ : state) {
        net.train(data, opt, train_rng);
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_EvaluateImage(benchmark::State& state) {
    DataSpec spec;
    spec.samples_per_class = 2;
    const GeneratedData data = generate_dataset(spec);
    Rng build_rng(8);
    const Network net = Network::build(bench_model().without_insertions(), build_rng);
    const Sample& sample = data.train.samples[0];
    for (auto _ : state) {
        const auto pred = net.predict(sample.image);
        const Heatmap cam =
            cam_heatmap(pred.final_features, net.class_weights(pred.predicted_class));
        const Heatmap up = normalize_and_upsample(cam, 32, 32);
        benchmark::DoNotOptimize(extract_bbox(up, 0.2).box);
    }
}
BENCHMARK(BM_EvaluateImage)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
