// adllab: experiment harness around the attention-based dropout layer.
// Subcommands: generate, train, evaluate, export-heatmaps, sweep.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "adllab/dataset.hpp"
#include "adllab/error.hpp"
#include "adllab/image_io.hpp"
#include "adllab/localization.hpp"
#include "adllab/model.hpp"
#include "adllab/runconfig.hpp"
#include "adllab/synthdata.hpp"

namespace fs = std::filesystem;
using namespace adllab;

namespace {

int env_threads() {
    const char* raw = std::getenv("ADLLAB_THREADS");
    if (raw == nullptr) return 1;
    const int n = std::atoi(raw);
    if (n < 1) fail("config-invalid", "ADLLAB_THREADS must be a positive integer");
    return n;
}

RunConfig load_config(const std::string& path) {
    if (path.empty()) return default_run_config();
    return parse_run_config(ConfigFile::parse_file(path));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("io-error", "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) fail("io-error", "failed writing " + path.string());
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

const Dataset& pick_split(const LoadedDataset& data, const std::string& split) {
    if (split == "train") return data.train;
    if (split == "test") return data.test;
    fail("config-invalid", "unknown split \"" + split + "\" (expected train or test)");
}

std::string block_name(const std::vector<BlockConfig>& blocks, std::size_t i) {
    return blocks[i].name.empty() ? "block" + std::to_string(i + 1) : blocks[i].name;
}

// ---------------------------------------------------------------- generate

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
    RunConfig rc = load_config(config_path);
    if (seed) rc.data.seed = *seed;
    const GeneratedData data = generate_dataset(rc.data);
    save_dataset(out_dir, data.train, data.test, rc.data.manifest_header());
    std::cout << "generate: " << data.train.size() << " train / " << data.test.size()
              << " test images in " << out_dir << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

std::string trainlog_text(const TrainLog& log) {
    std::string text = "# epoch loss accuracy\n";
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
        char line[96];
        std::snprintf(line, sizeof(line), "%zu %.12g %.6f\n", e, log.epoch_loss[e],
                      log.epoch_accuracy[e]);
        text += line;
    }
    return text;
}

std::string gates_text(const TrainLog& log) {
    std::string text = "# layer iteration branch\n";
    for (const GateTrace& trace : log.gates) {
        char head[128];
        std::snprintf(head, sizeof(head), "# %s drop_fraction %.6f over %zu draws\n",
                      trace.layer.c_str(), trace.drop_fraction(), trace.branches.size());
        text += head;
    }
    for (const GateTrace& trace : log.gates) {
        for (std::size_t i = 0; i < trace.branches.size(); ++i) {
            text += trace.layer + " " + std::to_string(i) + " " +
                    gate_branch_name(trace.branches[i]) + "\n";
        }
    }
    return text;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& variant_name,
              std::optional<std::uint64_t> seed, const std::string& pin_name) {
    RunConfig rc = load_config(config_path);
    const Variant variant = variant_from_name(variant_name);
    const std::uint64_t run_seed = seed ? *seed : rc.seeds.front();

    if (!pin_name.empty()) {
        if (pin_name == "drop") rc.train.pin = GateBranch::Drop;
        else if (pin_name == "importance") rc.train.pin = GateBranch::Importance;
        else fail("config-invalid", "unknown pin \"" + pin_name + "\" (drop | importance)");
    }

    const LoadedDataset data = load_dataset(data_dir);
    if (data.train.empty()) fail("missing-ground-truth", "no training images in " + data_dir);
    const ModelConfig mc = rc.model_config(variant, data.train.num_classes);

    fs::create_directories(out_dir);
    const fs::path log_path = fs::path(out_dir) / "trainlog.txt";
    const fs::path gates_path = fs::path(out_dir) / "gates.txt";

    const Rng root(run_seed);
    Rng build_rng = root.derived(10);
    Network net = Network::build(mc, build_rng);
    Rng train_rng = root.derived(20);
    TrainLog log;
    try {
        net.train(data.train, rc.train, train_rng, log);
    } catch (const Error&) {
        // Keep whatever the aborted run produced, then surface the failure.
        write_text(log_path, trainlog_text(log));
        write_text(gates_path, gates_text(log));
        throw;
    }

    net.save(fs::path(out_dir) / "model.bin");
    write_text(log_path, trainlog_text(log));
    write_text(gates_path, gates_text(log));
    std::cout << "train: variant=" << variant_name << " seed=" << run_seed
              << " epochs=" << rc.train.epochs
              << " final_loss=" << fmt(log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back())
              << " final_acc=" << fmt(log.epoch_accuracy.empty() ? 0.0 : log.epoch_accuracy.back())
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const std::string& model_path, const std::string& data_dir,
                 const std::string& out_dir, double theta_box, const std::string& split) {
    const Network net = Network::load(model_path);
    const LoadedDataset data = load_dataset(data_dir);
    const MetricsReport report = evaluate(net, pick_split(data, split), theta_box, env_threads());

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "metrics.txt", report.to_text());
    write_text(fs::path(out_dir) / "records.txt", report.records_to_text());
    std::cout << "evaluate: top1_clas=" << fmt(report.top1_clas)
              << " gt_known_loc=" << fmt(report.gt_known_loc)
              << " top1_loc=" << fmt(report.top1_loc) << "\n";
    return 0;
}

// ---------------------------------------------------------- export-heatmaps

int cmd_export_heatmaps(const std::string& model_path, const std::string& data_dir,
                        const std::string& out_dir, int n, double theta_box,
                        const std::string& split) {
    if (n < 1) fail("config-invalid", "--n must be >= 1");
    const Network net = Network::load(model_path);
    const LoadedDataset data = load_dataset(data_dir);
    const Dataset& set = pick_split(data, split);
    if (static_cast<std::size_t>(n) > set.size()) {
        fail("config-invalid", "--n exceeds the " + split + " split size");
    }

    fs::create_directories(out_dir);
    std::string boxes = "# index predicted iou_pred gt_x0 gt_y0 gt_x1 gt_y1 pred_x0 pred_y0 "
                        "pred_x1 pred_y1\n";
    for (int i = 0; i < n; ++i) {
        const Sample& sample = set.samples[static_cast<std::size_t>(i)];
        const auto pred = net.predict(sample.image);
        const std::vector<double> weights = net.class_weights(pred.predicted_class);
        const Heatmap cam = cam_heatmap(pred.final_features, weights);
        const Heatmap up = normalize_and_upsample(cam, static_cast<int>(sample.image.dim(0)),
                                                  static_cast<int>(sample.image.dim(1)));
        const BBox box = extract_bbox(up, theta_box).box;

        char prefix[32];
        std::snprintf(prefix, sizeof(prefix), "img%04d", i);

        // input | heatmap | overlay, ground truth in red, estimate in green
        Tensor input_view = sample.image;
        draw_box(input_view, sample.gt_box, 0.9, 0.1, 0.1);
        draw_box(input_view, box, 0.1, 0.9, 0.1);
        write_ppm(fs::path(out_dir) / (std::string(prefix) + "_input.ppm"), input_view);

        write_pgm(fs::path(out_dir) / (std::string(prefix) + "_heatmap.pgm"), up.values);

        Tensor overlay = heatmap_overlay(sample.image, up.values);
        draw_box(overlay, sample.gt_box, 0.9, 0.1, 0.1);
        draw_box(overlay, box, 0.1, 0.9, 0.1);
        write_ppm(fs::path(out_dir) / (std::string(prefix) + "_overlay.ppm"), overlay);

        char line[160];
        std::snprintf(line, sizeof(line), "%d %d %.6f %d %d %d %d %d %d %d %d\n", i,
                      pred.predicted_class, iou(box, sample.gt_box), sample.gt_box.x0,
                      sample.gt_box.y0, sample.gt_box.x1, sample.gt_box.y1, box.x0, box.y0, box.x1,
                      box.y1);
        boxes += line;
    }
    write_text(fs::path(out_dir) / "boxes.txt", boxes);
    std::cout << "export-heatmaps: wrote " << n << " triplet(s) to " << out_dir << "\n";
    return 0;
}

// ------------------------------------------------------------------- sweep

struct SweepPoint {
    std::string label;
    ModelConfig model;
};

std::vector<SweepPoint> sweep_points(const RunConfig& rc, const std::string& axis,
                                     int num_classes) {
    std::vector<SweepPoint> points;
    if (axis == "drop_rate" || axis == "gamma") {
        const std::vector<double>& values =
            axis == "drop_rate" ? rc.sweep_drop_rates : rc.sweep_gammas;
        if (values.empty()) fail("config-invalid", "empty sweep axis \"" + axis + "\"");
        for (double v : values) {
            RunConfig point = rc;
            if (axis == "drop_rate") point.adl.drop_rate = v;
            else point.adl.gamma = v;
            points.push_back({fmt(v), point.model_config(Variant::Adl, num_classes)});
        }
        return points;
    }
    if (axis == "insertion") {
        // Vanilla first, then cumulative insertion sets from the last block
        // backwards, the usual ablation ordering.
        points.push_back({"none", rc.model_config(Variant::Vanilla, num_classes)});
        std::vector<std::string> names;
        for (std::size_t i = rc.blocks.size(); i-- > 0;) {
            names.push_back(block_name(rc.blocks, i));
            RunConfig point = rc;
            point.adl_insert = names;
            std::string label = names.front();
            for (std::size_t j = 1; j < names.size(); ++j) label += "+" + names[j];
            points.push_back({label, point.model_config(Variant::Adl, num_classes)});
        }
        return points;
    }
    fail("config-invalid", "unknown sweep axis \"" + axis + "\"");
}

int cmd_sweep(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& axis,
              std::optional<std::uint64_t> seed) {
    RunConfig rc = load_config(config_path);
    const std::uint64_t run_seed = seed ? *seed : rc.seeds.front();
    const LoadedDataset data = load_dataset(data_dir);
    if (data.train.empty() || data.test.empty()) {
        fail("missing-ground-truth", "sweep needs non-empty train and test splits");
    }

    const std::vector<SweepPoint> points = sweep_points(rc, axis, data.train.num_classes);

    std::string table = "# adllab sweep\n# axis = " + axis + "\n# seed = " +
                        std::to_string(run_seed) +
                        "\n# columns: value top1_clas gt_known_loc top1_loc\n";
    for (const SweepPoint& point : points) {
        const Rng root(run_seed);
        Rng build_rng = root.derived(10);
        Network net = Network::build(point.model, build_rng);
        Rng train_rng = root.derived(20);
        net.train(data.train, rc.train, train_rng);
        const MetricsReport report = evaluate(net, data.test, rc.theta_box, env_threads());
        char line[160];
        std::snprintf(line, sizeof(line), "%s %.6f %.6f %.6f\n", point.label.c_str(),
                      report.top1_clas, report.gt_known_loc, report.top1_loc);
        table += line;
        std::cerr << "sweep " << axis << "=" << point.label << ": top1_clas "
                  << fmt(report.top1_clas) << ", gt_known_loc " << fmt(report.gt_known_loc)
                  << ", top1_loc " << fmt(report.top1_loc) << "\n";
    }
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / ("sweep_" + axis + ".txt"), table);
    std::cout << "sweep: " << points.size() << " rows -> " << out_dir << "/sweep_" << axis
              << ".txt\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-based dropout layer lab: synthetic WSOL experiments"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, model_path;
    std::string variant = "adl", pin_name, split = "test", axis = "drop_rate";
    double theta_box = 0.2;
    int n_images = 4;
    std::optional<std::uint64_t> seed;

    auto* generate = app.add_subcommand("generate", "render a synthetic dataset directory");
    generate->add_option("--config", config_path, "run config file");
    generate->add_option("--out", out_dir, "output dataset directory")->required();
    generate->add_option("--seed", seed, "override the data seed");

    auto* train = app.add_subcommand("train", "train one model variant");
    train->add_option("--config", config_path, "run config file");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--variant", variant, "vanilla | adl | has (default adl)");
    train->add_option("--seed", seed, "training seed (default: first config seed)");
    train->add_option("--pin", pin_name, "pin every ADL gate (drop | importance)");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "compute the three WSOL metrics");
    evaluate_cmd->add_option("--model", model_path, "model file")->required();
    evaluate_cmd->add_option("--data", data_dir, "dataset directory")->required();
    evaluate_cmd->add_option("--out", out_dir, "output directory")->required();
    evaluate_cmd->add_option("--theta-box", theta_box, "CAM box threshold (default 0.2)");
    evaluate_cmd->add_option("--split", split, "train | test (default test)");

    auto* export_cmd =
        app.add_subcommand("export-heatmaps", "write input/heatmap/overlay triplets");
    export_cmd->add_option("--model", model_path, "model file")->required();
    export_cmd->add_option("--data", data_dir, "dataset directory")->required();
    export_cmd->add_option("--out", out_dir, "output directory")->required();
    export_cmd->add_option("--n", n_images, "number of images (default 4)");
    export_cmd->add_option("--theta-box", theta_box, "CAM box threshold (default 0.2)");
    export_cmd->add_option("--split", split, "train | test (default test)");

    auto* sweep = app.add_subcommand("sweep", "train and evaluate along one config axis");
    sweep->add_option("--config", config_path, "run config file");
    sweep->add_option("--data", data_dir, "dataset directory")->required();
    sweep->add_option("--out", out_dir, "output directory")->required();
    sweep->add_option("--axis", axis, "drop_rate | gamma | insertion (default drop_rate)");
    sweep->add_option("--seed", seed, "run seed (default: first config seed)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(config_path, out_dir, seed);
        if (train->parsed()) {
            return cmd_train(config_path, data_dir, out_dir, variant, seed, pin_name);
        }
        if (evaluate_cmd->parsed()) {
            return cmd_evaluate(model_path, data_dir, out_dir, theta_box, split);
        }
        if (export_cmd->parsed()) {
            return cmd_export_heatmaps(model_path, data_dir, out_dir, n_images, theta_box, split);
        }
        if (sweep->parsed()) return cmd_sweep(config_path, data_dir, out_dir, axis, seed);
    } catch (const Error& e) {
        std::cerr << "adllab: error [" << e.code() << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "adllab: error [internal]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
