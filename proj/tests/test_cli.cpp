#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "adllab/localization.hpp"
#include "adllab/model.hpp"

namespace fs = std::filesystem;
using namespace adllab;

namespace {

const fs::path kWork = fs::temp_directory_path() / "adllab_cli_test";

int cli(const std::string& args) {
    const std::string cmd =
        std::string(ADLLAB_CLI_PATH) + " " + args + " >/dev/null 2>" + (kWork / "stderr").string();
    return std::system(cmd.c_str());
}

std::string last_stderr() {
    std::ifstream in(kWork / "stderr");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_config(const fs::path& p, const std::string& extra = "") {
    std::ofstream cfg(p);
    cfg << "[data]\nnum_classes = 4\nsamples_per_class = 12\nseed = 3\n\n"
        << "[train]\nlr = 0.05\nepochs = 3\nwarmup_epochs = 1\nbatch_size = 16\n\n"
        << extra;
}

struct Fixture {
    Fixture() {
        fs::remove_all(kWork);
        fs::create_directories(kWork);
        write_config(kWork / "cfg.ini");
        REQUIRE(cli("generate --config " + (kWork / "cfg.ini").string() + " --out " +
                    (kWork / "data").string()) == 0);
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("generate writes one manifest line per image") {
    fixture();
    std::ifstream manifest(kWork / "data" / "manifest.txt");
    REQUIRE(manifest.good());
    int data_lines = 0, header_lines = 0;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        (line[0] == '#' ? header_lines : data_lines)++;
    }
    CHECK(data_lines == 48);  // 12 per class x 4 classes
    CHECK(header_lines > 0);
}

TEST_CASE("invalid config exits nonzero with a diagnostic") {
    fixture();
    std::ofstream(kWork / "bad.ini") << "[data]\nnum_classes = 1\n";
    CHECK(cli("generate --config " + (kWork / "bad.ini").string() + " --out " +
              (kWork / "never").string()) != 0);
    CHECK(last_stderr().find("config-invalid") != std::string::npos);
    CHECK_FALSE(fs::exists(kWork / "never"));
}

TEST_CASE("drop_rate outside [0,1] is rejected at config parse time") {
    fixture();
    write_config(kWork / "badrate.ini", "[adl]\ndrop_rate = 1.5\n");
    CHECK(cli("train --config " + (kWork / "badrate.ini").string() + " --data " +
              (kWork / "data").string() + " --out " + (kWork / "never2").string()) != 0);
    CHECK(last_stderr().find("config-invalid") != std::string::npos);
}

TEST_CASE("no-op adl variant evaluates identically to vanilla") {
    fixture();
    write_config(kWork / "noop.ini", "[adl]\ndrop_rate = 0\nimportance_enabled = false\n");
    const std::string data = (kWork / "data").string();
    REQUIRE(cli("train --config " + (kWork / "noop.ini").string() + " --data " + data +
                " --out " + (kWork / "t_vanilla").string() + " --variant vanilla --seed 2") == 0);
    REQUIRE(cli("train --config " + (kWork / "noop.ini").string() + " --data " + data +
                " --out " + (kWork / "t_noop").string() + " --variant adl --seed 2") == 0);
    REQUIRE(cli("evaluate --model " + (kWork / "t_vanilla" / "model.bin").string() + " --data " +
                data + " --out " + (kWork / "e_vanilla").string()) == 0);
    REQUIRE(cli("evaluate --model " + (kWork / "t_noop" / "model.bin").string() + " --data " +
                data + " --out " + (kWork / "e_noop").string()) == 0);
    CHECK(bytes(kWork / "e_vanilla" / "metrics.txt") == bytes(kWork / "e_noop" / "metrics.txt"));
    CHECK(bytes(kWork / "e_vanilla" / "records.txt") == bytes(kWork / "e_noop" / "records.txt"));
}

TEST_CASE("emitted metrics obey the conjunction inequality") {
    fixture();
    const MetricsReport rep =
        MetricsReport::from_text(bytes(kWork / "e_vanilla" / "metrics.txt"));
    CHECK(rep.num_images > 0);
    CHECK(rep.top1_loc <= std::min(rep.top1_clas, rep.gt_known_loc) + 1e-12);
}

TEST_CASE("export-heatmaps writes 3 images plus one annotation file for n=1") {
    fixture();
    const std::string data = (kWork / "data").string();
    const fs::path out = kWork / "hm";
    REQUIRE(cli("export-heatmaps --model " + (kWork / "t_vanilla" / "model.bin").string() +
                " --data " + data + " --out " + out.string() + " --n 1") == 0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(out)) {
        (void)e;
        ++files;
    }
    CHECK(files == 4);
    CHECK(fs::exists(out / "img0000_input.ppm"));
    CHECK(fs::exists(out / "img0000_heatmap.pgm"));
    CHECK(fs::exists(out / "img0000_overlay.ppm"));
    CHECK(fs::exists(out / "boxes.txt"));

    // Overlay dimensions match the input image.
    auto pnm_dims = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::string magic;
        int w = 0, h = 0;
        in >> magic >> w >> h;
        return std::pair<int, int>(w, h);
    };
    CHECK(pnm_dims(out / "img0000_overlay.ppm") == pnm_dims(out / "img0000_input.ppm"));
}

TEST_CASE("annotated predicted box matches a re-run of the extraction") {
    fixture();
    std::ifstream boxes(kWork / "hm" / "boxes.txt");
    std::string line;
    std::getline(boxes, line);  // header
    REQUIRE(std::getline(boxes, line));
    std::istringstream is(line);
    int index, predicted, gx0, gy0, gx1, gy1, px0, py0, px1, py1;
    double iou_pred;
    REQUIRE(static_cast<bool>(is >> index >> predicted >> iou_pred >> gx0 >> gy0 >> gx1 >> gy1 >>
                              px0 >> py0 >> px1 >> py1));

    const Network net = Network::load(kWork / "t_vanilla" / "model.bin");
    const LoadedDataset data = load_dataset(kWork / "data");
    const Sample& sample = data.test.samples[0];
    const auto pred = net.predict(sample.image);
    CHECK(pred.predicted_class == predicted);
    const Heatmap cam = cam_heatmap(pred.final_features, net.class_weights(pred.predicted_class));
    const Heatmap up = normalize_and_upsample(cam, 32, 32);
    const BBox box = extract_bbox(up, 0.2).box;
    CHECK(box == BBox{px0, py0, px1, py1});
    CHECK(sample.gt_box == BBox{gx0, gy0, gx1, gy1});
}

TEST_CASE("insertion sweep emits vanilla plus cumulative insertion rows") {
    fixture();
    const fs::path out = kWork / "sw_ins";
    REQUIRE(cli("sweep --config " + (kWork / "cfg.ini").string() + " --data " +
                (kWork / "data").string() + " --out " + out.string() +
                " --axis insertion --seed 1") == 0);
    std::ifstream table(out / "sweep_insertion.txt");
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(table, line)) {
        if (line.empty() || line[0] == '#') continue;
        labels.push_back(line.substr(0, line.find(' ')));
    }
    REQUIRE(labels.size() == 4);  // vanilla + 3 cumulative sets
    CHECK(labels[0] == "none");
    CHECK(labels[1] == "block3");
    CHECK(labels[2] == "block3+block2");
    CHECK(labels[3] == "block3+block2+block1");
}

TEST_CASE("sweep rejects an empty axis list") {
    fixture();
    write_config(kWork / "empty_axis.ini", "[sweep]\ndrop_rate =\n");
    CHECK(cli("sweep --config " + (kWork / "empty_axis.ini").string() + " --data " +
              (kWork / "data").string() + " --out " + (kWork / "sw").string() +
              " --axis drop_rate --seed 1") != 0);
    CHECK(last_stderr().find("config-invalid") != std::string::npos);
}

TEST_CASE("unknown variant names are rejected") {
    fixture();
    CHECK(cli("train --config " + (kWork / "cfg.ini").string() + " --data " +
              (kWork / "data").string() + " --out " + (kWork / "never3").string() +
              " --variant spatial") != 0);
    CHECK(last_stderr().find("config-invalid") != std::string::npos);
}

TEST_CASE("the hide-and-seek variant trains and evaluates end to end") {
    fixture();
    const std::string data = (kWork / "data").string();
    write_config(kWork / "has.ini", "[has]\ninsert = block2\npatch_size = 4\nhide_prob = 0.5\n");
    REQUIRE(cli("train --config " + (kWork / "has.ini").string() + " --data " + data + " --out " +
                (kWork / "t_has").string() + " --variant has --seed 2") == 0);
    REQUIRE(cli("evaluate --model " + (kWork / "t_has" / "model.bin").string() + " --data " +
                data + " --out " + (kWork / "e_has").string()) == 0);
    const MetricsReport rep = MetricsReport::from_text(bytes(kWork / "e_has" / "metrics.txt"));
    CHECK(rep.num_images > 0);
    const Network net = Network::load(kWork / "t_has" / "model.bin");
    REQUIRE(net.config().has_insertions.size() == 1);
    CHECK(net.config().has_insertions[0].second.patch_size == 4);
}

TEST_CASE("pinned training runs are importance-only or drop-only throughout") {
    fixture();
    const std::string data = (kWork / "data").string();
    REQUIRE(cli("train --config " + (kWork / "cfg.ini").string() + " --data " + data + " --out " +
                (kWork / "t_pin").string() + " --variant adl --seed 2 --pin importance") == 0);
    std::ifstream gates(kWork / "t_pin" / "gates.txt");
    std::string line;
    bool any = false, all_importance = true;
    while (std::getline(gates, line)) {
        if (line.empty() || line[0] == '#') continue;
        any = true;
        if (line.find(" importance") == std::string::npos) all_importance = false;
    }
    CHECK(any);
    CHECK(all_importance);
}
