#include "adllab/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "adllab/error.hpp"
#include "adllab/image_io.hpp"

namespace adllab {

namespace {

std::string split_filename(const char* prefix, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05zu.ppm", prefix, index);
    return buf;
}

void write_split(std::ofstream& manifest, const std::filesystem::path& dir, const Dataset& set,
                 const char* prefix) {
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        const Sample& s = set.samples[i];
        const std::string name = split_filename(prefix, i);
        write_ppm(dir / name, s.image);
        manifest << name << " " << s.label << " " << s.gt_box.x0 << " " << s.gt_box.y0 << " "
                 << s.gt_box.x1 << " " << s.gt_box.y1 << "\n";
    }
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& train, const Dataset& test,
                  const std::vector<std::string>& header_lines) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) fail("io-error", "cannot write manifest in " + dir.string());
    for (const std::string& line : header_lines) manifest << "# " << line << "\n";
    write_split(manifest, dir, train, "train");
    write_split(manifest, dir, test, "test");
    if (!manifest) fail("io-error", "failed writing manifest in " + dir.string());
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) fail("io-error", "no manifest.txt in " + dir.string());

    LoadedDataset out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string name;
        Sample s;
        if (!(is >> name >> s.label >> s.gt_box.x0 >> s.gt_box.y0 >> s.gt_box.x1 >> s.gt_box.y1)) {
            fail("missing-ground-truth", "manifest line " + std::to_string(lineno) +
                                             " lacks label or box fields: \"" + line + "\"");
        }
        s.image = read_ppm(dir / name);
        Dataset& split = name.rfind("test", 0) == 0 ? out.test : out.train;
        split.image_size = static_cast<int>(s.image.dim(0));
        split.num_classes = std::max(split.num_classes, s.label + 1);
        split.samples.push_back(std::move(s));
    }
    // Both splits see the same label universe.
    const int classes = std::max(out.train.num_classes, out.test.num_classes);
    out.train.num_classes = classes;
    out.test.num_classes = classes;
    return out;
}

}  // namespace adllab
