#include "adllab/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "adllab/error.hpp"

namespace adllab {

namespace {

unsigned char quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

int read_pnm_token(std::istream& in) {
    // Skips whitespace and '#' comments per the PNM grammar.
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = 0;
    in >> value;
    return value;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3) {
        fail("bad-shape", "write_ppm expects (H,W,3), got " + image.shape_str());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("io-error", "cannot open " + path.string() + " for writing");
    const std::int64_t h = image.dim(0), w = image.dim(1);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (std::int64_t y = 0; y < h; ++y) {
        const double* src = image.data() + y * w * 3;
        for (std::int64_t i = 0; i < w * 3; ++i) row[static_cast<std::size_t>(i)] = quantize(src[i]);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) fail("io-error", "failed writing " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("io-error", "cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") fail("io-error", path.string() + " is not a binary PPM");
    const int w = read_pnm_token(in);
    const int h = read_pnm_token(in);
    const int maxval = read_pnm_token(in);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
        fail("io-error", "unsupported PPM header in " + path.string());
    }
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) fail("io-error", "truncated PPM " + path.string());
    Tensor image({h, w, 3});
    for (std::size_t i = 0; i < raw.size(); ++i) {
        image[static_cast<std::int64_t>(i)] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
    }
    return image;
}

void write_pgm(const std::filesystem::path& path, const Tensor& map) {
    if (map.rank() != 2) fail("bad-shape", "write_pgm expects (H,W), got " + map.shape_str());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("io-error", "cannot open " + path.string() + " for writing");
    const std::int64_t h = map.dim(0), w = map.dim(1);
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = quantize(map[y * w + x]);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) fail("io-error", "failed writing " + path.string());
}

void draw_box(Tensor& image, const BBox& box, double r, double g, double b) {
    const std::int64_t h = image.dim(0), w = image.dim(1);
    auto put = [&](std::int64_t y, std::int64_t x) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        double* px = image.data() + (y * w + x) * 3;
        px[0] = r;
        px[1] = g;
        px[2] = b;
    };
    for (int x = box.x0; x < box.x1; ++x) {
        put(box.y0, x);
        put(box.y1 - 1, x);
    }
    for (int y = box.y0; y < box.y1; ++y) {
        put(y, box.x0);
        put(y, box.x1 - 1);
    }
}

Tensor heatmap_overlay(const Tensor& image, const Tensor& heat, double alpha) {
    if (image.rank() != 3 || heat.rank() != 2 || image.dim(0) != heat.dim(0) ||
        image.dim(1) != heat.dim(1)) {
        fail("bad-shape",
             "overlay needs matching image " + image.shape_str() + " and heatmap " + heat.shape_str());
    }
    Tensor out = image;
    const std::int64_t n = heat.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = std::clamp(heat[i], 0.0, 1.0);
        // cold blue -> hot red ramp
        const double hr = v, hg = 0.1 * v, hb = 1.0 - v;
        out[i * 3 + 0] = (1.0 - alpha) * out[i * 3 + 0] + alpha * hr;
        out[i * 3 + 1] = (1.0 - alpha) * out[i * 3 + 1] + alpha * hg;
        out[i * 3 + 2] = (1.0 - alpha) * out[i * 3 + 2] + alpha * hb;
    }
    return out;
}

}  // namespace adllab
