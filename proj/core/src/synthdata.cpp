#include "adllab/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "adllab/error.hpp"

namespace adllab {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hash_noise(std::uint64_t seed, std::int64_t x, std::int64_t y) {
    Rng r(seed ^ (static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ULL) ^
          (static_cast<std::uint64_t>(y) << 32));
    return r.next_double();
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double rr = 0, gg = 0, bb = 0;
    if (hp < 1) { rr = c; gg = x; }
    else if (hp < 2) { rr = x; gg = c; }
    else if (hp < 3) { gg = c; bb = x; }
    else if (hp < 4) { gg = x; bb = c; }
    else if (hp < 5) { rr = x; bb = c; }
    else { rr = c; bb = x; }
    const double m = v - c;
    r = rr + m;
    g = gg + m;
    b = bb + m;
}

// Signed distance to an axis-aligned rounded rectangle centered at the origin.
double rounded_rect_sdf(double dx, double dy, double hx, double hy, double radius) {
    const double qx = std::fabs(dx) - (hx - radius);
    const double qy = std::fabs(dy) - (hy - radius);
    const double ox = std::max(qx, 0.0);
    const double oy = std::max(qy, 0.0);
    return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0) - radius;
}

std::string num_str(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string range_str(double lo, double hi) {
    return num_str(lo) + ":" + num_str(hi);
}

}  // namespace

void DataSpec::validate() const {
    if (num_classes < 2) fail("config-invalid", "num_classes must be >= 2");
    if (image_size < 8) fail("config-invalid", "image_size must be >= 8");
    if (samples_per_class < 1) fail("config-invalid", "samples_per_class must be >= 1");
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
        fail("config-invalid", "test_fraction must lie in [0, 1)");
    }
    if (noise < 0.0) fail("config-invalid", "noise must be non-negative");
    auto range_ok = [](double lo, double hi) { return lo > 0.0 && hi >= lo; };
    if (!range_ok(head_radius_min, head_radius_max) ||
        !range_ok(body_half_width_min, body_half_width_max) ||
        !range_ok(body_half_height_min, body_half_height_max)) {
        fail("config-invalid", "geometry ranges must be positive with min <= max");
    }
    // A shifted body with the head pointing inward must fit; placement retries
    // handle unlucky directions.
    const double need =
        2.0 * (std::max(body_half_width_max, body_half_height_max) + 1.5 * head_radius_max + 1.0);
    if (need > image_size) {
        fail("geometry-unfit", "body plus head cannot fit a " + std::to_string(image_size) +
                                   "px image with the given ranges");
    }
}

std::vector<std::string> DataSpec::manifest_header() const {
    std::vector<std::string> lines;
    lines.push_back("adllab dataset");
    lines.push_back("num_classes = " + std::to_string(num_classes));
    lines.push_back("image_size = " + std::to_string(image_size));
    lines.push_back("samples_per_class = " + std::to_string(samples_per_class));
    lines.push_back("test_fraction = " + num_str(test_fraction));
    lines.push_back(std::string("background = ") +
                    (background == Background::Plain ? "plain" : "textured"));
    lines.push_back(std::string("class_correlated_background = ") +
                    (class_correlated_background ? "true" : "false"));
    lines.push_back("noise = " + num_str(noise));
    lines.push_back("head_radius = " + range_str(head_radius_min, head_radius_max));
    lines.push_back("body_half_width = " + range_str(body_half_width_min, body_half_width_max));
    lines.push_back("body_half_height = " + range_str(body_half_height_min, body_half_height_max));
    lines.push_back("seed = " + std::to_string(seed));
    return lines;
}

void class_color(int cls, double& r, double& g, double& b) {
    const double hue = std::fmod(0.13 + 0.61803398874989485 * cls, 1.0);
    hsv_to_rgb(hue, 0.85, 0.9, r, g, b);
}

Layout resolve_layout(const DataSpec& spec, Rng& rng) {
    const double s = spec.image_size;
    for (int attempt = 0; attempt < 64; ++attempt) {
        Layout l;
        l.head_radius = rng.next_uniform(spec.head_radius_min, spec.head_radius_max);
        l.body_hx = rng.next_uniform(spec.body_half_width_min, spec.body_half_width_max);
        l.body_hy = rng.next_uniform(spec.body_half_height_min, spec.body_half_height_max);
        l.corner_radius = 0.6 * std::min(l.body_hx, l.body_hy);
        l.body_cx = rng.next_uniform(l.body_hx + 1.0, s - 1.0 - l.body_hx);
        l.body_cy = rng.next_uniform(l.body_hy + 1.0, s - 1.0 - l.body_hy);
        l.body_gray = rng.next_uniform(0.40, 0.50);
        l.texture_seed = rng.next_u64();

        // Head straddles the body boundary along a random direction, centered
        // just inside so the disc bulges out of the silhouette.
        const double angle = rng.next_uniform(0.0, 2.0 * kPi);
        const double cx = std::cos(angle), cy = std::sin(angle);
        const double boundary =
            (l.body_hx * l.body_hy) /
            std::sqrt(l.body_hy * cx * l.body_hy * cx + l.body_hx * cy * l.body_hx * cy);
        const double dist = boundary - 0.4 * l.head_radius;
        l.head_cx = l.body_cx + dist * cx;
        l.head_cy = l.body_cy + dist * cy;

        const double margin = l.head_radius + 1.0;
        if (l.head_cx - margin < 0.0 || l.head_cx + margin > s || l.head_cy - margin < 0.0 ||
            l.head_cy + margin > s) {
            continue;
        }
        return l;
    }
    fail("geometry-unfit", "could not place body and head inside the image after 64 attempts");
}

Sample render_sample(const DataSpec& spec, int cls, const Layout& layout, Rng& noise_rng) {
    const int s = spec.image_size;
    double head_r, head_g, head_b;
    class_color(cls, head_r, head_g, head_b);

    double bg_r = 0.85, bg_g = 0.86, bg_b = 0.88;
    if (spec.class_correlated_background) {
        // Low-saturation tint of the class hue, the co-occurring-background knob.
        bg_r = 0.75 * bg_r + 0.25 * head_r;
        bg_g = 0.75 * bg_g + 0.25 * head_g;
        bg_b = 0.75 * bg_b + 0.25 * head_b;
    }

    Sample sample;
    sample.label = cls;
    sample.image = Tensor({s, s, 3});
    int min_x = s, min_y = s, max_x = -1, max_y = -1;

    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            const double px = x + 0.5, py = y + 0.5;  // pixel centers
            double r = bg_r, g = bg_g, b = bg_b;
            if (spec.background == DataSpec::Background::Textured) {
                const double t = 0.05 * (hash_noise(layout.texture_seed, x, y) - 0.5);
                r += t;
                g += t;
                b += t;
            }

            bool object = false;
            if (rounded_rect_sdf(px - layout.body_cx, py - layout.body_cy, layout.body_hx,
                                 layout.body_hy, layout.corner_radius) <= 0.0) {
                r = g = b = layout.body_gray;
                object = true;
            }
            const double hdx = px - layout.head_cx, hdy = py - layout.head_cy;
            if (hdx * hdx + hdy * hdy <= layout.head_radius * layout.head_radius) {
                r = head_r;
                g = head_g;
                b = head_b;
                object = true;
            }

            double* dst = sample.image.data() + (static_cast<std::int64_t>(y) * s + x) * 3;
            dst[0] = r;
            dst[1] = g;
            dst[2] = b;
            if (object) {
                min_x = std::min(min_x, x);
                min_y = std::min(min_y, y);
                max_x = std::max(max_x, x);
                max_y = std::max(max_y, y);
            }
        }
    }

    if (max_x < 0) fail("geometry-unfit", "rendered sample contains no object pixels");
    sample.gt_box = {min_x, min_y, max_x + 1, max_y + 1};

    if (spec.noise > 0.0) {
        for (double& v : sample.image.values()) {
            v = std::clamp(v + noise_rng.next_uniform(-spec.noise, spec.noise), 0.0, 1.0);
        }
    }
    return sample;
}

GeneratedData generate_dataset(const DataSpec& spec) {
    spec.validate();
    const Rng base(spec.seed);

    const int total = spec.num_classes * spec.samples_per_class;
    std::vector<Sample> all;
    all.reserve(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
        const int cls = i / spec.samples_per_class;
        Rng sample_rng = base.derived(1000 + static_cast<std::uint64_t>(i));
        Rng layout_rng = sample_rng.derived(1);
        Rng noise_rng = sample_rng.derived(2);
        const Layout layout = resolve_layout(spec, layout_rng);
        all.push_back(render_sample(spec, cls, layout, noise_rng));
    }

    // Seed-deterministic stratified split: shuffle each class block, first
    // k_test samples go to the test set.
    GeneratedData out;
    out.train.image_size = out.test.image_size = spec.image_size;
    out.train.num_classes = out.test.num_classes = spec.num_classes;
    Rng split_rng = base.derived(7);
    const int k_test = static_cast<int>(std::lround(spec.test_fraction * spec.samples_per_class));
    for (int cls = 0; cls < spec.num_classes; ++cls) {
        std::vector<int> idx(static_cast<std::size_t>(spec.samples_per_class));
        for (int i = 0; i < spec.samples_per_class; ++i) idx[static_cast<std::size_t>(i)] = cls * spec.samples_per_class + i;
        shuffle(idx, split_rng);
        for (int i = 0; i < spec.samples_per_class; ++i) {
            Sample& s = all[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            (i < k_test ? out.test : out.train).samples.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace adllab
