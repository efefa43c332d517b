#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adllab/dataset.hpp"
#include "adllab/rng.hpp"

namespace adllab {

// Part-structured synthetic imagery: every sample is a large gray rounded
// rectangle ("body", identical distribution across classes) with a small
// attached disc ("head") whose hue encodes the class. The ground-truth box
// covers the whole object, so a classifier that keys only on the head scores
// poorly on localization. Default geometry keeps the head at or below 20% of
// the object box area.
struct DataSpec {
    int num_classes = 4;
    int image_size = 32;
    int samples_per_class = 250;
    double test_fraction = 0.2;

    double head_radius_min = 2.0;
    double head_radius_max = 2.8;
    double body_half_width_min = 8.0;
    double body_half_width_max = 10.0;
    double body_half_height_min = 5.0;
    double body_half_height_max = 6.5;

    enum class Background { Plain, Textured };
    Background background = Background::Plain;
    // Tints the background with the class hue, for studying what happens when
    // backgrounds co-occur with classes. Off by default.
    bool class_correlated_background = false;

    double noise = 0.02;  // additive uniform pixel noise amplitude
    std::uint64_t seed = 1;

    void validate() const;
    std::vector<std::string> manifest_header() const;
};

// Resolved per-sample geometry, class-independent by construction.
struct Layout {
    double body_cx = 0, body_cy = 0;
    double body_hx = 0, body_hy = 0;
    double corner_radius = 0;
    double head_cx = 0, head_cy = 0;
    double head_radius = 0;
    double body_gray = 0.45;
    std::uint64_t texture_seed = 0;
};

Layout resolve_layout(const DataSpec& spec, Rng& rng);

// Deterministic rasterization with binary coverage; the ground-truth box is
// the tight box of the rendered object mask.
Sample render_sample(const DataSpec& spec, int cls, const Layout& layout, Rng& noise_rng);

// Head color for a class (distinct hues, golden-ratio spacing).
void class_color(int cls, double& r, double& g, double& b);

struct GeneratedData {
    Dataset train;
    Dataset test;
};

// Fully deterministic in (spec, spec.seed); per-sample generators are derived
// SplitMix64 streams, so samples may be rendered independently.
GeneratedData generate_dataset(const DataSpec& spec);

}  // namespace adllab
