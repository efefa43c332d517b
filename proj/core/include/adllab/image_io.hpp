#pragma once

#include <filesystem>

#include "adllab/bbox.hpp"
#include "adllab/tensor.hpp"

namespace adllab {

// Binary portable pixmap / graymap I/O. Values in [0, 1] map to 8-bit
// channels on write; reads divide by the file maxval.
void write_ppm(const std::filesystem::path& path, const Tensor& image);  // (H, W, 3)
Tensor read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Tensor& map);    // (H, W)

// One-pixel-wide rectangle outline for [x0,x1) x [y0,y1), clipped to bounds.
void draw_box(Tensor& image, const BBox& box, double r, double g, double b);

// Input image blended with a heatmap rendered into the red-blue axis, the
// Fig-style "overlap" view. heat must be (H, W) in [0, 1].
Tensor heatmap_overlay(const Tensor& image, const Tensor& heat, double alpha = 0.5);

}  // namespace adllab
