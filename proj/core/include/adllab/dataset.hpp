#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "adllab/bbox.hpp"
#include "adllab/tensor.hpp"

namespace adllab {

struct Sample {
    Tensor image;  // (H, W, 3), values in [0, 1]
    int label = 0;
    BBox gt_box;   // tight box over all object pixels
};

struct Dataset {
    int image_size = 0;
    int num_classes = 0;
    std::vector<Sample> samples;

    bool empty() const { return samples.empty(); }
    std::size_t size() const { return samples.size(); }
};

// Directory layout: one binary PPM per image (train_NNNN.ppm / test_NNNN.ppm)
// plus manifest.txt holding "# key = value" header lines followed by one
// "filename label x0 y0 x1 y1" line per image.
void save_dataset(const std::filesystem::path& dir, const Dataset& train, const Dataset& test,
                  const std::vector<std::string>& header_lines);

struct LoadedDataset {
    Dataset train;
    Dataset test;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace adllab
