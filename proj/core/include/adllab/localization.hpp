#pragma once

#include <span>
#include <string>
#include <vector>

#include "adllab/bbox.hpp"
#include "adllab/dataset.hpp"
#include "adllab/model.hpp"
#include "adllab/tensor.hpp"

namespace adllab {

struct Heatmap {
    Tensor values;  // (H, W)
    bool normalized = false;
};

// Class activation map: out(i,j) = sum_c w_c * features(i,j,c). Unnormalized.
Heatmap cam_heatmap(const Tensor& features, std::span<const double> class_weights);

// Min-max normalization to [0, 1] (an all-equal map becomes all-zero),
// followed by bilinear upsampling with half-pixel-center alignment.
Heatmap normalize_and_upsample(const Heatmap& h, int target_h, int target_w);

struct ExtractedBox {
    BBox box;
    bool empty_foreground = false;  // all-zero heatmap: full-image box, flagged
};

// Binarize at theta_box * max, take the largest 8-connected component, return
// its tight box. Component-area ties go to the first component in scan order.
ExtractedBox extract_bbox(const Heatmap& h, double theta_box);

struct ImageRecord {
    int index = 0;
    int predicted = 0;
    bool class_correct = false;
    double iou_gt = 0.0;         // IoU of the ground-truth-class CAM box
    double iou_pred = 0.0;       // IoU of the predicted-class CAM box
    bool gt_known_correct = false;
    bool loc_correct = false;    // class correct AND predicted-class IoU >= 0.5
};

struct MetricsReport {
    double top1_clas = 0.0;
    double gt_known_loc = 0.0;
    double top1_loc = 0.0;
    int num_images = 0;
    double theta_box = 0.0;
    std::vector<ImageRecord> records;

    std::string to_text() const;          // key:value lines
    std::string records_to_text() const;  // one machine-readable row per image
    static MetricsReport from_text(const std::string& report_text);
};

// Rate aggregation over per-image records: Top-1 Clas counts class hits,
// GT-known Loc counts IoU >= 0.5 for the ground-truth-class box, Top-1 Loc
// counts images where both hold.
MetricsReport aggregate_records(std::vector<ImageRecord> records, double theta_box);

// Eval-mode pass over a dataset: the ground-truth-class CAM scores GT-known
// Loc, the predicted-class CAM plus class correctness scores Top-1 Loc, both
// at IoU >= 0.5. Per-image work fans out over `threads` when > 1.
MetricsReport evaluate(const Network& net, const Dataset& data, double theta_box,
                       int threads = 1);

}  // namespace adllab
