#include "adllab/localization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "adllab/error.hpp"

namespace adllab {

Heatmap cam_heatmap(const Tensor& features, std::span<const double> class_weights) {
    if (features.rank() != 3) {
        fail("shape-mismatch", "cam_heatmap expects (H,W,C) features, got " + features.shape_str());
    }
    const std::int64_t h = features.dim(0), w = features.dim(1), c = features.dim(2);
    if (static_cast<std::int64_t>(class_weights.size()) != c) {
        fail("shape-mismatch", "weight length " + std::to_string(class_weights.size()) +
                                   " does not match channels of " + features.shape_str());
    }
    Heatmap out;
    out.values = Tensor({h, w});
    const double* fp = features.data();
    for (std::int64_t i = 0; i < h * w; ++i) {
        double s = 0.0;
        for (std::int64_t k = 0; k < c; ++k) s += class_weights[static_cast<std::size_t>(k)] * fp[i * c + k];
        out.values[i] = s;
    }
    return out;
}

Heatmap normalize_and_upsample(const Heatmap& h, int target_h, int target_w) {
    const std::int64_t sh = h.values.dim(0), sw = h.values.dim(1);
    if (target_h < sh || target_w < sw) {
        fail("bad-argument", "upsample target smaller than heatmap " + h.values.shape_str());
    }

    Tensor norm(h.values.shape());
    const double lo = h.values.min_value();
    const double hi = h.values.max_value();
    if (hi > lo) {
        const double inv = 1.0 / (hi - lo);
        for (std::int64_t i = 0; i < norm.size(); ++i) norm[i] = (h.values[i] - lo) * inv;
    }
    // else: all-equal map stays all-zero

    Heatmap out;
    out.normalized = true;
    if (target_h == sh && target_w == sw) {
        out.values = std::move(norm);
        return out;
    }

    out.values = Tensor({target_h, target_w});
    const double sy = static_cast<double>(sh) / target_h;
    const double sx = static_cast<double>(sw) / target_w;
    for (int y = 0; y < target_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const std::int64_t y0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(fy)), 0, sh - 1);
        const std::int64_t y1 = std::min<std::int64_t>(y0 + 1, sh - 1);
        const double wy = std::clamp(fy - static_cast<double>(y0), 0.0, 1.0);
        for (int x = 0; x < target_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const std::int64_t x0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(fx)), 0, sw - 1);
            const std::int64_t x1 = std::min<std::int64_t>(x0 + 1, sw - 1);
            const double wx = std::clamp(fx - static_cast<double>(x0), 0.0, 1.0);
            const double a = norm[y0 * sw + x0], b = norm[y0 * sw + x1];
            const double c = norm[y1 * sw + x0], d = norm[y1 * sw + x1];
            out.values[static_cast<std::int64_t>(y) * target_w + x] =
                (1.0 - wy) * ((1.0 - wx) * a + wx * b) + wy * ((1.0 - wx) * c + wx * d);
        }
    }
    return out;
}

ExtractedBox extract_bbox(const Heatmap& h, double theta_box) {
    if (theta_box <= 0.0 || theta_box >= 1.0) {
        fail("bad-argument", "theta_box must lie in (0, 1), got " + std::to_string(theta_box));
    }
    const std::int64_t H = h.values.dim(0), W = h.values.dim(1);
    const double hi = h.values.max_value();

    ExtractedBox result;
    if (hi <= 0.0) {
        result.box = {0, 0, static_cast<int>(W), static_cast<int>(H)};
        result.empty_foreground = true;
        return result;
    }
    const double threshold = theta_box * hi;

    // Flood fill over the strictly-above-threshold foreground, 8-connectivity;
    // the largest component wins, first in scan order on ties.
    std::vector<std::int8_t> fg(static_cast<std::size_t>(H * W), 0);
    for (std::int64_t i = 0; i < H * W; ++i) fg[static_cast<std::size_t>(i)] = h.values[i] > threshold ? 1 : 0;

    std::vector<std::int32_t> label(static_cast<std::size_t>(H * W), 0);
    std::vector<std::int64_t> stack;
    std::int32_t next_label = 0;
    std::int64_t best_area = 0;
    BBox best{};

    for (std::int64_t start = 0; start < H * W; ++start) {
        if (!fg[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)]) continue;
        ++next_label;
        stack.assign(1, start);
        label[static_cast<std::size_t>(start)] = next_label;
        std::int64_t area = 0;
        BBox box{static_cast<int>(W), static_cast<int>(H), 0, 0};
        while (!stack.empty()) {
            const std::int64_t p = stack.back();
            stack.pop_back();
            const std::int64_t y = p / W, x = p % W;
            ++area;
            box.x0 = std::min(box.x0, static_cast<int>(x));
            box.y0 = std::min(box.y0, static_cast<int>(y));
            box.x1 = std::max(box.x1, static_cast<int>(x) + 1);
            box.y1 = std::max(box.y1, static_cast<int>(y) + 1);
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const std::int64_t ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                    const std::int64_t q = ny * W + nx;
                    if (fg[static_cast<std::size_t>(q)] && !label[static_cast<std::size_t>(q)]) {
                        label[static_cast<std::size_t>(q)] = next_label;
                        stack.push_back(q);
                    }
                }
            }
        }
        if (area > best_area) {
            best_area = area;
            best = box;
        }
    }

    if (best_area == 0) {
        result.box = {0, 0, static_cast<int>(W), static_cast<int>(H)};
        result.empty_foreground = true;
        return result;
    }
    result.box = best;
    return result;
}

std::string MetricsReport::to_text() const {
    char buf[64];
    std::ostringstream os;
    auto line = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        os << key << ": " << buf << "\n";
    };
    line("top1_clas", top1_clas);
    line("gt_known_loc", gt_known_loc);
    line("top1_loc", top1_loc);
    os << "num_images: " << num_images << "\n";
    line("theta_box", theta_box);
    return os.str();
}

std::string MetricsReport::records_to_text() const {
    std::ostringstream os;
    os << "# index predicted class_correct iou_gt gt_known_correct iou_pred loc_correct\n";
    char buf[32];
    for (const ImageRecord& r : records) {
        std::snprintf(buf, sizeof(buf), "%.6f", r.iou_gt);
        os << r.index << " " << r.predicted << " " << (r.class_correct ? 1 : 0) << " " << buf;
        std::snprintf(buf, sizeof(buf), "%.6f", r.iou_pred);
        os << " " << (r.gt_known_correct ? 1 : 0) << " " << buf << " " << (r.loc_correct ? 1 : 0)
           << "\n";
    }
    return os.str();
}

MetricsReport MetricsReport::from_text(const std::string& report_text) {
    MetricsReport r;
    std::istringstream is(report_text);
    std::string line;
    while (std::getline(is, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = line.substr(0, colon);
        const double value = std::stod(line.substr(colon + 1));
        if (key == "top1_clas") r.top1_clas = value;
        else if (key == "gt_known_loc") r.gt_known_loc = value;
        else if (key == "top1_loc") r.top1_loc = value;
        else if (key == "num_images") r.num_images = static_cast<int>(value);
        else if (key == "theta_box") r.theta_box = value;
    }
    return r;
}

namespace {

ImageRecord evaluate_one(const Network& net, const Sample& sample, int index, double theta_box) {
    const auto pred = net.predict(sample.image);
    const int img_h = static_cast<int>(sample.image.dim(0));
    const int img_w = static_cast<int>(sample.image.dim(1));

    auto box_for_class = [&](int cls) {
        const std::vector<double> w = net.class_weights(cls);
        const Heatmap cam = cam_heatmap(pred.final_features, w);
        const Heatmap up = normalize_and_upsample(cam, img_h, img_w);
        return extract_bbox(up, theta_box).box;
    };

    ImageRecord rec;
    rec.index = index;
    rec.predicted = pred.predicted_class;
    rec.class_correct = pred.predicted_class == sample.label;
    rec.iou_gt = iou(box_for_class(sample.label), sample.gt_box);
    rec.gt_known_correct = rec.iou_gt >= 0.5;
    if (rec.class_correct) {
        rec.iou_pred = rec.iou_gt;  // same class, same CAM
    } else {
        rec.iou_pred = iou(box_for_class(pred.predicted_class), sample.gt_box);
    }
    rec.loc_correct = rec.class_correct && rec.iou_pred >= 0.5;
    return rec;
}

}  // namespace

MetricsReport aggregate_records(std::vector<ImageRecord> records, double theta_box) {
    if (records.empty()) fail("missing-ground-truth", "no records to aggregate");
    MetricsReport report;
    report.num_images = static_cast<int>(records.size());
    report.theta_box = theta_box;
    int clas = 0, gt_known = 0, loc = 0;
    for (const ImageRecord& r : records) {
        clas += r.class_correct ? 1 : 0;
        gt_known += r.gt_known_correct ? 1 : 0;
        loc += r.loc_correct ? 1 : 0;
    }
    const double n = static_cast<double>(report.num_images);
    report.top1_clas = clas / n;
    report.gt_known_loc = gt_known / n;
    report.top1_loc = loc / n;
    report.records = std::move(records);
    return report;
}

MetricsReport evaluate(const Network& net, const Dataset& data, double theta_box, int threads) {
    if (data.empty()) fail("missing-ground-truth", "evaluation dataset is empty");

    std::vector<ImageRecord> records(data.size());
    const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(data.size())));
    auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            records[i] = evaluate_one(net, data.samples[i], static_cast<int>(i), theta_box);
        }
    };
    if (n_threads == 1) {
        worker(0, data.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (data.size() + n_threads - 1) / static_cast<std::size_t>(n_threads);
        for (int t = 0; t < n_threads; ++t) {
            const std::size_t begin = static_cast<std::size_t>(t) * chunk;
            const std::size_t end = std::min(data.size(), begin + chunk);
            if (begin < end) pool.emplace_back(worker, begin, end);
        }
        for (std::thread& t : pool) t.join();
    }
    return aggregate_records(std::move(records), theta_box);
}

}  // namespace adllab
