#include "adllab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "adllab/error.hpp"

namespace adllab {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* pool_name(PoolKind p) { return p == PoolKind::Max2x2 ? "max2x2" : "none"; }

PoolKind pool_from_name(const std::string& s) {
    if (s == "max2x2") return PoolKind::Max2x2;
    if (s == "none") return PoolKind::None;
    fail("config-invalid", "unknown pool kind \"" + s + "\" (expected max2x2 or none)");
}

}  // namespace

void ModelConfig::assign_default_names() {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].name.empty()) blocks[i].name = "block" + std::to_string(i + 1);
    }
}

void ModelConfig::validate() const {
    if (blocks.empty()) fail("config-invalid", "model needs at least one block");
    if (num_classes < 2) fail("config-invalid", "num_classes must be >= 2");
    if (in_channels < 1) fail("config-invalid", "in_channels must be >= 1");
    std::set<std::string> names;
    for (const BlockConfig& b : blocks) {
        if (b.name.empty()) fail("config-invalid", "block name missing (call assign_default_names)");
        if (!names.insert(b.name).second) {
            fail("config-invalid", "duplicate block name \"" + b.name + "\"");
        }
        if (b.out_channels < 1) fail("config-invalid", "block " + b.name + ": out_channels must be >= 1");
        if (b.kernel < 1 || b.kernel % 2 == 0) {
            fail("config-invalid", "block " + b.name + ": kernel must be odd and positive");
        }
    }
    std::vector<std::string> unknown;
    for (const auto& [name, cfg] : adl_insertions) {
        cfg.validate();
        if (!names.count(name)) unknown.push_back(name);
    }
    for (const auto& [name, cfg] : has_insertions) {
        if (cfg.patch_size < 1) fail("config-invalid", "hide-and-seek patch size must be >= 1");
        if (cfg.hide_prob < 0.0 || cfg.hide_prob > 1.0) {
            fail("config-invalid", "hide_prob must lie in [0, 1]");
        }
        if (!names.count(name)) unknown.push_back(name);
    }
    if (!unknown.empty()) {
        std::string list;
        for (const std::string& n : unknown) list += (list.empty() ? "" : ", ") + n;
        fail("bad-insertion", "insertion names do not match any block: " + list);
    }
}

ModelConfig ModelConfig::without_insertions() const {
    ModelConfig c = *this;
    c.adl_insertions.clear();
    c.has_insertions.clear();
    return c;
}

std::string ModelConfig::to_config_text() const {
    std::ostringstream os;
    for (const BlockConfig& b : blocks) {
        os << "block = " << b.name << " " << b.out_channels << " " << b.kernel << " "
           << pool_name(b.pool) << "\n";
    }
    os << "num_classes = " << num_classes << "\n";
    os << "in_channels = " << in_channels << "\n";
    for (const auto& [name, a] : adl_insertions) {
        os << "adl_insert = " << name << " " << fmt_double(a.drop_rate) << " "
           << fmt_double(a.gamma) << " " << (a.drop_enabled ? 1 : 0) << " "
           << (a.importance_enabled ? 1 : 0) << " " << (a.normalize_attention ? 1 : 0) << "\n";
    }
    for (const auto& [name, h] : has_insertions) {
        os << "has_insert = " << name << " " << h.patch_size << " " << fmt_double(h.hide_prob)
           << "\n";
    }
    return os.str();
}

ModelConfig ModelConfig::from_config_text(const std::string& text) {
    ModelConfig cfg;
    cfg.blocks.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("config-invalid", "bad model config line: " + line);
        std::istringstream key_in(line.substr(0, eq));
        std::string key;
        key_in >> key;
        std::istringstream val(line.substr(eq + 1));
        if (key == "block") {
            BlockConfig b;
            std::string pool;
            if (!(val >> b.name >> b.out_channels >> b.kernel >> pool)) {
                fail("config-invalid", "bad block line: " + line);
            }
            b.pool = pool_from_name(pool);
            cfg.blocks.push_back(std::move(b));
        } else if (key == "num_classes") {
            val >> cfg.num_classes;
        } else if (key == "in_channels") {
            val >> cfg.in_channels;
        } else if (key == "adl_insert") {
            std::string name;
            AdlConfig a;
            int de = 1, ie = 1, na = 0;
            if (!(val >> name >> a.drop_rate >> a.gamma >> de >> ie >> na)) {
                fail("config-invalid", "bad adl_insert line: " + line);
            }
            a.drop_enabled = de != 0;
            a.importance_enabled = ie != 0;
            a.normalize_attention = na != 0;
            cfg.adl_insertions.emplace_back(std::move(name), a);
        } else if (key == "has_insert") {
            std::string name;
            HasConfig h;
            if (!(val >> name >> h.patch_size >> h.hide_prob)) {
                fail("config-invalid", "bad has_insert line: " + line);
            }
            cfg.has_insertions.emplace_back(std::move(name), h);
        } else {
            fail("config-invalid", "unknown model config key \"" + key + "\"");
        }
    }
    cfg.validate();
    return cfg;
}

Network Network::build(const ModelConfig& cfg, Rng& rng) {
    ModelConfig c = cfg;
    c.assign_default_names();
    c.validate();

    Network net;
    net.cfg_ = std::move(c);

    // He-style init: zero-mean normal with sd sqrt(2 / fan-in), zero biases.
    auto normal_tensor = [&rng](std::vector<std::int64_t> shape, double sd) {
        Tensor t(std::move(shape));
        for (double& v : t.values()) v = rng.next_normal() * sd;
        return t;
    };

    int channels = net.cfg_.in_channels;
    for (const BlockConfig& b : net.cfg_.blocks) {
        const double fan_in = static_cast<double>(b.kernel) * b.kernel * channels;
        net.params_.push_back(
            normal_tensor({b.kernel, b.kernel, channels, b.out_channels}, std::sqrt(2.0 / fan_in)));
        net.params_.push_back(Tensor({b.out_channels}));
        channels = b.out_channels;
    }
    net.params_.push_back(
        normal_tensor({channels, net.cfg_.num_classes}, std::sqrt(2.0 / channels)));
    net.params_.push_back(Tensor({net.cfg_.num_classes}));
    return net;
}

Network::Forward Network::forward(Graph& g, const Tensor& batch, Phase phase, Rng* gate_rng,
                                  Rng* has_rng, std::optional<GateBranch> pin,
                                  bool insertions_active) const {
    if (batch.rank() != 4 || batch.dim(3) != cfg_.in_channels) {
        fail("shape-mismatch", "forward expects (B,H,W," + std::to_string(cfg_.in_channels) +
                                   ") input, got " + batch.shape_str());
    }
    if (phase == Phase::Eval && pin.has_value()) {
        fail("pin-in-eval", "gate pinning is a training-phase control");
    }

    Forward fw;
    fw.param_nodes.reserve(params_.size());
    for (const Tensor& p : params_) fw.param_nodes.push_back(g.parameter(p));

    // Center pixel inputs so the first conv sees zero-mean features.
    Tensor centered = batch;
    for (double& v : centered.values()) v -= 0.5;
    NodeId x = g.constant(std::move(centered));
    std::size_t pi = 0;
    for (const BlockConfig& b : cfg_.blocks) {
        const NodeId kernel = fw.param_nodes[pi++];
        const NodeId bias = fw.param_nodes[pi++];
        x = conv2d(g, x, kernel, bias, 1, b.kernel / 2);
        x = relu(g, x);
        if (b.pool == PoolKind::Max2x2) x = max_pool_2x2(g, x);

        if (phase == Phase::Train && insertions_active) {
            for (const auto& [name, acfg] : cfg_.adl_insertions) {
                if (name != b.name) continue;
                if (gate_rng == nullptr && !pin.has_value()) {
                    fail("bad-argument", "training forward with ADL needs a gate rng");
                }
                Rng pinned_unused(0);  // never drawn from: pin bypasses the gate
                AdlOutcome outcome =
                    adl_forward(g, x, acfg, gate_rng ? *gate_rng : pinned_unused, phase, pin);
                x = outcome.output;
                if (outcome.branch) fw.gates.emplace_back(name, *outcome.branch);
            }
            for (const auto& [name, hcfg] : cfg_.has_insertions) {
                if (name != b.name) continue;
                if (has_rng == nullptr) {
                    fail("bad-argument", "training forward with hide-and-seek needs an rng");
                }
                x = has_patch_drop(g, x, hcfg.patch_size, hcfg.hide_prob, *has_rng, phase);
            }
        }
        fw.features.emplace_back(b.name, x);
    }

    const NodeId pooled = global_avg_pool(g, x);
    fw.logits = dense(g, pooled, fw.param_nodes[pi], fw.param_nodes[pi + 1]);
    return fw;
}

namespace {

Tensor make_batch(const Dataset& data, const std::vector<std::size_t>& order, std::size_t begin,
                  std::size_t end) {
    const Tensor& first = data.samples[order[begin]].image;
    const std::int64_t h = first.dim(0), w = first.dim(1), c = first.dim(2);
    Tensor batch({static_cast<std::int64_t>(end - begin), h, w, c});
    const std::int64_t stride = h * w * c;
    for (std::size_t i = begin; i < end; ++i) {
        const Tensor& img = data.samples[order[i]].image;
        if (img.size() != stride) {
            fail("shape-mismatch", "dataset images disagree in shape: " + img.shape_str());
        }
        std::memcpy(batch.data() + static_cast<std::int64_t>(i - begin) * stride, img.data(),
                    static_cast<std::size_t>(stride) * sizeof(double));
    }
    return batch;
}

int argmax_row(const Tensor& logits, std::int64_t row) {
    const std::int64_t k = logits.dim(1);
    int best = 0;
    double bv = logits[row * k];
    for (std::int64_t j = 1; j < k; ++j) {
        if (logits[row * k + j] > bv) {
            bv = logits[row * k + j];
            best = static_cast<int>(j);
        }
    }
    return best;
}

}  // namespace

void Network::train(const Dataset& data, const TrainOptions& opt, Rng& rng, TrainLog& log) {
    if (data.empty()) fail("config-invalid", "training dataset is empty");
    if (opt.lr < 0.0) fail("config-invalid", "learning rate must be non-negative");
    if (opt.epochs < 1 || opt.batch_size < 1) {
        fail("config-invalid", "epochs and batch_size must be >= 1");
    }
    if (opt.warmup_epochs < 0 || opt.warmup_epochs > opt.epochs) {
        fail("config-invalid", "warmup_epochs must lie in [0, epochs]");
    }
    if (opt.finetune_lr_scale <= 0.0) {
        fail("config-invalid", "finetune_lr_scale must be positive");
    }

    // Separate streams so gate/mask draws never perturb the data order: a
    // config whose insertions are no-ops trains identically to vanilla.
    Rng shuffle_rng = rng.derived(1);
    Rng gate_rng = rng.derived(2);
    Rng has_rng = rng.derived(3);

    log.gates.clear();  // filled lazily in network order once gates start drawing

    std::vector<Tensor> velocity;
    velocity.reserve(params_.size());
    for (const Tensor& p : params_) velocity.emplace_back(p.shape());

    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const bool active = epoch >= opt.warmup_epochs;
        const double lr = active ? opt.lr * opt.finetune_lr_scale : opt.lr;
        shuffle(order, shuffle_rng);
        double loss_sum = 0.0;
        std::size_t steps = 0, correct = 0;

        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(opt.batch_size)) {
            const std::size_t end = std::min(n, begin + static_cast<std::size_t>(opt.batch_size));
            std::vector<int> labels;
            labels.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) labels.push_back(data.samples[order[i]].label);

            Graph g;
            Forward fw = forward(g, make_batch(data, order, begin, end), Phase::Train, &gate_rng,
                                 &has_rng, opt.pin, active);
            const NodeId loss_node = softmax_cross_entropy(g, fw.logits, labels);
            const double loss = g.value(loss_node)[0];

            if (log.gates.empty() && !fw.gates.empty()) {
                for (const auto& [name, branch] : fw.gates) log.gates.push_back({name, {}});
            }
            for (std::size_t j = 0; j < fw.gates.size(); ++j) {
                log.gates[j].branches.push_back(fw.gates[j].second);
            }
            if (!std::isfinite(loss)) {
                fail("divergence", "non-finite loss at epoch " + std::to_string(epoch));
            }
            loss_sum += loss;
            ++steps;

            const Tensor& logits = g.value(fw.logits);
            for (std::size_t i = begin; i < end; ++i) {
                if (argmax_row(logits, static_cast<std::int64_t>(i - begin)) ==
                    data.samples[order[i]].label) {
                    ++correct;
                }
            }

            const Gradients grads = backward(g, loss_node);
            for (std::size_t p = 0; p < params_.size(); ++p) {
                const Tensor& dg = grads.at(fw.param_nodes[p]);
                Tensor& v = velocity[p];
                Tensor& theta = params_[p];
                for (std::int64_t j = 0; j < theta.size(); ++j) {
                    v[j] = opt.momentum * v[j] + dg[j];
                    theta[j] -= lr * v[j];
                }
            }
        }

        log.epoch_loss.push_back(loss_sum / static_cast<double>(steps));
        log.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(n));
    }
}

TrainLog Network::train(const Dataset& data, const TrainOptions& opt, Rng& rng) {
    TrainLog log;
    train(data, opt, rng, log);
    return log;
}

Network::Prediction Network::predict(const Tensor& image) const {
    if (image.rank() != 3) {
        fail("shape-mismatch", "predict expects a single (H,W,C) image, got " + image.shape_str());
    }
    Tensor batch({1, image.dim(0), image.dim(1), image.dim(2)},
                 {image.values().begin(), image.values().end()});
    Graph g;
    const Forward fw = forward(g, batch, Phase::Eval);

    Prediction out;
    out.logits = slice_batch(g.value(fw.logits), 0);
    out.predicted_class = 0;
    for (std::int64_t j = 1; j < out.logits.size(); ++j) {
        if (out.logits[j] > out.logits[out.predicted_class]) {
            out.predicted_class = static_cast<int>(j);
        }
    }
    out.final_features = slice_batch(g.value(fw.features.back().second), 0);
    return out;
}

std::vector<double> Network::class_weights(int cls) const {
    if (cls < 0 || cls >= cfg_.num_classes) {
        fail("bad-argument", "class " + std::to_string(cls) + " out of range");
    }
    const Tensor& w = params_[params_.size() - 2];  // (C_final, num_classes)
    std::vector<double> col(static_cast<std::size_t>(w.dim(0)));
    for (std::int64_t f = 0; f < w.dim(0); ++f) {
        col[static_cast<std::size_t>(f)] = w[f * w.dim(1) + cls];
    }
    return col;
}

namespace {

constexpr char kModelMagic[] = "ADLLABNET1\n";

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void Network::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("io-error", "cannot open " + path.string() + " for writing");
    out.write(kModelMagic, sizeof(kModelMagic) - 1);
    const std::string cfg = cfg_.to_config_text();
    write_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    write_u32(out, static_cast<std::uint32_t>(params_.size()));
    for (const Tensor& p : params_) {
        write_u32(out, static_cast<std::uint32_t>(p.rank()));
        for (std::int64_t d : p.shape()) write_u32(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(p.data()),
                  static_cast<std::streamsize>(p.size() * sizeof(double)));
    }
    if (!out) fail("io-error", "failed writing " + path.string());
}

Network Network::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("io-error", "cannot open " + path.string());
    char magic[sizeof(kModelMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
        fail("bad-model", path.string() + " is not a model file");
    }
    const std::uint32_t cfg_len = read_u32(in);
    std::string cfg_text(cfg_len, '\0');
    in.read(cfg_text.data(), cfg_len);

    Network net;
    net.cfg_ = ModelConfig::from_config_text(cfg_text);

    const std::uint32_t count = read_u32(in);
    net.params_.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t rank = read_u32(in);
        std::vector<std::int64_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = read_u32(in);
        Tensor t(std::move(shape));
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        net.params_.push_back(std::move(t));
    }
    if (!in) fail("bad-model", "truncated model file " + path.string());
    return net;
}

}  // namespace adllab
