#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adllab/adl.hpp"
#include "adllab/dataset.hpp"
#include "adllab/graph.hpp"
#include "adllab/rng.hpp"
#include "adllab/tensor.hpp"

namespace adllab {

enum class PoolKind { None, Max2x2 };

struct BlockConfig {
    std::string name;  // defaults to "blockN" when left empty
    int out_channels = 8;
    int kernel = 3;
    PoolKind pool = PoolKind::Max2x2;
};

struct HasConfig {
    int patch_size = 8;
    double hide_prob = 0.5;
};

// Small conv classifier: per-block conv+relu(+pool), then GAP straight into a
// single dense layer, whose weight column c is the CAM weight vector for
// class c. ADL / hide-and-seek layers slot in right after a named block.
struct ModelConfig {
    std::vector<BlockConfig> blocks;
    int num_classes = 2;
    int in_channels = 3;
    std::vector<std::pair<std::string, AdlConfig>> adl_insertions;
    std::vector<std::pair<std::string, HasConfig>> has_insertions;

    void assign_default_names();
    void validate() const;  // unique block names, insertions resolve, classes >= 2

    ModelConfig without_insertions() const;

    std::string to_config_text() const;
    static ModelConfig from_config_text(const std::string& text);
};

struct TrainOptions {
    double lr = 0.05;
    double momentum = 0.9;
    int epochs = 10;
    int batch_size = 32;
    // Epochs trained with every inserted layer bypassed before the insertions
    // activate, the classify-then-fine-tune schedule. Counted within `epochs`.
    int warmup_epochs = 0;
    // Learning-rate multiplier for the epochs after warmup.
    double finetune_lr_scale = 1.0;
    // Pins every ADL gate to one branch for the whole run (no gate draws).
    std::optional<GateBranch> pin;
};

struct TrainLog {
    std::vector<double> epoch_loss;      // finite every epoch, else training aborted
    std::vector<double> epoch_accuracy;  // train-phase accuracy
    std::vector<GateTrace> gates;        // one per ADL insertion, in network order
};

class Network {
public:
    static Network build(const ModelConfig& cfg, Rng& rng);

    struct Forward {
        NodeId logits = kInvalidNode;
        // post-block feature maps (post-ADL/HaS when inserted), network order
        std::vector<std::pair<std::string, NodeId>> features;
        std::vector<NodeId> param_nodes;  // parameter leaves, declaration order
        std::vector<std::pair<std::string, GateBranch>> gates;  // this call's draws
    };

    // Builds one forward pass on the given graph. Training needs the gate rng
    // (and the hide-and-seek rng when configured); evaluation ignores both and
    // bypasses every inserted layer. `pin` fixes the gate of every ADL layer;
    // `insertions_active = false` bypasses inserted layers during training
    // (the warmup schedule).
    Forward forward(Graph& g, const Tensor& batch, Phase phase, Rng* gate_rng = nullptr,
                    Rng* has_rng = nullptr, std::optional<GateBranch> pin = std::nullopt,
                    bool insertions_active = true) const;

    // Momentum SGD on softmax cross-entropy. Data order, gate draws and
    // hide-and-seek draws run on streams derived from `rng`, so configs whose
    // inserted layers reduce to no-ops train bit-identically to vanilla.
    // Divergence (non-finite loss) aborts with an error naming the epoch; the
    // out-parameter form leaves the partial log in place for the caller.
    TrainLog train(const Dataset& data, const TrainOptions& opt, Rng& rng);
    void train(const Dataset& data, const TrainOptions& opt, Rng& rng, TrainLog& log);

    struct Prediction {
        int predicted_class = 0;  // argmax, ties broken toward the lowest index
        Tensor logits;            // (num_classes)
        Tensor final_features;    // (H, W, C) last block output in eval mode
    };
    Prediction predict(const Tensor& image) const;  // single (H, W, 3) image

    // CAM weight vector w^c: column c of the dense weights.
    std::vector<double> class_weights(int cls) const;

    const ModelConfig& config() const { return cfg_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    std::vector<Tensor>& parameters() { return params_; }

    // Flat binary container: magic, config echo, parameter tensors in
    // declaration order as little-endian doubles.
    void save(const std::filesystem::path& path) const;
    static Network load(const std::filesystem::path& path);

private:
    ModelConfig cfg_;
    std::vector<Tensor> params_;  // per block: kernel, bias; then dense W, dense b
};

}  // namespace adllab
