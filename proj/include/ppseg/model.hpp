#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ppseg/config.hpp"
#include "ppseg/feature_propagation.hpp"
#include "ppseg/grouping.hpp"
#include "ppseg/postprocess.hpp"
#include "ppseg/range_projection.hpp"
#include "ppseg/sampling.hpp"
#include "ppseg/set_abstraction.hpp"

namespace ppseg {

struct StageConfig {
    SampleGrid grid;
    GroupingConfig grouping;
    SaStageConfig sa;
    FpStageConfig fp;
};

// Full encoder-decoder description. Resolves to/from the flat key=value
// config; the serialized form is also the checkpoint metadata.
struct ModelConfig {
    ProjectionConfig proj;
    int n_classes = 0;
    uint64_t seed = 1;
    std::vector<StageConfig> stages;
    MlpSpec head;

    static ModelConfig from_config(const ConfigFile& cfg);
    ConfigFile to_config() const;
    void validate() const;

    // stage input feature widths (without the 3 xyz channels)
    std::vector<int64_t> encoder_widths() const;
};

// Fully resolved default architecture: `stages` sampling stages halving both
// grid axes, widths base*2^i, radii 0.5*2^i, the requested variant wired into
// both the encoder and the decoder heads.
ModelConfig make_model_config(SaVariant variant, int height, int width, int n_classes,
                              int n_stages, int64_t base_width, int k, uint64_t seed);

struct TrainConfig {
    int epochs = 1;
    double lr = 0.05;
    double momentum = 0.9;
    uint64_t seed = 1;
    bool augment_azimuth = false;
    int max_steps = 0; // 0 = no cap
};

struct TrainStats {
    std::vector<double> losses; // one entry per step
    int64_t steps = 0;
};

class Model {
public:
    explicit Model(const ModelConfig& cfg);

    struct Forward {
        RangeImage image;
        Tensor logits; // (H, W, n_classes)
        std::vector<int32_t> pixel_pred;
        std::vector<int32_t> point_pred; // kIgnoreClass only for skipped points
    };

    // project -> [sample, group, SA]*n -> [interpolate, concat, FP]*n -> head.
    Forward forward(const PointCloud& cloud,
                    const std::optional<KnnConfig>& knn = std::nullopt) const;

    // Tape-aware core on an already projected scan.
    Tensor forward_logits(const RangeImage& image) const;

    // Per-scan SGD on masked cross entropy. Scans iterate in order each
    // epoch; a non-finite loss aborts by restoring the pre-step parameters
    // and rethrowing (the caller decides where to write the checkpoint).
    TrainStats train(const std::vector<PointCloud>& scans, const TrainConfig& tc);

    std::vector<Tensor> parameters() const;
    const ModelConfig& config() const { return cfg_; }

    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    ModelConfig cfg_;
    std::vector<SaStage> sa_;
    std::vector<FpStage> fp_;
    Mlp head_;
};

} // namespace ppseg
