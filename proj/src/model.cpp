#include "ppseg/model.hpp"

#include <cmath>
#include <sstream>

#include "ppseg/checkpoint.hpp"
#include "ppseg/optim.hpp"

namespace ppseg {
namespace {

constexpr double kPi = 3.14159265358979323846;

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t derive_seed(uint64_t model_seed, const std::string& net_name) {
    return model_seed ^ fnv1a64(net_name);
}

std::string widths_to_user_list(const std::vector<int64_t>& widths) {
    // drop the derived input width
    std::ostringstream os;
    for (size_t i = 1; i < widths.size(); ++i) {
        if (i > 1) os << ",";
        os << widths[i];
    }
    return os.str();
}

MlpSpec relu_mlp(std::vector<int64_t> widths, uint64_t seed) {
    return MlpSpec::make(std::move(widths), /*relu_last=*/true, seed);
}

MlpSpec weightnet_spec(int64_t c_mid, uint64_t seed) {
    return MlpSpec::make({3, 16, c_mid}, /*relu_last=*/false, seed);
}

MlpSpec densitynet_spec(uint64_t seed) {
    return MlpSpec::make({1, 8, 1}, /*relu_last=*/false, seed);
}

SaStageConfig make_sa_config(SaVariant variant, int64_t in_channels,
                             const std::vector<int64_t>& out_widths, int64_t c_mid,
                             uint64_t model_seed, const std::string& prefix) {
    SaStageConfig sa;
    sa.variant = variant;
    sa.c_mid = c_mid;
    if (variant == SaVariant::pointnet) {
        std::vector<int64_t> w{in_channels};
        w.insert(w.end(), out_widths.begin(), out_widths.end());
        sa.mlp = relu_mlp(std::move(w), derive_seed(model_seed, prefix + ".mlp"));
        return sa;
    }
    if (out_widths.size() < 2) {
        throw ConfigError(prefix + ": soft variants need at least two mlp widths");
    }
    std::vector<int64_t> win{in_channels};
    win.insert(win.end(), out_widths.begin(), out_widths.end() - 1);
    sa.mlp_in = relu_mlp(std::move(win), derive_seed(model_seed, prefix + ".mlp_in"));
    const int64_t c_f = sa.mlp_in.out_width();
    sa.mlp_out = relu_mlp({c_f * c_mid, out_widths.back()},
                          derive_seed(model_seed, prefix + ".mlp_out"));
    sa.weightnet = weightnet_spec(c_mid, derive_seed(model_seed, prefix + ".weightnet"));
    if (variant == SaVariant::pointconv) {
        sa.densitynet = densitynet_spec(derive_seed(model_seed, prefix + ".densitynet"));
    }
    return sa;
}

FpStageConfig make_fp_config(FpVariant variant, int64_t concat_channels,
                             const std::vector<int64_t>& out_widths, int64_t c_mid, double p,
                             uint64_t model_seed, const std::string& prefix) {
    FpStageConfig fp;
    fp.variant = variant;
    fp.p = p;
    fp.c_mid = c_mid;
    if (variant == FpVariant::plain) {
        std::vector<int64_t> w{concat_channels};
        w.insert(w.end(), out_widths.begin(), out_widths.end());
        fp.mlp = relu_mlp(std::move(w), derive_seed(model_seed, prefix + ".mlp"));
        return fp;
    }
    if (out_widths.size() < 2) {
        throw ConfigError(prefix + ": soft variants need at least two mlp widths");
    }
    std::vector<int64_t> win{concat_channels + 3};
    win.insert(win.end(), out_widths.begin(), out_widths.end() - 1);
    fp.mlp_in = relu_mlp(std::move(win), derive_seed(model_seed, prefix + ".mlp_in"));
    fp.mlp_out = relu_mlp({fp.mlp_in.out_width() * c_mid, out_widths.back()},
                          derive_seed(model_seed, prefix + ".mlp_out"));
    fp.weightnet = weightnet_spec(c_mid, derive_seed(model_seed, prefix + ".weightnet"));
    if (variant == FpVariant::pointconv) {
        fp.densitynet = densitynet_spec(derive_seed(model_seed, prefix + ".densitynet"));
    }
    return fp;
}

FpVariant fp_variant_for(SaVariant v) {
    switch (v) {
        case SaVariant::pointnet: return FpVariant::plain;
        case SaVariant::spidercnn: return FpVariant::spider;
        case SaVariant::pointconv: return FpVariant::pointconv;
    }
    return FpVariant::plain;
}

std::vector<int64_t> user_widths_of(const MlpSpec& a, const MlpSpec& b, SaVariant variant) {
    // inverse of make_sa_config's width split, for serialization
    std::vector<int64_t> out;
    if (variant == SaVariant::pointnet) {
        out.assign(a.widths.begin() + 1, a.widths.end());
        return out;
    }
    out.assign(a.widths.begin() + 1, a.widths.end());
    out.push_back(b.out_width());
    return out;
}

void rotate_azimuth(PointCloud& cloud, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    for (size_t i = 0; i < cloud.x.size(); ++i) {
        const double x = cloud.x[i], y = cloud.y[i];
        cloud.x[i] = c * x - s * y;
        cloud.y[i] = s * x + c * y;
    }
}

} // namespace

// ---------------------------------------------------------------------------
// ModelConfig

std::vector<int64_t> ModelConfig::encoder_widths() const {
    std::vector<int64_t> w{2}; // range + remission
    for (const auto& st : stages) w.push_back(st.sa.out_channels());
    return w;
}

void ModelConfig::validate() const {
    proj.validate();
    if (n_classes < 1) throw ConfigError("model: n_classes must be >= 1");
    if (stages.empty()) throw ConfigError("model: needs at least one stage");
    int ph = proj.height, pw = proj.width;
    const std::vector<int64_t> enc = encoder_widths();
    for (size_t i = 0; i < stages.size(); ++i) {
        const auto& st = stages[i];
        if (st.grid.out_h <= 0 || st.grid.out_w <= 0 || ph % st.grid.out_h != 0 ||
            pw % st.grid.out_w != 0) {
            throw ConfigError("sa" + std::to_string(i + 1) + ": grid " +
                              std::to_string(st.grid.out_h) + "x" + std::to_string(st.grid.out_w) +
                              " does not divide " + std::to_string(ph) + "x" + std::to_string(pw));
        }
        st.grouping.validate();
        st.sa.validate(3 + enc[i]);
        ph = st.grid.out_h;
        pw = st.grid.out_w;
    }
    // decoder chain
    int64_t cur = enc.back();
    for (size_t i = stages.size(); i-- > 0;) {
        stages[i].fp.validate(cur + enc[i]);
        cur = stages[i].fp.out_channels();
    }
    head.validate();
    if (head.in_width() != cur) {
        throw ConfigError("head: input width " + std::to_string(head.in_width()) +
                          " != decoder output " + std::to_string(cur));
    }
    if (head.out_width() != n_classes) {
        throw ConfigError("head: output width " + std::to_string(head.out_width()) +
                          " != n_classes " + std::to_string(n_classes));
    }
}

ModelConfig make_model_config(SaVariant variant, int height, int width, int n_classes,
                              int n_stages, int64_t base_width, int k, uint64_t seed) {
    ConfigFile cfg;
    cfg.set("proj.height", std::to_string(height));
    cfg.set("proj.width", std::to_string(width));
    cfg.set("model.classes", std::to_string(n_classes));
    cfg.set("model.stages", std::to_string(n_stages));
    cfg.set("model.seed", std::to_string(seed));
    cfg.set("model.variant", to_string(variant));
    cfg.set("model.base_width", std::to_string(base_width));
    cfg.set("model.k", std::to_string(k));
    return ModelConfig::from_config(cfg);
}

ModelConfig ModelConfig::from_config(const ConfigFile& cfg) {
    ModelConfig mc;
    mc.proj = ProjectionConfig::from_degrees(
        static_cast<int>(cfg.get_int_or("proj.height", 64)),
        static_cast<int>(cfg.get_int_or("proj.width", 512)),
        cfg.get_double_or("proj.fov_up_deg", 3.0), cfg.get_double_or("proj.fov_down_deg", -25.0));
    mc.n_classes = static_cast<int>(cfg.get_int("model.classes"));
    mc.seed = static_cast<uint64_t>(cfg.get_int_or("model.seed", 1));
    const int n_stages = static_cast<int>(cfg.get_int_or("model.stages", 4));
    if (n_stages < 1) throw ConfigError("model.stages must be >= 1");
    const SaVariant default_variant =
        sa_variant_from_string(cfg.get_or("model.variant", "pointnet"));
    const int64_t base_width = cfg.get_int_or("model.base_width", 32);
    const int default_k = static_cast<int>(cfg.get_int_or("model.k", 5));

    int ph = mc.proj.height, pw = mc.proj.width;
    int64_t in_feat = 2;
    std::vector<int64_t> enc_widths{in_feat};
    for (int i = 1; i <= n_stages; ++i) {
        const std::string sa_key = "sa" + std::to_string(i);
        StageConfig st;
        st.grid.out_h = static_cast<int>(cfg.get_int_or(sa_key + ".out_height",
                                                        std::max(1, ph / 2)));
        st.grid.out_w = static_cast<int>(cfg.get_int_or(sa_key + ".out_width",
                                                        std::max(1, pw / 2)));
        st.grouping.k = static_cast<int>(cfg.get_int_or(sa_key + ".k", default_k));
        st.grouping.radius = cfg.get_double_or(sa_key + ".radius", 0.5 * std::pow(2.0, i - 1));
        st.grouping.sigma = cfg.get_double_or(sa_key + ".sigma", st.grouping.radius / 2.0);
        const SaVariant variant =
            cfg.has(sa_key + ".variant") ? sa_variant_from_string(cfg.get(sa_key + ".variant"))
                                         : default_variant;
        const int64_t c_mid = cfg.get_int_or(sa_key + ".c_mid", 4);
        const int64_t w = base_width * (int64_t{1} << (i - 1));
        std::vector<int64_t> sa_widths{w, w};
        if (cfg.has(sa_key + ".mlp")) sa_widths = cfg.get_int_list(sa_key + ".mlp");
        st.sa = make_sa_config(variant, 3 + enc_widths.back(), sa_widths, c_mid, mc.seed, sa_key);
        enc_widths.push_back(st.sa.out_channels());
        ph = st.grid.out_h;
        pw = st.grid.out_w;
        mc.stages.push_back(std::move(st));
    }
    // decoder, coarsest first
    int64_t cur = enc_widths.back();
    for (int i = n_stages; i >= 1; --i) {
        const std::string fp_key = "fp" + std::to_string(i);
        StageConfig& st = mc.stages[static_cast<size_t>(i - 1)];
        const FpVariant variant = cfg.has(fp_key + ".variant")
                                      ? fp_variant_from_string(cfg.get(fp_key + ".variant"))
                                      : fp_variant_for(st.sa.variant);
        const double p = cfg.get_double_or(fp_key + ".p", 2.0);
        const int64_t fpw = i >= 2 ? enc_widths[static_cast<size_t>(i - 1)] : base_width;
        std::vector<int64_t> fp_widths{fpw, fpw};
        if (cfg.has(fp_key + ".mlp")) fp_widths = cfg.get_int_list(fp_key + ".mlp");
        const int64_t concat = cur + enc_widths[static_cast<size_t>(i - 1)];
        st.fp = make_fp_config(variant, concat, fp_widths, st.sa.c_mid, p, mc.seed, fp_key);
        cur = st.fp.out_channels();
    }
    std::vector<int64_t> head_widths{cur};
    if (cfg.has("model.head")) {
        const auto mid = cfg.get_int_list("model.head");
        head_widths.insert(head_widths.end(), mid.begin(), mid.end());
    } else {
        head_widths.push_back(128);
    }
    head_widths.push_back(mc.n_classes);
    mc.head = MlpSpec::make(std::move(head_widths), /*relu_last=*/false,
                            derive_seed(mc.seed, "head"));
    mc.validate();
    return mc;
}

ConfigFile ModelConfig::to_config() const {
    ConfigFile cfg;
    cfg.set("proj.height", std::to_string(proj.height));
    cfg.set("proj.width", std::to_string(proj.width));
    {
        std::ostringstream up, down;
        up << proj.fov_up * 180.0 / kPi;
        down << proj.fov_down * 180.0 / kPi;
        cfg.set("proj.fov_up_deg", up.str());
        cfg.set("proj.fov_down_deg", down.str());
    }
    cfg.set("model.classes", std::to_string(n_classes));
    cfg.set("model.stages", std::to_string(stages.size()));
    cfg.set("model.seed", std::to_string(seed));
    {
        // head middle widths
        std::vector<int64_t> mid(head.widths.begin() + 1, head.widths.end() - 1);
        std::ostringstream os;
        for (size_t i = 0; i < mid.size(); ++i) {
            if (i) os << ",";
            os << mid[i];
        }
        cfg.set("model.head", os.str());
    }
    for (size_t i = 0; i < stages.size(); ++i) {
        const auto& st = stages[i];
        const std::string sa_key = "sa" + std::to_string(i + 1);
        const std::string fp_key = "fp" + std::to_string(i + 1);
        cfg.set(sa_key + ".out_height", std::to_string(st.grid.out_h));
        cfg.set(sa_key + ".out_width", std::to_string(st.grid.out_w));
        cfg.set(sa_key + ".k", std::to_string(st.grouping.k));
        {
            std::ostringstream r, s;
            r << st.grouping.radius;
            s << st.grouping.sigma;
            cfg.set(sa_key + ".radius", r.str());
            cfg.set(sa_key + ".sigma", s.str());
        }
        cfg.set(sa_key + ".variant", to_string(st.sa.variant));
        cfg.set(sa_key + ".c_mid", std::to_string(st.sa.c_mid));
        const auto sa_user = st.sa.variant == SaVariant::pointnet
                                 ? user_widths_of(st.sa.mlp, st.sa.mlp, st.sa.variant)
                                 : user_widths_of(st.sa.mlp_in, st.sa.mlp_out, st.sa.variant);
        {
            std::ostringstream os;
            for (size_t j = 0; j < sa_user.size(); ++j) {
                if (j) os << ",";
                os << sa_user[j];
            }
            cfg.set(sa_key + ".mlp", os.str());
        }
        cfg.set(fp_key + ".variant", to_string(st.fp.variant));
        {
            std::ostringstream os;
            os << st.fp.p;
            cfg.set(fp_key + ".p", os.str());
        }
        std::string fp_user;
        if (st.fp.variant == FpVariant::plain) {
            fp_user = widths_to_user_list(st.fp.mlp.widths);
        } else {
            std::vector<int64_t> u(st.fp.mlp_in.widths.begin() + 1, st.fp.mlp_in.widths.end());
            u.push_back(st.fp.mlp_out.out_width());
            std::ostringstream os;
            for (size_t j = 0; j < u.size(); ++j) {
                if (j) os << ",";
                os << u[j];
            }
            fp_user = os.str();
        }
        cfg.set(fp_key + ".mlp", fp_user);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    for (size_t i = 0; i < cfg_.stages.size(); ++i) {
        sa_.emplace_back(cfg_.stages[i].sa, "sa" + std::to_string(i + 1));
        fp_.emplace_back(cfg_.stages[i].fp, "fp" + std::to_string(i + 1));
    }
    head_ = Mlp(cfg_.head, "head");
}

Tensor Model::forward_logits(const RangeImage& image) const {
    if (image.h != cfg_.proj.height || image.w != cfg_.proj.width) {
        throw DimensionError("forward: image " + std::to_string(image.h) + "x" +
                             std::to_string(image.w) + " does not match the configured " +
                             std::to_string(cfg_.proj.height) + "x" +
                             std::to_string(cfg_.proj.width));
    }
    const size_t n_stages = cfg_.stages.size();
    std::vector<GridLevel> levels;
    std::vector<Tensor> feats;
    std::vector<NeighborhoodBundle> bundles;
    levels.push_back(level_from_range_image(image));
    {
        Tensor f = Tensor::zeros({image.h, image.w, 2});
        const double* g = levels[0].geom.data();
        double* fd = f.data();
        for (int64_t p = 0; p < levels[0].pixels(); ++p) {
            fd[p * 2 + 0] = g[p * 5 + 3]; // range
            fd[p * 2 + 1] = g[p * 5 + 4]; // remission
        }
        feats.push_back(std::move(f));
    }
    for (size_t i = 0; i < n_stages; ++i) {
        try {
            GridLevel coarse = sample(levels[i], cfg_.stages[i].grid);
            bundles.push_back(
                build_bundle(levels[i], coarse, feats[i], cfg_.stages[i].grouping));
            feats.push_back(sa_[i].forward(bundles[i]));
            levels.push_back(std::move(coarse));
        } catch (const std::exception& e) {
            throw DimensionError("sa stage " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    Tensor cur = feats[n_stages];
    for (size_t i = n_stages; i-- > 0;) {
        try {
            const GatherPlan plan =
                build_interpolation_plan(bundles[i], cfg_.stages[i].fp.p, levels[i + 1]);
            cur = fp_[i].forward(cur, feats[i], plan, levels[i], cfg_.stages[i].grouping);
        } catch (const std::exception& e) {
            throw DimensionError("fp stage " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return head_.forward(cur);
}

Model::Forward Model::forward(const PointCloud& cloud,
                              const std::optional<KnnConfig>& knn) const {
    Forward out;
    out.image = project(cloud, cfg_.proj);
    out.logits = forward_logits(out.image);
    const int64_t npix = out.image.pixels();
    const int64_t c = cfg_.n_classes;
    out.pixel_pred.assign(static_cast<size_t>(npix), 0);
    const double* ld = out.logits.data();
    for (int64_t p = 0; p < npix; ++p) {
        const double* row = ld + p * c;
        int32_t best = 0;
        for (int64_t j = 1; j < c; ++j) {
            if (row[j] > row[best]) best = static_cast<int32_t>(j);
        }
        out.pixel_pred[static_cast<size_t>(p)] = best;
    }
    out.point_pred = knn ? knn_refine(out.image, out.pixel_pred, cloud, *knn)
                         : unproject(out.image, out.pixel_pred);
    return out;
}

TrainStats Model::train(const std::vector<PointCloud>& scans, const TrainConfig& tc) {
    if (scans.empty()) throw UsageError("train: no scans");
    for (const auto& s : scans) {
        if (!s.has_labels()) throw DataError("train: scan without labels");
    }
    TrainStats st;
    std::vector<Tensor> params = parameters();
    SgdOptimizer opt(params, tc.lr, tc.momentum);
    Rng aug_rng(tc.seed ^ 0xa5a5a5a5ull);
    std::vector<std::vector<double>> last_good;
    auto snapshot = [&] {
        last_good.clear();
        for (const auto& p : params) {
            last_good.emplace_back(p.data(), p.data() + p.numel());
        }
    };
    auto restore = [&] {
        for (size_t i = 0; i < params.size(); ++i) {
            std::copy(last_good[i].begin(), last_good[i].end(), params[i].data());
        }
    };
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        for (const auto& scan : scans) {
            if (tc.max_steps > 0 && st.steps >= tc.max_steps) return st;
            PointCloud use = scan;
            if (tc.augment_azimuth) rotate_azimuth(use, aug_rng.uniform(0.0, 2.0 * kPi));
            const RangeImage img = project(use, cfg_.proj);
            const std::vector<int32_t> targets = pixel_labels(img, use);
            snapshot();
            Tape tape;
            Tensor loss;
            {
                TapeScope scope(tape);
                Tensor logits = forward_logits(img);
                loss = softmax_cross_entropy(logits, targets, kIgnoreClass);
            }
            const double lv = loss.item();
            if (!std::isfinite(lv)) {
                restore();
                throw TrainingError("train: non-finite loss at step " +
                                    std::to_string(st.steps) + "; parameters rolled back");
            }
            opt.zero_grad();
            tape.backward(loss);
            try {
                opt.step();
            } catch (const TrainingError&) {
                restore();
                throw;
            }
            st.losses.push_back(lv);
            ++st.steps;
        }
    }
    return st;
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out;
    for (const auto& s : sa_) {
        auto p = s.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    for (const auto& f : fp_) {
        auto p = f.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    auto p = head_.parameters();
    out.insert(out.end(), p.begin(), p.end());
    return out;
}

void Model::save(const std::string& path) const {
    save_checkpoint(path, cfg_.to_config().serialize(), parameters());
}

Model Model::load(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    Model model(ModelConfig::from_config(ConfigFile::parse_string(ck.meta)));
    std::vector<Tensor> params = model.parameters();
    if (params.size() != ck.entries.size()) {
        throw DataError("checkpoint '" + path + "': " + std::to_string(ck.entries.size()) +
                        " entries for " + std::to_string(params.size()) + " parameters");
    }
    std::map<std::string, Tensor> by_name;
    for (auto& p : params) by_name.emplace(p.name(), p);
    for (const auto& [name, tensor] : ck.entries) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw DataError("checkpoint '" + path + "': unknown parameter '" + name + "'");
        }
        if (it->second.shape() != tensor.shape()) {
            throw DataError("checkpoint '" + path + "': shape mismatch for '" + name + "'");
        }
        std::copy(tensor.data(), tensor.data() + tensor.numel(), it->second.data());
    }
    return model;
}

} // namespace ppseg
