// ppseg: projected-point LiDAR segmentation pipeline.
// Subcommands: project, train, infer, eval, bench, ablate.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ppseg/baseline.hpp"
#include "ppseg/config.hpp"
#include "ppseg/metrics.hpp"
#include "ppseg/model.hpp"
#include "ppseg/parallel.hpp"
#include "ppseg/simd/kernels.hpp"
#include "ppseg/synthetic.hpp"

namespace fs = std::filesystem;
using namespace ppseg;

namespace {

std::vector<fs::path> list_files(const std::string& dir_or_file, const std::string& ext) {
    std::vector<fs::path> out;
    fs::path p(dir_or_file);
    if (fs::is_directory(p)) {
        for (const auto& e : fs::directory_iterator(p)) {
            if (e.path().extension() == ext) out.push_back(e.path());
        }
        std::sort(out.begin(), out.end());
    } else if (fs::exists(p)) {
        out.push_back(p);
    }
    if (out.empty()) throw DataError("no '" + ext + "' files under '" + dir_or_file + "'");
    return out;
}

ConfigFile load_config(const std::string& path) {
    if (path.empty()) return ConfigFile();
    return ConfigFile::parse_file(path);
}

void reject_unknown_keys(const ConfigFile& cfg) {
    std::vector<std::string> stale;
    for (const auto& k : cfg.unused_keys()) {
        if (k.rfind("proj.", 0) == 0 || k.rfind("model.", 0) == 0 || k.rfind("train.", 0) == 0 ||
            k.rfind("sa", 0) == 0 || k.rfind("fp", 0) == 0) {
            stale.push_back(k);
        }
    }
    if (!stale.empty()) {
        std::string msg = "config: unknown keys:";
        for (const auto& k : stale) msg += " " + k;
        throw ConfigError(msg);
    }
}

TrainConfig train_config_from(const ConfigFile& cfg) {
    TrainConfig tc;
    tc.epochs = static_cast<int>(cfg.get_int_or("train.epochs", 10));
    tc.lr = cfg.get_double_or("train.lr", 0.05);
    tc.momentum = cfg.get_double_or("train.momentum", 0.9);
    tc.seed = static_cast<uint64_t>(cfg.get_int_or("train.seed", 1));
    tc.augment_azimuth = cfg.get_int_or("train.augment", 0) != 0;
    tc.max_steps = static_cast<int>(cfg.get_int_or("train.max_steps", 0));
    return tc;
}

std::vector<PointCloud> load_labeled_scans(const std::string& scans, const std::string& labels,
                                           const LabelMap& map) {
    const auto scan_paths = list_files(scans, ".bin");
    std::vector<PointCloud> out;
    int64_t unknown = 0;
    for (const auto& sp : scan_paths) {
        PointCloud cloud = read_scan(sp.string());
        fs::path lp = fs::path(labels) / (sp.stem().string() + ".label");
        if (!fs::exists(lp) && !fs::is_directory(labels)) lp = labels;
        const auto res = read_labels(lp.string(), map, cloud);
        unknown += res.unknown_raw_ids;
        out.push_back(std::move(cloud));
    }
    if (unknown > 0) {
        std::cerr << "warning: " << unknown << " label entries with unknown raw ids mapped to ignore\n";
    }
    return out;
}

std::vector<PointCloud> make_synthetic_scans(int count, uint64_t seed, int rays_v, int rays_u) {
    std::vector<PointCloud> out;
    for (int i = 0; i < count; ++i) {
        SceneConfig sc;
        sc.seed = seed + static_cast<uint64_t>(i);
        sc.rays_v = rays_v;
        sc.rays_u = rays_u;
        out.push_back(synthetic_scene(sc));
    }
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os << text;
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// ---------------------------------------------------------------------------

int cmd_project(const std::string& config_path, const std::string& scan_path,
                const std::string& out_csv) {
    const ConfigFile cfg = load_config(config_path);
    const ProjectionConfig pc = ProjectionConfig::from_degrees(
        static_cast<int>(cfg.get_int_or("proj.height", 64)),
        static_cast<int>(cfg.get_int_or("proj.width", 512)),
        cfg.get_double_or("proj.fov_up_deg", 3.0), cfg.get_double_or("proj.fov_down_deg", -25.0));
    const PointCloud cloud = read_scan(scan_path);
    const RangeImage img = project(cloud, pc);
    int64_t valid = 0;
    for (uint8_t v : img.valid) valid += v;
    std::cout << "points=" << cloud.n() << " skipped=" << img.skipped << " grid=" << img.h << "x"
              << img.w << " valid_pixels=" << valid << " occupancy="
              << static_cast<double>(valid) / static_cast<double>(img.pixels()) << "\n";
    if (!out_csv.empty()) {
        std::ostringstream os;
        os << "v,u,x,y,z,range,remission,point_index\n";
        const double* ch = img.channels.data();
        for (int64_t p = 0; p < img.pixels(); ++p) {
            if (!img.valid[static_cast<size_t>(p)]) continue;
            os << p / img.w << "," << p % img.w << "," << ch[p * 5 + 0] << "," << ch[p * 5 + 1]
               << "," << ch[p * 5 + 2] << "," << ch[p * 5 + 3] << "," << ch[p * 5 + 4] << ","
               << img.pix2pt[static_cast<size_t>(p)] << "\n";
        }
        write_text(out_csv, os.str());
    }
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& scans, const std::string& labels,
              const std::string& labelmap, int synthetic, const std::string& out_ckpt,
              const std::string& loss_csv) {
    ConfigFile cfg = load_config(config_path);
    std::vector<PointCloud> data;
    if (synthetic > 0) {
        if (!cfg.has("model.classes")) cfg.set("model.classes", std::to_string(kSceneClasses));
        data = make_synthetic_scans(synthetic, static_cast<uint64_t>(cfg.get_int_or("train.seed", 1)),
                                    static_cast<int>(cfg.get_int_or("proj.height", 64)),
                                    static_cast<int>(cfg.get_int_or("proj.width", 512)));
    } else {
        if (labelmap.empty()) throw ConfigError("train: --labelmap is required with real scans");
        const LabelMap map = LabelMap::parse_file(labelmap);
        if (!cfg.has("model.classes")) cfg.set("model.classes", std::to_string(map.n_classes()));
        data = load_labeled_scans(scans, labels, map);
    }
    const TrainConfig tc = train_config_from(cfg);
    Model model(ModelConfig::from_config(cfg));
    reject_unknown_keys(cfg);

    TrainStats st;
    try {
        st = model.train(data, tc);
    } catch (const TrainingError& e) {
        std::cerr << "training aborted: " << e.what() << "\n";
        if (!out_ckpt.empty()) {
            model.save(out_ckpt);
            std::cerr << "last-good checkpoint written to " << out_ckpt << "\n";
        }
        return 1;
    }
    if (!out_ckpt.empty()) model.save(out_ckpt);
    if (!loss_csv.empty()) {
        std::ostringstream os;
        os << "step,loss\n";
        for (size_t i = 0; i < st.losses.size(); ++i) os << i << "," << st.losses[i] << "\n";
        write_text(loss_csv, os.str());
    }
    std::cout << "steps=" << st.steps
              << " final_loss=" << (st.losses.empty() ? 0.0 : st.losses.back()) << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& scans, const std::string& out_dir,
              const std::string& labelmap, bool knn, int knn_window, int knn_k,
              double knn_sigma) {
    const Model model = Model::load(ckpt);
    const LabelMap map = labelmap.empty() ? LabelMap::identity(model.config().n_classes)
                                          : LabelMap::parse_file(labelmap);
    const auto scan_paths = list_files(scans, ".bin");
    fs::create_directories(out_dir);
    std::optional<KnnConfig> kc;
    if (knn) kc = KnnConfig{knn_window, knn_k, knn_sigma};

    const double t0 = now_ms();
    for (const auto& sp : scan_paths) {
        const PointCloud cloud = read_scan(sp.string());
        Model::Forward fw = model.forward(cloud, kc);
        for (auto& p : fw.point_pred) {
            if (p < 0) p = 0; // skipped zero-range points get the first class
        }
        const fs::path out = fs::path(out_dir) / (sp.stem().string() + ".label");
        write_predictions(out.string(), cloud, fw.point_pred, map);
    }
    const double dt = now_ms() - t0;
    std::cout << "scans=" << scan_paths.size() << " total_ms=" << dt
              << " scans_per_sec=" << 1000.0 * static_cast<double>(scan_paths.size()) / dt << "\n";
    return 0;
}

int cmd_eval(const std::string& preds, const std::string& labels, const std::string& labelmap,
             int classes, const std::string& out_csv) {
    const LabelMap map =
        labelmap.empty() ? LabelMap::identity(classes) : LabelMap::parse_file(labelmap);
    const auto pred_paths = list_files(preds, ".label");
    ConfusionAccumulator acc(map.n_classes());
    for (const auto& pp : pred_paths) {
        fs::path lp = fs::path(labels) / pp.filename();
        if (!fs::exists(lp) && !fs::is_directory(labels)) lp = labels;
        const auto pv = read_label_classes(pp.string(), map);
        const auto lv = read_label_classes(lp.string(), map);
        if (pv.size() != lv.size()) {
            throw DataError("eval: '" + pp.string() + "' has " + std::to_string(pv.size()) +
                            " entries but ground truth has " + std::to_string(lv.size()));
        }
        acc.add(pv, lv);
    }
    const EvalReport rep = acc.report();
    std::vector<std::string> names;
    for (int c = 0; c < map.n_classes(); ++c) names.push_back(map.class_name(c));
    std::cout << eval_csv(rep, names);
    if (!out_csv.empty()) write_text(out_csv, eval_csv(rep, names));
    return 0;
}

int cmd_bench(const BenchConfig& bc, const std::string& out_csv) {
    const PointCloud cloud = synthetic_uniform_cloud(bc.seed, bc.n, 50.0);
    const auto rows = bench_compare(cloud, bc);
    std::ostringstream os;
    os << bench_csv_header() << "\n";
    for (const auto& r : rows) os << bench_csv_row(r) << "\n";
    std::cout << os.str();
    if (!out_csv.empty()) write_text(out_csv, os.str());
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& sweep,
               const std::vector<int64_t>& values, int synthetic, const std::string& scans,
               const std::string& labels, const std::string& labelmap, int reps,
               const std::string& out_csv) {
    ConfigFile base = load_config(config_path);
    std::ostringstream os;
    os << sweep << ",acc,miou,scans_per_sec\n";
    for (const int64_t value : values) {
        ConfigFile cfg = base;
        if (sweep == "k") {
            cfg.set("model.k", std::to_string(value));
        } else if (sweep == "resolution") {
            cfg.set("proj.width", std::to_string(value));
        } else {
            throw ConfigError("ablate: sweep must be 'k' or 'resolution'");
        }
        std::vector<PointCloud> data;
        if (synthetic > 0) {
            if (!cfg.has("model.classes")) cfg.set("model.classes", std::to_string(kSceneClasses));
            data = make_synthetic_scans(synthetic, 7, static_cast<int>(cfg.get_int_or("proj.height", 64)),
                                        static_cast<int>(cfg.get_int_or("proj.width", 512)));
        } else {
            if (labelmap.empty()) throw ConfigError("ablate: --labelmap required with real scans");
            const LabelMap map = LabelMap::parse_file(labelmap);
            if (!cfg.has("model.classes")) cfg.set("model.classes", std::to_string(map.n_classes()));
            data = load_labeled_scans(scans, labels, map);
        }
        const Model model{ModelConfig::from_config(cfg)};
        ConfusionAccumulator acc(model.config().n_classes);
        // warm-up pass, then timed repetitions
        for (const auto& cloud : data) {
            Model::Forward fw = model.forward(cloud);
            std::vector<int32_t> lbl = cloud.label;
            for (auto& p : fw.point_pred) {
                if (p < 0) p = 0;
            }
            acc.add(fw.point_pred, lbl);
        }
        std::vector<double> times;
        for (int r = 0; r < reps; ++r) {
            const double t0 = now_ms();
            for (const auto& cloud : data) model.forward(cloud);
            times.push_back((now_ms() - t0) / static_cast<double>(data.size()));
        }
        std::sort(times.begin(), times.end());
        const double med = times[times.size() / 2];
        const EvalReport rep = acc.report();
        os << value << "," << rep.accuracy << "," << rep.miou << "," << 1000.0 / med << "\n";
    }
    std::cout << os.str();
    if (!out_csv.empty()) write_text(out_csv, os.str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"projected-point LiDAR semantic segmentation"};
    app.require_subcommand(1);

    std::string simd = "auto";
    int threads = 0;
    app.add_option("--simd", simd, "kernel backend: auto|scalar|avx2|neon");
    app.add_option("--threads", threads, "worker thread cap (default: PPSEG_THREADS or all cores)");

    // project
    auto* project_cmd = app.add_subcommand("project", "project a scan onto the range image");
    std::string p_config, p_scan, p_csv;
    project_cmd->add_option("--config", p_config, "pipeline config file");
    project_cmd->add_option("--scan", p_scan, "input .bin scan")->required();
    project_cmd->add_option("--csv", p_csv, "write valid pixels as CSV");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string t_config, t_scans, t_labels, t_map, t_ckpt, t_loss;
    int t_synth = 0;
    train_cmd->add_option("--config", t_config, "pipeline config file");
    train_cmd->add_option("--scans", t_scans, "scan directory or file");
    train_cmd->add_option("--labels", t_labels, "label directory or file");
    train_cmd->add_option("--labelmap", t_map, "label remap config");
    train_cmd->add_option("--synthetic", t_synth, "train on N synthetic scenes instead of scans");
    train_cmd->add_option("--out", t_ckpt, "output checkpoint path")->required();
    train_cmd->add_option("--loss-csv", t_loss, "write per-step loss CSV");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "run inference and write .label predictions");
    std::string i_ckpt, i_scans, i_out, i_map;
    bool i_knn = false;
    int i_knn_window = 5, i_knn_k = 5;
    double i_knn_sigma = 1.0;
    infer_cmd->add_option("--checkpoint", i_ckpt, "model checkpoint")->required();
    infer_cmd->add_option("--scans", i_scans, "scan directory or file")->required();
    infer_cmd->add_option("--out", i_out, "output directory")->required();
    infer_cmd->add_option("--labelmap", i_map, "label remap config for raw-id export");
    infer_cmd->add_flag("--knn", i_knn, "enable range-image k-NN refinement");
    infer_cmd->add_option("--knn-window", i_knn_window, "refinement window side (odd)");
    infer_cmd->add_option("--knn-k", i_knn_k, "votes per point");
    infer_cmd->add_option("--knn-sigma", i_knn_sigma, "range-gap bandwidth in meters");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "confusion matrix, IoU and accuracy");
    std::string e_preds, e_labels, e_map, e_csv;
    int e_classes = 3;
    eval_cmd->add_option("--preds", e_preds, "prediction .label dir or file")->required();
    eval_cmd->add_option("--labels", e_labels, "ground-truth .label dir or file")->required();
    eval_cmd->add_option("--labelmap", e_map, "label remap config");
    eval_cmd->add_option("--classes", e_classes, "class count when no labelmap is given");
    eval_cmd->add_option("--csv", e_csv, "write the report as CSV");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "compare point vs projected neighborhoods");
    BenchConfig bc;
    std::string b_csv;
    bench_cmd->add_option("--n", bc.n, "cloud size");
    bench_cmd->add_option("--m", bc.m, "sampled point count");
    bench_cmd->add_option("--k", bc.k, "window side");
    bench_cmd->add_option("--radius", bc.radius, "ball radius in meters");
    bench_cmd->add_option("--reps", bc.reps, "repetitions (median reported)");
    bench_cmd->add_option("--height", bc.height, "projection rows");
    bench_cmd->add_option("--width", bc.width, "projection columns");
    bench_cmd->add_option("--seed", bc.seed, "cloud seed");
    bench_cmd->add_option("--bench-threads", bc.threads, "also run parallel variants");
    bench_cmd->add_option("--csv", b_csv, "output CSV path");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "sweep k or resolution, report acc/mIoU/throughput");
    std::string a_config, a_sweep = "k", a_scans, a_labels, a_map, a_csv;
    std::vector<int64_t> a_values{3, 5, 7};
    int a_synth = 0, a_reps = 3;
    ablate_cmd->add_option("--config", a_config, "base pipeline config");
    ablate_cmd->add_option("--sweep", a_sweep, "'k' or 'resolution'");
    ablate_cmd->add_option("--values", a_values, "swept values")->delimiter(',');
    ablate_cmd->add_option("--synthetic", a_synth, "evaluate on N synthetic scenes");
    ablate_cmd->add_option("--scans", a_scans, "scan directory");
    ablate_cmd->add_option("--labels", a_labels, "label directory");
    ablate_cmd->add_option("--labelmap", a_map, "label remap config");
    ablate_cmd->add_option("--reps", a_reps, "timing repetitions");
    ablate_cmd->add_option("--csv", a_csv, "output CSV path");

    try {
        app.parse(argc, argv);
        simd::select_kernels(simd);
        if (threads > 0) set_thread_budget(threads);
        if (*project_cmd) return cmd_project(p_config, p_scan, p_csv);
        if (*train_cmd) return cmd_train(t_config, t_scans, t_labels, t_map, t_synth, t_ckpt, t_loss);
        if (*infer_cmd)
            return cmd_infer(i_ckpt, i_scans, i_out, i_map, i_knn, i_knn_window, i_knn_k, i_knn_sigma);
        if (*eval_cmd) return cmd_eval(e_preds, e_labels, e_map, e_classes, e_csv);
        if (*bench_cmd) return cmd_bench(bc, b_csv);
        if (*ablate_cmd)
            return cmd_ablate(a_config, a_sweep, a_values, a_synth, a_scans, a_labels, a_map,
                              a_reps, a_csv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
