#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankodo/eval.hpp"
#include "rankodo/net.hpp"
#include "rankodo/pose.hpp"
#include "rankodo/rng.hpp"
#include "rankodo/synth.hpp"

namespace rankodo::cli {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kConfigVersion = 1;

struct DataConfig {
    std::size_t n = 512;
    std::size_t test_n = 0;  // 0 = no separate test split
    double sigma = 0.05;
    std::uint64_t seed = 1;
    std::uint64_t test_seed = 2;
    synth::StateRanges ranges{};
};

struct EvalOptionsConfig {
    std::vector<double> segment_lengths = {100, 200, 300, 400, 500, 600, 700, 800};
    int stride = 10;
    bool use_rmse = false;
};

struct PathsConfig {
    std::filesystem::path dataset_dir;
    std::filesystem::path test_dataset_dir;
    std::filesystem::path checkpoint_dir;
    std::filesystem::path report_dir;
};

struct RunConfig {
    synth::SceneConfig scene;
    DataConfig data;
    net::TrainConfig train;
    EvalOptionsConfig eval;
    PathsConfig paths;
};

namespace detail {

using nlohmann::json;

// Unknown keys are rejected so config typos cannot silently change a run.
inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* name : allowed)
            if (key == name) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown config key: " + path + "." + key);
    }
}

template <typename T>
T get_field(const json& obj, const std::string& path, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for config key: " + path + "." + key);
    }
}

inline synth::SceneConfig parse_scene(const json& j) {
    check_keys(j, "scene",
               {"width", "height", "focal_length", "principal_point", "plane_depth"});
    synth::SceneConfig s;
    s.width = get_field(j, "scene", "width", s.width);
    s.height = get_field(j, "scene", "height", s.height);
    // default principal point: image center
    s.cx = s.width / 2.0;
    s.cy = s.height / 2.0;
    s.focal_length = get_field(j, "scene", "focal_length", s.focal_length);
    s.plane_depth = get_field(j, "scene", "plane_depth", s.plane_depth);
    if (j.contains("principal_point")) {
        const auto& pp = j.at("principal_point");
        if (!pp.is_array() || pp.size() != 2)
            throw ConfigError("scene.principal_point must be [cx, cy]");
        s.cx = pp[0].get<double>();
        s.cy = pp[1].get<double>();
    }
    if (!synth::is_valid(s)) throw ConfigError("scene configuration is invalid");
    return s;
}

inline synth::StateRanges parse_ranges(const json& j) {
    check_keys(j, "data.state_ranges", {"x", "y", "z", "roll", "pitch", "yaw"});
    synth::StateRanges r{};
    for (int d = 0; d < 6; ++d) {
        const std::string name(pose::kDofNames[static_cast<std::size_t>(d)]);
        if (!j.contains(name)) continue;
        const auto& iv = j.at(name);
        if (!iv.is_array() || iv.size() != 2)
            throw ConfigError("data.state_ranges." + name + " must be [lo, hi]");
        r[static_cast<std::size_t>(d)] = {iv[0].get<double>(), iv[1].get<double>()};
        if (r[static_cast<std::size_t>(d)].lo > r[static_cast<std::size_t>(d)].hi)
            throw ConfigError("data.state_ranges." + name + ": lo > hi");
    }
    return r;
}

inline DataConfig parse_data(const json& j) {
    check_keys(j, "data", {"n", "test_n", "sigma", "seed", "test_seed", "state_ranges"});
    DataConfig d;
    d.n = get_field<std::size_t>(j, "data", "n", d.n);
    d.test_n = get_field<std::size_t>(j, "data", "test_n", d.test_n);
    d.sigma = get_field(j, "data", "sigma", d.sigma);
    d.seed = get_field<std::uint64_t>(j, "data", "seed", d.seed);
    d.test_seed = get_field<std::uint64_t>(j, "data", "test_seed", d.test_seed);
    if (j.contains("state_ranges")) d.ranges = parse_ranges(j.at("state_ranges"));
    if (d.n < 1) throw ConfigError("data.n must be >= 1");
    if (d.sigma < 0.0) throw ConfigError("data.sigma must be >= 0");
    return d;
}

inline net::TrainConfig parse_train(const json& j) {
    check_keys(j, "train",
               {"batch_n", "epochs", "learning_rate", "tau", "lambda", "feature_dim",
                "encoder_hidden", "decoder_hidden", "sigma_noise", "seed", "init"});
    net::TrainConfig t;
    t.batch_n = get_field(j, "train", "batch_n", t.batch_n);
    t.epochs = get_field(j, "train", "epochs", t.epochs);
    t.learning_rate = get_field(j, "train", "learning_rate", t.learning_rate);
    t.tau = get_field(j, "train", "tau", t.tau);
    t.lambda = get_field(j, "train", "lambda", t.lambda);
    t.feature_dim = get_field(j, "train", "feature_dim", t.feature_dim);
    t.encoder_hidden = get_field(j, "train", "encoder_hidden", t.encoder_hidden);
    t.decoder_hidden = get_field(j, "train", "decoder_hidden", t.decoder_hidden);
    t.sigma_noise = get_field(j, "train", "sigma_noise", t.sigma_noise);
    t.seed = get_field<std::uint64_t>(j, "train", "seed", t.seed);
    const std::string init = get_field<std::string>(j, "train", "init", "he_xavier");
    if (init == "he_xavier")
        t.init = net::InitScheme::kHeXavier;
    else if (init == "zeros")
        t.init = net::InitScheme::kZeros;
    else
        throw ConfigError("train.init must be \"he_xavier\" or \"zeros\"");
    try {
        net::validate(t);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    return t;
}

inline EvalOptionsConfig parse_eval(const json& j) {
    check_keys(j, "eval", {"segment_lengths", "stride", "use_rmse"});
    EvalOptionsConfig e;
    e.segment_lengths = get_field(j, "eval", "segment_lengths", e.segment_lengths);
    e.stride = get_field(j, "eval", "stride", e.stride);
    e.use_rmse = get_field(j, "eval", "use_rmse", e.use_rmse);
    if (e.segment_lengths.empty()) throw ConfigError("eval.segment_lengths must be non-empty");
    for (double len : e.segment_lengths)
        if (!(len > 0.0)) throw ConfigError("eval.segment_lengths entries must be > 0");
    if (e.stride < 1) throw ConfigError("eval.stride must be >= 1");
    return e;
}

inline PathsConfig parse_paths(const json& j, const std::filesystem::path& base) {
    check_keys(j, "paths", {"dataset_dir", "test_dataset_dir", "checkpoint_dir", "report_dir"});
    auto resolve = [&base](const std::string& p) -> std::filesystem::path {
        if (p.empty()) return {};
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    PathsConfig p;
    p.dataset_dir = resolve(get_field<std::string>(j, "paths", "dataset_dir", "dataset"));
    p.test_dataset_dir = resolve(get_field<std::string>(j, "paths", "test_dataset_dir", ""));
    p.checkpoint_dir = resolve(get_field<std::string>(j, "paths", "checkpoint_dir", "checkpoints"));
    p.report_dir = resolve(get_field<std::string>(j, "paths", "report_dir", "reports"));
    return p;
}

inline nlohmann::json train_config_echo(const net::TrainConfig& t) {
    nlohmann::json j;
    j["batch_n"] = t.batch_n;
    j["epochs"] = t.epochs;
    j["learning_rate"] = t.learning_rate;
    j["tau"] = t.tau;
    j["lambda"] = t.lambda;
    j["feature_dim"] = t.feature_dim;
    j["encoder_hidden"] = t.encoder_hidden;
    j["decoder_hidden"] = t.decoder_hidden;
    j["sigma_noise"] = t.sigma_noise;
    j["seed"] = t.seed;
    j["dof_index"] = t.dof_index;
    j["init"] = t.init == net::InitScheme::kZeros ? "zeros" : "he_xavier";
    return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace detail

// Loads and validates a JSON run configuration. Relative paths resolve
// against the config file's directory.
inline RunConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot open config: " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    detail::check_keys(j, "config", {"version", "scene", "data", "train", "eval", "paths"});
    if (!j.contains("version")) throw ConfigError("config.version is required");
    if (j.at("version").get<int>() != kConfigVersion)
        throw ConfigError("unsupported config version");
    RunConfig c;
    const auto base = std::filesystem::absolute(file).parent_path();
    if (j.contains("scene")) c.scene = detail::parse_scene(j.at("scene"));
    if (j.contains("data")) c.data = detail::parse_data(j.at("data"));
    if (j.contains("train")) c.train = detail::parse_train(j.at("train"));
    if (j.contains("eval")) c.eval = detail::parse_eval(j.at("eval"));
    c.paths = detail::parse_paths(j.contains("paths") ? j.at("paths") : nlohmann::json::object(), base);
    return c;
}

inline std::string checkpoint_name(int dof) {
    return "model_" + std::string(pose::kDofNames[static_cast<std::size_t>(dof)]) + ".json";
}

// Generates the train split (and test split when data.test_n > 0). Outputs
// are a pure function of the config, so reruns are byte-identical.
inline int cmd_gen(const RunConfig& c, std::ostream& log = std::cout) {
    const auto train_set =
        synth::sample_dataset(c.data.n, c.data.ranges, c.scene, c.data.sigma, c.data.seed);
    synth::write_dataset(train_set, c.paths.dataset_dir);
    log << "gen: wrote " << train_set.size() << " samples to " << c.paths.dataset_dir.string()
        << "\n";
    if (c.data.test_n > 0) {
        if (c.paths.test_dataset_dir.empty())
            throw ConfigError("data.test_n > 0 requires paths.test_dataset_dir");
        const auto test_set = synth::sample_dataset(c.data.test_n, c.data.ranges, c.scene,
                                                    c.data.sigma, c.data.test_seed);
        synth::write_dataset(test_set, c.paths.test_dataset_dir);
        log << "gen: wrote " << test_set.size() << " samples to "
            << c.paths.test_dataset_dir.string() << "\n";
    }
    return 0;
}

namespace detail {

inline std::vector<synth::MotionSample> load_train_dataset(const RunConfig& c) {
    if (!std::filesystem::exists(c.paths.dataset_dir / "manifest.json"))
        throw std::runtime_error("dataset not found: " + c.paths.dataset_dir.string() +
                                 " (run `rank-odo gen` first)");
    return synth::read_dataset(c.paths.dataset_dir);
}

inline std::vector<synth::MotionSample> load_eval_dataset(const RunConfig& c) {
    if (!c.paths.test_dataset_dir.empty() &&
        std::filesystem::exists(c.paths.test_dataset_dir / "manifest.json"))
        return synth::read_dataset(c.paths.test_dataset_dir);
    return load_train_dataset(c);
}

// Every observation of the sample, each as its own row: the anchor flow
// plus the augmented copy (which shares the anchor's state label). Rank
// correlations are measured over all views; trajectory reconstruction uses
// only the anchor observations.
inline std::vector<synth::MotionSample> expand_views(std::span<const synth::MotionSample> samples) {
    std::vector<synth::MotionSample> views;
    views.reserve(2 * samples.size());
    for (const auto& s : samples) {
        views.push_back(synth::MotionSample{s.state, s.flow_field, std::nullopt});
        if (s.augmented_flow)
            views.push_back(synth::MotionSample{s.state, *s.augmented_flow, std::nullopt});
    }
    return views;
}

}  // namespace detail

// Trains one DoF (or all six when dof < 0) and writes a checkpoint plus a
// loss-trace CSV per DoF.
inline int cmd_train(const RunConfig& c, int dof = -1, std::ostream& log = std::cout) {
    const auto dataset = detail::load_train_dataset(c);
    std::filesystem::create_directories(c.paths.checkpoint_dir);
    std::filesystem::create_directories(c.paths.report_dir);
    std::vector<int> dofs;
    if (dof < 0)
        dofs = {0, 1, 2, 3, 4, 5};
    else
        dofs = {dof};
    for (int d : dofs) {
        net::TrainConfig tc = c.train;
        tc.dof_index = d;
        const auto report = net::train_dof(dataset, tc);
        const auto ckpt = c.paths.checkpoint_dir / checkpoint_name(d);
        net::save_model(report.model, ckpt, detail::train_config_echo(tc));
        const auto trace_path =
            c.paths.report_dir /
            ("loss_trace_" + std::string(pose::kDofNames[static_cast<std::size_t>(d)]) + ".csv");
        detail::write_text(trace_path, eval::loss_trace_csv(report.loss_trace));
        log << "train[" << pose::kDofNames[static_cast<std::size_t>(d)] << "]: " << report.loss_trace.size()
            << " steps, final loss " << eval::csv::num(report.loss_trace.back()) << ", "
            << report.seconds << " s -> " << ckpt.string() << "\n";
    }
    return 0;
}

namespace detail {

inline pose::Trajectory trajectory_from_states(std::span<const synth::MotionSample> samples) {
    std::vector<pose::RigidTransform> rels;
    rels.reserve(samples.size());
    for (const auto& s : samples) rels.push_back(pose::euler_to_transform(s.state));
    return pose::accumulate(rels);
}

inline pose::Trajectory trajectory_from_models(const std::array<net::Model, 6>& models,
                                               std::span<const synth::MotionSample> samples) {
    std::vector<pose::RigidTransform> rels;
    rels.reserve(samples.size());
    for (const auto& s : samples)
        rels.push_back(pose::euler_to_transform(net::infer_all(models, s.flow_field)));
    return pose::accumulate(rels);
}

inline eval::DriftOptions drift_options(const RunConfig& c) {
    return {c.eval.segment_lengths, c.eval.stride, c.eval.use_rmse};
}

}  // namespace detail

// Evaluates checkpoints on the held-out dataset: per-DoF rank correlations,
// and — when all six checkpoints exist — trajectory drift versus ground
// truth. Alternatively compares two KITTI pose files directly.
inline int cmd_eval(const RunConfig& c, const std::optional<std::filesystem::path>& gt_poses = {},
                    const std::optional<std::filesystem::path>& pred_poses = {},
                    std::ostream& log = std::cout) {
    std::filesystem::create_directories(c.paths.report_dir);

    if (gt_poses.has_value() != pred_poses.has_value())
        throw ConfigError("--gt-poses and --pred-poses must be given together");
    if (gt_poses) {
        std::ifstream gt_in(*gt_poses), pred_in(*pred_poses);
        if (!gt_in) throw std::runtime_error("cannot open: " + gt_poses->string());
        if (!pred_in) throw std::runtime_error("cannot open: " + pred_poses->string());
        const auto gt = pose::parse_kitti_poses(gt_in);
        const auto pred = pose::parse_kitti_poses(pred_in);
        const auto drift = eval::kitti_drift(gt, pred, detail::drift_options(c));
        detail::write_text(c.paths.report_dir / "drift.csv", eval::drift_csv(drift));
        log << "eval: t_rel " << eval::csv::num(drift.t_rel) << " %, r_rel "
            << eval::csv::num(drift.r_rel) << " deg/100m over " << drift.segment_count
            << " segments\n";
        return 0;
    }

    const auto dataset = detail::load_eval_dataset(c);
    const auto views = detail::expand_views(dataset);
    std::vector<eval::DofCorrelationRow> rows;
    std::array<net::Model, 6> models;
    bool all_models = true;
    for (int d = 0; d < 6; ++d) {
        const auto ckpt = c.paths.checkpoint_dir / checkpoint_name(d);
        if (!std::filesystem::exists(ckpt)) {
            all_models = false;
            continue;
        }
        auto model = net::load_model(ckpt);
        const auto dump = eval::latent_dump(model, views);
        rows.push_back({std::string(pose::kDofNames[static_cast<std::size_t>(d)]),
                        eval::ranking_alignment(dump)});
        models[static_cast<std::size_t>(d)] = std::move(model);
    }
    if (rows.empty())
        throw std::runtime_error("no checkpoints found in " + c.paths.checkpoint_dir.string());
    detail::write_text(c.paths.report_dir / "correlations.csv", eval::correlation_csv(rows));
    for (const auto& row : rows)
        log << "eval[" << row.dof << "]: r_s " << eval::csv::num(row.report.r_s) << ", r_k "
            << eval::csv::num(row.report.r_k) << " (n " << row.report.n << ")\n";

    if (all_models) {
        const auto gt_traj = detail::trajectory_from_states(dataset);
        const auto pred_traj = detail::trajectory_from_models(models, dataset);
        detail::write_text(c.paths.report_dir / "gt_poses.txt", pose::write_kitti_poses(gt_traj));
        detail::write_text(c.paths.report_dir / "pred_poses.txt",
                           pose::write_kitti_poses(pred_traj));
        const auto drift = eval::kitti_drift(gt_traj, pred_traj, detail::drift_options(c));
        detail::write_text(c.paths.report_dir / "drift.csv", eval::drift_csv(drift));
        log << "eval: t_rel " << eval::csv::num(drift.t_rel) << " %, r_rel "
            << eval::csv::num(drift.r_rel) << " deg/100m over " << drift.segment_count
            << " segments\n";
    } else {
        log << "eval: skipping drift (need all six checkpoints)\n";
    }
    return 0;
}

// Dumps the latent rows for one DoF's checkpoint.
inline int cmd_latent(const RunConfig& c, int dof = 2, std::ostream& log = std::cout) {
    const auto ckpt = c.paths.checkpoint_dir / checkpoint_name(dof);
    const auto model = net::load_model(ckpt);
    const auto dataset = detail::load_eval_dataset(c);
    const auto dump = eval::latent_dump(model, dataset);
    std::filesystem::create_directories(c.paths.report_dir);
    const auto out_path =
        c.paths.report_dir /
        ("latent_" + std::string(pose::kDofNames[static_cast<std::size_t>(dof)]) + ".csv");
    detail::write_text(out_path, eval::latent_csv(dump));
    log << "latent: wrote " << dump.rows() << " rows to " << out_path.string() << "\n";
    return 0;
}

// Deterministic subset of the training data for one sweep fraction: first
// ceil(f*n) entries of a seeded shuffle, restored to dataset order. At
// f = 1.0 this is exactly the full dataset, so that row reproduces a plain
// train+eval run.
inline std::vector<std::size_t> sweep_subset_indices(std::size_t n, double fraction,
                                                     std::uint64_t seed) {
    auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    k = std::min(std::max<std::size_t>(k, 1), n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::Engine eng(rng::derive_seed(seed, 0x5CA1E));
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t left = n - i;
        const auto pick =
            i + std::min<std::size_t>(left - 1, static_cast<std::size_t>(rng::uniform01(eng) *
                                                                          static_cast<double>(left)));
        std::swap(order[i], order[pick]);
    }
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

// Trains all six DoFs per training-set fraction and reports the target
// DoF's Spearman correlation plus trajectory drift on the held-out set.
inline int cmd_scale_sweep(const RunConfig& c, int target_dof = 2,
                           std::span<const double> fractions = {},
                           std::ostream& log = std::cout) {
    static constexpr std::array<double, 5> kDefaultFractions{0.2, 0.4, 0.6, 0.8, 1.0};
    if (fractions.empty()) fractions = kDefaultFractions;
    const auto full = detail::load_train_dataset(c);
    const auto test = detail::load_eval_dataset(c);
    const auto test_views = detail::expand_views(test);

    std::vector<eval::SweepRow> rows;
    for (double f : fractions) {
        if (!(f > 0.0) || f > 1.0) throw ConfigError("sweep fractions must lie in (0, 1]");
        const auto idx = sweep_subset_indices(full.size(), f, c.train.seed);
        std::vector<synth::MotionSample> subset;
        subset.reserve(idx.size());
        for (std::size_t i : idx) subset.push_back(full[i]);

        std::array<net::Model, 6> models;
        double r_s = 0.0;
        for (int d = 0; d < 6; ++d) {
            net::TrainConfig tc = c.train;
            tc.dof_index = d;
            auto report = net::train_dof(subset, tc);
            if (d == target_dof)
                r_s = eval::ranking_alignment(eval::latent_dump(report.model, test_views)).r_s;
            models[static_cast<std::size_t>(d)] = std::move(report.model);
        }
        const auto drift = eval::kitti_drift(detail::trajectory_from_states(test),
                                             detail::trajectory_from_models(models, test),
                                             detail::drift_options(c));
        rows.push_back({f, r_s, drift.t_rel, drift.r_rel});
        log << "scale-sweep: fraction " << f << " (n " << idx.size() << "): r_s "
            << eval::csv::num(r_s) << ", t_rel " << eval::csv::num(drift.t_rel) << ", r_rel "
            << eval::csv::num(drift.r_rel) << "\n";
    }
    std::filesystem::create_directories(c.paths.report_dir);
    const auto out_path =
        c.paths.report_dir /
        ("scale_sweep_" + std::string(pose::kDofNames[static_cast<std::size_t>(target_dof)]) +
         ".csv");
    detail::write_text(out_path, eval::sweep_csv(rows));
    log << "scale-sweep: wrote " << out_path.string() << "\n";
    return 0;
}

}  // namespace rankodo::cli
