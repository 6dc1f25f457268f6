// Acceptance suite: the ten project-level criteria, one gtest case each, so
// the runner prints a pass/fail line per criterion. Several criteria drive
// the full CLI pipeline (gen -> train -> eval -> scale-sweep) on the
// synthetic z-translation benchmark.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <json.hpp>

#include "oracles.hpp"
#include "rankodo/cli.hpp"
#include "rankodo/eval.hpp"
#include "rankodo/net.hpp"
#include "rankodo/pose.hpp"
#include "rankodo/rank.hpp"
#include "rankodo/rng.hpp"
#include "rankodo/synth.hpp"

namespace {

using namespace rankodo;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path make_temp_dir(const std::string& tag) {
    std::random_device rd;
    const auto dir = fs::temp_directory_path() / ("rankodo_accept_" + tag + "_" + std::to_string(rd()));
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    EXPECT_TRUE(in.good()) << p.string();
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream fs_(line);
        std::string field;
        while (std::getline(fs_, field, ',')) fields.push_back(field);
        rows.push_back(std::move(fields));
    }
    return rows;
}

// The closed-loop benchmark: 512 train + 128 test samples whose only moving
// DoF is z in [0.5, 2.0] m, with the default loss settings. The scene is
// deliberately low-resolution/low-focal so the fixed 0.05 augmentation
// noise is a real fraction of the flow magnitudes; rank correlations are
// then limited by learned noise robustness, which grows with training data.
cli::RunConfig benchmark_config(const fs::path& dir) {
    nlohmann::json j;
    j["version"] = 1;
    j["scene"] = {{"width", 16},
                  {"height", 16},
                  {"focal_length", 40.0},
                  {"principal_point", {8.0, 8.0}},
                  {"plane_depth", 10.0}};
    j["data"] = {{"n", 512},
                 {"test_n", 128},
                 {"sigma", 0.05},
                 {"seed", 1001},
                 {"test_seed", 1002},
                 {"state_ranges", {{"z", {0.5, 2.0}}}}};
    j["train"] = {{"batch_n", 16},          {"epochs", 60},
                  {"learning_rate", 1e-3},  {"tau", 2.0},
                  {"lambda", 2.0},          {"feature_dim", 32},
                  {"encoder_hidden", {64}}, {"decoder_hidden", 32},
                  {"sigma_noise", 0.05},    {"seed", 2024}};
    j["eval"] = {{"segment_lengths", {5.0, 10.0}}, {"stride", 1}};
    j["paths"] = {{"dataset_dir", "data/train"},
                  {"test_dataset_dir", "data/test"},
                  {"checkpoint_dir", "ckpt"},
                  {"report_dir", "reports"}};
    const auto path = dir / "config.json";
    std::ofstream(path) << j.dump(2) << '\n';
    return cli::load_config(path);
}

double csv_field(const std::vector<std::vector<std::string>>& rows, const std::string& key,
                 std::size_t column) {
    for (const auto& row : rows)
        if (!row.empty() && row[0] == key) return std::stod(row.at(column));
    ADD_FAILURE() << "row not found: " << key;
    return std::nan("");
}

TEST(Acceptance, Criterion01GradientCorrectness) {
    const auto t0 = Clock::now();
    const std::size_t n_pairs_options[] = {2, 3, 4};
    const std::size_t dims[] = {2, 4, 8};
    const double taus[] = {0.5, 2.0};
    int configs = 0;
    std::uint64_t seed = 900;
    for (std::size_t n_pairs : n_pairs_options)
        for (std::size_t dim : dims)
            for (double tau : taus)
                for (int rep = 0; rep < 6; ++rep) {
                    rng::Engine eng(seed++);
                    const auto b = oracles::random_batch(eng, n_pairs, dim);
                    const rank::LossHyper h{tau, 2.0};
                    const auto res = rank::suprnc_batch(b, h);
                    for (std::size_t f = 0; f < b.features.size(); ++f) {
                        const double fd = oracles::fd_feature_grad(b, h, f);
                        ASSERT_TRUE(oracles::grad_close(res.d_features[f], fd))
                            << "config " << configs << " feature " << f << ": analytic "
                            << res.d_features[f] << " fd " << fd;
                    }
                    for (std::size_t i = 0; i < b.size(); ++i) {
                        const double fd = oracles::fd_prediction_grad(b, h, i);
                        ASSERT_TRUE(oracles::grad_close(res.d_predictions[i], fd))
                            << "config " << configs << " prediction " << i;
                    }
                    ++configs;
                }
    EXPECT_GE(configs, 100);
    const double elapsed = seconds_since(t0);
    EXPECT_LT(elapsed, 30.0);
    std::printf("criterion 1: %d configs checked in %.2f s\n", configs, elapsed);
}

TEST(Acceptance, Criterion02PlackettLuceNormalization) {
    const auto t0 = Clock::now();
    rng::Engine eng(901);
    for (std::size_t n = 2; n <= 6; ++n) {
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> scores(n);
            for (auto& s : scores) s = rng::uniform(eng, 0.05, 10.0);
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            double total = 0.0;
            do {
                total += rank::pl_ranking_probability(scores, order);
            } while (std::next_permutation(order.begin(), order.end()));
            ASSERT_NEAR(total, 1.0, 1e-12) << "n = " << n << " rep " << rep;
        }
    }
    const double elapsed = seconds_since(t0);
    EXPECT_LT(elapsed, 5.0);
    std::printf("criterion 2: permutation sums normalized, %.2f s\n", elapsed);
}

TEST(Acceptance, Criterion03LossDefinitionOracle) {
    rng::Engine eng(902);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n_pairs = 2 + static_cast<std::size_t>(trial % 3);
        const std::size_t dim = 2 + static_cast<std::size_t>(trial % 7);
        const auto b = oracles::random_batch(eng, n_pairs, dim);
        const rank::LossHyper h{trial % 2 == 0 ? 2.0 : 0.5, trial % 3 == 0 ? 0.0 : 2.0};
        const double got = rank::suprnc_batch(b, h).value;
        const double want = static_cast<double>(oracles::direct_suprnc_value(b, h));
        ASSERT_NEAR(got, want, 1e-10) << "trial " << trial;
    }
    std::printf("criterion 3: 50 batches match the direct-summation oracle\n");
}

TEST(Acceptance, Criterion04MetricOracles) {
    rng::Engine eng(903);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng::uniform(eng, 0, 498));
        const bool ties = trial % 2 == 0;
        std::vector<double> a(n), b(n);
        for (auto& x : a) {
            x = rng::uniform(eng, -10, 10);
            if (ties) x = std::round(x);
        }
        for (auto& x : b) {
            x = rng::uniform(eng, -10, 10);
            if (ties) x = std::round(x);
        }
        ASSERT_NEAR(eval::spearman(a, b).value, oracles::brute_spearman(a, b), 1e-12)
            << "trial " << trial << " n " << n;
        ASSERT_NEAR(eval::kendall(a, b).value, oracles::brute_kendall(a, b), 1e-12)
            << "trial " << trial << " n " << n;
    }
    std::printf("criterion 4: spearman and kendall match brute force\n");
}

TEST(Acceptance, Criterion05DriftAnalyticCases) {
    // (a) identical trajectories
    rng::Engine eng(904);
    pose::Trajectory traj{pose::RigidTransform{}};
    for (int k = 0; k < 300; ++k) {
        pose::EulerPose6D rel;
        rel.z = rng::uniform(eng, 0.5, 2.0);
        rel.yaw = rng::uniform(eng, -0.01, 0.01);
        traj.push_back(pose::compose(traj.back(), pose::euler_to_transform(rel)));
    }
    eval::DriftOptions opt;
    opt.lengths = {20, 50, 100};
    opt.stride = 5;
    const auto identical = eval::kitti_drift(traj, traj, opt);
    ASSERT_FALSE(identical.empty);
    ASSERT_EQ(identical.t_rel, 0.0);
    ASSERT_EQ(identical.r_rel, 0.0);

    // (b) straight line, predictions scaled by 1.01
    auto line = [](std::size_t frames, double scale) {
        std::vector<pose::RigidTransform> rels(frames - 1,
                                               pose::RigidTransform{pose::Mat3{}, {0, 0, scale}});
        return pose::accumulate(rels);
    };
    const auto scaled = eval::kitti_drift(line(1000, 1.0), line(1000, 1.01));
    ASSERT_NEAR(scaled.t_rel, 1.0, 1e-9);
    ASSERT_EQ(scaled.r_rel, 0.0);

    // (c) constant yaw drift of 0.001 rad per meter
    const auto gt = line(1000, 1.0);
    pose::Trajectory pred = gt;
    for (std::size_t k = 0; k < pred.size(); ++k)
        pred[k].rotation = pose::rotation_z(0.001 * static_cast<double>(k));
    const auto yawed = eval::kitti_drift(gt, pred);
    const double want = 0.001 * (180.0 / std::numbers::pi) * 100.0;
    ASSERT_NEAR(yawed.r_rel, want, 1e-6);
    std::printf("criterion 5: t_rel %.12f %%, r_rel %.9f deg/100m\n", scaled.t_rel, yawed.r_rel);
}

TEST(Acceptance, Criterion06PoseAlgebraRoundTrips) {
    rng::Engine eng(905);
    for (int trial = 0; trial < 10000; ++trial) {
        const auto p = oracles::random_pose(eng);
        const auto q = pose::transform_to_euler(pose::euler_to_transform(p));
        ASSERT_NEAR(p.x, q.x, 1e-10);
        ASSERT_NEAR(p.y, q.y, 1e-10);
        ASSERT_NEAR(p.z, q.z, 1e-10);
        ASSERT_NEAR(p.roll, q.roll, 1e-10);
        ASSERT_NEAR(p.pitch, q.pitch, 1e-10);
        ASSERT_NEAR(p.yaw, q.yaw, 1e-10);
    }
    for (int trial = 0; trial < 10000; ++trial) {
        const auto a = oracles::random_transform(eng);
        const auto b = oracles::random_transform(eng);
        const auto back = pose::compose(a, pose::relative_pose(a, b));
        for (int i = 0; i < 9; ++i)
            ASSERT_NEAR(back.rotation.m[static_cast<std::size_t>(i)],
                        b.rotation.m[static_cast<std::size_t>(i)], 1e-10);
        ASSERT_NEAR(back.translation.x, b.translation.x, 1e-10);
        ASSERT_NEAR(back.translation.y, b.translation.y, 1e-10);
        ASSERT_NEAR(back.translation.z, b.translation.z, 1e-10);
    }
    pose::Trajectory traj;
    for (int k = 0; k < 10000; ++k) traj.push_back(oracles::random_transform(eng));
    const auto reparsed = pose::parse_kitti_poses(pose::write_kitti_poses(traj));
    ASSERT_EQ(reparsed.size(), traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) {
        for (int i = 0; i < 9; ++i)
            ASSERT_NEAR(reparsed[k].rotation.m[static_cast<std::size_t>(i)],
                        traj[k].rotation.m[static_cast<std::size_t>(i)], 1e-9);
        ASSERT_NEAR(reparsed[k].translation.x, traj[k].translation.x, 1e-9);
        ASSERT_NEAR(reparsed[k].translation.y, traj[k].translation.y, 1e-9);
        ASSERT_NEAR(reparsed[k].translation.z, traj[k].translation.z, 1e-9);
    }
    std::printf("criterion 6: 3x10^4 round trips within tolerance\n");
}

TEST(Acceptance, Criterion07ClosedLoopRankingExperiment) {
    const auto t0 = Clock::now();
    const auto dir = make_temp_dir("c7");
    const auto config = benchmark_config(dir);
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_gen(config, log), 0);
    ASSERT_EQ(cli::cmd_train(config, 2, log), 0);
    ASSERT_EQ(cli::cmd_eval(config, {}, {}, log), 0);

    const auto corr = parse_csv(read_file(config.paths.report_dir / "correlations.csv"));
    const double r_s = csv_field(corr, "z", 1);
    const double r_k = csv_field(corr, "z", 2);
    EXPECT_GE(r_s, 0.90);
    EXPECT_GE(r_k, 0.75);

    const auto trace_rows = parse_csv(read_file(config.paths.report_dir / "loss_trace_z.csv"));
    ASSERT_LE(trace_rows.size() - 1, 2000u);

    // post-training latent geometry: across test pairs, feature similarity
    // must rank inversely with state distance
    const auto model = net::load_model(config.paths.checkpoint_dir / "model_z.json");
    const auto test_set = synth::read_dataset(config.paths.test_dataset_dir);
    const auto dump = eval::latent_dump(model, test_set);
    std::vector<double> sims, dists;
    for (std::size_t i = 0; i < dump.rows(); ++i)
        for (std::size_t j = i + 1; j < dump.rows(); ++j) {
            sims.push_back(rank::similarity(
                std::span(dump.features).subspan(i * dump.dim, dump.dim),
                std::span(dump.features).subspan(j * dump.dim, dump.dim)));
            dists.push_back(rank::state_distance(dump.labels[i], dump.labels[j]));
        }
    const double sim_vs_dist = eval::spearman(sims, dists).value;
    EXPECT_LT(sim_vs_dist, -0.8);

    const double elapsed = seconds_since(t0);
    EXPECT_LT(elapsed, 300.0);
    std::printf("criterion 7: r_s %.6f, r_k %.6f over %zu test views, sim-vs-dist %.4f, %.1f s\n",
                r_s, r_k, static_cast<std::size_t>(csv_field(corr, "z", 3)), sim_vs_dist, elapsed);
    fs::remove_all(dir);
}

TEST(Acceptance, Criterion08ScaleSweepMonotonicity) {
    const auto dir = make_temp_dir("c8");
    const auto config = benchmark_config(dir);
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_gen(config, log), 0);
    ASSERT_EQ(cli::cmd_scale_sweep(config, 2, {}, log), 0);

    const auto rows = parse_csv(read_file(config.paths.report_dir / "scale_sweep_z.csv"));
    ASSERT_EQ(rows.size(), 6u);  // header + 5 fractions
    const double r_s_small = csv_field(rows, "0.2", 1);
    const double r_s_full = csv_field(rows, "1", 1);
    const double t_rel_small = csv_field(rows, "0.2", 2);
    const double t_rel_full = csv_field(rows, "1", 2);
    EXPECT_GT(r_s_full, r_s_small);
    EXPECT_LT(t_rel_full, t_rel_small);
    std::printf("criterion 8: r_s %.4f -> %.4f, t_rel %.3f %% -> %.3f %%\n", r_s_small, r_s_full,
                t_rel_small, t_rel_full);
    fs::remove_all(dir);
}

TEST(Acceptance, Criterion09DeterministicReruns) {
    const auto dir_a = make_temp_dir("c9a");
    const auto dir_b = make_temp_dir("c9b");
    std::ostringstream log;
    for (const auto& dir : {dir_a, dir_b}) {
        const auto config = benchmark_config(dir);
        ASSERT_EQ(cli::cmd_gen(config, log), 0);
        ASSERT_EQ(cli::cmd_train(config, 2, log), 0);
        ASSERT_EQ(cli::cmd_eval(config, {}, {}, log), 0);
    }
    const auto trace_a = read_file(dir_a / "reports/loss_trace_z.csv");
    const auto trace_b = read_file(dir_b / "reports/loss_trace_z.csv");
    ASSERT_EQ(trace_a, trace_b);
    const auto corr_a = read_file(dir_a / "reports/correlations.csv");
    const auto corr_b = read_file(dir_b / "reports/correlations.csv");
    ASSERT_EQ(corr_a, corr_b);
    const auto ckpt_a = read_file(dir_a / "ckpt/model_z.json");
    const auto ckpt_b = read_file(dir_b / "ckpt/model_z.json");
    ASSERT_EQ(ckpt_a, ckpt_b);
    std::printf("criterion 9: reruns byte-identical (%zu-byte trace)\n", trace_a.size());
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST(Acceptance, Criterion10DegenerateBatchIdentity) {
    rank::RankingBatch b;
    b.dim = 8;
    b.features.resize(16);
    for (std::size_t c = 0; c < 8; ++c) b.features[c] = b.features[8 + c] = 0.125 * static_cast<double>(c) - 0.3;
    b.labels = {0.75, 0.75};
    b.predictions = {0.75, 0.75};
    b.targets = {0.75, 0.75};
    const auto res = rank::suprnc_batch(b, {2.0, 2.0});
    ASSERT_EQ(res.value, 0.0);
    for (double g : res.d_features) ASSERT_EQ(g, 0.0);
    for (double g : res.d_predictions) ASSERT_EQ(g, 0.0);
    std::printf("criterion 10: degenerate batch gives exact zeros\n");
}

}  // namespace
