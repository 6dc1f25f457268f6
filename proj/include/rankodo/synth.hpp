#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankodo/flow.hpp"
#include "rankodo/pose.hpp"
#include "rankodo/rng.hpp"

namespace rankodo::synth {

struct DegenerateGeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Pinhole camera looking at a fronto-parallel plane Z = plane_depth in the
// first camera frame. Stands in for real imagery: the induced flow is exact,
// so state -> observation ground truth is known in closed form.
struct SceneConfig {
    int width = 32;
    int height = 32;
    double focal_length = 100.0;  // pixels
    double cx = 16.0;             // principal point
    double cy = 16.0;
    double plane_depth = 10.0;  // meters
};

inline bool is_valid(const SceneConfig& s) {
    return s.width >= 1 && s.height >= 1 && s.focal_length > 0.0 && s.plane_depth > 0.1 &&
           std::isfinite(s.cx) && std::isfinite(s.cy);
}

// One training/evaluation unit: relative motion frame1 -> frame2, its exact
// flow, and a noise-augmented copy sharing the same state.
struct MotionSample {
    pose::EulerPose6D state;
    flow::FlowField flow_field;
    std::optional<flow::FlowField> augmented_flow;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Per-DoF sampling intervals, ordered x, y, z, roll, pitch, yaw.
using StateRanges = std::array<Interval, 6>;

constexpr double kMinDepth = 0.1;  // meters; plane must stay in front

// Exact flow of a planar scene under `motion`: back-project each pixel to
// the plane, move it into the second camera frame, reproject, subtract.
inline flow::FlowField generate_flow(const pose::EulerPose6D& motion, const SceneConfig& scene) {
    if (!is_valid(scene)) throw std::invalid_argument("invalid scene configuration");
    const pose::RigidTransform t = pose::euler_to_transform(motion);
    const pose::Mat3 r_inv = pose::transpose(t.rotation);
    const double f = scene.focal_length;
    const double d = scene.plane_depth;

    flow::FlowField out = flow::FlowField::zeros(scene.width, scene.height);
    for (int y = 0; y < scene.height; ++y) {
        for (int x = 0; x < scene.width; ++x) {
            const pose::Vec3 p{d * (x - scene.cx) / f, d * (y - scene.cy) / f, d};
            const pose::Vec3 q = pose::apply(r_inv, p - t.translation);
            if (q.z <= kMinDepth)
                throw DegenerateGeometryError(
                    "plane point behind or too close to the second camera at pixel (" +
                    std::to_string(x) + ", " + std::to_string(y) + ")");
            out.u(x, y) = static_cast<float>(f * q.x / q.z + scene.cx - x);
            out.v(x, y) = static_cast<float>(f * q.y / q.z + scene.cy - y);
        }
    }
    return out;
}

// Adds iid N(0, sigma^2) to every scalar channel. sigma = 0 returns a
// bit-identical copy.
inline flow::FlowField augment(const flow::FlowField& f, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
    flow::FlowField out = f;
    if (sigma == 0.0) return out;
    rng::NormalSampler normal(seed);
    for (float& v : out.data) v = static_cast<float>(static_cast<double>(v) + sigma * normal());
    return out;
}

// Draws n states uniformly per DoF, generates exact flows and augmented
// copies. Sample k depends only on (seed, k), so generation order is free.
inline std::vector<MotionSample> sample_dataset(std::size_t n, const StateRanges& ranges,
                                                const SceneConfig& scene, double sigma,
                                                std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
    for (const auto& iv : ranges) {
        if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi)
            throw std::invalid_argument("state range interval invalid");
    }
    std::vector<MotionSample> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        rng::Engine eng(rng::derive_seed(seed, 2 * k));
        pose::EulerPose6D st;
        for (int d = 0; d < 6; ++d)
            pose::component(st, d) = rng::uniform(eng, ranges[static_cast<std::size_t>(d)].lo,
                                                  ranges[static_cast<std::size_t>(d)].hi);
        auto fl = generate_flow(st, scene);
        auto aug = augment(fl, sigma, rng::derive_seed(seed, 2 * k + 1));
        out[k] = MotionSample{st, std::move(fl), std::move(aug)};
    }
    return out;
}

namespace detail {

inline std::string sample_name(std::size_t k, bool augmented) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "sample_%06zu%s.flo", k, augmented ? "_aug" : "");
    return buf;
}

}  // namespace detail

// Dataset directory layout: one .flo per (sample, variant) plus
// manifest.json, a JSON array of {state, flow_file, aug_flow_file} records.
inline void write_dataset(std::span<const MotionSample> samples,
                          const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::array();
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto& s = samples[k];
        const std::string flow_name = detail::sample_name(k, false);
        flow::write_flo_file(s.flow_field, dir / flow_name);
        nlohmann::json rec;
        rec["state"] = {s.state.x, s.state.y, s.state.z, s.state.roll, s.state.pitch, s.state.yaw};
        rec["flow_file"] = flow_name;
        if (s.augmented_flow) {
            const std::string aug_name = detail::sample_name(k, true);
            flow::write_flo_file(*s.augmented_flow, dir / aug_name);
            rec["aug_flow_file"] = aug_name;
        }
        manifest.push_back(std::move(rec));
    }
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

inline std::vector<MotionSample> read_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) throw std::runtime_error("cannot open manifest: " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    in >> manifest;
    if (!manifest.is_array()) throw std::runtime_error("manifest is not a JSON array");
    std::vector<MotionSample> out;
    out.reserve(manifest.size());
    for (const auto& rec : manifest) {
        MotionSample s;
        const auto& st = rec.at("state");
        if (!st.is_array() || st.size() != 6)
            throw std::runtime_error("manifest state must be an array of 6 numbers");
        for (int d = 0; d < 6; ++d) pose::component(s.state, d) = st[static_cast<std::size_t>(d)];
        s.flow_field = flow::read_flo_file(dir / rec.at("flow_file").get<std::string>());
        if (rec.contains("aug_flow_file"))
            s.augmented_flow = flow::read_flo_file(dir / rec.at("aug_flow_file").get<std::string>());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace rankodo::synth
