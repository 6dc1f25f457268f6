#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rankodo/flow.hpp"
#include "rankodo/pose.hpp"
#include "rankodo/rank.hpp"
#include "rankodo/rng.hpp"
#include "rankodo/synth.hpp"

namespace rankodo::net {

struct ShapeMismatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonFiniteLossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Activation { kRelu, kIdentity };

struct DenseLayer {
    int in = 0;
    int out = 0;
    Activation activation = Activation::kIdentity;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> biases;   // out
};

inline DenseLayer make_layer(int in, int out, Activation act) {
    DenseLayer l;
    l.in = in;
    l.out = out;
    l.activation = act;
    l.weights.assign(static_cast<std::size_t>(in) * static_cast<std::size_t>(out), 0.0);
    l.biases.assign(static_cast<std::size_t>(out), 0.0);
    return l;
}

// Per-DoF encoder-decoder pair. The encoder maps a flattened flow field to a
// D-dimensional feature; the decoder is a fixed 3-layer MLP regressing one
// scalar state component from that feature.
struct Model {
    std::vector<DenseLayer> encoder;
    std::vector<DenseLayer> decoder;
    int input_width = 0;
    int input_height = 0;
    int dof_index = 0;

    int input_dim() const { return 2 * input_width * input_height; }
    int feature_dim() const { return encoder.empty() ? 0 : encoder.back().out; }
};

inline void validate_model(const Model& m) {
    if (m.encoder.empty()) throw ShapeMismatchError("encoder must have at least one layer");
    if (m.decoder.size() != 3) throw ShapeMismatchError("decoder must have exactly 3 layers");
    if (m.dof_index < 0 || m.dof_index >= 6) throw ShapeMismatchError("dof_index out of range");
    int prev = m.input_dim();
    for (const auto& l : m.encoder) {
        if (l.in != prev) throw ShapeMismatchError("encoder layer input dim mismatch");
        if (l.weights.size() != static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out) ||
            l.biases.size() != static_cast<std::size_t>(l.out))
            throw ShapeMismatchError("encoder layer parameter shape mismatch");
        prev = l.out;
    }
    for (const auto& l : m.decoder) {
        if (l.in != prev) throw ShapeMismatchError("decoder layer input dim mismatch");
        if (l.weights.size() != static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out) ||
            l.biases.size() != static_cast<std::size_t>(l.out))
            throw ShapeMismatchError("decoder layer parameter shape mismatch");
        prev = l.out;
    }
    if (prev != 1) throw ShapeMismatchError("decoder must end in a single output");
    if (m.decoder.back().activation != Activation::kIdentity)
        throw ShapeMismatchError("final decoder activation must be identity");
}

struct LayerCache {
    std::vector<double> input;
    std::vector<double> preact;
};

using StackCache = std::vector<LayerCache>;

struct SampleCache {
    StackCache encoder;
    StackCache decoder;
};

// ReLU derivative at exactly 0 is 0.
inline double activate(Activation a, double v) {
    return (a == Activation::kRelu && v < 0.0) ? 0.0 : v;
}

inline double activate_grad(Activation a, double preact) {
    return (a == Activation::kRelu && preact <= 0.0) ? 0.0 : 1.0;
}

inline std::vector<double> stack_forward(std::span<const DenseLayer> layers,
                                         std::vector<double> x, StackCache* cache) {
    for (const auto& l : layers) {
        if (x.size() != static_cast<std::size_t>(l.in))
            throw ShapeMismatchError("layer input size mismatch");
        std::vector<double> z(static_cast<std::size_t>(l.out));
        for (int o = 0; o < l.out; ++o) {
            const double* wrow = l.weights.data() + static_cast<std::size_t>(o) * l.in;
            double s = l.biases[static_cast<std::size_t>(o)];
            for (int i = 0; i < l.in; ++i) s += wrow[i] * x[static_cast<std::size_t>(i)];
            z[static_cast<std::size_t>(o)] = s;
        }
        if (cache) cache->push_back(LayerCache{std::move(x), z});
        x.resize(z.size());
        for (std::size_t o = 0; o < z.size(); ++o) x[o] = activate(l.activation, z[o]);
    }
    return x;
}

inline std::vector<double> flatten_flow(const flow::FlowField& f) {
    std::vector<double> x(f.data.size());
    for (std::size_t i = 0; i < f.data.size(); ++i) x[i] = static_cast<double>(f.data[i]);
    return x;
}

inline std::vector<double> encoder_forward(const Model& m, const flow::FlowField& f,
                                           StackCache* cache = nullptr) {
    if (f.width != m.input_width || f.height != m.input_height)
        throw ShapeMismatchError("flow dimensions do not match model input");
    return stack_forward(m.encoder, flatten_flow(f), cache);
}

inline double decoder_forward(const Model& m, std::span<const double> feature,
                              StackCache* cache = nullptr) {
    std::vector<double> x(feature.begin(), feature.end());
    const auto y = stack_forward(m.decoder, std::move(x), cache);
    return y[0];
}

struct LayerGrads {
    std::vector<double> weights;
    std::vector<double> biases;
};

struct ModelGrads {
    std::vector<LayerGrads> encoder;
    std::vector<LayerGrads> decoder;
};

inline ModelGrads zero_grads(const Model& m) {
    ModelGrads g;
    for (const auto& l : m.encoder)
        g.encoder.push_back(LayerGrads{std::vector<double>(l.weights.size(), 0.0),
                                       std::vector<double>(l.biases.size(), 0.0)});
    for (const auto& l : m.decoder)
        g.decoder.push_back(LayerGrads{std::vector<double>(l.weights.size(), 0.0),
                                       std::vector<double>(l.biases.size(), 0.0)});
    return g;
}

// Backward through one layer stack; accumulates parameter gradients and
// returns the gradient with respect to the stack input.
inline std::vector<double> stack_backward(std::span<const DenseLayer> layers,
                                          const StackCache& cache, std::vector<double> d_out,
                                          std::span<LayerGrads> grads) {
    if (cache.size() != layers.size()) throw ShapeMismatchError("cache depth mismatch");
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& l = layers[li];
        const auto& c = cache[li];
        if (d_out.size() != static_cast<std::size_t>(l.out))
            throw ShapeMismatchError("upstream gradient size mismatch");
        std::vector<double> d_in(static_cast<std::size_t>(l.in), 0.0);
        auto& g = grads[li];
        for (int o = 0; o < l.out; ++o) {
            const double dz =
                d_out[static_cast<std::size_t>(o)] * activate_grad(l.activation, c.preact[static_cast<std::size_t>(o)]);
            if (dz == 0.0) continue;
            g.biases[static_cast<std::size_t>(o)] += dz;
            const double* wrow = l.weights.data() + static_cast<std::size_t>(o) * l.in;
            double* grow = g.weights.data() + static_cast<std::size_t>(o) * l.in;
            for (int i = 0; i < l.in; ++i) {
                grow[i] += dz * c.input[static_cast<std::size_t>(i)];
                d_in[static_cast<std::size_t>(i)] += dz * wrow[i];
            }
        }
        d_out = std::move(d_in);
    }
    return d_out;
}

// Exact gradients of sum_i (d_features[i] . f_i + d_predictions[i] * p_i)
// with respect to every weight and bias: the prediction path is chained
// through the decoder into the feature, then both flow through the encoder.
inline ModelGrads backward(const Model& m, std::span<const SampleCache> caches,
                           std::span<const std::vector<double>> d_features,
                           std::span<const double> d_predictions) {
    if (caches.size() != d_features.size() || caches.size() != d_predictions.size())
        throw ShapeMismatchError("backward: per-sample argument count mismatch");
    ModelGrads g = zero_grads(m);
    for (std::size_t s = 0; s < caches.size(); ++s) {
        std::vector<double> d_feat = stack_backward(m.decoder, caches[s].decoder,
                                                    {d_predictions[s]}, g.decoder);
        if (d_feat.size() != d_features[s].size())
            throw ShapeMismatchError("backward: feature gradient size mismatch");
        for (std::size_t c = 0; c < d_feat.size(); ++c) d_feat[c] += d_features[s][c];
        stack_backward(m.encoder, caches[s].encoder, std::move(d_feat), g.encoder);
    }
    return g;
}

// --- optimizer ---------------------------------------------------------

struct AdamSlot {
    std::vector<double> m;
    std::vector<double> v;
};

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Bias-corrected adaptive-moment update; `step` counts from 1.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamSlot& slot,
                      double lr, long step) {
    if (params.size() != grads.size()) throw ShapeMismatchError("adam_step: size mismatch");
    if (slot.m.empty()) {
        slot.m.assign(params.size(), 0.0);
        slot.v.assign(params.size(), 0.0);
    }
    if (slot.m.size() != params.size()) throw ShapeMismatchError("adam_step: state size mismatch");
    if (step < 1) throw std::invalid_argument("adam_step: step must be >= 1");
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        slot.m[i] = kAdamBeta1 * slot.m[i] + (1.0 - kAdamBeta1) * grads[i];
        slot.v[i] = kAdamBeta2 * slot.v[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
        const double mhat = slot.m[i] / c1;
        const double vhat = slot.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

struct AdamOptimizer {
    double lr = 1e-3;
    long t = 0;
    std::vector<AdamSlot> slots;

    void step(Model& m, const ModelGrads& g) {
        const std::size_t tensors = 2 * (m.encoder.size() + m.decoder.size());
        if (slots.empty()) slots.resize(tensors);
        if (slots.size() != tensors) throw ShapeMismatchError("optimizer bound to another model");
        ++t;
        std::size_t s = 0;
        for (std::size_t li = 0; li < m.encoder.size(); ++li) {
            adam_step(m.encoder[li].weights, g.encoder[li].weights, slots[s++], lr, t);
            adam_step(m.encoder[li].biases, g.encoder[li].biases, slots[s++], lr, t);
        }
        for (std::size_t li = 0; li < m.decoder.size(); ++li) {
            adam_step(m.decoder[li].weights, g.decoder[li].weights, slots[s++], lr, t);
            adam_step(m.decoder[li].biases, g.decoder[li].biases, slots[s++], lr, t);
        }
    }
};

// --- training ----------------------------------------------------------

enum class InitScheme { kHeXavier, kZeros };

struct TrainConfig {
    int batch_n = 16;  // anchors per batch (2N samples with augmentations)
    int epochs = 60;
    double learning_rate = 2e-3;
    double tau = 2.0;
    double lambda = 2.0;
    int feature_dim = 32;
    std::vector<int> encoder_hidden = {64};
    int decoder_hidden = 32;
    double sigma_noise = 0.05;  // augmentation noise during training
    std::uint64_t seed = 1;
    int dof_index = 2;
    InitScheme init = InitScheme::kHeXavier;
};

inline void validate(const TrainConfig& c) {
    if (c.batch_n < 1) throw std::invalid_argument("batch_n must be >= 1");
    if (c.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(c.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (!(c.tau > 0.0)) throw std::invalid_argument("tau must be > 0");
    if (!(c.lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (c.feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
    for (int h : c.encoder_hidden)
        if (h < 1) throw std::invalid_argument("encoder_hidden sizes must be >= 1");
    if (c.decoder_hidden < 1) throw std::invalid_argument("decoder_hidden must be >= 1");
    if (!(c.sigma_noise >= 0.0)) throw std::invalid_argument("sigma_noise must be >= 0");
    if (c.dof_index < 0 || c.dof_index >= 6) throw std::invalid_argument("dof_index out of range");
}

namespace detail {

// He-uniform for relu layers, Xavier-uniform for identity layers.
inline void init_layer(DenseLayer& l, rng::Engine& eng) {
    const double limit = l.activation == Activation::kRelu
                             ? std::sqrt(6.0 / l.in)
                             : std::sqrt(6.0 / (l.in + l.out));
    for (double& w : l.weights) w = rng::uniform(eng, -limit, limit);
    // biases stay zero
}

}  // namespace detail

inline Model init_model(int input_width, int input_height, const TrainConfig& c) {
    validate(c);
    Model m;
    m.input_width = input_width;
    m.input_height = input_height;
    m.dof_index = c.dof_index;
    int prev = m.input_dim();
    for (int h : c.encoder_hidden) {
        m.encoder.push_back(make_layer(prev, h, Activation::kRelu));
        prev = h;
    }
    m.encoder.push_back(make_layer(prev, c.feature_dim, Activation::kIdentity));
    m.decoder.push_back(make_layer(c.feature_dim, c.decoder_hidden, Activation::kRelu));
    m.decoder.push_back(make_layer(c.decoder_hidden, c.decoder_hidden, Activation::kRelu));
    m.decoder.push_back(make_layer(c.decoder_hidden, 1, Activation::kIdentity));
    if (c.init == InitScheme::kHeXavier) {
        rng::Engine eng(rng::derive_seed(c.seed, 0xC0DE));
        for (auto& l : m.encoder) detail::init_layer(l, eng);
        for (auto& l : m.decoder) detail::init_layer(l, eng);
    }
    validate_model(m);
    return m;
}

inline double grad_l2_norm(const ModelGrads& g) {
    double s = 0.0;
    auto add = [&s](const std::vector<double>& v) {
        for (double x : v) s += x * x;
    };
    for (const auto& l : g.encoder) {
        add(l.weights);
        add(l.biases);
    }
    for (const auto& l : g.decoder) {
        add(l.weights);
        add(l.biases);
    }
    return std::sqrt(s);
}

// The -log terms can spike early in training; a global-norm clip bounds the
// worst-case step without changing converged behavior.
constexpr double kGradClipNorm = 10.0;

inline void clip_global_norm(ModelGrads& g, double max_norm) {
    const double n = grad_l2_norm(g);
    if (n <= max_norm || n == 0.0) return;
    const double s = max_norm / n;
    auto scale = [s](std::vector<double>& v) {
        for (double& x : v) x *= s;
    };
    for (auto& l : g.encoder) {
        scale(l.weights);
        scale(l.biases);
    }
    for (auto& l : g.decoder) {
        scale(l.weights);
        scale(l.biases);
    }
}

struct TrainReport {
    std::vector<double> loss_trace;
    Model model;
    double seconds = 0.0;
};

// Joint encoder/decoder training with the ranked contrastive loss. Each step
// draws batch_n distinct anchors, pairs each with its stored augmented copy
// (falling back to a seeded sigma_noise draw when a sample carries none),
// and applies one clipped Adam update. Every random draw is derived from
// (config.seed, step), so runs are bit-reproducible.
inline TrainReport train_dof(std::span<const synth::MotionSample> dataset, const TrainConfig& c,
                             Model model) {
    validate(c);
    validate_model(model);
    const std::size_t n_data = dataset.size();
    if (n_data < static_cast<std::size_t>(c.batch_n))
        throw std::invalid_argument("dataset smaller than batch_n");
    for (const auto& s : dataset) {
        if (s.flow_field.width != model.input_width || s.flow_field.height != model.input_height)
            throw ShapeMismatchError("dataset flow dimensions do not match model input");
        if (s.augmented_flow && !flow::same_shape(*s.augmented_flow, s.flow_field))
            throw ShapeMismatchError("augmented flow dimensions do not match the anchor flow");
    }

    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, n_data / static_cast<std::size_t>(c.batch_n));
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(c.epochs);
    const std::size_t batch = 2 * static_cast<std::size_t>(c.batch_n);
    const rank::LossHyper hyper{c.tau, c.lambda};

    AdamOptimizer opt;
    opt.lr = c.learning_rate;

    TrainReport report;
    report.loss_trace.reserve(total_steps);

    std::vector<std::size_t> order(n_data);
    for (std::size_t step = 0; step < total_steps; ++step) {
        // Partial Fisher-Yates: the first batch_n entries are the anchors.
        rng::Engine eng(rng::derive_seed(c.seed, step + 1));
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (int k = 0; k < c.batch_n; ++k) {
            const auto span_left = n_data - static_cast<std::size_t>(k);
            const auto pick = static_cast<std::size_t>(k) +
                              std::min<std::size_t>(span_left - 1,
                                                    static_cast<std::size_t>(rng::uniform01(eng) * static_cast<double>(span_left)));
            std::swap(order[static_cast<std::size_t>(k)], order[pick]);
        }

        rank::RankingBatch rb;
        rb.dim = static_cast<std::size_t>(model.feature_dim());
        rb.features.resize(batch * rb.dim);
        rb.labels.resize(batch);
        rb.predictions.resize(batch);
        rb.targets.resize(batch);
        std::vector<SampleCache> caches(batch);

        const std::uint64_t aug_root = rng::derive_seed(c.seed, 0xA6 * (step + 1));
        for (int k = 0; k < c.batch_n; ++k) {
            const auto& sample = dataset[order[static_cast<std::size_t>(k)]];
            const double label = pose::component(sample.state, c.dof_index);
            flow::FlowField fallback_aug;
            const flow::FlowField* aug = sample.augmented_flow ? &*sample.augmented_flow : nullptr;
            if (!aug) {
                fallback_aug =
                    synth::augment(sample.flow_field, c.sigma_noise,
                                   rng::derive_seed(aug_root, static_cast<std::uint64_t>(k)));
                aug = &fallback_aug;
            }
            const std::array<const flow::FlowField*, 2> views{&sample.flow_field, aug};
            for (int half = 0; half < 2; ++half) {
                const std::size_t row = 2 * static_cast<std::size_t>(k) + static_cast<std::size_t>(half);
                auto feat = encoder_forward(model, *views[static_cast<std::size_t>(half)], &caches[row].encoder);
                rb.predictions[row] = decoder_forward(model, feat, &caches[row].decoder);
                std::copy(feat.begin(), feat.end(), rb.features.begin() + row * rb.dim);
                rb.labels[row] = label;
                rb.targets[row] = label;
            }
        }

        const rank::LossResult loss = rank::suprnc_batch(rb, hyper);
        if (!std::isfinite(loss.value))
            throw NonFiniteLossError("non-finite loss at step " + std::to_string(step) +
                                     " (dof " + std::string(pose::kDofNames[static_cast<std::size_t>(c.dof_index)]) +
                                     ", lr " + std::to_string(c.learning_rate) + ")");
        report.loss_trace.push_back(loss.value);

        std::vector<std::vector<double>> d_features(batch);
        for (std::size_t row = 0; row < batch; ++row)
            d_features[row].assign(loss.d_features.begin() + row * rb.dim,
                                   loss.d_features.begin() + (row + 1) * rb.dim);
        ModelGrads grads = backward(model, caches, d_features, loss.d_predictions);
        clip_global_norm(grads, kGradClipNorm);
        opt.step(model, grads);
    }

    report.model = std::move(model);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

inline TrainReport train_dof(std::span<const synth::MotionSample> dataset, const TrainConfig& c) {
    if (dataset.empty()) throw std::invalid_argument("dataset is empty");
    return train_dof(dataset, c,
                     init_model(dataset.front().flow_field.width, dataset.front().flow_field.height, c));
}

inline double infer(const Model& m, const flow::FlowField& f) {
    return decoder_forward(m, encoder_forward(m, f));
}

// Assembles the six per-DoF predictions into a pose; models must be ordered
// x, y, z, roll, pitch, yaw. Angles are wrapped into (-pi, pi].
inline pose::EulerPose6D infer_all(const std::array<Model, 6>& models, const flow::FlowField& f) {
    pose::EulerPose6D p;
    for (int d = 0; d < 6; ++d) {
        if (models[static_cast<std::size_t>(d)].dof_index != d)
            throw ShapeMismatchError("infer_all: models must be ordered by dof_index");
        const double v = infer(models[static_cast<std::size_t>(d)], f);
        pose::component(p, d) = d >= 3 ? pose::wrap_angle(v) : v;
    }
    return p;
}

// --- checkpoint I/O ----------------------------------------------------

namespace detail {

constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (static_cast<std::uint32_t>(bytes[i]) << 16) |
                                (static_cast<std::uint32_t>(bytes[i + 1]) << 8) |
                                static_cast<std::uint32_t>(bytes[i + 2]);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back(kB64Alphabet[v & 63]);
    }
    const std::size_t rem = bytes.size() - i;
    if (rem == 1) {
        const std::uint32_t v = static_cast<std::uint32_t>(bytes[i]) << 16;
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out += "==";
    } else if (rem == 2) {
        const std::uint32_t v = (static_cast<std::uint32_t>(bytes[i]) << 16) |
                                (static_cast<std::uint32_t>(bytes[i + 1]) << 8);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
    std::array<int, 256> lut;
    lut.fill(-1);
    for (int i = 0; i < 64; ++i) lut[static_cast<std::size_t>(kB64Alphabet[i])] = i;
    if (text.size() % 4 != 0) throw CheckpointError("base64 length must be a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char ch = text[i + static_cast<std::size_t>(k)];
            if (ch == '=') {
                if (i + 4 != text.size() || k < 2) throw CheckpointError("bad base64 padding");
                vals[k] = 0;
                ++pad;
            } else {
                if (pad > 0) throw CheckpointError("bad base64 padding");
                const int v = lut[static_cast<std::uint8_t>(ch)];
                if (v < 0) throw CheckpointError("bad base64 character");
                vals[k] = v;
            }
        }
        const std::uint32_t v = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                (static_cast<std::uint32_t>(vals[1]) << 12) |
                                (static_cast<std::uint32_t>(vals[2]) << 6) |
                                static_cast<std::uint32_t>(vals[3]);
        out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
    return out;
}

inline std::string doubles_to_b64(std::span<const double> vals) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(vals.size() * 8);
    for (double v : vals) {
        std::uint64_t bits;
        static_assert(sizeof bits == sizeof v);
        std::memcpy(&bits, &v, 8);
        for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<std::uint8_t>((bits >> (8 * k)) & 0xff));
    }
    return base64_encode(bytes);
}

inline std::vector<double> b64_to_doubles(std::string_view text, std::size_t expected) {
    const auto bytes = base64_decode(text);
    if (bytes.size() != expected * 8) throw CheckpointError("parameter block size mismatch");
    std::vector<double> vals(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k)
            bits |= static_cast<std::uint64_t>(bytes[8 * i + static_cast<std::size_t>(k)]) << (8 * k);
        std::memcpy(&vals[i], &bits, 8);
    }
    return vals;
}

inline nlohmann::json layer_to_json(const DenseLayer& l) {
    nlohmann::json j;
    j["in"] = l.in;
    j["out"] = l.out;
    j["activation"] = l.activation == Activation::kRelu ? "relu" : "identity";
    j["weights_b64"] = doubles_to_b64(l.weights);
    j["biases_b64"] = doubles_to_b64(l.biases);
    return j;
}

inline DenseLayer layer_from_json(const nlohmann::json& j) {
    DenseLayer l;
    l.in = j.at("in").get<int>();
    l.out = j.at("out").get<int>();
    const auto act = j.at("activation").get<std::string>();
    if (act == "relu")
        l.activation = Activation::kRelu;
    else if (act == "identity")
        l.activation = Activation::kIdentity;
    else
        throw CheckpointError("unknown activation: " + act);
    if (l.in < 1 || l.out < 1) throw CheckpointError("layer dims out of range");
    const auto count = static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out);
    l.weights = b64_to_doubles(j.at("weights_b64").get<std::string>(), count);
    l.biases = b64_to_doubles(j.at("biases_b64").get<std::string>(), static_cast<std::size_t>(l.out));
    return l;
}

}  // namespace detail

constexpr char kCheckpointFormat[] = "rank-odo-model";
constexpr int kCheckpointVersion = 1;

// Checkpoint: JSON header (dims, activations, dof_index, optional config
// echo) with little-endian float64 parameter blocks in base64.
inline void save_model(const Model& m, const std::filesystem::path& path,
                       const nlohmann::json& config_echo = nlohmann::json::object()) {
    validate_model(m);
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["dof_index"] = m.dof_index;
    j["input_width"] = m.input_width;
    j["input_height"] = m.input_height;
    j["encoder"] = nlohmann::json::array();
    for (const auto& l : m.encoder) j["encoder"].push_back(detail::layer_to_json(l));
    j["decoder"] = nlohmann::json::array();
    for (const auto& l : m.decoder) j["decoder"].push_back(detail::layer_to_json(l));
    j["config"] = config_echo;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint is not valid JSON: " + std::string(e.what()));
    }
    if (j.value("format", "") != kCheckpointFormat)
        throw CheckpointError("not a model checkpoint: " + path.string());
    if (j.value("version", -1) != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version");
    Model m;
    m.dof_index = j.at("dof_index").get<int>();
    m.input_width = j.at("input_width").get<int>();
    m.input_height = j.at("input_height").get<int>();
    for (const auto& lj : j.at("encoder")) m.encoder.push_back(detail::layer_from_json(lj));
    for (const auto& lj : j.at("decoder")) m.decoder.push_back(detail::layer_from_json(lj));
    validate_model(m);
    return m;
}

}  // namespace rankodo::net
