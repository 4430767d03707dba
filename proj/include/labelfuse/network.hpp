#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "labelfuse/fusion.hpp"
#include "labelfuse/linalg.hpp"
#include "labelfuse/rng.hpp"

// MLP trunk shared by three linear heads: class logits (K), annotator
// weight logits (R), and basis-coefficient logits (R*M, one block of M per
// annotator). Hidden layers use ReLU; heads are linear. Backprop is explicit.

namespace labelfuse {

struct ModelDims {
    int input_dim = 0;
    std::vector<int> hidden;
    int K = 0;
    int R = 0;
    int M = 0;

    int coeff_outputs() const { return R * M; }

    void validate() const {
        if (input_dim < 1) throw ValueError("ModelDims: input_dim must be >= 1");
        if (K < 2) throw ValueError("ModelDims: K must be >= 2");
        if (R < 1) throw ValueError("ModelDims: R must be >= 1");
        if (M < 1) throw ValueError("ModelDims: M must be >= 1");
        for (int h : hidden) {
            if (h < 1) throw ValueError("ModelDims: hidden sizes must be >= 1");
        }
    }

    bool operator==(const ModelDims&) const = default;
};

struct DenseLayer {
    Mat W;  // out x in
    Vec b;  // out
};

struct ModelParams {
    ModelDims dims;
    std::vector<DenseLayer> trunk;
    DenseLayer head_class;
    DenseLayer head_weights;
    DenseLayer head_coeffs;

    /// Applies fn to every parameter tensor pair of *this and other.
    template <typename Fn>
    void zip(ModelParams& other, Fn&& fn) {
        for (std::size_t l = 0; l < trunk.size(); ++l) {
            fn(trunk[l].W, other.trunk[l].W);
            fn(trunk[l].b, other.trunk[l].b);
        }
        fn(head_class.W, other.head_class.W);
        fn(head_class.b, other.head_class.b);
        fn(head_weights.W, other.head_weights.W);
        fn(head_weights.b, other.head_weights.b);
        fn(head_coeffs.W, other.head_coeffs.W);
        fn(head_coeffs.b, other.head_coeffs.b);
    }
};

/// Gradients and optimizer velocities reuse the parameter layout.
using ModelGrads = ModelParams;

inline ModelParams zeros_like(const ModelParams& params) {
    ModelParams z;
    z.dims = params.dims;
    z.trunk.reserve(params.trunk.size());
    for (const auto& layer : params.trunk) {
        z.trunk.push_back({Mat::Zero(layer.W.rows(), layer.W.cols()), Vec::Zero(layer.b.size())});
    }
    auto zero_head = [](const DenseLayer& h) {
        return DenseLayer{Mat::Zero(h.W.rows(), h.W.cols()), Vec::Zero(h.b.size())};
    };
    z.head_class = zero_head(params.head_class);
    z.head_weights = zero_head(params.head_weights);
    z.head_coeffs = zero_head(params.head_coeffs);
    return z;
}

namespace detail {

inline DenseLayer init_layer(int out, int in, rng::Engine& engine) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer{Mat(out, in), Vec::Zero(out)};
    for (int i = 0; i < out; ++i) {
        for (int j = 0; j < in; ++j) {
            layer.W(i, j) = bound * (2.0 * engine.uniform() - 1.0);
        }
    }
    return layer;
}

}  // namespace detail

/// Fan-in-scaled uniform weights, zero biases; deterministic per seed.
/// When identity_coeff_bias is set (the include_identity basis layout),
/// each annotator's first coefficient logit starts one unit above the rest
/// so the confusion matrices begin near the identity.
inline ModelParams init_params(const ModelDims& dims, std::uint64_t seed,
                               bool identity_coeff_bias = true) {
    dims.validate();
    rng::Engine engine(rng::derive_seed(seed, 0x6c666e65));  // params stream

    ModelParams params;
    params.dims = dims;
    int in = dims.input_dim;
    for (int h : dims.hidden) {
        params.trunk.push_back(detail::init_layer(h, in, engine));
        in = h;
    }
    params.head_class = detail::init_layer(dims.K, in, engine);
    params.head_weights = detail::init_layer(dims.R, in, engine);
    params.head_coeffs = detail::init_layer(dims.coeff_outputs(), in, engine);
    if (identity_coeff_bias) {
        for (int r = 0; r < dims.R; ++r) params.head_coeffs.b[r * dims.M] = 1.0;
    }
    return params;
}

/// Activations cached by a forward pass; rows are samples.
struct BatchCache {
    Mat input;              // B x D
    std::vector<Mat> pre;   // trunk pre-activations
    std::vector<Mat> post;  // relu(pre)
    Mat f_logits;           // B x K
    Mat w_logits;           // B x R
    Mat c_logits;           // B x (R*M)

    const Mat& trunk_output() const { return post.empty() ? input : post.back(); }
    int batch_size() const { return static_cast<int>(input.rows()); }
};

inline BatchCache forward_batch(const ModelParams& params, const Mat& X) {
    if (X.cols() != params.dims.input_dim) {
        throw DimensionError("forward_batch: input has " + std::to_string(X.cols()) +
                             " features, model expects " + std::to_string(params.dims.input_dim));
    }
    if (!X.allFinite()) throw NumericError("forward_batch: non-finite input");

    BatchCache cache;
    cache.input = X;
    const Mat* h = &cache.input;
    for (const auto& layer : params.trunk) {
        Mat pre = (*h * layer.W.transpose()).rowwise() + layer.b.transpose();
        cache.post.push_back(pre.cwiseMax(0.0));
        cache.pre.push_back(std::move(pre));
        h = &cache.post.back();
    }
    cache.f_logits = (*h * params.head_class.W.transpose()).rowwise() +
                     params.head_class.b.transpose();
    cache.w_logits = (*h * params.head_weights.W.transpose()).rowwise() +
                     params.head_weights.b.transpose();
    cache.c_logits = (*h * params.head_coeffs.W.transpose()).rowwise() +
                     params.head_coeffs.b.transpose();
    if (!cache.f_logits.allFinite() || !cache.w_logits.allFinite() ||
        !cache.c_logits.allFinite()) {
        throw NumericError("forward_batch: non-finite activation");
    }
    return cache;
}

/// Simplex-valued head outputs for one sample, with the activations needed
/// to backpropagate through the same pass.
struct HeadOutputs {
    Vec class_probs;          // K
    Vec weights;              // R
    std::vector<Vec> coeffs;  // R vectors of length M
    BatchCache cache;
};

inline HeadOutputs forward(const ModelParams& params, const Vec& x) {
    HeadOutputs out;
    out.cache = forward_batch(params, x.transpose());
    out.class_probs = softmax(out.cache.f_logits.row(0).transpose());
    out.weights = softmax(out.cache.w_logits.row(0).transpose());
    out.coeffs.reserve(params.dims.R);
    for (int r = 0; r < params.dims.R; ++r) {
        out.coeffs.push_back(
            softmax(out.cache.c_logits.row(0).segment(r * params.dims.M, params.dims.M)
                        .transpose()));
    }
    return out;
}

/// Backprop of summed upstream logit gradients through heads and trunk.
/// d_f/d_w/d_c are B x K, B x R, B x (R*M); returns parameter gradient sums.
inline ModelGrads backward_batch(const ModelParams& params, const BatchCache& cache,
                                 const Mat& d_f, const Mat& d_w, const Mat& d_c) {
    const int B = cache.batch_size();
    if (d_f.rows() != B || d_w.rows() != B || d_c.rows() != B ||
        d_f.cols() != params.dims.K || d_w.cols() != params.dims.R ||
        d_c.cols() != params.dims.coeff_outputs()) {
        throw DimensionError("backward_batch: upstream gradient shape mismatch");
    }

    ModelGrads grads = zeros_like(params);
    const Mat& h_last = cache.trunk_output();

    grads.head_class.W = d_f.transpose() * h_last;
    grads.head_class.b = d_f.colwise().sum().transpose();
    grads.head_weights.W = d_w.transpose() * h_last;
    grads.head_weights.b = d_w.colwise().sum().transpose();
    grads.head_coeffs.W = d_c.transpose() * h_last;
    grads.head_coeffs.b = d_c.colwise().sum().transpose();

    Mat d_h = d_f * params.head_class.W + d_w * params.head_weights.W +
              d_c * params.head_coeffs.W;

    for (int l = static_cast<int>(params.trunk.size()) - 1; l >= 0; --l) {
        Mat d_pre = (cache.pre[l].array() > 0.0).select(d_h, 0.0);
        const Mat& below = (l == 0) ? cache.input : cache.post[l - 1];
        grads.trunk[l].W = d_pre.transpose() * below;
        grads.trunk[l].b = d_pre.colwise().sum().transpose();
        d_h = d_pre * params.trunk[l].W;
    }
    return grads;
}

/// Per-sample convenience wrapper taking fusion gradients.
inline ModelGrads backward(const ModelParams& params, const HeadOutputs& outputs,
                           const FusionGradients& upstream) {
    if (upstream.d_f_logits.size() != params.dims.K ||
        upstream.d_w_logits.size() != params.dims.R ||
        static_cast<int>(upstream.d_c_logits.size()) != params.dims.R) {
        throw DimensionError("backward: fusion gradient shape mismatch");
    }
    Mat d_c(1, params.dims.coeff_outputs());
    for (int r = 0; r < params.dims.R; ++r) {
        if (upstream.d_c_logits[r].size() != params.dims.M) {
            throw DimensionError("backward: coefficient gradient length != M");
        }
        d_c.row(0).segment(r * params.dims.M, params.dims.M) =
            upstream.d_c_logits[r].transpose();
    }
    return backward_batch(params, outputs.cache, upstream.d_f_logits.transpose(),
                          upstream.d_w_logits.transpose(), d_c);
}

// --- optimizer -------------------------------------------------------------

struct OptimizerState {
    double learning_rate = 0.01;
    double momentum = 0.9;
    ModelGrads velocity;
};

inline OptimizerState make_optimizer(const ModelParams& params, double learning_rate,
                                     double momentum) {
    if (learning_rate <= 0.0) throw ValueError("make_optimizer: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw ValueError("make_optimizer: momentum must lie in [0, 1)");
    }
    return OptimizerState{learning_rate, momentum, zeros_like(params)};
}

/// Classical momentum: v <- mu*v + g; p <- p - lr*v.
inline void sgd_momentum_step(ModelParams& params, const ModelGrads& grads,
                              OptimizerState& state) {
    const double lr = state.learning_rate;
    const double mu = state.momentum;
    ModelGrads& v = state.velocity;
    auto step = [&](auto& vel, const auto& g, auto& p) {
        if (vel.rows() != g.rows() || vel.cols() != g.cols()) {
            throw DimensionError("sgd_momentum_step: shape mismatch");
        }
        vel = mu * vel + g;
        p -= lr * vel;
    };
    for (std::size_t l = 0; l < params.trunk.size(); ++l) {
        step(v.trunk[l].W, grads.trunk[l].W, params.trunk[l].W);
        step(v.trunk[l].b, grads.trunk[l].b, params.trunk[l].b);
    }
    step(v.head_class.W, grads.head_class.W, params.head_class.W);
    step(v.head_class.b, grads.head_class.b, params.head_class.b);
    step(v.head_weights.W, grads.head_weights.W, params.head_weights.W);
    step(v.head_weights.b, grads.head_weights.b, params.head_weights.b);
    step(v.head_coeffs.W, grads.head_coeffs.W, params.head_coeffs.W);
    step(v.head_coeffs.b, grads.head_coeffs.b, params.head_coeffs.b);
}

// --- inference -------------------------------------------------------------

/// Argmax of the class head; ties break toward the smallest index.
inline int predict_class(const ModelParams& params, const Vec& x) {
    const BatchCache cache = forward_batch(params, x.transpose());
    int best = 0;
    for (int k = 1; k < params.dims.K; ++k) {
        if (cache.f_logits(0, k) > cache.f_logits(0, best)) best = k;
    }
    return best;
}

inline std::vector<int> predict_batch(const ModelParams& params, const Mat& X) {
    const BatchCache cache = forward_batch(params, X);
    std::vector<int> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
        int best = 0;
        for (int k = 1; k < params.dims.K; ++k) {
            if (cache.f_logits(n, k) > cache.f_logits(n, best)) best = k;
        }
        out[static_cast<std::size_t>(n)] = best;
    }
    return out;
}

// --- checkpoint format -----------------------------------------------------
//
// Flat little-endian binary: magic "LFCK", u32 version (currently 1),
// i32 input_dim, u32 hidden-count, i32 hidden sizes, i32 K, i32 R, i32 M,
// then every tensor as row-major f64 in declaration order (trunk layer W, b
// per layer, then class/weights/coeffs heads).

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

inline void write_i32(std::ostream& os, std::int32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::int32_t read_i32(std::istream& is) {
    std::int32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

inline void write_tensor(std::ostream& os, const Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            os.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
}
inline void write_tensor(std::ostream& os, const Vec& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(sizeof(double) * v.size()));
}
inline void read_tensor(std::istream& is, Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            double v = 0.0;
            is.read(reinterpret_cast<char*>(&v), sizeof(v));
            m(i, j) = v;
        }
    }
}
inline void read_tensor(std::istream& is, Vec& v) {
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
}

inline constexpr std::uint32_t kCheckpointMagic = 0x4b43464cu;  // "LFCK"
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("save_checkpoint: cannot open " + path);
    detail::write_u32(os, detail::kCheckpointMagic);
    detail::write_u32(os, detail::kCheckpointVersion);
    detail::write_i32(os, params.dims.input_dim);
    detail::write_u32(os, static_cast<std::uint32_t>(params.dims.hidden.size()));
    for (int h : params.dims.hidden) detail::write_i32(os, h);
    detail::write_i32(os, params.dims.K);
    detail::write_i32(os, params.dims.R);
    detail::write_i32(os, params.dims.M);
    for (const auto& layer : params.trunk) {
        detail::write_tensor(os, layer.W);
        detail::write_tensor(os, layer.b);
    }
    for (const DenseLayer* head : {&params.head_class, &params.head_weights, &params.head_coeffs}) {
        detail::write_tensor(os, head->W);
        detail::write_tensor(os, head->b);
    }
    if (!os) throw ParseError("save_checkpoint: write failed for " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("load_checkpoint: cannot open " + path);
    if (detail::read_u32(is) != detail::kCheckpointMagic) {
        throw ParseError("load_checkpoint: bad magic in " + path);
    }
    const std::uint32_t version = detail::read_u32(is);
    if (version != detail::kCheckpointVersion) {
        throw ParseError("load_checkpoint: unsupported format version " +
                         std::to_string(version));
    }
    ModelDims dims;
    dims.input_dim = detail::read_i32(is);
    const std::uint32_t n_hidden = detail::read_u32(is);
    if (!is || n_hidden > 1024) throw ParseError("load_checkpoint: corrupt header in " + path);
    dims.hidden.resize(n_hidden);
    for (auto& h : dims.hidden) h = detail::read_i32(is);
    dims.K = detail::read_i32(is);
    dims.R = detail::read_i32(is);
    dims.M = detail::read_i32(is);
    if (!is) throw ParseError("load_checkpoint: truncated header in " + path);
    dims.validate();

    ModelParams params = init_params(dims, 0, false);
    auto read_layer = [&](DenseLayer& layer) {
        detail::read_tensor(is, layer.W);
        detail::read_tensor(is, layer.b);
    };
    for (auto& layer : params.trunk) read_layer(layer);
    read_layer(params.head_class);
    read_layer(params.head_weights);
    read_layer(params.head_coeffs);
    if (!is) throw ParseError("load_checkpoint: truncated tensors in " + path);
    is.peek();
    if (!is.eof()) throw ParseError("load_checkpoint: trailing bytes in " + path);
    return params;
}

}  // namespace labelfuse
