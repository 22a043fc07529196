#pragma once

// Dense forward/backward engine for MLPs: Linear -> (batch|layer) norm ->
// ReLU per hidden layer, Linear head, softmax cross-entropy. Supports the
// interpolation hook on normalization parameters: with alpha = a the forward
// pass uses a*psi + (1-a)*psi_init in place of psi, and psi gradients are
// chain-ruled through that map (scaled by a; psi_init is a constant).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ticketlab/errors.hpp"
#include "ticketlab/matrix.hpp"
#include "ticketlab/model.hpp"

namespace ticketlab {

struct Batch {
    Matrix inputs;                // batch_size x input_dim
    std::vector<int> labels;      // class indices
};

enum class Phase { train, eval };

struct ForwardMode {
    Phase phase = Phase::train;
    std::optional<double> aws_alpha;  // train-phase only
};

inline ForwardMode train_mode() { return {Phase::train, std::nullopt}; }
inline ForwardMode eval_mode() { return {Phase::eval, std::nullopt}; }
inline ForwardMode aws_mode(double alpha) { return {Phase::train, alpha}; }

using GradientVector = std::vector<double>;

// Per-layer intermediate state kept for backprop and statistic collection.
// stats hold per-feature values for batch_norm and per-sample values for
// layer_norm.
struct LayerTrace {
    Matrix z;        // pre-norm linear output
    Matrix zhat;     // normalized (before affine); unused when norm none
    Matrix y;        // post-affine pre-activation
    Matrix a;        // post-ReLU
    std::vector<double> mean;
    std::vector<double> var;
    std::vector<double> inv_std;
    std::vector<double> gamma_eff;
    std::vector<double> beta_eff;
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    Matrix logits;
    Matrix probs;
    double loss = 0.0;
};

struct ForwardResult {
    Matrix logits;
    double loss = 0.0;
    NormBuffers buffers;  // updated running stats (train-phase batch norm)
};

namespace detail {

inline void validate_forward_args(const ParamVector& params, const NormBuffers& buffers,
                                  std::span<const double> psi_init, const Batch& batch,
                                  const ForwardMode& mode) {
    const ParamLayout& layout = *params.layout;
    const ModelSpec& spec = layout.spec;
    if (params.values.size() != layout.d)
        throw ShapeError("forward: parameter vector length does not match layout");
    if (batch.inputs.rows < 1)
        throw ShapeError("forward: batch must contain at least one example");
    if (batch.inputs.cols != static_cast<std::size_t>(spec.input_dim))
        throw ShapeError("forward: batch input dim " + std::to_string(batch.inputs.cols) +
                         " != model input dim " + std::to_string(spec.input_dim));
    if (batch.labels.size() != batch.inputs.rows)
        throw ShapeError("forward: label count does not match batch size");
    for (int lbl : batch.labels)
        if (lbl < 0 || lbl >= spec.output_dim)
            throw ShapeError("forward: label out of range [0, output_dim)");
    if (mode.aws_alpha) {
        if (mode.phase != Phase::train)
            throw ConfigError("forward: aws_alpha is only valid in the train phase");
        const double a = *mode.aws_alpha;
        if (!(a >= 0.0 && a <= 1.0))
            throw ConfigError("forward: aws_alpha must lie in [0,1]");
        if (psi_init.size() != layout.psi_indices.size())
            throw ShapeError("forward: psi_init length does not match psi index count");
    }
    if (spec.norm_kind == NormKind::batch_norm) {
        if (buffers.running_mean.size() != layout.num_hidden())
            throw ShapeError("forward: norm buffers do not match layer count");
        for (std::size_t l = 0; l < layout.num_hidden(); ++l)
            if (buffers.running_mean[l].size() != layout.layers[l].out_dim ||
                buffers.running_var[l].size() != layout.layers[l].out_dim)
                throw ShapeError("forward: norm buffer width mismatch at layer " + std::to_string(l));
    }
}

inline void check_finite(const Matrix& m, std::size_t layer, Phase phase) {
    for (double x : m.v)
        if (!std::isfinite(x))
            throw NumericError("non-finite activation in layer " + std::to_string(layer) +
                               (phase == Phase::train ? " (train)" : " (eval)"));
}

// Resolve effective norm parameters for one hidden layer. psi_init is in
// layout order: per layer, the norm_scale block followed by the norm_bias
// block. The alpha endpoints are branched so that a=1 reproduces the plain
// forward bitwise and a=0 reproduces psi_init bitwise.
inline void effective_norm_params(const ParamVector& params, std::span<const double> psi_init,
                                  const std::optional<double>& alpha, std::size_t layer,
                                  std::size_t psi_base, LayerTrace& t) {
    const LayerOffsets& lo = params.layout->layers[layer];
    const std::size_t n = lo.out_dim;
    t.gamma_eff.resize(n);
    t.beta_eff.resize(n);
    if (!alpha || *alpha == 1.0) {
        for (std::size_t j = 0; j < n; ++j) {
            t.gamma_eff[j] = params.values[lo.norm_scale + j];
            t.beta_eff[j] = params.values[lo.norm_bias + j];
        }
    } else if (*alpha == 0.0) {
        for (std::size_t j = 0; j < n; ++j) {
            t.gamma_eff[j] = psi_init[psi_base + j];
            t.beta_eff[j] = psi_init[psi_base + n + j];
        }
    } else {
        const double a = *alpha;
        for (std::size_t j = 0; j < n; ++j) {
            t.gamma_eff[j] = a * params.values[lo.norm_scale + j] + (1.0 - a) * psi_init[psi_base + j];
            t.beta_eff[j] = a * params.values[lo.norm_bias + j] + (1.0 - a) * psi_init[psi_base + n + j];
        }
    }
}

inline ForwardResult forward_internal(const ParamVector& params, const NormBuffers& buffers,
                                      std::span<const double> psi_init, const Batch& batch,
                                      const ForwardMode& mode, ForwardTrace* trace) {
    validate_forward_args(params, buffers, psi_init, batch, mode);
    const ParamLayout& layout = *params.layout;
    const ModelSpec& spec = layout.spec;
    const std::size_t B = batch.inputs.rows;
    const std::size_t H = layout.num_hidden();
    const bool train = mode.phase == Phase::train;

    ForwardResult result;
    result.buffers = buffers;

    std::vector<LayerTrace> local_layers;
    std::vector<LayerTrace>& layers = trace ? trace->layers : local_layers;
    layers.assign(H, LayerTrace{});

    const Matrix* x = &batch.inputs;
    std::size_t psi_base = 0;
    for (std::size_t l = 0; l < H; ++l) {
        const LayerOffsets& lo = layout.layers[l];
        const std::size_t out = lo.out_dim;
        const std::size_t in = lo.in_dim;
        LayerTrace& t = layers[l];

        t.z = Matrix(B, out);
        const double* W = params.values.data() + lo.weight;
        const double* b = params.values.data() + lo.bias;
        for (std::size_t i = 0; i < B; ++i) {
            const double* xi = x->row(i);
            double* zi = t.z.row(i);
            for (std::size_t j = 0; j < out; ++j) {
                const double* wj = W + j * in;
                double acc = b[j];
                for (std::size_t k = 0; k < in; ++k) acc += xi[k] * wj[k];
                zi[j] = acc;
            }
        }
        check_finite(t.z, l, mode.phase);

        if (spec.norm_kind == NormKind::none) {
            t.y = t.z;
        } else {
            effective_norm_params(params, psi_init, mode.aws_alpha, l, psi_base, t);
            psi_base += 2 * out;
            t.zhat = Matrix(B, out);
            t.y = Matrix(B, out);
            if (spec.norm_kind == NormKind::batch_norm) {
                t.mean.assign(out, 0.0);
                t.var.assign(out, 0.0);
                t.inv_std.assign(out, 0.0);
                if (train) {
                    for (std::size_t j = 0; j < out; ++j) {
                        double m = 0.0;
                        for (std::size_t i = 0; i < B; ++i) m += t.z(i, j);
                        m /= static_cast<double>(B);
                        double v = 0.0;
                        for (std::size_t i = 0; i < B; ++i) {
                            const double c = t.z(i, j) - m;
                            v += c * c;
                        }
                        v /= static_cast<double>(B);  // biased, matches the normalize path
                        t.mean[j] = m;
                        t.var[j] = v;
                        t.inv_std[j] = 1.0 / std::sqrt(v + spec.norm_eps);
                        const double mom = spec.bn_momentum;
                        result.buffers.running_mean[l][j] =
                            (1.0 - mom) * result.buffers.running_mean[l][j] + mom * m;
                        result.buffers.running_var[l][j] =
                            (1.0 - mom) * result.buffers.running_var[l][j] + mom * v;
                    }
                } else {
                    for (std::size_t j = 0; j < out; ++j) {
                        t.mean[j] = buffers.running_mean[l][j];
                        t.var[j] = buffers.running_var[l][j];
                        t.inv_std[j] = 1.0 / std::sqrt(t.var[j] + spec.norm_eps);
                    }
                }
                for (std::size_t i = 0; i < B; ++i)
                    for (std::size_t j = 0; j < out; ++j) {
                        const double zh = (t.z(i, j) - t.mean[j]) * t.inv_std[j];
                        t.zhat(i, j) = zh;
                        t.y(i, j) = t.gamma_eff[j] * zh + t.beta_eff[j];
                    }
            } else {  // layer_norm: statistics per sample across features
                t.mean.assign(B, 0.0);
                t.var.assign(B, 0.0);
                t.inv_std.assign(B, 0.0);
                for (std::size_t i = 0; i < B; ++i) {
                    double m = 0.0;
                    for (std::size_t j = 0; j < out; ++j) m += t.z(i, j);
                    m /= static_cast<double>(out);
                    double v = 0.0;
                    for (std::size_t j = 0; j < out; ++j) {
                        const double c = t.z(i, j) - m;
                        v += c * c;
                    }
                    v /= static_cast<double>(out);
                    t.mean[i] = m;
                    t.var[i] = v;
                    t.inv_std[i] = 1.0 / std::sqrt(v + spec.norm_eps);
                    for (std::size_t j = 0; j < out; ++j) {
                        const double zh = (t.z(i, j) - m) * t.inv_std[i];
                        t.zhat(i, j) = zh;
                        t.y(i, j) = t.gamma_eff[j] * zh + t.beta_eff[j];
                    }
                }
            }
        }

        t.a = Matrix(B, out);
        for (std::size_t i = 0; i < B * out; ++i) t.a.v[i] = t.y.v[i] > 0.0 ? t.y.v[i] : 0.0;
        check_finite(t.a, l, mode.phase);
        x = &t.a;
    }

    // Output head + softmax cross-entropy.
    const LayerOffsets& head = layout.layers[H];
    const std::size_t C = head.out_dim;
    const std::size_t in = head.in_dim;
    result.logits = Matrix(B, C);
    const double* W = params.values.data() + head.weight;
    const double* b = params.values.data() + head.bias;
    for (std::size_t i = 0; i < B; ++i) {
        const double* xi = x->row(i);
        double* li = result.logits.row(i);
        for (std::size_t j = 0; j < C; ++j) {
            const double* wj = W + j * in;
            double acc = b[j];
            for (std::size_t k = 0; k < in; ++k) acc += xi[k] * wj[k];
            li[j] = acc;
        }
    }
    check_finite(result.logits, H, mode.phase);

    Matrix local_probs;
    Matrix& probs = trace ? trace->probs : local_probs;
    probs = Matrix(B, C);
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double* li = result.logits.row(i);
        double mx = li[0];
        for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, li[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < C; ++j) sum += std::exp(li[j] - mx);
        const double lse = std::log(sum) + mx;
        for (std::size_t j = 0; j < C; ++j) probs(i, j) = std::exp(li[j] - lse);
        loss += lse - li[batch.labels[i]];
    }
    loss /= static_cast<double>(B);
    if (!std::isfinite(loss))
        throw NumericError("non-finite loss at the output layer");
    result.loss = loss;
    if (trace) {
        trace->logits = result.logits;
        trace->loss = loss;
    }
    return result;
}

}  // namespace detail

inline ForwardResult forward(const ParamVector& params, const NormBuffers& buffers,
                             std::span<const double> psi_init, const Batch& batch,
                             const ForwardMode& mode) {
    return detail::forward_internal(params, buffers, psi_init, batch, mode, nullptr);
}

struct BackwardResult {
    GradientVector grads;
    double loss = 0.0;
    Matrix logits;
    NormBuffers buffers;
};

// Reverse pass through the trace. psi gradients are scaled by alpha when the
// forward interpolated; at alpha = 0 they are exactly zero.
inline BackwardResult backward_full(const ParamVector& params, const NormBuffers& buffers,
                                    std::span<const double> psi_init, const Batch& batch,
                                    const ForwardMode& mode) {
    ForwardTrace trace;
    ForwardResult fwd = detail::forward_internal(params, buffers, psi_init, batch, mode, &trace);

    const ParamLayout& layout = *params.layout;
    const ModelSpec& spec = layout.spec;
    const std::size_t B = batch.inputs.rows;
    const std::size_t H = layout.num_hidden();
    const double invB = 1.0 / static_cast<double>(B);

    BackwardResult result;
    result.loss = fwd.loss;
    result.logits = std::move(fwd.logits);
    result.buffers = std::move(fwd.buffers);
    result.grads.assign(layout.d, 0.0);
    GradientVector& g = result.grads;

    const double alpha_factor = mode.aws_alpha ? *mode.aws_alpha : 1.0;

    // d loss / d logits = (softmax - onehot) / B
    const LayerOffsets& head = layout.layers[H];
    const std::size_t C = head.out_dim;
    Matrix dlogits(B, C);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < C; ++j)
            dlogits(i, j) = (trace.probs(i, j) - (static_cast<int>(j) == batch.labels[i] ? 1.0 : 0.0)) * invB;

    const Matrix& head_in = H > 0 ? trace.layers[H - 1].a : batch.inputs;
    Matrix dx(B, head.in_dim);
    {
        const double* W = params.values.data() + head.weight;
        double* dW = g.data() + head.weight;
        double* db = g.data() + head.bias;
        for (std::size_t i = 0; i < B; ++i) {
            const double* xi = head_in.row(i);
            const double* dli = dlogits.row(i);
            double* dxi = dx.row(i);
            for (std::size_t j = 0; j < C; ++j) {
                const double dz = dli[j];
                const double* wj = W + j * head.in_dim;
                double* dwj = dW + j * head.in_dim;
                db[j] += dz;
                for (std::size_t k = 0; k < head.in_dim; ++k) {
                    dwj[k] += dz * xi[k];
                    dxi[k] += dz * wj[k];
                }
            }
        }
    }

    for (std::size_t l = H; l-- > 0;) {
        const LayerOffsets& lo = layout.layers[l];
        const std::size_t out = lo.out_dim;
        const std::size_t in = lo.in_dim;
        const LayerTrace& t = trace.layers[l];

        // ReLU: dy = dx_upstream where the pre-activation was positive.
        Matrix dy(B, out);
        for (std::size_t i = 0; i < B * out; ++i) dy.v[i] = t.y.v[i] > 0.0 ? dx.v[i] : 0.0;

        Matrix dz(B, out);
        if (spec.norm_kind == NormKind::none) {
            dz = std::move(dy);
        } else {
            // Affine backward in effective (interpolated) coordinates.
            std::vector<double> dgamma_eff(out, 0.0), dbeta_eff(out, 0.0);
            Matrix dzhat(B, out);
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t j = 0; j < out; ++j) {
                    const double d = dy(i, j);
                    dgamma_eff[j] += d * t.zhat(i, j);
                    dbeta_eff[j] += d;
                    dzhat(i, j) = d * t.gamma_eff[j];
                }
            if (mode.aws_alpha && *mode.aws_alpha == 0.0) {
                // psi entries receive exactly zero gradient
            } else {
                for (std::size_t j = 0; j < out; ++j) {
                    g[lo.norm_scale + j] += alpha_factor * dgamma_eff[j];
                    g[lo.norm_bias + j] += alpha_factor * dbeta_eff[j];
                }
            }

            if (spec.norm_kind == NormKind::batch_norm) {
                if (mode.phase == Phase::train) {
                    // dz = inv_std * (dzhat - mean_i(dzhat) - zhat * mean_i(dzhat*zhat))
                    for (std::size_t j = 0; j < out; ++j) {
                        double s1 = 0.0, s2 = 0.0;
                        for (std::size_t i = 0; i < B; ++i) {
                            s1 += dzhat(i, j);
                            s2 += dzhat(i, j) * t.zhat(i, j);
                        }
                        s1 *= invB;
                        s2 *= invB;
                        for (std::size_t i = 0; i < B; ++i)
                            dz(i, j) = t.inv_std[j] * (dzhat(i, j) - s1 - t.zhat(i, j) * s2);
                    }
                } else {  // running stats are constants
                    for (std::size_t i = 0; i < B; ++i)
                        for (std::size_t j = 0; j < out; ++j)
                            dz(i, j) = dzhat(i, j) * t.inv_std[j];
                }
            } else {  // layer_norm, per-sample statistics
                const double invF = 1.0 / static_cast<double>(out);
                for (std::size_t i = 0; i < B; ++i) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < out; ++j) {
                        s1 += dzhat(i, j);
                        s2 += dzhat(i, j) * t.zhat(i, j);
                    }
                    s1 *= invF;
                    s2 *= invF;
                    for (std::size_t j = 0; j < out; ++j)
                        dz(i, j) = t.inv_std[i] * (dzhat(i, j) - s1 - t.zhat(i, j) * s2);
                }
            }
        }

        const Matrix& layer_in = l > 0 ? trace.layers[l - 1].a : batch.inputs;
        Matrix dx_next(B, in);
        const double* W = params.values.data() + lo.weight;
        double* dW = g.data() + lo.weight;
        double* db = g.data() + lo.bias;
        for (std::size_t i = 0; i < B; ++i) {
            const double* xi = layer_in.row(i);
            const double* dzi = dz.row(i);
            double* dxi = dx_next.row(i);
            for (std::size_t j = 0; j < out; ++j) {
                const double d = dzi[j];
                const double* wj = W + j * in;
                double* dwj = dW + j * in;
                db[j] += d;
                for (std::size_t k = 0; k < in; ++k) {
                    dwj[k] += d * xi[k];
                    dxi[k] += d * wj[k];
                }
            }
        }
        dx = std::move(dx_next);
    }

    return result;
}

inline GradientVector backward(const ParamVector& params, const NormBuffers& buffers,
                               std::span<const double> psi_init, const Batch& batch,
                               const ForwardMode& mode) {
    return backward_full(params, buffers, psi_init, batch, mode).grads;
}

inline std::size_t argmax_row(const Matrix& m, std::size_t i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.cols; ++j)
        if (m(i, j) > m(i, best)) best = j;
    return best;
}

// Worst-case agreement between analytic gradients and central finite
// differences of the loss over every parameter, on a fixed probe batch.
// Differences are measured as |a - fd| / max(1, |a|, |fd|); the finite
// differences touch only the forward pass.
inline double grad_check(const ModelSpec& spec, std::uint64_t seed, const ForwardMode& mode,
                         double step = 1e-6) {
    auto [params, buffers] = build(spec, seed);
    if (params.size() > 2000)
        throw ConfigError("grad_check: spec too large (d > 2000)");

    Rng rng(seed_mix(seed, 0x70726f62ull /* "prob" */));
    const std::size_t B = 5;
    Batch batch;
    batch.inputs = Matrix(B, static_cast<std::size_t>(spec.input_dim));
    for (double& x : batch.inputs.v) x = rng.gaussian();
    batch.labels.resize(B);
    for (std::size_t i = 0; i < B; ++i) batch.labels[i] = static_cast<int>(i % spec.output_dim);

    const std::vector<double> psi_init = [&] {
        // A non-trivial interpolation target: perturbed copy of the fresh psi.
        std::vector<double> p = params.extract_psi();
        for (double& v : p) v += 0.25 * rng.gaussian();
        return p;
    }();

    // Give eval-phase checks non-trivial running statistics.
    NormBuffers run_buffers = buffers;
    if (spec.norm_kind == NormKind::batch_norm)
        run_buffers = forward(params, buffers, psi_init, batch, train_mode()).buffers;

    const GradientVector analytic = backward(params, run_buffers, psi_init, batch, mode);

    double worst = 0.0;
    ParamVector probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = probe.values[i];
        probe.values[i] = saved + step;
        const double up = forward(probe, run_buffers, psi_init, batch, mode).loss;
        probe.values[i] = saved - step;
        const double down = forward(probe, run_buffers, psi_init, batch, mode).loss;
        probe.values[i] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(fd)});
        worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
    }
    return worst;
}

}  // namespace ticketlab
