#include <algorithm>
#include <cmath>

#include "manid/errors.hpp"
#include "manid/kernels.hpp"
#include "manid/nn.hpp"

namespace manid {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softplus: return "softplus";
    }
    return "linear";
}

Activation activation_from_string(const std::string& s) {
    for (Activation a : {Activation::linear, Activation::relu, Activation::leaky_relu,
                         Activation::tanh, Activation::sigmoid, Activation::softplus})
        if (to_string(a) == s) return a;
    throw FormatError("unknown activation '" + s + "'");
}

namespace {

double activate(Activation a, double slope, double u) {
    switch (a) {
        case Activation::linear: return u;
        case Activation::relu: return u > 0.0 ? u : 0.0;
        case Activation::leaky_relu: return u > 0.0 ? u : slope * u;
        case Activation::tanh: return std::tanh(u);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-u));
        case Activation::softplus: return u > 30.0 ? u : std::log1p(std::exp(u));
    }
    return u;
}

// Derivative given pre-activation u and output y = act(u).
double activate_deriv(Activation a, double slope, double u, double y) {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::relu: return u > 0.0 ? 1.0 : 0.0;
        case Activation::leaky_relu: return u > 0.0 ? 1.0 : slope;
        case Activation::tanh: return 1.0 - y * y;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::softplus: return 1.0 / (1.0 + std::exp(-u));
    }
    return 1.0;
}

}  // namespace

Matrix DenseLayer::effective_weight() const {
    if (!mask) return weight;
    Matrix w = weight;
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] *= mask->data()[i];
    return w;
}

void NetGradients::zero() {
    for (auto& l : layers) {
        std::fill(l.weight.values().begin(), l.weight.values().end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
}

void NetGradients::scale(double s) {
    for (auto& l : layers) {
        for (double& v : l.weight.values()) v *= s;
        for (double& v : l.bias) v *= s;
    }
}

void NetGradients::add(const NetGradients& other) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& w = layers[i].weight;
        const auto& ow = other.layers[i].weight;
        kernels::active().axpy(1.0, ow.data(), w.data(), w.size());
        for (std::size_t j = 0; j < layers[i].bias.size(); ++j)
            layers[i].bias[j] += other.layers[i].bias[j];
    }
}

MlpNet::MlpNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

void MlpNet::validate() const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& L = layers_[l];
        if (L.bias.size() != L.out()) throw DimensionError("layer bias length mismatch");
        if (L.mask && (L.mask->rows() != L.out() || L.mask->cols() != L.in()))
            throw DimensionError("layer mask shape mismatch");
        if (l > 0 && layers_[l - 1].out() != L.in())
            throw DimensionError("layer " + std::to_string(l) + " input " + std::to_string(L.in()) +
                                 " does not chain with previous output " +
                                 std::to_string(layers_[l - 1].out()));
    }
}

MlpNet MlpNet::random(const Spec& spec, Rng& rng) {
    if (spec.sizes.size() < 2) throw ConfigError("MlpNet needs at least input and output sizes");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < spec.sizes.size(); ++l) {
        const std::size_t in = spec.sizes[l], out = spec.sizes[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer layer;
        layer.weight = Matrix(out, in);
        for (double& w : layer.weight.values()) w = dist(rng);
        layer.bias.assign(out, 0.0);
        layer.activation = (l + 2 == spec.sizes.size()) ? spec.output : spec.hidden;
        layer.slope = spec.slope;
        layers.push_back(std::move(layer));
    }
    return MlpNet(std::move(layers));
}

std::size_t MlpNet::input_dim() const { return layers_.empty() ? 0 : layers_.front().in(); }
std::size_t MlpNet::output_dim() const { return layers_.empty() ? 0 : layers_.back().out(); }

std::vector<double> MlpNet::forward(std::span<const double> x) const {
    if (x.size() != input_dim())
        throw DimensionError("forward: input length " + std::to_string(x.size()) +
                             " != " + std::to_string(input_dim()));
    std::vector<double> cur(x.begin(), x.end());
    const auto& k = kernels::active();
    for (const auto& L : layers_) {
        const Matrix w = L.effective_weight();
        std::vector<double> next(L.out());
        for (std::size_t i = 0; i < L.out(); ++i)
            next[i] = activate(L.activation, L.slope,
                               k.dot(w.row(i).data(), cur.data(), cur.size()) + L.bias[i]);
        cur = std::move(next);
    }
    return cur;
}

Matrix MlpNet::forward_batch(const Matrix& x, ForwardCache* cache) const {
    if (x.cols() != input_dim()) throw DimensionError("forward_batch: input width mismatch");
    if (cache) {
        cache->inputs.assign(1, x);
        cache->pre.clear();
    }
    Matrix cur = x;
    const auto& k = kernels::active();
    for (const auto& L : layers_) {
        const std::size_t b = cur.rows();
        Matrix pre(b, L.out());
        if (L.mask) {
            const Matrix w = L.effective_weight();
            k.gemm_nt(b, L.out(), L.in(), cur.data(), L.in(), w.data(), L.in(), pre.data(),
                      L.out(), false);
        } else {
            k.gemm_nt(b, L.out(), L.in(), cur.data(), L.in(), L.weight.data(), L.in(), pre.data(),
                      L.out(), false);
        }
        Matrix post(b, L.out());
        for (std::size_t i = 0; i < b; ++i) {
            auto pr = pre.row(i);
            auto po = post.row(i);
            for (std::size_t j = 0; j < L.out(); ++j) {
                pr[j] += L.bias[j];
                po[j] = activate(L.activation, L.slope, pr[j]);
            }
        }
        if (cache) {
            cache->pre.push_back(std::move(pre));
            cache->inputs.push_back(post);
        }
        cur = std::move(post);
    }
    return cur;
}

Matrix MlpNet::backward_batch(const ForwardCache& cache, const Matrix& d_out,
                              NetGradients* grads) const {
    if (cache.pre.size() != layers_.size()) throw DimensionError("backward_batch: stale cache");
    if (d_out.cols() != output_dim() || d_out.rows() != cache.inputs.front().rows())
        throw DimensionError("backward_batch: gradient shape mismatch");
    const auto& k = kernels::active();
    Matrix delta = d_out;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const auto& L = layers_[li];
        const Matrix& pre = cache.pre[li];
        const Matrix& post = cache.inputs[li + 1];
        const Matrix& input = cache.inputs[li];
        const std::size_t b = delta.rows();
        for (std::size_t i = 0; i < b; ++i) {
            auto d = delta.row(i);
            auto u = pre.row(i);
            auto y = post.row(i);
            for (std::size_t j = 0; j < L.out(); ++j)
                d[j] *= activate_deriv(L.activation, L.slope, u[j], y[j]);
        }
        if (grads) {
            auto& g = grads->layers[li];
            // dW += delta^T * input
            k.gemm_nn(L.out(), L.in(), b, {delta.data(), 1, L.out()}, input.data(), L.in(),
                      g.weight.data(), L.in(), true);
            if (L.mask)
                for (std::size_t i = 0; i < g.weight.size(); ++i)
                    g.weight.data()[i] *= L.mask->data()[i];
            for (std::size_t i = 0; i < b; ++i) {
                auto d = delta.row(i);
                for (std::size_t j = 0; j < L.out(); ++j) g.bias[j] += d[j];
            }
        }
        Matrix d_in(b, L.in());
        if (L.mask) {
            const Matrix w = L.effective_weight();
            k.gemm_nn(b, L.in(), L.out(), {delta.data(), L.out(), 1}, w.data(), L.in(),
                      d_in.data(), L.in(), false);
        } else {
            k.gemm_nn(b, L.in(), L.out(), {delta.data(), L.out(), 1}, L.weight.data(), L.in(),
                      d_in.data(), L.in(), false);
        }
        delta = std::move(d_in);
    }
    return delta;
}

Matrix MlpNet::jacobian(std::span<const double> x) const {
    return jacobian_rows(x, 0, output_dim());
}

Matrix MlpNet::jacobian_rows(std::span<const double> x, std::size_t first,
                             std::size_t count) const {
    if (x.size() != input_dim()) throw DimensionError("jacobian: input length mismatch");
    if (first + count > output_dim()) throw DimensionError("jacobian: row range out of bounds");
    if (layers_.empty()) throw DimensionError("jacobian: empty network");

    // Forward pass recording per-layer derivative diagonals.
    std::vector<std::vector<double>> deriv(layers_.size());
    std::vector<Matrix> weights;
    weights.reserve(layers_.size());
    std::vector<double> cur(x.begin(), x.end());
    const auto& k = kernels::active();
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const auto& L = layers_[li];
        weights.push_back(L.effective_weight());
        std::vector<double> next(L.out());
        deriv[li].resize(L.out());
        for (std::size_t i = 0; i < L.out(); ++i) {
            const double u = k.dot(weights[li].row(i).data(), cur.data(), cur.size()) + L.bias[i];
            next[i] = activate(L.activation, L.slope, u);
            deriv[li][i] = activate_deriv(L.activation, L.slope, u, next[i]);
        }
        cur = std::move(next);
    }

    // J = D_L W_L D_{L-1} W_{L-1} ... D_1 W_1, accumulated from the output side.
    const std::size_t last = layers_.size() - 1;
    Matrix acc(count, layers_[last].in());
    for (std::size_t r = 0; r < count; ++r) {
        const double d = deriv[last][first + r];
        auto src = weights[last].row(first + r);
        auto dst = acc.row(r);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = d * src[j];
    }
    for (std::size_t li = last; li-- > 0;) {
        const auto& L = layers_[li];
        for (std::size_t r = 0; r < count; ++r) {
            auto row = acc.row(r);
            for (std::size_t j = 0; j < row.size(); ++j) row[j] *= deriv[li][j];
        }
        Matrix next(count, L.in());
        k.gemm_nn(count, L.in(), L.out(), {acc.data(), L.out(), 1}, weights[li].data(), L.in(),
                  next.data(), L.in(), false);
        acc = std::move(next);
    }
    return acc;
}

NetGradients MlpNet::zero_gradients() const {
    NetGradients g;
    g.layers.reserve(layers_.size());
    for (const auto& L : layers_)
        g.layers.push_back({Matrix(L.out(), L.in()), std::vector<double>(L.out(), 0.0)});
    return g;
}

std::size_t MlpNet::weight_count() const {
    std::size_t n = 0;
    for (const auto& L : layers_) n += L.weight.size();
    return n;
}

std::size_t MlpNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& L : layers_) n += L.weight.size() + L.bias.size();
    return n;
}

double MlpNet::l1_weight_norm() const {
    double s = 0.0;
    for (const auto& L : layers_)
        for (std::size_t i = 0; i < L.weight.size(); ++i)
            if (!L.mask || L.mask->data()[i] != 0.0) s += std::abs(L.weight.data()[i]);
    return s;
}

bool MlpNet::has_masks() const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [](const DenseLayer& L) { return L.mask.has_value(); });
}

void MlpNet::clear_masks() {
    for (auto& L : layers_) L.mask.reset();
}

bool MlpNet::operator==(const MlpNet& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& a = layers_[i];
        const auto& b = other.layers_[i];
        if (a.weight != b.weight || a.bias != b.bias || a.activation != b.activation ||
            a.slope != b.slope || a.mask != b.mask)
            return false;
    }
    return true;
}

}  // namespace manid
