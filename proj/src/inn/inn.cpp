#include "manid/inn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "manid/errors.hpp"

namespace manid {

namespace {

Matrix columns(const Matrix& x, std::size_t first, std::size_t count) {
    Matrix out(x.rows(), count);
    for (std::size_t i = 0; i < x.rows(); ++i)
        std::copy_n(x.row(i).begin() + static_cast<std::ptrdiff_t>(first), count, out.row(i).begin());
    return out;
}

Matrix concat(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::copy(a.row(i).begin(), a.row(i).end(), out.row(i).begin());
        std::copy(b.row(i).begin(), b.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

Matrix reversed_columns(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) std::reverse_copy(x.row(i).begin(), x.row(i).end(), out.row(i).begin());
    return out;
}

Matrix clamped(const Matrix& u, double c) {
    Matrix s(u.rows(), u.cols());
    for (std::size_t i = 0; i < u.size(); ++i) s.data()[i] = c * std::tanh(u.data()[i] / c);
    return s;
}

void add_into(Matrix& a, const Matrix& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

Matrix negated(Matrix a) {
    for (double& v : a.values()) v = -v;
    return a;
}

Matrix row_matrix(std::span<const double> x) { return Matrix(1, x.size(), std::vector<double>(x.begin(), x.end())); }

std::vector<double> first_row(const Matrix& m) { return {m.row(0).begin(), m.row(0).end()}; }

Matrix block_forward(const CouplingBlock& k, const Matrix& x, StackCache::Block* cache) {
    if (x.cols() != k.dim()) throw DimensionError("coupling: input width mismatch");
    const std::size_t B = x.rows();
    StackCache::Block local;
    StackCache::Block& c = cache ? *cache : local;
    const bool rec = cache != nullptr;
    c.first = columns(x, 0, k.n1);
    c.second = columns(x, k.n1, k.n2);
    c.sc = clamped(k.c.forward_batch(c.second, rec ? &c.nets[2] : nullptr), k.clamp);
    const Matrix d_out = k.d.forward_batch(c.second, rec ? &c.nets[3] : nullptr);
    c.y1 = Matrix(B, k.n1);
    for (std::size_t i = 0; i < c.y1.size(); ++i)
        c.y1.data()[i] = c.first.data()[i] * std::exp(c.sc.data()[i]) + d_out.data()[i];
    c.sa = clamped(k.a.forward_batch(c.y1, rec ? &c.nets[0] : nullptr), k.clamp);
    const Matrix b_out = k.b.forward_batch(c.y1, rec ? &c.nets[1] : nullptr);
    Matrix y2(B, k.n2);
    for (std::size_t i = 0; i < y2.size(); ++i)
        y2.data()[i] = c.second.data()[i] * std::exp(c.sa.data()[i]) + b_out.data()[i];
    return concat(c.y1, y2);
}

Matrix block_inverse(const CouplingBlock& k, const Matrix& y, StackCache::Block* cache) {
    if (y.cols() != k.dim()) throw DimensionError("coupling: input width mismatch");
    const std::size_t B = y.rows();
    StackCache::Block local;
    StackCache::Block& c = cache ? *cache : local;
    const bool rec = cache != nullptr;
    c.y1 = columns(y, 0, k.n1);
    const Matrix y2 = columns(y, k.n1, k.n2);
    c.sa = clamped(k.a.forward_batch(c.y1, rec ? &c.nets[0] : nullptr), k.clamp);
    const Matrix b_out = k.b.forward_batch(c.y1, rec ? &c.nets[1] : nullptr);
    c.second = Matrix(B, k.n2);
    for (std::size_t i = 0; i < c.second.size(); ++i)
        c.second.data()[i] = (y2.data()[i] - b_out.data()[i]) * std::exp(-c.sa.data()[i]);
    c.sc = clamped(k.c.forward_batch(c.second, rec ? &c.nets[2] : nullptr), k.clamp);
    const Matrix d_out = k.d.forward_batch(c.second, rec ? &c.nets[3] : nullptr);
    c.first = Matrix(B, k.n1);
    for (std::size_t i = 0; i < c.first.size(); ++i)
        c.first.data()[i] = (c.y1.data()[i] - d_out.data()[i]) * std::exp(-c.sc.data()[i]);
    return concat(c.first, c.second);
}

// d s / d u for s = c tanh(u / c), written in terms of s.
double clamp_deriv(double s, double c) { return 1.0 - (s / c) * (s / c); }

Matrix block_backward_forward(const CouplingBlock& k, const StackCache::Block& c, const Matrix& dy,
                              std::array<NetGradients, 4>* g) {
    const std::size_t B = dy.rows();
    Matrix dy1 = columns(dy, 0, k.n1);
    const Matrix dy2 = columns(dy, k.n1, k.n2);
    Matrix dua(B, k.n2), dx2(B, k.n2);
    for (std::size_t i = 0; i < dy2.size(); ++i) {
        const double e = std::exp(c.sa.data()[i]);
        dx2.data()[i] = dy2.data()[i] * e;
        dua.data()[i] = dy2.data()[i] * c.second.data()[i] * e * clamp_deriv(c.sa.data()[i], k.clamp);
    }
    add_into(dy1, k.a.backward_batch(c.nets[0], dua, g ? &(*g)[0] : nullptr));
    add_into(dy1, k.b.backward_batch(c.nets[1], dy2, g ? &(*g)[1] : nullptr));
    Matrix duc(B, k.n1), dx1(B, k.n1);
    for (std::size_t i = 0; i < dy1.size(); ++i) {
        const double e = std::exp(c.sc.data()[i]);
        dx1.data()[i] = dy1.data()[i] * e;
        duc.data()[i] = dy1.data()[i] * c.first.data()[i] * e * clamp_deriv(c.sc.data()[i], k.clamp);
    }
    add_into(dx2, k.c.backward_batch(c.nets[2], duc, g ? &(*g)[2] : nullptr));
    add_into(dx2, k.d.backward_batch(c.nets[3], dy1, g ? &(*g)[3] : nullptr));
    return concat(dx1, dx2);
}

Matrix block_backward_inverse(const CouplingBlock& k, const StackCache::Block& c, const Matrix& dx,
                              std::array<NetGradients, 4>* g) {
    const std::size_t B = dx.rows();
    const Matrix dx1 = columns(dx, 0, k.n1);
    Matrix dx2 = columns(dx, k.n1, k.n2);
    Matrix du(B, k.n1), duc(B, k.n1);
    for (std::size_t i = 0; i < dx1.size(); ++i) {
        du.data()[i] = dx1.data()[i] * std::exp(-c.sc.data()[i]);
        duc.data()[i] = -dx1.data()[i] * c.first.data()[i] * clamp_deriv(c.sc.data()[i], k.clamp);
    }
    Matrix dy1 = du;
    add_into(dx2, k.d.backward_batch(c.nets[3], negated(du), g ? &(*g)[3] : nullptr));
    add_into(dx2, k.c.backward_batch(c.nets[2], duc, g ? &(*g)[2] : nullptr));
    Matrix dv(B, k.n2), dua(B, k.n2);
    for (std::size_t i = 0; i < dx2.size(); ++i) {
        dv.data()[i] = dx2.data()[i] * std::exp(-c.sa.data()[i]);
        dua.data()[i] = -dx2.data()[i] * c.second.data()[i] * clamp_deriv(c.sa.data()[i], k.clamp);
    }
    add_into(dy1, k.b.backward_batch(c.nets[1], negated(dv), g ? &(*g)[1] : nullptr));
    add_into(dy1, k.a.backward_batch(c.nets[0], dua, g ? &(*g)[0] : nullptr));
    return concat(dy1, dv);
}

MlpNet subnet(std::size_t in, std::size_t out, const std::vector<std::size_t>& hidden, Rng& rng,
              double output_scale) {
    MlpNet::Spec spec;
    spec.sizes.push_back(in);
    spec.sizes.insert(spec.sizes.end(), hidden.begin(), hidden.end());
    spec.sizes.push_back(out);
    spec.hidden = Activation::tanh;
    spec.output = Activation::linear;
    MlpNet net = MlpNet::random(spec, rng);
    for (double& w : net.layers().back().weight.values()) w *= output_scale;
    return net;
}

}  // namespace

void CouplingBlock::validate() const {
    if (n1 == 0 || n2 == 0) throw DimensionError("coupling block needs both halves non-empty");
    if (!(clamp > 0.0)) throw ConfigError("coupling scale clamp must be positive");
    auto check = [](const MlpNet& net, std::size_t in, std::size_t out, const char* name) {
        if (net.input_dim() != in || net.output_dim() != out)
            throw DimensionError(std::string("coupling sub-net ") + name + " has the wrong shape");
    };
    check(a, n1, n2, "A");
    check(b, n1, n2, "B");
    check(c, n2, n1, "C");
    check(d, n2, n1, "D");
}

CouplingBlock CouplingBlock::create(std::size_t n, const std::vector<std::size_t>& hidden, Rng& rng,
                                    double clamp, double output_scale) {
    if (n < 2) throw DimensionError("coupling block needs dimension >= 2");
    CouplingBlock k;
    k.n1 = n / 2;
    k.n2 = n - k.n1;
    k.clamp = clamp;
    k.a = subnet(k.n1, k.n2, hidden, rng, output_scale);
    k.b = subnet(k.n1, k.n2, hidden, rng, output_scale);
    k.c = subnet(k.n2, k.n1, hidden, rng, output_scale);
    k.d = subnet(k.n2, k.n1, hidden, rng, output_scale);
    k.validate();
    return k;
}

std::vector<double> coupling_forward(const CouplingBlock& block, std::span<const double> x) {
    return first_row(block_forward(block, row_matrix(x), nullptr));
}

std::vector<double> coupling_inverse(const CouplingBlock& block, std::span<const double> y) {
    return first_row(block_inverse(block, row_matrix(y), nullptr));
}

double coupling_log_det(const CouplingBlock& block, std::span<const double> x) {
    StackCache::Block c;
    block_forward(block, row_matrix(x), &c);
    double s = 0.0;
    for (double v : c.sa.values()) s += v;
    for (double v : c.sc.values()) s += v;
    return s;
}

void StackGradients::zero() {
    for (auto& blk : blocks)
        for (auto& g : blk) g.zero();
}

CouplingStack::CouplingStack(std::vector<CouplingBlock> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw DimensionError("coupling stack needs at least one block");
    dim_ = blocks_.front().dim();
    for (const auto& b : blocks_) {
        b.validate();
        if (b.dim() != dim_ || b.n1 != blocks_.front().n1)
            throw DimensionError("coupling stack blocks must share their split");
    }
}

CouplingStack CouplingStack::create(std::size_t n, std::size_t n_blocks, const std::vector<std::size_t>& hidden,
                                    Rng& rng, double clamp, double output_scale) {
    if (n_blocks == 0) throw ConfigError("coupling stack needs at least one block");
    std::vector<CouplingBlock> blocks;
    for (std::size_t i = 0; i < n_blocks; ++i)
        blocks.push_back(CouplingBlock::create(n, hidden, rng, clamp, output_scale));
    return CouplingStack(std::move(blocks));
}

Matrix CouplingStack::forward_batch(const Matrix& x, StackCache* cache) const {
    if (x.cols() != dim_) throw DimensionError("coupling stack: input width mismatch");
    if (cache) {
        cache->blocks.assign(blocks_.size(), {});
        cache->inverse = false;
    }
    Matrix cur = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (i > 0) cur = reversed_columns(cur);
        cur = block_forward(blocks_[i], cur, cache ? &cache->blocks[i] : nullptr);
    }
    return cur;
}

Matrix CouplingStack::inverse_batch(const Matrix& y, StackCache* cache) const {
    if (y.cols() != dim_) throw DimensionError("coupling stack: input width mismatch");
    if (cache) {
        cache->blocks.assign(blocks_.size(), {});
        cache->inverse = true;
    }
    Matrix cur = y;
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        cur = block_inverse(blocks_[i], cur, cache ? &cache->blocks[i] : nullptr);
        if (i > 0) cur = reversed_columns(cur);
    }
    return cur;
}

Matrix CouplingStack::backward_forward(const StackCache& cache, const Matrix& d_y, StackGradients* grads) const {
    if (cache.inverse || cache.blocks.size() != blocks_.size())
        throw DimensionError("coupling stack: cache does not come from forward_batch");
    Matrix d = d_y;
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        d = block_backward_forward(blocks_[i], cache.blocks[i], d, grads ? &grads->blocks[i] : nullptr);
        if (i > 0) d = reversed_columns(d);
    }
    return d;
}

Matrix CouplingStack::backward_inverse(const StackCache& cache, const Matrix& d_x, StackGradients* grads) const {
    if (!cache.inverse || cache.blocks.size() != blocks_.size())
        throw DimensionError("coupling stack: cache does not come from inverse_batch");
    Matrix d = d_x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (i > 0) d = reversed_columns(d);
        d = block_backward_inverse(blocks_[i], cache.blocks[i], d, grads ? &grads->blocks[i] : nullptr);
    }
    return d;
}

std::vector<double> CouplingStack::forward(std::span<const double> x) const {
    return first_row(forward_batch(row_matrix(x)));
}

std::vector<double> CouplingStack::inverse(std::span<const double> y) const {
    return first_row(inverse_batch(row_matrix(y)));
}

double CouplingStack::log_det(std::span<const double> x) const {
    StackCache cache;
    forward_batch(row_matrix(x), &cache);
    double s = 0.0;
    for (const auto& b : cache.blocks) {
        for (double v : b.sa.values()) s += v;
        for (double v : b.sc.values()) s += v;
    }
    return s;
}

StackGradients CouplingStack::zero_gradients() const {
    StackGradients g;
    for (const auto& b : blocks_)
        g.blocks.push_back({b.a.zero_gradients(), b.b.zero_gradients(), b.c.zero_gradients(), b.d.zero_gradients()});
    return g;
}

StackAdam::StackAdam(const CouplingStack& stack, double lr) {
    for (const auto& b : stack.blocks())
        blocks.push_back({AdamState(b.a, lr), AdamState(b.b, lr), AdamState(b.c, lr), AdamState(b.d, lr)});
}

void StackAdam::set_lr(double lr) {
    for (auto& blk : blocks)
        for (auto& s : blk) s.lr = lr;
}

void adam_step(CouplingStack& stack, const StackGradients& grads, StackAdam& state) {
    if (grads.blocks.size() != stack.size() || state.blocks.size() != stack.size())
        throw DimensionError("adam_step: gradient does not match the stack");
    for (std::size_t i = 0; i < stack.size(); ++i) {
        CouplingBlock& b = stack.blocks()[i];
        MlpNet* nets[4] = {&b.a, &b.b, &b.c, &b.d};
        for (int q = 0; q < 4; ++q) adam_step(*nets[q], grads.blocks[i][q], state.blocks[i][q]);
    }
}

ChartPoint chart_encode(const CouplingStack& stack, std::span<const double> x, std::size_t d) {
    if (d > stack.dim()) throw DimensionError("chart dimension exceeds the ambient dimension");
    const auto y = stack.forward(x);
    ChartPoint p;
    p.z.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(d));
    p.residual.assign(y.begin() + static_cast<std::ptrdiff_t>(d), y.end());
    return p;
}

std::vector<double> chart_decode(const CouplingStack& stack, std::span<const double> z) {
    if (z.size() > stack.dim()) throw DimensionError("chart dimension exceeds the ambient dimension");
    std::vector<double> y(stack.dim(), 0.0);
    std::copy(z.begin(), z.end(), y.begin());
    return stack.inverse(y);
}

Container save_stack(const CouplingStack& stack) {
    Container c("coupling_stack");
    c.set("dim", stack.dim());
    c.set("n_blocks", stack.size());
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const auto& b = stack.blocks()[i];
        const std::string p = "block" + std::to_string(i);
        c.set(p + ".n1", b.n1);
        c.set(p + ".n2", b.n2);
        c.set(p + ".clamp", b.clamp);
        c.embed(p + ".A", save_mlp(b.a));
        c.embed(p + ".B", save_mlp(b.b));
        c.embed(p + ".C", save_mlp(b.c));
        c.embed(p + ".D", save_mlp(b.d));
    }
    return c;
}

CouplingStack load_stack(const Container& c) {
    if (c.kind() != "coupling_stack") throw FormatError("expected a coupling_stack, got '" + c.kind() + "'");
    std::vector<CouplingBlock> blocks;
    const std::size_t n = c.get_size("n_blocks");
    for (std::size_t i = 0; i < n; ++i) {
        const std::string p = "block" + std::to_string(i);
        CouplingBlock b;
        b.n1 = c.get_size(p + ".n1");
        b.n2 = c.get_size(p + ".n2");
        b.clamp = c.get_double(p + ".clamp");
        b.a = load_mlp(c.extract(p + ".A"));
        b.b = load_mlp(c.extract(p + ".B"));
        b.c = load_mlp(c.extract(p + ".C"));
        b.d = load_mlp(c.extract(p + ".D"));
        blocks.push_back(std::move(b));
    }
    CouplingStack s(std::move(blocks));
    if (s.dim() != c.get_size("dim")) throw FormatError("coupling_stack dimension does not match its blocks");
    return s;
}

}  // namespace manid
