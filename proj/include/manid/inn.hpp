#pragma once

// Invertible networks built from affine coupling blocks. A block splits
// x = (x1, x2) and evaluates, in order,
//
//   y1 = x1 * exp(s(C(x2))) + D(x2)
//   y2 = x2 * exp(s(A(y1))) + B(y1)
//
// with s(u) = c tanh(u / c), so the inverse is exact:
//
//   x2 = (y2 - B(y1)) * exp(-s(A(y1)))
//   x1 = (y1 - D(x2)) * exp(-s(C(x2)))

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "manid/container.hpp"
#include "manid/linalg.hpp"
#include "manid/nn.hpp"

namespace manid {

struct CouplingBlock {
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    MlpNet a, b;  // n1 -> n2
    MlpNet c, d;  // n2 -> n1
    double clamp = 5.0;

    std::size_t dim() const { return n1 + n2; }
    void validate() const;

    /// Sub-nets n_in -> hidden... -> n_out with tanh hidden units. The last
    /// layer of each sub-net is scaled by `output_scale`, so small values
    /// start the block close to the identity.
    static CouplingBlock create(std::size_t n, const std::vector<std::size_t>& hidden, Rng& rng,
                                double clamp = 5.0, double output_scale = 0.1);

    bool operator==(const CouplingBlock&) const = default;
};

std::vector<double> coupling_forward(const CouplingBlock& block, std::span<const double> x);
std::vector<double> coupling_inverse(const CouplingBlock& block, std::span<const double> y);
/// log |det d forward / dx| at x: the sum of all clamped scale outputs.
double coupling_log_det(const CouplingBlock& block, std::span<const double> x);

/// Gradients of the four sub-nets of every block, in order A, B, C, D.
struct StackGradients {
    std::vector<std::array<NetGradients, 4>> blocks;
    void zero();
};

struct StackCache;

/// Blocks applied in order, with the coordinates reversed between
/// consecutive blocks.
class CouplingStack {
public:
    CouplingStack() = default;
    explicit CouplingStack(std::vector<CouplingBlock> blocks);

    static CouplingStack create(std::size_t n, std::size_t n_blocks,
                                const std::vector<std::size_t>& hidden, Rng& rng,
                                double clamp = 5.0, double output_scale = 0.1);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return blocks_.size(); }
    const std::vector<CouplingBlock>& blocks() const { return blocks_; }
    std::vector<CouplingBlock>& blocks() { return blocks_; }

    std::vector<double> forward(std::span<const double> x) const;
    std::vector<double> inverse(std::span<const double> y) const;
    double log_det(std::span<const double> x) const;

    Matrix forward_batch(const Matrix& x, StackCache* cache = nullptr) const;
    Matrix inverse_batch(const Matrix& y, StackCache* cache = nullptr) const;
    /// Back-propagation through a cached forward_batch; returns d/dx and
    /// accumulates parameter gradients into `grads` when given.
    Matrix backward_forward(const StackCache& cache, const Matrix& d_y, StackGradients* grads) const;
    /// Same for a cached inverse_batch; returns d/dy.
    Matrix backward_inverse(const StackCache& cache, const Matrix& d_x, StackGradients* grads) const;

    StackGradients zero_gradients() const;

    bool operator==(const CouplingStack&) const = default;

private:
    std::vector<CouplingBlock> blocks_;
    std::size_t dim_ = 0;
};

/// Per-block intermediate values recorded by the batch passes.
struct StackCache {
    struct Block {
        Matrix first, second;  // x1 and x2 of the block
        Matrix y1;
        Matrix sa, sc;         // clamped scales
        std::array<ForwardCache, 4> nets;
    };
    std::vector<Block> blocks;
    bool inverse = false;
};

struct StackAdam {
    std::vector<std::array<AdamState, 4>> blocks;
    explicit StackAdam(const CouplingStack& stack, double lr = 1e-3);
    void set_lr(double lr);
};

void adam_step(CouplingStack& stack, const StackGradients& grads, StackAdam& state);

struct ChartPoint {
    std::vector<double> z;         // first d coordinates of the stack output
    std::vector<double> residual;  // the remaining n - d
};

ChartPoint chart_encode(const CouplingStack& stack, std::span<const double> x, std::size_t d);
/// Inverse of the stack applied to (z, 0).
std::vector<double> chart_decode(const CouplingStack& stack, std::span<const double> z);

Container save_stack(const CouplingStack& stack);
CouplingStack load_stack(const Container& c);

}  // namespace manid
