#include <cmath>

#include "manid/nn.hpp"

namespace manid {

AdamState::AdamState(const MlpNet& net, double learning_rate)
    : lr(learning_rate), m(net.zero_gradients()), v(net.zero_gradients()) {}

void adam_step(MlpNet& net, const NetGradients& grads, AdamState& state) {
    if (state.m.layers.size() != net.depth()) {
        state.m = net.zero_gradients();
        state.v = net.zero_gradients();
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const double b1 = state.beta1, b2 = state.beta2;

    auto update = [&](double& param, double g, double& m, double& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        param -= state.lr * (m / c1) / (std::sqrt(v / c2) + state.eps);
    };

    for (std::size_t li = 0; li < net.depth(); ++li) {
        DenseLayer& L = net.layer(li);
        const LayerGradient& g = grads.layers[li];
        LayerGradient& m = state.m.layers[li];
        LayerGradient& v = state.v.layers[li];
        const double* mask = L.mask ? L.mask->data() : nullptr;
        double* w = L.weight.data();
        for (std::size_t i = 0; i < L.weight.size(); ++i) {
            if (mask && mask[i] == 0.0) continue;
            double& vi = v.weight.data()[i];
            update(w[i], g.weight.data()[i], m.weight.data()[i], vi);
            if (state.l1 > 0.0) {
                const double thr = state.lr * state.l1 / (std::sqrt(vi / c2) + state.eps);
                const double mag = std::abs(w[i]) - thr;
                w[i] = mag > 0.0 ? std::copysign(mag, w[i]) : 0.0;
            }
        }
        for (std::size_t i = 0; i < L.bias.size(); ++i)
            update(L.bias[i], g.bias[i], m.bias[i], v.bias[i]);
    }
}

}  // namespace manid
