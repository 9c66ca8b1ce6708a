#include <algorithm>
#include <cmath>

#include "manid/errors.hpp"
#include "manid/nn.hpp"

namespace manid {

std::size_t pruned_weight_count(std::size_t total, double p) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("pruning ratio must lie in [0, 1)");
    const double exact = p * static_cast<double>(total);
    const double nearest = std::round(exact);
    if (std::abs(exact - nearest) <= 1e-9 * std::max(1.0, static_cast<double>(total)))
        return static_cast<std::size_t>(nearest);
    return static_cast<std::size_t>(std::ceil(exact));
}

PruneResult prune_global_l1(std::span<MlpNet* const> nets, double p, LayerFilter filter) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("pruning ratio must lie in [0, 1)");

    struct Entry {
        double magnitude;
        std::uint32_t net, layer;
        std::size_t index;
    };
    std::vector<Entry> entries;
    PruneResult result;
    result.retained.resize(nets.size());
    for (std::size_t n = 0; n < nets.size(); ++n) {
        MlpNet& net = *nets[n];
        result.retained[n].resize(net.depth());
        for (std::size_t l = 0; l < net.depth(); ++l) {
            DenseLayer& L = net.layer(l);
            result.retained[n][l] = L.weight.size();
            if (filter && !filter(n, l)) continue;
            L.mask.reset();
            for (std::size_t i = 0; i < L.weight.size(); ++i)
                entries.push_back({std::abs(L.weight.data()[i]), static_cast<std::uint32_t>(n),
                                   static_cast<std::uint32_t>(l), i});
        }
    }
    result.total_selected = entries.size();
    result.masked = pruned_weight_count(entries.size(), p);
    if (result.masked == 0) return result;

    auto less = [](const Entry& a, const Entry& b) {
        if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
        if (a.net != b.net) return a.net < b.net;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.index < b.index;
    };
    auto cut = entries.begin() + static_cast<std::ptrdiff_t>(result.masked);
    std::nth_element(entries.begin(), cut - 1, entries.end(), less);

    for (auto it = entries.begin(); it != cut; ++it) {
        DenseLayer& L = nets[it->net]->layer(it->layer);
        if (!L.mask) L.mask = Matrix(L.out(), L.in(), 1.0);
        L.mask->data()[it->index] = 0.0;
        --result.retained[it->net][it->layer];
    }
    return result;
}

}  // namespace manid
