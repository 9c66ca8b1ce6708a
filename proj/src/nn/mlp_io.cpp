#include "manid/errors.hpp"
#include "manid/nn.hpp"

namespace manid {

Container save_mlp(const MlpNet& net) {
    Container c("mlp");
    c.set("layers", net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& L = net.layer(l);
        const std::string p = "layer." + std::to_string(l) + ".";
        c.set(p + "in", L.in());
        c.set(p + "out", L.out());
        c.set(p + "activation", to_string(L.activation));
        c.set(p + "slope", L.slope);
        c.set(p + "mask", L.mask.has_value());
    }
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& L = net.layer(l);
        const std::string p = "layer" + std::to_string(l) + ".";
        c.add_block(p + "weight", std::vector<double>(L.weight.values().begin(), L.weight.values().end()));
        c.add_block(p + "bias", L.bias);
        if (L.mask)
            c.add_block(p + "mask", std::vector<double>(L.mask->values().begin(), L.mask->values().end()));
    }
    return c;
}

MlpNet load_mlp(const Container& c) {
    if (c.kind() != "mlp") throw FormatError("expected an mlp checkpoint, got '" + c.kind() + "'");
    const std::size_t depth = c.get_size("layers");
    std::vector<DenseLayer> layers(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        const std::string p = "layer." + std::to_string(l) + ".";
        const std::string b = "layer" + std::to_string(l) + ".";
        const std::size_t in = c.get_size(p + "in"), out = c.get_size(p + "out");
        auto& L = layers[l];
        L.weight = Matrix(out, in, c.block(b + "weight"));
        L.bias = c.block(b + "bias");
        L.activation = activation_from_string(c.get(p + "activation"));
        L.slope = c.get_double(p + "slope");
        if (c.get_bool(p + "mask")) L.mask = Matrix(out, in, c.block(b + "mask"));
    }
    return MlpNet(std::move(layers));
}

}  // namespace manid
