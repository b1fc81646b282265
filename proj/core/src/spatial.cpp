#include "probgnn/spatial.hpp"

#include <algorithm>
#include <cmath>

#include "probgnn/errors.hpp"

namespace probgnn {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Identity: return "identity";
    }
    return "?";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "identity") return Activation::Identity;
    fail("DomainError", "unknown activation '" + name + "'");
}

Tensor apply_activation(Activation a, const Tensor& x) {
    switch (a) {
        case Activation::ReLU: return relu(x);
        case Activation::Tanh: return tanh_op(x);
        case Activation::Sigmoid: return sigmoid(x);
        case Activation::Identity: return x;
    }
    fail("DomainError", "unknown activation");
}

Tensor apply_dropout(const Tensor& x, double rate, bool training, RngStream& rng) {
    require(rate >= 0.0 && rate < 1.0, "DomainError", "dropout rate must lie in [0, 1)");
    if (!training || rate == 0.0) return x;
    const double keep = 1.0 - rate;
    std::vector<double> mask(x.size());
    for (double& m : mask) m = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    return mul_elementwise(x, Tensor(x.shape(), std::move(mask)));
}

// ---------------------------------------------------------------------------
// GCN
// ---------------------------------------------------------------------------

GcnLayer GcnLayer::init(int graph_count, int d_in, int d_out, Activation act, double dropout,
                        RngStream& rng) {
    require(graph_count >= 1 && d_in >= 1 && d_out >= 1, "ShapeMismatch",
            "GcnLayer::init with nonpositive sizes");
    GcnLayer layer;
    layer.activation = act;
    layer.dropout = dropout;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    for (int r = 0; r < graph_count; ++r)
        layer.weights.push_back(
            Tensor::uniform({d_in, d_out}, -bound, bound, rng, /*requires_grad=*/true));
    return layer;
}

Tensor gcn_forward(const GcnLayer& layer, const Tensor& h, const AdjacencySet& adj,
                   bool training, RngStream& dropout_rng) {
    require(static_cast<int>(layer.weights.size()) == adj.count(), "ShapeMismatch",
            "GcnLayer weight count does not match adjacency count");
    require(h.rank() == 2 && h.dim(0) == adj.stations && h.dim(1) == layer.d_in(),
            "ShapeMismatch", "gcn_forward: input is " + shape_str(h.shape()));
    Tensor acc;
    for (int r = 0; r < adj.count(); ++r) {
        const Tensor norm(Shape{adj.stations, adj.stations},
                          adj.normalized[static_cast<std::size_t>(r)]);
        const Tensor term =
            matmul(matmul(norm, h), layer.weights[static_cast<std::size_t>(r)]);
        acc = acc.defined() ? add(acc, term) : term;
    }
    Tensor out = apply_activation(layer.activation, acc);
    return apply_dropout(out, layer.dropout, training, dropout_rng);
}

// ---------------------------------------------------------------------------
// GAT
// ---------------------------------------------------------------------------

GatLayer GatLayer::init(int heads, int stations, int d_in, int d_out,
                        std::vector<std::uint8_t> mask, bool average_heads, Activation act,
                        double dropout, RngStream& rng) {
    require(heads >= 1 && stations >= 1 && d_in >= 1 && d_out >= 1, "ShapeMismatch",
            "GatLayer::init with nonpositive sizes");
    require(mask.size() == static_cast<std::size_t>(stations) * static_cast<std::size_t>(stations),
            "ShapeMismatch", "GatLayer mask must be S x S");
    for (int i = 0; i < stations; ++i)
        require(mask[static_cast<std::size_t>(i) * static_cast<std::size_t>(stations) +
                     static_cast<std::size_t>(i)] != 0,
                "EmptyNeighborhood", "GAT mask diagonal must be true");
    GatLayer layer;
    layer.stations = stations;
    layer.mask = std::move(mask);
    layer.average_heads = average_heads;
    layer.activation = act;
    layer.dropout = dropout;
    const double wb = 1.0 / std::sqrt(static_cast<double>(d_in));
    const double ab = 1.0 / std::sqrt(static_cast<double>(d_out));
    for (int k = 0; k < heads; ++k) {
        layer.head_weight.push_back(Tensor::uniform({d_in, d_out}, -wb, wb, rng, true));
        layer.attn_src.push_back(Tensor::uniform({d_out, 1}, -ab, ab, rng, true));
        layer.attn_dst.push_back(Tensor::uniform({d_out, 1}, -ab, ab, rng, true));
    }
    return layer;
}

std::vector<Tensor> GatLayer::params() const {
    std::vector<Tensor> out;
    for (int k = 0; k < heads(); ++k) {
        out.push_back(head_weight[static_cast<std::size_t>(k)]);
        out.push_back(attn_src[static_cast<std::size_t>(k)]);
        out.push_back(attn_dst[static_cast<std::size_t>(k)]);
    }
    return out;
}

namespace {

// alpha = masked softmax over leaky_relu(u_i + v_j), u = Wh a_src, v = Wh a_dst
Tensor head_attention(const GatLayer& layer, const Tensor& wh, int head) {
    const int s = layer.stations;
    const Tensor ones_row = Tensor::full({1, s}, 1.0);
    const Tensor ones_col = Tensor::full({s, 1}, 1.0);
    const Tensor u = matmul(wh, layer.attn_src[static_cast<std::size_t>(head)]);  // S x 1
    const Tensor v = matmul(wh, layer.attn_dst[static_cast<std::size_t>(head)]);  // S x 1
    const Tensor scores =
        add(matmul(u, ones_row), matmul(ones_col, transpose(v)));  // u_i + v_j
    return masked_softmax_rows(leaky_relu(scores, layer.leaky_slope), layer.mask);
}

}  // namespace

Tensor gat_forward(const GatLayer& layer, const Tensor& h, bool training,
                   RngStream& dropout_rng) {
    require(h.rank() == 2 && h.dim(0) == layer.stations && h.dim(1) == layer.d_in(),
            "ShapeMismatch", "gat_forward: input is " + shape_str(h.shape()));
    std::vector<Tensor> head_outputs;
    Tensor avg_acc;
    for (int k = 0; k < layer.heads(); ++k) {
        const Tensor wh = matmul(h, layer.head_weight[static_cast<std::size_t>(k)]);
        const Tensor alpha = head_attention(layer, wh, k);
        const Tensor mixed = matmul(alpha, wh);
        if (layer.average_heads)
            avg_acc = avg_acc.defined() ? add(avg_acc, mixed) : mixed;
        else
            head_outputs.push_back(apply_activation(layer.activation, mixed));
    }
    Tensor out;
    if (layer.average_heads)
        out = apply_activation(layer.activation,
                               scalar_mul(avg_acc, 1.0 / static_cast<double>(layer.heads())));
    else
        out = layer.heads() == 1 ? head_outputs.front() : concat(head_outputs, 1);
    return apply_dropout(out, layer.dropout, training, dropout_rng);
}

std::vector<Tensor> gat_attention(const GatLayer& layer, const Tensor& h) {
    std::vector<Tensor> out;
    for (int k = 0; k < layer.heads(); ++k) {
        const Tensor wh = matmul(h, layer.head_weight[static_cast<std::size_t>(k)]);
        out.push_back(head_attention(layer, wh, k));
    }
    return out;
}

std::vector<std::uint8_t> union_neighborhood_mask(const AdjacencySet& adj) {
    const int s = adj.stations;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(s) * static_cast<std::size_t>(s), 0);
    for (const auto& a : adj.raw)
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] != 0.0) mask[i] = 1;
    for (int i = 0; i < s; ++i)
        mask[static_cast<std::size_t>(i) * static_cast<std::size_t>(s) +
             static_cast<std::size_t>(i)] = 1;
    return mask;
}

std::vector<std::uint8_t> percentile_distance_mask(const StationTable& table,
                                                   double percentile) {
    require(percentile > 0.0 && percentile <= 100.0, "DomainError",
            "percentile must lie in (0, 100]");
    const int s = table.count();
    std::vector<double> dists;
    for (int i = 0; i < s; ++i)
        for (int j = i + 1; j < s; ++j) {
            const double dx = table.station(i).x - table.station(j).x;
            const double dy = table.station(i).y - table.station(j).y;
            dists.push_back(std::sqrt(dx * dx + dy * dy));
        }
    std::sort(dists.begin(), dists.end());
    const std::size_t cut = std::min(
        dists.size() - 1,
        static_cast<std::size_t>(percentile / 100.0 * static_cast<double>(dists.size())));
    const double threshold = dists.empty() ? 0.0 : dists[cut];
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(s) * static_cast<std::size_t>(s), 0);
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
            if (i == j) {
                mask[static_cast<std::size_t>(i) * static_cast<std::size_t>(s) +
                     static_cast<std::size_t>(j)] = 1;
                continue;
            }
            const double dx = table.station(i).x - table.station(j).x;
            const double dy = table.station(i).y - table.station(j).y;
            if (std::sqrt(dx * dx + dy * dy) <= threshold)
                mask[static_cast<std::size_t>(i) * static_cast<std::size_t>(s) +
                     static_cast<std::size_t>(j)] = 1;
        }
    return mask;
}

}  // namespace probgnn
