#pragma once

#include <cstdint>
#include <vector>

#include "probgnn/graph.hpp"
#include "probgnn/rng.hpp"
#include "probgnn/tensor.hpp"

namespace probgnn {

enum class Activation { ReLU, Tanh, Sigmoid, Identity };
const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);
Tensor apply_activation(Activation a, const Tensor& x);

/// Inverted dropout: scales survivors by 1/(1-rate) at train time so eval
/// passes need no rescale. Draws one mask value per element from `rng`.
Tensor apply_dropout(const Tensor& x, double rate, bool training, RngStream& rng);

/// Multi-graph graph-convolution layer: one weight matrix per adjacency
/// matrix, h' = act( sum_r norm_r . h . W_r ).
struct GcnLayer {
    std::vector<Tensor> weights;  // per adjacency kind, d_in x d_out
    Activation activation = Activation::ReLU;
    double dropout = 0.0;

    static GcnLayer init(int graph_count, int d_in, int d_out, Activation act, double dropout,
                         RngStream& rng);
    std::vector<Tensor> params() const { return weights; }
    int d_in() const { return weights.front().dim(0); }
    int d_out() const { return weights.front().dim(1); }
};

Tensor gcn_forward(const GcnLayer& layer, const Tensor& h, const AdjacencySet& adj,
                   bool training, RngStream& dropout_rng);

/// Multi-head attention layer with a fixed neighborhood mask. Scores use the
/// additive form leaky_relu(a_src . W h_i + a_dst . W h_j); hidden layers
/// concatenate head outputs, the final layer averages them.
struct GatLayer {
    std::vector<Tensor> head_weight;  // per head, d_in x d_out
    std::vector<Tensor> attn_src;     // per head, d_out x 1
    std::vector<Tensor> attn_dst;     // per head, d_out x 1
    std::vector<std::uint8_t> mask;   // S x S, diagonal true
    int stations = 0;
    bool average_heads = false;
    Activation activation = Activation::ReLU;
    double dropout = 0.0;
    double leaky_slope = 0.2;

    static GatLayer init(int heads, int stations, int d_in, int d_out,
                         std::vector<std::uint8_t> mask, bool average_heads, Activation act,
                         double dropout, RngStream& rng);
    std::vector<Tensor> params() const;
    int d_in() const { return head_weight.front().dim(0); }
    int d_out() const { return head_weight.front().dim(1); }
    int heads() const { return static_cast<int>(head_weight.size()); }
};

Tensor gat_forward(const GatLayer& layer, const Tensor& h, bool training,
                   RngStream& dropout_rng);

/// Attention coefficients per head (row-stochastic S x S), eval mode.
std::vector<Tensor> gat_attention(const GatLayer& layer, const Tensor& h);

/// j in N(i) iff any adjacency matrix has a nonzero (i, j) entry, plus self.
std::vector<std::uint8_t> union_neighborhood_mask(const AdjacencySet& adj);

/// Optional alternative: connect pairs whose Euclidean distance falls below
/// the given percentile (0..100) of all pairwise distances, plus self.
std::vector<std::uint8_t> percentile_distance_mask(const StationTable& table,
                                                   double percentile);

}  // namespace probgnn
