#pragma once

#include <vector>

#include "probgnn/rng.hpp"
#include "probgnn/tensor.hpp"

namespace probgnn {

/// Stacked LSTM over the lookback window. Gate weights are packed per layer
/// as [input, forget, cell, output] blocks of one (in x 4H) input map, one
/// (H x 4H) recurrent map and one (1 x 4H) bias; the forget-gate bias block
/// is initialized to +1.
struct LstmStack {
    int layers = 1;
    int input_size = 1;
    int hidden_size = 1;
    std::vector<Tensor> w_input;   // per layer, (in or H) x 4H
    std::vector<Tensor> w_hidden;  // per layer, H x 4H
    std::vector<Tensor> bias;      // per layer, 1 x 4H

    static LstmStack init(int layers, int input_size, int hidden_size, RngStream& rng);
    std::vector<Tensor> params() const;
};

/// Runs the recurrence over a lookback x S x d sequence (each step is
/// flattened to one 1 x (S*d) input row) and returns the last step's
/// top-layer hidden state, shape 1 x H.
Tensor lstm_forward(const LstmStack& stack, const Tensor& sequence);

/// Two linear projections of the final hidden state: the recent-component
/// parameter pair per station and the history weights per station per
/// parameter slot. Column 0 carries the location slot, column 1 the raw
/// scale slot.
struct Decoder {
    int stations = 1;
    Tensor w_recent;   // H x 2S
    Tensor b_recent;   // 1 x 2S
    Tensor w_history;  // H x 2S
    Tensor b_history;  // 1 x 2S

    /// history_mu_bias seeds the history weight for the location slot so the
    /// model starts from a last-week baseline.
    static Decoder init(int hidden_size, int stations, double history_mu_bias,
                        RngStream& rng);
    std::vector<Tensor> params() const { return {w_recent, b_recent, w_history, b_history}; }
};

struct DecodeOutput {
    Tensor recent;           // S x 2
    Tensor history_weights;  // S x 2
};

DecodeOutput decode(const Decoder& dec, const Tensor& h_last);

}  // namespace probgnn
