#include "probgnn/temporal.hpp"

#include <cmath>

#include "probgnn/errors.hpp"

namespace probgnn {

LstmStack LstmStack::init(int layers, int input_size, int hidden_size, RngStream& rng) {
    require(layers >= 1 && input_size >= 1 && hidden_size >= 1, "ShapeMismatch",
            "LstmStack::init with nonpositive sizes");
    LstmStack stack;
    stack.layers = layers;
    stack.input_size = input_size;
    stack.hidden_size = hidden_size;
    for (int l = 0; l < layers; ++l) {
        const int in = l == 0 ? input_size : hidden_size;
        const double ib = 1.0 / std::sqrt(static_cast<double>(in));
        const double hb = 1.0 / std::sqrt(static_cast<double>(hidden_size));
        stack.w_input.push_back(Tensor::uniform({in, 4 * hidden_size}, -ib, ib, rng, true));
        stack.w_hidden.push_back(
            Tensor::uniform({hidden_size, 4 * hidden_size}, -hb, hb, rng, true));
        std::vector<double> b(static_cast<std::size_t>(4 * hidden_size), 0.0);
        for (int j = hidden_size; j < 2 * hidden_size; ++j)
            b[static_cast<std::size_t>(j)] = 1.0;  // forget gate starts open
        stack.bias.push_back(Tensor({1, 4 * hidden_size}, std::move(b), true));
    }
    return stack;
}

std::vector<Tensor> LstmStack::params() const {
    std::vector<Tensor> out;
    for (int l = 0; l < layers; ++l) {
        out.push_back(w_input[static_cast<std::size_t>(l)]);
        out.push_back(w_hidden[static_cast<std::size_t>(l)]);
        out.push_back(bias[static_cast<std::size_t>(l)]);
    }
    return out;
}

Tensor lstm_forward(const LstmStack& stack, const Tensor& sequence) {
    require(sequence.rank() == 3, "ShapeMismatch",
            "lstm_forward expects a lookback x S x d sequence, got " +
                shape_str(sequence.shape()));
    const int lookback = sequence.dim(0);
    require(lookback >= 1, "ShapeMismatch", "lookback must be at least 1");
    const int flat = sequence.dim(1) * sequence.dim(2);
    require(flat == stack.input_size, "ShapeMismatch",
            "sequence step size " + std::to_string(flat) + " does not match LSTM input size " +
                std::to_string(stack.input_size));
    const int h = stack.hidden_size;

    std::vector<Tensor> hidden(static_cast<std::size_t>(stack.layers));
    std::vector<Tensor> cell(static_cast<std::size_t>(stack.layers));
    for (int l = 0; l < stack.layers; ++l) {
        hidden[static_cast<std::size_t>(l)] = Tensor::zeros({1, h});
        cell[static_cast<std::size_t>(l)] = Tensor::zeros({1, h});
    }

    for (int t = 0; t < lookback; ++t) {
        Tensor x = reshape(slice(sequence, 0, t, 1), {1, flat});
        for (int l = 0; l < stack.layers; ++l) {
            const std::size_t li = static_cast<std::size_t>(l);
            const Tensor gates = add(add(matmul(x, stack.w_input[li]),
                                         matmul(hidden[li], stack.w_hidden[li])),
                                     stack.bias[li]);
            const Tensor ig = sigmoid(slice(gates, 1, 0, h));
            const Tensor fg = sigmoid(slice(gates, 1, h, h));
            const Tensor gg = tanh_op(slice(gates, 1, 2 * h, h));
            const Tensor og = sigmoid(slice(gates, 1, 3 * h, h));
            cell[li] = add(mul_elementwise(fg, cell[li]), mul_elementwise(ig, gg));
            hidden[li] = mul_elementwise(og, tanh_op(cell[li]));
            x = hidden[li];
        }
    }
    return hidden[static_cast<std::size_t>(stack.layers - 1)];
}

Decoder Decoder::init(int hidden_size, int stations, double history_mu_bias, RngStream& rng) {
    require(hidden_size >= 1 && stations >= 1, "ShapeMismatch",
            "Decoder::init with nonpositive sizes");
    Decoder dec;
    dec.stations = stations;
    const double b = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    dec.w_recent = Tensor::uniform({hidden_size, 2 * stations}, -b, b, rng, true);
    dec.w_history = Tensor::uniform({hidden_size, 2 * stations}, -b, b, rng, true);
    dec.b_recent = Tensor::zeros({1, 2 * stations}, true);
    std::vector<double> bh(static_cast<std::size_t>(2 * stations), 0.0);
    for (int s = 0; s < stations; ++s) bh[static_cast<std::size_t>(2 * s)] = history_mu_bias;
    dec.b_history = Tensor({1, 2 * stations}, std::move(bh), true);
    return dec;
}

DecodeOutput decode(const Decoder& dec, const Tensor& h_last) {
    require(h_last.rank() == 2 && h_last.dim(0) == 1 && h_last.dim(1) == dec.w_recent.dim(0),
            "ShapeMismatch", "decode: hidden state is " + shape_str(h_last.shape()));
    DecodeOutput out;
    out.recent = reshape(add(matmul(h_last, dec.w_recent), dec.b_recent), {dec.stations, 2});
    out.history_weights =
        reshape(add(matmul(h_last, dec.w_history), dec.b_history), {dec.stations, 2});
    return out;
}

}  // namespace probgnn
