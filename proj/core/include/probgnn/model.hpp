#pragma once

#include <string>
#include <utility>
#include <vector>

#include "probgnn/data.hpp"
#include "probgnn/distributions.hpp"
#include "probgnn/graph.hpp"
#include "probgnn/spatial.hpp"
#include "probgnn/temporal.hpp"

namespace probgnn {

enum class SpatialKind { GCN, GAT };
const char* spatial_kind_name(SpatialKind k);
SpatialKind spatial_kind_from_name(const std::string& name);

struct ModelConfig {
    SpatialKind spatial = SpatialKind::GCN;
    Family head = Family::HetG;
    int lookback = 4;
    int spatial_layers = 1;
    int hidden_width = 32;
    int lstm_layers = 1;
    int attention_heads = 4;
    double dropout = 0.2;
    double weight_decay = 1e-4;
    double homog_c = 1.0;              // from the c search; HomoG only
    double gat_mask_percentile = 0.0;  // <= 0 selects the union neighborhood mask
    Activation activation = Activation::ReLU;
    TgPointRule tg_point = TgPointRule::TruncatedMean;
    std::uint64_t seed = 0;

    void validate() const;
    std::string label() const;  // e.g. "HetG-GCN"
};

/// One time step's model inputs. `recent` holds the lookback window of
/// normalized station features, oldest first.
struct Batch {
    std::vector<Tensor> recent;    // lookback entries, each S x d
    std::vector<double> last_week; // demand a week before the target step
    double precip = 0.0;
    double temp = 0.0;
    int time_of_day = 0;
};

/// The assembled network: spatial encoder -> LSTM -> decoder for the recent
/// component and history weights, plus per-time-of-day weather weights. The
/// three component outputs are summed in raw space and pushed through the
/// head link once.
struct ProbGnn {
    ModelConfig config;
    AdjacencySet adj;
    int feature_channels = 0;
    int periods_per_day = 0;
    std::vector<GcnLayer> gcn;
    std::vector<GatLayer> gat;
    LstmStack lstm;
    Decoder decoder;
    std::vector<Tensor> weather_precip;  // per time of day, S x 2
    std::vector<Tensor> weather_temp;

    static ProbGnn init(const ModelConfig& config, const AdjacencySet& adj,
                        int feature_channels, int periods_per_day,
                        const StationTable* table = nullptr);

    int stations() const { return adj.stations; }
    const std::vector<Tensor>& parameters() const { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& named_parameters() const {
        return named_params_;
    }

    HeadOutput forward(const Batch& batch, bool training, RngStream& dropout_rng);

private:
    std::vector<Tensor> params_;
    std::vector<std::pair<std::string, Tensor>> named_params_;
    void register_params();
};

struct McDropoutResult {
    std::vector<double> mean;      // per station
    std::vector<double> variance;  // population variance over passes
};

/// Monte Carlo dropout: `passes` stochastic forward passes with dropout kept
/// on, summarized per station. Deterministic given `seed`.
McDropoutResult mc_dropout_predict(ProbGnn& model, const Batch& batch, int passes,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset plumbing
// ---------------------------------------------------------------------------

/// Earliest step usable as a target: one residual-history week plus lookback.
int first_valid_target(const Dataset& data, const ModelConfig& config);
/// Target steps of a window that have full history, in order.
std::vector<int> window_targets(const Dataset& data, const ModelConfig& config,
                                const Window& window);
Batch make_batch(const Dataset& data, const ModelConfig& config, int target_step);

struct WindowPrediction {
    DistParams params;
    std::vector<double> targets;
    std::vector<int> steps;
};

/// Eval-mode forward over every valid target of the window.
WindowPrediction predict_window(ProbGnn& model, const Dataset& data, const Window& window);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Self-describing JSON checkpoint: format tag, config echo, adjacency,
/// parameter tensors with shapes, and train-split normalization statistics.
void save_checkpoint(const std::string& path, const ProbGnn& model, const FeatureStats& stats,
                     const std::vector<std::string>& station_ids);

struct LoadedCheckpoint {
    ProbGnn model;
    FeatureStats stats;
    std::vector<std::string> station_ids;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace probgnn
