#pragma once

#include <string>
#include <vector>

#include "probgnn/model.hpp"

namespace probgnn {

struct TrainSpec {
    double learning_rate = 1e-3;
    int max_epochs = 60;
    int patience = 8;          // epochs without validation improvement
    double weight_decay = 0.0; // decoupled; grid trials copy the config's value here
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainReport {
    std::vector<double> train_nll;  // per-observation, one entry per epoch
    std::vector<double> val_nll;
    int best_epoch = -1;  // 0-based index into the curves
    double best_val_nll = 0.0;
    double wall_seconds = 0.0;
    std::uint64_t param_checksum = 0;
};

/// Adam with decoupled weight decay (beta1 0.9, beta2 0.999, eps 1e-8).
class AdamW {
public:
    AdamW(std::vector<Tensor> params, double learning_rate, double weight_decay);
    void zero_grad();
    void step();

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double lr_;
    double wd_;
    long steps_ = 0;
};

/// FNV-1a over the raw bits of every parameter, in registration order.
std::uint64_t params_checksum(const std::vector<Tensor>& params);

/// Minimizes the NLL over the train window (full-graph batches, one time step
/// per update), early-stops on validation NLL and restores the best epoch's
/// parameters. Deterministic given spec.seed.
TrainReport train(ProbGnn& model, const Dataset& data, const TrainSpec& spec);

/// Eval-mode per-observation NLL over a window.
double window_nll(ProbGnn& model, const Dataset& data, const Window& window);

struct TrialResult {
    ModelConfig config;
    bool ok = false;
    std::string error;
    TrainReport report;
};

/// Trains every config independently (optionally on `jobs` threads; results
/// are independent of the thread count) and ranks by best validation NLL.
/// Per-trial failures land in the result list without aborting the rest.
std::vector<TrialResult> grid_search(const std::vector<ModelConfig>& grid, const Dataset& data,
                                     const TrainSpec& spec, int jobs = 1);

/// The default hyperparameter grid, overridable from the CLI.
std::vector<ModelConfig> default_grid(const ModelConfig& base);

struct EnsembleResult {
    DistParams gens;                      // combined params on the evaluation window
    std::vector<double> targets;          // evaluation-window observations
    std::vector<int> steps;
    std::vector<GaussMember> members;     // selected members' window params
    std::vector<int> selected_runs;       // indices into member_reports
    std::vector<TrainReport> member_reports;
    std::vector<std::uint64_t> member_seeds;
};

/// Trains `runs` HetG models from distinct derived seeds, keeps the top K by
/// validation NLL and moment-matches them on the evaluation window.
EnsembleResult train_ensemble(const ModelConfig& config, int k, int runs, const Dataset& data,
                              const TrainSpec& spec, const Window& eval_window, int jobs = 1);

}  // namespace probgnn
