#pragma once

#include <string>
#include <vector>

#include "probgnn/distributions.hpp"
#include "probgnn/graph.hpp"
#include "probgnn/panel.hpp"

namespace probgnn {

/// Seeded synthetic world standing in for proprietary demand feeds. The mean
/// surface is a daily sinusoid times a weekly factor times a station base,
/// spatially smoothed; noise follows the chosen family with the affine
/// heteroskedasticity law sigma = a + b * mu.
struct SyntheticSpec {
    int stations = 20;
    int steps = 3000;
    int periods_per_day = 24;
    std::uint64_t seed = 7;

    double base_lo = 4.0;
    double base_hi = 16.0;
    double daily_amplitude = 0.6;    // in [0, 1)
    double weekly_amplitude = 0.2;   // in [0, 1)
    double kernel_strength = 0.4;    // blend toward the kernel-weighted neighborhood mean
    double kernel_length_m = 300.0;  // Gaussian kernel bandwidth

    std::string noise = "gaussian";  // gaussian | truncated_gaussian | laplace | poisson
    double sigma_a = 0.5;
    double sigma_b = 0.3;
    bool integer_targets = false;  // round + clamp at generation time

    int functional_dims = 4;
    double weather_precip_effect = 0.0;  // additive effect of P_T on mu
    double weather_temp_effect = 0.0;    // additive effect of T_E on mu

    std::vector<double> shift_multipliers;  // extra windows with scaled demand
    int shift_window_steps = 0;

    void validate() const;
};

struct SyntheticData {
    DemandPanel demand;
    FeaturePanel features;  // unnormalized
    StationTable stations;
    DistParams truth;              // ground-truth law per cell of the full panel
    std::vector<Window> windows;   // "main" plus one window per shift multiplier
};

SyntheticData generate(const SyntheticSpec& spec);

/// Trained-split feature statistics; z-scoring uses these exclusively so
/// shifted evaluation windows keep their shift.
struct FeatureStats {
    std::vector<double> mean;  // S x d
    std::vector<double> stdev;
    double weather_mean[2] = {0.0, 0.0};
    double weather_stdev[2] = {1.0, 1.0};
};

FeatureStats compute_stats(const FeaturePanel& features, const Window& train);
FeaturePanel normalize(const FeaturePanel& features, const FeatureStats& stats);

/// Sequential split after the reserved residual-history week.
SplitPanels make_splits(const DemandPanel& panel, int train_steps, int validation_steps,
                        int test_steps);
/// Explicit named windows (absolute [begin, end) ranges): first three are
/// train / validation / test, the rest become extra test windows.
SplitPanels make_splits(const DemandPanel& panel, const std::vector<Window>& windows);

/// Everything a training or evaluation run needs, normalized and split.
struct Dataset {
    DemandPanel demand;
    FeaturePanel features;  // normalized
    StationTable stations;
    AdjacencySet adjacency;
    SplitPanels splits;
    FeatureStats stats;
};

Dataset assemble_dataset(DemandPanel demand, const FeaturePanel& raw_features,
                         StationTable stations, SplitPanels splits,
                         const std::vector<AdjKind>& kinds = {AdjKind::Con, AdjKind::Net,
                                                              AdjKind::Euc, AdjKind::Func});

// ---------------------------------------------------------------------------
// CSV interchange (schemas documented in docs/file-formats.md)
// ---------------------------------------------------------------------------

struct PanelBundle {
    DemandPanel demand;
    FeaturePanel features;
    StationTable stations;
    std::vector<Window> windows;
};

void export_csv(const std::string& dir, const DemandPanel& demand,
                const FeaturePanel& features, const StationTable& stations,
                const std::vector<Window>& windows);
PanelBundle ingest_csv(const std::string& demand_path, const std::string& features_path,
                       const std::string& stations_path);
/// Directory convention: demand.csv, features.csv, weather.csv, stations.csv,
/// edges.csv, meta.json under one root.
PanelBundle ingest_dir(const std::string& dir);

void export_dist_params(const std::string& path, const DistParams& params,
                        const std::vector<std::string>& station_ids, const Window& window);

void export_truth(const std::string& path, const DistParams& truth);
DistParams ingest_truth(const std::string& path);

}  // namespace probgnn
