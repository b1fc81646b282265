#pragma once

#include <string>
#include <vector>

namespace probgnn {

/// Observed demand on S spatial units over T time steps, row-major [t*S + s].
/// Values are raw counts; heads model them unnormalized.
struct DemandPanel {
    int periods_per_day = 24;
    int stations = 0;
    std::vector<std::string> station_ids;
    std::vector<int> timestamps;  // period index per step, length T
    std::vector<double> demand;   // T x S

    int steps() const { return static_cast<int>(timestamps.size()); }
    double at(int t, int s) const {
        return demand[static_cast<std::size_t>(t) * static_cast<std::size_t>(stations) +
                      static_cast<std::size_t>(s)];
    }
    int time_of_day(int t) const {
        int m = timestamps[static_cast<std::size_t>(t)] % periods_per_day;
        return m < 0 ? m + periods_per_day : m;
    }
    int week_steps() const { return 7 * periods_per_day; }
};

/// Per-step explanatory features, row-major [t*S*d + s*d + c], plus the two
/// global weather deviation columns [t*2 + {0,1}].
struct FeaturePanel {
    int stations = 0;
    int channels = 0;
    std::vector<double> features;  // T x S x d
    std::vector<double> weather;   // T x 2  (precip_dev, temp_dev)

    std::size_t index(int t, int s, int c) const {
        return (static_cast<std::size_t>(t) * static_cast<std::size_t>(stations) +
                static_cast<std::size_t>(s)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    double at(int t, int s, int c) const { return features[index(t, s, c)]; }
    double precip(int t) const { return weather[static_cast<std::size_t>(t) * 2]; }
    double temp(int t) const { return weather[static_cast<std::size_t>(t) * 2 + 1]; }
};

/// Half-open step range [begin, end).
struct Window {
    std::string name;
    int begin = 0;
    int end = 0;
    int length() const { return end - begin; }
};

/// Temporal split. Windows are disjoint and ordered train < validation <=
/// tests; the first week of the panel is reserved as residual history and
/// never appears in any window.
struct SplitPanels {
    Window train;
    Window validation;
    Window test;
    std::vector<Window> extra_tests;
    int history = 0;  // steps consumed before train.begin
};

}  // namespace probgnn
