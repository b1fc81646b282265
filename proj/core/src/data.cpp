#include "probgnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "probgnn/csv.hpp"
#include "probgnn/errors.hpp"
#include "probgnn/mathfn.hpp"

namespace probgnn {

namespace fs = std::filesystem;
using nlohmann::json;

void SyntheticSpec::validate() const {
    require(stations >= 2, "InvalidSpec", "need at least 2 stations");
    require(steps >= 1, "InvalidSpec", "need at least 1 step");
    require(periods_per_day >= 1, "InvalidSpec", "periods_per_day must be positive");
    require(base_lo > 0.0 && base_hi >= base_lo, "InvalidSpec", "invalid base demand range");
    require(daily_amplitude >= 0.0 && daily_amplitude < 1.0, "InvalidSpec",
            "daily amplitude must lie in [0, 1)");
    require(weekly_amplitude >= 0.0 && weekly_amplitude < 1.0, "InvalidSpec",
            "weekly amplitude must lie in [0, 1)");
    require(kernel_strength >= 0.0 && kernel_strength <= 1.0, "InvalidSpec",
            "kernel strength must lie in [0, 1]");
    require(kernel_length_m > 0.0, "InvalidSpec", "kernel length must be positive");
    require(sigma_a > 0.0 && sigma_b >= 0.0, "InvalidSpec",
            "heteroskedasticity law requires a > 0, b >= 0");
    require(noise == "gaussian" || noise == "truncated_gaussian" || noise == "laplace" ||
                noise == "poisson",
            "InvalidSpec", "unknown noise family '" + noise + "'");
    require(functional_dims >= 1, "InvalidSpec", "need at least one functional dimension");
    if (!shift_multipliers.empty())
        require(shift_window_steps >= 1, "InvalidSpec",
                "shift windows require shift_window_steps >= 1");
    for (double m : shift_multipliers)
        require(m > 0.0, "InvalidSpec", "shift multipliers must be positive");
}

namespace {

double sample_laplace(double mu, double b, double u) {
    const double d = u - 0.5;
    const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    return mu - b * sgn * std::log(1.0 - 2.0 * std::abs(d));
}

double sample_truncated_gaussian(double mu, double sigma, double u) {
    const double lower_mass = norm_cdf(-mu / sigma);
    return std::max(0.0, mu + sigma * norm_quantile(lower_mass + u * (1.0 - lower_mass)));
}

double sample_poisson(double lambda, double u) {
    double logsum = -std::numeric_limits<double>::infinity();
    const double cap = lambda + 40.0 * std::sqrt(lambda) + 1000.0;
    for (double k = 0.0; k <= cap; k += 1.0) {
        logsum = logaddexp(logsum, k * std::log(lambda) - lambda - std::lgamma(k + 1.0));
        if (std::exp(logsum) >= u) return k;
    }
    return cap;
}

}  // namespace

SyntheticData generate(const SyntheticSpec& spec) {
    spec.validate();
    RngStream root(spec.seed);
    SyntheticData out;

    // --- stations, network, functional vectors
    RngStream srng = root.derive("stations");
    const int s_count = spec.stations;
    std::vector<double> xs, ys;
    for (int i = 0; i < s_count; ++i) {
        double x = 0.0, y = 0.0;
        bool ok = false;
        while (!ok) {
            x = srng.uniform(0.0, 1000.0);
            y = srng.uniform(0.0, 1000.0);
            ok = true;
            for (std::size_t j = 0; j < xs.size(); ++j) {
                const double dx = xs[j] - x, dy = ys[j] - y;
                if (dx * dx + dy * dy < 25.0 * 25.0) { ok = false; break; }
            }
        }
        xs.push_back(x);
        ys.push_back(y);
        std::vector<double> func(static_cast<std::size_t>(spec.functional_dims));
        for (double& f : func) f = srng.uniform(0.0, 100.0);
        out.stations.add_station("st" + std::to_string(i), x, y, std::move(func));
    }
    // connect each station to its two nearest neighbors
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < s_count; ++i) {
        std::vector<std::pair<double, int>> near;
        for (int j = 0; j < s_count; ++j) {
            if (i == j) continue;
            const double dx = xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(j)];
            const double dy = ys[static_cast<std::size_t>(i)] - ys[static_cast<std::size_t>(j)];
            near.emplace_back(std::sqrt(dx * dx + dy * dy), j);
        }
        std::sort(near.begin(), near.end());
        for (int k = 0; k < std::min<int>(2, static_cast<int>(near.size())); ++k) {
            const int j = near[static_cast<std::size_t>(k)].second;
            const auto e = std::minmax(i, j);
            if (std::find(edges.begin(), edges.end(), std::make_pair(e.first, e.second)) ==
                edges.end()) {
                edges.emplace_back(e.first, e.second);
                out.stations.add_edge("st" + std::to_string(e.first),
                                      "st" + std::to_string(e.second),
                                      near[static_cast<std::size_t>(k)].first * 1.25);
            }
        }
    }

    // --- smoothing kernel, row-normalized Gaussian of pairwise distance
    std::vector<double> kernel(static_cast<std::size_t>(s_count) *
                               static_cast<std::size_t>(s_count));
    for (int i = 0; i < s_count; ++i) {
        double rowsum = 0.0;
        for (int j = 0; j < s_count; ++j) {
            if (i == j) continue;
            const double dx = xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(j)];
            const double dy = ys[static_cast<std::size_t>(i)] - ys[static_cast<std::size_t>(j)];
            const double w = std::exp(-(dx * dx + dy * dy) /
                                      (spec.kernel_length_m * spec.kernel_length_m));
            kernel[static_cast<std::size_t>(i * s_count + j)] = w;
            rowsum += w;
        }
        if (rowsum > 0.0)
            for (int j = 0; j < s_count; ++j)
                kernel[static_cast<std::size_t>(i * s_count + j)] /= rowsum;
    }

    RngStream brng = root.derive("bases");
    std::vector<double> base(static_cast<std::size_t>(s_count));
    std::vector<double> phase(static_cast<std::size_t>(s_count));
    for (int i = 0; i < s_count; ++i) {
        base[static_cast<std::size_t>(i)] = brng.uniform(spec.base_lo, spec.base_hi);
        phase[static_cast<std::size_t>(i)] = brng.uniform(-0.3, 0.3);
    }

    // --- timeline with optional shift windows appended after the main panel
    const int shift_count = static_cast<int>(spec.shift_multipliers.size());
    const int total_steps = spec.steps + shift_count * spec.shift_window_steps;
    out.windows.push_back(Window{"main", 0, spec.steps});
    for (int w = 0; w < shift_count; ++w)
        out.windows.push_back(
            Window{"shift_x" + format_double(spec.shift_multipliers[static_cast<std::size_t>(w)]),
                   spec.steps + w * spec.shift_window_steps,
                   spec.steps + (w + 1) * spec.shift_window_steps});

    // --- daily AR(1) weather deviations
    RngStream wrng = root.derive("weather");
    const int days = (total_steps + spec.periods_per_day - 1) / spec.periods_per_day;
    std::vector<double> precip(static_cast<std::size_t>(days)),
        temp(static_cast<std::size_t>(days));
    double p = 0.0, t = 0.0;
    for (int d = 0; d < days; ++d) {
        p = 0.8 * p + 0.6 * wrng.normal();
        t = 0.8 * t + 0.6 * wrng.normal();
        precip[static_cast<std::size_t>(d)] = p;
        temp[static_cast<std::size_t>(d)] = t;
    }

    // --- mean surface, noise, truth
    DemandPanel& panel = out.demand;
    panel.periods_per_day = spec.periods_per_day;
    panel.stations = s_count;
    for (int i = 0; i < s_count; ++i) panel.station_ids.push_back("st" + std::to_string(i));
    panel.timestamps.resize(static_cast<std::size_t>(total_steps));
    panel.demand.resize(static_cast<std::size_t>(total_steps) * static_cast<std::size_t>(s_count));

    const Family truth_family = spec.noise == "gaussian"          ? Family::HetG
                                : spec.noise == "truncated_gaussian" ? Family::TG
                                : spec.noise == "laplace"            ? Family::Lap
                                                                     : Family::Pois;
    out.truth.family = truth_family;
    out.truth.loc.resize(panel.demand.size());
    if (truth_family != Family::Pois) out.truth.scale.resize(panel.demand.size());

    RngStream nrng = root.derive("noise");
    std::vector<double> mu_row(static_cast<std::size_t>(s_count));
    std::vector<double> mu_smooth(static_cast<std::size_t>(s_count));
    for (int step = 0; step < total_steps; ++step) {
        panel.timestamps[static_cast<std::size_t>(step)] = step;
        const int tod = step % spec.periods_per_day;
        const int dow = (step / spec.periods_per_day) % 7;
        const int day = step / spec.periods_per_day;
        double mult = 1.0;
        for (int w = 0; w < shift_count; ++w)
            if (step >= out.windows[static_cast<std::size_t>(w + 1)].begin &&
                step < out.windows[static_cast<std::size_t>(w + 1)].end)
                mult = spec.shift_multipliers[static_cast<std::size_t>(w)];

        for (int i = 0; i < s_count; ++i) {
            const double daily =
                1.0 + spec.daily_amplitude *
                          std::sin(2.0 * kPi * tod / spec.periods_per_day +
                                   phase[static_cast<std::size_t>(i)]);
            const double weekly = 1.0 + spec.weekly_amplitude * std::cos(2.0 * kPi * dow / 7.0);
            mu_row[static_cast<std::size_t>(i)] = base[static_cast<std::size_t>(i)] * daily * weekly;
        }
        for (int i = 0; i < s_count; ++i) {
            double nbr = 0.0;
            for (int j = 0; j < s_count; ++j)
                nbr += kernel[static_cast<std::size_t>(i * s_count + j)] *
                       mu_row[static_cast<std::size_t>(j)];
            double m = (1.0 - spec.kernel_strength) * mu_row[static_cast<std::size_t>(i)] +
                       spec.kernel_strength * nbr;
            m += spec.weather_precip_effect * precip[static_cast<std::size_t>(day)] +
                 spec.weather_temp_effect * temp[static_cast<std::size_t>(day)];
            mu_smooth[static_cast<std::size_t>(i)] = std::max(0.0, mult * m);
        }

        for (int i = 0; i < s_count; ++i) {
            const double mu = mu_smooth[static_cast<std::size_t>(i)];
            const double sigma = spec.sigma_a + spec.sigma_b * mu;
            const std::size_t cell =
                static_cast<std::size_t>(step) * static_cast<std::size_t>(s_count) +
                static_cast<std::size_t>(i);
            double y = 0.0;
            if (spec.noise == "gaussian") {
                y = std::max(0.0, mu + sigma * nrng.normal());
                out.truth.loc[cell] = mu;
                out.truth.scale[cell] = sigma;
            } else if (spec.noise == "truncated_gaussian") {
                y = sample_truncated_gaussian(mu, sigma, nrng.uniform());
                out.truth.loc[cell] = mu;
                out.truth.scale[cell] = sigma;
            } else if (spec.noise == "laplace") {
                const double b = sigma / std::sqrt(2.0);
                y = std::max(0.0, sample_laplace(mu, b, nrng.uniform()));
                out.truth.loc[cell] = mu;
                out.truth.scale[cell] = b;
            } else {
                const double lambda = std::max(mu, 1e-6);
                y = sample_poisson(lambda, nrng.uniform());
                out.truth.loc[cell] = lambda;
            }
            if (spec.integer_targets) y = std::max(0.0, std::round(y));
            panel.demand[cell] = y;
        }
    }

    // --- features: [0] residual vs last week, [1] other-mode demand proxy
    FeaturePanel& feat = out.features;
    feat.stations = s_count;
    feat.channels = 2;
    feat.features.assign(panel.demand.size() * 2, 0.0);
    feat.weather.resize(static_cast<std::size_t>(total_steps) * 2);
    RngStream orng = root.derive("other_mode");
    const int week = panel.week_steps();
    for (int step = 0; step < total_steps; ++step) {
        feat.weather[static_cast<std::size_t>(step) * 2] =
            precip[static_cast<std::size_t>(step / spec.periods_per_day)];
        feat.weather[static_cast<std::size_t>(step) * 2 + 1] =
            temp[static_cast<std::size_t>(step / spec.periods_per_day)];
        for (int i = 0; i < s_count; ++i) {
            const double cur = panel.at(step, i);
            const double residual = step >= week ? cur - panel.at(step - week, i) : 0.0;
            feat.features[feat.index(step, i, 0)] = residual;
            feat.features[feat.index(step, i, 1)] = 0.7 * cur + 0.5 * orng.normal();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stats and normalization
// ---------------------------------------------------------------------------

FeatureStats compute_stats(const FeaturePanel& features, const Window& train) {
    require(train.length() > 0, "EmptySplit", "cannot compute stats on an empty train window");
    const int s = features.stations, d = features.channels;
    FeatureStats stats;
    stats.mean.assign(static_cast<std::size_t>(s) * static_cast<std::size_t>(d), 0.0);
    stats.stdev.assign(static_cast<std::size_t>(s) * static_cast<std::size_t>(d), 0.0);
    const double n = static_cast<double>(train.length());
    for (int t = train.begin; t < train.end; ++t)
        for (int i = 0; i < s; ++i)
            for (int c = 0; c < d; ++c)
                stats.mean[static_cast<std::size_t>(i * d + c)] += features.at(t, i, c);
    for (double& m : stats.mean) m /= n;
    for (int t = train.begin; t < train.end; ++t)
        for (int i = 0; i < s; ++i)
            for (int c = 0; c < d; ++c) {
                const double dev =
                    features.at(t, i, c) - stats.mean[static_cast<std::size_t>(i * d + c)];
                stats.stdev[static_cast<std::size_t>(i * d + c)] += dev * dev;
            }
    for (double& v : stats.stdev) v = std::max(std::sqrt(v / n), 1e-6);

    for (int c = 0; c < 2; ++c) {
        double m = 0.0;
        for (int t = train.begin; t < train.end; ++t)
            m += features.weather[static_cast<std::size_t>(t) * 2 + static_cast<std::size_t>(c)];
        m /= n;
        double v = 0.0;
        for (int t = train.begin; t < train.end; ++t) {
            const double dev =
                features.weather[static_cast<std::size_t>(t) * 2 + static_cast<std::size_t>(c)] - m;
            v += dev * dev;
        }
        stats.weather_mean[c] = m;
        stats.weather_stdev[c] = std::max(std::sqrt(v / n), 1e-6);
    }
    return stats;
}

FeaturePanel normalize(const FeaturePanel& features, const FeatureStats& stats) {
    require(stats.mean.size() ==
                static_cast<std::size_t>(features.stations) *
                    static_cast<std::size_t>(features.channels),
            "ShapeMismatch", "normalization stats do not match the feature panel");
    FeaturePanel out = features;
    const int s = features.stations, d = features.channels;
    const std::size_t steps = features.weather.size() / 2;
    for (std::size_t t = 0; t < steps; ++t)
        for (int i = 0; i < s; ++i)
            for (int c = 0; c < d; ++c) {
                const std::size_t ix = out.index(static_cast<int>(t), i, c);
                out.features[ix] = (out.features[ix] -
                                    stats.mean[static_cast<std::size_t>(i * d + c)]) /
                                   stats.stdev[static_cast<std::size_t>(i * d + c)];
            }
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t c = 0; c < 2; ++c)
            out.weather[t * 2 + c] =
                (out.weather[t * 2 + c] - stats.weather_mean[c]) / stats.weather_stdev[c];
    return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

SplitPanels make_splits(const DemandPanel& panel, int train_steps, int validation_steps,
                        int test_steps) {
    require(train_steps >= 0 && validation_steps >= 0 && test_steps >= 0, "InvalidSpec",
            "split lengths must be nonnegative");
    const int history = panel.week_steps();
    require(history + train_steps + validation_steps + test_steps <= panel.steps(),
            "InsufficientHistory",
            "panel has " + std::to_string(panel.steps()) + " steps; the first week (" +
                std::to_string(history) + ") is reserved as residual history");
    SplitPanels out;
    out.history = history;
    int cursor = history;
    out.train = Window{"train", cursor, cursor + train_steps};
    cursor += train_steps;
    out.validation = Window{"validation", cursor, cursor + validation_steps};
    cursor += validation_steps;
    out.test = Window{"test", cursor, cursor + test_steps};
    return out;
}

SplitPanels make_splits(const DemandPanel& panel, const std::vector<Window>& windows) {
    require(windows.size() >= 3, "InvalidSpec",
            "named splits need at least train, validation and test windows");
    const int history = panel.week_steps();
    for (const Window& w : windows) {
        require(w.begin >= history, "InsufficientHistory",
                "window '" + w.name + "' starts inside the reserved history week");
        require(w.begin <= w.end && w.end <= panel.steps(), "InvalidSpec",
                "window '" + w.name + "' exceeds the panel");
    }
    for (std::size_t i = 0; i < windows.size(); ++i)
        for (std::size_t j = i + 1; j < windows.size(); ++j) {
            const Window& a = windows[i];
            const Window& b = windows[j];
            require(a.end <= b.begin || b.end <= a.begin, "OverlappingWindows",
                    "windows '" + a.name + "' and '" + b.name + "' overlap");
        }
    require(windows[0].end <= windows[1].begin && windows[1].end <= windows[2].begin,
            "InvalidSpec", "windows must be ordered train < validation <= test");
    SplitPanels out;
    out.history = history;
    out.train = windows[0];
    out.validation = windows[1];
    out.test = windows[2];
    for (std::size_t i = 3; i < windows.size(); ++i) out.extra_tests.push_back(windows[i]);
    return out;
}

Dataset assemble_dataset(DemandPanel demand, const FeaturePanel& raw_features,
                         StationTable stations, SplitPanels splits,
                         const std::vector<AdjKind>& kinds) {
    require(raw_features.stations == demand.stations, "ShapeMismatch",
            "feature panel station count does not match demand panel");
    require(raw_features.weather.size() == static_cast<std::size_t>(demand.steps()) * 2,
            "ShapeMismatch", "weather panel length does not match demand panel");
    Dataset out;
    out.stats = compute_stats(raw_features, splits.train);
    out.features = normalize(raw_features, out.stats);
    out.adjacency = build_adjacency(stations, kinds);
    out.demand = std::move(demand);
    out.stations = std::move(stations);
    out.splits = std::move(splits);
    return out;
}

// ---------------------------------------------------------------------------
// CSV interchange
// ---------------------------------------------------------------------------

void export_csv(const std::string& dir, const DemandPanel& demand,
                const FeaturePanel& features, const StationTable& stations,
                const std::vector<Window>& windows) {
    fs::create_directories(dir);
    {
        CsvWriter w(dir + "/demand.csv", {"timestamp_index", "station_id", "demand"});
        for (int t = 0; t < demand.steps(); ++t)
            for (int s = 0; s < demand.stations; ++s)
                w.row({std::to_string(demand.timestamps[static_cast<std::size_t>(t)]),
                       demand.station_ids[static_cast<std::size_t>(s)],
                       format_double(demand.at(t, s))});
    }
    {
        CsvWriter w(dir + "/features.csv", {"timestamp_index", "station_id", "channel", "value"});
        for (int t = 0; t < demand.steps(); ++t)
            for (int s = 0; s < demand.stations; ++s)
                for (int c = 0; c < features.channels; ++c)
                    w.row({std::to_string(demand.timestamps[static_cast<std::size_t>(t)]),
                           demand.station_ids[static_cast<std::size_t>(s)], std::to_string(c),
                           format_double(features.at(t, s, c))});
    }
    {
        CsvWriter w(dir + "/weather.csv", {"timestamp_index", "precip_dev", "temp_dev"});
        for (int t = 0; t < demand.steps(); ++t)
            w.row({std::to_string(demand.timestamps[static_cast<std::size_t>(t)]),
                   format_double(features.precip(t)), format_double(features.temp(t))});
    }
    {
        std::vector<std::string> header{"station_id", "x", "y"};
        for (int c = 0; c < stations.functional_dims(); ++c)
            header.push_back("func_" + std::to_string(c));
        CsvWriter w(dir + "/stations.csv", header);
        for (const Station& st : stations.stations()) {
            std::vector<std::string> row{st.id, format_double(st.x), format_double(st.y)};
            for (double f : st.functional) row.push_back(format_double(f));
            w.row(row);
        }
    }
    {
        CsvWriter w(dir + "/edges.csv", {"src", "dst", "network_distance_m"});
        for (const NetworkEdge& e : stations.edges())
            w.row({stations.station(e.a).id, stations.station(e.b).id,
                   format_double(e.distance_m)});
    }
    json meta;
    meta["format"] = "probgnn-panel-v1";
    meta["periods_per_day"] = demand.periods_per_day;
    meta["stations"] = demand.stations;
    meta["steps"] = demand.steps();
    meta["channels"] = features.channels;
    meta["windows"] = json::array();
    for (const Window& w : windows)
        meta["windows"].push_back({{"name", w.name}, {"begin", w.begin}, {"end", w.end}});
    std::ofstream out(dir + "/meta.json");
    out << meta.dump(2) << "\n";
}

namespace {

StationTable read_stations(const std::string& path) {
    CsvTable t = read_csv(path);
    require(t.column("station_id") == 0 && t.column("x") == 1 && t.column("y") == 2,
            "SchemaError", path + ": header must start with station_id,x,y");
    StationTable table;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string ctx = path + ":" + std::to_string(r + 2);
        std::vector<double> func;
        for (std::size_t c = 3; c < row.size(); ++c)
            func.push_back(parse_double(row[c], ctx));
        table.add_station(row[0], parse_double(row[1], ctx), parse_double(row[2], ctx),
                          std::move(func));
    }
    return table;
}

void read_edges(const std::string& path, StationTable& table) {
    if (!fs::exists(path)) return;
    CsvTable t = read_csv(path);
    require(t.column("src") == 0 && t.column("dst") == 1 &&
                t.column("network_distance_m") == 2,
            "SchemaError", path + ": header must be src,dst,network_distance_m");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        table.add_edge(row[0], row[1],
                       parse_double(row[2], path + ":" + std::to_string(r + 2)));
    }
}

}  // namespace

PanelBundle ingest_csv(const std::string& demand_path, const std::string& features_path,
                       const std::string& stations_path) {
    PanelBundle out;
    out.stations = read_stations(stations_path);
    const int s_count = out.stations.count();

    CsvTable dt = read_csv(demand_path);
    require(dt.column("timestamp_index") == 0 && dt.column("station_id") == 1 &&
                dt.column("demand") == 2,
            "SchemaError", demand_path + ": header must be timestamp_index,station_id,demand");
    int max_t = -1;
    for (std::size_t r = 0; r < dt.rows.size(); ++r)
        max_t = std::max(max_t, static_cast<int>(parse_long(
                                    dt.rows[r][0], demand_path + ":" + std::to_string(r + 2))));
    const int steps = max_t + 1;
    require(steps > 0, "SchemaError", demand_path + ": no rows");
    require(dt.rows.size() == static_cast<std::size_t>(steps) * static_cast<std::size_t>(s_count),
            "SchemaError", demand_path + ": expected one row per (timestamp, station) pair");

    DemandPanel& panel = out.demand;
    panel.stations = s_count;
    for (const Station& st : out.stations.stations()) panel.station_ids.push_back(st.id);
    panel.timestamps.resize(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) panel.timestamps[static_cast<std::size_t>(t)] = t;
    panel.demand.assign(static_cast<std::size_t>(steps) * static_cast<std::size_t>(s_count),
                        std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < dt.rows.size(); ++r) {
        const std::string ctx = demand_path + ":" + std::to_string(r + 2);
        const long t = parse_long(dt.rows[r][0], ctx);
        const int s = out.stations.index_of(dt.rows[r][1]);
        require(s >= 0, "SchemaError", ctx + ": unknown station '" + dt.rows[r][1] + "'");
        const double v = parse_double(dt.rows[r][2], ctx);
        require(v >= 0.0, "NegativeDemand",
                "negative demand at timestamp " + std::to_string(t) + ", station '" +
                    dt.rows[r][1] + "'");
        std::size_t cell = static_cast<std::size_t>(t) * static_cast<std::size_t>(s_count) +
                           static_cast<std::size_t>(s);
        require(std::isnan(panel.demand[cell]), "SchemaError",
                ctx + ": duplicate (timestamp, station) cell");
        panel.demand[cell] = v;
    }
    for (double v : panel.demand)
        require(!std::isnan(v), "SchemaError", demand_path + ": missing (timestamp, station) cell");

    CsvTable ft = read_csv(features_path);
    require(ft.column("timestamp_index") == 0 && ft.column("station_id") == 1 &&
                ft.column("channel") == 2 && ft.column("value") == 3,
            "SchemaError",
            features_path + ": header must be timestamp_index,station_id,channel,value");
    int channels = 0;
    for (std::size_t r = 0; r < ft.rows.size(); ++r)
        channels = std::max(channels,
                            static_cast<int>(parse_long(
                                ft.rows[r][2], features_path + ":" + std::to_string(r + 2))) +
                                1);
    require(channels > 0, "SchemaError", features_path + ": no rows");
    FeaturePanel& feat = out.features;
    feat.stations = s_count;
    feat.channels = channels;
    feat.features.assign(panel.demand.size() * static_cast<std::size_t>(channels),
                         std::numeric_limits<double>::quiet_NaN());
    require(ft.rows.size() == feat.features.size(), "SchemaError",
            features_path + ": expected one row per (timestamp, station, channel)");
    for (std::size_t r = 0; r < ft.rows.size(); ++r) {
        const std::string ctx = features_path + ":" + std::to_string(r + 2);
        const long t = parse_long(ft.rows[r][0], ctx);
        const int s = out.stations.index_of(ft.rows[r][1]);
        require(s >= 0, "SchemaError", ctx + ": unknown station '" + ft.rows[r][1] + "'");
        const long c = parse_long(ft.rows[r][2], ctx);
        require(t >= 0 && t < steps && c >= 0 && c < channels, "SchemaError",
                ctx + ": cell out of range");
        feat.features[feat.index(static_cast<int>(t), s, static_cast<int>(c))] =
            parse_double(ft.rows[r][3], ctx);
    }
    for (double v : feat.features)
        require(!std::isnan(v), "SchemaError", features_path + ": missing feature cell");
    feat.weather.assign(static_cast<std::size_t>(steps) * 2, 0.0);
    return out;
}

PanelBundle ingest_dir(const std::string& dir) {
    PanelBundle out = ingest_csv(dir + "/demand.csv", dir + "/features.csv",
                                 dir + "/stations.csv");
    read_edges(dir + "/edges.csv", out.stations);

    const std::string weather_path = dir + "/weather.csv";
    if (fs::exists(weather_path)) {
        CsvTable wt = read_csv(weather_path);
        require(wt.column("timestamp_index") == 0 && wt.column("precip_dev") == 1 &&
                    wt.column("temp_dev") == 2,
                "SchemaError", weather_path + ": header must be timestamp_index,precip_dev,temp_dev");
        require(wt.rows.size() == static_cast<std::size_t>(out.demand.steps()), "SchemaError",
                weather_path + ": expected one row per timestamp");
        for (std::size_t r = 0; r < wt.rows.size(); ++r) {
            const std::string ctx = weather_path + ":" + std::to_string(r + 2);
            const long t = parse_long(wt.rows[r][0], ctx);
            require(t >= 0 && t < out.demand.steps(), "SchemaError", ctx + ": bad timestamp");
            out.features.weather[static_cast<std::size_t>(t) * 2] =
                parse_double(wt.rows[r][1], ctx);
            out.features.weather[static_cast<std::size_t>(t) * 2 + 1] =
                parse_double(wt.rows[r][2], ctx);
        }
    }

    const std::string meta_path = dir + "/meta.json";
    if (fs::exists(meta_path)) {
        std::ifstream in(meta_path);
        json meta = json::parse(in);
        out.demand.periods_per_day = meta.value("periods_per_day", 24);
        if (meta.contains("windows"))
            for (const auto& w : meta["windows"])
                out.windows.push_back(Window{w.value("name", std::string("window")),
                                             w.value("begin", 0), w.value("end", 0)});
    }
    return out;
}

void export_dist_params(const std::string& path, const DistParams& params,
                        const std::vector<std::string>& station_ids, const Window& window) {
    const int s_count = static_cast<int>(station_ids.size());
    require(params.cells() == static_cast<std::size_t>(window.length()) *
                                  static_cast<std::size_t>(s_count),
            "ShapeMismatch", "parameter panel does not match window x stations");
    CsvWriter w(path, {"timestamp_index", "station_id", "family", "loc", "scale"});
    for (int t = 0; t < window.length(); ++t)
        for (int s = 0; s < s_count; ++s) {
            const std::size_t cell = static_cast<std::size_t>(t) *
                                         static_cast<std::size_t>(s_count) +
                                     static_cast<std::size_t>(s);
            w.row({std::to_string(window.begin + t), station_ids[static_cast<std::size_t>(s)],
                   family_name(params.family), format_double(params.loc[cell]),
                   params.scale.empty() ? "" : format_double(params.scale[cell])});
        }
}

void export_truth(const std::string& path, const DistParams& truth) {
    CsvWriter w(path, {"cell", "family", "loc", "scale"});
    for (std::size_t i = 0; i < truth.cells(); ++i)
        w.row({std::to_string(i), family_name(truth.family), format_double(truth.loc[i]),
               truth.scale.empty() ? "" : format_double(truth.scale[i])});
}

DistParams ingest_truth(const std::string& path) {
    CsvTable t = read_csv(path);
    require(t.column("cell") == 0 && t.column("family") == 1 && t.column("loc") == 2 &&
                t.column("scale") == 3,
            "SchemaError", path + ": header must be cell,family,loc,scale");
    DistParams out;
    require(!t.rows.empty(), "SchemaError", path + ": no rows");
    out.family = family_from_name(t.rows[0][1]);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string ctx = path + ":" + std::to_string(r + 2);
        out.loc.push_back(parse_double(t.rows[r][2], ctx));
        if (!t.rows[r][3].empty()) out.scale.push_back(parse_double(t.rows[r][3], ctx));
    }
    return out;
}

}  // namespace probgnn
