#include "probgnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "probgnn/errors.hpp"

namespace probgnn {

using nlohmann::json;

const char* spatial_kind_name(SpatialKind k) {
    return k == SpatialKind::GCN ? "gcn" : "gat";
}

SpatialKind spatial_kind_from_name(const std::string& name) {
    if (name == "gcn" || name == "GCN") return SpatialKind::GCN;
    if (name == "gat" || name == "GAT") return SpatialKind::GAT;
    fail("DomainError", "unknown spatial encoder '" + name + "'");
}

void ModelConfig::validate() const {
    require(lookback >= 1, "InvalidSpec", "lookback must be at least 1");
    require(spatial_layers >= 1 && lstm_layers >= 1, "InvalidSpec",
            "layer counts must be at least 1");
    require(hidden_width >= 1, "InvalidSpec", "hidden width must be at least 1");
    require(attention_heads >= 1, "InvalidSpec", "attention heads must be at least 1");
    require(dropout >= 0.0 && dropout < 1.0, "InvalidSpec", "dropout must lie in [0, 1)");
    require(weight_decay >= 0.0, "InvalidSpec", "weight decay must be nonnegative");
    if (head == Family::HomoG)
        require(homog_c > 0.0, "InvalidSpec", "HomoG requires a positive constant c");
}

std::string ModelConfig::label() const {
    std::string s = family_name(head);
    s += "-";
    s += spatial == SpatialKind::GCN ? "GCN" : "GAT";
    return s;
}

ProbGnn ProbGnn::init(const ModelConfig& config, const AdjacencySet& adj,
                      int feature_channels, int periods_per_day, const StationTable* table) {
    config.validate();
    require(feature_channels >= 1, "ShapeMismatch", "need at least one feature channel");
    require(periods_per_day >= 1, "ShapeMismatch", "periods_per_day must be positive");
    ProbGnn model;
    model.config = config;
    model.adj = adj;
    model.feature_channels = feature_channels;
    model.periods_per_day = periods_per_day;

    RngStream rng = RngStream(config.seed).derive("init");
    const int s = adj.stations;
    const int w = config.hidden_width;

    if (config.spatial == SpatialKind::GCN) {
        for (int l = 0; l < config.spatial_layers; ++l) {
            const int d_in = l == 0 ? feature_channels : w;
            RngStream lrng = rng.derive("gcn", static_cast<std::uint64_t>(l));
            model.gcn.push_back(
                GcnLayer::init(adj.count(), d_in, w, config.activation, config.dropout, lrng));
        }
    } else {
        std::vector<std::uint8_t> mask;
        if (config.gat_mask_percentile > 0.0) {
            require(table != nullptr, "MissingField",
                    "percentile GAT mask requires the station table");
            mask = percentile_distance_mask(*table, config.gat_mask_percentile);
        } else {
            mask = union_neighborhood_mask(adj);
        }
        for (int l = 0; l < config.spatial_layers; ++l) {
            const bool last = l == config.spatial_layers - 1;
            const int d_in = l == 0 ? feature_channels
                                    : (config.attention_heads * w);  // concat of heads
            RngStream lrng = rng.derive("gat", static_cast<std::uint64_t>(l));
            model.gat.push_back(GatLayer::init(config.attention_heads, s, d_in, w, mask,
                                               /*average_heads=*/last, config.activation,
                                               config.dropout, lrng));
        }
    }

    const int enc_width = w;  // final spatial layer output width (GAT averages heads)
    RngStream lrng = rng.derive("lstm");
    model.lstm = LstmStack::init(config.lstm_layers, s * enc_width, w, lrng);
    RngStream drng = rng.derive("decoder");
    model.decoder = Decoder::init(w, s, /*history_mu_bias=*/1.0, drng);

    for (int tod = 0; tod < periods_per_day; ++tod) {
        model.weather_precip.push_back(Tensor::zeros({s, 2}, true));
        model.weather_temp.push_back(Tensor::zeros({s, 2}, true));
    }
    model.register_params();
    return model;
}

void ProbGnn::register_params() {
    auto reg = [this](const std::string& name, const Tensor& t) {
        params_.push_back(t);
        named_params_.emplace_back(name, t);
    };
    for (std::size_t l = 0; l < gcn.size(); ++l)
        for (std::size_t r = 0; r < gcn[l].weights.size(); ++r)
            reg("gcn" + std::to_string(l) + ".w" + std::to_string(r), gcn[l].weights[r]);
    for (std::size_t l = 0; l < gat.size(); ++l)
        for (int k = 0; k < gat[l].heads(); ++k) {
            const std::string base = "gat" + std::to_string(l) + ".h" + std::to_string(k);
            reg(base + ".w", gat[l].head_weight[static_cast<std::size_t>(k)]);
            reg(base + ".a_src", gat[l].attn_src[static_cast<std::size_t>(k)]);
            reg(base + ".a_dst", gat[l].attn_dst[static_cast<std::size_t>(k)]);
        }
    for (int l = 0; l < lstm.layers; ++l) {
        const std::string base = "lstm.l" + std::to_string(l);
        reg(base + ".wx", lstm.w_input[static_cast<std::size_t>(l)]);
        reg(base + ".wh", lstm.w_hidden[static_cast<std::size_t>(l)]);
        reg(base + ".b", lstm.bias[static_cast<std::size_t>(l)]);
    }
    reg("decoder.w_recent", decoder.w_recent);
    reg("decoder.b_recent", decoder.b_recent);
    reg("decoder.w_history", decoder.w_history);
    reg("decoder.b_history", decoder.b_history);
    for (std::size_t tod = 0; tod < weather_precip.size(); ++tod)
        reg("weather.precip.tod" + std::to_string(tod), weather_precip[tod]);
    for (std::size_t tod = 0; tod < weather_temp.size(); ++tod)
        reg("weather.temp.tod" + std::to_string(tod), weather_temp[tod]);
}

HeadOutput ProbGnn::forward(const Batch& batch, bool training, RngStream& dropout_rng) {
    const int s = stations();
    require(static_cast<int>(batch.recent.size()) == config.lookback, "ShapeMismatch",
            "batch holds " + std::to_string(batch.recent.size()) + " recent steps, expected " +
                std::to_string(config.lookback));
    require(static_cast<int>(batch.last_week.size()) == s, "ShapeMismatch",
            "last_week demand must have one entry per station");
    require(batch.time_of_day >= 0 && batch.time_of_day < periods_per_day, "UnknownTimeOfDay",
            "time of day " + std::to_string(batch.time_of_day) + " outside 0.." +
                std::to_string(periods_per_day - 1));

    // spatial encoding per lookback step, then stacked into lookback x S x w
    std::vector<Tensor> encoded;
    for (const Tensor& step : batch.recent) {
        require(step.rank() == 2 && step.dim(0) == s && step.dim(1) == feature_channels,
                "ShapeMismatch", "recent step has shape " + shape_str(step.shape()));
        Tensor h = step;
        if (config.spatial == SpatialKind::GCN)
            for (const GcnLayer& layer : gcn)
                h = gcn_forward(layer, h, adj, training, dropout_rng);
        else
            for (const GatLayer& layer : gat)
                h = gat_forward(layer, h, training, dropout_rng);
        encoded.push_back(reshape(h, {1, s, h.dim(1)}));
    }
    const Tensor sequence = encoded.size() == 1 ? encoded.front() : concat(encoded, 0);
    const Tensor h_last = lstm_forward(lstm, sequence);
    const DecodeOutput dec = decode(decoder, h_last);

    // history component: learned weights times last week's observation
    std::vector<double> d2(static_cast<std::size_t>(s) * 2);
    for (int i = 0; i < s; ++i)
        d2[static_cast<std::size_t>(2 * i)] = d2[static_cast<std::size_t>(2 * i + 1)] =
            batch.last_week[static_cast<std::size_t>(i)];
    const Tensor history = mul_elementwise(dec.history_weights, Tensor({s, 2}, std::move(d2)));

    // weather component: per time-of-day weights times the two deviations
    const std::size_t tod = static_cast<std::size_t>(batch.time_of_day);
    const Tensor weather = add(scalar_mul(weather_precip[tod], batch.precip),
                               scalar_mul(weather_temp[tod], batch.temp));

    const Tensor raw = add(add(dec.recent, history), weather);
    const Tensor raw_loc = slice(raw, 1, 0, 1);
    const Tensor raw_scale = slice(raw, 1, 1, 1);
    return apply_head_link(config.head, raw_loc, raw_scale, config.homog_c);
}

McDropoutResult mc_dropout_predict(ProbGnn& model, const Batch& batch, int passes,
                                   std::uint64_t seed) {
    require(model.config.dropout > 0.0, "DropoutDisabled",
            "mc_dropout_predict requires a positive dropout rate");
    require(passes >= 2, "DomainError", "mc_dropout_predict requires at least 2 passes");
    const int s = model.stations();
    std::vector<std::vector<double>> draws;
    for (int pass = 0; pass < passes; ++pass) {
        RngStream rng = RngStream(seed).derive("mc-dropout", static_cast<std::uint64_t>(pass));
        const HeadOutput head = model.forward(batch, /*training=*/true, rng);
        DistParams p;
        p.family = head.family;
        p.homog_c = model.config.homog_c;
        append_cells(p, head);
        std::vector<double> point(static_cast<std::size_t>(s));
        for (int i = 0; i < s; ++i)
            point[static_cast<std::size_t>(i)] =
                point_prediction(p, static_cast<std::size_t>(i), model.config.tg_point);
        draws.push_back(std::move(point));
    }
    McDropoutResult out;
    out.mean.assign(static_cast<std::size_t>(s), 0.0);
    out.variance.assign(static_cast<std::size_t>(s), 0.0);
    for (const auto& d : draws)
        for (int i = 0; i < s; ++i) out.mean[static_cast<std::size_t>(i)] += d[static_cast<std::size_t>(i)];
    for (double& m : out.mean) m /= static_cast<double>(passes);
    for (const auto& d : draws)
        for (int i = 0; i < s; ++i) {
            const double dev = d[static_cast<std::size_t>(i)] - out.mean[static_cast<std::size_t>(i)];
            out.variance[static_cast<std::size_t>(i)] += dev * dev;
        }
    for (double& v : out.variance) v /= static_cast<double>(passes);
    return out;
}

// ---------------------------------------------------------------------------
// Dataset plumbing
// ---------------------------------------------------------------------------

int first_valid_target(const Dataset& data, const ModelConfig& config) {
    return data.demand.week_steps() + config.lookback;
}

std::vector<int> window_targets(const Dataset& data, const ModelConfig& config,
                                const Window& window) {
    std::vector<int> out;
    const int first = first_valid_target(data, config);
    for (int t = std::max(window.begin, first); t < window.end; ++t) out.push_back(t);
    return out;
}

Batch make_batch(const Dataset& data, const ModelConfig& config, int target_step) {
    const int s = data.demand.stations;
    const int d = data.features.channels;
    const int week = data.demand.week_steps();
    require(target_step - config.lookback >= week && target_step < data.demand.steps(),
            "InsufficientHistory",
            "target step " + std::to_string(target_step) + " lacks lookback or week history");
    Batch batch;
    for (int k = config.lookback; k >= 1; --k) {
        const int t = target_step - k;
        std::vector<double> step(static_cast<std::size_t>(s) * static_cast<std::size_t>(d));
        for (int i = 0; i < s; ++i)
            for (int c = 0; c < d; ++c)
                step[static_cast<std::size_t>(i * d + c)] = data.features.at(t, i, c);
        batch.recent.push_back(Tensor({s, d}, std::move(step)));
    }
    batch.last_week.resize(static_cast<std::size_t>(s));
    for (int i = 0; i < s; ++i)
        batch.last_week[static_cast<std::size_t>(i)] = data.demand.at(target_step - week, i);
    batch.precip = data.features.precip(target_step);
    batch.temp = data.features.temp(target_step);
    batch.time_of_day = data.demand.time_of_day(target_step);
    return batch;
}

WindowPrediction predict_window(ProbGnn& model, const Dataset& data, const Window& window) {
    WindowPrediction out;
    out.params.family = model.config.head;
    out.params.homog_c = model.config.homog_c;
    RngStream unused(0);
    for (int t : window_targets(data, model.config, window)) {
        const Batch batch = make_batch(data, model.config, t);
        const HeadOutput head = model.forward(batch, /*training=*/false, unused);
        append_cells(out.params, head);
        for (int i = 0; i < data.demand.stations; ++i)
            out.targets.push_back(data.demand.at(t, i));
        out.steps.push_back(t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kCheckpointTag = "probgnn-checkpoint-v1";

json config_to_json(const ModelConfig& c) {
    return json{{"spatial", spatial_kind_name(c.spatial)},
                {"head", family_name(c.head)},
                {"lookback", c.lookback},
                {"spatial_layers", c.spatial_layers},
                {"hidden_width", c.hidden_width},
                {"lstm_layers", c.lstm_layers},
                {"attention_heads", c.attention_heads},
                {"dropout", c.dropout},
                {"weight_decay", c.weight_decay},
                {"homog_c", c.homog_c},
                {"gat_mask_percentile", c.gat_mask_percentile},
                {"activation", activation_name(c.activation)},
                {"tg_point", c.tg_point == TgPointRule::TruncatedMean ? "truncated_mean"
                                                                      : "location"},
                {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.spatial = spatial_kind_from_name(j.at("spatial").get<std::string>());
    c.head = family_from_name(j.at("head").get<std::string>());
    c.lookback = j.at("lookback").get<int>();
    c.spatial_layers = j.at("spatial_layers").get<int>();
    c.hidden_width = j.at("hidden_width").get<int>();
    c.lstm_layers = j.at("lstm_layers").get<int>();
    c.attention_heads = j.at("attention_heads").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.homog_c = j.at("homog_c").get<double>();
    c.gat_mask_percentile = j.at("gat_mask_percentile").get<double>();
    c.activation = activation_from_name(j.at("activation").get<std::string>());
    c.tg_point = j.at("tg_point").get<std::string>() == "location"
                     ? TgPointRule::Location
                     : TgPointRule::TruncatedMean;
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}
}  // namespace

void save_checkpoint(const std::string& path, const ProbGnn& model, const FeatureStats& stats,
                     const std::vector<std::string>& station_ids) {
    json j;
    j["format"] = kCheckpointTag;
    j["config"] = config_to_json(model.config);
    j["feature_channels"] = model.feature_channels;
    j["periods_per_day"] = model.periods_per_day;
    j["station_ids"] = station_ids;

    json adj;
    adj["stations"] = model.adj.stations;
    adj["kinds"] = json::array();
    adj["with_self"] = json::array();
    for (int k = 0; k < model.adj.count(); ++k) {
        adj["kinds"].push_back(adj_kind_name(model.adj.kinds[static_cast<std::size_t>(k)]));
        adj["with_self"].push_back(model.adj.with_self[static_cast<std::size_t>(k)]);
    }
    j["adjacency"] = std::move(adj);

    json params = json::array();
    for (const auto& [name, tensor] : model.named_parameters()) {
        json p;
        p["name"] = name;
        p["shape"] = tensor.shape();
        p["data"] = std::vector<double>(tensor.values().begin(), tensor.values().end());
        params.push_back(std::move(p));
    }
    j["params"] = std::move(params);

    j["stats"] = {{"mean", stats.mean},
                  {"stdev", stats.stdev},
                  {"weather_mean", {stats.weather_mean[0], stats.weather_mean[1]}},
                  {"weather_stdev", {stats.weather_stdev[0], stats.weather_stdev[1]}}};

    std::ofstream out(path);
    require(out.good(), "SchemaError", "cannot write checkpoint '" + path + "'");
    out << j.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "SchemaError", "cannot open checkpoint '" + path + "'");
    json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
    require(!j.is_discarded(), "SchemaError", "checkpoint '" + path + "' is not valid JSON");
    require(j.value("format", "") == kCheckpointTag, "SchemaError",
            "checkpoint '" + path + "' has an unknown format tag");

    AdjacencySet adj;
    adj.stations = j["adjacency"]["stations"].get<int>();
    for (std::size_t k = 0; k < j["adjacency"]["kinds"].size(); ++k) {
        adj.kinds.push_back(adj_kind_from_name(j["adjacency"]["kinds"][k].get<std::string>()));
        std::vector<double> tilde = j["adjacency"]["with_self"][k].get<std::vector<double>>();
        std::vector<double> raw = tilde;
        for (int i = 0; i < adj.stations; ++i)
            raw[static_cast<std::size_t>(i) * static_cast<std::size_t>(adj.stations) +
                static_cast<std::size_t>(i)] -= 1.0;
        adj.normalized.push_back(normalize_adjacency(tilde, adj.stations));
        adj.with_self.push_back(std::move(tilde));
        adj.raw.push_back(std::move(raw));
    }

    LoadedCheckpoint out{
        ProbGnn::init(config_from_json(j["config"]), adj, j["feature_channels"].get<int>(),
                      j["periods_per_day"].get<int>()),
        FeatureStats{}, j["station_ids"].get<std::vector<std::string>>()};

    out.stats.mean = j["stats"]["mean"].get<std::vector<double>>();
    out.stats.stdev = j["stats"]["stdev"].get<std::vector<double>>();
    out.stats.weather_mean[0] = j["stats"]["weather_mean"][0].get<double>();
    out.stats.weather_mean[1] = j["stats"]["weather_mean"][1].get<double>();
    out.stats.weather_stdev[0] = j["stats"]["weather_stdev"][0].get<double>();
    out.stats.weather_stdev[1] = j["stats"]["weather_stdev"][1].get<double>();

    const auto& params = out.model.named_parameters();
    require(j["params"].size() == params.size(), "SchemaError",
            "checkpoint parameter count does not match the configured model");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const json& p = j["params"][i];
        require(p["name"].get<std::string>() == params[i].first, "SchemaError",
                "checkpoint parameter order mismatch at '" + params[i].first + "'");
        std::vector<double> data = p["data"].get<std::vector<double>>();
        Tensor t = params[i].second;
        require(data.size() == t.size(), "SchemaError",
                "checkpoint parameter '" + params[i].first + "' has the wrong size");
        auto dst = t.leaf_values();
        std::copy(data.begin(), data.end(), dst.begin());
    }
    return out;
}

}  // namespace probgnn
