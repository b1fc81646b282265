#include "probgnn/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include "probgnn/errors.hpp"

namespace probgnn {

void TrainSpec::validate() const {
    require(learning_rate >= 0.0, "InvalidSpec", "learning rate must be nonnegative");
    require(max_epochs >= 1, "InvalidSpec", "max_epochs must be at least 1");
    require(patience >= 1, "InvalidSpec", "patience must be at least 1");
    require(weight_decay >= 0.0, "InvalidSpec", "weight decay must be nonnegative");
}

AdamW::AdamW(std::vector<Tensor> params, double learning_rate, double weight_decay)
    : params_(std::move(params)), lr_(learning_rate), wd_(weight_decay) {
    for (const Tensor& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void AdamW::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

void AdamW::step() {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++steps_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = params_[k];
        auto g = p.grad();
        auto value = p.leaf_values();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double gi = i < g.size() ? g[i] : 0.0;
            m_[k][i] = beta1 * m_[k][i] + (1.0 - beta1) * gi;
            v_[k][i] = beta2 * v_[k][i] + (1.0 - beta2) * gi * gi;
            const double mhat = m_[k][i] / bc1;
            const double vhat = v_[k][i] / bc2;
            value[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps) + wd_ * value[i]);
        }
    }
}

std::uint64_t params_checksum(const std::vector<Tensor>& params) {
    std::uint64_t h = 14695981039346656037ULL;
    auto mix_u64 = [&h](std::uint64_t bits) {
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffULL;
            h *= 1099511628211ULL;
        }
    };
    for (const Tensor& p : params)
        for (double v : p.values()) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(v));
            std::memcpy(&bits, &v, sizeof(bits));
            mix_u64(bits);
        }
    return h;
}

double window_nll(ProbGnn& model, const Dataset& data, const Window& window) {
    const std::vector<int> targets = window_targets(data, model.config, window);
    require(!targets.empty(), "EmptySplit", "window '" + window.name + "' has no usable targets");
    RngStream unused(0);
    double total = 0.0;
    std::size_t count = 0;
    for (int t : targets) {
        const Batch batch = make_batch(data, model.config, t);
        const HeadOutput head = model.forward(batch, /*training=*/false, unused);
        std::vector<double> y(static_cast<std::size_t>(data.demand.stations));
        for (int i = 0; i < data.demand.stations; ++i)
            y[static_cast<std::size_t>(i)] = data.demand.at(t, i);
        total += nll(head, y).item();
        count += y.size();
    }
    return total / static_cast<double>(count);
}

namespace {

std::vector<std::vector<double>> snapshot_params(const std::vector<Tensor>& params) {
    std::vector<std::vector<double>> out;
    for (const Tensor& p : params) out.emplace_back(p.values().begin(), p.values().end());
    return out;
}

void restore_params(const std::vector<Tensor>& params,
                    const std::vector<std::vector<double>>& snapshot) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        auto dst = p.leaf_values();
        std::copy(snapshot[i].begin(), snapshot[i].end(), dst.begin());
    }
}

void seeded_shuffle(std::vector<int>& items, RngStream rng) {
    for (std::size_t i = items.size(); i > 1; --i)
        std::swap(items[i - 1], items[static_cast<std::size_t>(rng.below(i))]);
}

}  // namespace

TrainReport train(ProbGnn& model, const Dataset& data, const TrainSpec& spec) {
    spec.validate();
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int> train_targets = window_targets(data, model.config, data.splits.train);
    require(!train_targets.empty(), "EmptySplit", "train window has no usable targets");
    require(!window_targets(data, model.config, data.splits.validation).empty(), "EmptySplit",
            "validation window has no usable targets");

    AdamW optimizer(model.parameters(), spec.learning_rate, spec.weight_decay);
    RngStream train_rng = RngStream(spec.seed).derive("train");

    TrainReport report;
    report.best_val_nll = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best = snapshot_params(model.parameters());
    int stall = 0;

    const int s = data.demand.stations;
    std::vector<double> y(static_cast<std::size_t>(s));
    for (int epoch = 0; epoch < spec.max_epochs; ++epoch) {
        std::vector<int> order = train_targets;
        seeded_shuffle(order, train_rng.derive("shuffle", static_cast<std::uint64_t>(epoch)));
        RngStream dropout_rng =
            train_rng.derive("dropout", static_cast<std::uint64_t>(epoch));

        double epoch_sum = 0.0;
        for (int t : order) {
            const Batch batch = make_batch(data, model.config, t);
            for (int i = 0; i < s; ++i) y[static_cast<std::size_t>(i)] = data.demand.at(t, i);
            Tape tape;
            double loss_value = 0.0;
            try {
                const HeadOutput head = model.forward(batch, /*training=*/true, dropout_rng);
                const Tensor loss = nll(head, y);
                loss_value = loss.item();
                require(std::isfinite(loss_value) && std::abs(loss_value) < 1e12,
                        "DivergedLoss", "non-finite or exploding NLL");
                optimizer.zero_grad();
                backward(loss);
            } catch (const Error& e) {
                if (e.kind() == "NonFinite" || e.kind() == "DivergedLoss")
                    fail("DivergedLoss", "epoch " + std::to_string(epoch) + ", step " +
                                             std::to_string(t) + ": " + e.what());
                throw;
            }
            optimizer.step();
            epoch_sum += loss_value;
        }
        report.train_nll.push_back(epoch_sum / (static_cast<double>(order.size()) *
                                                static_cast<double>(s)));
        const double val = window_nll(model, data, data.splits.validation);
        report.val_nll.push_back(val);

        if (val < report.best_val_nll) {
            report.best_val_nll = val;
            report.best_epoch = epoch;
            best = snapshot_params(model.parameters());
            stall = 0;
        } else if (++stall >= spec.patience) {
            break;
        }
    }
    restore_params(model.parameters(), best);
    report.param_checksum = params_checksum(model.parameters());
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::vector<TrialResult> grid_search(const std::vector<ModelConfig>& grid, const Dataset& data,
                                     const TrainSpec& spec, int jobs) {
    require(!grid.empty(), "InvalidSpec", "grid search over an empty grid");
    require(jobs >= 1, "InvalidSpec", "jobs must be at least 1");
    std::vector<TrialResult> results(grid.size());
    const RngStream root(spec.seed);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= grid.size()) return;
            TrialResult& r = results[i];
            r.config = grid[i];
            r.config.seed = root.derive("trial-init", i).seed();
            TrainSpec trial_spec = spec;
            trial_spec.seed = root.derive("trial-train", i).seed();
            trial_spec.weight_decay = r.config.weight_decay;
            try {
                ProbGnn model = ProbGnn::init(r.config, data.adjacency, data.features.channels,
                                              data.demand.periods_per_day, &data.stations);
                r.report = train(model, data, trial_spec);
                r.ok = true;
            } catch (const std::exception& e) {
                r.ok = false;
                r.error = e.what();
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }

    std::stable_sort(results.begin(), results.end(), [](const TrialResult& a, const TrialResult& b) {
        if (a.ok != b.ok) return a.ok;
        if (!a.ok) return false;
        return a.report.best_val_nll < b.report.best_val_nll;
    });
    return results;
}

std::vector<ModelConfig> default_grid(const ModelConfig& base) {
    std::vector<ModelConfig> out;
    for (int lookback : {2, 4, 6})
        for (int layers : {1, 2})
            for (int width : {64, 128})
                for (double dropout : {0.2, 0.5})
                    for (double wd : {1e-4, 1e-3, 1e-2, 1e-1}) {
                        ModelConfig c = base;
                        c.lookback = lookback;
                        c.spatial_layers = layers;
                        c.lstm_layers = layers;
                        c.hidden_width = width;
                        c.dropout = dropout;
                        c.weight_decay = wd;
                        out.push_back(c);
                    }
    return out;
}

EnsembleResult train_ensemble(const ModelConfig& config, int k, int runs, const Dataset& data,
                              const TrainSpec& spec, const Window& eval_window, int jobs) {
    require(k >= 2, "EmptyEnsemble", "ensembling requires K >= 2");
    require(runs >= k, "InvalidSpec", "cannot keep top " + std::to_string(k) + " of " +
                                          std::to_string(runs) + " runs");
    require(config.head == Family::HetG, "DomainError",
            "ensemble members must use the HetG head");

    EnsembleResult out;
    const RngStream root(spec.seed);
    std::vector<TrainReport> reports(static_cast<std::size_t>(runs));
    std::vector<GaussMember> window_params(static_cast<std::size_t>(runs));
    std::vector<WindowPrediction> predictions(static_cast<std::size_t>(runs));
    out.member_seeds.resize(static_cast<std::size_t>(runs));

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= runs) return;
            ModelConfig member = config;
            member.seed = root.derive("member-init", static_cast<std::uint64_t>(r)).seed();
            out.member_seeds[static_cast<std::size_t>(r)] = member.seed;
            TrainSpec member_spec = spec;
            member_spec.seed = root.derive("member-train", static_cast<std::uint64_t>(r)).seed();
            member_spec.weight_decay = member.weight_decay;
            ProbGnn model = ProbGnn::init(member, data.adjacency, data.features.channels,
                                          data.demand.periods_per_day, &data.stations);
            reports[static_cast<std::size_t>(r)] = train(model, data, member_spec);
            predictions[static_cast<std::size_t>(r)] = predict_window(model, data, eval_window);
            window_params[static_cast<std::size_t>(r)] =
                as_member(predictions[static_cast<std::size_t>(r)].params);
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }

    std::vector<int> order(static_cast<std::size_t>(runs));
    for (int r = 0; r < runs; ++r) order[static_cast<std::size_t>(r)] = r;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return reports[static_cast<std::size_t>(a)].best_val_nll <
               reports[static_cast<std::size_t>(b)].best_val_nll;
    });
    order.resize(static_cast<std::size_t>(k));

    for (int r : order) {
        out.selected_runs.push_back(r);
        out.members.push_back(window_params[static_cast<std::size_t>(r)]);
    }
    out.member_reports = std::move(reports);
    out.gens = ensemble(out.members);
    out.targets = predictions[static_cast<std::size_t>(order.front())].targets;
    out.steps = predictions[static_cast<std::size_t>(order.front())].steps;
    return out;
}

}  // namespace probgnn
