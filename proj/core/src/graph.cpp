#include "probgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "probgnn/errors.hpp"

namespace probgnn {

int StationTable::add_station(std::string id, double x, double y,
                              std::vector<double> functional) {
    require(index_of(id) < 0, "DuplicateStation", "station id '" + id + "' already present");
    if (!stations_.empty())
        require(functional.size() == stations_.front().functional.size(), "MissingField",
                "functional vector length mismatch for station '" + id + "'");
    stations_.push_back(Station{std::move(id), x, y, std::move(functional)});
    return count() - 1;
}

void StationTable::add_edge(const std::string& src, const std::string& dst,
                            double network_distance_m) {
    const int a = index_of(src);
    const int b = index_of(dst);
    require(a >= 0, "MissingField", "edge references unknown station '" + src + "'");
    require(b >= 0, "MissingField", "edge references unknown station '" + dst + "'");
    require(a != b, "ZeroDistance", "self edge on station '" + src + "'");
    require(network_distance_m > 0.0, "ZeroDistance",
            "non-positive network distance between '" + src + "' and '" + dst + "'");
    edges_.push_back(NetworkEdge{a, b, network_distance_m});
}

int StationTable::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < stations_.size(); ++i)
        if (stations_[i].id == id) return static_cast<int>(i);
    return -1;
}

int StationTable::functional_dims() const {
    return stations_.empty() ? 0 : static_cast<int>(stations_.front().functional.size());
}

const char* adj_kind_name(AdjKind k) {
    switch (k) {
        case AdjKind::Con: return "Con";
        case AdjKind::Net: return "Net";
        case AdjKind::Euc: return "Euc";
        case AdjKind::Func: return "Func";
    }
    return "?";
}

AdjKind adj_kind_from_name(const std::string& name) {
    if (name == "Con" || name == "con") return AdjKind::Con;
    if (name == "Net" || name == "net") return AdjKind::Net;
    if (name == "Euc" || name == "euc") return AdjKind::Euc;
    if (name == "Func" || name == "func") return AdjKind::Func;
    fail("MissingField", "unknown adjacency kind '" + name + "'");
}

namespace {

std::size_t ix(int i, int j, int s) {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(s) +
           static_cast<std::size_t>(j);
}

// All-pairs shortest path over the neighbor graph (Dijkstra per source).
// Pairs left unreachable get +inf, which maps to adjacency weight 0.
std::vector<double> network_distances(const StationTable& table) {
    const int s = table.count();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<std::pair<int, double>>> nbr(static_cast<std::size_t>(s));
    for (const NetworkEdge& e : table.edges()) {
        nbr[static_cast<std::size_t>(e.a)].emplace_back(e.b, e.distance_m);
        nbr[static_cast<std::size_t>(e.b)].emplace_back(e.a, e.distance_m);
    }
    std::vector<double> dist(static_cast<std::size_t>(s) * static_cast<std::size_t>(s), inf);
    for (int src = 0; src < s; ++src) {
        std::vector<double> d(static_cast<std::size_t>(s), inf);
        d[static_cast<std::size_t>(src)] = 0.0;
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        pq.emplace(0.0, src);
        while (!pq.empty()) {
            auto [dd, u] = pq.top();
            pq.pop();
            if (dd > d[static_cast<std::size_t>(u)]) continue;
            for (auto [v, w] : nbr[static_cast<std::size_t>(u)])
                if (dd + w < d[static_cast<std::size_t>(v)]) {
                    d[static_cast<std::size_t>(v)] = dd + w;
                    pq.emplace(d[static_cast<std::size_t>(v)], v);
                }
        }
        for (int j = 0; j < s; ++j) dist[ix(src, j, s)] = d[static_cast<std::size_t>(j)];
    }
    return dist;
}

// Per-component min-max rescale to [0,1]; constant components map to 0.
std::vector<std::vector<double>> normalized_functionals(const StationTable& table) {
    const int s = table.count();
    const int f = table.functional_dims();
    std::vector<std::vector<double>> out(static_cast<std::size_t>(s),
                                         std::vector<double>(static_cast<std::size_t>(f)));
    for (int c = 0; c < f; ++c) {
        double lo = table.station(0).functional[static_cast<std::size_t>(c)];
        double hi = lo;
        for (int i = 1; i < s; ++i) {
            const double v = table.station(i).functional[static_cast<std::size_t>(c)];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double span = hi - lo;
        for (int i = 0; i < s; ++i) {
            const double v = table.station(i).functional[static_cast<std::size_t>(c)];
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] =
                span > 0.0 ? (v - lo) / span : 0.0;
        }
    }
    return out;
}

}  // namespace

std::vector<double> normalize_adjacency(const std::vector<double>& with_self, int stations) {
    std::vector<double> deg(static_cast<std::size_t>(stations), 0.0);
    for (int i = 0; i < stations; ++i)
        for (int j = 0; j < stations; ++j)
            deg[static_cast<std::size_t>(i)] += with_self[ix(i, j, stations)];
    std::vector<double> inv_sqrt(static_cast<std::size_t>(stations));
    for (int i = 0; i < stations; ++i) {
        require(deg[static_cast<std::size_t>(i)] > 0.0, "ZeroDistance",
                "zero degree row in adjacency normalization");
        inv_sqrt[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(deg[static_cast<std::size_t>(i)]);
    }
    std::vector<double> norm(with_self.size());
    for (int i = 0; i < stations; ++i)
        for (int j = 0; j < stations; ++j)
            norm[ix(i, j, stations)] = inv_sqrt[static_cast<std::size_t>(i)] *
                                       with_self[ix(i, j, stations)] *
                                       inv_sqrt[static_cast<std::size_t>(j)];
    return norm;
}

AdjacencySet build_adjacency(const StationTable& table, const std::vector<AdjKind>& kinds) {
    const int s = table.count();
    require(s >= 2, "MissingField", "build_adjacency needs at least 2 stations");
    require(!kinds.empty(), "MissingField", "build_adjacency needs at least one kind");

    AdjacencySet out;
    out.stations = s;
    std::vector<double> netdist;
    std::vector<std::vector<double>> func;

    for (AdjKind kind : kinds) {
        std::vector<double> a(static_cast<std::size_t>(s) * static_cast<std::size_t>(s), 0.0);
        switch (kind) {
            case AdjKind::Con:
                for (const NetworkEdge& e : table.edges()) {
                    a[ix(e.a, e.b, s)] = 1.0;
                    a[ix(e.b, e.a, s)] = 1.0;
                }
                break;
            case AdjKind::Net: {
                require(!table.edges().empty(), "MissingField",
                        "Net adjacency requires network edges");
                if (netdist.empty()) netdist = network_distances(table);
                for (int i = 0; i < s; ++i)
                    for (int j = 0; j < s; ++j) {
                        if (i == j) continue;
                        const double d = netdist[ix(i, j, s)];
                        if (!std::isfinite(d)) continue;  // unreachable pair
                        require(d > 0.0, "ZeroDistance",
                                "zero network distance between distinct stations '" +
                                    table.station(i).id + "' and '" + table.station(j).id + "'");
                        a[ix(i, j, s)] = 1.0 / d;
                    }
                break;
            }
            case AdjKind::Euc:
                for (int i = 0; i < s; ++i)
                    for (int j = i + 1; j < s; ++j) {
                        const double dx = table.station(i).x - table.station(j).x;
                        const double dy = table.station(i).y - table.station(j).y;
                        const double d = std::sqrt(dx * dx + dy * dy);
                        require(d > 0.0, "ZeroDistance",
                                "stations '" + table.station(i).id + "' and '" +
                                    table.station(j).id + "' share coordinates");
                        a[ix(i, j, s)] = a[ix(j, i, s)] = 1.0 / d;
                    }
                break;
            case AdjKind::Func: {
                require(table.functional_dims() > 0, "MissingField",
                        "Func adjacency requires functional vectors");
                if (func.empty()) func = normalized_functionals(table);
                for (int i = 0; i < s; ++i)
                    for (int j = i + 1; j < s; ++j) {
                        double d2 = 0.0;
                        for (std::size_t c = 0; c < func[0].size(); ++c) {
                            const double diff = func[static_cast<std::size_t>(i)][c] -
                                                func[static_cast<std::size_t>(j)][c];
                            d2 += diff * diff;
                        }
                        const double d = std::sqrt(d2);
                        require(d > 0.0, "ZeroDistance",
                                "stations '" + table.station(i).id + "' and '" +
                                    table.station(j).id + "' have identical functional vectors");
                        a[ix(i, j, s)] = a[ix(j, i, s)] = 1.0 / d;
                    }
                break;
            }
        }
        std::vector<double> tilde = a;
        for (int i = 0; i < s; ++i) tilde[ix(i, i, s)] += 1.0;
        out.kinds.push_back(kind);
        out.raw.push_back(std::move(a));
        out.normalized.push_back(normalize_adjacency(tilde, s));
        out.with_self.push_back(std::move(tilde));
    }
    return out;
}

double morans_i(std::span<const double> values, const std::vector<double>& weights,
                int stations) {
    require(static_cast<int>(values.size()) == stations, "ShapeMismatch",
            "morans_i: values length does not match station count");
    require(weights.size() ==
                static_cast<std::size_t>(stations) * static_cast<std::size_t>(stations),
            "ShapeMismatch", "morans_i: weights must be S x S");
    double wsum = 0.0;
    for (int i = 0; i < stations; ++i) {
        require(weights[ix(i, i, stations)] == 0.0, "ShapeMismatch",
                "morans_i: weights must have a zero diagonal");
        for (int j = 0; j < stations; ++j) {
            require(weights[ix(i, j, stations)] >= 0.0, "ShapeMismatch",
                    "morans_i: weights must be nonnegative");
            wsum += weights[ix(i, j, stations)];
        }
    }
    require(wsum > 0.0, "ZeroWeightSum", "morans_i: weight sum is zero");

    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(stations);
    double denom = 0.0;
    for (double v : values) denom += (v - mean) * (v - mean);
    require(denom > 0.0, "ZeroVariance", "morans_i: all values are equal");

    double cross = 0.0;
    for (int i = 0; i < stations; ++i)
        for (int j = 0; j < stations; ++j)
            cross += weights[ix(i, j, stations)] * (values[static_cast<std::size_t>(i)] - mean) *
                     (values[static_cast<std::size_t>(j)] - mean);
    return (static_cast<double>(stations) / wsum) * cross / denom;
}

MoranHistogram morans_histogram(const DemandPanel& panel, const AdjacencySet& adj) {
    require(panel.steps() > 0 && panel.stations == adj.stations, "ShapeMismatch",
            "morans_histogram: panel and adjacency disagree on station count");
    MoranHistogram out;
    out.kinds = adj.kinds;
    out.values.resize(adj.kinds.size());
    out.mean_i.assign(adj.kinds.size(), 0.0);
    for (int t = 0; t < panel.steps(); ++t) {
        std::span<const double> row(panel.demand.data() +
                                        static_cast<std::size_t>(t) *
                                            static_cast<std::size_t>(panel.stations),
                                    static_cast<std::size_t>(panel.stations));
        const double first = row[0];
        bool constant = true;
        for (double v : row)
            if (v != first) { constant = false; break; }
        if (constant) {
            ++out.skipped_steps;
            continue;
        }
        for (std::size_t k = 0; k < adj.kinds.size(); ++k)
            out.values[k].push_back(morans_i(row, adj.raw[k], panel.stations));
    }
    for (std::size_t k = 0; k < adj.kinds.size(); ++k) {
        double m = 0.0;
        for (double v : out.values[k]) m += v;
        out.mean_i[k] = out.values[k].empty() ? 0.0 : m / static_cast<double>(out.values[k].size());
    }
    return out;
}

}  // namespace probgnn
