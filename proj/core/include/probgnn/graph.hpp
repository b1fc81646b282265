#pragma once

#include <span>
#include <string>
#include <vector>

#include "probgnn/panel.hpp"

namespace probgnn {

struct Station {
    std::string id;
    double x = 0.0;
    double y = 0.0;
    std::vector<double> functional;  // fixed-length across the table
};

struct NetworkEdge {
    int a = 0;
    int b = 0;
    double distance_m = 0.0;
};

/// Station metadata: planar coordinates, the network-neighbor edge list, and
/// the functional vector used for similarity adjacency.
class StationTable {
public:
    int add_station(std::string id, double x, double y, std::vector<double> functional);
    void add_edge(const std::string& src, const std::string& dst, double network_distance_m);

    int count() const { return static_cast<int>(stations_.size()); }
    const Station& station(int i) const { return stations_[static_cast<std::size_t>(i)]; }
    const std::vector<Station>& stations() const { return stations_; }
    const std::vector<NetworkEdge>& edges() const { return edges_; }
    int index_of(const std::string& id) const;  // -1 when absent
    int functional_dims() const;

private:
    std::vector<Station> stations_;
    std::vector<NetworkEdge> edges_;
};

enum class AdjKind { Con, Net, Euc, Func };
const char* adj_kind_name(AdjKind k);
AdjKind adj_kind_from_name(const std::string& name);

/// The multi-graph adjacency set: raw matrices A_r, self-looped versions
/// A~_r = A_r + I, and the cached symmetric normalizations
/// D~^{-1/2} A~ D~^{-1/2} the GCN consumes. Immutable once built.
struct AdjacencySet {
    std::vector<AdjKind> kinds;
    std::vector<std::vector<double>> raw;         // per kind, S x S, zero diagonal
    std::vector<std::vector<double>> with_self;   // A + I
    std::vector<std::vector<double>> normalized;  // cached D~^{-1/2} (A+I) D~^{-1/2}
    int stations = 0;

    int count() const { return static_cast<int>(kinds.size()); }
};

/// Symmetric normalization of one self-looped matrix; also used to verify the
/// cached copies.
std::vector<double> normalize_adjacency(const std::vector<double>& with_self, int stations);

AdjacencySet build_adjacency(const StationTable& table, const std::vector<AdjKind>& kinds);

/// Global Moran's I with raw (unnormalized) weights:
///   I = (S / sum_ij W_ij) * sum_ij W_ij (v_i - vbar)(v_j - vbar) / sum_i (v_i - vbar)^2
double morans_i(std::span<const double> values, const std::vector<double>& weights,
                int stations);

/// Per-kind Moran's I for every time step of a demand panel. Zero-variance
/// steps are skipped (and counted) rather than erroring.
struct MoranHistogram {
    std::vector<AdjKind> kinds;
    std::vector<std::vector<double>> values;  // per kind, one I per retained step
    std::vector<double> mean_i;               // per kind
    int skipped_steps = 0;
};

MoranHistogram morans_histogram(const DemandPanel& panel, const AdjacencySet& adj);

}  // namespace probgnn
