#pragma once

#include <span>
#include <string>
#include <vector>

#include "probgnn/rng.hpp"
#include "probgnn/tensor.hpp"

namespace probgnn {

/// The six probabilistic assumptions. HomoG fixes one global standard
/// deviation c; GEns is the moment-matched Gaussian mixture of K members.
enum class Family { HomoG, Pois, HetG, TG, Lap, GEns };

const char* family_name(Family f);
Family family_from_name(const std::string& name);
/// Number of per-cell parameters the network predicts (1 or 2).
int family_param_count(Family f);

/// Differentiable per-cell parameters for one forward pass, living on the
/// active tape. loc is mu (Gaussian/TG location, Laplace location) or lambda
/// (Poisson); scale is sigma or b, already strictly positive after the link.
struct HeadOutput {
    Family family = Family::HetG;
    Tensor loc;
    Tensor scale;  // undefined for Pois; constant filled with c for HomoG
};

/// Applies the positivity links to raw network outputs:
///   sigma/b = softplus(s) + 1e-3, lambda = softplus(s) + 1e-6.
/// HomoG ignores the raw scale and installs the constant c.
HeadOutput apply_head_link(Family family, const Tensor& raw_loc, const Tensor& raw_scale,
                           double homog_c);

/// Negative log likelihood, summed over cells; differentiable w.r.t. the
/// parameter tensors inside `head`.
Tensor nll(const HeadOutput& head, std::span<const double> y);

/// Tensor-route ensemble: moment-matches K member (mu_k, sigma_k) outputs to
/// one Gaussian and returns its NLL; gradients flow into every member.
Tensor ensemble_nll(const std::vector<HeadOutput>& members, std::span<const double> y);

// ---------------------------------------------------------------------------
// Numeric panels for evaluation and export
// ---------------------------------------------------------------------------

struct GaussMember {
    std::vector<double> mu;
    std::vector<double> sigma;
};

/// Resolved per-(station, time) parameters for one evaluation window, cell
/// order matching the flattened demand slice.
struct DistParams {
    Family family = Family::HetG;
    std::vector<double> loc;    // mu or lambda
    std::vector<double> scale;  // sigma or b; empty for Pois; filled with c for HomoG
    double homog_c = 0.0;
    std::vector<GaussMember> members;  // GEns only

    std::size_t cells() const { return loc.size(); }
    void validate() const;
};

/// Collects one forward pass worth of numeric parameters onto the panel.
void append_cells(DistParams& panel, const HeadOutput& head);

double log_pdf(const DistParams& p, std::size_t cell, double y);
double nll(const DistParams& p, std::span<const double> y);

double cdf(const DistParams& p, std::size_t cell, double y);
double quantile(const DistParams& p, std::size_t cell, double prob);

/// How TG reports a point prediction: the distribution mean (default) or the
/// untruncated location parameter.
enum class TgPointRule { TruncatedMean, Location };
double point_prediction(const DistParams& p, std::size_t cell,
                        TgPointRule tg_rule = TgPointRule::TruncatedMean);

/// Inverse-transform sample; deterministic given the stream state.
double sample(const DistParams& p, std::size_t cell, RngStream& rng);

/// Uniform mixture of K Gaussians moment-matched to one Gaussian:
///   mu* = mean_k mu_k,  sigma*^2 = mean_k (sigma_k^2 + mu_k^2) - mu*^2.
DistParams ensemble(const std::vector<GaussMember>& members);

struct UncertaintyDecomposition {
    std::vector<double> model_var;  // disagreement of member means
    std::vector<double> data_var;   // mean member variance
    std::vector<double> total_var;  // model_var + data_var
};

UncertaintyDecomposition decompose_uncertainty(const std::vector<GaussMember>& members);

/// HetG panel -> ensemble member view.
GaussMember as_member(const DistParams& p);

}  // namespace probgnn
