#include "probgnn/distributions.hpp"

#include <algorithm>
#include <cmath>

#include "probgnn/errors.hpp"
#include "probgnn/mathfn.hpp"

namespace probgnn {

const char* family_name(Family f) {
    switch (f) {
        case Family::HomoG: return "HomoG";
        case Family::Pois: return "Pois";
        case Family::HetG: return "HetG";
        case Family::TG: return "TG";
        case Family::Lap: return "Lap";
        case Family::GEns: return "GEns";
    }
    return "?";
}

Family family_from_name(const std::string& name) {
    if (name == "HomoG" || name == "homog") return Family::HomoG;
    if (name == "Pois" || name == "pois") return Family::Pois;
    if (name == "HetG" || name == "hetg") return Family::HetG;
    if (name == "TG" || name == "tg") return Family::TG;
    if (name == "Lap" || name == "lap") return Family::Lap;
    if (name == "GEns" || name == "gens") return Family::GEns;
    fail("DomainError", "unknown distribution family '" + name + "'");
}

int family_param_count(Family f) {
    switch (f) {
        case Family::HomoG:
        case Family::Pois: return 1;
        default: return 2;
    }
}

namespace {
constexpr double kSigmaFloor = 1e-3;
constexpr double kLambdaFloor = 1e-6;

bool is_integer(double y) { return std::floor(y) == y; }

void check_targets(Family family, std::span<const double> y) {
    for (double v : y) {
        require(std::isfinite(v), "NonFinite", "non-finite target value");
        if (family == Family::TG)
            require(v >= 0.0, "DomainError", "TG target below truncation point 0");
        if (family == Family::Pois) {
            require(v >= 0.0, "DomainError", "Poisson target is negative");
            require(is_integer(v), "DomainError", "Poisson target is not an integer");
        }
    }
}

Tensor constant_like(const Tensor& shape_of, std::span<const double> y) {
    return Tensor(shape_of.shape(), std::vector<double>(y.begin(), y.end()));
}
}  // namespace

HeadOutput apply_head_link(Family family, const Tensor& raw_loc, const Tensor& raw_scale,
                           double homog_c) {
    HeadOutput out;
    out.family = family;
    switch (family) {
        case Family::HomoG:
            require(homog_c > 0.0, "DomainError", "HomoG constant c must be positive");
            out.loc = raw_loc;
            out.scale = Tensor::full(raw_loc.shape(), homog_c);
            break;
        case Family::Pois:
            out.loc = add_scalar(softplus_op(raw_loc), kLambdaFloor);
            break;
        case Family::HetG:
        case Family::TG:
        case Family::Lap:
            out.loc = raw_loc;
            out.scale = add_scalar(softplus_op(raw_scale), kSigmaFloor);
            break;
        case Family::GEns:
            fail("DomainError", "GEns parameters come from ensemble(), not a head link");
    }
    return out;
}

Tensor nll(const HeadOutput& head, std::span<const double> y) {
    require(head.loc.defined() && head.loc.size() == y.size(), "ShapeMismatch",
            "nll: target length does not match parameter cells");
    check_targets(head.family, y);
    const Tensor target = constant_like(head.loc, y);
    switch (head.family) {
        case Family::HomoG:
        case Family::HetG: {
            const Tensor z = div_elementwise(sub(head.loc, target), head.scale);
            const Tensor cell = add_scalar(
                add(log_op(head.scale), scalar_mul(square(z), 0.5)), kLogSqrt2Pi);
            return sum(cell);
        }
        case Family::TG: {
            const Tensor z = div_elementwise(sub(head.loc, target), head.scale);
            const Tensor plain = add_scalar(
                add(log_op(head.scale), scalar_mul(square(z), 0.5)), kLogSqrt2Pi);
            // + log Phi(mu/sigma): the left-truncation normalizer 1 - Phi(-mu/sigma)
            const Tensor norm = log_norm_cdf_op(div_elementwise(head.loc, head.scale));
            return sum(add(plain, norm));
        }
        case Family::Lap: {
            const Tensor dev = div_elementwise(abs_op(sub(head.loc, target)), head.scale);
            return sum(add(log_op(scalar_mul(head.scale, 2.0)), dev));
        }
        case Family::Pois: {
            std::vector<double> lg(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) lg[i] = std::lgamma(y[i] + 1.0);
            const Tensor lgamma_term = Tensor(head.loc.shape(), std::move(lg));
            const Tensor cell =
                add(sub(head.loc, mul_elementwise(target, log_op(head.loc))), lgamma_term);
            return sum(cell);
        }
        case Family::GEns:
            fail("DomainError", "use ensemble_nll for GEns");
    }
    fail("DomainError", "unhandled family");
}

Tensor ensemble_nll(const std::vector<HeadOutput>& members, std::span<const double> y) {
    require(!members.empty(), "EmptyEnsemble", "ensemble_nll needs at least one member");
    const double inv_k = 1.0 / static_cast<double>(members.size());
    Tensor mu_sum, m2_sum;
    for (const HeadOutput& m : members) {
        require(m.family == Family::HetG || m.family == Family::HomoG, "DomainError",
                "ensemble members must be Gaussian");
        require(m.loc.size() == y.size(), "ShapeMismatch", "ensemble member size mismatch");
        const Tensor m2 = add(square(m.scale), square(m.loc));
        mu_sum = mu_sum.defined() ? add(mu_sum, m.loc) : m.loc;
        m2_sum = m2_sum.defined() ? add(m2_sum, m2) : m2;
    }
    const Tensor mu_star = scalar_mul(mu_sum, inv_k);
    const Tensor var_star = sub(scalar_mul(m2_sum, inv_k), square(mu_star));
    HeadOutput combined;
    combined.family = Family::HetG;
    combined.loc = mu_star;
    combined.scale = sqrt_op(var_star);
    return nll(combined, y);
}

// ---------------------------------------------------------------------------
// Numeric panels
// ---------------------------------------------------------------------------

void DistParams::validate() const {
    if (family == Family::GEns) {
        require(!members.empty(), "EmptyEnsemble", "GEns panel with no members");
        for (const GaussMember& m : members) {
            require(m.mu.size() == loc.size() && m.sigma.size() == loc.size(), "ShapeMismatch",
                    "ensemble member panel size mismatch");
            for (double s : m.sigma)
                require(s > 0.0, "DomainError", "member sigma must be positive");
        }
    }
    if (family == Family::Pois) {
        for (double l : loc) require(l > 0.0, "DomainError", "lambda must be positive");
        return;
    }
    if (family != Family::GEns)
        require(scale.size() == loc.size(), "ShapeMismatch", "scale panel size mismatch");
    for (double s : scale) require(s > 0.0, "DomainError", "scale must be positive");
}

void append_cells(DistParams& panel, const HeadOutput& head) {
    require(panel.family == head.family, "DomainError", "appending mismatched family");
    auto lv = head.loc.values();
    panel.loc.insert(panel.loc.end(), lv.begin(), lv.end());
    if (head.scale.defined()) {
        auto sv = head.scale.values();
        panel.scale.insert(panel.scale.end(), sv.begin(), sv.end());
    }
}

namespace {

double poisson_log_pmf(double k, double lambda) {
    return k * std::log(lambda) - lambda - std::lgamma(k + 1.0);
}

// P(X <= k) by log-space summation of pmf terms.
double poisson_cdf(double k, double lambda) {
    if (k < 0.0) return 0.0;
    const double kf = std::floor(k);
    double logsum = -std::numeric_limits<double>::infinity();
    for (double i = 0.0; i <= kf; i += 1.0)
        logsum = logaddexp(logsum, poisson_log_pmf(i, lambda));
    return std::min(1.0, std::exp(logsum));
}

struct CellParams {
    double a = 0.0;  // mu or lambda
    double b = 0.0;  // sigma or b
};

CellParams resolved(const DistParams& p, std::size_t cell) {
    CellParams c;
    switch (p.family) {
        case Family::Pois:
            c.a = p.loc[cell];
            break;
        case Family::GEns: {
            // moment-matched Gaussian of the member mixture
            const double inv_k = 1.0 / static_cast<double>(p.members.size());
            double mu = 0.0, m2 = 0.0;
            for (const GaussMember& m : p.members) {
                mu += m.mu[cell];
                m2 += m.sigma[cell] * m.sigma[cell] + m.mu[cell] * m.mu[cell];
            }
            mu *= inv_k;
            m2 *= inv_k;
            c.a = mu;
            c.b = std::sqrt(m2 - mu * mu);
            break;
        }
        default:
            c.a = p.loc[cell];
            c.b = p.scale[cell];
    }
    return c;
}

}  // namespace

double log_pdf(const DistParams& p, std::size_t cell, double y) {
    const CellParams c = resolved(p, cell);
    switch (p.family) {
        case Family::HomoG:
        case Family::HetG:
        case Family::GEns: {
            const double z = (y - c.a) / c.b;
            return -std::log(c.b) - kLogSqrt2Pi - 0.5 * z * z;
        }
        case Family::TG: {
            require(y >= 0.0, "DomainError", "TG target below truncation point 0");
            const double z = (y - c.a) / c.b;
            return -std::log(c.b) - kLogSqrt2Pi - 0.5 * z * z - log_norm_cdf(c.a / c.b);
        }
        case Family::Lap:
            return -std::log(2.0 * c.b) - std::abs(y - c.a) / c.b;
        case Family::Pois:
            require(y >= 0.0 && is_integer(y), "DomainError",
                    "Poisson target must be a nonnegative integer");
            return poisson_log_pmf(y, c.a);
    }
    fail("DomainError", "unhandled family");
}

double nll(const DistParams& p, std::span<const double> y) {
    require(y.size() == p.cells(), "ShapeMismatch", "nll: target length mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) total -= log_pdf(p, i, y[i]);
    return total;
}

double cdf(const DistParams& p, std::size_t cell, double y) {
    const CellParams c = resolved(p, cell);
    switch (p.family) {
        case Family::HomoG:
        case Family::HetG:
        case Family::GEns:
            return norm_cdf((y - c.a) / c.b);
        case Family::TG: {
            if (y < 0.0) return 0.0;
            const double z0 = -c.a / c.b;
            const double mass = norm_cdf(c.a / c.b);  // 1 - Phi(z0)
            return std::min(1.0, (norm_cdf((y - c.a) / c.b) - norm_cdf(z0)) / mass);
        }
        case Family::Lap: {
            const double z = (y - c.a) / c.b;
            return z < 0.0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
        }
        case Family::Pois:
            return poisson_cdf(std::floor(y), c.a);
    }
    fail("DomainError", "unhandled family");
}

double quantile(const DistParams& p, std::size_t cell, double prob) {
    require(prob > 0.0 && prob < 1.0, "POutOfRange",
            "quantile probability must lie in (0, 1)");
    const CellParams c = resolved(p, cell);
    switch (p.family) {
        case Family::HomoG:
        case Family::HetG:
        case Family::GEns:
            return c.a + c.b * norm_quantile(prob);
        case Family::TG: {
            const double z0 = -c.a / c.b;
            const double target = norm_cdf(z0) + prob * norm_cdf(c.a / c.b);
            return std::max(0.0, c.a + c.b * norm_quantile(target));
        }
        case Family::Lap: {
            const double d = prob - 0.5;
            const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            return c.a - c.b * sgn * std::log(1.0 - 2.0 * std::abs(d));
        }
        case Family::Pois: {
            // smallest integer k with CDF(k) >= prob
            double logsum = -std::numeric_limits<double>::infinity();
            const double cap = c.a + 40.0 * std::sqrt(c.a) + 1000.0;
            for (double k = 0.0; k <= cap; k += 1.0) {
                logsum = logaddexp(logsum, poisson_log_pmf(k, c.a));
                if (std::exp(logsum) >= prob) return k;
            }
            return cap;
        }
    }
    fail("DomainError", "unhandled family");
}

double point_prediction(const DistParams& p, std::size_t cell, TgPointRule tg_rule) {
    const CellParams c = resolved(p, cell);
    switch (p.family) {
        case Family::HomoG:
        case Family::HetG:
        case Family::Lap:
        case Family::GEns:
            return c.a;
        case Family::Pois:
            return c.a;
        case Family::TG:
            if (tg_rule == TgPointRule::Location) return c.a;
            // E[Y] = mu + sigma * phi(mu/sigma) / Phi(mu/sigma)
            return c.a + c.b * norm_hazard(c.a / c.b);
    }
    fail("DomainError", "unhandled family");
}

double sample(const DistParams& p, std::size_t cell, RngStream& rng) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    return quantile(p, cell, u);
}

DistParams ensemble(const std::vector<GaussMember>& members) {
    require(!members.empty(), "EmptyEnsemble", "ensemble of zero members");
    const std::size_t n = members.front().mu.size();
    for (const GaussMember& m : members)
        require(m.mu.size() == n && m.sigma.size() == n, "ShapeMismatch",
                "ensemble member panels differ in size");
    DistParams out;
    out.family = Family::GEns;
    out.members = members;
    out.loc.resize(n);
    out.scale.resize(n);
    const double inv_k = 1.0 / static_cast<double>(members.size());
    for (std::size_t i = 0; i < n; ++i) {
        double mu = 0.0, m2 = 0.0;
        for (const GaussMember& m : members) {
            mu += m.mu[i];
            m2 += m.sigma[i] * m.sigma[i] + m.mu[i] * m.mu[i];
        }
        mu *= inv_k;
        m2 *= inv_k;
        out.loc[i] = mu;
        out.scale[i] = std::sqrt(m2 - mu * mu);
    }
    return out;
}

UncertaintyDecomposition decompose_uncertainty(const std::vector<GaussMember>& members) {
    require(members.size() >= 2, "EmptyEnsemble",
            "uncertainty decomposition needs at least 2 members");
    const std::size_t n = members.front().mu.size();
    for (const GaussMember& m : members)
        require(m.mu.size() == n && m.sigma.size() == n, "ShapeMismatch",
                "ensemble member panels differ in size");
    UncertaintyDecomposition out;
    out.model_var.resize(n);
    out.data_var.resize(n);
    out.total_var.resize(n);
    const double inv_k = 1.0 / static_cast<double>(members.size());
    for (std::size_t i = 0; i < n; ++i) {
        double mu = 0.0;
        for (const GaussMember& m : members) mu += m.mu[i];
        mu *= inv_k;
        double model = 0.0, data = 0.0;
        for (const GaussMember& m : members) {
            model += (m.mu[i] - mu) * (m.mu[i] - mu);
            data += m.sigma[i] * m.sigma[i];
        }
        out.model_var[i] = model * inv_k;
        out.data_var[i] = data * inv_k;
        out.total_var[i] = out.model_var[i] + out.data_var[i];
    }
    return out;
}

GaussMember as_member(const DistParams& p) {
    require(p.family == Family::HetG || p.family == Family::HomoG, "DomainError",
            "only Gaussian panels can join an ensemble");
    return GaussMember{p.loc, p.scale};
}

}  // namespace probgnn
