#include "transport/dists.hpp"

#include "transport/errors.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace transport {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

namespace {

std::uint64_t stream_key(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream ^ 0xD1B54A32D192ED03ULL));
}

}  // namespace

SeededRng::SeededRng(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_seed_(master_seed),
      stream_id_(stream_id),
      key_(stream_key(master_seed, stream_id)),
      engine_(key_) {}

std::uint64_t SeededRng::derive_seed(std::uint64_t id) const { return stream_key(key_, id); }

double SeededRng::uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

double SeededRng::normal() {
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("SeededRng::below: n must be positive");
    // Lemire's multiply-shift with rejection.
    unsigned __int128 m = (unsigned __int128)engine_() * n;
    auto low = std::uint64_t(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = (unsigned __int128)engine_() * n;
            low = std::uint64_t(m);
        }
    }
    return std::uint64_t(m >> 64);
}

Trapezoid::Trapezoid(double min_, double mode1_, double mode2_, double max_)
    : min(min_), mode1(mode1_), mode2(mode2_), max(max_) {
    if (!(std::isfinite(min) && std::isfinite(max))) throw DataError("trapezoid: bounds must be finite");
    if (!(min <= mode1 && mode1 <= mode2 && mode2 <= max)) {
        throw DataError("trapezoid: require min <= mode1 <= mode2 <= max");
    }
    if (!(min < max)) throw DataError("trapezoid: require min < max");
}

double Trapezoid::cdf(double x) const {
    const double h = height();
    if (x <= min) return 0.0;
    if (x >= max) return 1.0;
    if (x < mode1) return h * (x - min) * (x - min) / (2.0 * (mode1 - min));
    if (x <= mode2) return h * (0.5 * (mode1 - min) + (x - mode1));
    return 1.0 - h * (max - x) * (max - x) / (2.0 * (max - mode2));
}

double Trapezoid::quantile(double u) const {
    const double h = height();
    const double rise = 0.5 * h * (mode1 - min);
    const double flat = rise + h * (mode2 - mode1);
    if (u <= rise && mode1 > min) return min + std::sqrt(2.0 * u * (mode1 - min) / h);
    if (u <= flat) return mode1 + (u - rise) / h;
    return max - std::sqrt(2.0 * (1.0 - u) * (max - mode2) / h);
}

double Trapezoid::mean() const {
    // E[X] = (d^2 + cd + c^2 - a^2 - ab - b^2) / (3 (d + c - a - b))
    const double a = min, b = mode1, c = mode2, d = max;
    return (d * d + c * d + c * c - a * a - a * b - b * b) / (3.0 * (d + c - a - b));
}

Normal::Normal(double mu_, double sigma_) : mu(mu_), sigma(sigma_) {
    if (!std::isfinite(mu) || !std::isfinite(sigma)) throw DataError("normal: parameters must be finite");
    if (sigma < 0.0) throw DataError("normal: sigma must be non-negative");
}

MultivariateNormal::MultivariateNormal(Eigen::VectorXd mu_, Eigen::MatrixXd cov_)
    : mu(std::move(mu_)), cov(std::move(cov_)) {
    const Eigen::Index d = mu.size();
    if (d == 0) throw DataError("multivariate normal: empty mean");
    if (cov.rows() != d || cov.cols() != d) throw DataError("multivariate normal: covariance shape mismatch");
    if (!mu.allFinite() || !cov.allFinite()) throw DataError("multivariate normal: parameters must be finite");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
        throw DataError("multivariate normal: covariance is not symmetric");
    }
    const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    if (llt.info() == Eigen::Success) {
        factor = llt.matrixL();
        return;
    }
    // Positive semi-definite but singular: pivoted LDL^T with a non-negative D.
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sym);
    const Eigen::VectorXd diag = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || diag.minCoeff() < -1e-12 * scale) {
        throw DataError("multivariate normal: Cholesky factorization failed, covariance is not positive "
                        "semi-definite");
    }
    const Eigen::MatrixXd l = ldlt.matrixL();
    const Eigen::VectorXd root = diag.cwiseMax(0.0).cwiseSqrt();
    factor = ldlt.transpositionsP().transpose() * (l * root.asDiagonal());
}

Eigen::Index dimension(const ParameterDistribution& dist) {
    if (const auto* mvn = std::get_if<MultivariateNormal>(&dist)) return mvn->dimension();
    return 1;
}

std::string describe(const ParameterDistribution& dist) {
    std::ostringstream os;
    std::visit(
        [&os](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                os << "PointMass(" << d.value << ")";
            } else if constexpr (std::is_same_v<T, Trapezoid>) {
                os << "Trapezoid(" << d.min << ", " << d.mode1 << ", " << d.mode2 << ", " << d.max << ")";
            } else if constexpr (std::is_same_v<T, Normal>) {
                os << "Normal(" << d.mu << ", " << d.sigma << ")";
            } else {
                os << "MultivariateNormal(d=" << d.dimension() << ")";
            }
        },
        dist);
    return os.str();
}

double sample(const Trapezoid& dist, SeededRng& rng) { return dist.quantile(rng.uniform()); }

double sample(const Normal& dist, SeededRng& rng) { return dist.mu + dist.sigma * rng.normal(); }

Eigen::VectorXd sample(const MultivariateNormal& dist, SeededRng& rng) {
    Eigen::VectorXd z(dist.dimension());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return dist.mu + dist.factor * z;
}

Eigen::VectorXd sample(const ParameterDistribution& dist, SeededRng& rng) {
    if (const auto* mvn = std::get_if<MultivariateNormal>(&dist)) return sample(*mvn, rng);
    return Eigen::VectorXd::Constant(1, sample_scalar(dist, rng));
}

double sample_scalar(const ParameterDistribution& dist, SeededRng& rng) {
    return std::visit(
        [&rng](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                return d.value;
            } else if constexpr (std::is_same_v<T, MultivariateNormal>) {
                if (d.dimension() != 1) throw std::invalid_argument("sample_scalar: multivariate law");
                return sample(d, rng)(0);
            } else {
                return sample(d, rng);
            }
        },
        dist);
}

std::vector<Eigen::Index> resample_indices(Eigen::Index n, SeededRng& rng) {
    if (n < 1) throw std::invalid_argument("resample_indices: n must be at least 1");
    std::vector<Eigen::Index> out(static_cast<std::size_t>(n));
    for (auto& idx : out) idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    return out;
}

}  // namespace transport
