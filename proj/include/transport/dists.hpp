#pragma once
// Seeded random streams and the parameter distributions used for simulation
// models, covariate laws and Monte Carlo draws.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace transport {

// A reproducible random stream identified by (master_seed, stream_id).
//
// The engine is std::mt19937_64, whose output sequence is fixed by the standard.
// Uniform, normal and integer transforms are implemented here rather than with
// the <random> distribution classes, whose algorithms are implementation-defined.
// Child streams are derived by hashing, so stream(i) of a given rng is the same
// regardless of how many draws the parent has made.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t master_seed, std::uint64_t stream_id = 0);

    std::uint64_t master_seed() const noexcept { return master_seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    SeededRng stream(std::uint64_t id) const { return SeededRng(key_, id); }
    // 64-bit seed for handing to components that take a master seed.
    std::uint64_t derive_seed(std::uint64_t id) const;

    std::uint64_t next_u64() { return engine_(); }
    double uniform();               // [0, 1), 53-bit resolution
    double normal();                // standard normal, Marsaglia polar method
    bool bernoulli(double p) { return uniform() < p; }
    std::uint64_t below(std::uint64_t n);  // uniform on {0, ..., n-1}, unbiased

private:
    std::uint64_t master_seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

struct PointMass {
    double value = 0.0;
};

// Piecewise-linear density rising on [min, mode1], flat on [mode1, mode2],
// falling on [mode2, max]. Degenerate edges (min == mode1, mode2 == max) are allowed.
struct Trapezoid {
    double min, mode1, mode2, max;

    Trapezoid(double min, double mode1, double mode2, double max);

    double height() const { return 2.0 / (max + mode2 - mode1 - min); }
    double cdf(double x) const;
    double quantile(double u) const;
    double mean() const;
};

struct Normal {
    double mu, sigma;
    Normal(double mu, double sigma);
};

struct MultivariateNormal {
    Eigen::VectorXd mu;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd factor;  // factor * factor^T == cov

    MultivariateNormal(Eigen::VectorXd mu, Eigen::MatrixXd cov);
    Eigen::Index dimension() const { return mu.size(); }
};

using ParameterDistribution = std::variant<PointMass, Trapezoid, Normal, MultivariateNormal>;

Eigen::Index dimension(const ParameterDistribution& dist);
std::string describe(const ParameterDistribution& dist);

double sample(const Trapezoid& dist, SeededRng& rng);
double sample(const Normal& dist, SeededRng& rng);
Eigen::VectorXd sample(const MultivariateNormal& dist, SeededRng& rng);
Eigen::VectorXd sample(const ParameterDistribution& dist, SeededRng& rng);
// For one-dimensional laws; throws std::invalid_argument on a multivariate law.
double sample_scalar(const ParameterDistribution& dist, SeededRng& rng);

// n draws with replacement from {0, ..., n-1}.
std::vector<Eigen::Index> resample_indices(Eigen::Index n, SeededRng& rng);

}  // namespace transport
