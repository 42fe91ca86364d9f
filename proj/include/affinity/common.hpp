#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace affinity {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

enum class MarketKind { unipartite, bipartite };

inline const char* to_string(MarketKind kind) {
    return kind == MarketKind::unipartite ? "unipartite" : "bipartite";
}

// Error hierarchy. The CLI maps DataError to exit code 2 and
// ConvergenceError to exit code 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

// Deterministic random stream. std:: distributions are implementation
// defined, so uniforms and normals are derived here from the raw engine
// output to keep generated files byte-identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next();
    double uniform();  // [0, 1)
    double normal();
    std::size_t below(std::size_t n);
    bool coin() { return (next() >> 63) != 0; }

private:
    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace affinity
