#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "cdssd/bases.hpp"
#include "cdssd/common.hpp"
#include "cdssd/inference.hpp"

namespace cdssd {

/// tau value meaning "no change".
inline constexpr long kNoChange = std::numeric_limits<long>::max();

struct ChangeComponent {
    int basis_index = 0;  ///< 0-based column of B_a
    double phi = 0.0;     ///< magnitude
};

/// A synthetic experiment: dictionary, model configuration, and change.
struct Scenario {
    std::string name;
    BasisDictionary dict;
    ModelConfig cfg;
    long tau = kNoChange;  ///< last pre-change step; the change is present for t > tau
    std::vector<ChangeComponent> change;
    int horizon = 2000;
    bool random_change_basis = false;  ///< redraw the (single) change basis per replication
    double arl0_target = 0.0;          ///< 0 when not set

    /// Throws ConfigError on inconsistent fields.
    void validate() const;

    /// True when the stream never leaves the normal regime.
    bool is_null() const;
};

/// Draws one stream step by step. Steps are numbered from 1.
class StreamGenerator {
public:
    StreamGenerator(const Scenario& sc, std::uint64_t rep_seed);

    /// X_t for the next t.
    Vector next();

    long step() const { return t_; }

    /// True anomaly coefficients applied after tau.
    const Vector& theta_a() const { return theta_a_; }

private:
    const Scenario* sc_;
    Rng rng_;
    long t_ = 0;
    Vector theta_a_;
    Vector shift_;  ///< B_a theta_a
};

/// First `length` steps (horizon when length < 0) as rows of a length x p matrix.
Matrix gen_stream(const Scenario& sc, std::uint64_t rep_seed, long length = -1);

/// Coordinates of x listed in z, in order.
Vector partial_view(const Vector& x, const IndexSet& z);

/// CSV with header t,x1..xp and one row per step.
void write_stream_csv(std::ostream& os, const Matrix& rows);

/// Inverse of write_stream_csv. Empty cells and "nan" become NaN (missing).
/// Lines starting with '#' are skipped.
Matrix read_stream_csv(std::istream& is);

}  // namespace cdssd
