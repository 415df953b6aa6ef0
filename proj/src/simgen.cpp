#include "cdssd/simgen.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "cdssd/errors.hpp"

namespace cdssd {

void Scenario::validate() const {
    cfg.validate(dict.p(), dict.k_a());
    if (horizon < 1) throw ConfigError("horizon must be positive");
    if (tau != kNoChange && (tau < 0 || tau >= horizon)) throw ConfigError("tau must lie in [0, horizon) or be absent");
    for (const auto& c : change) {
        if (c.basis_index < 0 || c.basis_index >= dict.k_a())
            throw ConfigError("change basis index " + std::to_string(c.basis_index) + " outside [0, k_a)");
        if (!std::isfinite(c.phi)) throw ConfigError("change magnitude must be finite");
    }
    if (random_change_basis && change.size() != 1)
        throw ConfigError("a randomly placed change needs exactly one change component");
    if (arl0_target < 0.0) throw ConfigError("arl0_target must be nonnegative");
}

bool Scenario::is_null() const {
    if (tau == kNoChange || change.empty()) return true;
    for (const auto& c : change)
        if (c.phi != 0.0) return false;
    return true;
}

StreamGenerator::StreamGenerator(const Scenario& sc, std::uint64_t rep_seed) : sc_(&sc), rng_(rep_seed) {
    theta_a_ = Vector::Zero(sc.dict.k_a());
    // the basis draw happens even for a null change so that streams differing
    // only in magnitude share every subsequent random number
    int random_j = 0;
    if (sc.random_change_basis) {
        std::uniform_int_distribution<int> pick(0, sc.dict.k_a() - 1);
        random_j = pick(rng_);
    }
    for (const auto& c : sc.change) theta_a_(sc.random_change_basis ? random_j : c.basis_index) += c.phi;
    shift_ = sc.dict.b_a() * theta_a_;
}

Vector StreamGenerator::next() {
    ++t_;
    const auto& d = sc_->dict;
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector theta(d.k_b());
    for (int j = 0; j < d.k_b(); ++j) theta(j) = sc_->cfg.sigma_b * gauss(rng_);
    Vector x = d.k_b() > 0 ? Vector(d.b_b() * theta) : Vector(Vector::Zero(d.p()));
    for (int i = 0; i < d.p(); ++i) x(i) += sc_->cfg.sigma_e * gauss(rng_);
    if (sc_->tau != kNoChange && t_ > sc_->tau) x += shift_;
    return x;
}

Matrix gen_stream(const Scenario& sc, std::uint64_t rep_seed, long length) {
    const long n = length < 0 ? sc.horizon : length;
    StreamGenerator gen(sc, rep_seed);
    Matrix rows(n, sc.dict.p());
    for (long t = 0; t < n; ++t) rows.row(t) = gen.next().transpose();
    return rows;
}

Vector partial_view(const Vector& x, const IndexSet& z) {
    Vector out(static_cast<Eigen::Index>(z.size()));
    for (std::size_t r = 0; r < z.size(); ++r) {
        if (z[r] < 0 || z[r] >= x.size())
            throw IndexError("index " + std::to_string(z[r]) + " outside [0, " + std::to_string(x.size()) + ")");
        out(static_cast<Eigen::Index>(r)) = x(z[r]);
    }
    return out;
}

void write_stream_csv(std::ostream& os, const Matrix& rows) {
    os << 't';
    for (Eigen::Index i = 0; i < rows.cols(); ++i) os << ",x" << i + 1;
    os << '\n' << std::setprecision(17);
    for (Eigen::Index t = 0; t < rows.rows(); ++t) {
        os << t + 1;
        for (Eigen::Index i = 0; i < rows.cols(); ++i) {
            os << ',';
            if (!std::isnan(rows(t, i))) os << rows(t, i);
        }
        os << '\n';
    }
}

Matrix read_stream_csv(std::istream& is) {
    std::string line;
    long p = -1;
    std::vector<std::vector<double>> data;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (p < 0) {
            if (cells.empty() || cells[0] != "t") throw DataError("stream CSV: header must start with 't'");
            p = static_cast<long>(cells.size()) - 1;
            if (p < 1) throw DataError("stream CSV: no variable columns");
            continue;
        }
        if (static_cast<long>(cells.size()) != p + 1)
            throw DataError("stream CSV line " + std::to_string(lineno) + ": expected " + std::to_string(p + 1) + " cells");
        std::vector<double> row(static_cast<std::size_t>(p));
        for (long i = 0; i < p; ++i) {
            const std::string& s = cells[static_cast<std::size_t>(i + 1)];
            if (s.empty() || s == "nan" || s == "NaN" || s == "NA") {
                row[static_cast<std::size_t>(i)] = std::nan("");
                continue;
            }
            try {
                std::size_t used = 0;
                row[static_cast<std::size_t>(i)] = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
            } catch (const std::exception&) {
                throw DataError("stream CSV line " + std::to_string(lineno) + ": bad value '" + s + "'");
            }
        }
        data.push_back(std::move(row));
    }
    if (p < 0) throw DataError("stream CSV: missing header");
    Matrix out(static_cast<Eigen::Index>(data.size()), p);
    for (std::size_t t = 0; t < data.size(); ++t)
        for (long i = 0; i < p; ++i) out(static_cast<Eigen::Index>(t), i) = data[t][static_cast<std::size_t>(i)];
    return out;
}

}  // namespace cdssd
