#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace popmort {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thrown for malformed inputs, mismatched files, unknown labels.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown for invalid configuration or arguments.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown when a numerical routine fails to converge or degenerates.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Centers of the age groups, strictly increasing. The final group may be
/// open-ended ("95+"), in which case its value is the lower bound of the group.
struct AgeGrid {
    std::vector<double> ages;
    bool open_ended_last = false;

    AgeGrid() = default;
    AgeGrid(std::vector<double> a, bool open_last) : ages(std::move(a)), open_ended_last(open_last) {
        validate();
    }

    std::size_t size() const { return ages.size(); }

    void validate() const {
        if (ages.size() < 2) throw DataError("age grid needs at least two ages");
        for (std::size_t i = 1; i < ages.size(); ++i) {
            if (!(ages[i] > ages[i - 1])) throw DataError("age grid must be strictly increasing");
        }
    }

    /// Trapezoidal quadrature weights over the grid; these define the inner
    /// product used throughout the functional decompositions.
    Vector quadrature_weights() const {
        const auto p = ages.size();
        Vector w(p);
        w[0] = (ages[1] - ages[0]) / 2.0;
        for (std::size_t i = 1; i + 1 < p; ++i) w[i] = (ages[i + 1] - ages[i - 1]) / 2.0;
        w[p - 1] = (ages[p - 1] - ages[p - 2]) / 2.0;
        return w;
    }

    bool operator==(const AgeGrid&) const = default;
};

enum class Sex { female, male, total };

std::string to_string(Sex s);
Sex sex_from_string(const std::string& s);

struct PopulationLabel {
    std::string name;
    Sex sex = Sex::total;
    std::optional<std::string> region;

    std::string key() const {
        std::string k = name + "/" + to_string(sex);
        if (region) k += "/" + *region;
        return k;
    }

    bool operator==(const PopulationLabel&) const = default;
    auto operator<=>(const PopulationLabel&) const = default;
};

enum class CellReason { zero_rate, missing, imputed };

struct CellFlag {
    int year = 0;
    std::size_t age_index = 0;
    CellReason reason = CellReason::missing;
};

} // namespace popmort
