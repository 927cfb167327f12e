#pragma once

#include "popmort/types.hpp"

#include <iosfwd>
#include <map>

namespace popmort {

struct PopulationData {
    Matrix rates;     // n years x p ages, central death rates
    Matrix exposures; // n years x p ages
    std::vector<CellFlag> flags;
};

struct HierarchyNode {
    std::string label; // population key ("UK/female") or group name
    std::vector<HierarchyNode> children;

    bool leaf() const { return children.empty(); }
};

/// Immutable after construction. Years are contiguous; all matrices share n x p.
struct MortalityDataset {
    AgeGrid grid;
    int first_year = 0;
    std::vector<std::pair<PopulationLabel, PopulationData>> populations;
    HierarchyNode hierarchy;

    int n_years() const {
        return populations.empty() ? 0 : static_cast<int>(populations.front().second.rates.rows());
    }
    std::vector<int> years() const;

    const PopulationData* find(const PopulationLabel& label) const;
    const PopulationData* find(const std::string& key) const;
    const PopulationLabel* find_label(const std::string& key) const;

    void validate() const;
};

enum class HmdKind { rates, exposures };

/// One parsed HMD-style table ("Year Age Female Male Total") on its raw grid.
struct HmdTable {
    AgeGrid grid;
    int first_year = 0;
    Matrix female, male, total;             // NaN where the file had "."
    std::vector<CellFlag> missing[3];       // indexed like the matrices above
};

/// Parse a whitespace-delimited HMD table. Missing values are "."; the age
/// column holds integers or "NN+" for the terminal open group. Throws
/// DataError with a line number on malformed rows and on year gaps.
HmdTable parse_hmd_table(std::istream& in, HmdKind kind);

/// Collapse all age groups at or above `cap` into a single open-ended group.
/// Rates are combined by exposure weighting (sum of deaths over sum of
/// exposure); exposures are summed.
void aggregate_open_age(HmdTable& rates, HmdTable& exposures, double cap);

struct LoadOptions {
    double age_cap = 95.0;
    bool impute_nonpositive = true;
};

/// Build a validated dataset from matched HMD rate/exposure files, one pair
/// per named group. Zero or missing rates are imputed as the minimum positive
/// rate seen for that age across years and flagged.
MortalityDataset load_hmd_dataset(const std::vector<std::string>& rate_files,
                                  const std::vector<std::string>& exposure_files,
                                  const std::vector<std::string>& names,
                                  const std::string& hierarchy_file = {},
                                  const LoadOptions& opts = {});

/// Canonical CSV: population,sex,region,year,age,rate,exposure ('.' = missing).
MortalityDataset load_csv_dataset(std::istream& in, const std::string& hierarchy_file = {},
                                  const LoadOptions& opts = {});
MortalityDataset load_csv_dataset_file(const std::string& path,
                                       const std::string& hierarchy_file = {},
                                       const LoadOptions& opts = {});
void write_csv_dataset(std::ostream& out, const MortalityDataset& ds);

HierarchyNode parse_hierarchy_json(const std::string& text);
HierarchyNode load_hierarchy_file(const std::string& path);

/// Single-node fallback (one population) or a flat root over sex-specific leaves.
HierarchyNode default_hierarchy(const std::vector<std::pair<PopulationLabel, PopulationData>>& pops);

} // namespace popmort
