#include "popmort/dataset.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace popmort {

using json = nlohmann::json;

std::string to_string(Sex s) {
    switch (s) {
        case Sex::female: return "female";
        case Sex::male: return "male";
        case Sex::total: return "total";
    }
    return "total";
}

Sex sex_from_string(const std::string& s) {
    if (s == "female" || s == "f" || s == "F") return Sex::female;
    if (s == "male" || s == "m" || s == "M") return Sex::male;
    if (s == "total" || s == "t" || s == "T") return Sex::total;
    throw DataError("unknown sex token: " + s);
}

std::vector<int> MortalityDataset::years() const {
    std::vector<int> ys(static_cast<std::size_t>(n_years()));
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = first_year + static_cast<int>(i);
    return ys;
}

const PopulationData* MortalityDataset::find(const PopulationLabel& label) const {
    for (const auto& [l, d] : populations)
        if (l == label) return &d;
    return nullptr;
}

const PopulationData* MortalityDataset::find(const std::string& key) const {
    for (const auto& [l, d] : populations)
        if (l.key() == key) return &d;
    return nullptr;
}

const PopulationLabel* MortalityDataset::find_label(const std::string& key) const {
    for (const auto& [l, d] : populations)
        if (l.key() == key) return &l;
    return nullptr;
}

namespace {

void collect_leaves(const HierarchyNode& node, std::vector<std::string>& out) {
    if (node.leaf()) {
        out.push_back(node.label);
        return;
    }
    for (const auto& c : node.children) collect_leaves(c, out);
}

void check_hierarchy_labels(const HierarchyNode& node, const MortalityDataset& ds, bool is_root) {
    if (!is_root || node.leaf()) {
        // Interior group names need not be populations, but leaves must be.
        if (node.leaf() && ds.find(node.label) == nullptr)
            throw DataError("hierarchy references unknown population: " + node.label);
    }
    for (const auto& c : node.children) check_hierarchy_labels(c, ds, false);
}

} // namespace

void MortalityDataset::validate() const {
    grid.validate();
    if (populations.empty()) throw DataError("dataset has no populations");
    const auto n = populations.front().second.rates.rows();
    const auto p = static_cast<Eigen::Index>(grid.size());
    std::set<std::string> keys;
    for (const auto& [label, data] : populations) {
        if (!keys.insert(label.key()).second)
            throw DataError("duplicate population label: " + label.key());
        if (data.rates.rows() != n || data.rates.cols() != p ||
            data.exposures.rows() != n || data.exposures.cols() != p)
            throw DataError("matrix shape mismatch for population " + label.key());
        if ((data.exposures.array() <= 0.0).any())
            throw DataError("nonpositive exposure in population " + label.key());
    }
    check_hierarchy_labels(hierarchy, *this, true);
    std::vector<std::string> leaves;
    collect_leaves(hierarchy, leaves);
    std::set<std::string> leaf_set(leaves.begin(), leaves.end());
    if (leaf_set.size() != leaves.size()) throw DataError("hierarchy leaves are not distinct");
    if (populations.size() > 1) {
        for (const auto& [label, data] : populations) {
            if (label.sex == Sex::total) continue;
            if (!leaf_set.count(label.key()))
                throw DataError("population missing from hierarchy leaves: " + label.key());
        }
    }
}

// ---------------------------------------------------------------------------
// HMD tables

namespace {

struct AgeToken {
    double age;
    bool open;
};

AgeToken parse_age_token(const std::string& tok, int line_no) {
    bool open = false;
    std::string t = tok;
    if (!t.empty() && t.back() == '+') {
        open = true;
        t.pop_back();
    }
    try {
        std::size_t pos = 0;
        const double a = std::stod(t, &pos);
        if (pos != t.size()) throw std::invalid_argument(t);
        return {a, open};
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": bad age token '" + tok + "'");
    }
}

double parse_cell(const std::string& tok, int line_no) {
    if (tok == ".") return std::numeric_limits<double>::quiet_NaN();
    try {
        std::size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": bad numeric cell '" + tok + "'");
    }
}

} // namespace

HmdTable parse_hmd_table(std::istream& in, HmdKind) {
    struct Row {
        int year;
        double age;
        bool open;
        double v[3];
    };
    std::vector<Row> rows;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::string> toks;
        std::string t;
        while (ls >> t) toks.push_back(t);
        if (toks.empty()) continue;
        if (!header_seen) {
            // Skip title/blank lines until the "Year Age ..." header.
            if (toks[0] == "Year") {
                if (toks.size() < 5 || toks[1] != "Age")
                    throw DataError("line " + std::to_string(line_no) + ": unexpected header");
                header_seen = true;
            }
            continue;
        }
        if (toks.size() != 5)
            throw DataError("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                            std::to_string(toks.size()));
        Row r{};
        try {
            r.year = std::stoi(toks[0]);
        } catch (const std::exception&) {
            throw DataError("line " + std::to_string(line_no) + ": bad year '" + toks[0] + "'");
        }
        const auto at = parse_age_token(toks[1], line_no);
        r.age = at.age;
        r.open = at.open;
        for (int j = 0; j < 3; ++j) r.v[j] = parse_cell(toks[2 + j], line_no);
        rows.push_back(r);
    }
    if (!header_seen) throw DataError("no 'Year Age Female Male Total' header found");
    if (rows.empty()) throw DataError("table has no data rows");

    // Grid from the first year's block.
    std::vector<double> ages;
    bool open_last = false;
    const int y0 = rows.front().year;
    for (const auto& r : rows) {
        if (r.year != y0) break;
        ages.push_back(r.age);
        open_last = r.open;
    }
    const std::size_t p = ages.size();
    if (rows.size() % p != 0) throw DataError("ragged table: incomplete year block");
    const std::size_t n = rows.size() / p;

    HmdTable tab;
    tab.grid = AgeGrid(ages, open_last);
    tab.first_year = y0;
    tab.female = Matrix::Zero(n, p);
    tab.male = Matrix::Zero(n, p);
    tab.total = Matrix::Zero(n, p);
    Matrix* mats[3] = {&tab.female, &tab.male, &tab.total};

    for (std::size_t idx = 0; idx < rows.size(); ++idx) {
        const auto& r = rows[idx];
        const std::size_t ti = idx / p, ai = idx % p;
        if (r.year != y0 + static_cast<int>(ti))
            throw DataError("non-contiguous or unordered years at year " + std::to_string(r.year));
        if (r.age != ages[ai])
            throw DataError("inconsistent age grid at year " + std::to_string(r.year));
        for (int j = 0; j < 3; ++j) {
            (*mats[j])(ti, ai) = r.v[j];
            if (std::isnan(r.v[j]))
                tab.missing[j].push_back({r.year, ai, CellReason::missing});
        }
    }
    return tab;
}

void aggregate_open_age(HmdTable& rates, HmdTable& exposures, double cap) {
    if (!(rates.grid == exposures.grid) || rates.first_year != exposures.first_year ||
        rates.female.rows() != exposures.female.rows())
        throw DataError("rates/exposures tables do not align");
    const auto& ages = rates.grid.ages;
    std::size_t cut = ages.size();
    for (std::size_t i = 0; i < ages.size(); ++i) {
        if (ages[i] >= cap) {
            cut = i;
            break;
        }
    }
    if (cut >= ages.size()) return; // nothing above the cap

    const auto n = rates.female.rows();
    const std::size_t p_new = cut + 1;
    std::vector<double> new_ages(ages.begin(), ages.begin() + cut);
    new_ages.push_back(cap);

    Matrix* rm[3] = {&rates.female, &rates.male, &rates.total};
    Matrix* em[3] = {&exposures.female, &exposures.male, &exposures.total};
    for (int j = 0; j < 3; ++j) {
        Matrix r_new(n, p_new), e_new(n, p_new);
        r_new.leftCols(cut) = rm[j]->leftCols(cut);
        e_new.leftCols(cut) = em[j]->leftCols(cut);
        for (Eigen::Index t = 0; t < n; ++t) {
            double deaths = 0.0, expo = 0.0;
            for (std::size_t i = cut; i < ages.size(); ++i) {
                const double m = (*rm[j])(t, i), N = (*em[j])(t, i);
                if (std::isnan(m) || std::isnan(N)) continue;
                deaths += m * N;
                expo += N;
            }
            e_new(t, cut) = expo;
            r_new(t, cut) = expo > 0.0 ? deaths / expo : std::numeric_limits<double>::quiet_NaN();
        }
        *rm[j] = r_new;
        *em[j] = e_new;
    }
    rates.grid = AgeGrid(new_ages, true);
    exposures.grid = rates.grid;
    for (int j = 0; j < 3; ++j) {
        auto trim = [&](std::vector<CellFlag>& flags) {
            std::erase_if(flags, [&](const CellFlag& f) { return f.age_index > cut; });
        };
        trim(rates.missing[j]);
        trim(exposures.missing[j]);
    }
}

// ---------------------------------------------------------------------------
// Dataset assembly

namespace {

/// Replace zero/missing rates by the minimum positive rate for that age
/// across years; the log transform downstream needs positivity.
void impute_rates(Matrix& rates, int first_year, std::vector<CellFlag>& flags) {
    const auto n = rates.rows(), p = rates.cols();
    for (Eigen::Index i = 0; i < p; ++i) {
        double min_pos = std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t < n; ++t) {
            const double v = rates(t, i);
            if (v > 0.0 && !std::isnan(v)) min_pos = std::min(min_pos, v);
        }
        for (Eigen::Index t = 0; t < n; ++t) {
            double& v = rates(t, i);
            if (v > 0.0 && !std::isnan(v)) continue;
            if (!std::isfinite(min_pos))
                throw DataError("no positive rate at age index " + std::to_string(i) +
                                "; cannot impute");
            const auto reason = std::isnan(v) ? CellReason::missing : CellReason::zero_rate;
            flags.push_back({first_year + static_cast<int>(t), static_cast<std::size_t>(i), reason});
            v = min_pos;
            flags.push_back({first_year + static_cast<int>(t), static_cast<std::size_t>(i),
                             CellReason::imputed});
        }
    }
}

void impute_exposures(Matrix& expo) {
    // Missing exposures are rare in practice; fall back to the age's mean so
    // validation of strict positivity can still fail loudly on true zeros.
    const auto n = expo.rows(), p = expo.cols();
    for (Eigen::Index i = 0; i < p; ++i) {
        double sum = 0.0;
        int cnt = 0;
        for (Eigen::Index t = 0; t < n; ++t)
            if (!std::isnan(expo(t, i)) && expo(t, i) > 0.0) { sum += expo(t, i); ++cnt; }
        for (Eigen::Index t = 0; t < n; ++t)
            if (std::isnan(expo(t, i))) expo(t, i) = cnt > 0 ? sum / cnt : 0.0;
    }
}

HierarchyNode hierarchy_or_default(const std::string& hierarchy_file,
                                   const std::vector<std::pair<PopulationLabel, PopulationData>>& pops) {
    if (!hierarchy_file.empty()) return load_hierarchy_file(hierarchy_file);
    return default_hierarchy(pops);
}

} // namespace

HierarchyNode default_hierarchy(const std::vector<std::pair<PopulationLabel, PopulationData>>& pops) {
    HierarchyNode root;
    if (pops.size() == 1) {
        root.label = pops.front().first.key();
        return root;
    }
    root.label = "all";
    // Group sex-specific leaves under their total when regions share a name.
    std::vector<std::string> groups;
    for (const auto& [l, d] : pops) {
        const std::string g = l.region ? l.name + "/" + *l.region : l.name;
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
    for (const auto& g : groups) {
        HierarchyNode node;
        node.label = g;
        for (const auto& [l, d] : pops) {
            const std::string lg = l.region ? l.name + "/" + *l.region : l.name;
            if (lg == g && l.sex != Sex::total) node.children.push_back({l.key(), {}});
        }
        if (node.children.empty()) continue;
        root.children.push_back(std::move(node));
    }
    if (root.children.size() == 1) return root.children.front();
    if (root.children.empty()) {
        for (const auto& [l, d] : pops) root.children.push_back({l.key(), {}});
    }
    return root;
}

MortalityDataset load_hmd_dataset(const std::vector<std::string>& rate_files,
                                  const std::vector<std::string>& exposure_files,
                                  const std::vector<std::string>& names,
                                  const std::string& hierarchy_file, const LoadOptions& opts) {
    if (rate_files.size() != exposure_files.size() || rate_files.empty())
        throw ConfigError("need matching, non-empty rate and exposure file lists");
    if (!names.empty() && names.size() != rate_files.size())
        throw ConfigError("names list must match the file lists");

    MortalityDataset ds;
    for (std::size_t f = 0; f < rate_files.size(); ++f) {
        std::ifstream rs(rate_files[f]);
        if (!rs) throw DataError("cannot open " + rate_files[f]);
        std::ifstream es(exposure_files[f]);
        if (!es) throw DataError("cannot open " + exposure_files[f]);
        HmdTable rates = parse_hmd_table(rs, HmdKind::rates);
        HmdTable expo = parse_hmd_table(es, HmdKind::exposures);
        if (!(rates.grid == expo.grid))
            throw DataError("age grid mismatch between " + rate_files[f] + " and " + exposure_files[f]);
        if (rates.first_year != expo.first_year || rates.female.rows() != expo.female.rows())
            throw DataError("year range mismatch between " + rate_files[f] + " and " +
                            exposure_files[f]);
        aggregate_open_age(rates, expo, opts.age_cap);

        const std::string name = names.empty() ? "pop" + std::to_string(f) : names[f];
        const Sex sexes[3] = {Sex::female, Sex::male, Sex::total};
        const Matrix* rm[3] = {&rates.female, &rates.male, &rates.total};
        const Matrix* em[3] = {&expo.female, &expo.male, &expo.total};
        if (f == 0) {
            ds.grid = rates.grid;
            ds.first_year = rates.first_year;
        } else if (!(ds.grid == rates.grid) || ds.first_year != rates.first_year ||
                   ds.populations.front().second.rates.rows() != rm[0]->rows()) {
            throw DataError("file group " + name + " does not align with the first group");
        }
        for (int j = 0; j < 3; ++j) {
            PopulationData pd;
            pd.rates = *rm[j];
            pd.exposures = *em[j];
            impute_exposures(pd.exposures);
            if (opts.impute_nonpositive) impute_rates(pd.rates, ds.first_year, pd.flags);
            ds.populations.push_back({PopulationLabel{name, sexes[j], std::nullopt}, std::move(pd)});
        }
    }
    ds.hierarchy = hierarchy_or_default(hierarchy_file, ds.populations);
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Canonical CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string fmt_double(double v) {
    if (std::isnan(v)) return ".";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_csv_dataset(std::ostream& out, const MortalityDataset& ds) {
    out << "population,sex,region,year,age,rate,exposure\n";
    for (const auto& [label, data] : ds.populations) {
        for (Eigen::Index t = 0; t < data.rates.rows(); ++t) {
            for (Eigen::Index i = 0; i < data.rates.cols(); ++i) {
                out << label.name << ',' << to_string(label.sex) << ','
                    << (label.region ? *label.region : "") << ',' << ds.first_year + t << ','
                    << fmt_double(ds.grid.ages[static_cast<std::size_t>(i)])
                    << (ds.grid.open_ended_last && i + 1 == data.rates.cols() ? "+" : "") << ','
                    << fmt_double(data.rates(t, i)) << ',' << fmt_double(data.exposures(t, i))
                    << '\n';
            }
        }
    }
}

MortalityDataset load_csv_dataset(std::istream& in, const std::string& hierarchy_file,
                                  const LoadOptions& opts) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV");
    {
        auto hdr = split_csv_line(line);
        const std::vector<std::string> want{"population", "sex", "region", "year",
                                            "age",        "rate", "exposure"};
        if (hdr.size() != want.size() || !std::equal(hdr.begin(), hdr.end(), want.begin()))
            throw DataError("unexpected CSV header: " + line);
    }
    struct Cell {
        int year;
        double age;
        bool open;
        double rate, exposure;
    };
    std::map<std::string, std::pair<PopulationLabel, std::vector<Cell>>> raw;
    std::vector<std::string> order;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 7)
            throw DataError("line " + std::to_string(line_no) + ": expected 7 fields");
        PopulationLabel label{f[0], sex_from_string(f[1]),
                              f[2].empty() ? std::nullopt : std::optional<std::string>(f[2])};
        auto at = parse_age_token(f[4], line_no);
        Cell c{};
        try {
            c.year = std::stoi(f[3]);
        } catch (const std::exception&) {
            throw DataError("line " + std::to_string(line_no) + ": bad year '" + f[3] + "'");
        }
        c.age = at.age;
        c.open = at.open;
        c.rate = parse_cell(f[5], line_no);
        c.exposure = parse_cell(f[6], line_no);
        auto [it, inserted] = raw.try_emplace(label.key(), label, std::vector<Cell>{});
        if (inserted) order.push_back(label.key());
        it->second.second.push_back(c);
    }
    if (raw.empty()) throw DataError("CSV has no data rows");

    MortalityDataset ds;
    bool first = true;
    for (const auto& key : order) {
        auto& [label, cells] = raw.at(key);
        std::set<int> years;
        std::set<double> ages;
        bool open_last = false;
        double max_age = -1.0;
        for (const auto& c : cells) {
            years.insert(c.year);
            ages.insert(c.age);
            if (c.age > max_age) {
                max_age = c.age;
                open_last = c.open;
            }
        }
        const int y0 = *years.begin(), y1 = *years.rbegin();
        if (static_cast<int>(years.size()) != y1 - y0 + 1)
            throw DataError("population " + key + ": years are not contiguous");
        std::vector<double> grid_ages(ages.begin(), ages.end());
        AgeGrid grid(grid_ages, open_last);
        const auto n = static_cast<Eigen::Index>(years.size());
        const auto p = static_cast<Eigen::Index>(grid_ages.size());
        if (first) {
            ds.grid = grid;
            ds.first_year = y0;
            first = false;
        } else if (!(ds.grid == grid) || ds.first_year != y0 ||
                   n != ds.populations.front().second.rates.rows()) {
            throw DataError("population " + key + " does not align with the dataset grid/years");
        }
        PopulationData pd;
        pd.rates = Matrix::Constant(n, p, std::numeric_limits<double>::quiet_NaN());
        pd.exposures = Matrix::Constant(n, p, std::numeric_limits<double>::quiet_NaN());
        for (const auto& c : cells) {
            const auto ti = static_cast<Eigen::Index>(c.year - y0);
            const auto ai = static_cast<Eigen::Index>(
                std::lower_bound(grid_ages.begin(), grid_ages.end(), c.age) - grid_ages.begin());
            pd.rates(ti, ai) = c.rate;
            pd.exposures(ti, ai) = c.exposure;
        }
        impute_exposures(pd.exposures);
        if (opts.impute_nonpositive) impute_rates(pd.rates, ds.first_year, pd.flags);
        ds.populations.push_back({label, std::move(pd)});
    }
    ds.hierarchy = hierarchy_or_default(hierarchy_file, ds.populations);
    ds.validate();
    return ds;
}

MortalityDataset load_csv_dataset_file(const std::string& path, const std::string& hierarchy_file,
                                       const LoadOptions& opts) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return load_csv_dataset(in, hierarchy_file, opts);
}

// ---------------------------------------------------------------------------
// Hierarchy spec

namespace {

HierarchyNode node_from_json(const json& j) {
    HierarchyNode node;
    if (j.is_string()) {
        node.label = j.get<std::string>();
        return node;
    }
    if (!j.is_object() || !j.contains("label"))
        throw DataError("hierarchy node must be a string or an object with 'label'");
    node.label = j.at("label").get<std::string>();
    if (j.contains("children"))
        for (const auto& c : j.at("children")) node.children.push_back(node_from_json(c));
    return node;
}

} // namespace

HierarchyNode parse_hierarchy_json(const std::string& text) {
    json j = json::parse(text);
    return node_from_json(j);
}

HierarchyNode load_hierarchy_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open hierarchy file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_hierarchy_json(ss.str());
}

} // namespace popmort
