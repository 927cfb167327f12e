#include "doctest.h"

#include "popmort/dataset.hpp"
#include "popmort/rng.hpp"

#include <cmath>
#include <sstream>

using namespace popmort;

namespace {

const char* kSmallTable = R"(UK, Death rates (period 1x1)

  Year  Age  Female  Male  Total
  1950  0    0.02    0.03  0.025
  1950  1    0.001   0.002 0.0015
  1950  2    0.0005  .     0.0005
  1951  0    0.019   0.028 0.024
  1951  1    0.0011  0.0019 0.0015
  1951  2    0.0006  0.0007 0.00065
)";

} // namespace

TEST_CASE("hmd table parses fields and missing cells") {
    std::istringstream in(kSmallTable);
    const auto tab = parse_hmd_table(in, HmdKind::rates);
    CHECK(tab.first_year == 1950);
    CHECK(tab.grid.size() == 3);
    CHECK(tab.female(0, 0) == 0.02);
    CHECK(tab.male(0, 0) == 0.03);
    CHECK(tab.total(0, 0) == 0.025);
    // "." is flagged missing, not zero
    CHECK(std::isnan(tab.male(0, 2)));
    REQUIRE(tab.missing[1].size() == 1);
    CHECK(tab.missing[1][0].year == 1950);
    CHECK(tab.missing[1][0].age_index == 2);
}

TEST_CASE("hmd parse errors carry line numbers") {
    std::istringstream bad("Year Age Female Male Total\n1950 0 0.1 0.2\n");
    CHECK_THROWS_WITH_AS(parse_hmd_table(bad, HmdKind::rates),
                         doctest::Contains("line 2"), DataError);

    std::istringstream gap("Year Age Female Male Total\n1950 0 1 1 1\n1952 0 1 1 1\n");
    CHECK_THROWS_AS(parse_hmd_table(gap, HmdKind::rates), DataError);
}

TEST_CASE("open-age aggregation is the exposure-weighted mean") {
    // Ages 94, 95, 100, 110+ with cap 95: hand-computed weighted mean.
    const char* rates_txt =
        "Year Age Female Male Total\n"
        "2000 94 0.25 0.25 0.25\n"
        "2000 95 0.3 0.3 0.3\n"
        "2000 100 0.5 0.5 0.5\n"
        "2000 110+ 0.8 0.8 0.8\n";
    const char* expo_txt =
        "Year Age Female Male Total\n"
        "2000 94 500 500 1000\n"
        "2000 95 100 100 200\n"
        "2000 100 50 50 100\n"
        "2000 110+ 10 10 20\n";
    std::istringstream rs(rates_txt), es(expo_txt);
    auto rates = parse_hmd_table(rs, HmdKind::rates);
    auto expo = parse_hmd_table(es, HmdKind::exposures);
    aggregate_open_age(rates, expo, 95.0);
    CHECK(rates.grid.size() == 2);
    CHECK(rates.grid.open_ended_last);
    CHECK(rates.grid.ages[1] == 95.0);
    // (0.3*100 + 0.5*50 + 0.8*10) / 160 = 63/160
    CHECK(rates.female(0, 1) == doctest::Approx(63.0 / 160.0).epsilon(1e-14));
    CHECK(expo.female(0, 1) == 160.0);
    // aggregated rate lies between the min and max of its parts
    CHECK(rates.female(0, 1) >= 0.3);
    CHECK(rates.female(0, 1) <= 0.8);
}

TEST_CASE("aggregated open rate stays inside the range of its parts") {
    RngStream rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        std::ostringstream r, e;
        r << "Year Age Female Male Total\n";
        e << "Year Age Female Male Total\n";
        double mn = 1e9, mx = -1e9;
        for (int age = 90; age <= 99; ++age) {
            const double m = 0.1 + 0.7 * rng.uniform();
            const double N = 10 + 1000 * rng.uniform();
            if (age >= 95) {
                mn = std::min(mn, m);
                mx = std::max(mx, m);
            }
            r << "2000 " << age << ' ' << m << ' ' << m << ' ' << m << "\n";
            e << "2000 " << age << ' ' << N << ' ' << N << ' ' << 2 * N << "\n";
        }
        std::istringstream rs(r.str()), es(e.str());
        auto rates = parse_hmd_table(rs, HmdKind::rates);
        auto expo = parse_hmd_table(es, HmdKind::exposures);
        aggregate_open_age(rates, expo, 95.0);
        const double agg = rates.female(0, rates.grid.size() - 1);
        CHECK(agg >= mn - 1e-12);
        CHECK(agg <= mx + 1e-12);
    }
}

namespace {

MortalityDataset tiny_dataset() {
    MortalityDataset ds;
    ds.grid = AgeGrid({0, 1, 2}, false);
    ds.first_year = 1990;
    Matrix r(2, 3), e(2, 3);
    r << 0.02, 0.001, 0.01, 0.021, 0.0011, 0.011;
    e << 1000, 2000, 1500, 1100, 2100, 1600;
    ds.populations.push_back({{"x", Sex::female, std::nullopt}, {r, e, {}}});
    ds.populations.push_back({{"x", Sex::male, std::nullopt}, {r * 1.2, e, {}}});
    ds.populations.push_back({{"x", Sex::total, std::nullopt}, {r * 1.1, e * 2, {}}});
    ds.hierarchy = default_hierarchy(ds.populations);
    ds.validate();
    return ds;
}

} // namespace

TEST_CASE("canonical CSV round-trips bit-for-bit") {
    const auto ds = tiny_dataset();
    std::ostringstream out;
    write_csv_dataset(out, ds);
    std::istringstream in(out.str());
    const auto ds2 = load_csv_dataset(in);
    REQUIRE(ds2.populations.size() == ds.populations.size());
    for (std::size_t i = 0; i < ds.populations.size(); ++i) {
        CHECK(ds2.populations[i].first == ds.populations[i].first);
        CHECK((ds2.populations[i].second.rates.array() ==
               ds.populations[i].second.rates.array())
                  .all());
        CHECK((ds2.populations[i].second.exposures.array() ==
               ds.populations[i].second.exposures.array())
                  .all());
    }
    CHECK(ds2.first_year == ds.first_year);
    CHECK(ds2.grid == ds.grid);
}

TEST_CASE("zero rates are imputed with the age minimum and flagged") {
    std::istringstream in("population,sex,region,year,age,rate,exposure\n"
                          "x,female,,2000,0,0.02,100\n"
                          "x,female,,2000,1,0.001,100\n"
                          "x,female,,2001,0,0,100\n"
                          "x,female,,2001,1,0.002,100\n");
    const auto ds = load_csv_dataset(in);
    const auto& pd = ds.populations.front().second;
    CHECK(pd.rates(1, 0) == 0.02); // min positive for age 0
    bool has_imputed = false, has_zero = false;
    for (const auto& f : pd.flags) {
        if (f.reason == CellReason::imputed) has_imputed = true;
        if (f.reason == CellReason::zero_rate) has_zero = true;
    }
    CHECK(has_imputed);
    CHECK(has_zero);
}

TEST_CASE("missing cells are imputed rather than treated as zero") {
    std::istringstream in("population,sex,region,year,age,rate,exposure\n"
                          "x,female,,2000,0,0.02,100\n"
                          "x,female,,2000,1,0.001,100\n"
                          "x,female,,2001,0,.,100\n"
                          "x,female,,2001,1,0.002,100\n");
    const auto ds = load_csv_dataset(in);
    CHECK(ds.populations.front().second.rates(1, 0) == 0.02);
}

TEST_CASE("structural validation errors") {
    // Non-contiguous years.
    std::istringstream gap("population,sex,region,year,age,rate,exposure\n"
                           "x,female,,2000,0,0.02,100\n"
                           "x,female,,2000,1,0.01,100\n"
                           "x,female,,2002,0,0.02,100\n"
                           "x,female,,2002,1,0.01,100\n");
    CHECK_THROWS_AS(load_csv_dataset(gap), DataError);

    // Mismatched year ranges across populations.
    std::istringstream mis("population,sex,region,year,age,rate,exposure\n"
                           "x,female,,2000,0,0.02,100\n"
                           "x,female,,2000,1,0.01,100\n"
                           "x,male,,2001,0,0.02,100\n"
                           "x,male,,2001,1,0.01,100\n");
    CHECK_THROWS_AS(load_csv_dataset(mis), DataError);
}

TEST_CASE("hierarchy with unknown labels is rejected") {
    auto ds = tiny_dataset();
    ds.hierarchy = HierarchyNode{"all", {{"x/female", {}}, {"nosuch/male", {}}}};
    CHECK_THROWS_AS(ds.validate(), DataError);
}

TEST_CASE("single population gets a trivial hierarchy") {
    std::istringstream in("population,sex,region,year,age,rate,exposure\n"
                          "solo,total,,2000,0,0.02,100\n"
                          "solo,total,,2000,1,0.01,100\n"
                          "solo,total,,2001,0,0.02,100\n"
                          "solo,total,,2001,1,0.01,100\n");
    const auto ds = load_csv_dataset(in);
    CHECK(ds.hierarchy.label == "solo/total");
    CHECK(ds.hierarchy.leaf());
}

TEST_CASE("hierarchy json parses nested nodes") {
    const auto node = parse_hierarchy_json(
        R"({"label":"all","children":[{"label":"x","children":["x/female","x/male"]}]})");
    CHECK(node.label == "all");
    REQUIRE(node.children.size() == 1);
    CHECK(node.children[0].children[1].label == "x/male");
}
