#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "assist/error.hpp"
#include "assist/stats.hpp"
#include "support.hpp"

using namespace assist;

namespace {

using Vec = std::vector<double>;

bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol * std::max(1.0, std::fabs(b)); }

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("incomplete beta") {
    // scipy.special.betainc
    CHECK(close(incomplete_beta(2.5, 0.5, 0.3), 0.018927124071945658, 1e-13));
    CHECK(close(incomplete_beta(10, 3, 0.9), 0.889130022255, 1e-12));
    CHECK(close(incomplete_beta(0.5, 0.5, 0.01), 0.06376856085851985, 1e-13));
    for (const double x : {0.1, 0.37, 0.5, 0.93}) {
        CHECK(close(incomplete_beta(1, 1, x), x, 1e-14));
        CHECK(close(incomplete_beta(3, 1, x), x * x * x, 1e-13));
        CHECK(close(incomplete_beta(2.2, 4.1, x) + incomplete_beta(4.1, 2.2, 1 - x), 1.0, 1e-13));
    }
    CHECK(close(incomplete_beta(7, 7, 0.5), 0.5, 1e-14));
    CHECK(incomplete_beta(2, 3, 0) == 0);
    CHECK(incomplete_beta(2, 3, 1) == 1);
    CHECK_THROWS_AS(incomplete_beta(0, 1, 0.5), DomainError);
}

TEST_CASE("distribution tails") {
    // 2 * scipy.stats.t.sf(2.0, 7.3) and 2 * scipy.stats.norm.sf(1.96)
    CHECK(close(student_t_two_tailed(2.0, 7.3), 0.08394103933410305, 1e-12));
    CHECK(close(student_t_two_tailed(-2.0, 7.3), 0.08394103933410305, 1e-12));
    CHECK(student_t_two_tailed(0, 3) == doctest::Approx(1.0));
    CHECK(close(normal_two_tailed(1.96), 0.04999579029644087, 1e-12));
    CHECK(normal_two_tailed(0) == 1.0);
}

TEST_CASE("welch examples") {
    const Vec same = {1, 2, 3};
    const StatTestResult zero = welch_t_test(same, same);
    CHECK(zero.statistic == 0);
    CHECK(zero.p_two_tailed == doctest::Approx(1.0));
    CHECK(zero.method == StatMethod::WelchT);

    const Vec a = {1, 2, 3, 4, 5};
    const Vec b = {2, 4, 6, 8, 10};
    const StatTestResult r = welch_t_test(a, b);
    CHECK(close(r.statistic, -1.8973665961010275, 1e-12));
    REQUIRE(r.df.has_value());
    CHECK(close(*r.df, 5.882352941176471, 1e-12));
    CHECK(close(r.p_two_tailed, 0.10753119493062718, 1e-12));

    const Vec c = {3, 5, 7, 9};
    const Vec d = {10, 12, 14, 16};
    CHECK(close(*welch_t_test(c, d).df, 6.0, 1e-12));

    const Vec flat = {4, 4, 4};
    const StatTestResult both_flat = welch_t_test(flat, flat);
    CHECK(both_flat.statistic == 0);
    CHECK(both_flat.p_two_tailed == 1);
    const Vec other_flat = {5, 5};
    CHECK_THROWS_AS(welch_t_test(flat, other_flat), DegenerateInputError);
    const Vec one = {1};
    CHECK_THROWS_AS(welch_t_test(one, a), DomainError);
}

TEST_CASE("welch against the scipy fixture") {
    const auto doc = nlohmann::json::parse(testing::read_file(testing::source_dir() / "tests/fixtures/welch_reference.json"));
    const auto& cases = doc.at("cases");
    REQUIRE(cases.size() == 100);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const Vec a = cases[i].at("a").get<Vec>();
        const Vec b = cases[i].at("b").get<Vec>();
        const StatTestResult r = welch_t_test(a, b);
        INFO("case " << i);
        CHECK(close(r.statistic, cases[i].at("t").get<double>(), 1e-9));
        CHECK(close(*r.df, cases[i].at("df").get<double>(), 1e-9));
        CHECK(std::fabs(r.p_two_tailed - cases[i].at("p").get<double>()) <= 1e-9);
    }
}

TEST_CASE("welch symmetry and affine invariance") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> noise(0, 1);
    for (int i = 0; i < 300; ++i) {
        Vec a(2 + rng() % 15), b(2 + rng() % 15);
        const double shift = noise(rng) * 2;
        for (auto& v : a) v = noise(rng) * (1 + i % 3);
        for (auto& v : b) v = noise(rng) + shift;
        const StatTestResult ab = welch_t_test(a, b);
        const StatTestResult ba = welch_t_test(b, a);
        CHECK(close(ab.statistic, -ba.statistic, 1e-12));
        CHECK(close(ab.p_two_tailed, ba.p_two_tailed, 1e-12));
        CHECK(ab.p_two_tailed >= 0);
        CHECK(ab.p_two_tailed <= 1);

        const double scale = 0.5 + static_cast<double>(rng() % 100) / 10;
        const double offset = noise(rng) * 50;
        Vec as = a, bs = b;
        for (auto& v : as) v = v * scale + offset;
        for (auto& v : bs) v = v * scale + offset;
        const StatTestResult moved = welch_t_test(as, bs);
        CHECK(close(moved.statistic, ab.statistic, 1e-9));
        CHECK(std::fabs(moved.p_two_tailed - ab.p_two_tailed) <= 1e-9);
    }
}

TEST_CASE("signed-rank examples") {
    const Vec zeros = {0, 0, 0, 0};
    const StatTestResult none = wilcoxon_signed_rank_pratt(zeros, zeros);
    CHECK(none.p_two_tailed == 1);
    CHECK(none.method == StatMethod::WilcoxonPratt);

    const Vec x = {1, 2, 3, 4, 5};
    const Vec y = {0, 0, 0, 0, 0};
    const StatTestResult r = wilcoxon_signed_rank_pratt(x, y);
    REQUIRE(r.p_exact.has_value());
    CHECK(*r.p_exact == 1.0 / 16);
    CHECK(r.p_two_tailed == 1.0 / 16);
    CHECK(r.signed_rank_sum == 15);
    CHECK(r.statistic > 0);
    CHECK(wilcoxon_signed_rank_pratt(y, x).statistic < 0);

    const Vec empty;
    CHECK_THROWS_AS(wilcoxon_signed_rank_pratt(empty, empty), DomainError);
    const Vec shorter = {1, 2};
    CHECK_THROWS_AS(wilcoxon_signed_rank_pratt(x, shorter), DomainError);
}

TEST_CASE("pratt zeros take part in ranking") {
    // d = {0, 0, 1, -2, 3}: ranks 1.5, 1.5, 3, 4, 5; W+ = 8 out of 12.
    const Vec x = {5, 6, 8, 1, 10};
    const Vec y = {5, 6, 7, 3, 7};
    const StatTestResult r = wilcoxon_signed_rank_pratt(x, y);
    CHECK(r.zeros == 2);
    CHECK(r.nonzero == 3);
    CHECK_FALSE(r.ties);
    CHECK(r.signed_rank_sum == 4);
    REQUIRE(r.p_exact.has_value());
    CHECK(*r.p_exact == testing::signed_rank_enumeration_p(x, y));
}

TEST_CASE("exact p equals sign enumeration on untied samples") {
    std::mt19937_64 rng(123);
    std::uniform_int_distribution<int> value(-40, 40);
    int checked = 0;
    for (int i = 0; i < 400; ++i) {
        const std::size_t n = 1 + rng() % 12;
        Vec x(n), y(n, 0);
        // Distinct magnitudes, random signs, a few zeros.
        std::vector<int> magnitudes(40);
        std::iota(magnitudes.begin(), magnitudes.end(), 1);
        std::shuffle(magnitudes.begin(), magnitudes.end(), rng);
        for (std::size_t k = 0; k < n; ++k) {
            x[k] = rng() % 2 ? magnitudes[k] : -magnitudes[k];
            if (rng() % 8 == 0) x[k] = 0;
            y[k] = value(rng);
            x[k] += y[k];
        }
        const StatTestResult r = wilcoxon_signed_rank_pratt(x, y);
        CHECK(r.p_two_tailed >= 0);
        CHECK(r.p_two_tailed <= 1);
        if (r.nonzero == 0) continue;
        REQUIRE(r.p_exact.has_value());
        CHECK(*r.p_exact == testing::signed_rank_enumeration_p(x, y));
        ++checked;
    }
    CHECK(checked > 300);
}

TEST_CASE("normal approximation with ties") {
    const Vec x = {3, 3, 5, 5, 5, 9, 2, 8, 7, 4, 6, 1, 7, 8, 9, 10, 4, 4, 6, 5};
    const Vec y = {1, 1, 3, 3, 3, 4, 2, 5, 5, 5, 2, 3, 5, 6, 6, 4, 4, 2, 3, 2};
    const StatTestResult r = wilcoxon_signed_rank_pratt(x, y);
    CHECK(r.ties);
    CHECK_FALSE(r.p_exact.has_value());
    REQUIRE(r.p_normal.has_value());
    CHECK(r.p_two_tailed == *r.p_normal);
    CHECK(r.p_two_tailed < 0.01);
}

}  // TEST_SUITE
