#pragma once

#include <optional>
#include <span>
#include <string_view>

namespace assist {

enum class StatMethod { WelchT, WilcoxonPratt };

std::string_view to_string(StatMethod method);

struct StatTestResult {
    StatMethod method = StatMethod::WelchT;
    // Welch: t. Wilcoxon: continuity-corrected normal z of the positive rank
    // sum (negative when x tends to be below y).
    double statistic = 0;
    std::optional<double> df;
    double p_two_tailed = 1;

    // Wilcoxon only.
    std::optional<double> signed_rank_sum;
    std::optional<double> p_normal;
    std::optional<double> p_exact;
    int nonzero = 0;
    int zeros = 0;
    bool ties = false;
};

// Regularized incomplete beta I_x(a, b), continued fraction to 1e-15.
double incomplete_beta(double a, double b, double x);

// Two-tailed p of Student's t with (possibly fractional) df.
double student_t_two_tailed(double t, double df);

double normal_two_tailed(double z);

// Unequal-variance t test with Welch-Satterthwaite df. Needs two or more
// values per sample (DomainError). Two constant samples give t = 0, p = 1
// when their means agree and DegenerateInputError otherwise.
StatTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

// Paired signed-rank test on d = x - y with Pratt's treatment of zeros: zero
// differences take part in ranking |d| and are then dropped. Ties get average
// ranks. p comes from the normal approximation with zero, tie and continuity
// corrections; with at most 12 nonzero differences and no ties the exact
// permutation p is computed as well and reported as p_two_tailed.
StatTestResult wilcoxon_signed_rank_pratt(std::span<const double> x, std::span<const double> y);

}  // namespace assist
