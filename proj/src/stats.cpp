#include "assist/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "assist/error.hpp"

namespace assist {

namespace {

constexpr double kEpsilon = 1e-15;
constexpr double kTiny = 1e-300;

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEpsilon) return h;
    }
    return h;
}

struct Moments {
    double mean = 0;
    double variance = 0;  // sample variance, n - 1 denominator
};

Moments moments(std::span<const double> values) {
    Moments m;
    const double n = static_cast<double>(values.size());
    m.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0;
    double compensation = 0;
    for (const double v : values) {
        ss += (v - m.mean) * (v - m.mean);
        compensation += v - m.mean;
    }
    m.variance = (ss - compensation * compensation / n) / (n - 1);
    if (m.variance < 0) m.variance = 0;
    return m;
}

// P(W+ <= w) and P(W+ >= w) for integer ranks under random signs, by
// counting subset sums.
std::pair<double, double> exact_tails(const std::vector<int>& ranks, long long w_plus) {
    const long long total = std::accumulate(ranks.begin(), ranks.end(), 0LL);
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(total + 1), 0);
    counts[0] = 1;
    long long reach = 0;
    for (const int r : ranks) {
        reach += r;
        for (long long s = reach; s >= r; --s) counts[static_cast<std::size_t>(s)] += counts[static_cast<std::size_t>(s - r)];
    }
    std::uint64_t lower = 0;
    std::uint64_t upper = 0;
    for (long long s = 0; s <= total; ++s) {
        if (s <= w_plus) lower += counts[static_cast<std::size_t>(s)];
        if (s >= w_plus) upper += counts[static_cast<std::size_t>(s)];
    }
    const double denominator = std::ldexp(1.0, static_cast<int>(ranks.size()));
    return {static_cast<double>(lower) / denominator, static_cast<double>(upper) / denominator};
}

}  // namespace

std::string_view to_string(StatMethod method) {
    return method == StatMethod::WelchT ? "WelchT" : "WilcoxonPratt";
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0) || !(b > 0)) throw DomainError("incomplete beta needs a, b > 0");
    if (x <= 0) return 0.0;
    if (x >= 1) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, double df) {
    if (!(df > 0)) throw DomainError("degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    const double x = df / (df + t * t);
    return std::clamp(incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

double normal_two_tailed(double z) {
    return std::clamp(std::erfc(std::fabs(z) / std::sqrt(2.0)), 0.0, 1.0);
}

StatTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2)
        throw DomainError("Welch's t test needs at least two values per sample");
    const Moments ma = moments(a);
    const Moments mb = moments(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double va = ma.variance / na;
    const double vb = mb.variance / nb;

    StatTestResult result;
    result.method = StatMethod::WelchT;
    if (va + vb == 0) {
        if (ma.mean != mb.mean)
            throw DegenerateInputError("both samples are constant with different means");
        result.statistic = 0;
        result.p_two_tailed = 1;
        return result;
    }
    result.statistic = (ma.mean - mb.mean) / std::sqrt(va + vb);
    const double df = (va + vb) * (va + vb) / (va * va / (na - 1) + vb * vb / (nb - 1));
    result.df = df;
    result.p_two_tailed = student_t_two_tailed(result.statistic, df);
    return result;
}

StatTestResult wilcoxon_signed_rank_pratt(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DomainError("paired samples must have equal length");
    if (x.empty()) throw DomainError("signed-rank test needs at least one pair");

    const std::size_t n = x.size();
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = x[i] - y[i];

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return std::fabs(diff[i]) < std::fabs(diff[j]);
    });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::fabs(diff[order[j + 1]]) == std::fabs(diff[order[i]])) ++j;
        const double average = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = average;
        i = j + 1;
    }

    StatTestResult result;
    result.method = StatMethod::WilcoxonPratt;
    double w_plus = 0;
    double signed_sum = 0;
    std::vector<double> nonzero_ranks;
    for (std::size_t i = 0; i < n; ++i) {
        if (diff[i] == 0) continue;
        nonzero_ranks.push_back(rank[i]);
        signed_sum += diff[i] > 0 ? rank[i] : -rank[i];
        if (diff[i] > 0) w_plus += rank[i];
    }
    const double m = static_cast<double>(nonzero_ranks.size());
    const double zeros = static_cast<double>(n) - m;
    result.nonzero = static_cast<int>(nonzero_ranks.size());
    result.zeros = static_cast<int>(zeros);
    result.signed_rank_sum = signed_sum;
    if (nonzero_ranks.empty()) {
        result.statistic = 0;
        result.p_normal = 1;
        result.p_two_tailed = 1;
        return result;
    }

    std::sort(nonzero_ranks.begin(), nonzero_ranks.end());
    double tie_term = 0;
    for (std::size_t i = 0; i < nonzero_ranks.size();) {
        std::size_t j = i;
        while (j + 1 < nonzero_ranks.size() && nonzero_ranks[j + 1] == nonzero_ranks[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        if (t > 1) result.ties = true;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    const double nn = static_cast<double>(n);
    const double mean = (nn * (nn + 1) - zeros * (zeros + 1)) / 4.0;
    const double variance = (nn * (nn + 1) * (2 * nn + 1) - zeros * (zeros + 1) * (2 * zeros + 1)) / 24.0 -
                            tie_term / 48.0;
    const double deviation = w_plus - mean;
    const double corrected = std::max(0.0, std::fabs(deviation) - 0.5);
    const double z = variance > 0 ? std::copysign(corrected / std::sqrt(variance), deviation) : 0.0;
    result.statistic = z;
    result.p_normal = normal_two_tailed(z);
    result.p_two_tailed = *result.p_normal;

    if (!result.ties && nonzero_ranks.size() <= 12) {
        std::vector<int> integer_ranks;
        for (const double r : nonzero_ranks) integer_ranks.push_back(static_cast<int>(std::lround(r)));
        const auto [lower, upper] = exact_tails(integer_ranks, std::llround(w_plus));
        result.p_exact = std::min(1.0, 2.0 * std::min(lower, upper));
        result.p_two_tailed = *result.p_exact;
    }
    return result;
}

}  // namespace assist
