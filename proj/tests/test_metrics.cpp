#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "coderag/errors.hpp"
#include "coderag/metrics.hpp"
#include "coderag/rng.hpp"

using namespace coderag;

namespace {

// Independent full-matrix Levenshtein oracle; the implementation under test
// uses a rolling row, so keep this one naive.
std::size_t lev_oracle(const std::u32string& a, const std::u32string& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
    for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                                d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
        }
    }
    return d[n][m];
}

std::string random_string(Rng& rng, std::size_t max_len) {
    static const std::u32string alphabet = U"abcdefg ()=.,é你\U0001F600";
    std::u32string u;
    const std::size_t len = rng.below(max_len + 1);
    for (std::size_t i = 0; i < len; ++i) u.push_back(alphabet[rng.below(alphabet.size())]);
    std::string out;
    for (char32_t cp : u) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("perplexity") {
    CHECK(perplexity({{std::log(0.5), std::log(1.0 / 8)}, {1, 1}}) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(perplexity({{0.0, 0.0, 0.0}, {1, 1, 1}}) == doctest::Approx(1.0));

    const double v = 50257;
    std::vector<double> uniform(100, -std::log(v));
    CHECK(perplexity({uniform, std::vector<std::uint32_t>(100, 1)}) ==
          doctest::Approx(v).epsilon(1e-9));

    CHECK_THROWS_AS(perplexity({{0.1}, {1}}), DataError);
    CHECK_THROWS_AS(perplexity({{}, {}}), DataError);
}

TEST_CASE("recall and MRR") {
    SingleTokenStats ones{{0, 0, 0}, {1, 1, 1}};
    for (unsigned k : {1u, 5u, 100u}) {
        CHECK(recall_at_k(ones, k) == 1.0);
        CHECK(mrr_at_k(ones, k) == 1.0);
    }

    SingleTokenStats mixed{{0, 0, 0}, {1, 2, 11}};
    CHECK(recall_at_k(mixed, 10) == doctest::Approx(2.0 / 3));
    CHECK(mrr_at_k(mixed, 10) == doctest::Approx(0.5));

    SingleTokenStats beyond{{0, 0}, {7, 9}};
    CHECK(recall_at_k(beyond, 5) == 0.0);
    CHECK(mrr_at_k(beyond, 5) == 0.0);
}

TEST_CASE("recall/MRR match direct evaluation on random rank lists") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        SingleTokenStats stats;
        const std::size_t n = 1 + rng.below(200);
        for (std::size_t i = 0; i < n; ++i) {
            stats.ranks.push_back(1 + static_cast<std::uint32_t>(rng.below(20)));
            stats.log_probs.push_back(0);
        }
        for (unsigned k : {1u, 2u, 5u, 10u}) {
            double r = 0, m = 0;
            for (auto rank : stats.ranks) {
                if (rank <= k) {
                    r += 1;
                    m += 1.0 / rank;
                }
            }
            r /= static_cast<double>(n);
            m /= static_cast<double>(n);
            CHECK(recall_at_k(stats, k) == doctest::Approx(r));
            CHECK(mrr_at_k(stats, k) == doctest::Approx(m));
        }
        // R@k non-decreasing in k; MRR_k <= R@k and non-decreasing
        for (unsigned k = 1; k < 12; ++k) {
            CHECK(recall_at_k(stats, k) <= recall_at_k(stats, k + 1));
            CHECK(mrr_at_k(stats, k) <= mrr_at_k(stats, k + 1) + 1e-15);
            CHECK(mrr_at_k(stats, k) <= recall_at_k(stats, k) + 1e-15);
        }
    }
}

TEST_CASE("prediction pairs strip whitespace once at construction") {
    PredictionPair p("  foo(bar) \n", "\tfoo(bar)");
    CHECK(p.predicted() == "foo(bar)");
    CHECK(p.target() == "foo(bar)");
    CHECK(exact_match(p) == 1);
    CHECK(edit_similarity(p) == 1.0);
}

TEST_CASE("edit similarity worked example and edge cases") {
    PredictionPair p("foo(bar)", "foo(baz)");
    CHECK(edit_similarity(p) == doctest::Approx(1.0 - 1.0 / 8));
    CHECK(common_prefix_length(p) == 6);

    CHECK(edit_similarity(PredictionPair("", "")) == 1.0);
    CHECK(exact_match(PredictionPair("", "")) == 1);
    CHECK(edit_similarity(PredictionPair("", "abcd")) == 0.0);
    CHECK(exact_match(PredictionPair("a", "b")) == 0);
}

TEST_CASE("edit similarity matches the DP oracle on random unicode pairs") {
    Rng rng(555);
    for (int i = 0; i < 2000; ++i) {
        const std::string s = random_string(rng, 24);
        const std::string t = random_string(rng, 24);
        PredictionPair p(s, t);
        const auto want = lev_oracle(p.predicted_units(), p.target_units());
        CHECK(levenshtein(p.predicted_units(), p.target_units()) == want);
        // symmetry
        CHECK(levenshtein(p.target_units(), p.predicted_units()) == want);
        const std::size_t denom = std::max(p.predicted_units().size(), p.target_units().size());
        if (denom > 0) {
            CHECK(edit_similarity(p) ==
                  doctest::Approx(1.0 - static_cast<double>(want) / static_cast<double>(denom)));
        }
    }
}

TEST_CASE("multibyte identifiers count as single edit units") {
    // One accented character substituted: distance 1 over length 4.
    PredictionPair p("café", "cafe");
    CHECK(levenshtein(p.predicted_units(), p.target_units()) == 1);
    CHECK(edit_similarity(p) == doctest::Approx(0.75));
}

TEST_CASE("prefix aggregate is length-weighted, not mean of ratios") {
    std::vector<PredictionPair> pairs;
    pairs.emplace_back("ab", "abcd");
    pairs.emplace_back("x", "yy");
    CHECK(prefix_similarity_aggregate(pairs) == doctest::Approx(1.0 / 3));
    // mean of per-pair ratios would be (0.5 + 0) / 2 = 0.25: different
    const double mean_ratio = (2.0 / 4 + 0.0 / 2) / 2;
    CHECK(prefix_similarity_aggregate(pairs) != doctest::Approx(mean_ratio));

    std::vector<PredictionPair> empty_targets;
    empty_targets.emplace_back("x", "");
    CHECK_THROWS_AS(prefix_similarity_aggregate(empty_targets), DataError);
}

TEST_CASE("prefix monotonicity: appending matching characters never shrinks the prefix") {
    Rng rng(808);
    for (int i = 0; i < 300; ++i) {
        std::string s = random_string(rng, 12), t = random_string(rng, 12);
        PredictionPair before(s, t);
        const char extra = static_cast<char>('a' + rng.below(26));
        PredictionPair after(s + extra, t + extra);
        CHECK(common_prefix_length(after) >= common_prefix_length(before));
    }
}

TEST_CASE("inverse normal CDF round-trips the CDF") {
    for (double p : {1e-8, 1e-4, 0.025, 0.2, 0.5, 0.8, 0.975, 1 - 1e-4, 1 - 1e-8}) {
        CHECK(normal_cdf(inverse_normal_cdf(p)) == doctest::Approx(p).epsilon(1e-8));
    }
    CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
    CHECK_THROWS_AS(inverse_normal_cdf(0.0), DataError);
    CHECK_THROWS_AS(inverse_normal_cdf(1.0), DataError);
}

TEST_CASE("BCa interval basics") {
    SUBCASE("degenerate all-equal values give a zero-width interval") {
        std::vector<double> v(20, 0.7);
        const auto ci = bca_mean_interval(v, {.resamples = 500, .seed = 1});
        CHECK(ci.lo == ci.point);  // exactly zero-width
        CHECK(ci.hi == ci.point);
        CHECK(ci.point == doctest::Approx(0.7));
    }
    SUBCASE("binary values stay within the statistic's range") {
        std::vector<double> v;
        for (int i = 0; i < 40; ++i) v.push_back(i % 2);
        const auto ci = bca_mean_interval(v, {.resamples = 1000, .seed = 2});
        CHECK(ci.lo >= 0.0);
        CHECK(ci.hi <= 1.0);
        CHECK(ci.lo <= ci.point);
        CHECK(ci.point <= ci.hi);
    }
    SUBCASE("fewer than two values is an error") {
        std::vector<double> v{1.0};
        CHECK_THROWS_AS(bca_mean_interval(v, {}), DataError);
    }
    SUBCASE("identical seeds reproduce identical intervals") {
        std::vector<double> v;
        Rng rng(77);
        for (int i = 0; i < 50; ++i) v.push_back(rng.unit());
        const auto a = bca_mean_interval(v, {.resamples = 400, .seed = 9});
        const auto b = bca_mean_interval(v, {.resamples = 400, .seed = 9});
        CHECK(a.lo == b.lo);
        CHECK(a.hi == b.hi);
    }
}

TEST_CASE("BCa covers the true mean at roughly the nominal rate") {
    // Smaller, faster version of the coverage study in the acceptance
    // suite: 120 trials of Bernoulli(0.5), n = 150.
    int covered = 0;
    const int trials = 120;
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(31337, "coverage", static_cast<std::uint64_t>(t)));
        std::vector<double> v(150);
        for (auto& x : v) x = rng.unit() < 0.5 ? 1.0 : 0.0;
        const auto ci = bca_mean_interval(v, {.resamples = 400,
                                              .seed = derive_seed(1, "ci", static_cast<std::uint64_t>(t))});
        if (ci.lo <= 0.5 && 0.5 <= ci.hi) ++covered;
    }
    const double rate = static_cast<double>(covered) / trials;
    CHECK(rate > 0.85);
    CHECK(rate <= 1.0);
}

TEST_CASE("aggregate_pairs wires the three multi-token metrics together") {
    std::vector<PredictionPair> pairs;
    pairs.emplace_back("foo(bar)", "foo(bar)");
    pairs.emplace_back("foo(bar)", "foo(baz)");
    pairs.emplace_back("x = 1", "y = 2");
    const auto report = aggregate_pairs(pairs, 42);
    CHECK(report.n == 3);
    CHECK(report.em.point == doctest::Approx(1.0 / 3));
    CHECK(report.edit_sim.point == doctest::Approx((1.0 + 0.875 + 0.6) / 3));
    // prefixes: 8 + 6 + 0 over targets 8 + 8 + 5
    CHECK(report.prefix_sim.point == doctest::Approx(14.0 / 21));
    CHECK(report.em.lo <= report.em.point);
    CHECK(report.em.hi >= report.em.point);

    const auto j = report_to_json(report, nlohmann::json::array());
    CHECK(j.contains("em"));
    CHECK(j.contains("edit_sim"));
    CHECK(j.contains("prefix_sim"));
    CHECK(j["n"] == 3);
    CHECK(!j.contains("single_token"));
    CHECK(j["em"]["point"] == doctest::Approx(1.0 / 3));
}
