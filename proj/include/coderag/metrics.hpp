#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace coderag {

// ---------------------------------------------------------------------------
// Single-token metrics
// ---------------------------------------------------------------------------

// Per-position log-probabilities and ranks of the true next token.
struct SingleTokenStats {
    std::vector<double> log_probs;
    std::vector<std::uint32_t> ranks;  // 1-based

    std::size_t size() const { return log_probs.size(); }
};

// exp of the mean negative log-probability; 1 is optimal.
double perplexity(const SingleTokenStats& stats);

// Fraction of positions whose true token ranks within the top k.
double recall_at_k(const SingleTokenStats& stats, unsigned k);

// Mean of 1/rank, where ranks beyond k contribute 0.
double mrr_at_k(const SingleTokenStats& stats, unsigned k);

// ---------------------------------------------------------------------------
// Multi-token string metrics
// ---------------------------------------------------------------------------

// One (prediction, target) pair. Leading/trailing whitespace is stripped
// once, here; the string metrics operate on Unicode scalar values so
// multibyte identifiers count as single edit units.
class PredictionPair {
public:
    PredictionPair(std::string_view predicted, std::string_view target);

    const std::string& predicted() const { return predicted_; }
    const std::string& target() const { return target_; }
    const std::u32string& predicted_units() const { return pred_units_; }
    const std::u32string& target_units() const { return tgt_units_; }

private:
    std::string predicted_;
    std::string target_;
    std::u32string pred_units_;
    std::u32string tgt_units_;
};

int exact_match(const PredictionPair& pair);

// 1 - lev(s, t) / max(|s|, |t|); two empty strings score 1.
double edit_similarity(const PredictionPair& pair);

// |pi(s, t)|: length of the longest common prefix, in scalar values.
std::size_t common_prefix_length(const PredictionPair& pair);

// Length-weighted aggregate sum|pi(s,t)| / sum|t| over all pairs. This is
// not the mean of per-pair ratios; unequal target lengths make the two
// disagree.
double prefix_similarity_aggregate(std::span<const PredictionPair> pairs);

// Levenshtein distance over scalar-value sequences (exposed for tests).
std::size_t levenshtein(const std::u32string& a, const std::u32string& b);

std::u32string to_scalar_values(std::string_view utf8);

// ---------------------------------------------------------------------------
// BCa bootstrap confidence intervals
// ---------------------------------------------------------------------------

struct ConfidenceInterval {
    double point = 0;
    double lo = 0;
    double hi = 0;
    double level = 0.95;
    std::string method = "BCa";
    int resamples = 1000;
};

struct BcaOptions {
    int resamples = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
};

// Bias-corrected accelerated interval for `statistic` over `values`.
// Degenerate all-equal input yields a zero-width interval.
ConfidenceInterval bca_interval(std::span<const double> values,
                                const std::function<double(std::span<const double>)>& statistic,
                                const BcaOptions& options = {});

// Same, resampling example indices; for statistics that need more than one
// number per example (e.g. the length-weighted prefix aggregate).
ConfidenceInterval bca_interval_indexed(
    std::size_t n, const std::function<double(std::span<const std::size_t>)>& statistic,
    const BcaOptions& options = {});

ConfidenceInterval bca_mean_interval(std::span<const double> values, const BcaOptions& options = {});

double normal_cdf(double x);
double inverse_normal_cdf(double p);

// ---------------------------------------------------------------------------
// Report schema
// ---------------------------------------------------------------------------

struct SingleTokenSummary {
    double ppl = 0;
    double r1 = 0;
    double r5 = 0;
    double mrr5 = 0;
};

// Aggregated multi-token metrics with confidence intervals.
struct MetricsReport {
    std::string dataset;
    std::string model_id;
    std::size_t n = 0;
    ConfidenceInterval em;
    ConfidenceInterval edit_sim;
    ConfidenceInterval prefix_sim;
    std::optional<SingleTokenSummary> single_token;
};

// Computes EM / EditSim means and the prefix aggregate over `pairs`, each
// with a BCa interval. Resample seeds derive from `seed`.
MetricsReport aggregate_pairs(std::span<const PredictionPair> pairs, std::uint64_t seed,
                              int resamples = 1000);

// Renders the normative report JSON: {dataset, model_id, n, em, edit_sim,
// prefix_sim, single_token?, per_example}. `per_example` is supplied by the
// caller and attached verbatim.
nlohmann::json report_to_json(const MetricsReport& report, nlohmann::json per_example);

nlohmann::json interval_to_json(const ConfidenceInterval& ci);

}  // namespace coderag
