#include "coderag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coderag/errors.hpp"
#include "coderag/rng.hpp"

namespace coderag {

namespace {

bool is_strip_whitespace(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

double mean(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Single-token metrics
// ---------------------------------------------------------------------------

double perplexity(const SingleTokenStats& stats) {
    if (stats.size() == 0) throw DataError("perplexity needs at least one position");
    double sum = 0;
    for (double lp : stats.log_probs) {
        if (lp > 0) throw DataError("log-probability above 0: " + std::to_string(lp));
        sum += lp;
    }
    return std::exp(-sum / static_cast<double>(stats.size()));
}

double recall_at_k(const SingleTokenStats& stats, unsigned k) {
    if (k < 1) throw ConfigError("recall_at_k needs k >= 1");
    if (stats.ranks.empty()) return 0;
    std::size_t hits = 0;
    for (auto r : stats.ranks) hits += r <= k;
    return static_cast<double>(hits) / static_cast<double>(stats.ranks.size());
}

double mrr_at_k(const SingleTokenStats& stats, unsigned k) {
    if (k < 1) throw ConfigError("mrr_at_k needs k >= 1");
    if (stats.ranks.empty()) return 0;
    double sum = 0;
    for (auto r : stats.ranks) {
        if (r <= k) sum += 1.0 / static_cast<double>(r);
    }
    return sum / static_cast<double>(stats.ranks.size());
}

// ---------------------------------------------------------------------------
// Multi-token string metrics
// ---------------------------------------------------------------------------

std::u32string to_scalar_values(std::string_view utf8) {
    std::u32string out;
    out.reserve(utf8.size());
    std::size_t i = 0;
    while (i < utf8.size()) {
        const auto b0 = static_cast<unsigned char>(utf8[i]);
        std::size_t len = 1;
        char32_t cp = b0;
        if (b0 >= 0xC0) {
            if ((b0 & 0xE0) == 0xC0) {
                len = 2;
                cp = b0 & 0x1F;
            } else if ((b0 & 0xF0) == 0xE0) {
                len = 3;
                cp = b0 & 0x0F;
            } else if ((b0 & 0xF8) == 0xF0) {
                len = 4;
                cp = b0 & 0x07;
            }
            if (len > 1) {
                if (i + len > utf8.size()) {
                    len = 1;
                    cp = 0x110000 + b0;  // lone invalid byte: one unit
                } else {
                    bool ok = true;
                    char32_t acc = cp;
                    for (std::size_t k = 1; k < len; ++k) {
                        const auto b = static_cast<unsigned char>(utf8[i + k]);
                        if ((b & 0xC0) != 0x80) {
                            ok = false;
                            break;
                        }
                        acc = (acc << 6) | (b & 0x3F);
                    }
                    if (ok) {
                        cp = acc;
                    } else {
                        len = 1;
                        cp = 0x110000 + b0;
                    }
                }
            }
        } else if (b0 >= 0x80) {
            cp = 0x110000 + b0;  // stray continuation byte
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

namespace {

std::string encode_scalar_values(const std::u32string& units) {
    std::string out;
    for (char32_t cp : units) {
        if (cp >= 0x110000) {
            out.push_back(static_cast<char>(cp - 0x110000));
        } else if (cp < 0x80) {
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

std::u32string strip_units(const std::u32string& u) {
    std::size_t b = 0, e = u.size();
    while (b < e && is_strip_whitespace(u[b])) ++b;
    while (e > b && is_strip_whitespace(u[e - 1])) --e;
    return u.substr(b, e - b);
}

}  // namespace

PredictionPair::PredictionPair(std::string_view predicted, std::string_view target) {
    pred_units_ = strip_units(to_scalar_values(predicted));
    tgt_units_ = strip_units(to_scalar_values(target));
    predicted_ = encode_scalar_values(pred_units_);
    target_ = encode_scalar_values(tgt_units_);
}

int exact_match(const PredictionPair& pair) {
    return pair.predicted_units() == pair.target_units() ? 1 : 0;
}

std::size_t levenshtein(const std::u32string& a, const std::u32string& b) {
    if (a == b) return 0;
    const std::size_t n = a.size(), m = b.size();
    if (n == 0) return m;
    if (m == 0) return n;
    std::vector<std::size_t> row(m + 1);
    std::iota(row.begin(), row.end(), std::size_t{0});
    for (std::size_t i = 1; i <= n; ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
            diag = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, sub});
        }
    }
    return row[m];
}

double edit_similarity(const PredictionPair& pair) {
    const auto& s = pair.predicted_units();
    const auto& t = pair.target_units();
    const std::size_t denom = std::max(s.size(), t.size());
    if (denom == 0) return 1.0;  // both empty: identical
    return 1.0 - static_cast<double>(levenshtein(s, t)) / static_cast<double>(denom);
}

std::size_t common_prefix_length(const PredictionPair& pair) {
    const auto& s = pair.predicted_units();
    const auto& t = pair.target_units();
    const std::size_t n = std::min(s.size(), t.size());
    std::size_t i = 0;
    while (i < n && s[i] == t[i]) ++i;
    return i;
}

double prefix_similarity_aggregate(std::span<const PredictionPair> pairs) {
    std::size_t num = 0, den = 0;
    for (const auto& p : pairs) {
        num += common_prefix_length(p);
        den += p.target_units().size();
    }
    if (den == 0) throw DataError("prefix similarity aggregate needs nonzero total target length");
    return static_cast<double>(num) / static_cast<double>(den);
}

// ---------------------------------------------------------------------------
// Normal distribution helpers
// ---------------------------------------------------------------------------

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Rational approximation by Peter Acklam (relative error < 1.15e-9 over the
// full domain), refined with one Halley step.
double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DataError("inverse_normal_cdf domain is (0, 1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= 1 - plow) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        const double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
    return x - u / (1 + x * u / 2);
}

// ---------------------------------------------------------------------------
// BCa bootstrap
// ---------------------------------------------------------------------------

namespace {

double interp_quantile(const std::vector<double>& sorted, double q) {
    if (q <= 0) return sorted.front();
    if (q >= 1) return sorted.back();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

ConfidenceInterval bca_interval_indexed(
    std::size_t n, const std::function<double(std::span<const std::size_t>)>& statistic,
    const BcaOptions& options) {
    if (n < 2) throw DataError("BCa interval needs at least 2 values");
    if (options.resamples < 2) throw ConfigError("BCa needs at least 2 resamples");
    if (!(options.level > 0 && options.level < 1)) throw ConfigError("confidence level must be in (0,1)");

    std::vector<std::size_t> identity(n);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    const double point = statistic(identity);

    ConfidenceInterval ci;
    ci.point = point;
    ci.level = options.level;
    ci.resamples = options.resamples;

    // Bootstrap distribution. Per-resample seeds derive from the root seed so
    // results do not depend on evaluation order or thread count.
    const auto B = static_cast<std::size_t>(options.resamples);
    std::vector<double> boot(B);
    std::vector<std::size_t> sample(n);
    for (std::size_t bi = 0; bi < B; ++bi) {
        Rng rng(derive_seed(options.seed, "bca-resample", bi));
        for (std::size_t k = 0; k < n; ++k) sample[k] = static_cast<std::size_t>(rng.below(n));
        boot[bi] = statistic(sample);
    }

    const auto [mn, mx] = std::minmax_element(boot.begin(), boot.end());
    if (*mn == *mx && *mn == point) {  // degenerate sample, zero-width interval
        ci.lo = ci.hi = point;
        return ci;
    }

    // Bias constant from the bootstrap distribution's position relative to
    // the point estimate (midrank handles lattice-valued statistics).
    std::size_t less = 0, equal = 0;
    for (double v : boot) {
        less += v < point;
        equal += v == point;
    }
    double frac = (static_cast<double>(less) + 0.5 * static_cast<double>(equal)) / static_cast<double>(B);
    frac = std::clamp(frac, 0.5 / static_cast<double>(B), 1.0 - 0.5 / static_cast<double>(B));
    const double z0 = inverse_normal_cdf(frac);

    // Acceleration from jackknife skewness.
    std::vector<double> jack(n);
    std::vector<std::size_t> held(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t w = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k != i) held[w++] = k;
        }
        jack[i] = statistic(held);
    }
    const double jbar = mean(jack);
    double num = 0, den = 0;
    for (double v : jack) {
        const double d = jbar - v;
        num += d * d * d;
        den += d * d;
    }
    const double accel = den > 0 ? num / (6.0 * std::pow(den, 1.5)) : 0.0;

    std::sort(boot.begin(), boot.end());
    const double alpha = (1 - options.level) / 2;
    auto adjusted = [&](double q) {
        const double z = inverse_normal_cdf(q);
        const double w = z0 + (z0 + z) / (1 - accel * (z0 + z));
        return normal_cdf(w);
    };
    ci.lo = interp_quantile(boot, adjusted(alpha));
    ci.hi = interp_quantile(boot, adjusted(1 - alpha));
    if (ci.lo > ci.hi) std::swap(ci.lo, ci.hi);
    // the reported interval always brackets the point estimate
    ci.lo = std::min(ci.lo, point);
    ci.hi = std::max(ci.hi, point);
    return ci;
}

ConfidenceInterval bca_interval(std::span<const double> values,
                                const std::function<double(std::span<const double>)>& statistic,
                                const BcaOptions& options) {
    std::vector<double> buffer(values.size());
    auto indexed = [&](std::span<const std::size_t> idx) {
        buffer.resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) buffer[k] = values[idx[k]];
        return statistic(std::span<const double>(buffer.data(), idx.size()));
    };
    return bca_interval_indexed(values.size(), indexed, options);
}

ConfidenceInterval bca_mean_interval(std::span<const double> values, const BcaOptions& options) {
    return bca_interval(values, [](std::span<const double> v) { return mean(v); }, options);
}

// ---------------------------------------------------------------------------
// Report aggregation and schema
// ---------------------------------------------------------------------------

MetricsReport aggregate_pairs(std::span<const PredictionPair> pairs, std::uint64_t seed,
                              int resamples) {
    if (pairs.empty()) throw DataError("cannot aggregate an empty pair set");
    MetricsReport report;
    report.n = pairs.size();

    std::vector<double> em(pairs.size()), es(pairs.size());
    std::vector<double> pi(pairs.size()), tlen(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        em[i] = exact_match(pairs[i]);
        es[i] = edit_similarity(pairs[i]);
        pi[i] = static_cast<double>(common_prefix_length(pairs[i]));
        tlen[i] = static_cast<double>(pairs[i].target_units().size());
    }

    BcaOptions opt;
    opt.resamples = resamples;
    opt.seed = derive_seed(seed, "bca-em");
    report.em = bca_mean_interval(em, opt);
    opt.seed = derive_seed(seed, "bca-editsim");
    report.edit_sim = bca_mean_interval(es, opt);

    opt.seed = derive_seed(seed, "bca-prefixsim");
    auto ratio = [&](std::span<const std::size_t> idx) {
        double num = 0, den = 0;
        for (auto i : idx) {
            num += pi[i];
            den += tlen[i];
        }
        return den > 0 ? num / den : 1.0;
    };
    report.prefix_sim = bca_interval_indexed(pairs.size(), ratio, opt);
    return report;
}

nlohmann::json interval_to_json(const ConfidenceInterval& ci) {
    return {{"point", ci.point}, {"lo", ci.lo}, {"hi", ci.hi},
            {"level", ci.level}, {"method", ci.method}, {"resamples", ci.resamples}};
}

nlohmann::json report_to_json(const MetricsReport& report, nlohmann::json per_example) {
    nlohmann::json j{
        {"dataset", report.dataset},
        {"model_id", report.model_id},
        {"n", report.n},
        {"em", interval_to_json(report.em)},
        {"edit_sim", interval_to_json(report.edit_sim)},
        {"prefix_sim", interval_to_json(report.prefix_sim)},
        {"per_example", std::move(per_example)},
    };
    if (report.single_token) {
        j["single_token"] = {{"ppl", report.single_token->ppl},
                             {"r1", report.single_token->r1},
                             {"r5", report.single_token->r5},
                             {"mrr5", report.single_token->mrr5}};
    }
    return j;
}

}  // namespace coderag
