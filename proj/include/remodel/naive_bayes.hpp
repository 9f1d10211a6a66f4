#pragma once

// Naive Bayes kept as per-class counters.
//
// Gaussian:    N_c (samples), S_jc = Σ x_j, SS_jc = Σ x_j² per class.
// Multinomial: M_c (samples, for the prior), N_ci = Σ x_i, N_c = Σ_i N_ci.
//
// Counters are additive, so adding, removing and merging point sets is
// elementwise signed addition.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "remodel/common.hpp"
#include "remodel/linreg.hpp"  // RecordSequence

namespace remodel {

enum class NBKind : std::uint8_t { gaussian = 0, multinomial = 1 };

struct GaussianClassStats {
    std::uint32_t classes = 0;
    std::uint32_t d = 0;
    std::vector<double> count;   // N_c
    std::vector<double> sum;     // S_jc, row per class
    std::vector<double> sq_sum;  // SS_jc

    GaussianClassStats() = default;
    GaussianClassStats(std::uint32_t c, std::uint32_t dim)
        : classes(c), d(dim), count(c, 0.0), sum(std::size_t{c} * dim, 0.0), sq_sum(std::size_t{c} * dim, 0.0) {}

    double total() const noexcept {
        double t = 0;
        for (double c : count) t += c;
        return t;
    }
    friend bool operator==(const GaussianClassStats&, const GaussianClassStats&) = default;
};

struct MultinomialClassStats {
    std::uint32_t classes = 0;
    std::uint32_t d = 0;
    std::vector<double> samples;        // M_c
    std::vector<double> feature_total;  // N_c
    std::vector<double> feature_count;  // N_ci, row per class

    MultinomialClassStats() = default;
    MultinomialClassStats(std::uint32_t c, std::uint32_t dim)
        : classes(c), d(dim), samples(c, 0.0), feature_total(c, 0.0), feature_count(std::size_t{c} * dim, 0.0) {}

    double total() const noexcept {
        double t = 0;
        for (double c : samples) t += c;
        return t;
    }
    friend bool operator==(const MultinomialClassStats&, const MultinomialClassStats&) = default;
};

struct NBParameters {
    NBKind kind = NBKind::gaussian;
    std::uint32_t classes = 0;
    std::uint32_t d = 0;
    std::vector<double> priors;
    std::vector<bool> defined;  // false for a Gaussian class with no samples
    std::vector<double> mean;   // gaussian, C*d
    std::vector<double> var;    // gaussian, C*d, floored
    std::vector<double> theta;  // multinomial, C*d
    double variance_floor = 0.0;
};

struct NBPrediction {
    std::uint32_t label = 0;
    std::vector<double> log_scores;
};

namespace nb {

namespace detail {

inline std::uint32_t checked_label(double y, std::uint32_t classes) {
    if (!(y >= 0) || y != std::floor(y) || y >= classes)
        throw DataError("class label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
    return static_cast<std::uint32_t>(y);
}

inline void check_dim(std::size_t got, std::uint32_t d) {
    if (got != d)
        throw DataError("dimension mismatch: point has " + std::to_string(got) + " features, expected " +
                        std::to_string(d));
}

inline void signed_add(std::vector<double>& base, const std::vector<double>& delta, double sign) {
    for (std::size_t i = 0; i < base.size(); ++i) base[i] += sign * delta[i];
}

// Exact for integer counters; rounding residue below 1e-9 of the base
// magnitude on real-valued counters is clamped to zero.
inline void check_non_negative(std::vector<double>& v, const std::vector<double>& base, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] >= 0) continue;
        if (v[i] > -1e-9 * std::max(1.0, std::abs(base[i]))) {
            v[i] = 0;
            continue;
        }
        throw InvalidPlanError(std::string("composition left a negative ") + what + " (" + std::to_string(v[i]) + ")");
    }
}

template <class S>
void check_shape(const S& a, const S& b) {
    if (a.classes != b.classes || a.d != b.d)
        throw DataError("class statistics shape mismatch: (" + std::to_string(a.classes) + "," +
                        std::to_string(a.d) + ") vs (" + std::to_string(b.classes) + "," + std::to_string(b.d) + ")");
}

}  // namespace detail

template <RecordSequence Seq>
GaussianClassStats compute_gaussian_stats(const Seq& points, std::uint32_t class_count, std::uint32_t d) {
    GaussianClassStats s(class_count, d);
    for (const auto& p : points) {
        const std::span<const double> x(p.features);
        detail::check_dim(x.size(), d);
        const auto c = detail::checked_label(p.target, class_count);
        s.count[c] += 1;
        double* sum = s.sum.data() + std::size_t{c} * d;
        double* sq = s.sq_sum.data() + std::size_t{c} * d;
        for (std::uint32_t j = 0; j < d; ++j) {
            sum[j] += x[j];
            sq[j] += x[j] * x[j];
        }
    }
    return s;
}

template <RecordSequence Seq>
MultinomialClassStats compute_multinomial_stats(const Seq& points, std::uint32_t class_count, std::uint32_t d) {
    MultinomialClassStats s(class_count, d);
    for (const auto& p : points) {
        const std::span<const double> x(p.features);
        detail::check_dim(x.size(), d);
        const auto c = detail::checked_label(p.target, class_count);
        s.samples[c] += 1;
        double* counts = s.feature_count.data() + std::size_t{c} * d;
        for (std::uint32_t j = 0; j < d; ++j) {
            if (x[j] < 0) throw DataError("multinomial features must be non-negative counts");
            counts[j] += x[j];
            s.feature_total[c] += x[j];
        }
    }
    return s;
}

inline GaussianClassStats update_stats(const GaussianClassStats& base, const GaussianClassStats& delta, int sign) {
    if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
    detail::check_shape(base, delta);
    auto out = base;
    detail::signed_add(out.count, delta.count, sign);
    detail::signed_add(out.sum, delta.sum, sign);
    detail::signed_add(out.sq_sum, delta.sq_sum, sign);
    detail::check_non_negative(out.count, base.count, "class count");
    detail::check_non_negative(out.sq_sum, base.sq_sum, "square sum");
    return out;
}

inline MultinomialClassStats update_stats(const MultinomialClassStats& base, const MultinomialClassStats& delta,
                                          int sign) {
    if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
    detail::check_shape(base, delta);
    auto out = base;
    detail::signed_add(out.samples, delta.samples, sign);
    detail::signed_add(out.feature_total, delta.feature_total, sign);
    detail::signed_add(out.feature_count, delta.feature_count, sign);
    detail::check_non_negative(out.samples, base.samples, "sample count");
    detail::check_non_negative(out.feature_total, base.feature_total, "feature total");
    detail::check_non_negative(out.feature_count, base.feature_count, "feature count");
    return out;
}

/// Unchecked in-place signed accumulation; see linreg::accumulate.
inline void accumulate(GaussianClassStats& acc, const GaussianClassStats& delta, int sign) {
    detail::check_shape(acc, delta);
    detail::signed_add(acc.count, delta.count, sign);
    detail::signed_add(acc.sum, delta.sum, sign);
    detail::signed_add(acc.sq_sum, delta.sq_sum, sign);
}

inline void accumulate(MultinomialClassStats& acc, const MultinomialClassStats& delta, int sign) {
    detail::check_shape(acc, delta);
    detail::signed_add(acc.samples, delta.samples, sign);
    detail::signed_add(acc.feature_total, delta.feature_total, sign);
    detail::signed_add(acc.feature_count, delta.feature_count, sign);
}

/// Final check on a composed result: every counter must be non-negative.
/// `scale` supplies the magnitudes used for the rounding allowance.
inline void validate(GaussianClassStats& s, const GaussianClassStats& scale) {
    detail::check_non_negative(s.count, scale.count, "class count");
    detail::check_non_negative(s.sq_sum, scale.sq_sum, "square sum");
}

inline void validate(MultinomialClassStats& s, const MultinomialClassStats& scale) {
    detail::check_non_negative(s.samples, scale.samples, "sample count");
    detail::check_non_negative(s.feature_total, scale.feature_total, "feature total");
    detail::check_non_negative(s.feature_count, scale.feature_count, "feature count");
}

/// Case 1 (no overlap): s1 + s2. Case 2: s1 + s2 - overlap.
template <class S>
S merge_stats(const S& s1, IdRange r1, const S& s2, IdRange r2, const std::optional<S>& overlap) {
    const bool overlapping = r1.overlaps(r2);
    if (overlapping && !overlap)
        throw InvalidPlanError("descriptors " + to_string(r1) + " and " + to_string(r2) +
                               " overlap; overlap statistics are required");
    if (!overlapping && overlap) throw InvalidPlanError("overlap statistics supplied for disjoint descriptors");
    auto sum = update_stats(s1, s2, +1);
    return overlapping ? update_stats(sum, *overlap, -1) : sum;
}

inline NBParameters extract_parameters(const GaussianClassStats& s) {
    const double n = s.total();
    if (n <= 0) throw DataError("cannot extract parameters from empty statistics");
    NBParameters p;
    p.kind = NBKind::gaussian;
    p.classes = s.classes;
    p.d = s.d;
    p.priors.resize(s.classes);
    p.defined.assign(s.classes, false);
    p.mean.assign(s.sum.size(), 0.0);
    p.var.assign(s.sum.size(), 0.0);

    // Floor relative to the largest pooled feature variance.
    double max_var = 0;
    for (std::uint32_t j = 0; j < s.d; ++j) {
        double sum = 0, sq = 0;
        for (std::uint32_t c = 0; c < s.classes; ++c) {
            sum += s.sum[std::size_t{c} * s.d + j];
            sq += s.sq_sum[std::size_t{c} * s.d + j];
        }
        const double mu = sum / n;
        max_var = std::max(max_var, sq / n - mu * mu);
    }
    p.variance_floor = 1e-9 * (max_var + 1.0);

    for (std::uint32_t c = 0; c < s.classes; ++c) {
        p.priors[c] = s.count[c] / n;
        if (s.count[c] <= 0) continue;
        p.defined[c] = true;
        for (std::uint32_t j = 0; j < s.d; ++j) {
            const auto k = std::size_t{c} * s.d + j;
            const double mu = s.sum[k] / s.count[c];
            p.mean[k] = mu;
            p.var[k] = std::max(s.sq_sum[k] / s.count[c] - mu * mu, p.variance_floor);
        }
    }
    return p;
}

inline NBParameters extract_parameters(const MultinomialClassStats& s) {
    const double n = s.total();
    if (n <= 0) throw DataError("cannot extract parameters from empty statistics");
    NBParameters p;
    p.kind = NBKind::multinomial;
    p.classes = s.classes;
    p.d = s.d;
    p.priors.resize(s.classes);
    p.defined.assign(s.classes, true);
    p.theta.resize(s.feature_count.size());
    for (std::uint32_t c = 0; c < s.classes; ++c) {
        p.priors[c] = s.samples[c] / n;
        const double denom = s.feature_total[c] + s.d;
        for (std::uint32_t i = 0; i < s.d; ++i) {
            const auto k = std::size_t{c} * s.d + i;
            p.theta[k] = (s.feature_count[k] + 1.0) / denom;
        }
    }
    return p;
}

/// Log-space argmax. Ties go to the smallest class index. The multinomial
/// score omits the factorial term, which does not depend on the class.
inline NBPrediction predict(const NBParameters& p, std::span<const double> x) {
    detail::check_dim(x.size(), p.d);
    NBPrediction out;
    out.log_scores.assign(p.classes, -std::numeric_limits<double>::infinity());
    for (std::uint32_t c = 0; c < p.classes; ++c) {
        if (!p.defined[c] || p.priors[c] <= 0) continue;
        double score = std::log(p.priors[c]);
        if (p.kind == NBKind::gaussian) {
            for (std::uint32_t j = 0; j < p.d; ++j) {
                const auto k = std::size_t{c} * p.d + j;
                const double diff = x[j] - p.mean[k];
                score += -0.5 * std::log(2.0 * std::numbers::pi * p.var[k]) - diff * diff / (2.0 * p.var[k]);
            }
        } else {
            for (std::uint32_t i = 0; i < p.d; ++i) score += x[i] * std::log(p.theta[std::size_t{c} * p.d + i]);
        }
        out.log_scores[c] = score;
    }
    for (std::uint32_t c = 1; c < p.classes; ++c)
        if (out.log_scores[c] > out.log_scores[out.label]) out.label = c;
    return out;
}

// Payload: class_count u32 | d u32 | kind u8 | counters as f64 arrays.
inline std::string serialize(const GaussianClassStats& s) {
    std::string out;
    io::put(out, s.classes);
    io::put(out, s.d);
    io::put(out, static_cast<std::uint8_t>(NBKind::gaussian));
    io::put_doubles(out, s.count);
    io::put_doubles(out, s.sum);
    io::put_doubles(out, s.sq_sum);
    return out;
}

inline std::string serialize(const MultinomialClassStats& s) {
    std::string out;
    io::put(out, s.classes);
    io::put(out, s.d);
    io::put(out, static_cast<std::uint8_t>(NBKind::multinomial));
    io::put_doubles(out, s.samples);
    io::put_doubles(out, s.feature_total);
    io::put_doubles(out, s.feature_count);
    return out;
}

inline NBKind peek_kind(std::string_view bytes) {
    io::Reader r(bytes);
    r.get<std::uint32_t>();
    r.get<std::uint32_t>();
    const auto k = r.get<std::uint8_t>();
    if (k > 1) throw CatalogError("unknown naive Bayes payload kind");
    return static_cast<NBKind>(k);
}

inline GaussianClassStats deserialize_gaussian(std::string_view bytes) {
    io::Reader r(bytes);
    const auto c = r.get<std::uint32_t>();
    const auto d = r.get<std::uint32_t>();
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(NBKind::gaussian))
        throw CatalogError("payload is not gaussian naive Bayes");
    GaussianClassStats s(c, d);
    r.get_doubles(s.count);
    r.get_doubles(s.sum);
    r.get_doubles(s.sq_sum);
    if (r.remaining() != 0) throw CatalogError("trailing bytes in naive Bayes payload");
    return s;
}

inline MultinomialClassStats deserialize_multinomial(std::string_view bytes) {
    io::Reader r(bytes);
    const auto c = r.get<std::uint32_t>();
    const auto d = r.get<std::uint32_t>();
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(NBKind::multinomial))
        throw CatalogError("payload is not multinomial naive Bayes");
    MultinomialClassStats s(c, d);
    r.get_doubles(s.samples);
    r.get_doubles(s.feature_total);
    r.get_doubles(s.feature_count);
    if (r.remaining() != 0) throw CatalogError("trailing bytes in naive Bayes payload");
    return s;
}

}  // namespace nb
}  // namespace remodel
