#pragma once

// Ridge regression kept as sufficient statistics: A = XᵀX, B = Xᵀy and a
// signed point count. Statistics are λ-free; the regularizer is a property
// of the query and is applied only when solving.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>

#include <cmath>
#include <concepts>
#include <optional>
#include <ranges>
#include <string>

#include "remodel/common.hpp"
#include "remodel/datastore.hpp"

namespace remodel {

/// Anything with a feature span and a scalar target (Record, RecordView).
template <class R>
concept RecordLike = requires(const R& r) {
    { r.target } -> std::convertible_to<double>;
    std::span<const double>(r.features);
};

template <class Seq>
concept RecordSequence = std::ranges::input_range<const Seq> && RecordLike<std::ranges::range_value_t<const Seq>>;

struct SufficientStats {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    std::int64_t n_points = 0;

    SufficientStats() = default;
    explicit SufficientStats(std::size_t d)
        : A(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))),
          B(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d))) {}

    std::size_t dim() const noexcept { return static_cast<std::size_t>(B.size()); }
};

struct LinRegModel {
    SufficientStats stats;
    double lambda = 0.0;
    Eigen::VectorXd weights;
    IdRange descriptor;
};

namespace linreg {

/// A[a][b] = Σ x_a x_b, B[a] = Σ x_a y over the points. The upper triangle is
/// accumulated and mirrored, so A is exactly symmetric.
template <RecordSequence Seq>
SufficientStats compute_stats(const Seq& points, std::size_t d) {
    SufficientStats s(d);
    const auto n = static_cast<Eigen::Index>(d);
    double* a = s.A.data();  // column-major; a[i + j*n]
    double* b = s.B.data();
    for (const auto& p : points) {
        const std::span<const double> x(p.features);
        if (x.size() != d)
            throw DataError("dimension mismatch: point has " + std::to_string(x.size()) + " features, expected " +
                            std::to_string(d));
        const double y = p.target;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double xj = x[static_cast<std::size_t>(j)];
            double* col = a + j * n;
            for (Eigen::Index i = 0; i <= j; ++i) col[i] += x[static_cast<std::size_t>(i)] * xj;
            b[j] += xj * y;
        }
        ++s.n_points;
    }
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j + 1; i < n; ++i) a[i + j * n] = a[j + i * n];
    return s;
}

/// Dimension is inferred from the first point; an empty sequence needs an explicit d.
template <RecordSequence Seq>
SufficientStats compute_stats(const Seq& points) {
    auto it = std::ranges::begin(points);
    if (it == std::ranges::end(points)) return SufficientStats(0);
    const auto d = std::span<const double>((*it).features).size();
    return compute_stats(points, d);
}

/// In-place signed accumulation without the non-negativity check. Plans may
/// pass through negative intermediate counts (a removal step before the
/// additions that cover it); callers validate the final composition.
inline void accumulate(SufficientStats& acc, const SufficientStats& delta, int sign) {
    if (acc.dim() != delta.dim())
        throw DataError("dimension mismatch: " + std::to_string(acc.dim()) + " vs " + std::to_string(delta.dim()));
    acc.A.noalias() += static_cast<double>(sign) * delta.A;
    acc.B.noalias() += static_cast<double>(sign) * delta.B;
    acc.n_points += sign * delta.n_points;
}

inline SufficientStats add_stats(const SufficientStats& base, const SufficientStats& delta, int sign) {
    if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
    if (base.dim() != delta.dim())
        throw DataError("dimension mismatch: " + std::to_string(base.dim()) + " vs " + std::to_string(delta.dim()));
    SufficientStats out = base;
    out.A.noalias() += static_cast<double>(sign) * delta.A;
    out.B.noalias() += static_cast<double>(sign) * delta.B;
    out.n_points += sign * delta.n_points;
    if (out.n_points < 0)
        throw InvalidPlanError("statistics composition left a negative point count (" +
                               std::to_string(out.n_points) + ")");
    return out;
}

/// Solves (A + λI) w = B. Cholesky first; LU with a rank check when the
/// shifted matrix is not numerically positive definite.
inline Eigen::VectorXd solve_weights(const SufficientStats& stats, double lambda) {
    if (lambda < 0 || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be finite and >= 0");
    const auto d = static_cast<Eigen::Index>(stats.dim());
    Eigen::MatrixXd m = stats.A;
    m.diagonal().array() += lambda;

    // LLT can "succeed" on a numerically singular matrix with a tiny pivot;
    // those go to the rank-revealing path.
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    const double max_diag = d > 0 ? m.diagonal().cwiseAbs().maxCoeff() : 0.0;
    const auto pivots_ok = [&] {
        const Eigen::MatrixXd l = llt.matrixL();
        return (l.diagonal().array().square() > 1e-13 * static_cast<double>(d) * max_diag).all();
    };
    if (llt.info() == Eigen::Success && pivots_ok()) {
        Eigen::VectorXd w = llt.solve(stats.B);
        const double resid = (m * w - stats.B).norm() / std::max(1.0, stats.B.norm());
        if (w.allFinite() && resid <= 1e-9) return w;
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (lu.rank() < d)
        throw SingularSystemError("singular system: rank " + std::to_string(lu.rank()) + " < " + std::to_string(d) +
                                  " (lambda = " + std::to_string(lambda) + ")");
    Eigen::VectorXd w = lu.solve(stats.B);
    // One step of iterative refinement; removal-induced cancellation can leave
    // the system badly scaled.
    w += lu.solve(stats.B - m * w);
    return w;
}

/// Combines two models' statistics. Disjoint descriptors: plain sum.
/// Overlapping descriptors: sum minus the statistics of the intersection,
/// which the caller must supply.
inline SufficientStats merge_models(const LinRegModel& m1, const LinRegModel& m2,
                                    const std::optional<SufficientStats>& overlap_stats) {
    const bool overlapping = m1.descriptor.overlaps(m2.descriptor);
    if (overlapping && !overlap_stats)
        throw InvalidPlanError("descriptors " + to_string(m1.descriptor) + " and " + to_string(m2.descriptor) +
                               " overlap; overlap statistics are required");
    if (!overlapping && overlap_stats)
        throw InvalidPlanError("overlap statistics supplied for disjoint descriptors");
    auto sum = add_stats(m1.stats, m2.stats, +1);
    return overlapping ? add_stats(sum, *overlap_stats, -1) : sum;
}

inline LinRegModel fit(SufficientStats stats, double lambda, IdRange descriptor) {
    LinRegModel m;
    m.weights = solve_weights(stats, lambda);
    m.stats = std::move(stats);
    m.lambda = lambda;
    m.descriptor = descriptor;
    return m;
}

/// Serialized form: l u64 | u u64 | n_points u64 | d u32 | A (row-major f64) | B f64.
inline std::string serialize(const SufficientStats& s, IdRange descriptor) {
    std::string out;
    const auto d = s.dim();
    out.reserve(28 + 8 * (d * d + d));
    io::put(out, descriptor.lo);
    io::put(out, descriptor.hi);
    io::put(out, static_cast<std::uint64_t>(s.n_points));
    io::put(out, static_cast<std::uint32_t>(d));
    const Eigen::MatrixXd row_major = s.A.transpose();  // column-major storage of Aᵀ == row-major A
    io::put_doubles(out, {row_major.data(), d * d});
    io::put_doubles(out, {s.B.data(), d});
    return out;
}

inline std::pair<SufficientStats, IdRange> deserialize(std::string_view bytes) {
    io::Reader r(bytes);
    IdRange desc;
    desc.lo = r.get<std::uint64_t>();
    desc.hi = r.get<std::uint64_t>();
    const auto n = r.get<std::uint64_t>();
    const auto d = r.get<std::uint32_t>();
    SufficientStats s(d);
    s.n_points = static_cast<std::int64_t>(n);
    Eigen::MatrixXd row_major(d, d);
    r.get_doubles({row_major.data(), std::size_t{d} * d});
    s.A = row_major.transpose();
    r.get_doubles({s.B.data(), d});
    if (r.remaining() != 0) throw CatalogError("trailing bytes in linreg payload");
    return {std::move(s), desc};
}

}  // namespace linreg
}  // namespace remodel
