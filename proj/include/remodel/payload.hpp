#pragma once

// The stored form of a model, one alternative per model kind, plus the
// kind-dispatched operations the executor needs on statistics payloads.

#include <string>
#include <string_view>
#include <variant>

#include "remodel/common.hpp"
#include "remodel/datastore.hpp"
#include "remodel/linreg.hpp"
#include "remodel/logreg.hpp"
#include "remodel/naive_bayes.hpp"

namespace remodel {

using Payload = std::variant<SufficientStats, GaussianClassStats, MultinomialClassStats, ChunkModel>;

inline ModelKind payload_kind(const Payload& p) {
    switch (p.index()) {
        case 0: return ModelKind::linreg;
        case 1: return ModelKind::nb_gaussian;
        case 2: return ModelKind::nb_multinomial;
        default: return ModelKind::logreg_chunk;
    }
}

inline std::string encode_payload(const Payload& p, IdRange range) {
    return std::visit(
        [&](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, SufficientStats>) return linreg::serialize(v, range);
            else if constexpr (std::is_same_v<T, ChunkModel>) return logreg::serialize(v);
            else return nb::serialize(v);
        },
        p);
}

inline Payload decode_payload(ModelKind kind, std::string_view bytes) {
    switch (kind) {
        case ModelKind::linreg: return linreg::deserialize(bytes).first;
        case ModelKind::nb_gaussian: return nb::deserialize_gaussian(bytes);
        case ModelKind::nb_multinomial: return nb::deserialize_multinomial(bytes);
        case ModelKind::logreg_chunk: return logreg::deserialize(bytes);
    }
    throw CatalogError("unknown model kind");
}

inline bool is_stats_kind(ModelKind k) noexcept { return k != ModelKind::logreg_chunk; }

/// Zero statistics of the right shape for a statistics kind.
inline Payload empty_payload(ModelKind kind, const DatasetMeta& meta) {
    switch (kind) {
        case ModelKind::linreg: return SufficientStats(meta.d);
        case ModelKind::nb_gaussian: return GaussianClassStats(meta.class_count, meta.d);
        case ModelKind::nb_multinomial: return MultinomialClassStats(meta.class_count, meta.d);
        case ModelKind::logreg_chunk: break;
    }
    throw std::invalid_argument("logistic chunks have no additive statistics");
}

inline void check_kind_fits(ModelKind kind, const DatasetMeta& meta) {
    if (kind == ModelKind::linreg) return;
    if (meta.target_kind != TargetKind::classification)
        throw DataError(to_string(kind) + " needs a classification dataset");
    if (kind == ModelKind::logreg_chunk && meta.class_count != 2)
        throw DataError("logistic regression needs exactly 2 classes, dataset has " +
                        std::to_string(meta.class_count));
}

template <RecordSequence Seq>
Payload compute_payload(ModelKind kind, const Seq& points, const DatasetMeta& meta) {
    switch (kind) {
        case ModelKind::linreg: return linreg::compute_stats(points, meta.d);
        case ModelKind::nb_gaussian: return nb::compute_gaussian_stats(points, meta.class_count, meta.d);
        case ModelKind::nb_multinomial: return nb::compute_multinomial_stats(points, meta.class_count, meta.d);
        case ModelKind::logreg_chunk: break;
    }
    throw std::invalid_argument("logistic chunks have no additive statistics");
}

/// acc += sign * delta, unchecked (see linreg::accumulate).
inline void accumulate(Payload& acc, const Payload& delta, int sign) {
    if (acc.index() != delta.index()) throw DataError("cannot combine payloads of different kinds");
    std::visit(
        [&](auto& a) {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, SufficientStats>) linreg::accumulate(a, std::get<T>(delta), sign);
            else if constexpr (std::is_same_v<T, ChunkModel>) throw std::invalid_argument("chunk models are not additive");
            else nb::accumulate(a, std::get<T>(delta), sign);
        },
        acc);
}

/// Point count represented by a statistics payload.
inline double point_count(const Payload& p) {
    return std::visit(
        [](const auto& v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, SufficientStats>) return static_cast<double>(v.n_points);
            else if constexpr (std::is_same_v<T, ChunkModel>) return static_cast<double>(v.descriptor.size());
            else return v.total();
        },
        p);
}

}  // namespace remodel
