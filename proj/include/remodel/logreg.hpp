#pragma once

// Chunked logistic regression.
//
// Every chunk model is trained independently by plain SGD from w = 0, and a
// query model is the uniform average of the chunk weight vectors covering it
// (mixture-weight method). Chunks sit on a global grid anchored at id 0, so
// chunks trained by one query are reusable by every later query that fully
// contains them, and each chunk's shuffle seed depends only on its absolute
// start id. Reuse therefore never changes the averaged weights.

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "remodel/common.hpp"
#include "remodel/datastore.hpp"
#include "remodel/linreg.hpp"  // RecordSequence

namespace remodel {

struct SGDConfig {
    double learning_rate = 0.01;  // α
    double lambda = 1e-4;         // L2 weight on ‖w‖²
    std::uint32_t epochs = 1;     // T
    std::uint64_t shuffle_seed = 42;

    void validate() const {
        if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be > 0");
        if (!(lambda > 0)) throw std::invalid_argument("lambda must be > 0 for logistic regression");
        if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    }
};

struct ChunkModel {
    IdRange descriptor;
    std::vector<double> w;
    std::uint64_t chunk_size = 0;
};

struct MixtureModel {
    std::vector<double> w_mu;
    std::vector<IdRange> contributing;  // grid chunks in id order, then the remainder (if any)
    std::uint64_t chunk_size = 0;
};

struct BoundInputs {
    double R = 1.0;
    double lambda = 1.0;
    std::uint64_t l = 1;
    std::uint64_t q_size = 1;
    std::uint64_t p = 1;
    double delta = 0.05;
};

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Chunk layout of a range: full-length chunks plus an optional short tail.
struct ChunkLayout {
    std::vector<IdRange> chunks;
    std::optional<IdRange> remainder;
};

/// Layout of a query on the global grid: whole grid chunks inside the query,
/// and the leftover head/tail pieces that make up the (single) remainder chunk.
struct GridLayout {
    std::vector<IdRange> chunks;
    std::vector<IdRange> remainder_pieces;
};

namespace logreg {

inline double sigmoid(double z) noexcept {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
inline double softplus(double z) noexcept { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline bool binary_label(double y) {
    if (y == 0.0) return false;
    if (y == 1.0) return true;
    throw DataError("logistic regression needs labels in {0,1}, got " + std::to_string(y));
}

/// F(w) = (1/n) Σ CE(w; x, y) + λ‖w‖² and its gradient. An empty batch
/// contributes only the regularizer.
template <RecordSequence Seq>
LossAndGradient loss_and_gradient(std::span<const double> w, const Seq& batch, double lambda) {
    LossAndGradient out;
    out.grad.assign(w.size(), 0.0);
    std::size_t n = 0;
    for (const auto& p : batch) {
        const std::span<const double> x(p.features);
        if (x.size() != w.size()) throw DataError("dimension mismatch in logistic batch");
        const bool y = binary_label(p.target);
        const double z = dot(w, x);
        out.loss += y ? softplus(-z) : softplus(z);
        const double r = sigmoid(z) - (y ? 1.0 : 0.0);
        for (std::size_t i = 0; i < w.size(); ++i) out.grad[i] += r * x[i];
        ++n;
    }
    if (n > 0) {
        out.loss /= static_cast<double>(n);
        for (double& g : out.grad) g /= static_cast<double>(n);
    }
    double sq = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        sq += w[i] * w[i];
        out.grad[i] += 2.0 * lambda * w[i];
    }
    out.loss += lambda * sq;
    return out;
}

namespace detail {

// Fisher-Yates driven by SplitMix64 so that orderings are identical across
// standard library implementations.
inline void shuffle(std::vector<std::uint32_t>& idx, std::uint64_t seed) {
    std::uint64_t state = seed;
    for (std::size_t i = idx.size(); i > 1; --i) {
        state = splitmix64(state);
        const auto j = static_cast<std::size_t>(state % i);
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace detail

template <class Seq>
concept IndexableRecords = RecordSequence<Seq> && requires(const Seq& s, std::size_t i) {
    { std::ranges::size(s) } -> std::convertible_to<std::size_t>;
    s[i].id;
};

/// Per-sample SGD from w = 0: T passes, each in a seeded shuffled order,
/// w ← w − α((h(x) − y)x + 2λw).
template <IndexableRecords Seq>
ChunkModel train_chunk(const Seq& points, const SGDConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(std::ranges::size(points));
    if (n == 0) throw DataError("cannot train on an empty chunk");
    const std::size_t d = std::span<const double>(points[0].features).size();

    ChunkModel m;
    m.descriptor = {points[0].id, points[n - 1].id};
    m.chunk_size = n;
    m.w.assign(d, 0.0);

    std::vector<std::uint32_t> order(n);
    const double alpha = cfg.learning_rate;
    const double decay = 1.0 - 2.0 * alpha * cfg.lambda;
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
        detail::shuffle(order, hash_combine(cfg.shuffle_seed, epoch));
        for (const auto i : order) {
            const auto& p = points[i];
            const std::span<const double> x(p.features);
            const double r = sigmoid(dot(m.w, x)) - (binary_label(p.target) ? 1.0 : 0.0);
            for (std::size_t k = 0; k < d; ++k) m.w[k] = decay * m.w[k] - alpha * r * x[k];
        }
        for (double v : m.w)
            if (!std::isfinite(v))
                throw DivergenceError("SGD diverged (non-finite weights) with learning rate alpha = " +
                                      std::to_string(alpha));
    }
    return m;
}

/// Splits [a,b] into consecutive length-l chunks starting at a; a short
/// trailing piece is returned as the remainder. Requires l ≤ |range|/2.
inline ChunkLayout make_chunks(IdRange range, std::uint64_t l) {
    if (l == 0 || 2 * l > range.size())
        throw std::invalid_argument("chunk size " + std::to_string(l) + " violates l <= |range|/2 for " +
                                    to_string(range));
    ChunkLayout out;
    Id start = range.lo;
    while (range.hi - start + 1 >= l) {
        out.chunks.push_back({start, start + l - 1});
        start += l;
        if (start > range.hi) break;
    }
    if (start <= range.hi && (out.chunks.empty() || out.chunks.back().hi < range.hi))
        out.remainder = IdRange{start, range.hi};
    return out;
}

inline bool is_grid_chunk(IdRange r, std::uint64_t l) noexcept {
    return l > 0 && r.lo % l == 0 && r.size() == l;
}

/// Global-grid layout of a query (grid anchored at id 0).
inline GridLayout grid_layout(IdRange query, std::uint64_t l) {
    if (l == 0) throw std::invalid_argument("chunk size must be >= 1");
    GridLayout out;
    const Id first = (query.lo + l - 1) / l * l;
    Id start = first;
    while (start >= first && start <= query.hi && query.hi - start + 1 >= l) {
        out.chunks.push_back({start, start + l - 1});
        start += l;
    }
    if (out.chunks.empty()) {
        out.remainder_pieces.push_back(query);
        return out;
    }
    if (first > query.lo) out.remainder_pieces.push_back({query.lo, first - 1});
    if (out.chunks.back().hi < query.hi) out.remainder_pieces.push_back({out.chunks.back().hi + 1, query.hi});
    return out;
}

/// Shuffle seed of a chunk: depends only on the global seed and its first id.
inline std::uint64_t chunk_seed(std::uint64_t global_seed, Id chunk_start) noexcept {
    return hash_combine(global_seed, chunk_start);
}

struct AssemblyTimings {
    double io_ms = 0;
    double train_ms = 0;
    double merge_ms = 0;
    std::uint64_t bytes_fetched = 0;
    std::uint64_t rows_trained = 0;
};

/// Uniform average, accumulated in the given order.
inline std::vector<double> average(const std::vector<const std::vector<double>*>& ws) {
    if (ws.empty()) throw std::invalid_argument("nothing to average");
    std::vector<double> mu(ws.front()->size(), 0.0);
    for (const auto* w : ws)
        for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += (*w)[i];
    const double p = static_cast<double>(ws.size());
    for (double& v : mu) v /= p;
    return mu;
}

/// Builds the mixture model for a query. `lookup` returns a stored chunk
/// model for a grid chunk when one may be reused; every other grid chunk is
/// fetched, trained, and handed to `on_trained` (for materialization). The
/// leftover head/tail ids are trained together as one unmaterialized chunk.
inline MixtureModel assemble(IdRange query, std::uint64_t l, const DataStore& store, const SGDConfig& cfg,
                             const std::function<std::optional<ChunkModel>(IdRange)>& lookup,
                             const std::function<void(const ChunkModel&)>& on_trained,
                             AssemblyTimings* timings = nullptr) {
    using Clock = std::chrono::steady_clock;
    AssemblyTimings local;
    AssemblyTimings& t = timings ? *timings : local;
    const auto ms_since = [](Clock::time_point s) {
        return std::chrono::duration<double, std::milli>(Clock::now() - s).count();
    };

    const auto layout = grid_layout(query, l);
    std::vector<ChunkModel> models(layout.chunks.size());
    std::vector<bool> have(layout.chunks.size(), false);
    if (lookup) {
        for (std::size_t i = 0; i < layout.chunks.size(); ++i) {
            auto s = Clock::now();
            if (auto m = lookup(layout.chunks[i])) {
                if (m->descriptor != layout.chunks[i] || m->w.size() != store.meta().d)
                    throw CatalogError("stored chunk does not match grid chunk " + to_string(layout.chunks[i]));
                models[i] = std::move(*m);
                have[i] = true;
            }
            t.io_ms += ms_since(s);
        }
    }

    // Contiguous runs of missing chunks are fetched with one read each.
    std::size_t i = 0;
    while (i < layout.chunks.size()) {
        if (have[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < layout.chunks.size() && !have[j + 1]) ++j;
        auto s = Clock::now();
        const auto batch = store.fetch_range(layout.chunks[i].lo, layout.chunks[j].hi);
        t.io_ms += ms_since(s);
        t.bytes_fetched += batch.raw().size_bytes();
        for (std::size_t k = i; k <= j; ++k) {
            s = Clock::now();
            const auto chunk = batch.slice(layout.chunks[k].lo - batch.first_id(), l);
            SGDConfig c = cfg;
            c.shuffle_seed = chunk_seed(cfg.shuffle_seed, layout.chunks[k].lo);
            models[k] = train_chunk(chunk, c);
            t.train_ms += ms_since(s);
            t.rows_trained += l;
            if (on_trained) on_trained(models[k]);
        }
        i = j + 1;
    }

    std::optional<ChunkModel> remainder;
    if (!layout.remainder_pieces.empty()) {
        // Head and tail rows are packed into one buffer; row ids inside it are
        // not meaningful, so the descriptor is set to the pieces' hull.
        std::vector<double> rows;
        for (const auto& piece : layout.remainder_pieces) {
            auto s = Clock::now();
            const auto batch = store.fetch_range(piece);
            t.io_ms += ms_since(s);
            t.bytes_fetched += batch.raw().size_bytes();
            rows.insert(rows.end(), batch.raw().begin(), batch.raw().end());
        }
        auto s = Clock::now();
        const RecordBatch packed(layout.remainder_pieces.front().lo, store.meta().d, std::move(rows));
        SGDConfig c = cfg;
        c.shuffle_seed = chunk_seed(cfg.shuffle_seed, layout.remainder_pieces.front().lo);
        remainder = train_chunk(packed, c);
        remainder->descriptor = {layout.remainder_pieces.front().lo, layout.remainder_pieces.back().hi};
        t.train_ms += ms_since(s);
        t.rows_trained += packed.size();
    }

    auto s = Clock::now();
    MixtureModel out;
    out.chunk_size = l;
    std::vector<const std::vector<double>*> ws;
    for (std::size_t k = 0; k < models.size(); ++k) {
        ws.push_back(&models[k].w);
        out.contributing.push_back(layout.chunks[k]);
    }
    if (remainder) {
        ws.push_back(&remainder->w);
        out.contributing.push_back(remainder->descriptor);
    }
    out.w_mu = average(ws);
    t.merge_ms += ms_since(s);
    return out;
}

/// Plain SGD over the whole range (the reference model w_SGD).
inline ChunkModel train_full(IdRange query, const DataStore& store, const SGDConfig& cfg) {
    SGDConfig c = cfg;
    c.shuffle_seed = chunk_seed(cfg.shuffle_seed, query.lo);
    return train_chunk(store.fetch_range(query), c);
}

/// Training accuracy of sign(wᵀx) against {0,1} labels.
template <RecordSequence Seq>
double accuracy(std::span<const double> w, const Seq& points) {
    std::size_t correct = 0, n = 0;
    for (const auto& p : points) {
        const bool predicted = dot(w, std::span<const double>(p.features)) > 0;
        correct += predicted == binary_label(p.target) ? 1 : 0;
        ++n;
    }
    return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
}

/// Right-hand side of the mixture-vs-SGD deviation bound:
///   R√2/λ (1/√l + 1/√|D_q|) + 2√2 R / (λ √(p l)) · √(ln(1/δ))
inline double theorem1_bound(const BoundInputs& in) {
    if (!(in.delta > 0 && in.delta < 1)) throw std::invalid_argument("delta must lie in (0,1)");
    if (!(in.R > 0)) throw std::invalid_argument("R must be > 0");
    if (!(in.lambda > 0)) throw std::invalid_argument("lambda must be > 0");
    if (in.l == 0 || in.q_size == 0 || in.p == 0) throw std::invalid_argument("l, |D_q| and p must be >= 1");
    const double l = static_cast<double>(in.l);
    const double q = static_cast<double>(in.q_size);
    const double p = static_cast<double>(in.p);
    const double first = in.R * std::sqrt(2.0) / in.lambda * (1.0 / std::sqrt(l) + 1.0 / std::sqrt(q));
    const double second = 2.0 * std::sqrt(2.0) * in.R / (in.lambda * std::sqrt(p * l)) * std::sqrt(std::log(1.0 / in.delta));
    return first + second;
}

// Payload: l u64 | u u64 | chunk_size u64 | d u32 | w f64.
inline std::string serialize(const ChunkModel& m) {
    std::string out;
    io::put(out, m.descriptor.lo);
    io::put(out, m.descriptor.hi);
    io::put(out, m.chunk_size);
    io::put(out, static_cast<std::uint32_t>(m.w.size()));
    io::put_doubles(out, m.w);
    return out;
}

inline ChunkModel deserialize(std::string_view bytes) {
    io::Reader r(bytes);
    ChunkModel m;
    m.descriptor.lo = r.get<std::uint64_t>();
    m.descriptor.hi = r.get<std::uint64_t>();
    m.chunk_size = r.get<std::uint64_t>();
    m.w.resize(r.get<std::uint32_t>());
    r.get_doubles(m.w);
    if (r.remaining() != 0) throw CatalogError("trailing bytes in chunk payload");
    return m;
}

}  // namespace logreg
}  // namespace remodel
