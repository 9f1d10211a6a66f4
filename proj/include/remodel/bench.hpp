#pragma once

// Speedup-vs-coverage harness. For each coverage target a fresh catalog is
// seeded with randomly placed models until the target unique coverage is
// reached, then every query is timed twice: as a from-scratch build (T0) and
// through the planner (T). Speedup is reported as mean(T0) / mean(T).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "remodel/catalog.hpp"
#include "remodel/cost_model.hpp"
#include "remodel/datastore.hpp"
#include "remodel/executor.hpp"
#include "remodel/payload.hpp"

namespace remodel {

struct SizeDist {
    enum class Type { fixed, uniform, normal } type = Type::normal;
    double a = 50'000;  // fixed value, uniform lo, or normal mean
    double b = 12'500;  // uniform hi or normal sigma

    static SizeDist fixed(double k) { return {Type::fixed, k, 0}; }
    static SizeDist uniform(double lo, double hi) { return {Type::uniform, lo, hi}; }
    static SizeDist normal(double mu, double sigma) { return {Type::normal, mu, sigma}; }

    void validate() const {
        const bool ok = type == Type::fixed ? a >= 1 : type == Type::uniform ? (a >= 1 && b >= a) : (a >= 1 && b >= 0);
        if (!ok) throw std::invalid_argument("size distribution must have positive support");
    }

    /// Draws a size in [lo, hi], resampling out-of-range normal draws.
    std::uint64_t sample(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) const {
        const auto clamp = [&](double v) {
            return std::clamp<std::uint64_t>(static_cast<std::uint64_t>(std::llround(std::max(v, 0.0))), lo, hi);
        };
        switch (type) {
            case Type::fixed: return clamp(a);
            case Type::uniform: return clamp(std::uniform_real_distribution<double>(a, b)(rng));
            case Type::normal: {
                std::normal_distribution<double> g(a, b);
                for (int tries = 0; tries < 64; ++tries) {
                    const double v = g(rng);
                    if (v >= static_cast<double>(lo) && v <= static_cast<double>(hi)) return clamp(v);
                }
                return clamp(a);
            }
        }
        return lo;
    }

    static SizeDist parse(const std::string& text) {
        const auto colon = text.find(':');
        const auto name = text.substr(0, colon);
        std::vector<double> args;
        if (colon != std::string::npos) {
            std::istringstream ss(text.substr(colon + 1));
            std::string tok;
            while (std::getline(ss, tok, ',')) args.push_back(std::stod(tok));
        }
        SizeDist d;
        if (name == "fixed" && args.size() == 1) d = fixed(args[0]);
        else if (name == "uniform" && args.size() == 2) d = uniform(args[0], args[1]);
        else if (name == "normal" && args.size() == 2) d = normal(args[0], args[1]);
        else throw std::invalid_argument("bad size distribution '" + text + "' (fixed:k, uniform:lo,hi, normal:mu,sigma)");
        d.validate();
        return d;
    }
};

struct BenchSpec {
    std::vector<double> coverage_targets{0, 20, 40, 60, 80, 90};
    SizeDist model_size = SizeDist::normal(50'000, 12'500);
    SizeDist query_size = SizeDist::normal(50'000, 12'500);
    std::uint64_t query_count = 200;
    QueryConfig cfg;  // kind, λ, SGD settings, chunk size
    std::uint64_t seed = 42;
    int repeats = 1;        // timing repetitions per query; the minimum is kept
    bool parallel = false;  // run framework queries concurrently (correctness only)

    void validate() const {
        for (double c : coverage_targets)
            if (!(c >= 0 && c <= 100)) throw std::invalid_argument("coverage targets must lie in [0,100]");
        if (query_count < 1) throw std::invalid_argument("query count must be >= 1");
        if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
        model_size.validate();
        query_size.validate();
    }
};

struct BenchRow {
    double coverage_target = 0;
    double coverage = 0;  // achieved
    bool reached = true;
    std::size_t models = 0;
    double speedup = 0;
    double baseline_ms = 0;   // mean T0
    double framework_ms = 0;  // mean T
    double plan_ms = 0, io_ms = 0, merge_ms = 0, train_ms = 0;
    // Logistic only, in percentage points of training accuracy (A0 − A).
    double acc_mean_diff = 0, acc_pos_mean_diff = 0, acc_max_diff = 0;
    std::uint64_t catalog_bytes = 0;
    std::vector<double> speedups;  // per query T0/T, for diagnostics
};

struct BenchResult {
    std::vector<BenchRow> rows;

    std::string to_csv() const {
        std::ostringstream os;
        os << "coverage,speedup,plan_ms,io_ms,merge_ms,train_ms,acc_mean_diff,acc_pos_mean_diff,acc_max_diff,"
              "catalog_bytes\n";
        os << std::setprecision(6);
        for (const auto& r : rows) {
            if (!r.reached) continue;
            os << r.coverage_target << ',' << r.speedup << ',' << r.plan_ms << ',' << r.io_ms << ',' << r.merge_ms
               << ',' << r.train_ms << ',' << r.acc_mean_diff << ',' << r.acc_pos_mean_diff << ',' << r.acc_max_diff
               << ',' << r.catalog_bytes << '\n';
        }
        return os.str();
    }
};

namespace bench {

/// Adds models at uniformly random positions until the kind's coverage
/// reaches `target` percent. Logistic catalogs are seeded with grid chunks.
/// Returns false when the target could not be reached.
inline bool seed_catalog(Catalog& catalog, const DataStore& store, const QueryConfig& cfg, const SizeDist& sizes,
                         double target, std::mt19937_64& rng, std::uint64_t max_models = 100'000) {
    const auto n = store.meta().n;
    if (target <= 0) return true;
    for (std::uint64_t added = 0; added < max_models; ++added) {
        if (catalog.coverage(cfg.kind) >= target) return true;
        if (cfg.kind == ModelKind::logreg_chunk) {
            const auto l = cfg.chunk_size;
            const auto chunks = n / l;
            if (chunks == 0) return false;
            const auto k = std::uniform_int_distribution<std::uint64_t>(0, chunks - 1)(rng);
            const IdRange r{k * l, k * l + l - 1};
            if (catalog.find(cfg.kind, r)) continue;
            SGDConfig c = cfg.sgd;
            c.shuffle_seed = logreg::chunk_seed(cfg.sgd.shuffle_seed, r.lo);
            auto m = logreg::train_chunk(store.fetch_range(r), c);
            catalog.materialize(r, m);
        } else {
            const auto size = sizes.sample(rng, 1, n);
            const auto lo = std::uniform_int_distribution<std::uint64_t>(0, n - size)(rng);
            const IdRange r{lo, lo + size - 1};
            catalog.materialize(r, compute_payload(cfg.kind, store.fetch_range(r), store.meta()));
        }
    }
    return catalog.coverage(cfg.kind) >= target;
}

inline std::vector<IdRange> make_queries(const DataStore& store, const BenchSpec& spec) {
    std::mt19937_64 rng(hash_combine(spec.seed, 0x9e37));
    const auto n = store.meta().n;
    const std::uint64_t min_size = spec.cfg.kind == ModelKind::logreg_chunk ? std::min(n, 2 * spec.cfg.chunk_size) : 1;
    std::vector<IdRange> out;
    for (std::uint64_t i = 0; i < spec.query_count; ++i) {
        const auto size = spec.query_size.sample(rng, min_size, n);
        const auto lo = std::uniform_int_distribution<std::uint64_t>(0, n - size)(rng);
        out.push_back({lo, lo + size - 1});
    }
    return out;
}

inline BenchResult run(const DataStore& store, const std::filesystem::path& work_dir, const BenchSpec& spec,
                       const Calibration& calibration, std::ostream* log = nullptr) {
    spec.validate();
    check_kind_fits(spec.cfg.kind, store.meta());
    QueryConfig cfg = spec.cfg;
    cfg.materialize = false;
    cfg.reuse = true;
    QueryConfig baseline_cfg = cfg;

    const auto queries = make_queries(store, spec);
    auto targets = spec.coverage_targets;
    std::sort(targets.begin(), targets.end());

    BenchResult result;
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        const double target = targets[ti];
        const auto dir = work_dir / ("coverage_" + std::to_string(static_cast<int>(std::lround(target))));
        std::filesystem::remove_all(dir);
        auto catalog = Catalog::open(dir, store.meta().n);
        std::mt19937_64 rng(hash_combine(spec.seed, ti + 1));

        BenchRow row;
        row.coverage_target = target;
        row.reached = seed_catalog(catalog, store, cfg, spec.model_size, target, rng);
        row.coverage = catalog.coverage(cfg.kind);
        row.models = catalog.size();
        row.catalog_bytes = catalog.storage_bytes(cfg.kind);
        if (!row.reached) {
            if (log) *log << "coverage " << target << "%: unreachable (got " << row.coverage << "%), skipped\n";
            result.rows.push_back(row);
            continue;
        }
        const auto cm = cost::make_cost_model(calibration, catalog, store.meta());

        double sum_t0 = 0, sum_t = 0;
        std::vector<double> diffs;
        if (spec.parallel) {
            // Correctness exercise: all queries against one catalog snapshot at once.
            std::vector<std::thread> threads;
            std::vector<std::string> errors(queries.size());
            for (std::size_t q = 0; q < queries.size(); ++q)
                threads.emplace_back([&, q] {
                    try {
                        executor::answer_query(queries[q], catalog, store, cm, cfg);
                    } catch (const std::exception& e) {
                        errors[q] = e.what();
                    }
                });
            for (auto& t : threads) t.join();
            for (const auto& e : errors)
                if (!e.empty()) throw Error("parallel query failed: " + e);
        }
        for (std::size_t q = 0; q < queries.size(); ++q) {
            double t0 = std::numeric_limits<double>::infinity(), t = t0;
            ExecutionReport best_fw;
            std::optional<ExecutionReport> base;
            for (int rep = 0; rep < spec.repeats; ++rep) {
                const auto run_base = [&] {
                    auto b = executor::baseline_build(queries[q], store, baseline_cfg);
                    if (b.timings.total_ms < t0) t0 = b.timings.total_ms;
                    if (!base) base = std::move(b);
                };
                const auto run_fw = [&] {
                    auto f = executor::answer_query(queries[q], catalog, store, cm, cfg);
                    if (f.timings.total_ms < t) {
                        t = f.timings.total_ms;
                        best_fw = std::move(f);
                    }
                };
                // Alternate order so neither side systematically runs on a warmer cache.
                if ((q + static_cast<std::size_t>(rep)) % 2 == 0) {
                    run_base();
                    run_fw();
                } else {
                    run_fw();
                    run_base();
                }
            }
            sum_t0 += t0;
            sum_t += t;
            row.speedups.push_back(t0 / t);
            row.plan_ms += best_fw.timings.plan_ms;
            row.io_ms += best_fw.timings.io_ms;
            row.merge_ms += best_fw.timings.merge_ms;
            row.train_ms += best_fw.timings.train_ms;
            if (cfg.kind == ModelKind::logreg_chunk) {
                const auto rows = store.fetch_range(queries[q]);
                const double a0 = logreg::accuracy(base->logistic->w_mu, rows);
                const double a = logreg::accuracy(best_fw.logistic->w_mu, rows);
                diffs.push_back(100.0 * (a0 - a));
            }
        }
        const double nq = static_cast<double>(queries.size());
        row.baseline_ms = sum_t0 / nq;
        row.framework_ms = sum_t / nq;
        row.speedup = sum_t0 / sum_t;
        row.plan_ms /= nq;
        row.io_ms /= nq;
        row.merge_ms /= nq;
        row.train_ms /= nq;
        if (!diffs.empty()) {
            double sum = 0, pos = 0;
            std::size_t npos = 0;
            row.acc_max_diff = -std::numeric_limits<double>::infinity();
            for (double d : diffs) {
                sum += d;
                if (d > 0) pos += d, ++npos;
                row.acc_max_diff = std::max(row.acc_max_diff, d);
            }
            row.acc_mean_diff = sum / static_cast<double>(diffs.size());
            row.acc_pos_mean_diff = npos ? pos / static_cast<double>(npos) : 0.0;
        }
        if (log)
            *log << "coverage " << target << "% (achieved " << std::setprecision(4) << row.coverage << "%, "
                 << row.models << " models): speedup " << row.speedup << " (T0 " << row.baseline_ms << " ms, T "
                 << row.framework_ms << " ms)\n";
        result.rows.push_back(std::move(row));
    }
    return result;
}

}  // namespace bench
}  // namespace remodel
