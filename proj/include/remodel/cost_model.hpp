#pragma once

// Measured cost model: F(n) = c_seek + c_row·n, where a "row" is fetched and
// turned into statistics (or, for logistic chunks, only fetched; training is
// charged separately per row). Model loads are priced as a fetch of the same
// number of bytes plus a fixed per-load cost. Units are milliseconds.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "remodel/catalog.hpp"
#include "remodel/datastore.hpp"
#include "remodel/payload.hpp"
#include "remodel/planner.hpp"

namespace remodel {

struct Calibration {
    double c_seek = 0.0;
    double c_row = 0.0;
    double c_merge = 0.0;
    double train_per_row = 0.0;
    double c_load = 0.0;  // fixed cost of opening and decoding one payload
};

namespace cost {

namespace detail {

template <class Fn>
double min_ms(int repeats, Fn&& fn) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < repeats; ++r) {
        const auto s = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - s).count());
    }
    return best;
}

}  // namespace detail

inline Calibration calibrate(const DataStore& store, ModelKind kind, const SGDConfig& sgd = {}) {
    const auto& meta = store.meta();
    if (meta.n == 0) throw DataError("cannot calibrate on an empty dataset");
    const std::uint64_t n2 = std::min<std::uint64_t>(meta.n, 50'000);
    const std::uint64_t n1 = std::max<std::uint64_t>(1, std::min<std::uint64_t>(n2 / 10, 1'000));
    const bool stats = is_stats_kind(kind);
    volatile double sink = 0;

    const auto run = [&](std::uint64_t n) {
        const auto batch = store.fetch_range(0, n - 1);
        if (stats) sink = sink + point_count(compute_payload(kind, batch, meta));
        else sink = sink + batch.raw().front();
    };
    run(n2);  // warm the page cache
    const double t1 = detail::min_ms(5, [&] { run(n1); });
    const double t2 = detail::min_ms(3, [&] { run(n2); });

    Calibration c;
    c.c_row = n2 > n1 ? std::max(0.0, (t2 - t1) / static_cast<double>(n2 - n1)) : t2 / static_cast<double>(n2);
    c.c_seek = std::max(0.0, t1 - c.c_row * static_cast<double>(n1));

    if (stats) {
        const auto batch = store.fetch_range(0, n1 - 1);
        const auto delta = compute_payload(kind, batch, meta);
        auto acc = empty_payload(kind, meta);
        c.c_merge = detail::min_ms(20, [&] { accumulate(acc, delta, +1); });
    } else {
        const std::uint64_t nt = std::min<std::uint64_t>(meta.n, 20'000);
        const auto batch = store.fetch_range(0, nt - 1);
        const double t = detail::min_ms(2, [&] { sink = sink + logreg::train_chunk(batch, sgd).w.front(); });
        c.train_per_row = t / static_cast<double>(nt);
        std::vector<double> a(meta.d, 1.0), b(meta.d, 2.0);
        c.c_merge = detail::min_ms(20, [&] { sink = sink + logreg::average({&a, &b}).front(); });
    }
    // Time real catalog loads of a representative payload in a scratch catalog.
    const auto scratch = std::filesystem::temp_directory_path() /
                         ("remodel-calibrate-" + std::to_string(hash_combine(fnv1a(store.dir().string()), meta.n)));
    std::filesystem::remove_all(scratch);
    {
        auto catalog = Catalog::open(scratch, 1);
        Payload sample = stats ? empty_payload(kind, meta) : Payload(ChunkModel{{0, 0}, std::vector<double>(meta.d), 1});
        const auto id = catalog.materialize({0, 0}, sample);
        const double bytes = static_cast<double>(catalog.payload_bytes(id));
        const double t = detail::min_ms(20, [&] { sink = sink + point_count(catalog.load_model(id)); });
        c.c_load = std::max(0.0, t - c.c_row * bytes / static_cast<double>(meta.row_bytes()));
    }
    std::filesystem::remove_all(scratch);
    return c;
}

inline CostModel make_cost_model(const Calibration& c, const Catalog& catalog, const DatasetMeta& meta) {
    CostModel cm;
    const double row_bytes = static_cast<double>(meta.row_bytes());
    cm.fetch_cost = [c](std::uint64_t n) { return c.c_seek + c.c_row * static_cast<double>(n); };
    cm.model_cost = [c, &catalog, row_bytes](const ModelDescriptor& m) {
        return c.c_load + c.c_row * static_cast<double>(catalog.payload_bytes(m.model_id)) / row_bytes;
    };
    cm.merge_cost = c.c_merge;
    cm.train_per_row = c.train_per_row;
    return cm;
}

inline std::filesystem::path cache_file(const std::filesystem::path& data_dir) { return data_dir / "cost_model.txt"; }

/// Cached per kind in <data>/cost_model.txt as "kind c_seek c_row c_merge train_per_row c_load".
inline Calibration load_or_calibrate(const DataStore& store, ModelKind kind, const SGDConfig& sgd = {},
                                     bool recalibrate = false) {
    const auto path = cache_file(store.dir());
    std::map<std::string, Calibration> cached;
    if (std::ifstream in(path); in) {
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string k;
            Calibration c;
            if (ls >> k >> c.c_seek >> c.c_row >> c.c_merge >> c.train_per_row >> c.c_load) cached[k] = c;
        }
    }
    const auto key = to_string(kind);
    if (!recalibrate)
        if (const auto it = cached.find(key); it != cached.end()) return it->second;
    cached[key] = calibrate(store, kind, sgd);
    std::ofstream out(path, std::ios::trunc);
    out.precision(17);
    for (const auto& [k, c] : cached)
        out << k << ' ' << c.c_seek << ' ' << c.c_row << ' ' << c.c_merge << ' ' << c.train_per_row << ' ' << c.c_load << '\n';
    return cached[key];
}

}  // namespace cost
}  // namespace remodel
