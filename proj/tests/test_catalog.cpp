#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "remodel/catalog.hpp"
#include "test_util.hpp"

using namespace remodel;
using testutil::TempDir;

namespace {

Payload linreg_payload(std::uint64_t seed, std::uint32_t d = 3, std::size_t n = 10) {
    return linreg::compute_stats(testutil::random_records(n, d, seed), d);
}

// Connected components of the overlap graph via union-find.
std::vector<std::pair<IdRange, std::set<std::size_t>>> overlap_components(const std::vector<IdRange>& rs) {
    std::vector<std::size_t> parent(rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) parent[i] = i;
    const auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < rs.size(); ++i)
        for (std::size_t j = i + 1; j < rs.size(); ++j)
            if (rs[i].lo <= rs[j].hi && rs[j].lo <= rs[i].hi) parent[find(i)] = find(j);
    std::map<std::size_t, std::pair<IdRange, std::set<std::size_t>>> comps;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        auto& c = comps[find(i)];
        if (c.second.empty()) c.first = rs[i];
        c.first.lo = std::min(c.first.lo, rs[i].lo);
        c.first.hi = std::max(c.first.hi, rs[i].hi);
        c.second.insert(i);
    }
    std::vector<std::pair<IdRange, std::set<std::size_t>>> out;
    for (auto& [k, v] : comps) out.push_back(v);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first.lo < b.first.lo; });
    return out;
}

// Definition 1 by fixed point: start from models hitting the query, then add
// anything overlapping an already-relevant model until nothing changes.
std::set<std::size_t> closure(const std::vector<IdRange>& rs, IdRange q) {
    std::set<std::size_t> in;
    for (std::size_t i = 0; i < rs.size(); ++i)
        if (rs[i].lo <= q.hi && q.lo <= rs[i].hi) in.insert(i);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < rs.size(); ++i) {
            if (in.count(i)) continue;
            for (auto j : in)
                if (rs[i].lo <= rs[j].hi && rs[j].lo <= rs[i].hi) {
                    in.insert(i);
                    changed = true;
                    break;
                }
        }
    }
    return in;
}

}  // namespace

TEST(Preprocess, FigureOneLayout) {
    // a..f = 0,10,20,30,40,50 as boundaries: D1=[a,c), D2=[a,b), D3=[b,d), D4=[d,f).
    const std::vector<ModelDescriptor> ds{{{0, 19}, ModelKind::linreg, "D1"},
                                          {{0, 9}, ModelKind::linreg, "D2"},
                                          {{10, 29}, ModelKind::linreg, "D3"},
                                          {{30, 49}, ModelKind::linreg, "D4"}};
    const auto out = preprocess_descriptors(ds);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].range, (IdRange{0, 29}));
    std::set<std::string> ids;
    for (const auto& m : out[0].members) ids.insert(m.model_id);
    EXPECT_EQ(ids, (std::set<std::string>{"D1", "D2", "D3"}));
    EXPECT_EQ(out[1].range, (IdRange{30, 49}));
    ASSERT_EQ(out[1].members.size(), 1u);
    EXPECT_EQ(out[1].members[0].model_id, "D4");
}

TEST(Preprocess, EdgeCases) {
    EXPECT_TRUE(preprocess_descriptors({}).empty());
    const auto one = preprocess_descriptors({{{4, 8}, ModelKind::linreg, "x"}});
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].range, (IdRange{4, 8}));
    // Shared endpoint merges, adjacency does not.
    EXPECT_EQ(preprocess_descriptors({{{0, 9}, ModelKind::linreg, "a"}, {{9, 12}, ModelKind::linreg, "b"}}).size(), 1u);
    EXPECT_EQ(preprocess_descriptors({{{0, 9}, ModelKind::linreg, "a"}, {{10, 12}, ModelKind::linreg, "b"}}).size(), 2u);
}

TEST(Preprocess, MatchesOverlapComponents) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<ModelDescriptor> ds;
        std::vector<IdRange> rs;
        for (int i = 0; i < 100; ++i) {
            const Id lo = rng() % 5000, len = 1 + rng() % 80;
            rs.push_back({lo, lo + len - 1});
            ds.push_back({rs.back(), ModelKind::linreg, "m" + std::to_string(i)});
        }
        const auto out = preprocess_descriptors(ds);
        const auto oracle = overlap_components(rs);
        ASSERT_EQ(out.size(), oracle.size());
        for (std::size_t k = 0; k < out.size(); ++k) {
            EXPECT_EQ(out[k].range, oracle[k].first);
            std::set<std::size_t> got;
            for (const auto& m : out[k].members) got.insert(std::stoul(m.model_id.substr(1)));
            EXPECT_EQ(got, oracle[k].second);
            if (k > 0) EXPECT_LT(out[k - 1].range.hi, out[k].range.lo);
        }
    }
}

TEST(Catalog, IncrementalEnhancedDescriptors) {
    TempDir tmp("cat");
    auto cat = Catalog::open(tmp.path(), 100);
    cat.materialize({10, 20}, linreg_payload(1));
    auto e = cat.enhanced(ModelKind::linreg);
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e[0].range, (IdRange{10, 20}));

    cat.materialize({15, 30}, linreg_payload(2));
    e = cat.enhanced(ModelKind::linreg);
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e[0].range, (IdRange{10, 30}));
    EXPECT_EQ(e[0].members.size(), 2u);

    cat.materialize({40, 50}, linreg_payload(3));
    e = cat.enhanced(ModelKind::linreg);
    ASSERT_EQ(e.size(), 2u);
    EXPECT_EQ(e[1].range, (IdRange{40, 50}));

    // Bridging model collapses both.
    cat.materialize({30, 40}, linreg_payload(4));
    e = cat.enhanced(ModelKind::linreg);
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e[0].range, (IdRange{10, 50}));
    EXPECT_EQ(e[0].members.size(), 4u);
}

TEST(Catalog, IncrementalEqualsBatchAndSurvivesReopen) {
    TempDir tmp("cat");
    std::mt19937_64 rng(2);
    std::vector<EnhancedDescriptor> before;
    {
        auto cat = Catalog::open(tmp.path(), 10'000);
        for (int i = 0; i < 150; ++i) {
            const Id lo = rng() % 9000, len = 1 + rng() % 200;
            cat.materialize({lo, lo + len - 1}, linreg_payload(i));
        }
        before = cat.enhanced(ModelKind::linreg);
        EXPECT_EQ(before, preprocess_descriptors(cat.list(ModelKind::linreg)));
    }
    const auto reopened = Catalog::open(tmp.path(), 10'000);
    EXPECT_EQ(reopened.enhanced(ModelKind::linreg), before);
    EXPECT_EQ(reopened.size(), 150u);
}

TEST(Catalog, RelevantModelsFigureOne) {
    TempDir tmp("cat");
    auto cat = Catalog::open(tmp.path(), 60);
    cat.materialize({0, 19}, linreg_payload(1));
    cat.materialize({0, 9}, linreg_payload(2));
    cat.materialize({10, 29}, linreg_payload(3));
    cat.materialize({30, 49}, linreg_payload(4));
    EXPECT_EQ(cat.relevant_models({20, 39}, ModelKind::linreg).size(), 4u);
    EXPECT_TRUE(cat.relevant_models({50, 59}, ModelKind::linreg).empty());
    EXPECT_TRUE(cat.relevant_models({20, 39}, ModelKind::nb_gaussian).empty());
}

TEST(Catalog, RelevantModelsMatchClosureOracle) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        TempDir tmp("cat");
        auto cat = Catalog::open(tmp.path(), 3000);
        std::vector<IdRange> rs;
        for (int i = 0; i < 40; ++i) {
            const Id lo = rng() % 2900, len = 1 + rng() % 100;
            const IdRange r{lo, lo + len - 1};
            if (std::find(rs.begin(), rs.end(), r) != rs.end()) continue;
            rs.push_back(r);
            cat.materialize(r, linreg_payload(i));
        }
        for (int q = 0; q < 20; ++q) {
            Id a = rng() % 3000, b = rng() % 3000;
            if (a > b) std::swap(a, b);
            std::set<IdRange> got, want;
            for (const auto& m : cat.relevant_models({a, b}, ModelKind::linreg)) got.insert(m.range);
            for (auto i : closure(rs, {a, b})) want.insert(rs[i]);
            EXPECT_EQ(got, want);
        }
    }
}

TEST(Catalog, LogisticRelevanceRequiresContainment) {
    TempDir tmp("cat");
    auto cat = Catalog::open(tmp.path(), 100);
    cat.materialize({0, 9}, ChunkModel{{0, 9}, {1.0}, 10});
    cat.materialize({10, 19}, ChunkModel{{10, 19}, {2.0}, 10});
    cat.materialize({20, 29}, ChunkModel{{20, 29}, {3.0}, 10});
    const auto r = cat.relevant_models({5, 29}, ModelKind::logreg_chunk);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].range, (IdRange{10, 19}));
}

TEST(Catalog, LoadRoundTripAndReplace) {
    TempDir tmp("cat");
    auto cat = Catalog::open(tmp.path(), 1000);
    const auto lin = linreg_payload(5);
    const auto id = cat.materialize({0, 9}, lin);
    const auto back = std::get<SufficientStats>(cat.load_model(id));
    EXPECT_TRUE(back.A == std::get<SufficientStats>(lin).A);

    GaussianClassStats g(2, 2);
    g.count = {3, 4};
    g.sum = {1, 2, 3, 4};
    g.sq_sum = {5, 6, 7, 8};
    const auto gid = cat.materialize({0, 6}, g);
    EXPECT_EQ(std::get<GaussianClassStats>(cat.load_model(gid)), g);

    // Same kind and range: old id retired.
    const auto id2 = cat.materialize({0, 9}, linreg_payload(6));
    EXPECT_NE(id, id2);
    EXPECT_THROW(cat.load_model(id), CatalogError);
    EXPECT_EQ(cat.list(ModelKind::linreg).size(), 1u);
    EXPECT_EQ(Catalog::open(tmp.path(), 1000).list(ModelKind::linreg).size(), 1u);
    EXPECT_EQ(cat.enhanced(ModelKind::linreg)[0].members[0].model_id, id2);

    EXPECT_THROW(cat.load_model("nope"), CatalogError);
    EXPECT_THROW(cat.materialize({990, 1000}, lin), RangeError);
}

TEST(Catalog, ChecksumDetectsCorruption) {
    TempDir tmp("cat");
    auto cat = Catalog::open(tmp.path(), 100);
    const auto id = cat.materialize({0, 9}, linreg_payload(7));
    {
        std::fstream f(tmp.path() / "payloads" / (id + ".bin"), std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(40);
        f.put('\x7f');
    }
    EXPECT_THROW(cat.load_model(id), CatalogError);
}

TEST(Catalog, BulkRoundTrip) {
    TempDir tmp("cat");
    std::mt19937_64 rng(8);
    auto cat = Catalog::open(tmp.path(), 1'000'000);
    std::map<std::string, Payload> written;
    for (int i = 0; i < 1000; ++i) {
        const Id lo = rng() % 999'000;
        const IdRange r{lo, lo + rng() % 900};
        Payload p;
        switch (i % 4) {
            case 0: p = linreg_payload(i, 2, 5); break;
            case 1: p = nb::compute_gaussian_stats(testutil::random_records(5, 2, i, 3), 3, 2); break;
            case 2: {
                MultinomialClassStats m(2, 2);
                m.samples = {double(i), 1};
                m.feature_total = {3, 4};
                m.feature_count = {1, 2, 3, 1};
                p = m;
                break;
            }
            default: p = ChunkModel{r, {double(i), -1.0}, r.size()};
        }
        written[cat.materialize(r, p)] = p;
    }
    const auto reopened = Catalog::open(tmp.path(), 1'000'000);
    for (const auto& [id, p] : written) {
        const auto desc = reopened.find(id);
        if (!desc) continue;  // replaced by a later draw of the same range
        EXPECT_EQ(encode_payload(reopened.load_model(id), desc->range), encode_payload(p, desc->range));
    }
}

TEST(Catalog, Coverage) {
    TempDir tmp("cat");
    auto cat = Catalog::open(tmp.path(), 100);
    EXPECT_EQ(cat.coverage(ModelKind::linreg), 0.0);
    cat.materialize({0, 49}, linreg_payload(1));
    cat.materialize({25, 74}, linreg_payload(2));
    EXPECT_DOUBLE_EQ(cat.coverage(ModelKind::linreg), 75.0);
    EXPECT_EQ(cat.coverage(ModelKind::nb_gaussian), 0.0);
}

TEST(Catalog, CoverageMatchesBitmap) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        TempDir tmp("cat");
        auto cat = Catalog::open(tmp.path(), 5000);
        std::vector<bool> bits(5000, false);
        for (int i = 0; i < 30; ++i) {
            const Id lo = rng() % 4800, len = 1 + rng() % 200;
            cat.materialize({lo, lo + len - 1}, linreg_payload(i));
            for (Id k = lo; k < lo + len; ++k) bits[k] = true;
        }
        const double want = 100.0 * std::count(bits.begin(), bits.end(), true) / 5000.0;
        EXPECT_NEAR(cat.coverage(ModelKind::linreg), want, 1e-12);
    }
}

TEST(Catalog, ConcurrentReadersAndWriter) {
    TempDir tmp("cat");
    auto cat = Catalog::open(tmp.path(), 100'000);
    for (int i = 0; i < 20; ++i) cat.materialize({Id(i) * 100, Id(i) * 100 + 150}, linreg_payload(i));
    std::atomic<bool> failed{false};
    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t)
        readers.emplace_back([&] {
            for (int k = 0; k < 200; ++k) {
                for (const auto& m : cat.relevant_models({0, 5000}, ModelKind::linreg)) {
                    try {
                        cat.load_model(m.model_id);
                    } catch (const CatalogError&) {
                        // A model replaced between listing and loading is retired; anything else is a bug.
                        if (cat.find(m.model_id)) failed = true;
                    }
                }
            }
        });
    for (int i = 20; i < 60; ++i) cat.materialize({Id(i) * 100, Id(i) * 100 + 150}, linreg_payload(i));
    for (auto& r : readers) r.join();
    EXPECT_FALSE(failed);
    EXPECT_EQ(cat.size(), 60u);
}

TEST(Catalog, IndexFileFormat) {
    TempDir tmp("cat");
    auto cat = Catalog::open(tmp.path(), 100);
    const auto id = cat.materialize({3, 7}, linreg_payload(1));
    std::ifstream in(tmp.path() / "index.txt");
    std::string mid, kind, file, sum;
    Id l, u;
    in >> mid >> kind >> l >> u >> file >> sum;
    EXPECT_EQ(mid, id);
    EXPECT_EQ(kind, "linreg");
    EXPECT_EQ(l, 3u);
    EXPECT_EQ(u, 7u);
    EXPECT_EQ(file, id + ".bin");
    EXPECT_EQ(sum.size(), 16u);
}
