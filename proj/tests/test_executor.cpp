#include <gtest/gtest.h>

#include <random>

#include "remodel/executor.hpp"
#include "test_util.hpp"

using namespace remodel;
using testutil::TempDir;

namespace {

// F(n) = n, C = 1: reuse almost always pays.
const CostModel kCheapModels = unit_cost_model(0.0);

struct Fixture {
    TempDir tmp{"exec"};
    std::vector<Record> rows;
    std::optional<DataStore> store;

    Fixture(std::size_t n, std::uint32_t d, std::uint32_t classes, std::uint64_t seed, bool counts = false) {
        rows = testutil::random_records(n, d, seed, classes);
        if (counts)
            for (auto& r : rows)
                for (auto& x : r.features) x = std::floor(std::abs(x) * 3);
        testutil::write_store(tmp / "data", rows, d, classes);
        store.emplace(DataStore::open(tmp / "data"));
    }
    Catalog catalog(const std::string& name = "catalog") { return Catalog::open(tmp / name, rows.size()); }
};

void expect_linreg_close(const ExecutionReport& r, const std::vector<Record>& pts, std::size_t d, double lambda) {
    const auto ref = linreg::compute_stats(pts, d);
    const auto& got = std::get<SufficientStats>(*r.stats);
    EXPECT_EQ(got.n_points, ref.n_points);
    EXPECT_LE((got.A - ref.A).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, ref.A.cwiseAbs().maxCoeff()));
    EXPECT_LE((got.B - ref.B).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, ref.B.cwiseAbs().maxCoeff()));
    const auto w_ref = linreg::solve_weights(ref, lambda);
    EXPECT_LE((r.linreg->weights - w_ref).norm(), 1e-6 * std::max(1.0, w_ref.norm()));
}

template <class S>
void expect_counters_close(const std::vector<double>& a, const std::vector<double>& b) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6 * std::max(1.0, std::abs(b[i])));
}

}  // namespace

TEST(Execute, FigureOnePlanMatchesScratch) {
    Fixture f(60, 3, 0, 1);
    auto cat = f.catalog();
    const auto put = [&](Id lo, Id hi) {
        return cat.materialize({lo, hi}, linreg::compute_stats(testutil::slice(f.rows, lo, hi), 3));
    };
    put(0, 19);
    put(0, 9);
    const auto d3 = put(10, 29);
    const auto d4 = put(30, 49);

    ExecutionPlan p;
    p.query = {20, 39};
    p.steps = {{cat.find(d3), {10, 29}, StepOp::add, 0},
               {cat.find(d4), {30, 49}, StepOp::add, 0},
               {std::nullopt, {10, 19}, StepOp::remove, 0},
               {std::nullopt, {40, 49}, StepOp::remove, 0}};
    QueryConfig cfg;
    const auto r = executor::execute(p, cat, *f.store, cfg);
    expect_linreg_close(r, testutil::slice(f.rows, 20, 39), 3, cfg.lambda);
    EXPECT_EQ(r.steps_executed, 4u);
    EXPECT_EQ(r.bytes_fetched, 20u * 4 * 8);
}

TEST(Execute, RandomCatalogsLinreg) {
    Fixture f(2000, 4, 0, 2);
    std::mt19937_64 rng(3);
    QueryConfig cfg;
    cfg.materialize = false;
    for (int trial = 0; trial < 100; ++trial) {
        auto cat = f.catalog("cat" + std::to_string(trial));
        for (int k = 0; k < 6; ++k) {
            const Id lo = rng() % 1900, hi = lo + rng() % 300;
            const IdRange r{lo, std::min<Id>(hi, 1999)};
            cat.materialize(r, linreg::compute_stats(testutil::slice(f.rows, r.lo, r.hi), 4));
        }
        Id a = rng() % 2000, b = rng() % 2000;
        if (a > b) std::swap(a, b);
        const auto r = executor::answer_query({a, b}, cat, *f.store, kCheapModels, cfg);
        EXPECT_TRUE(planner::telescopes(r.plan));
        expect_linreg_close(r, testutil::slice(f.rows, a, b), 4, cfg.lambda);
    }
}

TEST(Execute, RandomCatalogsNaiveBayes) {
    Fixture g(1500, 3, 3, 4);
    Fixture m(1500, 3, 3, 5, true);
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const bool gauss = trial % 2 == 0;
        auto& f = gauss ? g : m;
        QueryConfig cfg;
        cfg.kind = gauss ? ModelKind::nb_gaussian : ModelKind::nb_multinomial;
        cfg.materialize = false;
        auto cat = f.catalog("cat" + std::to_string(trial));
        for (int k = 0; k < 5; ++k) {
            const Id lo = rng() % 1400, hi = std::min<Id>(lo + rng() % 300, 1499);
            cat.materialize({lo, hi}, compute_payload(cfg.kind, testutil::slice(f.rows, lo, hi), f.store->meta()));
        }
        Id a = rng() % 1500, b = rng() % 1500;
        if (a > b) std::swap(a, b);
        const auto r = executor::answer_query({a, b}, cat, *f.store, kCheapModels, cfg);
        const auto pts = testutil::slice(f.rows, a, b);
        if (gauss) {
            const auto ref = nb::compute_gaussian_stats(pts, 3, 3);
            const auto& got = std::get<GaussianClassStats>(*r.stats);
            expect_counters_close<GaussianClassStats>(got.count, ref.count);
            expect_counters_close<GaussianClassStats>(got.sum, ref.sum);
            expect_counters_close<GaussianClassStats>(got.sq_sum, ref.sq_sum);
        } else {
            const auto ref = nb::compute_multinomial_stats(pts, 3, 3);
            const auto& got = std::get<MultinomialClassStats>(*r.stats);
            expect_counters_close<MultinomialClassStats>(got.samples, ref.samples);
            expect_counters_close<MultinomialClassStats>(got.feature_count, ref.feature_count);
        }
        ASSERT_TRUE(r.nb);
        double total = 0;
        for (double p : r.nb->priors) total += p;
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Execute, EmptyCatalogEqualsBaseline) {
    Fixture f(500, 3, 0, 7);
    auto cat = f.catalog();
    QueryConfig cfg;
    cfg.materialize = false;
    const auto r = executor::answer_query({50, 449}, cat, *f.store, kCheapModels, cfg);
    const auto b = executor::baseline_build({50, 449}, *f.store, cfg);
    ASSERT_EQ(r.plan.steps.size(), 1u);
    EXPECT_EQ(r.weights(), b.weights());
}

TEST(Execute, RepeatedQueryReusesMaterializedResult) {
    Fixture f(500, 3, 0, 8);
    auto cat = f.catalog();
    QueryConfig cfg;
    const auto first = executor::answer_query({100, 299}, cat, *f.store, kCheapModels, cfg);
    ASSERT_EQ(first.materialized.size(), 1u);
    const auto second = executor::answer_query({100, 299}, cat, *f.store, kCheapModels, cfg);
    ASSERT_EQ(second.plan.steps.size(), 1u);
    ASSERT_TRUE(second.plan.steps[0].model);
    EXPECT_EQ(second.plan.steps[0].model->model_id, first.materialized[0]);
    EXPECT_TRUE(second.materialized.empty());
    EXPECT_EQ(second.bytes_fetched, 0u);
    EXPECT_EQ(first.weights(), second.weights());
}

TEST(Execute, LogisticReuseIsBitIdentical) {
    Fixture f(1000, 3, 2, 9);
    auto cat = f.catalog();
    QueryConfig cfg;
    cfg.kind = ModelKind::logreg_chunk;
    cfg.chunk_size = 50;
    const auto seed_run = executor::answer_query({0, 999}, cat, *f.store, kCheapModels, cfg);
    EXPECT_EQ(seed_run.materialized.size(), 20u);

    std::mt19937_64 rng(10);
    for (int q = 0; q < 10; ++q) {
        const Id a = rng() % 800, b = a + 100 + rng() % (899 - a);
        QueryConfig reuse = cfg, scratch = cfg;
        reuse.materialize = scratch.materialize = false;
        scratch.reuse = false;
        const auto r1 = executor::answer_query({a, b}, cat, *f.store, kCheapModels, reuse);
        const auto r0 = executor::answer_query({a, b}, cat, *f.store, kCheapModels, scratch);
        EXPECT_EQ(r1.weights(), r0.weights());
        EXPECT_GT(r1.plan.model_steps(), 0u);
        for (const auto& s : r1.plan.steps) EXPECT_EQ(s.op, StepOp::add);
        EXPECT_LT(r1.bytes_fetched, r0.bytes_fetched);
    }
}

TEST(Execute, LogisticBaselineIsPlainSgd) {
    Fixture f(400, 2, 2, 11);
    QueryConfig cfg;
    cfg.kind = ModelKind::logreg_chunk;
    const auto b = executor::baseline_build({0, 399}, *f.store, cfg);
    SGDConfig c = cfg.sgd;
    c.shuffle_seed = logreg::chunk_seed(cfg.sgd.shuffle_seed, 0);
    EXPECT_EQ(b.weights(), logreg::train_chunk(f.rows, c).w);
}

TEST(Execute, RejectsInvalidPlans) {
    Fixture f(100, 2, 0, 12);
    auto cat = f.catalog();
    QueryConfig cfg;
    ExecutionPlan gap;
    gap.query = {0, 49};
    gap.steps = {{std::nullopt, {0, 19}, StepOp::add, 0}, {std::nullopt, {30, 49}, StepOp::add, 0}};
    EXPECT_THROW(executor::execute(gap, cat, *f.store, cfg), InvalidPlanError);
}

TEST(Execute, ModelKindMismatchIsInvalid) {
    Fixture f(100, 2, 2, 14);
    auto cat = f.catalog();
    const auto id = cat.materialize({0, 49}, nb::compute_gaussian_stats(testutil::slice(f.rows, 0, 49), 2, 2));
    ExecutionPlan p;
    p.query = {0, 49};
    p.steps = {{cat.find(id), {0, 49}, StepOp::add, 0}};
    QueryConfig cfg;
    cfg.kind = ModelKind::nb_multinomial;
    EXPECT_THROW(executor::execute(p, cat, *f.store, cfg), InvalidPlanError);
}

TEST(Execute, QueryValidation) {
    Fixture f(100, 2, 0, 15);
    auto cat = f.catalog();
    QueryConfig cfg;
    EXPECT_THROW(executor::answer_query({50, 100}, cat, *f.store, kCheapModels, cfg), RangeError);
    cfg.kind = ModelKind::logreg_chunk;
    EXPECT_THROW(executor::answer_query({0, 99}, cat, *f.store, kCheapModels, cfg), std::invalid_argument);
    cfg.chunk_size = 10;  // long enough now, but the data has no labels
    EXPECT_THROW(executor::answer_query({0, 99}, cat, *f.store, kCheapModels, cfg), DataError);
}

TEST(Report, JsonAndTimings) {
    Fixture f(300, 2, 0, 16);
    auto cat = f.catalog();
    QueryConfig cfg;
    cat.materialize({0, 149}, linreg::compute_stats(testutil::slice(f.rows, 0, 149), 2));
    const auto r = executor::answer_query({0, 199}, cat, *f.store, kCheapModels, cfg);
    const auto j = r.to_json();
    EXPECT_EQ(j["query"][0], 0);
    EXPECT_EQ(j["query"][1], 199);
    EXPECT_EQ(j["kind"], "linreg");
    EXPECT_EQ(j["model"]["weights"].size(), 2u);
    EXPECT_EQ(j["plan"]["steps"].size(), r.plan.steps.size());
    EXPECT_EQ(j["materialized"].size(), 1u);
    EXPECT_EQ(nlohmann::json::parse(j.dump()), j);

    const auto& t = r.timings;
    for (double v : {t.plan_ms, t.io_ms, t.merge_ms, t.train_ms, t.total_ms}) EXPECT_GE(v, 0.0);
    EXPECT_LE(t.plan_ms + t.io_ms + t.merge_ms + t.train_ms, t.total_ms + 1e-9);
    EXPECT_NE(r.to_text().find("weights:"), std::string::npos);
}
