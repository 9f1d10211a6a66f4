#pragma once

// Runs execution plans against a catalog and a datastore.

#include <chrono>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "remodel/catalog.hpp"
#include "remodel/datastore.hpp"
#include "remodel/linreg.hpp"
#include "remodel/logreg.hpp"
#include "remodel/naive_bayes.hpp"
#include "remodel/payload.hpp"
#include "remodel/planner.hpp"

namespace remodel {

struct QueryConfig {
    ModelKind kind = ModelKind::linreg;
    double lambda = 1e-4;          // ridge penalty (linreg)
    SGDConfig sgd;                 // logistic training
    std::uint64_t chunk_size = 10'000;
    bool reuse = true;             // false: always the base-fetch plan
    bool materialize = true;       // store the result (or new chunks) in the catalog
};

struct Timings {
    double plan_ms = 0;
    double io_ms = 0;
    double merge_ms = 0;
    double train_ms = 0;
    double total_ms = 0;
};

struct ExecutionReport {
    IdRange query;
    ModelKind kind = ModelKind::linreg;
    ExecutionPlan plan;
    Timings timings;
    std::size_t steps_executed = 0;
    std::uint64_t bytes_fetched = 0;

    std::optional<Payload> stats;  // composed statistics (linreg / NB)
    std::optional<LinRegModel> linreg;
    std::optional<NBParameters> nb;
    std::optional<MixtureModel> logistic;
    std::vector<ChunkModel> new_chunks;  // logistic: chunks trained by this query
    std::vector<std::string> materialized;

    /// Final weights for linreg and logistic models.
    std::vector<double> weights() const {
        if (linreg) return {linreg->weights.data(), linreg->weights.data() + linreg->weights.size()};
        if (logistic) return logistic->w_mu;
        return {};
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["query"] = {query.lo, query.hi};
        j["kind"] = to_string(kind);
        j["steps_executed"] = steps_executed;
        j["bytes_fetched"] = bytes_fetched;
        j["timings_ms"] = {{"plan", timings.plan_ms}, {"io", timings.io_ms}, {"merge", timings.merge_ms},
                           {"train", timings.train_ms}, {"total", timings.total_ms}};
        auto& steps = j["plan"]["steps"] = nlohmann::json::array();
        for (const auto& s : plan.steps) {
            nlohmann::json js = {{"op", s.op == StepOp::add ? "add" : "remove"},
                                 {"range", {s.range.lo, s.range.hi}},
                                 {"cost", s.cost}};
            if (s.model) js["model_id"] = s.model->model_id;
            else js["source"] = "fetch";
            steps.push_back(std::move(js));
        }
        j["plan"]["estimated_cost"] = plan.estimated_cost;
        j["plan"]["baseline_cost"] = plan.baseline_cost;
        if (linreg) {
            j["model"]["weights"] = weights();
            j["model"]["lambda"] = linreg->lambda;
            j["model"]["n_points"] = linreg->stats.n_points;
        }
        if (logistic) {
            j["model"]["weights"] = logistic->w_mu;
            j["model"]["chunks"] = logistic->contributing.size();
            j["model"]["chunk_size"] = logistic->chunk_size;
        }
        if (nb) {
            j["model"]["priors"] = nb->priors;
            if (nb->kind == NBKind::gaussian) {
                j["model"]["mean"] = nb->mean;
                j["model"]["var"] = nb->var;
            } else {
                j["model"]["theta"] = nb->theta;
            }
        }
        j["materialized"] = materialized;
        return j;
    }

    std::string to_text() const {
        std::ostringstream os;
        os << planner::explain(plan);
        os << "timings (ms): plan " << timings.plan_ms << ", io " << timings.io_ms << ", merge " << timings.merge_ms
           << ", train " << timings.train_ms << ", total " << timings.total_ms << '\n';
        os << "bytes fetched: " << bytes_fetched << '\n';
        const auto w = weights();
        if (!w.empty()) {
            os << "weights:";
            for (double v : w) os << ' ' << v;
            os << '\n';
        }
        if (nb) {
            os << "priors:";
            for (double v : nb->priors) os << ' ' << v;
            os << '\n';
        }
        for (const auto& id : materialized) os << "materialized " << id << '\n';
        return os.str();
    }
};

namespace executor {

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point s) {
    return std::chrono::duration<double, std::milli>(Clock::now() - s).count();
}

inline void finish_stats(ExecutionReport& r, Payload acc, Payload scale, const QueryConfig& cfg) {
    const auto expected = static_cast<double>(r.query.size());
    if (point_count(acc) != expected)
        throw InvalidPlanError("plan composes " + std::to_string(point_count(acc)) + " points, query has " +
                               std::to_string(r.query.size()));
    const auto s = Clock::now();
    std::visit(
        [&](auto& a) {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, SufficientStats>) {
                r.linreg = linreg::fit(a, cfg.lambda, r.query);
            } else if constexpr (std::is_same_v<T, ChunkModel>) {
                throw std::logic_error("chunk models are not statistics");
            } else {
                nb::validate(a, std::get<T>(scale));
                r.nb = nb::extract_parameters(a);
            }
        },
        acc);
    r.timings.train_ms += ms_since(s);
    r.stats = std::move(acc);
}

}  // namespace detail

/// Executes a plan whose telescoping invariant holds for its query. Steps are
/// applied in order to a running accumulator; intermediate counts may be
/// negative, the final composition may not.
inline ExecutionReport execute(const ExecutionPlan& plan, const Catalog& catalog, const DataStore& store,
                               const QueryConfig& cfg) {
    using detail::Clock;
    using detail::ms_since;
    const auto start = Clock::now();
    check_kind_fits(cfg.kind, store.meta());
    if (!planner::telescopes(plan))
        throw InvalidPlanError("plan does not telescope to " + to_string(plan.query));

    ExecutionReport r;
    r.query = plan.query;
    r.kind = cfg.kind;
    r.plan = plan;
    r.steps_executed = plan.steps.size();

    if (cfg.kind == ModelKind::logreg_chunk) {
        std::map<IdRange, std::string> reusable;
        for (const auto& s : plan.steps) {
            if (!s.model) continue;
            if (s.op != StepOp::add) throw InvalidPlanError("logistic plans cannot remove points");
            reusable[s.model->range] = s.model->model_id;
        }
        const auto lookup = [&](IdRange chunk) -> std::optional<ChunkModel> {
            const auto it = reusable.find(chunk);
            if (it == reusable.end()) return std::nullopt;
            return std::get<ChunkModel>(catalog.load_model(it->second));
        };
        std::vector<ChunkModel> trained;
        const auto on_trained = [&](const ChunkModel& m) {
            if (cfg.materialize) trained.push_back(m);
        };
        logreg::AssemblyTimings t;
        r.logistic = logreg::assemble(plan.query, cfg.chunk_size, store, cfg.sgd, lookup, on_trained, &t);
        r.timings.io_ms = t.io_ms;
        r.timings.train_ms = t.train_ms;
        r.timings.merge_ms = t.merge_ms;
        r.bytes_fetched = t.bytes_fetched;
        r.new_chunks = std::move(trained);
        r.timings.total_ms = ms_since(start);
        return r;
    }

    const auto& meta = store.meta();
    Payload acc = empty_payload(cfg.kind, meta);
    Payload scale = empty_payload(cfg.kind, meta);
    for (const auto& s : plan.steps) {
        Payload delta;
        if (s.model) {
            if (s.model->kind != cfg.kind) throw InvalidPlanError("plan mixes model kinds");
            const auto t0 = Clock::now();
            delta = catalog.load_model(s.model->model_id);
            r.timings.io_ms += ms_since(t0);
        } else {
            auto t0 = Clock::now();
            const auto batch = store.fetch_range(s.range);
            r.timings.io_ms += ms_since(t0);
            r.bytes_fetched += batch.raw().size_bytes();
            t0 = Clock::now();
            delta = compute_payload(cfg.kind, batch, meta);
            r.timings.train_ms += ms_since(t0);
        }
        const auto t0 = Clock::now();
        accumulate(acc, delta, sign(s.op));
        accumulate(scale, delta, +1);
        r.timings.merge_ms += ms_since(t0);
    }
    detail::finish_stats(r, std::move(acc), std::move(scale), cfg);
    r.timings.total_ms = ms_since(start);
    return r;
}

/// From-scratch build: one fetch of the whole query. For logistic models this
/// is plain SGD over the query (the reference w_SGD), not the chunked mixture.
inline ExecutionReport baseline_build(IdRange query, const DataStore& store, const QueryConfig& cfg) {
    using detail::Clock;
    using detail::ms_since;
    const auto start = Clock::now();
    check_kind_fits(cfg.kind, store.meta());
    ExecutionReport r;
    r.query = query;
    r.kind = cfg.kind;
    r.plan = planner::baseline_plan(query, unit_cost_model(), cfg.kind == ModelKind::logreg_chunk);
    r.steps_executed = 1;

    auto t0 = Clock::now();
    const auto batch = store.fetch_range(query);
    r.timings.io_ms = ms_since(t0);
    r.bytes_fetched = batch.raw().size_bytes();
    t0 = Clock::now();
    if (cfg.kind == ModelKind::logreg_chunk) {
        SGDConfig c = cfg.sgd;
        c.shuffle_seed = logreg::chunk_seed(cfg.sgd.shuffle_seed, query.lo);
        auto m = logreg::train_chunk(batch, c);
        r.logistic = MixtureModel{m.w, {query}, query.size()};
        r.timings.train_ms = ms_since(t0);
    } else {
        auto stats = compute_payload(cfg.kind, batch, store.meta());
        r.timings.train_ms = ms_since(t0);
        auto scale = stats;
        detail::finish_stats(r, std::move(stats), std::move(scale), cfg);
    }
    r.timings.total_ms = ms_since(start);
    return r;
}

/// Plans against the catalog, executes, and (optionally) materializes the
/// result: the composed statistics for linreg/NB, the newly trained grid
/// chunks for logistic regression.
inline ExecutionReport answer_query(IdRange query, Catalog& catalog, const DataStore& store, const CostModel& cm,
                                    const QueryConfig& cfg) {
    using detail::Clock;
    using detail::ms_since;
    const auto start = Clock::now();
    if (query.lo > query.hi || query.hi >= store.meta().n)
        throw RangeError("query " + to_string(query) + " outside dataset of " + std::to_string(store.meta().n) +
                         " records");
    const bool directed = cfg.kind == ModelKind::logreg_chunk;
    if (directed && query.size() < cfg.chunk_size)
        throw std::invalid_argument("query " + to_string(query) + " is shorter than the chunk size " +
                                    std::to_string(cfg.chunk_size));

    auto t0 = Clock::now();
    ExecutionPlan plan;
    if (cfg.reuse) {
        const auto mode = directed ? PlanMode::logistic(cfg.chunk_size) : PlanMode::undirected();
        plan = planner::plan_query(catalog.relevant_models(query, cfg.kind), query, cm, mode);
    } else {
        plan = planner::baseline_plan(query, cm, directed);
    }
    const double plan_ms = ms_since(t0);

    auto r = execute(plan, catalog, store, cfg);
    r.timings.plan_ms = plan_ms;

    if (cfg.materialize) {
        if (directed) {
            for (const auto& m : r.new_chunks) r.materialized.push_back(catalog.materialize(m.descriptor, m));
        } else if (!(plan.steps.size() == 1 && plan.steps.front().model &&
                     plan.steps.front().model->range == query)) {
            r.materialized.push_back(catalog.materialize(query, *r.stats));
        }
    }
    r.timings.total_ms = ms_since(start);
    return r;
}

}  // namespace executor
}  // namespace remodel
