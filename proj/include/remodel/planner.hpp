#pragma once

// Query planning over range boundaries.
//
// A closed range [l,u] is represented by its boundary values l and u+1, so a
// graph edge (p,q) stands for the closed range [min(p,q), max(p,q)-1] and
// covers |p-q| ids. A query [l_q,u_q] is a walk from l_q to u_q+1; an edge
// traversed upward adds its range, downward removes it. Summing the signed
// indicators along any such walk telescopes to the query's indicator.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "remodel/catalog.hpp"
#include "remodel/common.hpp"
#include "remodel/logreg.hpp"

namespace remodel {

struct CostModel {
    std::function<double(const ModelDescriptor&)> model_cost;  // C
    std::function<double(std::uint64_t)> fetch_cost;           // F
    double merge_cost = 0.0;                                    // c_merge
    double train_per_row = 0.0;  // added to fetch edges in directed mode

    double C(const ModelDescriptor& m) const { return model_cost(m); }
    double F(std::uint64_t n) const { return fetch_cost(n); }
};

/// Linear F(n) = n and unit model cost; handy for examples and tests.
inline CostModel unit_cost_model(double merge_cost = 0.0) {
    return {[](const ModelDescriptor&) { return 1.0; }, [](std::uint64_t n) { return static_cast<double>(n); },
            merge_cost, 0.0};
}

struct PlanMode {
    bool directed = false;
    std::uint64_t chunk_size = 0;  // directed mode only: model edges must be grid chunks

    static PlanMode undirected() { return {}; }
    static PlanMode logistic(std::uint64_t l) { return {true, l}; }
};

struct PlanEdge {
    std::size_t i = 0, j = 0;  // vertex indices, i < j
    double weight = 0.0;
    int model = -1;  // index into PlanGraph::models, -1 for a base fetch

    bool is_fetch() const noexcept { return model < 0; }
};

struct PlanGraph {
    std::vector<Id> vertices;  // sorted boundary values
    std::vector<PlanEdge> edges;
    std::vector<ModelDescriptor> models;
    std::size_t source = 0, target = 0;
    IdRange query;
    double merge_cost = 0.0;
    bool directed = false;

    std::size_t vertex_index(Id v) const {
        const auto it = std::lower_bound(vertices.begin(), vertices.end(), v);
        if (it == vertices.end() || *it != v) throw std::out_of_range("not a vertex: " + std::to_string(v));
        return static_cast<std::size_t>(it - vertices.begin());
    }
};

enum class StepOp { add, remove };

inline int sign(StepOp op) noexcept { return op == StepOp::add ? 1 : -1; }

struct PlanStep {
    std::optional<ModelDescriptor> model;  // empty: fetch the range from the base data
    IdRange range;
    StepOp op = StepOp::add;
    double cost = 0.0;

    bool is_fetch() const noexcept { return !model.has_value(); }
};

struct ExecutionPlan {
    IdRange query;
    std::vector<PlanStep> steps;
    std::vector<Id> path;  // boundary values visited
    double estimated_cost = 0.0;
    double baseline_cost = 0.0;
    bool directed = false;

    std::size_t model_steps() const {
        return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const auto& s) { return !s.is_fetch(); }));
    }
};

namespace planner {

inline double fetch_edge_cost(const CostModel& cm, std::uint64_t n, bool directed) {
    return cm.F(n) + (directed ? cm.train_per_row * static_cast<double>(n) : 0.0);
}

inline double step_cost(const PlanStep& s, const CostModel& cm, bool directed) {
    return s.model ? cm.C(*s.model) : fetch_edge_cost(cm, s.range.size(), directed);
}

/// Σ step costs + (k−1)·c_merge.
inline double plan_cost(const ExecutionPlan& plan, const CostModel& cm) {
    double total = 0.0;
    for (const auto& s : plan.steps) total += step_cost(s, cm, plan.directed);
    if (plan.steps.size() > 1) total += static_cast<double>(plan.steps.size() - 1) * cm.merge_cost;
    return total;
}

/// Checks Σ sign·1[step range] == 1[query] pointwise, in integer arithmetic.
inline bool telescopes(const ExecutionPlan& plan) {
    std::map<Id, std::int64_t> delta;
    const auto mark = [&](IdRange r, std::int64_t s) {
        delta[r.lo] += s;
        delta[r.hi + 1] -= s;
    };
    mark(plan.query, -1);
    for (const auto& s : plan.steps) {
        if (s.range.lo > s.range.hi) return false;
        mark(s.range, sign(s.op));
    }
    std::int64_t running = 0;
    for (const auto& [at, d] : delta) {
        running += d;
        if (running != 0) return false;
    }
    return true;
}

/// Builds the query graph. Undirected: every vertex pair gets a fetch edge
/// and every model one extra edge between its boundaries. Directed: only
/// forward edges, and only grid-aligned chunks inside the query as models.
inline PlanGraph generate_graph(const std::vector<ModelDescriptor>& relevant, IdRange query, const CostModel& cm,
                                PlanMode mode = PlanMode::undirected()) {
    if (query.lo > query.hi) throw RangeError("inverted query " + to_string(query));
    if (mode.directed && mode.chunk_size == 0) throw std::invalid_argument("directed planning needs a chunk size");
    PlanGraph g;
    g.query = query;
    g.merge_cost = cm.merge_cost;
    g.directed = mode.directed;
    for (const auto& m : relevant) {
        if (mode.directed && (!query.contains(m.range) || !logreg::is_grid_chunk(m.range, mode.chunk_size))) continue;
        g.models.push_back(m);
    }
    std::sort(g.models.begin(), g.models.end(), descriptor_less);

    g.vertices = {query.lo, query.hi + 1};
    for (const auto& m : g.models) {
        g.vertices.push_back(m.range.lo);
        g.vertices.push_back(m.range.hi + 1);
    }
    std::sort(g.vertices.begin(), g.vertices.end());
    g.vertices.erase(std::unique(g.vertices.begin(), g.vertices.end()), g.vertices.end());
    g.source = g.vertex_index(query.lo);
    g.target = g.vertex_index(query.hi + 1);

    const std::size_t v = g.vertices.size();
    g.edges.reserve(v * (v - 1) / 2 + g.models.size());
    for (std::size_t i = 0; i < v; ++i)
        for (std::size_t j = i + 1; j < v; ++j)
            g.edges.push_back({i, j, fetch_edge_cost(cm, g.vertices[j] - g.vertices[i], mode.directed), -1});
    for (std::size_t k = 0; k < g.models.size(); ++k) {
        const auto& m = g.models[k];
        g.edges.push_back({g.vertex_index(m.range.lo), g.vertex_index(m.range.hi + 1), cm.C(m), static_cast<int>(k)});
    }
    for (const auto& e : g.edges)
        if (!(e.weight >= 0) || !std::isfinite(e.weight))
            throw std::invalid_argument("edge costs must be finite and non-negative");
    return g;
}

/// Minimum-cost walk source→target under Σ w + (k−1)·c_merge. Among equal
/// costs the plan with fewest edges wins, then the lexicographically smallest
/// vertex sequence.
inline ExecutionPlan optimal_path(const PlanGraph& g) {
    const std::size_t v = g.vertices.size();
    constexpr double inf = std::numeric_limits<double>::infinity();

    // Cheapest edge per ordered pair (model edges win ties against fetches).
    std::vector<int> best(v * v, -1);
    const auto better = [&](int cand, int cur) {
        if (cur < 0) return true;
        const auto& a = g.edges[static_cast<std::size_t>(cand)];
        const auto& b = g.edges[static_cast<std::size_t>(cur)];
        if (a.weight != b.weight) return a.weight < b.weight;
        if (a.is_fetch() != b.is_fetch()) return !a.is_fetch();
        return a.model < b.model;
    };
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const auto& e = g.edges[k];
        int& fwd = best[e.i * v + e.j];
        if (better(static_cast<int>(k), fwd)) fwd = static_cast<int>(k);
        if (!g.directed) {
            int& back = best[e.j * v + e.i];
            if (better(static_cast<int>(k), back)) back = static_cast<int>(k);
        }
    }
    const auto weight = [&](std::size_t a, std::size_t b) {
        const int k = best[a * v + b];
        return k < 0 ? inf : g.edges[static_cast<std::size_t>(k)].weight + g.merge_cost;
    };

    // Dense Dijkstra toward the target on (cost, hops).
    std::vector<double> dist(v, inf);
    std::vector<std::size_t> hops(v, std::numeric_limits<std::size_t>::max());
    std::vector<bool> done(v, false);
    dist[g.target] = 0.0;
    hops[g.target] = 0;
    for (std::size_t iter = 0; iter < v; ++iter) {
        std::size_t u = v;
        for (std::size_t x = 0; x < v; ++x) {
            if (done[x] || dist[x] == inf) continue;
            if (u == v || dist[x] < dist[u] || (dist[x] == dist[u] && hops[x] < hops[u])) u = x;
        }
        if (u == v) break;
        done[u] = true;
        for (std::size_t x = 0; x < v; ++x) {
            if (done[x]) continue;
            const double w = weight(x, u);  // edge x → u
            if (w == inf) continue;
            const double nd = dist[u] + w;
            if (nd < dist[x] || (nd == dist[x] && hops[u] + 1 < hops[x])) {
                dist[x] = nd;
                hops[x] = hops[u] + 1;
            }
        }
    }
    if (dist[g.source] == inf)
        throw NoPlanError("no plan reaches " + std::to_string(g.vertices[g.target]) + " from " +
                          std::to_string(g.vertices[g.source]));

    ExecutionPlan plan;
    plan.query = g.query;
    plan.directed = g.directed;
    std::size_t at = g.source;
    plan.path.push_back(g.vertices[at]);
    while (at != g.target) {
        std::size_t next = v;
        for (std::size_t x = 0; x < v; ++x) {
            if (x == at || hops[x] + 1 != hops[at]) continue;
            const double w = weight(at, x);
            if (w == inf) continue;
            const double total = w + dist[x];
            if (std::abs(total - dist[at]) <= 1e-12 * std::max(1.0, std::abs(dist[at]))) {
                next = x;
                break;
            }
        }
        if (next == v) throw NoPlanError("shortest-path reconstruction failed");
        const auto& e = g.edges[static_cast<std::size_t>(best[at * v + next])];
        PlanStep s;
        const Id a = g.vertices[at], b = g.vertices[next];
        s.range = {std::min(a, b), std::max(a, b) - 1};
        s.op = a < b ? StepOp::add : StepOp::remove;
        s.cost = e.weight;
        if (!e.is_fetch()) s.model = g.models[static_cast<std::size_t>(e.model)];
        plan.steps.push_back(std::move(s));
        plan.path.push_back(b);
        at = next;
    }
    for (const auto& s : plan.steps) plan.estimated_cost += s.cost;
    if (plan.steps.size() > 1) plan.estimated_cost += static_cast<double>(plan.steps.size() - 1) * g.merge_cost;
    return plan;
}

/// The single base-fetch plan.
inline ExecutionPlan baseline_plan(IdRange query, const CostModel& cm, bool directed = false) {
    ExecutionPlan p;
    p.query = query;
    p.directed = directed;
    p.path = {query.lo, query.hi + 1};
    p.steps.push_back({std::nullopt, query, StepOp::add, fetch_edge_cost(cm, query.size(), directed)});
    p.estimated_cost = p.baseline_cost = p.steps.front().cost;
    return p;
}

inline ExecutionPlan plan_query(const std::vector<ModelDescriptor>& relevant, IdRange query, const CostModel& cm,
                                PlanMode mode = PlanMode::undirected()) {
    ExecutionPlan plan;
    try {
        plan = optimal_path(generate_graph(relevant, query, cm, mode));
    } catch (const NoPlanError&) {
        plan = baseline_plan(query, cm, mode.directed);
    }
    plan.baseline_cost = fetch_edge_cost(cm, query.size(), mode.directed);
    return plan;
}

inline std::string explain(const ExecutionPlan& plan) {
    std::ostringstream os;
    os << "query " << to_string(plan.query) << (plan.directed ? " (directed)" : "") << '\n';
    os << std::setprecision(6);
    for (std::size_t k = 0; k < plan.steps.size(); ++k) {
        const auto& s = plan.steps[k];
        os << "  " << k + 1 << ". " << (s.op == StepOp::add ? '+' : '-') << ' ';
        if (s.model)
            os << "model " << s.model->model_id << ' ' << to_string(s.model->range);
        else
            os << "fetch " << to_string(s.range);
        os << "  cost " << s.cost << '\n';
    }
    os << "estimated cost " << plan.estimated_cost << ", baseline " << plan.baseline_cost << '\n';
    return os.str();
}

}  // namespace planner
}  // namespace remodel
