// remodel: command-line front end.
//
// A data directory holds the dataset (data.bin, meta.txt), the catalog
// (catalog/) and the cached cost calibration (cost_model.txt).

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "remodel/remodel.hpp"

using namespace remodel;

namespace {

struct Common {
    std::string data = "data";
    std::string kind = "linreg";
    std::string range;
    double lambda = 1e-4;
    double alpha = 0.01;
    int epochs = 1;
    std::uint64_t chunk_size = 10'000;
    std::uint64_t seed = 42;
};

void add_model_flags(CLI::App* cmd, Common& c, bool need_range) {
    cmd->add_option("--data", c.data, "data directory")->capture_default_str();
    cmd->add_option("--kind", c.kind, "linreg | nb-gaussian | nb-multinomial | logreg")->capture_default_str();
    auto* r = cmd->add_option("--range", c.range, "closed id range l:u");
    if (need_range) r->required();
    cmd->add_option("--lambda", c.lambda, "regularization")->capture_default_str();
    cmd->add_option("--alpha", c.alpha, "SGD learning rate (logreg)")->capture_default_str();
    cmd->add_option("--epochs", c.epochs, "SGD epochs (logreg)")->capture_default_str();
    cmd->add_option("--chunk-size", c.chunk_size, "logreg chunk size l")->capture_default_str();
    cmd->add_option("--seed", c.seed, "random seed")->capture_default_str();
}

QueryConfig query_config(const Common& c) {
    QueryConfig q;
    q.kind = parse_model_kind(c.kind);
    q.lambda = c.lambda;
    q.sgd.learning_rate = c.alpha;
    q.sgd.lambda = c.lambda;
    q.sgd.epochs = c.epochs;
    q.sgd.shuffle_seed = c.seed;
    q.sgd.validate();
    q.chunk_size = c.chunk_size;
    return q;
}

std::filesystem::path catalog_dir(const std::string& data) { return std::filesystem::path(data) / "catalog"; }

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::istringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stod(tok));
    return out;
}

void print_payload(std::ostream& os, const Payload& p) {
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            os << std::setprecision(10);
            if constexpr (std::is_same_v<T, SufficientStats>) {
                os << "n_points " << v.n_points << "\nB";
                for (Eigen::Index i = 0; i < v.B.size(); ++i) os << ' ' << v.B[i];
                os << "\nA\n" << v.A << '\n';
            } else if constexpr (std::is_same_v<T, ChunkModel>) {
                os << "chunk_size " << v.chunk_size << "\nw";
                for (double x : v.w) os << ' ' << x;
                os << '\n';
            } else if constexpr (std::is_same_v<T, GaussianClassStats>) {
                for (std::uint32_t c = 0; c < v.classes; ++c) os << "class " << c << " count " << v.count[c] << '\n';
            } else {
                for (std::uint32_t c = 0; c < v.classes; ++c)
                    os << "class " << c << " samples " << v.samples[c] << " feature_total " << v.feature_total[c]
                       << '\n';
            }
        },
        p);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reuse materialized models to answer range-scoped training queries"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "convert a CSV file into a data directory");
    std::string csv, target, target_kind = "regression", ingest_data = "data";
    ingest->add_option("--csv", csv, "input CSV with a header row")->required();
    ingest->add_option("--target", target, "target column name")->required();
    ingest->add_option("--target-kind", target_kind, "regression | classification")->capture_default_str();
    ingest->add_option("--data", ingest_data, "output data directory")->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
    SynthSpec sspec;
    std::string synth_data_dir = "data", synth_kind = "linreg";
    synth->add_option("--data", synth_data_dir, "output data directory")->capture_default_str();
    synth->add_option("--kind", synth_kind, "model kind the data is meant for")->capture_default_str();
    synth->add_option("-n,--n", sspec.n, "rows")->capture_default_str();
    synth->add_option("-d,--d", sspec.d, "features")->capture_default_str();
    synth->add_option("--seed", sspec.seed, "random seed")->capture_default_str();
    synth->add_option("--noise", sspec.noise, "noise level / blob spread")->capture_default_str();
    synth->add_option("--classes", sspec.classes, "classes (NB)")->capture_default_str();

    // materialize
    auto* mat = app.add_subcommand("materialize", "build a model over a range and store it");
    Common mc;
    add_model_flags(mat, mc, true);

    // query
    auto* query = app.add_subcommand("query", "answer a model query, reusing stored models");
    Common qc;
    bool explain = false, no_reuse = false, no_materialize = false, recalibrate = false;
    std::string report = "text";
    add_model_flags(query, qc, true);
    query->add_flag("--explain", explain, "print the plan without executing it");
    query->add_option("--report", report, "json | text")->check(CLI::IsMember({"json", "text"}))->capture_default_str();
    query->add_flag("--no-reuse", no_reuse, "build from scratch");
    query->add_flag("--no-materialize", no_materialize, "do not store the result");
    query->add_flag("--recalibrate", recalibrate, "re-measure the cost model");

    // catalog
    auto* cat = app.add_subcommand("catalog", "inspect stored models");
    cat->require_subcommand(1);
    std::string cat_data = "data", cat_kind, show_id;
    cat->add_option("--data", cat_data, "data directory")->capture_default_str();
    auto* cat_list = cat->add_subcommand("list", "list models");
    cat_list->add_option("--kind", cat_kind, "only this kind");
    auto* cat_show = cat->add_subcommand("show", "print one model");
    cat_show->add_option("model_id", show_id)->required();
    auto* cat_cov = cat->add_subcommand("coverage", "percentage of ids covered per kind");
    cat_cov->add_option("--kind", cat_kind, "only this kind");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "speedup vs coverage benchmark (CSV on stdout)");
    Common bc;
    std::string coverages = "0,20,40,60,80,90", model_size = "normal:50000,12500", query_size = "normal:50000,12500",
                out_csv, work_dir;
    std::uint64_t queries = 200;
    int repeats = 1;
    bool parallel = false;
    add_model_flags(bench_cmd, bc, false);
    bench_cmd->add_option("--coverage", coverages, "comma-separated coverage targets (%)")->capture_default_str();
    bench_cmd->add_option("--model-size", model_size, "fixed:k | uniform:lo,hi | normal:mu,sigma")
        ->capture_default_str();
    bench_cmd->add_option("--query-size", query_size, "fixed:k | uniform:lo,hi | normal:mu,sigma")
        ->capture_default_str();
    bench_cmd->add_option("--queries", queries, "queries per coverage target")->capture_default_str();
    bench_cmd->add_option("--repeats", repeats, "timing repetitions per query (min kept)")->capture_default_str();
    bench_cmd->add_flag("--parallel", parallel, "also run the queries concurrently (correctness check)");
    bench_cmd->add_option("--out", out_csv, "write CSV here instead of stdout");
    bench_cmd->add_option("--work-dir", work_dir, "scratch directory for bench catalogs (default <data>/bench)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            const auto meta = ingest_csv(csv, target, parse_target_kind(target_kind), ingest_data);
            std::cout << "ingested " << meta.n << " rows, " << meta.d << " features";
            if (meta.target_kind == TargetKind::classification) std::cout << ", " << meta.class_count << " classes";
            std::cout << '\n';
        } else if (*synth) {
            sspec.kind = parse_model_kind(synth_kind);
            const auto r = synth_data(synth_data_dir, sspec);
            std::cout << "wrote " << r.meta.n << " rows, " << r.meta.d << " features to " << synth_data_dir << '\n';
        } else if (*mat) {
            const auto cfg = query_config(mc);
            const auto store = DataStore::open(mc.data);
            check_kind_fits(cfg.kind, store.meta());
            auto catalog = Catalog::open(catalog_dir(mc.data), store.meta().n);
            const auto range = parse_range(mc.range);
            if (range.hi >= store.meta().n) throw RangeError("range " + to_string(range) + " outside dataset");
            if (cfg.kind == ModelKind::logreg_chunk) {
                const auto layout = logreg::grid_layout(range, cfg.chunk_size);
                if (layout.chunks.empty()) throw RangeError("range " + to_string(range) + " holds no whole grid chunk");
                const auto batch = store.fetch_range(layout.chunks.front().lo, layout.chunks.back().hi);
                for (const auto& ch : layout.chunks) {
                    SGDConfig c = cfg.sgd;
                    c.shuffle_seed = logreg::chunk_seed(cfg.sgd.shuffle_seed, ch.lo);
                    const auto m = logreg::train_chunk(batch.slice(ch.lo - batch.first_id(), cfg.chunk_size), c);
                    std::cout << catalog.materialize(ch, m) << ' ' << to_string(ch) << '\n';
                }
            } else {
                const auto p = compute_payload(cfg.kind, store.fetch_range(range), store.meta());
                std::cout << catalog.materialize(range, p) << ' ' << to_string(range) << '\n';
            }
        } else if (*query) {
            auto cfg = query_config(qc);
            cfg.reuse = !no_reuse;
            cfg.materialize = !no_materialize;
            const auto store = DataStore::open(qc.data);
            check_kind_fits(cfg.kind, store.meta());
            auto catalog = Catalog::open(catalog_dir(qc.data), store.meta().n);
            const auto range = parse_range(qc.range);
            const auto cal = cost::load_or_calibrate(store, cfg.kind, cfg.sgd, recalibrate);
            const auto cm = cost::make_cost_model(cal, catalog, store.meta());
            if (explain) {
                const bool directed = cfg.kind == ModelKind::logreg_chunk;
                const auto plan =
                    cfg.reuse ? planner::plan_query(catalog.relevant_models(range, cfg.kind), range, cm,
                                                    directed ? PlanMode::logistic(cfg.chunk_size) : PlanMode::undirected())
                              : planner::baseline_plan(range, cm, directed);
                std::cout << planner::explain(plan);
                return 0;
            }
            const auto r = executor::answer_query(range, catalog, store, cm, cfg);
            if (report == "json") std::cout << r.to_json().dump(2) << '\n';
            else std::cout << r.to_text();
        } else if (*cat) {
            const auto meta = read_meta_sidecar(cat_data);
            const auto catalog = Catalog::open(catalog_dir(cat_data), meta.n);
            std::optional<ModelKind> kind;
            if (!cat_kind.empty()) kind = parse_model_kind(cat_kind);
            if (*cat_list) {
                for (const auto& m : catalog.list(kind))
                    std::cout << m.model_id << ' ' << to_string(m.kind) << ' ' << to_string(m.range) << ' '
                              << catalog.payload_bytes(m.model_id) << " bytes\n";
            } else if (*cat_show) {
                const auto d = catalog.find(show_id);
                if (!d) throw CatalogError("unknown model id '" + show_id + "'");
                std::cout << d->model_id << ' ' << to_string(d->kind) << ' ' << to_string(d->range) << '\n';
                print_payload(std::cout, catalog.load_model(show_id));
            } else {
                for (auto k : {ModelKind::linreg, ModelKind::nb_gaussian, ModelKind::nb_multinomial,
                               ModelKind::logreg_chunk})
                    if (!kind || *kind == k)
                        std::cout << to_string(k) << ' ' << catalog.coverage(k) << "%\n";
            }
        } else if (*bench_cmd) {
            BenchSpec spec;
            spec.cfg = query_config(bc);
            spec.coverage_targets = parse_list(coverages);
            spec.model_size = SizeDist::parse(model_size);
            spec.query_size = SizeDist::parse(query_size);
            spec.query_count = queries;
            spec.repeats = repeats;
            spec.parallel = parallel;
            spec.seed = bc.seed;
            const auto store = DataStore::open(bc.data);
            const auto cal = cost::load_or_calibrate(store, spec.cfg.kind, spec.cfg.sgd);
            const auto dir = work_dir.empty() ? std::filesystem::path(bc.data) / "bench" : std::filesystem::path(work_dir);
            std::cerr << "speedup = T0/T (from-scratch time over reuse time; 2 means twice as fast)\n";
            const auto result = bench::run(store, dir, spec, cal, &std::cerr);
            if (out_csv.empty()) {
                std::cout << result.to_csv();
            } else {
                std::ofstream out(out_csv);
                out << result.to_csv();
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
