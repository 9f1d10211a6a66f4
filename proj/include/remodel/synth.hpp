#pragma once

// Seeded synthetic datasets written straight into the datastore format.
//
//   linreg          features AR(1)-correlated (ρ = 0.5), y = w·x + noise·N(0,1),
//                   w drawn from U(-2,2)
//   nb-gaussian,    Gaussian blobs; two classes sit at ±m with m_j = ±0.5,
//   logreg          more classes at random centers in [-2,2]^d; noise is the spread
//   nb-multinomial  Poisson counts with per-class rates drawn from [1,10]

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "remodel/common.hpp"
#include "remodel/datastore.hpp"

namespace remodel {

struct SynthSpec {
    std::uint64_t n = 1'000'000;
    std::uint32_t d = 10;
    ModelKind kind = ModelKind::linreg;
    std::uint64_t seed = 42;
    double noise = 1.0;
    std::uint32_t classes = 2;
};

struct SynthResult {
    DatasetMeta meta;
    std::vector<double> w_true;   // linreg
    std::vector<double> centers;  // blobs, classes × d
    std::vector<double> rates;    // multinomial, classes × d
};

inline SynthResult synth_data(const std::filesystem::path& dir, const SynthSpec& spec) {
    if (spec.n == 0 || spec.d == 0) throw std::invalid_argument("synth needs n, d >= 1");
    if (!(spec.noise >= 0)) throw std::invalid_argument("noise must be >= 0");
    const bool regression = spec.kind == ModelKind::linreg;
    const std::uint32_t classes = spec.kind == ModelKind::logreg_chunk ? 2 : spec.classes;
    if (!regression && classes < 2) throw std::invalid_argument("classification needs at least 2 classes");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);

    SynthResult out;
    out.meta.n = 0;
    out.meta.d = spec.d;
    out.meta.target_kind = regression ? TargetKind::regression : TargetKind::classification;
    out.meta.class_count = regression ? 0 : classes;
    out.meta.source_path = "synth:" + to_string(spec.kind) + ":seed=" + std::to_string(spec.seed);

    if (regression) {
        out.w_true.resize(spec.d);
        for (auto& w : out.w_true) w = unif(rng);
    } else if (spec.kind == ModelKind::nb_multinomial) {
        std::uniform_real_distribution<double> rate(1.0, 10.0);
        out.rates.resize(std::size_t{classes} * spec.d);
        for (auto& r : out.rates) r = rate(rng);
    } else {
        out.centers.resize(std::size_t{classes} * spec.d);
        if (classes == 2) {
            for (std::uint32_t j = 0; j < spec.d; ++j) {
                const double m = (rng() & 1) ? 0.5 : -0.5;
                out.centers[j] = m;
                out.centers[spec.d + j] = -m;
            }
        } else {
            for (auto& c : out.centers) c = unif(rng);
        }
    }

    std::filesystem::create_directories(dir);
    DataStoreWriter writer(dir, out.meta);
    std::vector<double> x(spec.d);
    std::uniform_int_distribution<std::uint32_t> label(0, classes > 0 ? classes - 1 : 0);
    const double rho = 0.5, innov = std::sqrt(1.0 - rho * rho);
    std::vector<std::poisson_distribution<int>> poisson;
    for (double r : out.rates) poisson.emplace_back(r);

    for (std::uint64_t i = 0; i < spec.n; ++i) {
        double y = 0;
        if (regression) {
            for (std::uint32_t j = 0; j < spec.d; ++j) {
                x[j] = j == 0 ? gauss(rng) : rho * x[j - 1] + innov * gauss(rng);
                y += out.w_true[j] * x[j];
            }
            y += spec.noise * gauss(rng);
        } else {
            const auto c = label(rng);
            y = c;
            for (std::uint32_t j = 0; j < spec.d; ++j) {
                const auto k = std::size_t{c} * spec.d + j;
                x[j] = spec.kind == ModelKind::nb_multinomial ? poisson[k](rng)
                                                              : out.centers[k] + spec.noise * gauss(rng);
            }
        }
        writer.append(x, y);
    }
    out.meta = writer.finish();
    return out;
}

}  // namespace remodel
