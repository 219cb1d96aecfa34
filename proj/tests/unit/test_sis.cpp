#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "simprob/errors.hpp"
#include "simprob/simzoo.hpp"
#include "simprob/sis.hpp"
#include "simprob/trace_io.hpp"

using namespace simprob;

namespace {

ParticleSet manual_set(const std::vector<double> & values, const std::vector<double> & log_weights,
                       const std::string & name = "x")
{
    ParticleSet ps;
    for (double v : values) {
        Trace t;
        t.predicts.emplace(name, Value(v));
        ps.traces.push_back(t);
    }
    ps.log_weights = log_weights;
    normalize(ps);
    return ps;
}

double weighted_mean(const ParticleSet & ps, const std::string & name)
{
    double m = 0;
    for (std::size_t i = 0; i < ps.traces.size(); ++i) m += ps.weights[i] * ps.traces[i].predicts.at(name).as_double();
    return m;
}

} // namespace

TEST_CASE("conjugate Gaussian posterior mean")
{
    const auto ps = sis_infer(simzoo::gaussian_unknown_mean, {1.0}, 10000, nullptr, 2024);
    const auto s = posterior_summary(ps, "mu");
    // Posterior N(0.5, 0.5); the standard error uses the effective sample size.
    const double se = std::sqrt(0.5 / s.ess);
    CHECK(std::abs(s.mean - 0.5) < 3 * se);
    CHECK(std::abs(s.variance - 0.5) < 0.1);
    CHECK(s.quantiles.at(0.5) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("y = 0 gives a posterior mean near zero")
{
    const auto s = posterior_summary(sis_infer(simzoo::gaussian_unknown_mean, {0.0}, 10000, nullptr, 7), "mu");
    CHECK(std::abs(s.mean) < 3 * std::sqrt(0.5 / s.ess));
}

TEST_CASE("single particle has unit weight")
{
    const auto ps = sis_infer(simzoo::gaussian_unknown_mean, {1.0}, 1, nullptr, 3);
    REQUIRE(ps.weights.size() == 1);
    CHECK(ps.weights[0] == 1.0);
    CHECK(effective_sample_size(ps) == 1.0);
}

TEST_CASE("zero likelihood everywhere raises AllWeightsZero naming the site")
{
    const Model m = [](ExecutionContext & ctx) {
        const double x = ctx.sample("x", Distribution::normal(0, 1)).as_double();
        ctx.observe("bounded", Distribution::uniform(x - 1, x + 1));
    };
    try {
        sis_infer(m, {1e6}, 50, nullptr, 1);
        FAIL("expected AllWeightsZero");
    } catch (const AllWeightsZero & e) {
        CHECK(std::string(e.what()).find("bounded:Uniform#0") != std::string::npos);
    }
}

TEST_CASE("effective_sample_size examples")
{
    CHECK(effective_sample_size(std::vector<double>(10, 0.1)) == doctest::Approx(10.0));
    CHECK(effective_sample_size(std::vector<double>{1, 0, 0, 0}) == 1.0);
    CHECK(effective_sample_size(std::vector<double>{0.5, 0.25, 0.25}) == doctest::Approx(8.0 / 3).epsilon(1e-15));
}

TEST_CASE("posterior_summary examples")
{
    ParticleSet constant;
    for (int i = 0; i < 5; ++i) {
        Trace t;
        t.predicts.emplace("channel", Value(2));
        constant.traces.push_back(t);
        constant.log_weights.push_back(-i * 1.7);
    }
    normalize(constant);
    const auto h = posterior_summary(constant, "channel");
    CHECK(h.integer);
    REQUIRE(h.histogram.size() == 1);
    CHECK(h.histogram.at(2) == doctest::Approx(1.0).epsilon(1e-15));

    const auto s = posterior_summary(manual_set({0.0, 1.0}, {0.0, 0.0}), "x");
    CHECK(s.mean == doctest::Approx(0.5));
    CHECK(s.variance == doctest::Approx(0.25));

    ParticleSet missing = manual_set({0.0, 1.0}, {0.0, 0.0});
    missing.traces[1].predicts.clear();
    CHECK_THROWS_AS(posterior_summary(missing, "x"), MissingPredict);
}

TEST_CASE("weighted_quantile interpolates the weighted CDF")
{
    const std::vector<double> v{3.0, 1.0, 2.0, 4.0}, w{0.25, 0.25, 0.25, 0.25};
    CHECK(weighted_quantile(v, w, 0.5) == doctest::Approx(2.0));
    CHECK(weighted_quantile(v, w, 0.625) == doctest::Approx(2.5));
    CHECK(weighted_quantile(v, w, 0.0) == 1.0);
    CHECK(weighted_quantile(v, w, 1.0) == 4.0);
    const std::vector<double> v2{0.0, 1.0}, w2{0.5, 0.5};
    CHECK(weighted_quantile(v2, w2, 0.75) == doctest::Approx(0.5));
}

TEST_CASE("normalization survives a 700 log-unit spread")
{
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> lw(1 + rng() % 500);
        for (double & x : lw) x = -700.0 * uniform_open01(rng) + 350.0;
        lw[rng() % lw.size()] = -350.0;
        lw[rng() % lw.size()] = 350.0;
        const auto w = normalize_log_weights(lw);
        double total = 0;
        for (double x : w) {
            CHECK(std::isfinite(x));
            total += x;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    const std::vector<double> with_zero{-INFINITY, 2.0, -INFINITY};
    const auto w = normalize_log_weights(with_zero);
    CHECK(w[1] == 1.0);
    CHECK(w[0] == 0.0);
    CHECK_THROWS_AS(normalize_log_weights(std::vector<double>{-INFINITY, -INFINITY}), AllWeightsZero);
}

TEST_CASE("particle sets are identical across thread counts")
{
    for (const char * name : {"rejection_demo", "tau_decay_toy"}) {
        const Model m = simzoo::make_model(name, {});
        std::vector<double> obs;
        if (std::string(name) == "rejection_demo") {
            obs = {0.4};
        } else {
            obs = run_model(m, Mode::Prior, 11).observation;
        }
        const auto one = sis_infer(m, obs, 300, nullptr, 99, {.threads = 1});
        const auto four = sis_infer(m, obs, 300, nullptr, 99, {.threads = 4});
        REQUIRE(one.traces.size() == four.traces.size());
        for (std::size_t i = 0; i < one.traces.size(); ++i) {
            CHECK(trace_to_jsonl(one.traces[i]) == trace_to_jsonl(four.traces[i]));
        }
        CHECK(one.weights == four.weights);
    }
}

TEST_CASE("posterior mean error shrinks with more particles")
{
    std::vector<double> small_err, large_err;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const double y = 1.0;
        small_err.push_back(
            std::abs(weighted_mean(sis_infer(simzoo::gaussian_unknown_mean, {y}, 100, nullptr, 1000 + rep), "mu") - 0.5));
        large_err.push_back(
            std::abs(weighted_mean(sis_infer(simzoo::gaussian_unknown_mean, {y}, 10000, nullptr, 2000 + rep), "mu") - 0.5));
    }
    std::nth_element(small_err.begin(), small_err.begin() + 10, small_err.end());
    std::nth_element(large_err.begin(), large_err.begin() + 10, large_err.end());
    CHECK(large_err[10] < small_err[10]);
}

TEST_CASE("summary JSON fields")
{
    const auto real = nlohmann::json::parse(summary_to_json(posterior_summary(manual_set({0.0, 1.0}, {0.0, 0.0}), "x")));
    CHECK(real["predict"] == "x");
    CHECK(real["kind"] == "real");
    CHECK(real.contains("mean"));
    CHECK(real.contains("var"));
    CHECK(real.contains("quantiles"));
    CHECK(real["n_particles"] == 2);
    CHECK(real["ess"].get<double>() == doctest::Approx(2.0));

    ParticleSet ints;
    for (int i = 0; i < 3; ++i) {
        Trace t;
        t.predicts.emplace("c", Value(i % 2));
        ints.traces.push_back(t);
        ints.log_weights.push_back(0.0);
    }
    normalize(ints);
    const auto hist = nlohmann::json::parse(summary_to_json(posterior_summary(ints, "c")));
    CHECK(hist["kind"] == "int");
    CHECK(hist.contains("histogram"));
    CHECK_FALSE(hist.contains("mean"));
}
