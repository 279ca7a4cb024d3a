#include "doctest.h"
#include "support.hpp"

#include "grawa/center_policy.hpp"
#include "grawa/errors.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

using namespace grawa;
using grawa::test::column;
using grawa::test::column_grad;

namespace {

// Constant per-sample gradient, independent of params.
class FixedGradient final : public Objective {
public:
    explicit FixedGradient(LayerStack g) : g_(std::move(g)) {}
    ObjectiveKind kind() const override { return ObjectiveKind::quadratic; }
    ShapeSignature signature() const override { return g_.signature(); }
    double eval(const LayeredParams& x, const Batch&) const override { return dot(x, g_); }
    LayeredGradient grad(const LayeredParams&, const Batch&, Rng*) const override { return LayeredGradient(g_); }
    LayeredParams initial_params(std::uint64_t) const override { return LayeredParams(LayerStack::zeros(signature())); }

private:
    LayerStack g_;
};

LayeredParams two_layer(double a, double b) {
    return LayeredParams(std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Constant(1, 1, a), Eigen::MatrixXd::Constant(1, 1, b)});
}

}  // namespace

TEST_CASE("grawa_weights examples") {
    const std::vector<double> four{1, 1, 1, 1};
    for (double w : grawa_weights(four)) CHECK(w == 0.25);
    const std::vector<double> two{1, 2};
    auto w = grawa_weights(two);
    CHECK(w[0] == doctest::Approx(2.0 / 3.0));
    CHECK(w[1] == doctest::Approx(1.0 / 3.0));
    const std::vector<double> one{7.5};
    CHECK(grawa_weights(one)[0] == 1.0);
    CHECK_THROWS_AS(grawa_weights(std::vector<double>{}), ConfigError);
}

TEST_CASE("grawa_weights floors zero norms") {
    const std::vector<double> norms{0.0, 1.0};
    auto w = grawa_weights(norms);
    CHECK(std::isfinite(w[0]));
    CHECK(w[0] > 0.999);
    CHECK(w[0] + w[1] == doctest::Approx(1.0));
}

TEST_CASE("grawa_weights properties on random vectors") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.01, 10.0);
    std::uniform_int_distribution<int> count(1, 12);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(count(rng));
        for (auto& x : a) x = u(rng);
        auto w = grawa_weights(a);
        CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) < 1e-12);

        std::vector<double> scaled = a;
        for (auto& x : scaled) x *= 3.7;
        auto ws = grawa_weights(scaled);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(ws[i] - w[i]) < 1e-12);

        if (a.size() > 1) {
            std::vector<double> bigger = a;
            bigger[0] *= 1.5;
            CHECK(grawa_weights(bigger)[0] < w[0]);
        }

        double inv = 0;
        for (double x : a) inv += 1 / x;
        CHECK(std::abs(grawa_theta(a) - 1 / inv) < 1e-12 * (1 / inv));
        CHECK(std::abs(grawa_theta_product_form(a) - 1 / inv) < 1e-10 * (1 / inv));
    }
}

TEST_CASE("accumulate_profile") {
    FixedGradient obj(LayerStack(std::vector<Eigen::MatrixXd>{(Eigen::MatrixXd(1, 2) << 3, 4).finished(),
                                                              Eigen::MatrixXd::Zero(1, 1)}));
    auto p = accumulate_profile(obj, obj.initial_params(0), Batch::placeholder());
    REQUIRE(p.per_layer.size() == 2);
    CHECK(p.per_layer[0] == 5.0);
    CHECK(p.per_layer[1] == 0.0);
    CHECK(p.model_total == 5.0);

    Vincent2d v;
    auto pv = accumulate_profile(v, Vincent2d::point(1, 1), v.full_batch());
    CHECK(pv.per_layer[0] == doctest::Approx(10.0));
    CHECK(pv.per_layer[1] == doctest::Approx(10.0));
    CHECK(pv.model_total == doctest::Approx(20.0));

    Batch empty;
    empty.inputs.resize(0, 2);
    CHECK_THROWS_AS(accumulate_profile(v, Vincent2d::point(1, 1), empty), ConfigError);
}

TEST_CASE("accumulate_profile sums over the batch") {
    MlpSpec spec;
    spec.train_size = 32;
    spec.test_size = 8;
    MlpClassifier mlp(spec, 1);
    auto x = mlp.initial_params(2);
    const Batch b = mlp.train_set()->all();
    auto p = accumulate_profile(mlp, x, b);
    auto mean = mlp.grad(x, b).layer_norms();
    for (std::size_t k = 0; k < mean.size(); ++k) CHECK(p.per_layer[k] == doctest::Approx(32 * mean[k]));
}

TEST_CASE("smooth_profile") {
    auto cur = GradNormProfile::from_layer_norms({10.0});
    auto pass = smooth_profile(cur, GradNormProfile{}, 0.0, 1);
    CHECK(pass.per_layer == cur.per_layer);

    auto first = smooth_profile(cur, GradNormProfile{}, 0.9, 1);
    CHECK(first.momentum_state[0] == doctest::Approx(1.0));
    CHECK(first.per_layer[0] == doctest::Approx(9.0));

    auto unbiased = smooth_profile(cur, GradNormProfile{}, 0.9, 1, true);
    CHECK(unbiased.per_layer[0] == doctest::Approx(10.0));

    GradNormProfile state;
    for (long t = 1; t <= 400; ++t) state = smooth_profile(cur, state, 0.9, t);
    CHECK(state.per_layer[0] == doctest::Approx(9.0));

    CHECK_THROWS_AS(smooth_profile(cur, state, 1.0, 2), ConfigError);
    CHECK_THROWS_AS(smooth_profile(GradNormProfile::from_layer_norms({1, 2}), state, 0.5, 2), SignatureError);
}

TEST_CASE("center_mgrawa") {
    std::vector<LayeredParams> w{column({0, 0}), column({3, 3})};
    std::vector<GradNormProfile> p{GradNormProfile::from_layer_norms({1}), GradNormProfile::from_layer_norms({2})};
    auto c = center_mgrawa(w, p);
    CHECK(c.params.layer(0)(0) == doctest::Approx(1.0));
    CHECK(c.params.layer(0)(1) == doctest::Approx(1.0));

    std::vector<GradNormProfile> eq{GradNormProfile::from_layer_norms({4}), GradNormProfile::from_layer_norms({4})};
    CHECK(center_mgrawa(w, eq).params == uniform_mean(w));

    std::vector<LayeredParams> single{column({5, -1})};
    std::vector<GradNormProfile> sp{GradNormProfile::from_layer_norms({2})};
    CHECK(center_mgrawa(std::span<const LayeredParams>(single), sp).params == single[0]);

    std::vector<LayeredParams> bad{column({0, 0}), column({1, 1, 1})};
    CHECK_THROWS_AS(center_mgrawa(bad, p), SignatureError);
}

TEST_CASE("center_lgrawa per-layer weights") {
    std::vector<LayeredParams> w{two_layer(0, 0), two_layer(4, 3)};
    std::vector<GradNormProfile> p{GradNormProfile::from_layer_norms({1, 4}), GradNormProfile::from_layer_norms({3, 2})};
    auto c = center_lgrawa(w, p);
    REQUIRE(c.weights.size() == 2);
    CHECK(c.weights[0][0] == doctest::Approx(0.75));
    CHECK(c.weights[0][1] == doctest::Approx(0.25));
    CHECK(c.weights[1][0] == doctest::Approx(1.0 / 3));
    CHECK(c.weights[1][1] == doctest::Approx(2.0 / 3));
    CHECK(c.params.layer(0)(0) == doctest::Approx(1.0));
    CHECK(c.params.layer(1)(0) == doctest::Approx(2.0));

    std::vector<GradNormProfile> eq{GradNormProfile::from_layer_norms({2, 2}), GradNormProfile::from_layer_norms({2, 2})};
    CHECK(center_lgrawa(w, eq).params == uniform_mean(w));

    std::vector<GradNormProfile> short_p{GradNormProfile::from_layer_norms({1}), GradNormProfile::from_layer_norms({1})};
    CHECK_THROWS_AS(center_lgrawa(w, short_p), SignatureError);
}

TEST_CASE("center_lgrawa with one layer bit-equals center_mgrawa") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.1, 5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<LayeredParams> w;
        std::vector<GradNormProfile> p;
        for (int m = 0; m < 5; ++m) {
            w.push_back(grawa::test::random_like({{4, 3}}, rng));
            p.push_back(GradNormProfile::from_layer_norms({u(rng)}));
        }
        CHECK(center_lgrawa(w, p).params == center_mgrawa(w, p).params);
    }
}

TEST_CASE("center_easgd") {
    std::vector<LayeredParams> w{column({1, 1}), column({3, 3})};
    auto prev = column({0, 0});
    CHECK(center_easgd(w, prev, 1.0).params == uniform_mean(w));
    CHECK(center_easgd(w, prev, 0.0).params == prev);
    auto half = center_easgd(w, prev, 0.5).params;
    CHECK(half.layer(0)(0) == doctest::Approx(1.0));
    CHECK(half.layer(0)(1) == doctest::Approx(1.0));
}

TEST_CASE("lsgd leader") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK(lsgd_leader(std::vector<double>{0.5, 0.2, 0.9}) == 1);
    CHECK(lsgd_leader(std::vector<double>{0.4, 0.4, 0.4}) == 0);
    CHECK(lsgd_leader(std::vector<double>{nan, 0.7, 0.3}) == 2);
    CHECK(lsgd_leader(std::vector<double>{0.1, nan}) == 0);
    CHECK_THROWS_AS(lsgd_leader(std::vector<double>{nan, nan}), NumericError);

    std::vector<LayeredParams> w{column({1}), column({2})};
    auto c = center_lsgd(w, std::vector<double>{3.0, 1.0});
    CHECK(c.params == w[1]);
    REQUIRE(c.leader.has_value());
    CHECK(*c.leader == 1);
    w[1].layer(0)(0) = 99;
    CHECK(c.params.layer(0)(0) == 2.0);
}

TEST_CASE("pull_update") {
    auto x = column({1, 0});
    auto c = column({0, 0});
    CHECK(pull_update(x, c, 0.0) == x);
    CHECK(pull_update(x, c, 1.0) == c);
    auto y = pull_update(x, c, 0.3);
    CHECK(y.layer(0)(0) == doctest::Approx(0.7));
    CHECK_THROWS_AS(pull_update(x, c, 1.5), ConfigError);

    std::vector<LayeredParams> all{column({1, 2}), column({-3, 0})};
    pull_update(std::span<LayeredParams>(all), c, 1.0);
    CHECK(all[0] == c);
    CHECK(all[1] == c);
}

TEST_CASE("pull_update stays inside the segment") {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 50; ++i) {
        auto x = grawa::test::random_like({{5, 1}}, rng);
        auto c = grawa::test::random_like({{5, 1}}, rng);
        auto y = pull_update(x, c, 0.37);
        for (Eigen::Index j = 0; j < 5; ++j) {
            const double lo = std::min(x.layer(0)(j), c.layer(0)(j));
            const double hi = std::max(x.layer(0)(j), c.layer(0)(j));
            CHECK(y.layer(0)(j) >= lo - 1e-15);
            CHECK(y.layer(0)(j) <= hi + 1e-15);
        }
    }
}

TEST_CASE("dp_allreduce") {
    std::vector<LayeredGradient> one{column_grad({1, 2})};
    CHECK(dp_allreduce(one) == one[0]);
    std::vector<LayeredGradient> two{column_grad({1, 0}), column_grad({0, 1})};
    auto g = dp_allreduce(two);
    CHECK(g.layer(0)(0) == 0.5);
    CHECK(g.layer(0)(1) == 0.5);
    std::vector<LayeredGradient> bad{column_grad({1, 0}), column_grad({1})};
    CHECK_THROWS_AS(dp_allreduce(bad), SignatureError);
}

TEST_CASE("policy names and config validation") {
    for (auto p : all_policies()) CHECK(policy_from_string(to_string(p)) == p);
    PolicyConfig c;
    c.lambda = 1.5;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("lambda"), ConfigError);
    c = PolicyConfig{};
    c.mu = 8;
    c.tau = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
