#include "itstyler/error.hpp"
#include "itstyler/style_space.hpp"

#include "support/test_support.hpp"

#include <doctest.h>

using namespace itstyler;
using namespace itstyler::style;
using namespace itstyler::testing;

namespace {

double max_abs_diff(const torch::Tensor& t, const std::vector<double>& ref) {
    const auto d = Dense::of(t);
    double m = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) m = std::max(m, std::abs(d.v[i] - ref[i]));
    return m;
}

} // namespace

TEST_CASE("channel_stats matches the scalar oracle") {
    const auto x = torch::randn({3, 5, 7, 6}, torch::kFloat64) * 2.0 + 0.5;
    const auto stats = channel_stats(x);
    const auto ref = oracle_channel_stats(Dense::of(x));
    for (int64_t n = 0; n < 3; ++n)
        for (int64_t c = 0; c < 5; ++c) {
            CHECK(stats.mu()[n][c].item<double>() == doctest::Approx(ref.mu[n][c]).epsilon(1e-12));
            CHECK(stats.sigma()[n][c].item<double>() == doctest::Approx(ref.sigma[n][c]).epsilon(1e-12));
        }
}

TEST_CASE("constant feature maps have sigma sqrt(eps)") {
    const auto stats = channel_stats(torch::full({4, 3, 3}, 2.0, torch::kFloat64));
    CHECK(stats.sigma().sizes() == torch::IntArrayRef{4});
    CHECK(stats.sigma()[0].item<double>() == doctest::Approx(std::sqrt(kStatsEps)));
    CHECK(stats.mu()[2].item<double>() == 2.0);
}

TEST_CASE("empty feature maps are rejected") {
    CHECK(thrown_code([] { channel_stats(torch::zeros({1, 4, 0, 3})); }) == Errc::EmptyFeatureMap);
    CHECK(thrown_code([] { channel_stats(torch::zeros({4})); }) == Errc::EmptyFeatureMap);
}

TEST_CASE("adain matches the oracle and transfers the target moments") {
    const auto x = torch::randn({2, 8, 6, 5}, torch::kFloat64);
    const auto y = torch::randn({2, 8, 4, 9}, torch::kFloat64) * 3.0 - 1.0;
    const auto out = adain(x, y);
    const auto sy = oracle_channel_stats(Dense::of(y));
    CHECK(max_abs_diff(out, oracle_adain(Dense::of(x), sy.sigma, sy.mu)) < 1e-12);
    const auto so = channel_stats(out);
    CHECK(torch::allclose(so.mu(), channel_stats(y).mu(), 0.0, 1e-10));
}

TEST_CASE("t_adain broadcasts a single code across a batch") {
    const auto x = torch::randn({3, 4, 5, 5});
    const auto sigma = torch::tensor({0.5f, 1.0f, 2.0f, 3.0f});
    const auto mu = torch::tensor({-1.0f, 0.0f, 1.0f, 2.0f});
    const auto out = t_adain(x, StyleCode(sigma, mu));
    for (int64_t n = 0; n < 3; ++n) {
        CHECK(torch::allclose(out[n], t_adain(x[n], sigma, mu), 1e-6, 1e-6));
    }
    CHECK(thrown_code([&] { t_adain(x, torch::ones({5}), torch::zeros({5})); }) == Errc::ChannelMismatch);
    CHECK(thrown_code([&] { adain(x, torch::ones({1, 3, 2, 2})); }) == Errc::ChannelMismatch);
}

TEST_CASE("t_adain with the content's own statistics is the identity") {
    const auto x = torch::randn({1, 16, 8, 8}, torch::kFloat64);
    const auto s = channel_stats(x);
    CHECK(torch::allclose(t_adain(x, s), x, 0.0, 1e-12));
}

TEST_CASE("StyleCode validation") {
    CHECK(thrown_code([] { StyleCode(torch::ones({4}), torch::ones({5})); }) == Errc::DimensionMismatch);
    CHECK(thrown_code([] { StyleCode(-torch::ones({4}), torch::ones({4})); }) == Errc::InvalidConfig);
    auto nan = torch::ones({4});
    nan[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK(thrown_code([&] { StyleCode(nan, torch::ones({4})); }) == Errc::InvalidConfig);
    const StyleCode ok(torch::ones({4}), torch::zeros({4}));
    CHECK(ok.channels() == 4);
    CHECK(ok.concatenated().size(0) == 8);
}

TEST_CASE("json round trip of a labeled code is exact") {
    LabeledStyleCode code{StyleCode(torch::rand({512}) + 0.1, torch::randn({512})), "text", "fire"};
    const auto back = labeled_code_from_json(nlohmann::json::parse(to_json(code).dump()));
    CHECK(back.code.bitwise_equal(code.code));
    CHECK(back.label == "fire");
    CHECK(back.source == "text");
    auto j = to_json(code);
    j["mu"].erase(0);
    CHECK(thrown_code([&] { labeled_code_from_json(j); }) == Errc::DimensionMismatch);
}

TEST_CASE("weight validation") {
    CHECK_NOTHROW(validate_weights({0.25, 0.25, 0.5}));
    CHECK_NOTHROW(validate_weights({1.0 - 5e-7}));
    CHECK(thrown_code([] { validate_weights({0.5, 0.4}); }) == Errc::WeightsNotNormalized);
    CHECK(thrown_code([] { validate_weights({1.5, -0.5}); }) == Errc::WeightsNotNormalized);
    CHECK(thrown_code([] { validate_weights({}); }) == Errc::TooManyStyles);
    CHECK(thrown_code([] { validate_weights(std::vector<double>(9, 1.0 / 9.0)); }) == Errc::TooManyStyles);
    CHECK_NOTHROW(validate_weights(std::vector<double>(8, 0.125)));
    const StyleCode c(torch::ones({2}), torch::zeros({2}));
    CHECK(thrown_code([&] { InterpolationSpec({c, c}, {1.0}); }) == Errc::DimensionMismatch);
}

TEST_CASE("interpolation with a one-hot weight equals the single style bitwise") {
    const auto x = torch::randn({1, 512, 6, 6});
    std::vector<StyleCode> codes;
    for (int k = 0; k < 4; ++k) codes.emplace_back(torch::rand({512}) * 2 + 0.1, torch::randn({512}));
    for (int k = 0; k < 4; ++k) {
        std::vector<double> w(4, 0.0);
        w[k] = 1.0;
        CHECK(torch::equal(interpolate_features(x, InterpolationSpec(codes, w)), t_adain(x, codes[k])));
    }
}

TEST_CASE("interpolation is the weighted sum of per-style transfers") {
    const auto x = torch::randn({1, 8, 4, 4}, torch::kFloat64);
    std::vector<StyleCode> codes;
    for (int k = 0; k < 3; ++k)
        codes.emplace_back(torch::rand({8}, torch::kFloat64) + 0.1, torch::randn({8}, torch::kFloat64));
    const std::vector<double> w{0.2, 0.3, 0.5};
    const auto out = interpolate_features(x, InterpolationSpec(codes, w));
    const auto dx = Dense::of(x);
    std::vector<double> ref(dx.v.size(), 0.0);
    for (int k = 0; k < 3; ++k) {
        const auto s = Dense::of(codes[k].sigma().unsqueeze(0));
        const auto m = Dense::of(codes[k].mu().unsqueeze(0));
        const auto term = oracle_adain(dx, {s.v}, {m.v});
        for (std::size_t i = 0; i < ref.size(); ++i) ref[i] += w[k] * term[i];
    }
    CHECK(max_abs_diff(out, ref) < 1e-12);
}
