#include "itstyler/error.hpp"
#include "itstyler/evaluation.hpp"

#include "support/test_support.hpp"

#include <doctest.h>

using namespace itstyler;
using namespace itstyler::evaluation;
using namespace itstyler::testing;

namespace {

const Lpips& shared_lpips() {
    static const Lpips lp = load_lpips(synthetic_backbones().lpips);
    return lp;
}

} // namespace

TEST_CASE("distances agree with the lpips reference package") {
    const auto ref = TensorArchive::read(fixture_dir() / "lpips_reference.nta");
    const auto expected = ref.meta()["distance_f64"].get<std::vector<double>>();
    const auto got = shared_lpips().distance_batch(ref.get("a"), ref.get("b"));
    REQUIRE(got.size(0) == static_cast<int64_t>(expected.size()));
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CAPTURE(i);
        CHECK(std::abs(got[static_cast<int64_t>(i)].item<double>() - expected[i]) <= 1e-4);
    }
    const auto single = shared_lpips().distance(Image(ref.get("a")[1]), Image(ref.get("b")[1]));
    CHECK(std::abs(single - expected[1]) <= 1e-4);
}

TEST_CASE("metric axioms on random pairs") {
    const auto& lp = shared_lpips();
    for (int i = 0; i < 5; ++i) {
        const auto a = Image(torch::rand({3, 32, 32}));
        const auto b = Image(torch::rand({3, 32, 32}));
        const double ab = lp.distance(a, b);
        const double ba = lp.distance(b, a);
        CHECK(ab >= 0.0);
        CHECK(std::abs(ab - ba) <= 1e-6 * std::max(1.0, ab));
        CHECK(lp.distance(a, a) == 0.0);
    }
    const auto img = Image(torch::rand({3, 32, 32}));
    CHECK(lp.distance_batch(img.batch(), img.batch().clone())[0].item<double>() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("input validation and calibration requirements") {
    CHECK(thrown_code([] { shared_lpips().distance(Image::zeros(32, 32), Image::zeros(32, 40)); }) ==
          Errc::DimensionMismatch);
    const auto full = synthetic::lpips_vgg16_archive(0);
    TensorArchive partial;
    for (const auto& name : full.names())
        if (name != "lin3.weight") partial.put(name, full.get(name));
    CHECK(thrown_code([&] { Lpips{partial}; }) == Errc::MissingCalibration);
    CHECK(shared_lpips().provenance().contains("backbone"));
}

TEST_CASE("consistency over frame sequences") {
    const auto& lp = shared_lpips();
    const auto frame = Image(torch::rand({3, 32, 32}));
    const auto same = consistency_of_frames({frame, frame, frame}, lp, "identity");
    CHECK(same.mean == 0.0);
    CHECK(same.distances.size() == 2);
    CHECK(same.frame_count == 3);
    const auto diff = consistency_of_frames({frame, Image(torch::rand({3, 32, 32}))}, lp, "x");
    CHECK(diff.mean > 0.0);
    CHECK(to_json(diff)["method"] == "x");
    CHECK(thrown_code([&] { consistency_of_frames({frame}, lp, "x"); }) == Errc::TooFewFrames);

    TempDir dir("consistency");
    synthetic::write_frames(dir / "f", 4, 32, 32, 0);
    std::size_t seen = 0;
    const auto r = video_consistency(dir / "f",
                                     [&](const std::vector<Image>& frames) {
                                         seen = frames.size();
                                         return frames;
                                     },
                                     lp, "passthrough");
    CHECK(seen == 4);
    CHECK(r.distances.size() == 3);
}

TEST_CASE("speed benchmark modes") {
    auto engine = std::make_shared<service::Engine>(synthetic_backbones().loaded, nets::NetworkSet::create(5), "e");
    const std::vector<Image> contents{synthetic::content_image(1, 32, 32), synthetic::content_image(2, 32, 32)};
    const auto src = service::StyleSource::from_text("fire");
    auto& clip = engine->backbones().clip;
    clip.reset_counters();
    const auto fast = speed_benchmark(*engine, contents, src, 3, SpeedMode::Fast, 1);
    CHECK(fast.seconds.size() == 3);
    CHECK(fast.size == 32);
    CHECK(clip.text_calls() == 1);
    clip.reset_counters();
    const auto standard = speed_benchmark(*engine, contents, src, 3, SpeedMode::Standard, 1);
    CHECK(clip.text_calls() == 4 + 0); // warm-up plus timed calls, prefetch served from cache
    CHECK(standard.mean_seconds > 0.0);
    CHECK(to_json(standard)["mode"] == "standard");
    CHECK(speed_mode_from_string("fast") == SpeedMode::Fast);
    CHECK(thrown_code([] { speed_mode_from_string("turbo"); }) == Errc::InvalidConfig);
    CHECK(thrown_code([&] { speed_benchmark(*engine, contents, src, 0, SpeedMode::Fast); }) == Errc::InvalidConfig);
    CHECK(thrown_code([&] { speed_benchmark(*engine, {}, src, 1, SpeedMode::Fast); }) == Errc::EmptyDataset);
}
