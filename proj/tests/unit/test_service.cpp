#include "itstyler/error.hpp"
#include "itstyler/service.hpp"

#include "support/test_support.hpp"

#include <doctest.h>

#include <fstream>
#include <thread>

using namespace itstyler;
using namespace itstyler::service;
using namespace itstyler::testing;

namespace {

std::shared_ptr<Engine> make_engine(std::size_t cache = 1024) {
    return std::make_shared<Engine>(synthetic_backbones().loaded, nets::NetworkSet::create(3), "00000000000000aa",
                                    cache);
}

style::LabeledStyleCode random_code(const std::string& label) {
    return {style::StyleCode(torch::rand({512}) + 0.05, torch::randn({512})), "text", label};
}

} // namespace

TEST_CASE("LRU cache evicts the least recently used entry") {
    StyleCodeCache cache(2);
    cache.insert({"a", random_code("a")});
    cache.insert({"b", random_code("b")});
    CHECK(cache.find("a").has_value()); // b is now the oldest
    cache.insert({"c", random_code("c")});
    CHECK(cache.size() == 2);
    CHECK_FALSE(cache.find("b").has_value());
    CHECK(cache.find("c").has_value());
    CHECK(cache.hits() == 2);
    CHECK(cache.misses() == 1);
    const auto entries = cache.entries();
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].code_id == "a");
    CHECK(entries[1].code_id == "c");
}

TEST_CASE("re-inserting an id keeps the first code") {
    StyleCodeCache cache(4);
    const auto first = random_code("first");
    cache.insert({"x", first});
    cache.insert({"x", random_code("second")});
    CHECK(cache.size() == 1);
    CHECK(cache.find("x")->code.code.bitwise_equal(first.code));
}

TEST_CASE("text resolution is cached and ids depend on checkpoint and source") {
    auto engine = make_engine();
    const auto src = StyleSource::from_text("fire");
    const auto first = engine->resolve(src);
    CHECK_FALSE(first.cache_hit);
    CHECK(first.code_id.size() == 16);
    CHECK(first.code.source == "text");
    CHECK(first.code.label == "fire");
    const auto again = engine->resolve(src);
    CHECK(again.cache_hit);
    CHECK(again.code.code.bitwise_equal(first.code.code));
    CHECK(engine->code_id_for(StyleSource::from_text("flame")) != first.code_id);

    auto other = std::make_shared<Engine>(synthetic_backbones().loaded, nets::NetworkSet::create(3),
                                          "00000000000000bb");
    CHECK(other->code_id_for(src) != first.code_id);
    CHECK(engine->compute_style(src).code.bitwise_equal(first.code.code));
}

TEST_CASE("stored codes resolve by id and unknown ids fail") {
    auto engine = make_engine();
    const auto code = random_code("mine");
    const auto id = engine->register_code(code);
    CHECK(id.size() == 16);
    CHECK(engine->resolve(StyleSource::from_code(id)).code.code.bitwise_equal(code.code));
    CHECK(engine->register_code(code, "custom") == "custom");
    CHECK(thrown_code([&] { engine->resolve(StyleSource::from_code("ffffffffffffffff")); }) == Errc::UnknownCodeId);
    CHECK(thrown_code([&] { engine->resolve(StyleSource::from_text("")); }) == Errc::EmptyPrompt);
    style::LabeledStyleCode small{style::StyleCode(torch::ones({4}), torch::zeros({4})), "text", ""};
    CHECK(thrown_code([&] { engine->register_code(small); }) == Errc::DimensionMismatch);
}

TEST_CASE("stylized output keeps arbitrary content sizes") {
    auto engine = make_engine();
    const auto src = StyleSource::from_text("oil painting");
    for (auto [h, w] : {std::pair{16, 16}, std::pair{37, 53}, std::pair{64, 24}}) {
        const auto out = engine->stylize(synthetic::content_image(1, h, w), src);
        CHECK(out.height() == h);
        CHECK(out.width() == w);
        CHECK(torch::isfinite(out.tensor()).all().item<bool>());
    }
    CHECK(thrown_code([&] { engine->stylize(Image::zeros(15, 40), src); }) == Errc::ImageTooSmall);
    CHECK(engine->reconstruct(synthetic::content_image(2, 24, 40)).width() == 40);
}

TEST_CASE("image sources embed the style image") {
    auto engine = make_engine();
    const auto style_img = synthetic::style_image(4, 80, 100);
    const auto r = engine->resolve(StyleSource::from_image(style_img));
    CHECK(r.code.source == "image");
    CHECK(engine->resolve(StyleSource::from_image(style_img)).cache_hit);
    CHECK(engine->resolve(StyleSource::from_image(synthetic::style_image(5, 80, 100))).code_id != r.code_id);
}

TEST_CASE("interpolation degenerates to single-style output and validates weights") {
    auto engine = make_engine();
    const auto content = synthetic::content_image(3, 32, 40);
    const std::vector<StyleSource> sources{StyleSource::from_text("fire"), StyleSource::from_text("ice water")};
    const auto single = engine->stylize(content, sources[1]);
    CHECK(engine->stylize_interpolated(content, sources, {0.0, 1.0}).bitwise_equal(single));
    CHECK(thrown_code([&] { engine->stylize_interpolated(content, sources, {0.5, 0.6}); }) ==
          Errc::WeightsNotNormalized);
    CHECK(thrown_code([&] { engine->stylize_interpolated(content, sources, {1.0}); }) == Errc::DimensionMismatch);
    const std::vector<StyleSource> nine(9, StyleSource::from_text("fire"));
    CHECK(thrown_code([&] { engine->stylize_interpolated(content, nine, std::vector<double>(9, 1.0 / 9)); }) ==
          Errc::TooManyStyles);
}

TEST_CASE("sequences resolve the style once and reject mixed sizes") {
    auto engine = make_engine();
    const auto& clip = engine->backbones().clip;
    std::vector<Image> frames;
    for (int i = 0; i < 5; ++i) frames.push_back(synthetic::content_image(static_cast<uint64_t>(i), 24, 32));
    clip.reset_counters();
    const auto out = engine->stylize_sequence(frames, StyleSource::from_text("starry night"));
    CHECK(out.size() == 5);
    CHECK(clip.text_calls() == 1);
    frames.push_back(Image::zeros(24, 40));
    try {
        engine->stylize_sequence(frames, StyleSource::from_text("starry night"));
        FAIL("expected InconsistentFrameSize");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InconsistentFrameSize);
        CHECK(e.detail() == "frame 5");
    }
    CHECK(thrown_code([&] { engine->stylize_sequence({}, StyleSource::from_text("x")); }) == Errc::TooFewFrames);
}

TEST_CASE("frames are ordered by numeric index") {
    TempDir dir("frames");
    for (const char* name : {"f10.png", "f2.png", "f1.png", "cover.png"}) {
        save_image(Image::zeros(16, 16), dir / name);
    }
    std::ofstream(dir / "readme.txt") << "x";
    const auto frames = list_frames(dir.path());
    REQUIRE(frames.size() == 4);
    CHECK(frames[0].filename() == "cover.png");
    CHECK(frames[1].filename() == "f1.png");
    CHECK(frames[2].filename() == "f2.png");
    CHECK(frames[3].filename() == "f10.png");
}

TEST_CASE("frame directories are stylized under their own names") {
    TempDir dir("frame-dir");
    synthetic::write_frames(dir / "in", 3, 24, 24, 0);
    auto engine = make_engine();
    CHECK(stylize_frame_directory(*engine, dir / "in", dir / "out", StyleSource::from_text("fire")) == 3);
    CHECK(std::filesystem::exists(dir / "out" / "00002.png"));
    std::filesystem::create_directories(dir / "none");
    CHECK(thrown_code([&] { stylize_frame_directory(*engine, dir / "none", dir / "o2", StyleSource::from_text("x")); }) ==
          Errc::TooFewFrames);
}

TEST_CASE("code store export and import round trip") {
    TempDir dir("store");
    auto engine = make_engine();
    const auto r = engine->resolve(StyleSource::from_text("watercolor"));
    export_code(dir.path(), r.code_id, r.code);
    std::ofstream(dir / "broken.json") << "{";
    auto fresh = make_engine();
    CHECK(import_code_store(*fresh, dir.path()) == 1);
    const auto back = fresh->resolve(StyleSource::from_code(r.code_id));
    CHECK(back.cache_hit);
    CHECK(back.code.code.bitwise_equal(r.code.code));
    CHECK(back.code.label == "watercolor");
    CHECK(import_code_store(*fresh, dir / "absent") == 0);
}

TEST_CASE("engine loads checkpoints and derives its id from the archive") {
    TempDir dir("engine-load");
    auto nets = nets::NetworkSet::create(9);
    TensorArchive archive;
    nets.save_to(archive);
    archive.meta()["backbones"] = {{"vgg", synthetic_backbones().vgg.string()},
                                   {"clip", synthetic_backbones().clip.string()}};
    archive.write(dir / "ckpt.nta");
    const auto engine = Engine::load(dir / "ckpt.nta");
    CHECK(engine->checkpoint_id().size() == 16);
    const auto shared = Engine::load(dir / "ckpt.nta", {}, {}, synthetic_backbones().loaded);
    CHECK(shared->checkpoint_id() == engine->checkpoint_id());
    const auto content = synthetic::content_image(1, 24, 24);
    const style::StyleCode code(torch::ones({512}), torch::zeros({512}));
    CHECK(engine->stylize_with_code(content, code).bitwise_equal(shared->stylize_with_code(content, code)));

    TensorArchive bare;
    nets.save_to(bare);
    bare.write(dir / "bare.nta");
    CHECK(thrown_code([&] { Engine::load(dir / "bare.nta"); }) == Errc::InvalidConfig);
}

TEST_CASE("concurrent resolution is consistent") {
    auto engine = make_engine(8);
    std::vector<std::string> ids(8);
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] { ids[t] = engine->resolve(StyleSource::from_text(t % 2 ? "fire" : "ice")).code_id; });
    }
    for (auto& th : threads) th.join();
    for (int t = 2; t < 8; ++t) CHECK(ids[t] == ids[t % 2]);
    CHECK(engine->cache().size() == 2);
}
