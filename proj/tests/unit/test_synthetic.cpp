#include "itstyler/synthetic.hpp"
#include "itstyler/tokenizer.hpp"

#include "support/test_support.hpp"

#include <doctest.h>

using namespace itstyler;

TEST_CASE("splitmix64 matches the published sequence") {
    // State 0 advanced once; first outputs of the reference generator.
    CHECK(synthetic::splitmix64(0) == 0xE220A8397B1DCDAFULL);
    CHECK(synthetic::splitmix64(0x9E3779B97F4A7C15ULL) == 0x6E789E6AA1B965F4ULL);
}

TEST_CASE("hashed tensors are deterministic, bounded and name-keyed") {
    const auto a = synthetic::hashed_uniform("layer.weight", {64, 32}, 0.5, 0);
    const auto b = synthetic::hashed_uniform("layer.weight", {64, 32}, 0.5, 0);
    const auto c = synthetic::hashed_uniform("layer.bias", {64, 32}, 0.5, 0);
    const auto d = synthetic::hashed_uniform("layer.weight", {64, 32}, 0.5, 1);
    CHECK(torch::equal(a, b));
    CHECK_FALSE(torch::equal(a, c));
    CHECK_FALSE(torch::equal(a, d));
    CHECK(a.abs().max().item<float>() <= 0.5f);
    CHECK(std::abs(a.mean().item<float>()) < 0.05f);
    // Element i only depends on i, so a prefix of a larger request agrees.
    const auto longer = synthetic::hashed_uniform("layer.weight", {4096}, 0.5, 0);
    CHECK(torch::equal(longer.slice(0, 0, 2048), a.flatten()));
}

TEST_CASE("synthetic archives agree with the weights the Python fixtures were built from") {
    const auto vgg = synthetic::vgg19_archive(0);
    const auto ref = TensorArchive::read(itstyler::testing::fixture_dir() / "vgg19_reference.nta");
    for (const char* name : {"conv1_1.weight", "conv4_1.weight", "conv4_1.bias"}) {
        CHECK(torch::equal(vgg.get(name).flatten().slice(0, 0, 8), ref.get(std::string("probe.") + name)));
    }
    const auto lp = synthetic::lpips_vgg16_archive(0);
    CHECK(lp.get("lin2.weight").min().item<float>() >= 0.0f);
}

TEST_CASE("procedural datasets are reproducible") {
    const auto a = synthetic::style_image(5, 64, 80);
    const auto b = synthetic::style_image(5, 64, 80);
    CHECK(a.bitwise_equal(b));
    CHECK(a.height() == 64);
    CHECK(a.tensor().min().item<float>() >= 0.0f);
    CHECK(a.tensor().max().item<float>() <= 1.0f);
    CHECK_FALSE(synthetic::content_image(1, 32, 32).bitwise_equal(synthetic::content_image(2, 32, 32)));

    itstyler::testing::TempDir dir("synth-data");
    synthetic::write_dataset(dir / "s", true, 3, 40, 48, 0);
    CHECK(std::filesystem::exists(dir / "s" / "0002.png"));
}

TEST_CASE("learned merges are usable by the tokenizer") {
    const auto merges = synthetic::learn_merges({"low", "low", "lower", "lowest"}, 10);
    REQUIRE_FALSE(merges.empty());
    CHECK(merges.front() == "l o");
    backbones::ClipTokenizer tok(merges);
    CHECK(tok.vocab_size() == 512 + merges.size() + 2);
}
