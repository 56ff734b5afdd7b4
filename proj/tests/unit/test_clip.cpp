#include "itstyler/clip.hpp"
#include "itstyler/error.hpp"
#include "itstyler/tokenizer.hpp"

#include "support/test_support.hpp"

#include <doctest.h>

#include <fstream>
#include <thread>

using namespace itstyler;
using namespace itstyler::backbones;
using namespace itstyler::testing;

TEST_CASE("tokenizer ids match the open_clip reference") {
    std::ifstream in(fixture_dir() / "tokenizer_reference.json");
    const auto ref = nlohmann::json::parse(in);
    const ClipTokenizer tok(synthetic::default_merges());
    CHECK(tok.vocab_size() == ref["vocab_size"].get<int64_t>());
    for (const auto& c : ref["cases"]) {
        const auto prompt = c["prompt"].get<std::string>();
        CAPTURE(prompt);
        CHECK(tok.encode(prompt) == c["ids"].get<std::vector<int64_t>>());
    }
}

TEST_CASE("prompt framing and limits") {
    const ClipTokenizer tok(synthetic::default_merges());
    const auto ids = tok.encode_prompt("fire");
    CHECK(ids.front() == tok.sot_id());
    CHECK(ids.back() == tok.eot_id());
    CHECK(ids.size() == tok.encode("fire").size() + 2);
    CHECK(thrown_code([&] { tok.encode_prompt(""); }) == Errc::EmptyPrompt);
    CHECK(thrown_code([&] { tok.encode_prompt(" \t\n "); }) == Errc::EmptyPrompt);
    std::string long_prompt;
    for (int i = 0; i < 80; ++i) long_prompt += "x ";
    CHECK(thrown_code([&] { tok.encode_prompt(long_prompt); }) == Errc::PromptTooLong);
    CHECK(ClipTokenizer::clean("  Starry   NIGHT ") == "starry night");
    CHECK(ClipTokenizer::pre_tokenize("it's a dog") == std::vector<std::string>{"it", "'s", "a", "dog"});
    CHECK(bytes_to_unicode().size() == 256);
}

TEST_CASE("text and image towers agree with the open_clip reference") {
    const auto& clip = synthetic_backbones().loaded->clip;
    const auto ref = TensorArchive::read(fixture_dir() / "clip_reference.nta");
    const auto prompts = ref.meta()["prompts"].get<std::vector<std::string>>();
    const auto expected_text = ref.get("text_embedding");
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        CAPTURE(prompts[i]);
        const auto e = clip.embed_text(prompts[i]);
        CHECK((e - expected_text[static_cast<int64_t>(i)]).abs().max().item<double>() < 1e-5);
    }
    const auto pixels = ref.get("seed_pixels").repeat_interleave(8, -1).repeat_interleave(8, -2);
    const auto image = torch::nn::functional::normalize(
        clip.encode_pixels(pixels), torch::nn::functional::NormalizeFuncOptions().dim(1));
    CHECK((image - ref.get("image_embedding")).abs().max().item<double>() < 1e-5);
}

TEST_CASE("embeddings are unit vectors and the call counters audit usage") {
    const auto& clip = synthetic_backbones().loaded->clip;
    clip.reset_counters();
    const auto t = clip.embed_text("ice water");
    CHECK(t.sizes() == torch::IntArrayRef{kClipEmbedDim});
    CHECK(t.norm().item<double>() == doctest::Approx(1.0).epsilon(1e-6));
    const auto i = clip.embed_image(synthetic::style_image(3, 100, 150));
    CHECK(i.norm().item<double>() == doctest::Approx(1.0).epsilon(1e-6));
    const auto b = clip.embed_images(torch::rand({3, 3, 64, 64}));
    CHECK(b.sizes() == torch::IntArrayRef{3, kClipEmbedDim});
    CHECK(clip.text_calls() == 1);
    CHECK(clip.image_calls() == 2);
    clip.reset_counters();
    CHECK(clip.image_calls() == 0);
}

TEST_CASE("single and batched image paths agree") {
    const auto& clip = synthetic_backbones().loaded->clip;
    const auto img = synthetic::style_image(9, 96, 128);
    const auto one = clip.embed_image(img);
    const auto batch = clip.embed_images(img.batch());
    CHECK(torch::allclose(one, batch[0], 1e-5, 1e-6));
}

TEST_CASE("embedding is deterministic and thread-safe") {
    const auto& clip = synthetic_backbones().loaded->clip;
    const auto ref = clip.embed_text("oil painting");
    std::vector<torch::Tensor> out(4);
    std::vector<std::thread> threads;
    for (int k = 0; k < 4; ++k) threads.emplace_back([&, k] { out[k] = clip.embed_text("oil painting"); });
    for (auto& th : threads) th.join();
    for (const auto& o : out) CHECK(torch::equal(o, ref));
}
