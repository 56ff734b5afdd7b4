#include "itstyler/error.hpp"
#include "itstyler/image.hpp"

#include "support/test_support.hpp"

#include <doctest.h>

#include <opencv2/imgcodecs.hpp>

#include <fstream>

using namespace itstyler;
using itstyler::testing::TempDir;

TEST_CASE("png round trip quantizes to 8 bits") {
    TempDir dir("image");
    auto t = torch::rand({3, 20, 30});
    save_image(Image(t), dir / "x.png");
    const auto back = load_image(dir / "x.png");
    CHECK(back.height() == 20);
    CHECK(back.width() == 30);
    CHECK((back.tensor() - t).abs().max().item<float>() <= 0.5f / 255.0f + 1e-6f);
    // Values are snapped to k/255.
    const auto scaled = back.tensor() * 255.0f;
    CHECK((scaled - scaled.round()).abs().max().item<float>() < 1e-4f);
}

TEST_CASE("saving clamps out-of-range decoder output") {
    TempDir dir("image-clamp");
    auto t = torch::full({3, 8, 8}, 1.7f);
    t[0].fill_(-0.3f);
    save_image(Image(t), dir / "c.png");
    const auto back = load_image(dir / "c.png");
    CHECK(back.tensor()[0].max().item<float>() == 0.0f);
    CHECK(back.tensor()[1].min().item<float>() == 1.0f);
}

TEST_CASE("channel order is RGB on disk and in memory") {
    TempDir dir("image-rgb");
    cv::Mat bgr(4, 4, CV_8UC3, cv::Scalar(10, 20, 250)); // B, G, R
    cv::imwrite((dir / "r.png").string(), bgr);
    const auto img = load_image(dir / "r.png");
    CHECK(img.tensor()[0][0][0].item<float>() == doctest::Approx(250.0 / 255.0));
    CHECK(img.tensor()[2][0][0].item<float>() == doctest::Approx(10.0 / 255.0));
}

TEST_CASE("grayscale and alpha inputs become three channels") {
    TempDir dir("image-gray");
    cv::Mat gray(5, 7, CV_8UC1, cv::Scalar(128));
    cv::imwrite((dir / "g.png").string(), gray);
    cv::Mat rgba(5, 7, CV_8UC4, cv::Scalar(0, 0, 255, 128));
    cv::imwrite((dir / "a.png").string(), rgba);
    CHECK(load_image(dir / "g.png").tensor().size(0) == 3);
    CHECK(load_image(dir / "a.png").tensor().size(0) == 3);
}

TEST_CASE("undecodable files raise UndecodableImage") {
    TempDir dir("image-bad");
    std::ofstream(dir / "junk.png") << "not a png";
    try {
        load_image(dir / "junk.png");
        FAIL("expected UndecodableImage");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UndecodableImage);
    }
    CHECK_THROWS_AS(decode_image_bytes("garbage"), Error);
}

TEST_CASE("encode_png and decode_image_bytes are inverse up to quantization") {
    auto img = Image(torch::rand({3, 9, 11}));
    const auto png = encode_png(img);
    const auto back = decode_image_bytes(std::string(png.begin(), png.end()));
    CHECK((back.tensor() - img.tensor()).abs().max().item<float>() <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("resize_short_side keeps aspect ratio") {
    const auto img = Image::zeros(300, 900);
    const auto r = resize_short_side(img, 512);
    CHECK(r.height() == 512);
    CHECK(r.width() == 1536);
    const auto tall = resize_short_side(Image::zeros(901, 300), 128);
    CHECK(tall.width() == 128);
    CHECK(tall.height() == 384); // round(901 * 128 / 300) = round(384.43)
}

TEST_CASE("area shrink of a constant image stays constant") {
    const auto img = Image(torch::full({3, 40, 40}, 0.25f));
    const auto r = resize(img, 10, 10);
    CHECK((r.tensor() - 0.25f).abs().max().item<float>() < 1e-6f);
}

TEST_CASE("crop and center_crop select the expected window") {
    const auto t = torch::arange(3 * 6 * 8, torch::kFloat32).view({3, 6, 8});
    const auto c = crop(Image(t), 1, 2, 3, 4);
    CHECK(torch::equal(c.tensor(), t.slice(1, 1, 4).slice(2, 2, 6)));
    const auto cc = center_crop(Image(t), 2, 2);
    CHECK(torch::equal(cc.tensor(), t.slice(1, 2, 4).slice(2, 3, 5)));
    CHECK_THROWS(crop(Image(t), 5, 0, 3, 3));
}

TEST_CASE("bitwise_equal distinguishes tiny differences") {
    auto t = torch::rand({3, 4, 4});
    auto u = t.clone();
    CHECK(Image(t).bitwise_equal(Image(u)));
    u[0][0][0] += 1e-7f;
    CHECK_FALSE(Image(t).bitwise_equal(Image(u)));
    CHECK(Image(torch::rand({1, 3, 4, 4})).height() == 4);
}
