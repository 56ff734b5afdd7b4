#include "itstyler/error.hpp"
#include "itstyler/vgg.hpp"

#include "support/test_support.hpp"

#include <doctest.h>

using namespace itstyler;
using namespace itstyler::backbones;
using namespace itstyler::testing;

TEST_CASE("VGG-19 taps agree with the torchvision reference on shared weights") {
    const auto& bb = synthetic_backbones();
    const auto ref = TensorArchive::read(fixture_dir() / "vgg19_reference.nta");
    const auto feats = bb.loaded->vgg.all_features(ref.get("input"));
    const char* names[] = {"relu1_1", "relu2_1", "relu3_1", "relu4_1"};
    for (int l = 0; l < 4; ++l) {
        const auto expected = ref.get(names[l]);
        CAPTURE(names[l]);
        REQUIRE(feats[l].sizes() == expected.sizes());
        const double scale = expected.abs().max().item<double>();
        CHECK((feats[l] - expected).abs().max().item<double>() <= 1e-5 * std::max(1.0, scale));
    }
}

TEST_CASE("tap channels and strides") {
    const auto& vgg = synthetic_backbones().loaded->vgg;
    const auto feats = vgg.all_features(torch::rand({1, 3, 32, 40}));
    for (int l = 0; l < 4; ++l) {
        CHECK(feats[l].size(1) == kStyleTapChannels[l]);
        CHECK(feats[l].size(2) == 32 >> l);
        CHECK(feats[l].size(3) == 40 >> l);
    }
    CHECK(torch::equal(vgg.relu4_1(torch::ones({1, 3, 32, 40})), vgg.all_features(torch::ones({1, 3, 32, 40}))[3]));
    const std::array<VggLayer, 1> only{VggLayer::Relu2_1};
    const auto partial = vgg.features(torch::rand({2, 3, 16, 16}), only);
    CHECK(partial.size() == 1);
    CHECK(partial.at(VggLayer::Relu2_1).size(1) == 128);
    CHECK(layer_name(VggLayer::Relu3_1) == "relu3_1");
}

TEST_CASE("arbitrary sizes are padded and cropped back") {
    const auto& vgg = synthetic_backbones().loaded->vgg;
    const auto img = Image(torch::rand({3, 21, 35}));
    const auto feats = vgg_features(vgg, img, kAllStyleLayers);
    CHECK(feats.at(VggLayer::Relu1_1).size(2) == 21);
    CHECK(feats.at(VggLayer::Relu2_1).size(3) == 18);
    CHECK(feats.at(VggLayer::Relu4_1).size(2) == 3);
    CHECK(feats.at(VggLayer::Relu4_1).size(3) == 5);
    CHECK(thrown_code([&] { vgg_features(vgg, Image(torch::rand({3, 15, 64})), kAllStyleLayers); }) ==
          Errc::ImageTooSmall);
}

TEST_CASE("pad_to_multiple reflects borders") {
    const auto x = torch::arange(1 * 3 * 5 * 6, torch::kFloat32).view({1, 3, 5, 6});
    const auto p = pad_to_multiple(x, 4);
    CHECK(p.size(2) == 8);
    CHECK(p.size(3) == 8);
    CHECK(torch::equal(p.slice(2, 0, 5).slice(3, 0, 6), x));
    CHECK(torch::equal(p.select(2, 5).slice(2, 0, 6), x.select(2, 3)));
    CHECK(torch::equal(p.select(3, 7).slice(2, 0, 5), x.select(3, 3)));
    CHECK(torch::equal(pad_to_multiple(torch::zeros({1, 3, 8, 16}), 8), torch::zeros({1, 3, 8, 16})));
}

TEST_CASE("gradients reach the input image") {
    const auto& vgg = synthetic_backbones().loaded->vgg;
    auto x = torch::rand({1, 3, 16, 16}).requires_grad_(true);
    vgg.relu4_1(x).sum().backward();
    REQUIRE(x.grad().defined());
    CHECK(x.grad().abs().sum().item<float>() > 0.0f);
}

TEST_CASE("loading rejects incomplete or misshapen archives") {
    TempDir dir("vgg-bad");
    const auto archive = synthetic::vgg19_archive(0);
    auto rebuild = [&](const std::string& skip, const std::string& replace, const torch::Tensor& with) {
        TensorArchive out;
        out.meta() = archive.meta();
        for (const auto& name : archive.names()) {
            if (name == skip) continue;
            out.put(name, name == replace ? with : archive.get(name));
        }
        return out;
    };
    rebuild("conv3_2.weight", "", {}).write(dir / "missing.nta");
    CHECK(thrown_code([&] { load_vgg(dir / "missing.nta"); }) == Errc::MissingTensor);
    rebuild("", "conv2_1.weight", torch::zeros({128, 64, 1, 1})).write(dir / "shape.nta");
    CHECK(thrown_code([&] { load_vgg(dir / "shape.nta"); }) == Errc::ShapeMismatch);
    CHECK(thrown_code([&] { load_vgg(dir / "absent.nta"); }) == Errc::UnreadableArchive);
}
