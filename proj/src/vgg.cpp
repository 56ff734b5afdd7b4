#include "itstyler/vgg.hpp"

#include "itstyler/error.hpp"

#include <algorithm>

namespace itstyler::backbones {

namespace F = torch::nn::functional;

std::vector<VggConvSpec> vgg19_relu4_1_specs() {
    return {
        {"conv1_1", 3, 64, false, "relu1_1"},    {"conv1_2", 64, 64, false, ""},
        {"conv2_1", 64, 128, true, "relu2_1"},   {"conv2_2", 128, 128, false, ""},
        {"conv3_1", 128, 256, true, "relu3_1"},  {"conv3_2", 256, 256, false, ""},
        {"conv3_3", 256, 256, false, ""},        {"conv3_4", 256, 256, false, ""},
        {"conv4_1", 256, 512, true, "relu4_1"},
    };
}

std::vector<VggConvSpec> vgg16_relu5_3_specs() {
    return {
        {"conv1_1", 3, 64, false, ""},          {"conv1_2", 64, 64, false, "relu1_2"},
        {"conv2_1", 64, 128, true, ""},         {"conv2_2", 128, 128, false, "relu2_2"},
        {"conv3_1", 128, 256, true, ""},        {"conv3_2", 256, 256, false, ""},
        {"conv3_3", 256, 256, false, "relu3_3"}, {"conv4_1", 256, 512, true, ""},
        {"conv4_2", 512, 512, false, ""},       {"conv4_3", 512, 512, false, "relu4_3"},
        {"conv5_1", 512, 512, true, ""},        {"conv5_2", 512, 512, false, ""},
        {"conv5_3", 512, 512, false, "relu5_3"},
    };
}

VggStack::VggStack(std::vector<VggConvSpec> specs, const TensorArchive& archive) : specs_(std::move(specs)) {
    for (const auto& spec : specs_) {
        weights_.push_back(archive.get(spec.name + ".weight", {spec.out_channels, spec.in_channels, 3, 3}));
        biases_.push_back(archive.get(spec.name + ".bias", {spec.out_channels}));
    }
    const auto& pre = archive.meta().value("preprocess", nlohmann::json::object());
    const auto mean = pre.value("mean", std::vector<float>{0.485f, 0.456f, 0.406f});
    const auto stdv = pre.value("std", std::vector<float>{0.229f, 0.224f, 0.225f});
    if (mean.size() != 3 || stdv.size() != 3) {
        throw Error(Errc::UnreadableArchive, "preprocess mean/std must have 3 entries");
    }
    mean_ = torch::tensor(mean).view({1, 3, 1, 1});
    std_ = torch::tensor(stdv).view({1, 3, 1, 1});
    padding_ = archive.meta().value("padding", "zeros") == "reflect" ? Padding::Reflect : Padding::Zeros;
}

std::vector<std::string> VggStack::tap_names() const {
    std::vector<std::string> out;
    for (const auto& s : specs_) {
        if (!s.tap.empty()) {
            out.push_back(s.tap);
        }
    }
    return out;
}

std::vector<torch::Tensor> VggStack::forward(const torch::Tensor& images, const std::vector<std::string>& taps) const {
    const auto dtype = images.scalar_type();
    auto x = (images - mean_.to(dtype)) / std_.to(dtype);
    std::vector<torch::Tensor> out(taps.size());
    std::size_t remaining = taps.size();
    for (std::size_t i = 0; i < specs_.size() && remaining > 0; ++i) {
        const auto& spec = specs_[i];
        if (spec.pool_before) {
            x = torch::max_pool2d(x, 2, 2);
        }
        const auto w = weights_[i].to(dtype);
        const auto b = biases_[i].to(dtype);
        if (padding_ == Padding::Reflect) {
            x = torch::conv2d(F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReflect)), w, b);
        } else {
            x = torch::conv2d(x, w, b, 1, 1);
        }
        x = torch::relu(x);
        if (!spec.tap.empty()) {
            for (std::size_t t = 0; t < taps.size(); ++t) {
                if (taps[t] == spec.tap) {
                    out[t] = x;
                    --remaining;
                }
            }
        }
    }
    for (std::size_t t = 0; t < taps.size(); ++t) {
        TORCH_CHECK(out[t].defined(), "unknown VGG tap ", taps[t]);
    }
    return out;
}

std::uint64_t VggStack::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        h = tensor_checksum(weights_[i], h);
        h = tensor_checksum(biases_[i], h);
    }
    return h;
}

std::string_view layer_name(VggLayer layer) {
    switch (layer) {
    case VggLayer::Relu1_1: return "relu1_1";
    case VggLayer::Relu2_1: return "relu2_1";
    case VggLayer::Relu3_1: return "relu3_1";
    case VggLayer::Relu4_1: return "relu4_1";
    }
    return "";
}

VggEncoder::VggEncoder(const TensorArchive& archive)
    : stack_(vgg19_relu4_1_specs(), archive), source_(archive.meta().value("source", "unknown")) {}

std::map<VggLayer, torch::Tensor> VggEncoder::features(const torch::Tensor& images,
                                                       std::span<const VggLayer> taps) const {
    std::vector<std::string> names;
    for (auto t : taps) {
        names.emplace_back(layer_name(t));
    }
    auto outs = stack_.forward(images, names);
    std::map<VggLayer, torch::Tensor> result;
    for (std::size_t i = 0; i < taps.size(); ++i) {
        result[taps[i]] = outs[i];
    }
    return result;
}

std::array<torch::Tensor, 4> VggEncoder::all_features(const torch::Tensor& images) const {
    auto outs = stack_.forward(images, {"relu1_1", "relu2_1", "relu3_1", "relu4_1"});
    return {outs[0], outs[1], outs[2], outs[3]};
}

torch::Tensor VggEncoder::relu4_1(const torch::Tensor& images) const { return stack_.forward(images, {"relu4_1"})[0]; }

VggEncoder load_vgg(const std::filesystem::path& weights_path) { return VggEncoder(TensorArchive::read(weights_path)); }

torch::Tensor pad_to_multiple(const torch::Tensor& images, int64_t multiple) {
    const auto h = images.size(-2);
    const auto w = images.size(-1);
    const auto pad_h = (multiple - h % multiple) % multiple;
    const auto pad_w = (multiple - w % multiple) % multiple;
    if (pad_h == 0 && pad_w == 0) {
        return images;
    }
    return F::pad(images, F::PadFuncOptions({0, pad_w, 0, pad_h}).mode(torch::kReflect));
}

std::map<VggLayer, torch::Tensor> vgg_features(const VggEncoder& encoder, const Image& image,
                                               std::span<const VggLayer> taps) {
    if (image.height() < 16 || image.width() < 16) {
        throw Error(Errc::ImageTooSmall, "VGG input must be at least 16x16, got " + std::to_string(image.height()) +
                                             "x" + std::to_string(image.width()));
    }
    auto feats = encoder.features(pad_to_multiple(image.batch(), 8), taps);
    for (auto& [layer, fmap] : feats) {
        const int64_t stride = int64_t{1} << static_cast<int>(layer);
        const auto h = (image.height() + stride - 1) / stride;
        const auto w = (image.width() + stride - 1) / stride;
        if (fmap.size(2) != h || fmap.size(3) != w) {
            fmap = fmap.slice(2, 0, h).slice(3, 0, w).contiguous();
        }
    }
    return feats;
}

} // namespace itstyler::backbones
