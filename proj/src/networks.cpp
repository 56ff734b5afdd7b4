#include "itstyler/networks.hpp"

#include "itstyler/error.hpp"

namespace itstyler::nets {

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace {

struct DecoderLayout {
    const char* name;
    int64_t in;
    int64_t out;
    bool upsample_after;
    bool relu;
};

constexpr std::array<DecoderLayout, 9> kDecoderLayout = {{
    {"conv4_1", 512, 256, true, true},
    {"conv3_4", 256, 256, false, true},
    {"conv3_3", 256, 256, false, true},
    {"conv3_2", 256, 256, false, true},
    {"conv3_1", 256, 128, true, true},
    {"conv2_2", 128, 128, false, true},
    {"conv2_1", 128, 64, true, true},
    {"conv1_2", 64, 64, false, true},
    {"conv1_1", 64, 3, false, false},
}};

void load_prefixed(nn::Module& module, const std::string& prefix, const TensorArchive& archive) {
    torch::NoGradGuard no_grad;
    for (auto& item : module.named_parameters()) {
        const auto& src = archive.get(prefix + item.key(), item.value().sizes());
        item.value().copy_(src.to(item.value().scalar_type()));
    }
}

void save_prefixed(const nn::Module& module, const std::string& prefix, TensorArchive& archive) {
    for (const auto& item : module.named_parameters()) {
        archive.put(prefix + item.key(), item.value());
    }
}

int64_t count_params(const nn::Module& module) {
    int64_t n = 0;
    for (const auto& p : module.parameters()) {
        n += p.numel();
    }
    return n;
}

} // namespace

MapperImpl::MapperImpl() {
    for (std::size_t i = 0; i + 1 < kMapperDims.size(); ++i) {
        layers.push_back(register_module("fc" + std::to_string(i + 1), nn::Linear(kMapperDims[i], kMapperDims[i + 1])));
    }
}

torch::Tensor MapperImpl::forward(const torch::Tensor& embedding) {
    auto x = embedding;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i]->forward(x);
        if (i + 1 < layers.size()) {
            x = torch::relu(x);
        }
    }
    return x;
}

const std::vector<std::string>& decoder_layer_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& l : kDecoderLayout) out.emplace_back(l.name);
        return out;
    }();
    return names;
}

DecoderImpl::DecoderImpl() {
    for (const auto& l : kDecoderLayout) {
        Stage s;
        s.conv = register_module(l.name, nn::Conv2d(nn::Conv2dOptions(l.in, l.out, 3)));
        s.upsample_after = l.upsample_after;
        s.relu = l.relu;
        stages.push_back(s);
    }
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& features) {
    auto x = features;
    for (auto& s : stages) {
        x = s.conv->forward(F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReflect)));
        if (s.relu) {
            x = torch::relu(x);
        }
        if (s.upsample_after) {
            x = F::interpolate(x, F::InterpolateFuncOptions()
                                      .scale_factor(std::vector<double>{2.0, 2.0})
                                      .mode(torch::kNearest));
        }
    }
    return x;
}

DiscriminatorImpl::DiscriminatorImpl(int64_t scales, int64_t base_channels) {
    for (int64_t s = 0; s < scales; ++s) {
        nn::Sequential head;
        int64_t in = 3;
        int64_t out = base_channels;
        for (int i = 0; i < 3; ++i) {
            head->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
            head->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
            in = out;
            out *= 2;
        }
        head->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, 4).stride(2).padding(1)));
        heads.push_back(register_module("scale" + std::to_string(s), head));
    }
}

std::vector<torch::Tensor> DiscriminatorImpl::forward(const torch::Tensor& images) {
    std::vector<torch::Tensor> logits;
    auto x = images * 2.0 - 1.0;
    for (std::size_t s = 0; s < heads.size(); ++s) {
        if (s > 0) {
            x = torch::avg_pool2d(x, 2, 2);
        }
        logits.push_back(heads[s]->forward(x));
    }
    return logits;
}

std::pair<torch::Tensor, torch::Tensor> split_raw_code(const torch::Tensor& raw) {
    const auto c = style::kStyleChannels;
    return {raw.narrow(-1, 0, c), raw.narrow(-1, c, c)};
}

style::StyleCode map_to_style(Mapper& mapper, const torch::Tensor& embedding) {
    if (embedding.size(-1) != kMapperDims.front() || embedding.dim() > 2) {
        throw Error(Errc::DimensionMismatch, "mapper expects 512-dim embeddings, got " + shape_string(embedding.sizes()));
    }
    auto raw = mapper->forward(embedding.to(mapper->layers.front()->weight.scalar_type()));
    auto [sigma, mu] = split_raw_code(raw);
    return style::StyleCode::unchecked(sigma.clamp_min(style::kSigmaFloor), mu);
}

torch::Tensor decode(Decoder& decoder, const torch::Tensor& features) {
    if (features.dim() != 4 || features.size(1) != style::kStyleChannels) {
        throw Error(Errc::ChannelMismatch, "decoder expects (N,512,h,w), got " + shape_string(features.sizes()));
    }
    return decoder->forward(features);
}

Image decode_image(Decoder& decoder, const torch::Tensor& features) { return Image(decode(decoder, features)[0]); }

std::vector<torch::Tensor> discriminate(Discriminator& disc, const torch::Tensor& images) {
    if (images.size(-1) < 64 || images.size(-2) < 64) {
        throw Error(Errc::ImageTooSmall, "discriminator input must be at least 64x64");
    }
    return disc->forward(images.dim() == 3 ? images.unsqueeze(0) : images);
}

NetworkSet NetworkSet::create(uint64_t seed) {
    torch::manual_seed(seed);
    return NetworkSet{Mapper(), Decoder(), Discriminator()};
}

void NetworkSet::save_to(TensorArchive& archive) const {
    save_prefixed(*mapper, "mapper.", archive);
    save_prefixed(*decoder, "decoder.", archive);
    save_prefixed(*disc, "disc.", archive);
}

void NetworkSet::load_from(const TensorArchive& archive, bool with_disc) {
    load_prefixed(*mapper, "mapper.", archive);
    load_prefixed(*decoder, "decoder.", archive);
    if (with_disc) {
        load_prefixed(*disc, "disc.", archive);
    }
}

void NetworkSet::load_decoder(const TensorArchive& archive) { load_prefixed(*decoder, "decoder.", archive); }

int64_t NetworkSet::parameter_count(const std::string& which) const {
    if (which == "mapper") return count_params(*mapper);
    if (which == "decoder") return count_params(*decoder);
    if (which == "disc") return count_params(*disc);
    throw Error(Errc::InvalidConfig, "unknown network " + which);
}

void NetworkSet::to(torch::Dtype dtype) {
    mapper->to(dtype);
    decoder->to(dtype);
    disc->to(dtype);
}

void NetworkSet::eval() {
    mapper->eval();
    decoder->eval();
    disc->eval();
}

void NetworkSet::train() {
    mapper->train();
    decoder->train();
    disc->train();
}

std::vector<torch::Tensor> snapshot_parameters(const torch::nn::Module& module) {
    std::vector<torch::Tensor> out;
    for (const auto& p : module.parameters()) {
        out.push_back(p.detach().clone());
    }
    return out;
}

} // namespace itstyler::nets
