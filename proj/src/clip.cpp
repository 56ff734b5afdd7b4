#include "itstyler/clip.hpp"

#include "itstyler/error.hpp"

#include <cmath>

namespace itstyler::backbones {

namespace F = torch::nn::functional;

namespace {

int64_t count_blocks(const TensorArchive& archive, const std::string& prefix) {
    int64_t n = 0;
    while (archive.contains(prefix + std::to_string(n) + ".ln_1.weight")) {
        ++n;
    }
    return n;
}

Transformer load_transformer(const TensorArchive& archive, const std::string& prefix, int64_t width, int64_t heads) {
    Transformer t;
    t.width = width;
    t.heads = heads;
    const auto blocks = count_blocks(archive, prefix);
    if (blocks == 0) {
        throw Error(Errc::MissingTensor, prefix + "0.ln_1.weight");
    }
    for (int64_t i = 0; i < blocks; ++i) {
        const auto p = prefix + std::to_string(i) + ".";
        ResidualBlock b;
        b.ln1_w = archive.get(p + "ln_1.weight", {width});
        b.ln1_b = archive.get(p + "ln_1.bias", {width});
        b.in_proj_w = archive.get(p + "attn.in_proj_weight", {3 * width, width});
        b.in_proj_b = archive.get(p + "attn.in_proj_bias", {3 * width});
        b.out_proj_w = archive.get(p + "attn.out_proj.weight", {width, width});
        b.out_proj_b = archive.get(p + "attn.out_proj.bias", {width});
        b.ln2_w = archive.get(p + "ln_2.weight", {width});
        b.ln2_b = archive.get(p + "ln_2.bias", {width});
        const auto hidden = archive.get(p + "mlp.c_fc.weight").size(0);
        b.fc_w = archive.get(p + "mlp.c_fc.weight", {hidden, width});
        b.fc_b = archive.get(p + "mlp.c_fc.bias", {hidden});
        b.proj_w = archive.get(p + "mlp.c_proj.weight", {width, hidden});
        b.proj_b = archive.get(p + "mlp.c_proj.bias", {width});
        t.blocks.push_back(std::move(b));
    }
    return t;
}

torch::Tensor layer_norm(const torch::Tensor& x, const torch::Tensor& w, const torch::Tensor& b) {
    return torch::layer_norm(x, {x.size(-1)}, w, b, 1e-5);
}

torch::Tensor quick_gelu(const torch::Tensor& x) { return x * torch::sigmoid(1.702 * x); }

} // namespace

torch::Tensor Transformer::forward(torch::Tensor x, const torch::Tensor& attn_mask) const {
    // x: (N, L, W)
    const auto n = x.size(0);
    const auto len = x.size(1);
    const auto head_dim = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (const auto& b : blocks) {
        auto h = layer_norm(x, b.ln1_w, b.ln1_b);
        auto qkv = torch::linear(h, b.in_proj_w, b.in_proj_b).view({n, len, 3, heads, head_dim}).permute({2, 0, 3, 1, 4});
        auto scores = torch::matmul(qkv[0], qkv[1].transpose(-2, -1)) * scale;
        if (attn_mask.defined()) {
            scores = scores + attn_mask;
        }
        auto attn = torch::matmul(torch::softmax(scores, -1), qkv[2]).permute({0, 2, 1, 3}).reshape({n, len, width});
        x = x + torch::linear(attn, b.out_proj_w, b.out_proj_b);
        h = layer_norm(x, b.ln2_w, b.ln2_b);
        x = x + torch::linear(quick_gelu(torch::linear(h, b.fc_w, b.fc_b)), b.proj_w, b.proj_b);
    }
    return x;
}

ClipEmbedder::ClipEmbedder(const TensorArchive& archive)
    : tokenizer_(archive.meta().value("tokenizer", nlohmann::json::object())
                     .value("merges", std::vector<std::string>{})),
      model_tag_(archive.meta().value("model", "ViT-B/32")), checksum_(archive.checksum()) {
    const auto& meta = archive.meta();

    token_embedding_ = archive.get("token_embedding.weight");
    const auto text_width = token_embedding_.size(1);
    if (token_embedding_.size(0) != tokenizer_.vocab_size()) {
        throw Error(Errc::ShapeMismatch, "token_embedding.weight rows " + std::to_string(token_embedding_.size(0)) +
                                             " != tokenizer vocabulary " + std::to_string(tokenizer_.vocab_size()));
    }
    text_positional_ = archive.get("positional_embedding", {ClipTokenizer::kContextLength, text_width});
    ln_final_w_ = archive.get("ln_final.weight", {text_width});
    ln_final_b_ = archive.get("ln_final.bias", {text_width});
    text_projection_ = archive.get("text_projection", {text_width, kClipEmbedDim});
    text_ = load_transformer(archive, "transformer.resblocks.", text_width,
                             meta.value("text_heads", text_width / 64));

    conv1_w_ = archive.get("visual.conv1.weight");
    const auto vision_width = conv1_w_.size(0);
    patch_size_ = conv1_w_.size(2);
    image_size_ = meta.value("image_size", kClipImageSize);
    if (conv1_w_.sizes() != c10::IntArrayRef{vision_width, 3, patch_size_, patch_size_} || image_size_ % patch_size_ != 0) {
        throw Error(Errc::ShapeMismatch, "visual.conv1.weight got " + shape_string(conv1_w_.sizes()));
    }
    const auto grid = image_size_ / patch_size_;
    class_embedding_ = archive.get("visual.class_embedding", {vision_width});
    vision_positional_ = archive.get("visual.positional_embedding", {grid * grid + 1, vision_width});
    ln_pre_w_ = archive.get("visual.ln_pre.weight", {vision_width});
    ln_pre_b_ = archive.get("visual.ln_pre.bias", {vision_width});
    ln_post_w_ = archive.get("visual.ln_post.weight", {vision_width});
    ln_post_b_ = archive.get("visual.ln_post.bias", {vision_width});
    visual_proj_ = archive.get("visual.proj", {vision_width, kClipEmbedDim});
    vision_ = load_transformer(archive, "visual.transformer.resblocks.", vision_width,
                               meta.value("vision_heads", vision_width / 64));

    pixel_mean_ = torch::tensor(meta.value("image_mean", std::vector<float>{0.48145466f, 0.4578275f, 0.40821073f}))
                      .view({1, 3, 1, 1});
    pixel_std_ = torch::tensor(meta.value("image_std", std::vector<float>{0.26862954f, 0.26130258f, 0.27577711f}))
                     .view({1, 3, 1, 1});
}

std::uint64_t ClipEmbedder::parameter_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto add = [&h](const torch::Tensor& t) { h = tensor_checksum(t, h); };
    auto add_blocks = [&add](const Transformer& t) {
        for (const auto& b : t.blocks) {
            for (const auto* p : {&b.ln1_w, &b.ln1_b, &b.in_proj_w, &b.in_proj_b, &b.out_proj_w, &b.out_proj_b, &b.ln2_w,
                                  &b.ln2_b, &b.fc_w, &b.fc_b, &b.proj_w, &b.proj_b}) {
                add(*p);
            }
        }
    };
    for (const auto* p : {&token_embedding_, &text_positional_, &ln_final_w_, &ln_final_b_, &text_projection_}) add(*p);
    add_blocks(text_);
    for (const auto* p : {&conv1_w_, &class_embedding_, &vision_positional_, &ln_pre_w_, &ln_pre_b_, &ln_post_w_,
                          &ln_post_b_, &visual_proj_}) {
        add(*p);
    }
    add_blocks(vision_);
    return h;
}

torch::Tensor ClipEmbedder::encode_tokens(const std::vector<int64_t>& ids) const {
    torch::NoGradGuard no_grad;
    const auto len = static_cast<int64_t>(ids.size());
    auto idx = torch::tensor(ids, torch::kInt64);
    auto x = token_embedding_.index_select(0, idx) + text_positional_.slice(0, 0, len);
    auto mask = torch::full({len, len}, -std::numeric_limits<float>::infinity()).triu(1);
    x = text_.forward(x.unsqueeze(0), mask);
    x = layer_norm(x, ln_final_w_, ln_final_b_);
    int64_t eot_pos = len - 1;
    for (int64_t i = 0; i < len; ++i) {
        if (ids[static_cast<std::size_t>(i)] == tokenizer_.eot_id()) {
            eot_pos = i;
            break;
        }
    }
    return torch::matmul(x[0][eot_pos], text_projection_);
}

torch::Tensor ClipEmbedder::encode_pixels(const torch::Tensor& normalized) const {
    torch::NoGradGuard no_grad;
    const auto n = normalized.size(0);
    auto x = torch::conv2d(normalized, conv1_w_, {}, patch_size_);
    x = x.flatten(2).transpose(1, 2); // (N, G*G, W)
    auto cls = class_embedding_.view({1, 1, -1}).expand({n, 1, class_embedding_.size(0)});
    x = torch::cat({cls, x}, 1) + vision_positional_;
    x = layer_norm(x, ln_pre_w_, ln_pre_b_);
    x = vision_.forward(x, {});
    x = layer_norm(x.select(1, 0), ln_post_w_, ln_post_b_);
    return torch::matmul(x, visual_proj_);
}

torch::Tensor ClipEmbedder::preprocess(const torch::Tensor& images) const {
    auto x = images.to(torch::kFloat32);
    const auto h = x.size(2);
    const auto w = x.size(3);
    if (h != image_size_ || w != image_size_) {
        const double scale = static_cast<double>(image_size_) / static_cast<double>(std::min(h, w));
        const auto nh = std::max<int64_t>(image_size_, std::llround(h * scale));
        const auto nw = std::max<int64_t>(image_size_, std::llround(w * scale));
        x = F::interpolate(x, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{nh, nw})
                                  .mode(torch::kBicubic)
                                  .align_corners(false)
                                  .antialias(scale < 1.0));
        const auto top = (nh - image_size_) / 2;
        const auto left = (nw - image_size_) / 2;
        x = x.slice(2, top, top + image_size_).slice(3, left, left + image_size_).clamp(0.0, 1.0);
    }
    return (x - pixel_mean_) / pixel_std_;
}

torch::Tensor ClipEmbedder::embed_text(const std::string& prompt) const {
    text_calls_->fetch_add(1);
    auto ids = tokenizer_.encode_prompt(prompt);
    return F::normalize(encode_tokens(ids), F::NormalizeFuncOptions().dim(0));
}

torch::Tensor ClipEmbedder::embed_image(const Image& image) const {
    image_calls_->fetch_add(1);
    torch::NoGradGuard no_grad;
    return F::normalize(encode_pixels(preprocess(image.batch()))[0], F::NormalizeFuncOptions().dim(0));
}

torch::Tensor ClipEmbedder::embed_images(const torch::Tensor& images) const {
    image_calls_->fetch_add(1);
    torch::NoGradGuard no_grad;
    return F::normalize(encode_pixels(preprocess(images.detach())), F::NormalizeFuncOptions().dim(1));
}

void ClipEmbedder::reset_counters() const {
    text_calls_->store(0);
    image_calls_->store(0);
}

ClipEmbedder load_clip(const std::filesystem::path& weights_path) { return ClipEmbedder(TensorArchive::read(weights_path)); }

} // namespace itstyler::backbones
