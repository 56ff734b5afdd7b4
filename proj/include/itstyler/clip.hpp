#pragma once

#include "itstyler/archive.hpp"
#include "itstyler/image.hpp"
#include "itstyler/tokenizer.hpp"

#include <torch/torch.h>

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace itstyler::backbones {

inline constexpr int64_t kClipEmbedDim = 512;
inline constexpr int64_t kClipImageSize = 224;

/// Weights of one pre-norm transformer block (OpenAI CLIP layout).
struct ResidualBlock {
    torch::Tensor ln1_w, ln1_b, in_proj_w, in_proj_b, out_proj_w, out_proj_b;
    torch::Tensor ln2_w, ln2_b, fc_w, fc_b, proj_w, proj_b;
};

struct Transformer {
    std::vector<ResidualBlock> blocks;
    int64_t width = 0;
    int64_t heads = 0;

    torch::Tensor forward(torch::Tensor x, const torch::Tensor& attn_mask) const;
};

/// Frozen CLIP text and image towers. Tensor names follow the OpenAI state
/// dict (`token_embedding.weight`, `visual.conv1.weight`, ...); the BPE merge
/// list lives in the archive meta under `tokenizer.merges`.
///
/// Both embed calls return L2-normalized 512-vectors and are safe to call
/// concurrently.
class ClipEmbedder {
public:
    explicit ClipEmbedder(const TensorArchive& archive);

    /// Throws EmptyPrompt / PromptTooLong.
    torch::Tensor embed_text(const std::string& prompt) const;

    /// Resizes the short side to 224 (bicubic), center-crops and normalizes.
    torch::Tensor embed_image(const Image& image) const;

    /// Batched image path for training: (N,3,H,W) in [0,1] -> (N,512).
    torch::Tensor embed_images(const torch::Tensor& images) const;

    /// Raw tower entry points; inputs are already tokenized / preprocessed.
    torch::Tensor encode_tokens(const std::vector<int64_t>& ids) const;
    torch::Tensor encode_pixels(const torch::Tensor& normalized) const;

    const ClipTokenizer& tokenizer() const { return tokenizer_; }
    std::string model_tag() const { return model_tag_; }
    /// Checksum of the source archive.
    std::uint64_t checksum() const { return checksum_; }
    /// Recomputed over the live parameter tensors.
    std::uint64_t parameter_checksum() const;

    /// Call-audit counters (one increment per embed_* invocation).
    std::uint64_t text_calls() const { return text_calls_->load(); }
    std::uint64_t image_calls() const { return image_calls_->load(); }
    void reset_counters() const;

private:
    torch::Tensor preprocess(const torch::Tensor& images) const;

    ClipTokenizer tokenizer_;
    std::string model_tag_;
    std::uint64_t checksum_ = 0;

    torch::Tensor token_embedding_, text_positional_, ln_final_w_, ln_final_b_, text_projection_;
    Transformer text_;

    torch::Tensor conv1_w_, class_embedding_, vision_positional_, ln_pre_w_, ln_pre_b_, ln_post_w_, ln_post_b_,
        visual_proj_;
    Transformer vision_;
    int64_t patch_size_ = 32;
    int64_t image_size_ = kClipImageSize;
    torch::Tensor pixel_mean_, pixel_std_;

    std::shared_ptr<std::atomic<std::uint64_t>> text_calls_ = std::make_shared<std::atomic<std::uint64_t>>(0);
    std::shared_ptr<std::atomic<std::uint64_t>> image_calls_ = std::make_shared<std::atomic<std::uint64_t>>(0);
};

ClipEmbedder load_clip(const std::filesystem::path& weights_path);

} // namespace itstyler::backbones
