#pragma once

#include "itstyler/clip.hpp"
#include "itstyler/image.hpp"
#include "itstyler/losses.hpp"
#include "itstyler/networks.hpp"
#include "itstyler/vgg.hpp"

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace itstyler::training {

/// The frozen feature extractors shared by training, inference and benches.
struct Backbones {
    backbones::VggEncoder vgg;
    backbones::ClipEmbedder clip;
    std::filesystem::path vgg_path;
    std::filesystem::path clip_path;

    static std::shared_ptr<const Backbones> load(const std::filesystem::path& vgg_path,
                                                 const std::filesystem::path& clip_path);
};

enum class DecoderInit { AdainPretrained, Random };

std::string to_string(DecoderInit init);
DecoderInit decoder_init_from_string(const std::string& s);

struct TrainConfig {
    std::filesystem::path content_dir;
    std::filesystem::path style_dir;
    std::filesystem::path out_dir;
    std::filesystem::path vgg_weights;
    std::filesystem::path clip_weights;
    /// Pretrained AdaIN decoder archive (`decoder.*` tensors) for warm start.
    std::filesystem::path decoder_weights;
    std::filesystem::path resume_from;

    int64_t iterations = 160000;
    int64_t batch_size = 8;
    double lr = 1e-4;
    int64_t crop = 256;
    int64_t resize_short_side = 512;
    losses::LossWeights loss_weights;
    DecoderInit decoder_init = DecoderInit::AdainPretrained;
    bool use_adv = true;
    bool squared_norms = false;
    /// Train the mapper alone on the style adaption loss for the first half
    /// of the run, then train jointly.
    bool stage_mapper_first = false;
    uint64_t seed = 0;
    int64_t checkpoint_every = 10000;
    /// Use at most this many images per folder (0 = all), first in sorted order.
    std::size_t max_images = 0;

    /// Throws Error(InvalidConfig).
    void validate() const;

    /// 64x64 crops, 500 iterations, 100-image subsets.
    static TrainConfig smoke_preset();
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep the defaults of `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Sorted image folder with a decode-once cache of short-side-resized images.
class ImageFolder {
public:
    /// Lists decodable images; undecodable files are skipped with a warning.
    /// Throws Error(EmptyDataset) when nothing decodes.
    ImageFolder(const std::filesystem::path& dir, int64_t resize_short_side, std::size_t max_images = 0);

    std::size_t size() const { return images_.size(); }
    const Image& image(std::size_t i) const { return images_.at(i); }
    const std::filesystem::path& path(std::size_t i) const { return paths_.at(i); }

private:
    std::vector<std::filesystem::path> paths_;
    std::vector<Image> images_;
};

struct Batch {
    torch::Tensor content; ///< (B,3,crop,crop)
    torch::Tensor style;
    std::vector<std::size_t> content_indices;
    std::vector<std::size_t> style_indices;
};

/// Uniform sampling with replacement plus uniform crop offsets.
Batch make_batch(const ImageFolder& content, const ImageFolder& style, int64_t batch_size, int64_t crop,
                 std::mt19937_64& rng);

/// Mean style-adaption loss of `mapper` over full images of a folder.
double mean_style_adaption_loss(nets::Mapper& mapper, const Backbones& bb, const ImageFolder& images,
                                std::size_t begin, std::size_t end);

/// Adam with betas (0.9, 0.999), eps 1e-8, no weight decay.
torch::optim::AdamOptions adam_options(double lr);

class Trainer {
public:
    Trainer(TrainConfig cfg, std::shared_ptr<const Backbones> backbones);

    /// Samples the next batch and runs one generator (+ discriminator) update.
    losses::LossReport step();

    /// One update on an explicit batch. Throws Error(NonFiniteLoss) naming
    /// the component and the batch image indices.
    losses::LossReport train_step(const Batch& batch);

    /// Write-then-rename; holds networks, Adam moments, RNG and iteration.
    void save_checkpoint(const std::filesystem::path& path) const;
    void load_checkpoint(const std::filesystem::path& path);

    int64_t iteration() const { return iteration_; }
    const TrainConfig& config() const { return cfg_; }
    nets::NetworkSet& networks() { return nets_; }
    const ImageFolder& content() const { return *content_; }
    const ImageFolder& style() const { return *style_; }

private:
    TrainConfig cfg_;
    std::shared_ptr<const Backbones> bb_;
    std::unique_ptr<ImageFolder> content_;
    std::unique_ptr<ImageFolder> style_;
    nets::NetworkSet nets_;
    std::unique_ptr<torch::optim::Adam> gen_opt_;
    std::unique_ptr<torch::optim::Adam> disc_opt_;
    std::mt19937_64 rng_;
    int64_t iteration_ = 0;
};

/// Per-iteration callback; return false to stop early.
using ProgressFn = std::function<bool(int64_t iteration, const losses::LossReport&)>;

/// Full loop: JSONL loss log at out_dir/losses.jsonl, checkpoints
/// ckpt_<iter>.nta every `checkpoint_every` and final.nta. Returns the path of
/// the final checkpoint.
std::filesystem::path run_training(const TrainConfig& cfg, std::shared_ptr<const Backbones> backbones = nullptr,
                                   const ProgressFn& progress = {});

/// Metadata keys written into every checkpoint.
inline constexpr const char* kSigmaSplitConvention = "first_512_sigma_last_512_mu";

} // namespace itstyler::training
