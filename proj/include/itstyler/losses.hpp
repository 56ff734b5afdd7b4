#pragma once

#include "itstyler/networks.hpp"
#include "itstyler/style_space.hpp"
#include "itstyler/vgg.hpp"

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <array>
#include <optional>

namespace itstyler::losses {

struct LossWeights {
    double lambda_sa = 10.0;
    double lambda_c = 5.0;
    double lambda_s = 10.0;
    double lambda_adv = 1.0;

    /// Throws Error(InvalidConfig) if any weight is negative.
    void validate() const;
};

nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

/// Unsquared L2 (default) or mean squared error.
enum class NormKind { L2, SquaredMean };

/// Per-sample norm of `diff` over every non-batch dimension, averaged over
/// the batch. Unbatched inputs (dim <= 1 for vectors) are one sample.
torch::Tensor sample_norm(const torch::Tensor& diff, bool batched, NormKind kind = NormKind::L2);

/// ||mu_pred - mu(phi)|| + ||sigma_pred - sigma(phi)|| where phi is the
/// relu4_1 map of the style image. Accepts single or batched codes.
/// Throws Error(ChannelMismatch).
torch::Tensor style_adaption_loss(const torch::Tensor& sigma_pred, const torch::Tensor& mu_pred,
                                  const torch::Tensor& target_features, NormKind kind = NormKind::L2);
torch::Tensor style_adaption_loss(const style::StyleCode& pred, const torch::Tensor& target_features,
                                  NormKind kind = NormKind::L2);

/// ||generated_features - t_o|| on relu4_1 maps.
torch::Tensor content_distance(const torch::Tensor& generated_features, const torch::Tensor& target,
                               NormKind kind = NormKind::L2);

/// Image-level content loss: relu4_1 of `generated` against t_o.
torch::Tensor content_loss(const torch::Tensor& generated, const torch::Tensor& t_o,
                           const backbones::VggEncoder& encoder, NormKind kind = NormKind::L2);

struct StyleLossResult {
    torch::Tensor total;
    std::array<torch::Tensor, 4> per_layer;
};

/// Sum over relu1_1..relu4_1 of the mean and std distances, equal weights.
StyleLossResult style_distance(const std::array<torch::Tensor, 4>& generated_features,
                               const std::array<torch::Tensor, 4>& style_features, NormKind kind = NormKind::L2);

StyleLossResult style_loss(const torch::Tensor& generated, const torch::Tensor& style_images,
                           const backbones::VggEncoder& encoder, NormKind kind = NormKind::L2);

struct AdversarialLosses {
    torch::Tensor generator;     ///< -E[log sigmoid(D(fake))]
    torch::Tensor discriminator; ///< -E[log sigmoid(D(real))] - E[log(1 - sigmoid(D(fake)))]
};

/// Loss terms from already computed logit maps; each is averaged over
/// patches then over scales. The discriminator term sees `fake_logits`
/// as given, so callers pass logits of detached images.
AdversarialLosses adversarial_from_logits(const std::vector<torch::Tensor>& real_logits,
                                          const std::vector<torch::Tensor>& fake_logits_for_disc,
                                          const std::vector<torch::Tensor>& fake_logits_for_gen);

/// Runs D on both batches. Throws Error(EmptyBatch).
AdversarialLosses adversarial_losses(nets::Discriminator& disc, const torch::Tensor& real, const torch::Tensor& fake);

struct LossReport {
    double sa = 0.0;
    double c = 0.0;
    double s = 0.0;
    std::optional<double> adv_g;
    std::optional<double> adv_d;
    double total = 0.0;
    std::array<double, 4> style_layers{};
};

nlohmann::json to_json(const LossReport& r);
LossReport loss_report_from_json(const nlohmann::json& j);

struct LossComponents {
    double sa = 0.0;
    double c = 0.0;
    double s = 0.0;
    std::optional<double> adv_g;
    std::optional<double> adv_d;
    std::array<double, 4> style_layers{};
};

/// Weighted total. A missing adv_g contributes nothing. Throws
/// Error(NonFiniteLoss) naming the first non-finite component.
LossReport total_loss(const LossComponents& parts, const LossWeights& w);

/// Same weighting on live tensors for backpropagation.
torch::Tensor weighted_total(const torch::Tensor& sa, const torch::Tensor& c, const torch::Tensor& s,
                             const torch::Tensor& adv_g, const LossWeights& w);

} // namespace itstyler::losses
