#include "itstyler/losses.hpp"

#include "itstyler/error.hpp"

#include <cmath>

namespace itstyler::losses {

void LossWeights::validate() const {
    if (lambda_sa < 0 || lambda_c < 0 || lambda_s < 0 || lambda_adv < 0) {
        throw Error(Errc::InvalidConfig, "loss weights must be non-negative");
    }
}

nlohmann::json to_json(const LossWeights& w) {
    return {{"lambda_sa", w.lambda_sa}, {"lambda_c", w.lambda_c}, {"lambda_s", w.lambda_s}, {"lambda_adv", w.lambda_adv}};
}

LossWeights loss_weights_from_json(const nlohmann::json& j) {
    LossWeights w;
    w.lambda_sa = j.value("lambda_sa", w.lambda_sa);
    w.lambda_c = j.value("lambda_c", w.lambda_c);
    w.lambda_s = j.value("lambda_s", w.lambda_s);
    w.lambda_adv = j.value("lambda_adv", w.lambda_adv);
    w.validate();
    return w;
}

torch::Tensor sample_norm(const torch::Tensor& diff, bool batched, NormKind kind) {
    auto flat = batched ? diff.flatten(1) : diff.flatten().unsqueeze(0);
    if (kind == NormKind::SquaredMean) {
        return flat.pow(2).mean(1).mean();
    }
    // Plain sqrt(sum(x^2)) rather than linalg norm keeps the f64 gradient
    // identical to the closed form used in the tests.
    return flat.pow(2).sum(1).sqrt().mean();
}

torch::Tensor style_adaption_loss(const torch::Tensor& sigma_pred, const torch::Tensor& mu_pred,
                                  const torch::Tensor& target_features, NormKind kind) {
    if (sigma_pred.size(-1) != target_features.size(-3) || mu_pred.size(-1) != target_features.size(-3)) {
        throw Error(Errc::ChannelMismatch, "style code and relu4_1 features disagree in channel count");
    }
    const auto target = style::channel_stats(target_features);
    const bool batched = sigma_pred.dim() == 2;
    return sample_norm(mu_pred - target.mu(), batched, kind) + sample_norm(sigma_pred - target.sigma(), batched, kind);
}

torch::Tensor style_adaption_loss(const style::StyleCode& pred, const torch::Tensor& target_features, NormKind kind) {
    return style_adaption_loss(pred.sigma(), pred.mu(), target_features, kind);
}

torch::Tensor content_distance(const torch::Tensor& generated_features, const torch::Tensor& target, NormKind kind) {
    if (generated_features.sizes() != target.sizes()) {
        throw Error(Errc::DimensionMismatch, "content features " + shape_string(generated_features.sizes()) + " vs " +
                                                 shape_string(target.sizes()));
    }
    return sample_norm(generated_features - target, generated_features.dim() == 4, kind);
}

torch::Tensor content_loss(const torch::Tensor& generated, const torch::Tensor& t_o,
                           const backbones::VggEncoder& encoder, NormKind kind) {
    return content_distance(encoder.relu4_1(generated), t_o, kind);
}

StyleLossResult style_distance(const std::array<torch::Tensor, 4>& generated_features,
                               const std::array<torch::Tensor, 4>& style_features, NormKind kind) {
    StyleLossResult out;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto g = style::channel_stats(generated_features[i]);
        const auto s = style::channel_stats(style_features[i]);
        const bool batched = generated_features[i].dim() == 4;
        out.per_layer[i] = sample_norm(g.mu() - s.mu(), batched, kind) + sample_norm(g.sigma() - s.sigma(), batched, kind);
        out.total = out.total.defined() ? out.total + out.per_layer[i] : out.per_layer[i];
    }
    return out;
}

StyleLossResult style_loss(const torch::Tensor& generated, const torch::Tensor& style_images,
                           const backbones::VggEncoder& encoder, NormKind kind) {
    return style_distance(encoder.all_features(generated), encoder.all_features(style_images), kind);
}

AdversarialLosses adversarial_from_logits(const std::vector<torch::Tensor>& real_logits,
                                          const std::vector<torch::Tensor>& fake_logits_for_disc,
                                          const std::vector<torch::Tensor>& fake_logits_for_gen) {
    if (real_logits.empty() || fake_logits_for_disc.size() != real_logits.size() ||
        fake_logits_for_gen.size() != real_logits.size()) {
        throw Error(Errc::EmptyBatch, "adversarial loss needs one logit map per scale for real and fake");
    }
    torch::Tensor gen;
    torch::Tensor disc;
    for (std::size_t s = 0; s < real_logits.size(); ++s) {
        // log sigmoid(x) = -softplus(-x); log(1 - sigmoid(x)) = -softplus(x)
        auto d = torch::softplus(-real_logits[s]).mean() + torch::softplus(fake_logits_for_disc[s]).mean();
        auto g = torch::softplus(-fake_logits_for_gen[s]).mean();
        disc = disc.defined() ? disc + d : d;
        gen = gen.defined() ? gen + g : g;
    }
    const auto scales = static_cast<double>(real_logits.size());
    return {gen / scales, disc / scales};
}

AdversarialLosses adversarial_losses(nets::Discriminator& disc, const torch::Tensor& real, const torch::Tensor& fake) {
    if (real.numel() == 0 || fake.numel() == 0 || real.size(0) == 0 || fake.size(0) == 0) {
        throw Error(Errc::EmptyBatch, "real and fake batches must be non-empty");
    }
    auto real_logits = nets::discriminate(disc, real);
    auto fake_detached = nets::discriminate(disc, fake.detach());
    auto fake_live = nets::discriminate(disc, fake);
    return adversarial_from_logits(real_logits, fake_detached, fake_live);
}

nlohmann::json to_json(const LossReport& r) {
    nlohmann::json j = {{"sa", r.sa}, {"c", r.c}, {"s", r.s}, {"total", r.total}, {"style_layers", r.style_layers}};
    j["adv_g"] = r.adv_g ? nlohmann::json(*r.adv_g) : nlohmann::json(nullptr);
    j["adv_d"] = r.adv_d ? nlohmann::json(*r.adv_d) : nlohmann::json(nullptr);
    return j;
}

LossReport loss_report_from_json(const nlohmann::json& j) {
    LossReport r;
    r.sa = j.at("sa").get<double>();
    r.c = j.at("c").get<double>();
    r.s = j.at("s").get<double>();
    r.total = j.at("total").get<double>();
    r.style_layers = j.at("style_layers").get<std::array<double, 4>>();
    if (!j.at("adv_g").is_null()) r.adv_g = j.at("adv_g").get<double>();
    if (!j.at("adv_d").is_null()) r.adv_d = j.at("adv_d").get<double>();
    return r;
}

LossReport total_loss(const LossComponents& parts, const LossWeights& w) {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v)) {
            throw Error(Errc::NonFiniteLoss, name);
        }
    };
    check(parts.sa, "sa");
    check(parts.c, "c");
    check(parts.s, "s");
    if (parts.adv_g) check(*parts.adv_g, "adv_g");
    if (parts.adv_d) check(*parts.adv_d, "adv_d");
    for (double v : parts.style_layers) check(v, "style_layer");

    LossReport r;
    r.sa = parts.sa;
    r.c = parts.c;
    r.s = parts.s;
    r.adv_g = parts.adv_g;
    r.adv_d = parts.adv_d;
    r.style_layers = parts.style_layers;
    r.total = w.lambda_sa * parts.sa + w.lambda_c * parts.c + w.lambda_s * parts.s;
    if (parts.adv_g) {
        r.total += w.lambda_adv * *parts.adv_g;
    }
    return r;
}

torch::Tensor weighted_total(const torch::Tensor& sa, const torch::Tensor& c, const torch::Tensor& s,
                             const torch::Tensor& adv_g, const LossWeights& w) {
    auto total = w.lambda_sa * sa + w.lambda_c * c + w.lambda_s * s;
    if (adv_g.defined()) {
        total = total + w.lambda_adv * adv_g;
    }
    return total;
}

} // namespace itstyler::losses
