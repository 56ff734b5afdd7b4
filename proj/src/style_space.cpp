#include "itstyler/style_space.hpp"

#include "itstyler/error.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

namespace itstyler::style {

namespace {

void check_channels(int64_t feature_channels, int64_t code_channels) {
    if (feature_channels != code_channels) {
        throw Error(Errc::ChannelMismatch,
                    std::to_string(feature_channels) + " feature channels vs " + std::to_string(code_channels));
    }
}

// Broadcasts (C) or (N,C) stats against (N,C,H,W) / (C,H,W) features.
torch::Tensor spatial(const torch::Tensor& stat, const torch::Tensor& features) {
    if (features.dim() == 4 && stat.dim() == 1) {
        return stat.view({1, -1, 1, 1});
    }
    return stat.unsqueeze(-1).unsqueeze(-1);
}

} // namespace

StyleCode::StyleCode(torch::Tensor sigma, torch::Tensor mu) : sigma_(std::move(sigma)), mu_(std::move(mu)) {
    if (sigma_.sizes() != mu_.sizes() || sigma_.dim() < 1 || sigma_.dim() > 2) {
        throw Error(Errc::DimensionMismatch, "sigma " + std::string(c10::str(sigma_.sizes())) + " vs mu " +
                                                 std::string(c10::str(mu_.sizes())));
    }
    auto s = sigma_.detach();
    if (!torch::isfinite(s).all().item<bool>() || (s < 0).any().item<bool>()) {
        throw Error(Errc::InvalidConfig, "sigma must be finite and non-negative");
    }
}

StyleCode StyleCode::unchecked(torch::Tensor sigma, torch::Tensor mu) {
    StyleCode code;
    code.sigma_ = std::move(sigma);
    code.mu_ = std::move(mu);
    return code;
}

bool StyleCode::bitwise_equal(const StyleCode& other) const {
    auto eq = [](const torch::Tensor& a, const torch::Tensor& b) {
        auto ca = a.contiguous();
        auto cb = b.contiguous();
        return ca.sizes() == cb.sizes() && ca.scalar_type() == cb.scalar_type() &&
               std::memcmp(ca.data_ptr(), cb.data_ptr(), ca.nbytes()) == 0;
    };
    return eq(sigma_, other.sigma_) && eq(mu_, other.mu_);
}

nlohmann::json to_json(const LabeledStyleCode& code) {
    auto vec = [](const torch::Tensor& t) {
        auto c = t.detach().to(torch::kFloat32).contiguous();
        return std::vector<float>(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
    };
    return {{"sigma", vec(code.code.sigma())}, {"mu", vec(code.code.mu())}, {"source", code.source}, {"label", code.label}};
}

LabeledStyleCode labeled_code_from_json(const nlohmann::json& j) {
    const auto sigma = j.at("sigma").get<std::vector<float>>();
    const auto mu = j.at("mu").get<std::vector<float>>();
    if (static_cast<int64_t>(sigma.size()) != kStyleChannels || static_cast<int64_t>(mu.size()) != kStyleChannels) {
        throw Error(Errc::DimensionMismatch, "style code vectors must have 512 entries");
    }
    return {StyleCode(torch::tensor(sigma), torch::tensor(mu)), j.value("source", "text"), j.value("label", "")};
}

StyleCode channel_stats(const torch::Tensor& features) {
    if (features.dim() < 3 || features.size(-1) * features.size(-2) == 0 || features.numel() == 0) {
        throw Error(Errc::EmptyFeatureMap, "feature map " + std::string(c10::str(features.sizes())));
    }
    auto flat = features.flatten(-2);
    auto mu = flat.mean(-1);
    auto var = (flat - mu.unsqueeze(-1)).pow(2).mean(-1);
    return StyleCode::unchecked(torch::sqrt(var + kStatsEps), mu);
}

torch::Tensor t_adain(const torch::Tensor& content, const torch::Tensor& sigma, const torch::Tensor& mu) {
    check_channels(content.size(-3), sigma.size(-1));
    const auto stats = channel_stats(content);
    const auto normalized = (content - spatial(stats.mu(), content)) / spatial(stats.sigma(), content);
    return spatial(sigma, content) * normalized + spatial(mu, content);
}

torch::Tensor t_adain(const torch::Tensor& content, const StyleCode& code) {
    return t_adain(content, code.sigma(), code.mu());
}

torch::Tensor adain(const torch::Tensor& content, const torch::Tensor& style) {
    check_channels(content.size(-3), style.size(-3));
    const auto target = channel_stats(style);
    return t_adain(content, target.sigma(), target.mu());
}

void validate_weights(const std::vector<double>& weights) {
    if (weights.empty() || weights.size() > kMaxStyles) {
        throw Error(Errc::TooManyStyles, "between 1 and 8 styles are supported, got " + std::to_string(weights.size()));
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw Error(Errc::WeightsNotNormalized, "weights must be finite and non-negative");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw Error(Errc::WeightsNotNormalized, "weights sum to " + std::to_string(sum) + ", expected 1");
    }
}

InterpolationSpec::InterpolationSpec(std::vector<StyleCode> codes, std::vector<double> weights)
    : codes_(std::move(codes)), weights_(std::move(weights)) {
    if (codes_.size() != weights_.size()) {
        throw Error(Errc::DimensionMismatch, "one weight per style code required");
    }
    validate_weights(weights_);
}

torch::Tensor interpolate_features(const torch::Tensor& content, const InterpolationSpec& spec) {
    torch::Tensor out;
    for (std::size_t k = 0; k < spec.codes().size(); ++k) {
        auto term = spec.weights()[k] * t_adain(content, spec.codes()[k]);
        out = out.defined() ? out + term : term;
    }
    return out;
}

} // namespace itstyler::style
