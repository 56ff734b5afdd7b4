#include "itstyler/training.hpp"

#include "itstyler/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace itstyler::training {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".webp" || ext == ".tif" ||
           ext == ".tiff";
}

std::vector<torch::Tensor> generator_parameters(nets::NetworkSet& nets) {
    auto params = nets.mapper->parameters();
    auto dec = nets.decoder->parameters();
    params.insert(params.end(), dec.begin(), dec.end());
    return params;
}

void save_adam(const torch::optim::Adam& opt, const std::vector<torch::Tensor>& params, const std::string& prefix,
               TensorArchive& archive, nlohmann::json& steps) {
    steps = nlohmann::json::object();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto it = opt.state().find(params[i].unsafeGetTensorImpl());
        if (it == opt.state().end()) {
            continue;
        }
        const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
        const auto key = prefix + std::to_string(i);
        archive.put(key + ".exp_avg", st.exp_avg());
        archive.put(key + ".exp_avg_sq", st.exp_avg_sq());
        steps[std::to_string(i)] = st.step();
    }
}

void load_adam(torch::optim::Adam& opt, const std::vector<torch::Tensor>& params, const std::string& prefix,
               const TensorArchive& archive, const nlohmann::json& steps) {
    opt.state().clear();
    for (const auto& [index, step] : steps.items()) {
        const auto i = static_cast<std::size_t>(std::stoul(index));
        if (i >= params.size()) {
            throw Error(Errc::UnreadableArchive, "optimizer state index out of range");
        }
        const auto key = prefix + index;
        auto st = std::make_unique<torch::optim::AdamParamState>();
        st->step(step.get<int64_t>());
        st->exp_avg(archive.get(key + ".exp_avg", params[i].sizes()).to(params[i].scalar_type()).clone());
        st->exp_avg_sq(archive.get(key + ".exp_avg_sq", params[i].sizes()).to(params[i].scalar_type()).clone());
        opt.state()[params[i].unsafeGetTensorImpl()] = std::move(st);
    }
}

std::string join_indices(const std::vector<std::size_t>& v) {
    std::ostringstream out;
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
    return out.str();
}

} // namespace

std::shared_ptr<const Backbones> Backbones::load(const fs::path& vgg_path, const fs::path& clip_path) {
    return std::make_shared<const Backbones>(
        Backbones{backbones::load_vgg(vgg_path), backbones::load_clip(clip_path), fs::absolute(vgg_path), fs::absolute(clip_path)});
}

std::string to_string(DecoderInit init) { return init == DecoderInit::Random ? "random" : "adain"; }

DecoderInit decoder_init_from_string(const std::string& s) {
    if (s == "random") return DecoderInit::Random;
    if (s == "adain" || s == "adain_pretrained") return DecoderInit::AdainPretrained;
    throw Error(Errc::InvalidConfig, "decoder_init must be 'adain' or 'random', got '" + s + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");
    if (iterations < 1) throw Error(Errc::InvalidConfig, "iterations must be >= 1");
    if (crop < 64 || crop % 8 != 0) throw Error(Errc::InvalidConfig, "crop must be a multiple of 8 and >= 64");
    if (crop > resize_short_side) throw Error(Errc::InvalidConfig, "crop must not exceed resize_short_side");
    if (!(lr > 0.0)) throw Error(Errc::InvalidConfig, "lr must be positive");
    if (checkpoint_every < 1) throw Error(Errc::InvalidConfig, "checkpoint_every must be >= 1");
    loss_weights.validate();
    if (decoder_init == DecoderInit::AdainPretrained && decoder_weights.empty() && resume_from.empty()) {
        throw Error(Errc::InvalidConfig, "decoder_init=adain needs decoder_weights (or use decoder_init=random)");
    }
}

TrainConfig TrainConfig::smoke_preset() {
    TrainConfig cfg;
    cfg.iterations = 500;
    cfg.batch_size = 4;
    cfg.crop = 64;
    cfg.resize_short_side = 128;
    cfg.max_images = 100;
    cfg.checkpoint_every = 100;
    cfg.decoder_init = DecoderInit::Random;
    return cfg;
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"content_dir", c.content_dir.string()},
            {"style_dir", c.style_dir.string()},
            {"out_dir", c.out_dir.string()},
            {"vgg_weights", c.vgg_weights.string()},
            {"clip_weights", c.clip_weights.string()},
            {"decoder_weights", c.decoder_weights.string()},
            {"resume_from", c.resume_from.string()},
            {"iterations", c.iterations},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"crop", c.crop},
            {"resize_short_side", c.resize_short_side},
            {"loss_weights", losses::to_json(c.loss_weights)},
            {"decoder_init", to_string(c.decoder_init)},
            {"use_adv", c.use_adv},
            {"squared_norms", c.squared_norms},
            {"stage_mapper_first", c.stage_mapper_first},
            {"seed", c.seed},
            {"checkpoint_every", c.checkpoint_every},
            {"max_images", c.max_images}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    auto path = [&](const char* key, fs::path& out) {
        if (j.contains(key)) out = j.at(key).get<std::string>();
    };
    path("content_dir", c.content_dir);
    path("style_dir", c.style_dir);
    path("out_dir", c.out_dir);
    path("vgg_weights", c.vgg_weights);
    path("clip_weights", c.clip_weights);
    path("decoder_weights", c.decoder_weights);
    path("resume_from", c.resume_from);
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.crop = j.value("crop", c.crop);
    c.resize_short_side = j.value("resize_short_side", c.resize_short_side);
    if (j.contains("loss_weights")) c.loss_weights = losses::loss_weights_from_json(j.at("loss_weights"));
    if (j.contains("decoder_init")) c.decoder_init = decoder_init_from_string(j.at("decoder_init").get<std::string>());
    c.use_adv = j.value("use_adv", c.use_adv);
    c.squared_norms = j.value("squared_norms", c.squared_norms);
    c.stage_mapper_first = j.value("stage_mapper_first", c.stage_mapper_first);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.max_images = j.value("max_images", c.max_images);
    return c;
}

ImageFolder::ImageFolder(const fs::path& dir, int64_t resize_short_side, std::size_t max_images) {
    if (!fs::is_directory(dir)) {
        throw Error(Errc::EmptyDataset, dir.string() + " is not a directory");
    }
    std::vector<fs::path> candidates;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) {
            candidates.push_back(entry.path());
        }
    }
    std::sort(candidates.begin(), candidates.end());
    for (const auto& p : candidates) {
        if (max_images != 0 && images_.size() >= max_images) {
            break;
        }
        try {
            images_.push_back(itstyler::resize_short_side(load_image(p), resize_short_side));
            paths_.push_back(p);
        } catch (const Error& e) {
            std::cerr << "warning: skipping " << p.string() << " (" << e.what() << ")\n";
        }
    }
    if (images_.empty()) {
        throw Error(Errc::EmptyDataset, dir.string());
    }
}

Batch make_batch(const ImageFolder& content, const ImageFolder& style, int64_t batch_size, int64_t crop_size,
                 std::mt19937_64& rng) {
    Batch b;
    std::vector<Image> cs;
    std::vector<Image> ss;
    auto sample = [&](const ImageFolder& folder, std::vector<std::size_t>& indices, std::vector<Image>& out) {
        const auto idx = static_cast<std::size_t>(rng() % folder.size());
        const auto& img = folder.image(idx);
        const auto top = static_cast<int64_t>(rng() % static_cast<uint64_t>(img.height() - crop_size + 1));
        const auto left = static_cast<int64_t>(rng() % static_cast<uint64_t>(img.width() - crop_size + 1));
        indices.push_back(idx);
        out.push_back(crop(img, top, left, crop_size, crop_size));
    };
    for (int64_t i = 0; i < batch_size; ++i) {
        sample(content, b.content_indices, cs);
        sample(style, b.style_indices, ss);
    }
    b.content = stack_images(cs);
    b.style = stack_images(ss);
    return b;
}

double mean_style_adaption_loss(nets::Mapper& mapper, const Backbones& bb, const ImageFolder& images, std::size_t begin,
                                std::size_t end) {
    torch::NoGradGuard no_grad;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = begin; i < end && i < images.size(); ++i) {
        const auto& img = images.image(i);
        auto code = nets::map_to_style(mapper, bb.clip.embed_image(img));
        auto target = backbones::vgg_features(bb.vgg, img, std::array{backbones::VggLayer::Relu4_1})
                          .at(backbones::VggLayer::Relu4_1);
        auto [sigma, mu] = std::pair{code.sigma(), code.mu()};
        sum += losses::style_adaption_loss(sigma.unsqueeze(0), mu.unsqueeze(0), target).item<double>();
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

torch::optim::AdamOptions adam_options(double lr) {
    return torch::optim::AdamOptions(lr).betas({0.9, 0.999}).eps(1e-8).weight_decay(0.0);
}

Trainer::Trainer(TrainConfig cfg, std::shared_ptr<const Backbones> backbones)
    : cfg_(std::move(cfg)), bb_(std::move(backbones)), nets_(nets::NetworkSet::create(cfg_.seed)), rng_(cfg_.seed) {
    cfg_.validate();
    content_ = std::make_unique<ImageFolder>(cfg_.content_dir, cfg_.resize_short_side, cfg_.max_images);
    style_ = std::make_unique<ImageFolder>(cfg_.style_dir, cfg_.resize_short_side, cfg_.max_images);
    if (cfg_.decoder_init == DecoderInit::AdainPretrained && !cfg_.decoder_weights.empty()) {
        nets_.load_decoder(TensorArchive::read(cfg_.decoder_weights));
    }
    const auto options = adam_options(cfg_.lr);
    gen_opt_ = std::make_unique<torch::optim::Adam>(generator_parameters(nets_), options);
    disc_opt_ = std::make_unique<torch::optim::Adam>(nets_.disc->parameters(), options);
}

losses::LossReport Trainer::step() {
    const auto batch = make_batch(*content_, *style_, cfg_.batch_size, cfg_.crop, rng_);
    return train_step(batch);
}

losses::LossReport Trainer::train_step(const Batch& batch) {
    nets_.train();
    const auto kind = cfg_.squared_norms ? losses::NormKind::SquaredMean : losses::NormKind::L2;
    const bool mapper_only = cfg_.stage_mapper_first && iteration_ < cfg_.iterations / 2;

    torch::Tensor content_feat;
    std::array<torch::Tensor, 4> style_feats;
    torch::Tensor embedding;
    torch::Tensor t_o;
    {
        torch::NoGradGuard no_grad;
        content_feat = bb_->vgg.relu4_1(batch.content);
        style_feats = bb_->vgg.all_features(batch.style);
        embedding = bb_->clip.embed_images(batch.style);
        t_o = style::adain(content_feat, style_feats[3]);
    }

    const auto raw = nets_.mapper->forward(embedding);
    const auto [sigma_raw, mu_raw] = nets::split_raw_code(raw);
    const auto sa = losses::style_adaption_loss(sigma_raw, mu_raw, style_feats[3], kind);

    losses::LossComponents parts;
    parts.sa = sa.item<double>();
    torch::Tensor total;
    torch::Tensor generated;
    if (mapper_only) {
        total = cfg_.loss_weights.lambda_sa * sa;
    } else {
        const auto t = style::t_adain(content_feat, sigma_raw.clamp_min(style::kSigmaFloor), mu_raw);
        generated = nets_.decoder->forward(t);
        const auto gen_feats = bb_->vgg.all_features(generated);
        const auto c = losses::content_distance(gen_feats[3], t_o, kind);
        const auto s = losses::style_distance(gen_feats, style_feats, kind);
        torch::Tensor adv_g;
        if (cfg_.use_adv) {
            const auto fake_logits = nets_.disc->forward(generated);
            for (const auto& l : fake_logits) {
                auto term = torch::softplus(-l).mean();
                adv_g = adv_g.defined() ? adv_g + term : term;
            }
            adv_g = adv_g / static_cast<double>(fake_logits.size());
            parts.adv_g = adv_g.item<double>();
        }
        parts.c = c.item<double>();
        parts.s = s.total.item<double>();
        for (std::size_t i = 0; i < 4; ++i) parts.style_layers[i] = s.per_layer[i].item<double>();
        total = losses::weighted_total(sa, c, s.total, adv_g, cfg_.loss_weights);
    }

    if (!std::isfinite(total.item<double>())) {
        // total_loss names the offending component.
        try {
            losses::total_loss(parts, cfg_.loss_weights);
        } catch (const Error& e) {
            throw Error(Errc::NonFiniteLoss, e.detail() + " at iteration " + std::to_string(iteration_ + 1) +
                                                 " content=[" + join_indices(batch.content_indices) + "] style=[" +
                                                 join_indices(batch.style_indices) + "]");
        }
        throw Error(Errc::NonFiniteLoss, "total at iteration " + std::to_string(iteration_ + 1));
    }

    gen_opt_->zero_grad();
    total.backward();
    gen_opt_->step();

    if (cfg_.use_adv && !mapper_only) {
        disc_opt_->zero_grad();
        const auto real_logits = nets_.disc->forward(batch.style);
        const auto fake_logits = nets_.disc->forward(generated.detach());
        const auto adv = losses::adversarial_from_logits(real_logits, fake_logits, fake_logits);
        parts.adv_d = adv.discriminator.item<double>();
        adv.discriminator.backward();
        disc_opt_->step();
    }

    ++iteration_;
    try {
        return losses::total_loss(parts, cfg_.loss_weights);
    } catch (const Error& e) {
        throw Error(Errc::NonFiniteLoss, e.detail() + " at iteration " + std::to_string(iteration_) + " content=[" +
                                             join_indices(batch.content_indices) + "] style=[" +
                                             join_indices(batch.style_indices) + "]");
    }
}

void Trainer::save_checkpoint(const fs::path& path) const {
    TensorArchive archive;
    nets_.save_to(archive);
    auto& meta = archive.meta();
    auto& mutable_nets = const_cast<nets::NetworkSet&>(nets_);
    nlohmann::json gen_steps;
    nlohmann::json disc_steps;
    save_adam(*gen_opt_, generator_parameters(mutable_nets), "optim.gen.", archive, gen_steps);
    save_adam(*disc_opt_, nets_.disc->parameters(), "optim.disc.", archive, disc_steps);
    std::ostringstream rng_state;
    rng_state << rng_;
    meta["kind"] = "itstyler-checkpoint";
    meta["iteration"] = iteration_;
    meta["loss_weights"] = losses::to_json(cfg_.loss_weights);
    meta["sigma_split_convention"] = kSigmaSplitConvention;
    meta["decoder_init"] = to_string(cfg_.decoder_init);
    meta["use_adv"] = cfg_.use_adv;
    meta["param_counts"] = {{"mapper", nets_.parameter_count("mapper")},
                            {"decoder", nets_.parameter_count("decoder")},
                            {"disc", nets_.parameter_count("disc")}};
    meta["optimizer_steps"] = {{"gen", gen_steps}, {"disc", disc_steps}};
    meta["rng_state"] = rng_state.str();
    meta["config"] = to_json(cfg_);
    meta["backbones"] = {{"vgg", bb_->vgg_path.string()},
                         {"clip", bb_->clip_path.string()},
                         {"vgg_checksum", std::to_string(bb_->vgg.checksum())},
                         {"clip_checksum", std::to_string(bb_->clip.checksum())}};
    archive.write(path);
}

void Trainer::load_checkpoint(const fs::path& path) {
    const auto archive = TensorArchive::read(path);
    const auto& meta = archive.meta();
    nets_.load_from(archive);
    if (meta.contains("param_counts")) {
        for (const char* which : {"mapper", "decoder", "disc"}) {
            if (meta["param_counts"].value(which, int64_t{-1}) != nets_.parameter_count(which)) {
                throw Error(Errc::ShapeMismatch, std::string("parameter count of ") + which + " differs from checkpoint");
            }
        }
    }
    const auto steps = meta.value("optimizer_steps", nlohmann::json::object());
    load_adam(*gen_opt_, generator_parameters(nets_), "optim.gen.", archive, steps.value("gen", nlohmann::json::object()));
    load_adam(*disc_opt_, nets_.disc->parameters(), "optim.disc.", archive, steps.value("disc", nlohmann::json::object()));
    iteration_ = meta.value("iteration", int64_t{0});
    if (meta.contains("rng_state")) {
        std::istringstream in(meta["rng_state"].get<std::string>());
        in >> rng_;
    }
}

fs::path run_training(const TrainConfig& cfg, std::shared_ptr<const Backbones> backbones, const ProgressFn& progress) {
    cfg.validate();
    if (!backbones) {
        backbones = Backbones::load(cfg.vgg_weights, cfg.clip_weights);
    }
    fs::create_directories(cfg.out_dir);
    Trainer trainer(cfg, backbones);
    const bool resuming = !cfg.resume_from.empty();
    if (resuming) {
        trainer.load_checkpoint(cfg.resume_from);
    }
    std::ofstream log(cfg.out_dir / "losses.jsonl", resuming ? std::ios::app : std::ios::trunc);
    if (!log) {
        throw Error(Errc::Io, "cannot open loss log in " + cfg.out_dir.string());
    }
    while (trainer.iteration() < cfg.iterations) {
        const auto report = trainer.step();
        const auto it = trainer.iteration();
        auto line = losses::to_json(report);
        line["iteration"] = it;
        log << line.dump() << '\n';
        log.flush();
        if (it % cfg.checkpoint_every == 0 && it != cfg.iterations) {
            char name[32];
            std::snprintf(name, sizeof name, "ckpt_%07lld.nta", static_cast<long long>(it));
            trainer.save_checkpoint(cfg.out_dir / name);
        }
        if (progress && !progress(it, report)) {
            break;
        }
    }
    const auto final_path = cfg.out_dir / "final.nta";
    trainer.save_checkpoint(final_path);
    return final_path;
}

} // namespace itstyler::training
