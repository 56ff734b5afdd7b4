#include "itstyler/cli.hpp"

#include "itstyler/error.hpp"
#include "itstyler/evaluation.hpp"
#include "itstyler/http_service.hpp"
#include "itstyler/service.hpp"
#include "itstyler/synthetic.hpp"
#include "itstyler/training.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

namespace itstyler::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string env_or(const char* name, const std::string& fallback = {}) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

std::string require_path(const std::string& flag_value, const char* env, const char* what) {
    auto v = flag_value.empty() ? env_or(env) : flag_value;
    if (v.empty()) {
        throw UsageError(std::string("missing ") + what + " (flag or " + env + ")");
    }
    if (!fs::exists(v)) {
        throw UsageError(std::string(what) + " does not exist: " + v);
    }
    return v;
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

nlohmann::json typed(const std::string& value) {
    auto parsed = nlohmann::json::parse(value, nullptr, false);
    return !parsed.is_discarded() && parsed.is_number() ? parsed : nlohmann::json(value);
}

nlohmann::json resolved_config(const CLI::App* sub, const std::string& path) {
    nlohmann::json j = {{"subcommand", path}};
    for (const CLI::Option* opt : sub->get_options()) {
        const auto name = opt->get_single_name();
        if (name == "help" || name == "config" || name.empty()) continue;
        if (opt->get_expected_max() == 0) {
            j[name] = opt->count() > 0;
        } else if (opt->count() > 0) {
            const auto& r = opt->results();
            j[name] = typed(r.back());
        } else {
            const auto d = opt->get_default_str();
            j[name] = d.empty() ? nlohmann::json(nullptr) : typed(d);
        }
    }
    return j;
}

struct StyleFlags {
    std::string text;
    std::string style_image;
    std::string code_id;

    void add(CLI::App* sub) {
        auto* t = sub->add_option("--text", text, "Style prompt");
        auto* s = sub->add_option("--style-image", style_image, "Style reference image")->check(CLI::ExistingFile);
        auto* c = sub->add_option("--code-id", code_id, "Stored style code id");
        t->excludes(s)->excludes(c);
        s->excludes(c);
    }

    service::StyleSource source() const {
        if (!text.empty()) return service::StyleSource::from_text(text);
        if (!style_image.empty()) return service::StyleSource::from_image(load_image(style_image));
        if (!code_id.empty()) return service::StyleSource::from_code(code_id);
        throw UsageError("one of --text, --style-image or --code-id is required");
    }
};

struct EngineFlags {
    std::string checkpoint;
    std::string vgg;
    std::string clip;
    std::string code_store;

    void add(CLI::App* sub) {
        sub->add_option("--checkpoint", checkpoint, "Trained checkpoint (default: $ITSTYLER_CHECKPOINT)");
        sub->add_option("--vgg", vgg, "VGG-19 weights (default: path recorded in the checkpoint)");
        sub->add_option("--clip", clip, "CLIP weights (default: path recorded in the checkpoint)");
        sub->add_option("--code-store", code_store, "Directory of exported style codes");
    }

    fs::path store_dir(const std::string& ckpt) const {
        if (!code_store.empty()) return code_store;
        const auto env = env_or("ITSTYLER_CODE_STORE");
        if (!env.empty()) return env;
        return fs::path(ckpt).parent_path() / "codes";
    }

    std::pair<std::shared_ptr<service::Engine>, fs::path> load() const {
        const auto ckpt = require_path(checkpoint, "ITSTYLER_CHECKPOINT", "checkpoint");
        auto engine = service::Engine::load(ckpt, vgg.empty() ? env_or("ITSTYLER_VGG") : vgg,
                                            clip.empty() ? env_or("ITSTYLER_CLIP") : clip);
        const auto store = store_dir(ckpt);
        service::import_code_store(*engine, store);
        return {engine, store};
    }
};

} // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> rest;
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw Error(Errc::InvalidConfig, "cannot read config " + config_path);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(Errc::InvalidConfig, config_path + " is not a JSON object");
    }

    std::set<std::string> given;
    for (const auto& a : rest) {
        if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos
                                                                                             : a.find('=') - 2));
    }
    std::size_t head = 0;
    while (head < rest.size() && head < 2 && !rest[head].empty() && rest[head][0] != '-') ++head;

    std::vector<std::string> injected;
    for (const auto& [key, value] : j.items()) {
        if (key == "subcommand" || key == "effective" || given.count(key) || value.is_null()) continue;
        const auto flag = "--" + key;
        if (value.is_boolean()) {
            if (value.get<bool>()) injected.push_back(flag);
        } else if (value.is_string()) {
            injected.push_back(flag);
            injected.push_back(value.get<std::string>());
        } else if (value.is_number()) {
            injected.push_back(flag);
            injected.push_back(value.dump());
        } else {
            throw Error(Errc::InvalidConfig, "config key '" + key + "' must be a string, number or boolean");
        }
    }
    std::vector<std::string> out(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(head));
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(head), rest.end());
    return out;
}

int parse_and_dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"itstyler: text- and image-guided arbitrary style transfer", "itstyler"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.add_option("--config", "JSON file of flag values (defaults < config < flags)");

    // train
    auto* train = app.add_subcommand("train", "Train mapper, decoder and discriminator");
    std::string t_content, t_style, t_out, t_vgg, t_clip, t_decoder_weights, t_resume, t_preset, t_decoder_init;
    std::optional<int64_t> t_iterations, t_batch, t_crop, t_resize, t_checkpoint_every, t_max_images;
    std::optional<double> t_lr, t_lsa, t_lc, t_ls, t_ladv;
    std::optional<uint64_t> t_seed;
    bool t_no_adv = false, t_squared = false, t_staged = false;
    train->add_option("--content", t_content, "Content image folder")->required()->check(CLI::ExistingDirectory);
    train->add_option("--style", t_style, "Style image folder")->required()->check(CLI::ExistingDirectory);
    train->add_option("--out", t_out, "Output directory")->required();
    train->add_option("--vgg", t_vgg, "VGG-19 weights (default: $ITSTYLER_VGG)");
    train->add_option("--clip", t_clip, "CLIP weights (default: $ITSTYLER_CLIP)");
    train->add_option("--decoder-weights", t_decoder_weights, "Pretrained AdaIN decoder for warm start");
    train->add_option("--resume", t_resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
    train->add_option("--preset", t_preset, "Named preset applied before other flags")
        ->check(CLI::IsMember({"smoke"}));
    train->add_option("--iterations", t_iterations);
    train->add_option("--batch", t_batch);
    train->add_option("--lr", t_lr);
    train->add_option("--crop", t_crop);
    train->add_option("--resize", t_resize, "Short side after loading");
    train->add_option("--checkpoint-every", t_checkpoint_every);
    train->add_option("--max-images", t_max_images, "Images per folder (0 = all)");
    train->add_option("--seed", t_seed);
    train->add_option("--decoder-init", t_decoder_init)->check(CLI::IsMember({"adain", "random"}));
    train->add_option("--lambda-sa", t_lsa);
    train->add_option("--lambda-c", t_lc);
    train->add_option("--lambda-s", t_ls);
    train->add_option("--lambda-adv", t_ladv);
    train->add_flag("--no-adv", t_no_adv, "Disable the adversarial loss");
    train->add_flag("--squared-norms", t_squared, "Mean squared error instead of L2 norms");
    train->add_flag("--stage-mapper-first", t_staged, "Mapper-only first half");

    // stylize
    auto* stylize = app.add_subcommand("stylize", "Stylize one image");
    std::string s_content, s_out;
    StyleFlags s_style;
    EngineFlags s_engine;
    stylize->add_option("--content", s_content, "Content image")->required()->check(CLI::ExistingFile);
    stylize->add_option("--out", s_out, "Output image")->required();
    s_style.add(stylize);
    s_engine.add(stylize);

    // video
    auto* video = app.add_subcommand("video", "Stylize a directory of frames with one style code");
    std::string v_frames, v_out;
    StyleFlags v_style;
    EngineFlags v_engine;
    video->add_option("--frames", v_frames, "Frame directory")->required()->check(CLI::ExistingDirectory);
    video->add_option("--out", v_out, "Output directory")->required();
    v_style.add(video);
    v_engine.add(video);

    // eval consistency
    auto* eval = app.add_subcommand("eval", "Evaluation reports");
    eval->require_subcommand(1);
    auto* consistency = eval->add_subcommand("consistency", "Adjacent-frame LPIPS of a stylized sequence");
    std::string e_frames, e_report, e_lpips, e_method, e_out_frames;
    bool e_identity = false;
    StyleFlags e_style;
    EngineFlags e_engine;
    consistency->add_option("--frames", e_frames, "Frame directory")->required()->check(CLI::ExistingDirectory);
    consistency->add_option("--report", e_report, "Report JSON path")->required();
    consistency->add_option("--lpips", e_lpips, "LPIPS archive (default: $ITSTYLER_LPIPS)");
    consistency->add_option("--method", e_method, "Label stored in the report");
    consistency->add_option("--out-frames", e_out_frames, "Also write stylized frames here");
    consistency->add_flag("--identity", e_identity, "Score the raw frames instead of stylizing");
    e_style.add(consistency);
    e_engine.add(consistency);

    // bench
    auto* bench = app.add_subcommand("bench", "Stylization speed benchmark");
    int64_t b_size = 256, b_runs = 40, b_warmups = evaluation::kWarmupRuns;
    std::string b_mode = "standard", b_report, b_content_dir;
    StyleFlags b_style;
    EngineFlags b_engine;
    bench->add_option("--size", b_size, "Square image side")->check(CLI::IsMember({256, 512}));
    bench->add_option("--runs", b_runs, "Timed runs")->check(CLI::PositiveNumber);
    bench->add_option("--warmups", b_warmups, "Untimed warm-up runs")->check(CLI::NonNegativeNumber);
    bench->add_option("--mode", b_mode)->check(CLI::IsMember({"standard", "fast"}));
    bench->add_option("--report", b_report, "Report JSON path")->required();
    bench->add_option("--content-dir", b_content_dir, "Benchmark images (default: procedural)")
        ->check(CLI::ExistingDirectory);
    b_style.add(bench);
    b_engine.add(bench);

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    int s_port = 8080;
    std::string s_host = "127.0.0.1", s_studio;
    EngineFlags sv_engine;
    serve->add_option("--port", s_port)->check(CLI::Range(0, 65535));
    serve->add_option("--host", s_host);
    serve->add_option("--studio", s_studio, "Static studio bundle served under /studio");
    sv_engine.add(serve);

    // export-code
    auto* exportc = app.add_subcommand("export-code", "Resolve a style source and store its code");
    std::string x_out;
    StyleFlags x_style;
    EngineFlags x_engine;
    exportc->add_option("--out", x_out, "Also write the code JSON here");
    x_style.add(exportc);
    x_engine.add(exportc);

    std::vector<std::string> args;
    try {
        args = expand_config(raw_args);
    } catch (const Error& e) {
        err << e.what() << '\n';
        return kExitUsage;
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());

    CLI::App* active = &app;
    std::string path;
    try {
        app.parse(reversed);
        active = app.get_subcommands().front();
        path = active->get_name();
        if (active == eval) {
            active = eval->get_subcommands().front();
            path += " " + active->get_name();
        }
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.back()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << "itstyler 0.1.0\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        CLI::App* shown = subs.empty() ? &app : subs.back();
        if (shown == eval && !eval->get_subcommands().empty()) shown = eval->get_subcommands().front();
        err << shown->help();
        return kExitUsage;
    }

    auto echo = resolved_config(active, path);

    try {
        if (active == train) {
            auto cfg = t_preset == "smoke" ? training::TrainConfig::smoke_preset() : training::TrainConfig{};
            cfg.content_dir = t_content;
            cfg.style_dir = t_style;
            cfg.out_dir = t_out;
            cfg.vgg_weights = require_path(t_vgg, "ITSTYLER_VGG", "VGG weights");
            cfg.clip_weights = require_path(t_clip, "ITSTYLER_CLIP", "CLIP weights");
            cfg.decoder_weights = t_decoder_weights;
            cfg.resume_from = t_resume;
            if (t_iterations) cfg.iterations = *t_iterations;
            if (t_batch) cfg.batch_size = *t_batch;
            if (t_lr) cfg.lr = *t_lr;
            if (t_crop) cfg.crop = *t_crop;
            if (t_resize) cfg.resize_short_side = *t_resize;
            if (t_checkpoint_every) cfg.checkpoint_every = *t_checkpoint_every;
            if (t_max_images) cfg.max_images = static_cast<std::size_t>(*t_max_images);
            if (t_seed) cfg.seed = *t_seed;
            if (!t_decoder_init.empty()) cfg.decoder_init = training::decoder_init_from_string(t_decoder_init);
            if (t_lsa) cfg.loss_weights.lambda_sa = *t_lsa;
            if (t_lc) cfg.loss_weights.lambda_c = *t_lc;
            if (t_ls) cfg.loss_weights.lambda_s = *t_ls;
            if (t_ladv) cfg.loss_weights.lambda_adv = *t_ladv;
            if (t_no_adv) cfg.use_adv = false;
            if (t_squared) cfg.squared_norms = true;
            if (t_staged) cfg.stage_mapper_first = true;
            try {
                cfg.validate();
            } catch (const Error& e) {
                throw UsageError(e.detail());
            }
            echo["effective"] = training::to_json(cfg);
            err << echo.dump() << '\n';
            const auto final_path = training::run_training(
                cfg, nullptr, [&](int64_t it, const losses::LossReport& r) {
                    if (it % 10 == 0 || it == cfg.iterations) {
                        err << "iter " << it << " total " << r.total << '\n';
                    }
                    return true;
                });
            out << final_path.string() << '\n';
            return kExitOk;
        }

        if (active == stylize) {
            const auto src = s_style.source();
            echo["checkpoint"] = require_path(s_engine.checkpoint, "ITSTYLER_CHECKPOINT", "checkpoint");
            err << echo.dump() << '\n';
            auto [engine, store] = s_engine.load();
            const auto result = engine->stylize(load_image(s_content), src);
            if (fs::path(s_out).has_parent_path()) fs::create_directories(fs::path(s_out).parent_path());
            save_image(result, s_out);
            return kExitOk;
        }

        if (active == video) {
            const auto src = v_style.source();
            echo["checkpoint"] = require_path(v_engine.checkpoint, "ITSTYLER_CHECKPOINT", "checkpoint");
            err << echo.dump() << '\n';
            auto [engine, store] = v_engine.load();
            const auto n = service::stylize_frame_directory(*engine, v_frames, v_out, src);
            err << n << " frames written to " << v_out << '\n';
            return kExitOk;
        }

        if (active == consistency) {
            const auto lpips_path = require_path(e_lpips, "ITSTYLER_LPIPS", "LPIPS weights");
            echo["lpips"] = lpips_path;
            const auto lpips = evaluation::load_lpips(lpips_path);
            evaluation::ConsistencyReport report;
            if (e_identity) {
                err << echo.dump() << '\n';
                report = evaluation::video_consistency(
                    e_frames, [](const std::vector<Image>& f) { return f; }, lpips,
                    e_method.empty() ? "input" : e_method);
            } else {
                const auto src = e_style.source();
                echo["checkpoint"] = require_path(e_engine.checkpoint, "ITSTYLER_CHECKPOINT", "checkpoint");
                err << echo.dump() << '\n';
                auto [engine, store] = e_engine.load();
                report = evaluation::video_consistency(
                    e_frames,
                    [&, eng = engine](const std::vector<Image>& frames) {
                        auto outs = eng->stylize_sequence(frames, src);
                        if (!e_out_frames.empty()) {
                            fs::create_directories(e_out_frames);
                            for (std::size_t i = 0; i < outs.size(); ++i) {
                                char name[32];
                                std::snprintf(name, sizeof name, "%05zu.png", i);
                                save_image(outs[i], fs::path(e_out_frames) / name);
                            }
                        }
                        return outs;
                    },
                    lpips, e_method.empty() ? "itstyler" : e_method);
            }
            write_json_file(e_report, evaluation::to_json(report));
            out << report.mean << '\n';
            return kExitOk;
        }

        if (active == bench) {
            auto src = service::StyleSource::from_text("oil painting");
            if (!b_style.text.empty() || !b_style.style_image.empty() || !b_style.code_id.empty()) {
                src = b_style.source();
            }
            echo["checkpoint"] = require_path(b_engine.checkpoint, "ITSTYLER_CHECKPOINT", "checkpoint");
            err << echo.dump() << '\n';
            auto [engine, store] = b_engine.load();
            std::vector<Image> contents;
            if (!b_content_dir.empty()) {
                for (const auto& p : service::list_frames(b_content_dir)) {
                    contents.push_back(center_crop(resize_short_side(load_image(p), b_size), b_size, b_size));
                }
            } else {
                for (int64_t i = 0; i < std::min<int64_t>(b_runs, 40); ++i) {
                    contents.push_back(synthetic::content_image(static_cast<uint64_t>(i), b_size, b_size));
                }
            }
            const auto report = evaluation::speed_benchmark(*engine, contents, src, b_runs,
                                                            evaluation::speed_mode_from_string(b_mode), b_warmups);
            write_json_file(b_report, evaluation::to_json(report));
            out << report.mean_seconds << '\n';
            return kExitOk;
        }

        if (active == serve) {
            echo["checkpoint"] = require_path(sv_engine.checkpoint, "ITSTYLER_CHECKPOINT", "checkpoint");
            err << echo.dump() << '\n';
            auto [engine, store] = sv_engine.load();
            service::HttpService http(engine, {s_host, s_port, s_studio});
            const auto port = http.bind();
            err << "listening on http://" << s_host << ":" << port << " (checkpoint " << engine->checkpoint_id()
                << ")" << std::endl;
            http.run();
            return kExitOk;
        }

        if (active == exportc) {
            const auto src = x_style.source();
            echo["checkpoint"] = require_path(x_engine.checkpoint, "ITSTYLER_CHECKPOINT", "checkpoint");
            err << echo.dump() << '\n';
            auto [engine, store] = x_engine.load();
            const auto resolved = engine->resolve(src);
            service::export_code(store, resolved.code_id, resolved.code);
            if (!x_out.empty()) {
                auto j = style::to_json(resolved.code);
                j["code_id"] = resolved.code_id;
                write_json_file(x_out, j);
            }
            out << resolved.code_id << '\n';
            return kExitOk;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << active->help();
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    err << app.help();
    return kExitUsage;
}

int parse_and_dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return parse_and_dispatch(args, std::cout, std::cerr);
}

} // namespace itstyler::cli
