#include "itstyler/http_service.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdio>
#include <thread>

namespace itstyler::service {

namespace {

struct BadRequest : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    res.status = status;
    const nlohmann::json body = {{"error", {{"code", code}, {"message", message}}}};
    res.set_content(body.dump(), "application/json");
}

bool has_field(const httplib::Request& req, const std::string& key) { return req.has_file(key); }

std::string field(const httplib::Request& req, const std::string& key) { return req.get_file_value(key).content; }

Image image_field(const httplib::Request& req, const std::string& key) {
    if (!req.has_file(key)) {
        throw BadRequest("missing multipart part '" + key + "'");
    }
    return decode_image_bytes(req.get_file_value(key).content);
}

nlohmann::json code_json(const std::string& id, const style::LabeledStyleCode& code, bool with_values) {
    nlohmann::json j = {{"code_id", id}, {"source", code.source}, {"label", code.label}};
    if (with_values) {
        const auto full = style::to_json(code);
        j["sigma"] = full.at("sigma");
        j["mu"] = full.at("mu");
    }
    return j;
}

StyleSource style_from_form(const httplib::Request& req) {
    int given = 0;
    StyleSource src;
    if (has_field(req, "prompt")) {
        src = StyleSource::from_text(field(req, "prompt"));
        ++given;
    }
    if (has_field(req, "code_id")) {
        src = StyleSource::from_code(field(req, "code_id"));
        ++given;
    }
    for (const char* key : {"style", "style_image"}) {
        if (has_field(req, key)) {
            src = StyleSource::from_image(image_field(req, key));
            ++given;
        }
    }
    if (given != 1) {
        throw BadRequest("exactly one of prompt, code_id or style must be given");
    }
    return src;
}

StyleSource style_from_entry(const nlohmann::json& entry) {
    if (entry.contains("code_id") == entry.contains("prompt")) {
        throw BadRequest("each style entry needs exactly one of code_id or prompt");
    }
    if (entry.contains("code_id")) {
        return StyleSource::from_code(entry.at("code_id").get<std::string>());
    }
    return StyleSource::from_text(entry.at("prompt").get<std::string>());
}

void send_png(httplib::Response& res, const Image& image, double inference_ms, const std::string& code_id) {
    const auto png = encode_png(image);
    char ms[32];
    std::snprintf(ms, sizeof ms, "%.3f", inference_ms);
    res.set_header("X-Inference-Ms", ms);
    if (!code_id.empty()) {
        res.set_header("X-Code-Id", code_id);
    }
    res.set_content(std::string(png.begin(), png.end()), "image/png");
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

int http_status(Errc code) {
    switch (code) {
    case Errc::UnknownCodeId: return 404;
    case Errc::UndecodableImage: return 400;
    case Errc::WeightsNotNormalized:
    case Errc::TooManyStyles:
    case Errc::EmptyPrompt:
    case Errc::PromptTooLong:
    case Errc::ImageTooSmall:
    case Errc::DimensionMismatch:
    case Errc::InconsistentFrameSize:
    case Errc::InvalidConfig: return 422;
    default: return 500;
    }
}

struct HttpService::Impl {
    std::shared_ptr<Engine> engine;
    ServeOptions options;
    httplib::Server server;
    std::thread thread;
    int port = -1;

    template <typename F>
    httplib::Server::Handler guarded(F f) {
        return [f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                send_error(res, http_status(e.code()), errc_name(e.code()), e.detail());
            } catch (const BadRequest& e) {
                send_error(res, 400, "BadRequest", e.what());
            } catch (const nlohmann::json::exception& e) {
                send_error(res, 400, "BadRequest", e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, "Internal", e.what());
            }
        };
    }

    void routes() {
        server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
                       const nlohmann::json body = {{"status", "ok"}, {"checkpoint", engine->checkpoint_id()}};
                       res.set_content(body.dump(), "application/json");
                   }));

        server.Post("/style-code", guarded([this](const httplib::Request& req, httplib::Response& res) {
                        StyleSource src;
                        if (req.is_multipart_form_data()) {
                            const auto kind = has_field(req, "kind") ? field(req, "kind") : std::string("text");
                            if (kind == "text") {
                                if (!has_field(req, "prompt")) throw BadRequest("kind=text needs 'prompt'");
                                src = StyleSource::from_text(field(req, "prompt"));
                            } else if (kind == "image") {
                                src = StyleSource::from_image(image_field(req, "image"));
                            } else {
                                throw BadRequest("kind must be 'text' or 'image'");
                            }
                        } else {
                            const auto body = nlohmann::json::parse(req.body);
                            const auto kind = body.value("kind", std::string("text"));
                            if (kind != "text") {
                                throw BadRequest("JSON bodies support kind=text; send images as multipart");
                            }
                            if (!body.contains("prompt")) throw BadRequest("kind=text needs 'prompt'");
                            src = StyleSource::from_text(body.at("prompt").get<std::string>());
                        }
                        const auto resolved = engine->resolve(src);
                        auto j = code_json(resolved.code_id, resolved.code, true);
                        j["cached"] = resolved.cache_hit;
                        res.set_content(j.dump(), "application/json");
                    }));

        server.Post("/stylize", guarded([this](const httplib::Request& req, httplib::Response& res) {
                        if (!req.is_multipart_form_data()) throw BadRequest("expected multipart/form-data");
                        const auto content = image_field(req, "content");
                        const auto src = style_from_form(req);
                        const auto start = std::chrono::steady_clock::now();
                        const auto resolved = engine->resolve(src);
                        const auto out = engine->stylize_with_code(content, resolved.code.code);
                        send_png(res, out, elapsed_ms(start), resolved.code_id);
                    }));

        server.Post("/interpolate", guarded([this](const httplib::Request& req, httplib::Response& res) {
                        if (!req.is_multipart_form_data()) throw BadRequest("expected multipart/form-data");
                        const auto content = image_field(req, "content");
                        if (!has_field(req, "styles")) throw BadRequest("missing multipart part 'styles'");
                        const auto styles = nlohmann::json::parse(field(req, "styles"));
                        if (!styles.is_array()) throw BadRequest("'styles' must be a JSON array");
                        std::vector<StyleSource> sources;
                        std::vector<double> weights;
                        for (const auto& entry : styles) {
                            sources.push_back(style_from_entry(entry));
                            weights.push_back(entry.at("weight").get<double>());
                        }
                        style::validate_weights(weights);
                        const auto start = std::chrono::steady_clock::now();
                        const auto out = engine->stylize_interpolated(content, sources, weights);
                        send_png(res, out, elapsed_ms(start), "");
                    }));

        server.Get("/codes", guarded([this](const httplib::Request&, httplib::Response& res) {
                       nlohmann::json codes = nlohmann::json::array();
                       for (const auto& e : engine->cache().entries()) {
                           codes.push_back(code_json(e.code_id, e.code, false));
                       }
                       const nlohmann::json body = {{"checkpoint", engine->checkpoint_id()}, {"codes", codes}};
                       res.set_content(body.dump(), "application/json");
                   }));

        server.Get(R"(/codes/([0-9A-Za-z_\-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const auto id = req.matches[1].str();
                       const auto resolved = engine->resolve(StyleSource::from_code(id));
                       res.set_content(code_json(id, resolved.code, true).dump(), "application/json");
                   }));

        if (!options.studio_dir.empty() && std::filesystem::is_directory(options.studio_dir)) {
            server.set_mount_point("/studio", options.studio_dir.string());
        }
    }
};

HttpService::HttpService(std::shared_ptr<Engine> engine, ServeOptions options) : impl_(std::make_unique<Impl>()) {
    impl_->engine = std::move(engine);
    impl_->options = std::move(options);
    impl_->server.set_payload_max_length(256u << 20);
    impl_->routes();
}

HttpService::~HttpService() { stop(); }

int HttpService::bind() {
    if (impl_->port >= 0) return impl_->port;
    const auto& o = impl_->options;
    if (o.port == 0) {
        impl_->port = impl_->server.bind_to_any_port(o.host);
    } else if (impl_->server.bind_to_port(o.host, o.port)) {
        impl_->port = o.port;
    }
    if (impl_->port < 0) {
        throw Error(Errc::Io, "cannot bind " + o.host + ":" + std::to_string(o.port));
    }
    return impl_->port;
}

void HttpService::run() {
    bind();
    impl_->server.listen_after_bind();
}

int HttpService::start() {
    const auto p = bind();
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return p;
}

void HttpService::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

int HttpService::port() const { return impl_->port; }

} // namespace itstyler::service
