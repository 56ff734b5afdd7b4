#pragma once

#include "itstyler/error.hpp"
#include "itstyler/service.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace itstyler::service {

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080; ///< 0 picks a free port
    /// Static bundle mounted under /studio when the directory exists.
    std::filesystem::path studio_dir;
};

/// HTTP front end over one Engine.
///
///     GET  /health        {"status":"ok","checkpoint":ID}
///     POST /style-code    JSON {"kind":"text","prompt":S} or multipart kind/prompt/image
///                         -> {"code_id","sigma":[512],"mu":[512],"source","label","cached"}
///     POST /stylize       multipart content + one of prompt | code_id | style -> image/png
///     POST /interpolate   multipart content + styles=[{"code_id"|"prompt", "weight"}] -> image/png
///     GET  /codes         {"checkpoint":ID,"codes":[{"code_id","source","label"}]}
///     GET  /codes/ID      one stored code with sigma and mu
///
/// PNG responses carry X-Inference-Ms. Errors are {"error":{"code","message"}}.
class HttpService {
public:
    HttpService(std::shared_ptr<Engine> engine, ServeOptions options);
    ~HttpService();
    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    /// Binds the socket and returns the port. Throws Error(Io) on failure.
    int bind();
    /// Blocks serving requests until stop().
    void run();
    /// bind() + run() on a background thread.
    int start();
    void stop();
    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// HTTP status for a library error code.
int http_status(Errc code);

} // namespace itstyler::service
