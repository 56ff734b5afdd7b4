#include "itstyler/cli.hpp"
#include "itstyler/error.hpp"

#include "support/test_support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace itstyler;
using namespace itstyler::testing;
namespace cli = itstyler::cli;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;

    nlohmann::json echo() const {
        std::istringstream in(err);
        for (std::string line; std::getline(in, line);)
            if (!line.empty() && line.front() == '{') return nlohmann::json::parse(line);
        return nullptr;
    }
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::parse_and_dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

// A 2-iteration model trained through the CLI, shared by the inference tests.
struct Trained {
    TempDir dir{"cli-model"};
    std::string checkpoint;
    Trained() {
        synthetic::write_dataset(dir / "content", false, 3, 64, 72, 1);
        synthetic::write_dataset(dir / "style", true, 3, 64, 72, 2);
        const auto& bb = synthetic_backbones();
        const auto r = run({"train", "--content", (dir / "content").string(), "--style", (dir / "style").string(),
                            "--out", (dir / "run").string(), "--vgg", bb.vgg.string(), "--clip", bb.clip.string(),
                            "--preset", "smoke", "--iterations", "2", "--batch", "1", "--resize", "64"});
        REQUIRE(r.code == cli::kExitOk);
        checkpoint = first_line(r.out);
    }
};

const Trained& trained() {
    static const Trained t;
    return t;
}

} // namespace

TEST_CASE("help and usage errors") {
    const auto help = run({"--help"});
    CHECK(help.code == cli::kExitOk);
    CHECK(help.out.find("stylize") != std::string::npos);
    const auto sub_help = run({"bench", "--help"});
    CHECK(sub_help.code == cli::kExitOk);
    CHECK(sub_help.out.find("--mode") != std::string::npos);
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"paint"}).code == cli::kExitUsage);
    const auto bad = run({"bench", "--report", "r.json", "--size", "300"});
    CHECK(bad.code == cli::kExitUsage);
    CHECK(bad.err.find("--size") != std::string::npos);
}

TEST_CASE("style flags are mutually exclusive and required") {
    TempDir dir("cli-style");
    save_image(Image::zeros(32, 32), dir / "c.png");
    const auto both = run({"stylize", "--content", (dir / "c.png").string(), "--out", (dir / "o.png").string(),
                           "--text", "fire", "--code-id", "abc"});
    CHECK(both.code == cli::kExitUsage);
    const auto none = run({"stylize", "--content", (dir / "c.png").string(), "--out", (dir / "o.png").string()});
    CHECK(none.code == cli::kExitUsage);
}

TEST_CASE("missing checkpoint is a usage error") {
    TempDir dir("cli-ckpt");
    save_image(Image::zeros(32, 32), dir / "c.png");
    const auto r = run({"stylize", "--content", (dir / "c.png").string(), "--out", (dir / "o.png").string(), "--text",
                        "fire", "--checkpoint", (dir / "absent.nta").string()});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("checkpoint") != std::string::npos);
}

TEST_CASE("config files sit between defaults and flags") {
    TempDir dir("cli-config");
    std::ofstream(dir / "c.json") << R"({"runs": 7, "mode": "fast", "identity": true, "no-adv": false})";
    const auto expanded = cli::expand_config({"bench", "--config", (dir / "c.json").string(), "--runs", "3"});
    const std::vector<std::string> expected{"bench", "--identity", "--mode", "fast", "--runs", "3"};
    CHECK(expanded == expected);
    const auto sub = cli::expand_config({"eval", "consistency", "--config=" + (dir / "c.json").string()});
    CHECK(sub[0] == "eval");
    CHECK(sub[1] == "consistency");
    CHECK(std::find(sub.begin(), sub.end(), "7") != sub.end());
    CHECK(cli::expand_config({"bench", "--runs", "2"}) == std::vector<std::string>{"bench", "--runs", "2"});

    std::ofstream(dir / "nested.json") << R"({"runs": [1, 2]})";
    CHECK(thrown_code([&] { cli::expand_config({"bench", "--config", (dir / "nested.json").string()}); }) ==
          Errc::InvalidConfig);
    CHECK(run({"bench", "--config", (dir / "absent.json").string()}).code == cli::kExitUsage);
}

TEST_CASE("train echoes the resolved configuration and writes checkpoints") {
    const auto& t = trained();
    CHECK(std::filesystem::exists(t.checkpoint));
    CHECK(std::filesystem::exists(std::filesystem::path(t.checkpoint).parent_path() / "losses.jsonl"));
}

TEST_CASE("train rejects invalid settings with a usage error") {
    const auto& t = trained();
    const auto& bb = synthetic_backbones();
    const auto r = run({"train", "--content", (t.dir / "content").string(), "--style", (t.dir / "style").string(),
                        "--out", (t.dir / "bad").string(), "--vgg", bb.vgg.string(), "--clip", bb.clip.string(),
                        "--preset", "smoke", "--crop", "60"});
    CHECK(r.code == cli::kExitUsage);
    const auto echo_run = run({"train", "--content", (t.dir / "content").string(), "--style",
                               (t.dir / "style").string(), "--out", (t.dir / "bad").string(), "--vgg", bb.vgg.string(),
                               "--clip", bb.clip.string(), "--preset", "smoke", "--lr", "0"});
    CHECK(echo_run.code == cli::kExitUsage);
}

TEST_CASE("stylize, export-code and stored codes") {
    const auto& t = trained();
    TempDir dir("cli-infer");
    save_image(synthetic::content_image(1, 40, 48), dir / "c.png");
    const auto r = run({"stylize", "--checkpoint", t.checkpoint, "--content", (dir / "c.png").string(), "--out",
                        (dir / "o.png").string(), "--text", "fire"});
    REQUIRE(r.code == cli::kExitOk);
    const auto echo = r.echo();
    CHECK(echo["subcommand"] == "stylize");
    CHECK(echo["text"] == "fire");
    CHECK(echo["checkpoint"] == t.checkpoint);
    const auto out = load_image(dir / "o.png");
    CHECK(out.height() == 40);
    CHECK(out.width() == 48);

    const auto store = (dir / "codes").string();
    const auto x = run({"export-code", "--checkpoint", t.checkpoint, "--code-store", store, "--text", "ice water",
                        "--out", (dir / "code.json").string()});
    REQUIRE(x.code == cli::kExitOk);
    const auto id = first_line(x.out);
    CHECK(id.size() == 16);
    CHECK(std::filesystem::exists(dir / "codes" / (id + ".json")));
    std::ifstream in(dir / "code.json");
    CHECK(nlohmann::json::parse(in)["code_id"] == id);

    const auto by_id = run({"stylize", "--checkpoint", t.checkpoint, "--code-store", store, "--content",
                            (dir / "c.png").string(), "--out", (dir / "o2.png").string(), "--code-id", id});
    CHECK(by_id.code == cli::kExitOk);
    const auto missing = run({"stylize", "--checkpoint", t.checkpoint, "--code-store", store, "--content",
                              (dir / "c.png").string(), "--out", (dir / "o3.png").string(), "--code-id",
                              "0000000000000000"});
    CHECK(missing.code == cli::kExitRuntime);
    CHECK(missing.err.find("UnknownCodeId") != std::string::npos);
}

TEST_CASE("video, consistency report and bench") {
    const auto& t = trained();
    TempDir dir("cli-video");
    synthetic::write_frames(dir / "frames", 3, 32, 32, 0);
    const auto v = run({"video", "--checkpoint", t.checkpoint, "--frames", (dir / "frames").string(), "--out",
                        (dir / "styled").string(), "--text", "flame"});
    REQUIRE(v.code == cli::kExitOk);
    CHECK(std::filesystem::exists(dir / "styled" / "00002.png"));

    const auto lpips = synthetic_backbones().lpips.string();
    const auto ident = run({"eval", "consistency", "--frames", (dir / "frames").string(), "--lpips", lpips,
                            "--identity", "--report", (dir / "ident.json").string()});
    REQUIRE(ident.code == cli::kExitOk);
    CHECK(ident.echo()["subcommand"] == "eval consistency");
    CHECK(ident.echo()["identity"] == true);

    const auto styled = run({"eval", "consistency", "--checkpoint", t.checkpoint, "--frames",
                             (dir / "frames").string(), "--lpips", lpips, "--text", "flame", "--report",
                             (dir / "styled.json").string(), "--out-frames", (dir / "ef").string()});
    REQUIRE(styled.code == cli::kExitOk);
    std::ifstream in(dir / "styled.json");
    const auto report = nlohmann::json::parse(in);
    CHECK(report["frame_count"] == 3);
    CHECK(report["distances"].size() == 2);
    CHECK(std::filesystem::exists(dir / "ef" / "00002.png"));

    const auto b = run({"bench", "--checkpoint", t.checkpoint, "--size", "256", "--runs", "1", "--warmups", "0",
                        "--mode", "fast", "--report", (dir / "bench.json").string()});
    REQUIRE(b.code == cli::kExitOk);
    CHECK(b.echo()["runs"] == 1);
    std::ifstream bin(dir / "bench.json");
    const auto bench = nlohmann::json::parse(bin);
    CHECK(bench["size"] == 256);
    CHECK(bench["mode"] == "fast");
}
