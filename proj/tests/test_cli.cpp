#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(CONVEXDP_CLI) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    Run r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string data(const std::string& name) { return std::string(CONVEXDP_DATA) + "/" + name; }

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "convexdp_cli_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

nlohmann::json structured(const std::string& args) {
    auto r = run(args + " --format structured");
    INFO(r.out);
    REQUIRE(r.code == 0);
    return nlohmann::json::parse(r.out);
}

}  // namespace

TEST_CASE("tracking solve") {
    auto j = structured("solve -i " + data("tracking.json"));
    CHECK(j["schema"] == 1);
    CHECK(j["value"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(j["policy"][0]["node"] == "r");
    CHECK(j["policy"][0]["x"][0].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("csv columns") {
    auto r = run("solve -i " + data("tracking.json") + " --format csv");
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("node_id,stage,x_0,residual\n", 0) == 0);
    CHECK(r.out.find("\nr,0,1,0\n") != std::string::npos);
}

TEST_CASE("oracle agrees on generated instances") {
    for (std::string kind : {"lagrange", "control", "rewards", "stage"}) {
        for (int seed : {1, 2, 3}) {
            auto path = scratch(kind + std::to_string(seed) + ".json");
            auto g = run("gen --kind " + kind + " --seed " + std::to_string(seed) + " --horizon 2 --branching 2 --dim 2 -o " + path.string());
            INFO(kind, " ", seed, " ", g.out);
            REQUIRE(g.code == 0);
            auto j = structured("oracle -i " + path.string());
            CHECK(std::fabs(j["compare"]["delta"].get<double>()) <= 1e-8);
        }
    }
}

TEST_CASE("gen is deterministic") {
    auto a = run("gen --kind control --seed 7 --horizon 2 --branching 3");
    auto b = run("gen --kind control --seed 7 --horizon 2 --branching 3");
    auto c = run("gen --kind control --seed 8 --horizon 2 --branching 3");
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out != c.out);
}

TEST_CASE("documents round-trip through gen") {
    auto path = scratch("rt.json");
    REQUIRE(run("gen --kind lagrange --seed 4 -o " + path.string()).code == 0);
    auto first = structured("lagrange -i " + path.string());
    std::ifstream in(path);
    auto doc = nlohmann::json::parse(in);
    auto path2 = scratch("rt2.json");
    std::ofstream(path2) << doc.dump(1);
    auto second = structured("lagrange -i " + path2.string());
    CHECK(first["value"] == second["value"]);
}

TEST_CASE("bad probability mass is a validation error naming the node") {
    auto path = scratch("badmass.json");
    std::ofstream(path) << R"({"schema": 1, "kind": "stage", "mode": "additive", "dims": [1, 0],
      "nodes": [{"id": "r", "parent": null, "stage": 0, "prob": 1},
                {"id": "kid_a", "parent": "r", "stage": 1, "prob": 0.5},
                {"id": "kid_b", "parent": "r", "stage": 1, "prob": 0.3}]})";
    auto r = run("solve -i " + path.string());
    CHECK(r.code == 2);
    CHECK(r.out.find("error:") != std::string::npos);
    CHECK(r.out.find("ProbabilityMass at node 'r'") != std::string::npos);
}

TEST_CASE("unknown option exits 2") { CHECK(run("solve --bogus").code == 2); }

TEST_CASE("arbitrage is reported then refused") {
    auto r = run("hedge -i " + data("always_up.json") + " --format structured");
    CHECK(r.code == 3);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j["no_arbitrage"] == false);
    CHECK(j.contains("arbitrage_direction"));
    CHECK(j.contains("refused"));
}

TEST_CASE("hand LQ instance") {
    auto j = structured("control -i " + data("hand_lq.json"));
    CHECK(j["value"].get<double>() == doctest::Approx(0.75).epsilon(1e-10));
}
