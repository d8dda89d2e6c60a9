#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using knnlab::cli::kExitFailure;
using knnlab::cli::kExitOk;
using knnlab::cli::kExitUsage;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome call(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = knnlab::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string temp_file(const std::string& name) {
    return (fs::temp_directory_path() / ("knnlab_cli_" + name)).string();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(call({}).code == kExitUsage);
    CHECK(call({"frobnicate"}).code == kExitUsage);
    const auto bad_flag = call({"simulate", "--no-such-flag"});
    CHECK(bad_flag.code == kExitUsage);
    CHECK(bad_flag.err.find("error") != std::string::npos);
    CHECK(call({"simulate", "--k", "3", "--k-min", "2", "--k-max", "4"}).code == kExitUsage);
    CHECK(call({"simulate", "--k-min", "2"}).code == kExitUsage);
    CHECK(call({"simulate", "--format", "xml"}).code == kExitUsage);
    CHECK(call({"simulate", "--mode", "sideways"}).code == kExitUsage);
    CHECK(call({"report"}).code == kExitUsage);
}

TEST_CASE("help exits with 0") {
    const auto h = call({"--help"});
    CHECK(h.code == kExitOk);
    CHECK(h.out.find("simulate") != std::string::npos);
    CHECK(call({"constants", "--help"}).code == kExitOk);
}

TEST_CASE("runtime errors exit with 1") {
    CHECK(call({"constants", "--lambda", "3"}).code == kExitFailure);
    CHECK(call({"simulate", "--n", "0.5", "--trials", "1"}).code == kExitFailure);
    CHECK(call({"report", temp_file("does_not_exist.jsonl")}).code == kExitFailure);
    CHECK(call({"simulate", "--n", "500", "--k", "2", "--k-min", "1"}).code == kExitUsage);
}

TEST_CASE("constants prints the bundle and the guard verdict") {
    const auto r = call({"constants", "--lambda", "7.38905609893065", "--n", "1e4"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("M        1280") != std::string::npos);
    CHECK(r.out.find("guard check: PASS") != std::string::npos);
    const auto s = call({"constants", "--scaled", "--n", "1e4"});
    CHECK(s.code == kExitOk);
    CHECK(s.out.find("scaled   yes") != std::string::npos);
    const auto forced = call({"constants", "--scaled", "--scaled-n-tiles", "8"});
    CHECK(forced.code == kExitOk);
    CHECK(forced.err.find("warning") != std::string::npos);
}

TEST_CASE("simulate is deterministic and writes a record file") {
    const auto path = temp_file("sim.jsonl");
    const std::vector<std::string> args{"simulate", "--n",    "1000", "--k-min", "2",     "--k-max",
                                        "4",        "--trials", "12", "--seed",  "7",     "--grid-samples",
                                        "8",        "--out",  path};
    const auto a = call(args);
    REQUIRE(a.code == kExitOk);
    CHECK(a.out.find("\"type\":\"summary\"") != std::string::npos);
    CHECK(lines(a.out) == 1);
    const auto b = call(args);
    CHECK(a.out == b.out);

    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    CHECK(first.find("\"type\":\"config\"") != std::string::npos);

    const auto rep = call({"report", path});
    CHECK(rep.code == kExitOk);
    CHECK(rep.out.rfind("k,p_connected,ci_lo,ci_hi,mean_small_components,tv_vs_poisson\n", 0) == 0);
    CHECK(lines(rep.out) == 4);
    const auto summary = call({"report", "--in", path, "--format", "jsonl"});
    CHECK(summary.out == a.out);
    fs::remove(path);
}

TEST_CASE("sweep-k emits one CSV row per k") {
    const auto r = call({"sweep-k", "--n", "800", "--k-min", "1", "--k-max", "6", "--trials", "5", "--grid-samples", "0"});
    CHECK(r.code == kExitOk);
    CHECK(lines(r.out) == 7);
}

TEST_CASE("out-of-range k warns but runs") {
    const auto r = call({"sweep-k", "--n", "800", "--k", "30", "--trials", "2", "--grid-samples", "0"});
    CHECK(r.code == kExitOk);
    CHECK(r.err.find("warning") != std::string::npos);
}

TEST_CASE("local-events reports tallies") {
    const auto r = call({"local-events", "--k", "3", "--trials", "10", "--certificate-batches", "2"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.rfind("k,trials,a_k,b_k,bad_C,b_k_without_C,", 0) == 0);
    CHECK(lines(r.out) == 2);
}

TEST_CASE("verify-poisson prints a text report") {
    const auto r = call({"verify-poisson", "--n", "1e4", "--k", "5", "--trials", "6", "--grid-samples", "12"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("b1") != std::string::npos);
    CHECK(r.out.find("|Gamma|               121") != std::string::npos);
}

TEST_CASE("claims-check passes") {
    const auto r = call({"claims-check", "--samples", "2000", "--scaled"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("claims check: PASS") != std::string::npos);
}
