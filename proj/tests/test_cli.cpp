#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "lrem/util.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd =
        std::string(LREM_BINARY_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("gen-data reruns are byte-identical") {
    const auto dir_a = scratch_dir("lrem_cli_a");
    const auto dir_b = scratch_dir("lrem_cli_b");
    const std::string flags =
        "gen-data --seed 3 --items 150 --queries-per-cat 4 --eval-per-cat 2 "
        "--out ";
    REQUIRE(run(flags + dir_a.string()) == 0);
    REQUIRE(run(flags + dir_b.string()) == 0);
    for (const char* name :
         {"corpus.jsonl", "triplets.jsonl", "rl_pairs.jsonl",
          "queries_eval.jsonl", "stats.json", "vocab.txt"}) {
        CAPTURE(name);
        CHECK(lrem::sha256_file((dir_a / name).string()) ==
              lrem::sha256_file((dir_b / name).string()));
    }
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("validation failures use exit code 1") {
    CHECK(run("verify --suite nosuchsuite") == 1);
    CHECK(run("train-cold --data /nonexistent-dir --out /tmp/x.ckpt") != 0);
    CHECK(run("gen-data") == 1);  // missing required --out
}

TEST_CASE("verify suites run from the command line") {
    CHECK(run("verify --suite rewards") == 0);
    CHECK(run("verify --suite losses") == 0);
}
