#include "doctest.h"

#include "hypertrain/config.hpp"
#include "hypertrain/errors.hpp"

#include <filesystem>
#include <fstream>
#include <string>

using namespace hypertrain;

namespace {

std::string message_of(const auto& fn)
{
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("sections prefix keys and comments are dropped")
{
    const Config c = Config::parse("seed = 3   # run seed\n\n[optim]\nalpha = 1e-4\n[]\ntop = x\n");
    CHECK(c.get_u64("seed", 0) == 3);
    CHECK(c.get_double("optim.alpha", 0.0) == 1e-4);
    CHECK(c.get_string("top", "") == "x");
    CHECK(c.get_string("missing", "fallback") == "fallback");
    CHECK(c.unused().empty());
}

TEST_CASE("typed getters reject malformed values with the location")
{
    const Config c = Config::parse("a = 1.5x\nb = -3\nc = maybe\nd = 1, 2 ,3\ne = nan\nf =\n", "run.cfg");
    CHECK(message_of([&] { c.get_double("a", 0); }).find("run.cfg:1") != std::string::npos);
    CHECK_THROWS_AS(c.get_size("b", 0), ConfigError);
    CHECK_THROWS_AS(c.get_bool("c", false), ConfigError);
    CHECK(c.get_sizes("d", {}) == std::vector<std::size_t>{1, 2, 3});
    CHECK_THROWS_AS(c.get_double("e", 0), ConfigError);
    CHECK(c.get_sizes("f", {7}).empty());
}

TEST_CASE("booleans")
{
    const Config c = Config::parse("a = true\nb = 0\nc = yes\n");
    CHECK(c.get_bool("a", false));
    CHECK_FALSE(c.get_bool("b", true));
    CHECK(c.get_bool("c", false));
}

TEST_CASE("malformed text")
{
    CHECK_THROWS_AS(Config::parse("novalue\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("[open\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("bad key = 1\n"), ConfigError);
    const std::string dup = message_of([] { Config::parse("[m]\nx = 1\n[]\nm.x = 2\n", "f"); });
    CHECK(dup.find("f:2") != std::string::npos);
    CHECK(dup.find("f:4") != std::string::npos);
}

TEST_CASE("unused keys are reported")
{
    const Config c = Config::parse("seed = 1\ntypo = 2\n", "f");
    c.get_u64("seed", 0);
    CHECK(c.unused() == std::vector<std::string>{"typo"});
    CHECK(message_of([&] { c.reject_unused(); }).find("typo (f:2)") != std::string::npos);
}

TEST_CASE("overrides replace values")
{
    Config c = Config::parse("seed = 1\n");
    c.set("seed", "9");
    CHECK(c.get_u64("seed", 0) == 9);
    CHECK_THROWS_AS(c.set("not a key", "1"), ConfigError);
}

TEST_CASE("relative paths resolve against the file's directory")
{
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "hypertrain_config_test";
    fs::create_directories(dir / "cfg");
    const fs::path file = dir / "cfg" / "a.cfg";
    std::ofstream(file) << "images = ../data/x.idx\nabs = /tmp/y\n";
    const Config c = Config::load(file.string());
    CHECK(c.resolve_path(c.get_string("images", "")) == (dir / "data" / "x.idx").string());
    CHECK(c.resolve_path(c.get_string("abs", "")) == "/tmp/y");
    CHECK_THROWS_AS(Config::load((dir / "missing.cfg").string()), ConfigError);
    fs::remove_all(dir);
}
