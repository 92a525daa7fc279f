#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mwdha/cli.hpp"

using namespace mwdha;

namespace {

json strip_time(json r) {
    r.erase("wall_time_s");
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("haar coefficients round trip through json") {
    for (int d : {1, 2}) {
        Lattice lat = build_lattice_random(d, 4, 9);
        HaarCoefficients c = haar_random_sequence(lat, 2, 5, 3);
        HaarCoefficients back = haar_from_json(json::parse(to_json(c).dump()));
        CHECK(back.lattice == c.lattice);
        CHECK(back.m == c.m);
        CHECK(back.mean == c.mean);
        CHECK(back.detail == c.detail);
    }
}

TEST_CASE("matrices, cubes and lattices round trip") {
    Mat a{{1.5, -2}, {0.25, 3}};
    Mat b = mat_from_json(json::parse(to_json(a).dump()));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(a(i, j) == b(i, j));
    Cube q{3, {5, 2, 0}};
    CHECK(cube_from_json(to_json(q, 2)) == q);
    Lattice lat = build_lattice_random(2, 5, 4, {0.5, -1, 0}, 2.0);
    CHECK(lattice_from_json(to_json(lat)) == lat);
}

TEST_CASE("packing csv") {
    StoppingTree t;
    t.d = 1;
    t.generations = {{StopCube{Cube{0, {0, 0, 0}}, "", -1}},
                     {StopCube{Cube{1, {0, 0, 0}}, "v_ratio", 0}, StopCube{Cube{2, {3, 0, 0}}, "v_ratio", 0}}};
    CHECK(packing_csv(t) == "j,packing,bound,cubes\n0,1,1,1\n1,0.75,0.5,2\n");
}

TEST_CASE("config resolution") {
    json c = resolve_config({{"p", 3}, {"level", 6.0}});
    CHECK(c["p"].get<double>() == 3.0);
    CHECK(c["level"].is_number_integer());
    CHECK(c.size() == default_config().size());
    CHECK_THROWS_WITH_AS(resolve_config({{"nope", 1}}), "config.nope: unknown key", ValidationError);
    CHECK_THROWS_WITH_AS(resolve_config({{"weight", 2}}), "config.weight: expected string, got number",
                         ValidationError);
    CHECK_THROWS_AS(resolve_config({{"level", 6.5}}), ValidationError);
    CHECK_THROWS_AS(run("bogus", json::object()), ValidationError);
    CHECK_THROWS_WITH_AS(run("ap-char", {{"p", 1.0}}), "config.p: must be a finite number > 1", ValidationError);
    CHECK_THROWS_AS(run("t1", {{"weight", "identity:1"}, {"matrix", "id:2"}}), ValidationError);
    CHECK_THROWS_AS(run("bmo", {{"symbol", "file:/nonexistent.json"}}), ValidationError);
}

TEST_CASE("ap-char report is finite and echoes its config") {
    json r = run("ap-char", {{"weight", "power1d:0.5,-0.5"}, {"level", 10}});
    CHECK(r["schema"] == 1);
    CHECK(r["config"]["weight"] == "power1d:0.5,-0.5");
    CHECK(r["config"].size() == default_config().size());
    CHECK(r["results"]["ap"]["value"].is_number());
    CHECK(std::isfinite(r["results"]["ap"]["value"].get<double>()));
    CHECK(advisory_exit_code(r) == 0);
}

TEST_CASE("reports are deterministic and survive serialization") {
    for (const std::string s : subcommands()) {
        if (s == "counterexample") continue;
        json cfg = {{"weight", "powermix:2,4"}, {"level", 5}, {"shifts", 1}, {"seed", 3}};
        json a = run(s, cfg), b = run(s, cfg);
        CHECK_MESSAGE(strip_time(a).dump() == strip_time(b).dump(), s);
        CHECK(json::parse(a.dump()) == a);
    }
}

TEST_CASE("outputs are written atomically and logged") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "mwdha_cli_test";
    fs::remove_all(dir);
    json cfg = {{"weight", "powermix:2,1"}, {"level", 5}, {"out", (dir / "r.json").string()},
                {"run-log", (dir / "log.jsonl").string()}, {"csv", (dir / "p.csv").string()}};
    fs::create_directories(dir);
    json r = run("stopping-packing", cfg);
    CHECK(emit_report(r) == 0);
    CHECK(emit_report(r) == 0);
    CHECK(json::parse(slurp((dir / "r.json").string())) == r);
    CHECK(!fs::exists(dir / "r.json.tmp"));
    std::ifstream log(dir / "log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        ++lines;
        CHECK(json::parse(line) == r);
    }
    CHECK(lines == 2);
    CHECK(slurp((dir / "p.csv").string()).rfind("j,packing,bound,cubes\n0,1,1,1\n", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("failing advisory flag gives exit code 2") {
    json r = {{"advisory", {{"a", true}, {"b", false}}}};
    CHECK(advisory_exit_code(r) == 2);
    r["advisory"]["b"] = true;
    CHECK(advisory_exit_code(r) == 0);
}

TEST_CASE("symbols from file and constants") {
    namespace fs = std::filesystem;
    fs::path f = fs::temp_directory_path() / "mwdha_symbol.json";
    std::vector<double> v(32 * 4);
    for (size_t i = 0; i < v.size(); ++i) v[i] = (i % 4 == 0 || i % 4 == 3) ? 2.0 : 0.0;
    std::ofstream(f) << json{{"n", 2}, {"values", v}}.dump();
    // a constant symbol has vanishing BMO in every form
    for (const std::string& sym : std::vector<std::string>{"const:2,0;0,2", "file:" + f.string()}) {
        json r = run("bmo", {{"symbol", sym}, {"level", 5}, {"shifts", 1}});
        for (auto& [k, x] : r["results"]["max_over_lattices"].items())
            if (k != "trace_ratio") CHECK_MESSAGE(x.get<double>() < 1e-12, k);
    }
    fs::remove(f);
}
