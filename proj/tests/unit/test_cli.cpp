#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "cfdgcn/data.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cfdgcn::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// metrics.csv with the wall_seconds column blanked.
std::string metrics_without_time(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line, out;
    while (std::getline(in, line)) {
        std::vector<std::string> cols;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
        if (cols.size() >= 5) cols[4] = "-";
        for (const auto& c : cols) out += c + ",";
        out += "\n";
    }
    return out;
}

/// Ground truth for the tiny mesh pair under a fresh dataset root.
fs::path tiny_dataset(const std::string& name) {
    const auto root = testing::temp_dir(name);
    const auto r = cli({"gen-data", "--mesh-id", "tiny", "--split", "generalization", "--data-root", root.string()});
    REQUIRE(r.code == 0);
    return root;
}

}  // namespace

TEST_CASE("usage errors") {
    CHECK(cli({}).code == 1);
    CHECK(cli({"no-such-command"}).code == 1);
    CHECK(cli({"mesh-info"}).code == 1);
    CHECK(cli({"train", "--split", "sideways", "--out", "x"}).code == 1);
    CHECK(cli({"predict", "--aoa", "1"}).code == 1);
    const auto h = cli({"--help"});
    CHECK(h.code == 0);
    CHECK(h.out.find("gen-data") != std::string::npos);
}

TEST_CASE("mesh-info") {
    const auto dir = testing::temp_dir("cli_info");
    std::ofstream(dir / "tri.su2") << testing::kTriangleSu2;
    const auto r = cli({"mesh-info", "--mesh", (dir / "tri.su2").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("nodes 3\n") != std::string::npos);
    CHECK(r.out.find("elements 1 (triangles 1, quads 0)") != std::string::npos);
    CHECK(r.out.find("orientation positive 1 negative 0") != std::string::npos);

    const auto s = cli({"mesh-info", "--mesh", testing::mesh_file("naca0012_fine")});
    CHECK(s.code == 0);
    CHECK(s.out.find("airfoil 48 segments") != std::string::npos);

    CHECK(cli({"mesh-info", "--mesh", (dir / "missing.su2").string()}).code == 2);
    std::ofstream(dir / "broken.su2") << "NDIME= 2\nNELEM= 1\n5 0 1\n";
    const auto b = cli({"mesh-info", "--mesh", (dir / "broken.su2").string()});
    CHECK(b.code == 2);
    CHECK(b.err.find("line 3") != std::string::npos);
}

TEST_CASE("convert") {
    const auto dir = testing::temp_dir("cli_convert");
    const std::string src = testing::mesh_file("naca0012_coarse");
    const std::string before = slurp(src);
    CHECK(cli({"convert", "--mesh", src, "--out", (dir / "tri.su2").string()}).code == 0);
    const auto tri = cfdgcn::read_su2_file((dir / "tri.su2").string());
    CHECK(tri.is_triangular());
    CHECK(tri == cfdgcn::triangulate(testing::shipped("naca0012_coarse")));
    CHECK(cli({"convert", "--mesh", src, "--out", (dir / "q.su2").string(), "--keep-quads"}).code == 0);
    CHECK(cfdgcn::read_su2_file((dir / "q.su2").string()) == testing::shipped("naca0012_coarse"));
    CHECK(slurp(src) == before);
}

TEST_CASE("gen-data, train, eval, predict and export") {
    const auto root = tiny_dataset("cli_dataset");
    CHECK(fs::exists(root / "splits" / "generalization.csv"));
    const auto again = cli({"gen-data", "--mesh-id", "tiny", "--split", "generalization", "--data-root", root.string()});
    CHECK(again.code == 0);
    CHECK(again.out.find("solves 0 cached 231") != std::string::npos);

    const std::vector<std::string> common = {"--mesh-id", "tiny", "--split", "generalization", "--data-root",
                                             root.string(), "--hidden", "8", "--coarse-iters", "20", "--batch-size", "16"};
    auto with = [&](std::vector<std::string> a) {
        a.insert(a.end(), common.begin(), common.end());
        return a;
    };
    const auto out = testing::temp_dir("cli_train");

    SUBCASE("identical logs for a fixed seed") {
        const auto a = cli(with({"train", "--epochs", "1", "--seed", "7", "--out", (out / "a").string()}));
        const auto b = cli(with({"train", "--epochs", "1", "--seed", "7", "--out", (out / "b").string()}));
        REQUIRE(a.code == 0);
        REQUIRE(b.code == 0);
        CHECK(metrics_without_time(out / "a" / "metrics.csv") == metrics_without_time(out / "b" / "metrics.csv"));
        CHECK(slurp(out / "a" / "model.ckpt") == slurp(out / "b" / "model.ckpt"));
        CHECK(fs::exists(out / "a" / "checkpoint_1.ckpt"));
        CHECK(fs::exists(out / "a" / "config.txt"));
        const auto c = cli(with({"train", "--epochs", "1", "--seed", "8", "--out", (out / "c").string()}));
        CHECK(slurp(out / "a" / "model.ckpt") != slurp(out / "c" / "model.ckpt"));
    }
    SUBCASE("eval and predict from a checkpoint") {
        REQUIRE(cli(with({"train", "--epochs", "2", "--seed", "1", "--out", (out / "m").string()})).code == 0);
        const std::string ckpt = (out / "m" / "model.ckpt").string();
        const auto e = cli(with({"eval", "--checkpoint", ckpt}));
        CHECK(e.code == 0);
        CHECK(e.out.find("train_rmse ") != std::string::npos);
        CHECK(e.out.find("test_rmse ") != std::string::npos);

        const auto p = cli(with({"predict", "--checkpoint", ckpt, "--aoa", "2", "--mach", "0.6", "--out", (out / "p.fld").string()}));
        CHECK(p.code == 0);
        const auto s = cfdgcn::data::load_sample(out / "p.fld", testing::shipped("tiny_fine"), "tiny");
        CHECK(s.fields.rows() == 30);
        CHECK(s.aoa == 2.0);

        const auto x = cli({"export-fields", "--sample", (out / "p.fld").string(), "--mesh", testing::mesh_file("tiny_fine"),
                            "--out", (out / "p.csv").string()});
        CHECK(x.code == 0);
        const std::string csv = slurp(out / "p.csv");
        CHECK(csv.rfind("x,y,vx,vy,p\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 31);

        CHECK(cli(with({"predict", "--checkpoint", ckpt, "--aoa", "95", "--mach", "0.6", "--out", (out / "q.fld").string()})).code == 1);
        CHECK(cli(with({"eval", "--checkpoint", (out / "absent.ckpt").string()})).code == 2);
        CHECK(cli({"export-fields", "--sample", (out / "p.fld").string(), "--mesh", testing::mesh_file("tiny_coarse"),
                   "--out", (out / "bad.csv").string()}).code == 2);
    }
    SUBCASE("baselines") {
        const auto u = cli(with({"eval", "--baseline", "ucm"}));
        CHECK(u.code == 0);
        CHECK(u.out.find("test_rmse ") != std::string::npos);
        CHECK(cli(with({"predict", "--baseline", "ucm", "--aoa", "0", "--mach", "0.5", "--out", (out / "u.fld").string()})).code == 0);
        CHECK(cli(with({"train", "--baseline", "gcn", "--epochs", "1", "--out", (out / "g").string()})).code == 0);
        CHECK(cli(with({"train", "--baseline", "frozen", "--epochs", "1", "--out", (out / "f").string()})).code == 0);
    }
    SUBCASE("config file with flag override") {
        std::ofstream(out / "cfg.txt") << "epochs=1\nlr=0.001\nseed=4\n";
        REQUIRE(cli(with({"train", "--config", (out / "cfg.txt").string(), "--lr", "0.002", "--out", (out / "k").string()})).code == 0);
        const std::string used = slurp(out / "k" / "config.txt");
        CHECK(used.find("lr=0.002") != std::string::npos);
        CHECK(used.find("seed=4") != std::string::npos);
    }
}

TEST_CASE("data errors") {
    const auto empty = testing::temp_dir("cli_empty");
    const auto r = cli({"train", "--mesh-id", "tiny", "--split", "generalization", "--data-root", empty.string(),
                        "--out", (empty / "o").string(), "--hidden", "8"});
    CHECK(r.code == 2);
    CHECK(r.err.find("gen-data") != std::string::npos);
}

TEST_CASE("gradcheck") {
    const auto r = cli({"gradcheck"});
    CHECK(r.code == 0);
    CHECK(r.out.find("max_rel_err") != std::string::npos);
    CHECK(cli({"gradcheck", "--max-rel-err", "1e-30"}).code == 3);
}
