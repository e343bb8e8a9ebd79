#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "cfdgcn/data.hpp"
#include "cfdgcn/pipeline.hpp"
#include "helpers.hpp"

using namespace cfdgcn;
using namespace cfdgcn::data;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

bool contains(const std::vector<ParamPoint>& v, double aoa, double mach) {
    for (const auto& p : v) {
        if (std::fabs(p.aoa - aoa) < 1e-9 && std::fabs(p.mach - mach) < 1e-9) return true;
    }
    return false;
}

FieldSample random_sample(const Mesh& m, double aoa, double mach, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return {"tiny", aoa, mach, testing::random_matrix(static_cast<Eigen::Index>(m.num_nodes()), 3, rng)};
}

}  // namespace

TEST_CASE("parameter grids") {
    const auto a = aoa_grid();
    REQUIRE(a.size() == 21);
    CHECK(a.front() == -10.0);
    CHECK(a.back() == 10.0);
    CHECK(train_machs() == std::vector<double>{0.2, 0.3, 0.35, 0.4, 0.5, 0.55, 0.6, 0.7});
    CHECK(test_machs() == std::vector<double>{0.25, 0.45, 0.65});
}

TEST_CASE("splits") {
    SUBCASE("interpolation") {
        const auto s = make_split("interpolation");
        CHECK(s.train.size() == 21 * 8);
        CHECK(s.test.size() == 21 * 3);
        CHECK(contains(s.test, 0.0, 0.65));
        CHECK_FALSE(contains(s.train, 0.0, 0.65));
    }
    SUBCASE("generalization") {
        const auto s = make_split("generalization");
        CHECK(contains(s.test, 0.0, 0.7));
        CHECK(contains(s.train, 0.0, 0.5));
        for (const auto& p : s.test) CHECK(p.mach > 0.5);
        for (const auto& p : s.train) CHECK(p.mach <= 0.5);
        CHECK(s.train.size() + s.test.size() == 21 * 11);
    }
    SUBCASE("multi-airfoil") {
        const auto s = make_split("multi-airfoil");
        for (const auto& p : s.train) CHECK(p.mesh_id != "naca0012");
        for (const auto& p : s.test) CHECK(p.mesh_id == "naca0012");
    }
    for (const char* name : {"interpolation", "generalization", "multi-airfoil"}) {
        CAPTURE(name);
        const auto s = make_split(name);
        std::set<ParamPoint> train(s.train.begin(), s.train.end());
        CHECK(train.size() == s.train.size());
        for (const auto& p : s.test) CHECK(train.count(p) == 0);
    }
    CHECK_THROWS(make_split("nonsense"));

    const std::vector<ParamPoint> ex = {{"naca0012", -3.0, 0.4}, {"naca0012", 2.0, 0.65}};
    const auto s = make_split("interpolation", ex);
    CHECK(s.train.size() == 21 * 8 - 1);
    CHECK_FALSE(contains(s.train, -3.0, 0.4));
    CHECK(contains(s.test, 2.0, 0.65));  // exclusions only prune training points
}

TEST_CASE("exclusion and split files") {
    const auto dir = testing::temp_dir("data_csv");
    const std::vector<ParamPoint> ex = {{"naca0012", -3.0, 0.4}, {"rae2822", 10.0, 0.7}};
    write_exclusions(dir / "ex.csv", ex);
    CHECK(read_exclusions(dir / "ex.csv") == ex);

    {
        std::ofstream out(dir / "hand.csv");
        out << "# shock cases\nmesh_id,aoa,mach\n\nnaca0012,1.5,0.6\n";
    }
    CHECK(read_exclusions(dir / "hand.csv") == std::vector<ParamPoint>{{"naca0012", 1.5, 0.6}});
    {
        std::ofstream out(dir / "bad.csv");
        out << "mesh_id,aoa,mach\nnaca0012,abc,0.6\n";
    }
    CHECK_THROWS_AS(read_exclusions(dir / "bad.csv"), DataError);
    CHECK_THROWS_AS(read_exclusions(dir / "missing.csv"), DataError);

    write_split_csv(dir / "split.csv", make_split("generalization"));
    const std::string text = slurp(dir / "split.csv");
    CHECK(text.rfind("mesh_id,aoa,mach,role\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 21 * 11);
}

TEST_CASE("shipped exclusion lists parse") {
    for (const char* name : {"interpolation", "generalization", "multi-airfoil"}) {
        const auto path = std::filesystem::path(CFDGCN_DATA_DIR) / "exclusions" / (std::string(name) + ".csv");
        if (std::filesystem::exists(path)) CHECK_NOTHROW(read_exclusions(path));
    }
}

TEST_CASE("supersonic detector") {
    Eigen::MatrixXd f(2, 3);
    f << 0.5, 0.0, 1.0 / 1.4,  // freestream at mach 0.5
        0.9, 0.0, 1.0 / 1.4;
    CHECK_FALSE(has_supersonic_region(f));
    f(1, 0) = 1.2;
    CHECK(has_supersonic_region(f));
}

TEST_CASE("sample files") {
    const Mesh m = testing::shipped("tiny_fine");
    const auto hash = sample_mesh_hash(m);
    CHECK(hash == sample_mesh_hash(triangulate(m)));
    const auto dir = testing::temp_dir("data_samples");
    const auto s = random_sample(m, -3.0, 0.45, 1);

    CHECK(sample_filename(-3.0, 0.45) == "-3.0000_0.4500.fld");
    save_sample(dir / "a.fld", s, hash);
    const auto back = load_sample(dir / "a.fld", m, "tiny");
    CHECK(back.aoa == s.aoa);
    CHECK(back.mach == s.mach);
    CHECK(back.fields == s.fields);
    CHECK(back.mesh_id == "tiny");

    SUBCASE("wrong mesh") {
        CHECK_THROWS_AS(load_sample(dir / "a.fld", testing::shipped("tiny_coarse"), "tiny"), DataError);
        Mesh moved = m;
        moved.nodes[0].x += 1e-9;
        CHECK_THROWS_AS(load_sample(dir / "a.fld", moved, "tiny"), DataError);
    }
    SUBCASE("truncated and corrupted") {
        const std::string bytes = slurp(dir / "a.fld");
        for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() - 1}) {
            std::ofstream(dir / "t.fld", std::ios::binary) << bytes.substr(0, cut);
            CHECK_THROWS_AS(load_sample(dir / "t.fld", m, "tiny"), DataError);
        }
        std::string bad = bytes;
        bad[0] = 'X';
        std::ofstream(dir / "m.fld", std::ios::binary) << bad;
        CHECK_THROWS_AS(load_sample(dir / "m.fld", m, "tiny"), DataError);
        std::ofstream(dir / "x.fld", std::ios::binary) << bytes << "extra";
        CHECK_THROWS_AS(load_sample(dir / "x.fld", m, "tiny"), DataError);
    }
    CHECK_THROWS_AS(load_sample(dir / "none.fld", m, "tiny"), DataError);
}

TEST_CASE("dataset round trip") {
    const Mesh m = testing::shipped("tiny_fine");
    const auto dir = testing::temp_dir("data_dataset");
    std::vector<FieldSample> samples;
    for (double aoa : {5.0, -2.0, 0.0}) {
        for (double mach : {0.6, 0.3}) samples.push_back(random_sample(m, aoa, mach, samples.size()));
    }
    save_dataset(dir, "tiny", m, samples);
    const auto back = load_dataset(dir, "tiny", m);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 1; i < back.size(); ++i) {
        CHECK(std::pair(back[i - 1].aoa, back[i - 1].mach) < std::pair(back[i].aoa, back[i].mach));
    }
    for (const auto& b : back) {
        bool found = false;
        for (const auto& s : samples) found = found || (s.aoa == b.aoa && s.mach == b.mach && s.fields == b.fields);
        CHECK(found);
    }
    CHECK(load_dataset(dir, "absent", m).empty());
}

TEST_CASE("ground truth generation and cache") {
    const Mesh m = testing::shipped("tiny_fine");
    const auto dir = testing::temp_dir("data_gen");
    const std::vector<ParamPoint> pts = {{"tiny", 0.0, 0.3}, {"tiny", 4.0, 0.5}, {"tiny", -6.0, 0.6}};
    GenerationOptions opt;
    opt.max_iters = 5000;

    const auto first = generate_ground_truth(dir, "tiny", m, pts, opt);
    CHECK(first.solves_run == 3);
    CHECK(first.cache_hits == 0);
    REQUIRE(first.samples.size() == 3);
    CHECK(first.not_converged.empty());
    const auto direct = solver::solve(triangulate(m), {4.0, 0.5}, opt.max_iters, opt.residual_tol);
    CHECK(first.samples[1].fields == direct.node_fields);

    std::map<std::string, std::string> bytes;
    for (const auto& e : std::filesystem::directory_iterator(dir / "tiny")) bytes[e.path().filename().string()] = slurp(e.path());
    CHECK(bytes.size() == 3);

    const auto second = generate_ground_truth(dir, "tiny", m, pts, opt);
    CHECK(second.solves_run == 0);
    CHECK(second.cache_hits == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(second.samples[i].fields == first.samples[i].fields);
    for (const auto& [name, content] : bytes) CHECK(slurp(dir / "tiny" / name) == content);

    SUBCASE("stale entries are regenerated") {
        save_sample(dir / "tiny" / sample_filename(0.0, 0.3), random_sample(testing::shipped("tiny_coarse"), 0.0, 0.3, 9),
                    sample_mesh_hash(testing::shipped("tiny_coarse")));
        const auto third = generate_ground_truth(dir, "tiny", m, pts, opt);
        CHECK(third.solves_run == 1);
        CHECK(third.cache_hits == 2);
        CHECK(slurp(dir / "tiny" / sample_filename(0.0, 0.3)) == bytes[sample_filename(0.0, 0.3)]);
    }
    SUBCASE("unconverged cases are reported and excluded") {
        GenerationOptions tight = opt;
        tight.max_iters = 3;
        const auto r = generate_ground_truth(testing::temp_dir("data_gen_tight"), "tiny", m, pts, tight);
        CHECK(r.samples.empty());
        CHECK(r.not_converged.size() == 3);
    }
}

TEST_CASE("checkpoint round trip") {
    pipeline::MeshBank bank;
    bank.emplace("tiny", pipeline::MeshCase{"tiny", pipeline::FineMesh::build(testing::shipped("tiny_fine")),
                                            pipeline::CoarseMesh::build(testing::shipped("tiny_coarse")), {}});
    pipeline::TrainConfig cfg;
    cfg.hidden_channels = 6;
    cfg.seed = 77;
    auto params = pipeline::init_params(cfg, bank);
    std::mt19937_64 rng(1);
    for (auto& l : params.layers) l.bias = testing::random_matrix(1, l.out_channels(), rng);
    std::vector<Eigen::MatrixXd> tensors;
    for (const auto& l : params.layers) {
        tensors.push_back(l.weight);
        tensors.push_back(l.bias);
    }
    tensors.push_back(params.coarse_nodes.at("tiny"));
    auto adam = gnn::AdamState::like(tensors, {1e-3, 0.8, 0.99, 1e-7});
    for (int i = 0; i < 3; ++i) {
        std::vector<Eigen::MatrixXd> g;
        for (const auto& t : tensors) g.push_back(testing::random_matrix(t.rows(), t.cols(), rng));
        gnn::adam_deltas(g, adam);
    }

    const auto dir = testing::temp_dir("data_ckpt");
    save_checkpoint(dir / "a.ckpt", pipeline::to_checkpoint(params, adam, cfg.seed));
    const auto ck = load_checkpoint(dir / "a.ckpt");
    CHECK(ck.seed == 77);
    CHECK(ck.adam.step == 3);
    CHECK(ck.adam.config.beta1 == 0.8);
    CHECK(ck.adam.config.eps == 1e-7);
    REQUIRE(ck.adam.m.size() == adam.m.size());
    for (std::size_t i = 0; i < adam.m.size(); ++i) {
        CHECK(ck.adam.m[i] == adam.m[i]);
        CHECK(ck.adam.v[i] == adam.v[i]);
    }
    const auto back = pipeline::from_checkpoint(ck);
    REQUIRE(back.layers.size() == params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        CHECK(back.layers[i].weight == params.layers[i].weight);
        CHECK(back.layers[i].bias == params.layers[i].bias);
    }
    CHECK(back.coarse_nodes == params.coarse_nodes);
    CHECK(back.kind == params.kind);
    CHECK(back.concat_layer == params.concat_layer);

    save_checkpoint(dir / "b.ckpt", ck);
    CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));

    const std::string bytes = slurp(dir / "a.ckpt");
    std::ofstream(dir / "t.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), DataError);
}

TEST_CASE("atomic write replaces the target") {
    const auto dir = testing::temp_dir("data_atomic");
    atomic_write(dir / "f.txt", "one");
    atomic_write(dir / "f.txt", "two");
    CHECK(slurp(dir / "f.txt") == "two");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
    CHECK(files == 1);
}
