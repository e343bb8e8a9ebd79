#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "cfdgcn/data.hpp"
#include "cfdgcn/gradcheck.hpp"
#include "cfdgcn/mesh.hpp"
#include "cfdgcn/pipeline.hpp"
#include "cfdgcn/solver.hpp"

namespace cfdgcn::cli {
namespace {

namespace fs = std::filesystem;

/// Raised for bad flag combinations discovered after parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string mesh;
    std::string coarse_mesh;
    std::string mesh_id = data::kDefaultMeshId;
    std::string mesh_dir;
    std::string data_root;
    std::string split = "interpolation";
    std::string exclusions;
    std::string config;
    std::string out;
    std::string checkpoint;
    std::string sample;
    std::string baseline = "none";
    std::string flagged_out;
    int epochs = 1;
    int batch_size = 16;
    double lr = 5e-5;
    int coarse_iters = 200;
    int hidden = 512;
    std::uint64_t seed = 0;
    int threads = 0;
    double aoa = 0.0;
    double mach = 0.5;
    double tol = 1e-8;
    int max_iters = 20000;
    double max_rel_err = 1e-4;
    bool keep_quads = false;
};

std::string default_mesh_dir() {
    if (const char* env = std::getenv("CFDGCN_MESH_DIR")) return env;
    return std::string(CFDGCN_DATA_DIR) + "/meshes";
}

std::string data_root(const Options& o) {
    if (!o.data_root.empty()) return o.data_root;
    if (const char* env = std::getenv("CFDGCN_DATA_ROOT")) return env;
    throw UsageError("dataset root not set: pass --data-root or set CFDGCN_DATA_ROOT");
}

std::string mesh_path(const Options& o, const std::string& id, const std::string& level) {
    return (fs::path(o.mesh_dir.empty() ? default_mesh_dir() : o.mesh_dir) / (id + "_" + level + ".su2")).string();
}

std::vector<std::string> split_mesh_ids(const std::string& split, const std::string& default_id) {
    if (split == "multi-airfoil") return {"naca4412", "rae2822", data::kDefaultMeshId};
    return {default_id};
}

/// Explicit --mesh/--coarse-mesh override the files of the default mesh id.
pipeline::MeshBank load_bank(const Options& o, const std::vector<std::string>& ids) {
    pipeline::MeshBank bank;
    for (const auto& id : ids) {
        const bool main = id == o.mesh_id;
        const std::string fine = main && !o.mesh.empty() ? o.mesh : mesh_path(o, id, "fine");
        const std::string coarse = main && !o.coarse_mesh.empty() ? o.coarse_mesh : mesh_path(o, id, "coarse");
        bank.emplace(id, pipeline::MeshCase{id, pipeline::FineMesh::build(read_su2_file(fine)),
                                            pipeline::CoarseMesh::build(read_su2_file(coarse)), {}});
    }
    return bank;
}

data::SplitSpec load_split(const Options& o) {
    std::vector<data::ParamPoint> excluded;
    fs::path list = o.exclusions;
    if (list.empty()) list = fs::path(CFDGCN_DATA_DIR) / "exclusions" / (o.split + ".csv");
    if (!o.exclusions.empty() || fs::exists(list)) excluded = data::read_exclusions(list);
    auto split = data::make_split(o.split, excluded);
    if (o.split != "multi-airfoil" && o.mesh_id != data::kDefaultMeshId) {
        for (auto* part : {&split.train, &split.test}) {
            for (auto& p : *part) p.mesh_id = o.mesh_id;
        }
    }
    return split;
}

long long key(double v) { return std::llround(v * 1e6); }

/// Samples of `points` found under the dataset root; reports how many are missing.
std::vector<data::FieldSample> select_samples(const std::string& root, const pipeline::MeshBank& bank,
                                              const std::vector<data::ParamPoint>& points,
                                              std::size_t& missing) {
    std::map<std::string, std::map<std::pair<long long, long long>, data::FieldSample>> index;
    std::vector<data::FieldSample> out;
    missing = 0;
    for (const auto& p : points) {
        auto it = index.find(p.mesh_id);
        if (it == index.end()) {
            const auto& c = bank.at(p.mesh_id);
            auto& entry = index[p.mesh_id];
            for (auto& s : data::load_dataset(root, p.mesh_id, c.fine.mesh)) {
                entry.emplace(std::pair(key(s.aoa), key(s.mach)), std::move(s));
            }
            it = index.find(p.mesh_id);
        }
        const auto found = it->second.find({key(p.aoa), key(p.mach)});
        if (found == it->second.end()) {
            ++missing;
        } else {
            out.push_back(found->second);
        }
    }
    return out;
}

pipeline::TrainConfig make_config(const Options& o, const CLI::App& sub) {
    pipeline::TrainConfig cfg;
    if (!o.config.empty()) cfg = pipeline::read_config_file(o.config, cfg);
    auto given = [&](const char* flag) { return sub.count(flag) > 0; };
    if (given("--epochs")) cfg.epochs = o.epochs;
    if (given("--batch-size")) cfg.batch_size = o.batch_size;
    if (given("--lr")) cfg.lr = o.lr;
    if (given("--coarse-iters")) cfg.coarse_max_iters = o.coarse_iters;
    if (given("--hidden")) cfg.hidden_channels = o.hidden;
    if (given("--seed")) cfg.seed = o.seed;
    if (given("--threads")) cfg.threads = o.threads;
    if (given("--baseline")) cfg.baseline = pipeline::parse_baseline(o.baseline);
    if (given("--split")) cfg.split = o.split;
    cfg.validate();
    return cfg;
}

void set_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw data::DataError("cannot write " + path.string());
    f << text;
}

pipeline::ModelParams load_model(const Options& o) {
    if (o.checkpoint.empty()) throw UsageError("--checkpoint is required unless --baseline ucm");
    return pipeline::from_checkpoint(data::load_checkpoint(o.checkpoint));
}

// Subcommands ---------------------------------------------------------------

int mesh_info(const Options& o, std::ostream& out) {
    const Mesh mesh = read_su2_file(o.mesh);
    std::size_t tris = 0, quads = 0;
    for (const auto& e : mesh.elements) (e.size == 3 ? tris : quads) += 1;
    out << "nodes " << mesh.num_nodes() << "\n";
    out << "elements " << mesh.num_elements() << " (triangles " << tris << ", quads " << quads << ")\n";
    out << "markers " << mesh.markers.size() << "\n";
    for (const auto& m : mesh.markers) out << "  " << m.tag << " " << m.segments.size() << " segments\n";
    const Mesh tri = triangulate(mesh);
    std::size_t pos = 0, neg = 0, zero = 0;
    for (double a : element_orientations(tri.nodes, tri.elements)) (a > 0 ? pos : a < 0 ? neg : zero) += 1;
    out << "orientation positive " << pos << " negative " << neg << " degenerate " << zero << "\n";
    out << "hash " << std::hex << std::setw(16) << std::setfill('0') << mesh_hash(mesh) << std::dec << "\n";
    return 0;
}

int convert(const Options& o, std::ostream& out) {
    if (o.out.empty()) throw UsageError("convert needs an explicit --out path");
    Mesh mesh = read_su2_file(o.mesh);
    if (!o.keep_quads) mesh = triangulate(mesh);
    write_su2_file(o.out, mesh);
    out << "wrote " << o.out << " (" << mesh.num_nodes() << " nodes, " << mesh.num_elements() << " elements)\n";
    return 0;
}

int gen_data(const Options& o, std::ostream& out, std::ostream& err) {
    const std::string root = data_root(o);
    const auto split = load_split(o);
    const std::string fine_path = o.mesh.empty() ? mesh_path(o, o.mesh_id, "fine") : o.mesh;
    const Mesh fine = read_su2_file(fine_path);

    std::vector<data::ParamPoint> points;
    for (const auto* part : {&split.train, &split.test}) {
        for (const auto& p : *part) {
            if (p.mesh_id == o.mesh_id) points.push_back(p);
        }
    }
    if (points.empty()) throw UsageError("split '" + o.split + "' has no points for mesh '" + o.mesh_id + "'");
    data::GenerationOptions gen;
    gen.residual_tol = o.tol;
    gen.max_iters = o.max_iters;
    const auto report = data::generate_ground_truth(root, o.mesh_id, fine, points, gen);
    data::write_split_csv(fs::path(root) / "splits" / (o.split + ".csv"), split);

    out << "samples " << report.samples.size() << " solves " << report.solves_run << " cached "
        << report.cache_hits << "\n";
    for (const auto& p : report.not_converged) {
        err << "not converged: " << p.mesh_id << " aoa=" << p.aoa << " mach=" << p.mach << "\n";
    }
    for (const auto& p : report.supersonic) {
        out << "supersonic: " << p.mesh_id << " aoa=" << p.aoa << " mach=" << p.mach << "\n";
    }
    if (!o.flagged_out.empty()) data::write_exclusions(o.flagged_out, report.supersonic);
    return 0;
}

int train(Options o, const CLI::App& sub, std::ostream& out, std::ostream& err) {
    if (o.out.empty()) throw UsageError("train needs --out <directory>");
    auto cfg = make_config(o, sub);
    o.split = cfg.split;
    set_threads(cfg.threads);
    const std::string root = data_root(o);
    const auto split = load_split(o);
    const auto bank = load_bank(o, split_mesh_ids(o.split, o.mesh_id));
    std::size_t missing_train = 0, missing_test = 0;
    const auto train_set = select_samples(root, bank, split.train, missing_train);
    const auto test_set = select_samples(root, bank, split.test, missing_test);
    if (missing_train + missing_test > 0) {
        err << "warning: " << missing_train << " train and " << missing_test
            << " test samples missing from " << root << "\n";
    }
    if (train_set.empty()) throw data::DataError("no training samples under " + root + " (run gen-data first)");

    const fs::path dir = o.out;
    fs::create_directories(dir);
    write_text(dir / "config.txt", pipeline::to_config_text(cfg));
    write_text(dir / "metrics.csv", pipeline::metric_csv_header() + "\n");

    pipeline::TrainCallbacks callbacks;
    callbacks.on_warning = [&](const std::string& w) { err << "warning: " << w << "\n"; };
    callbacks.on_epoch = [&](const pipeline::MetricRow& row, const pipeline::ModelParams& params,
                             const gnn::AdamState& adam) {
        std::ofstream log(dir / "metrics.csv", std::ios::app);
        log << pipeline::metric_csv_row(row) << "\n";
        if (cfg.baseline != pipeline::Baseline::Ucm) {
            data::save_checkpoint(dir / ("checkpoint_" + std::to_string(row.epoch) + ".ckpt"),
                                  pipeline::to_checkpoint(params, adam, cfg.seed));
        }
        out << "epoch " << row.epoch << " step " << row.step << " train_rmse " << row.train_rmse
            << " test_rmse " << row.test_rmse << "\n";
    };
    const auto result = pipeline::train(cfg, bank, train_set, test_set, callbacks);
    if (cfg.baseline != pipeline::Baseline::Ucm) {
        data::save_checkpoint(dir / "model.ckpt", pipeline::to_checkpoint(result.params, result.adam, cfg.seed));
    }
    out << "steps " << result.step_losses.size() << " skipped " << result.skipped_samples
        << " orientation_changes " << result.orientation_sign_changes << "\n";
    return 0;
}

int eval(Options o, const CLI::App& sub, std::ostream& out, std::ostream& err) {
    auto cfg = make_config(o, sub);
    o.split = cfg.split;
    set_threads(cfg.threads);
    const std::string root = data_root(o);
    const auto split = load_split(o);
    const auto bank = load_bank(o, split_mesh_ids(o.split, o.mesh_id));
    pipeline::ModelParams params;
    if (cfg.baseline != pipeline::Baseline::Ucm) params = load_model(o);
    std::size_t missing = 0;
    for (const auto& [name, points] : {std::pair{"train", &split.train}, std::pair{"test", &split.test}}) {
        const auto samples = select_samples(root, bank, *points, missing);
        if (missing > 0) err << "warning: " << missing << " " << name << " samples missing\n";
        if (samples.empty()) continue;
        const auto r = pipeline::evaluate(params, bank, samples, cfg);
        out << name << "_rmse " << std::setprecision(8) << r.rmse << " samples " << samples.size()
            << " failures " << r.failures << "\n";
    }
    return 0;
}

int predict(const Options& o, const CLI::App& sub, std::ostream& out) {
    if (o.out.empty()) throw UsageError("predict needs --out <file.fld>");
    auto cfg = make_config(o, sub);
    set_threads(cfg.threads);
    const auto bank = load_bank(o, {o.mesh_id});
    const auto& c = bank.at(o.mesh_id);
    const solver::FreestreamSpec spec{o.aoa, o.mach};
    spec.validate();
    Eigen::MatrixXd fields;
    if (cfg.baseline == pipeline::Baseline::Ucm) {
        fields = pipeline::predict_ucm(c, spec, cfg);
    } else {
        const auto params = load_model(o);
        if (!params.coarse_nodes.empty() && !params.coarse_nodes.count(o.mesh_id)) {
            throw data::DataError("checkpoint has no coarse mesh for '" + o.mesh_id + "'");
        }
        fields = pipeline::forward(params, c, spec, cfg).y_hat;
    }
    data::save_sample(o.out, {o.mesh_id, o.aoa, o.mach, fields}, data::sample_mesh_hash(c.fine.mesh));
    out << "wrote " << o.out << "\n";
    return 0;
}

int gradcheck(const Options& o, std::ostream& out) {
    const Mesh fine = read_su2_file(o.mesh.empty() ? mesh_path(o, "tiny", "fine") : o.mesh);
    const Mesh coarse = read_su2_file(o.coarse_mesh.empty() ? mesh_path(o, "tiny", "coarse") : o.coarse_mesh);
    gradcheck::Options opts;
    opts.nonlinear_tol = o.max_rel_err;
    opts.linear_tol = std::min(opts.linear_tol, o.max_rel_err);
    opts.seed = o.seed;
    bool ok = true;
    for (const auto& r : gradcheck::run_all(coarse, fine, opts)) {
        out << std::left << std::setw(28) << r.name << " max_rel_err " << std::scientific << std::setprecision(3)
            << r.max_rel_err << " tol " << r.tolerance << std::defaultfloat << " entries " << r.entries
            << (r.passed() ? " ok" : " FAIL") << "\n";
        ok = ok && r.passed();
    }
    return ok ? 0 : 3;
}

int export_fields(const Options& o, std::ostream& out) {
    if (o.sample.empty() || o.out.empty()) throw UsageError("export-fields needs --sample and --out");
    const Mesh mesh = read_su2_file(o.mesh.empty() ? mesh_path(o, o.mesh_id, "fine") : o.mesh);
    const auto s = data::load_sample(o.sample, mesh, o.mesh_id);
    std::ostringstream csv;
    csv << "x,y,vx,vy,p\n" << std::setprecision(17);
    for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        csv << mesh.nodes[i].x << ',' << mesh.nodes[i].y << ',' << s.fields(r, 0) << ',' << s.fields(r, 1) << ','
            << s.fields(r, 2) << '\n';
    }
    write_text(o.out, csv.str());
    out << "wrote " << o.out << " (" << mesh.num_nodes() << " rows)\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"CFD-GCN: coarse differentiable flow solver inside a graph network"};
    app.require_subcommand(1);
    Options o;

    auto add_mesh = [&](CLI::App* s, bool required) {
        auto* opt = s->add_option("--mesh", o.mesh, "fine mesh (SU2)");
        if (required) opt->required();
        s->add_option("--mesh-id", o.mesh_id, "mesh id used for dataset lookup");
        s->add_option("--mesh-dir", o.mesh_dir, "directory of <id>_fine.su2 / <id>_coarse.su2");
    };
    auto add_training = [&](CLI::App* s) {
        s->add_option("--coarse-mesh", o.coarse_mesh, "coarse mesh (SU2)");
        s->add_option("--split", o.split, "interpolation|generalization|multi-airfoil")
            ->check(CLI::IsMember({"interpolation", "generalization", "multi-airfoil"}));
        s->add_option("--exclusions", o.exclusions, "exclusion list for training points");
        s->add_option("--config", o.config, "key=value config file (flags override)");
        s->add_option("--epochs", o.epochs);
        s->add_option("--batch-size", o.batch_size);
        s->add_option("--lr", o.lr);
        s->add_option("--coarse-iters", o.coarse_iters);
        s->add_option("--hidden", o.hidden, "hidden channels");
        s->add_option("--baseline", o.baseline)->check(CLI::IsMember({"none", "ucm", "gcn", "frozen"}));
        s->add_option("--seed", o.seed);
        s->add_option("--threads", o.threads);
        s->add_option("--data-root", o.data_root, "dataset root (default $CFDGCN_DATA_ROOT)");
    };

    auto* info = app.add_subcommand("mesh-info", "print mesh statistics");
    add_mesh(info, true);
    auto* conv = app.add_subcommand("convert", "triangulate and rewrite a mesh");
    add_mesh(conv, true);
    conv->add_option("--out", o.out, "output SU2 file")->required();
    conv->add_flag("--keep-quads", o.keep_quads, "rewrite without splitting quads");

    auto* gen = app.add_subcommand("gen-data", "solve the fine mesh for every point of a split");
    add_mesh(gen, false);
    gen->add_option("--split", o.split)->check(CLI::IsMember({"interpolation", "generalization", "multi-airfoil"}));
    gen->add_option("--exclusions", o.exclusions);
    gen->add_option("--tol", o.tol, "residual tolerance");
    gen->add_option("--max-iters", o.max_iters);
    gen->add_option("--threads", o.threads);
    gen->add_option("--data-root", o.data_root);
    gen->add_option("--flagged-out", o.flagged_out, "write supersonic points as an exclusion list");

    auto* tr = app.add_subcommand("train", "train a model or baseline");
    add_mesh(tr, false);
    add_training(tr);
    tr->add_option("--out", o.out, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "train/test RMSE of a checkpoint or baseline");
    add_mesh(ev, false);
    add_training(ev);
    ev->add_option("--checkpoint", o.checkpoint);

    auto* pr = app.add_subcommand("predict", "one forward pass written as a sample file");
    add_mesh(pr, false);
    add_training(pr);
    pr->add_option("--checkpoint", o.checkpoint);
    pr->add_option("--aoa", o.aoa, "degrees")->required();
    pr->add_option("--mach", o.mach)->required();
    pr->add_option("--out", o.out)->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference checks of all gradients");
    add_mesh(gc, false);
    gc->add_option("--coarse-mesh", o.coarse_mesh);
    gc->add_option("--max-rel-err", o.max_rel_err);
    gc->add_option("--seed", o.seed);

    auto* ex = app.add_subcommand("export-fields", "per-node CSV (x, y, vx, vy, p) of a sample file");
    add_mesh(ex, false);
    ex->add_option("--sample", o.sample)->required();
    ex->add_option("--out", o.out)->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*info) return mesh_info(o, out);
        if (*conv) return convert(o, out);
        if (*gen) {
            set_threads(o.threads);
            return gen_data(o, out, err);
        }
        if (*tr) return train(o, *tr, out, err);
        if (*ev) return eval(o, *ev, out, err);
        if (*pr) return predict(o, *pr, out);
        if (*gc) return gradcheck(o, out);
        if (*ex) return export_fields(o, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const solver::SolverError& e) {
        err << "solver error: " << e.what() << "\n";
        return 3;
    } catch (const pipeline::SampleError& e) {
        err << "solver error: " << e.what() << "\n";
        return 3;
    } catch (const MeshError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const data::DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, out, err);
}

}  // namespace cfdgcn::cli
