#include "cfdgcn/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace cfdgcn::data {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian hosts");

namespace {

constexpr char kSampleMagic[8] = {'C', 'F', 'D', 'G', 'C', 'N', 'F', 'D'};
constexpr char kCheckpointMagic[8] = {'C', 'F', 'D', 'G', 'C', 'N', 'C', 'K'};
constexpr std::uint32_t kSampleVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
public:
    template <class T>
    void put(const T& v) {
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
    void matrix(const Eigen::MatrixXd& m) {
        put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
        put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
        values(m);
    }
    /// Row-major values without a shape prefix.
    void values(const Eigen::MatrixXd& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(m(i, j));
        }
    }
    const std::string& str() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::string data, std::string what) : data_(std::move(data)), what_(std::move(what)) {}

    template <class T>
    T get() {
        T v;
        need(sizeof(T));
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    Eigen::MatrixXd matrix() {
        const auto rows = get<std::uint64_t>();
        const auto cols = get<std::uint64_t>();
        return values(rows, cols);
    }
    Eigen::MatrixXd values(std::uint64_t rows, std::uint64_t cols) {
        if (cols != 0 && rows > (data_.size() - pos_) / sizeof(double) / cols) {
            throw DataError(what_ + ": truncated file");
        }
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>();
        }
        return m;
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw DataError(what_ + ": truncated file");
    }
    std::string data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<double> grid_from(double lo, double hi) {
    std::vector<double> g;
    for (int a = static_cast<int>(lo); a <= static_cast<int>(hi); ++a) g.push_back(a);
    return g;
}

/// Parameters compare equal if they agree to the 1e-9 level (CSV round trip).
bool same_point(const ParamPoint& a, const ParamPoint& b) {
    return a.mesh_id == b.mesh_id && std::fabs(a.aoa - b.aoa) < 1e-9 && std::fabs(a.mach - b.mach) < 1e-9;
}

std::vector<ParamPoint> grid(const std::string& mesh_id, const std::vector<double>& machs) {
    std::vector<ParamPoint> out;
    for (double aoa : aoa_grid()) {
        for (double mach : machs) out.push_back({mesh_id, aoa, mach});
    }
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace

std::vector<double> aoa_grid() { return grid_from(-10, 10); }
std::vector<double> train_machs() { return {0.2, 0.3, 0.35, 0.4, 0.5, 0.55, 0.6, 0.7}; }
std::vector<double> test_machs() { return {0.25, 0.45, 0.65}; }

SplitSpec make_split(const std::string& name, const std::vector<ParamPoint>& exclusions) {
    SplitSpec s;
    s.name = name;
    if (name == "interpolation") {
        s.train = grid(kDefaultMeshId, train_machs());
        s.test = grid(kDefaultMeshId, test_machs());
    } else if (name == "generalization") {
        std::vector<double> machs = train_machs();
        const auto extra = test_machs();
        machs.insert(machs.end(), extra.begin(), extra.end());
        std::sort(machs.begin(), machs.end());
        for (const auto& p : grid(kDefaultMeshId, machs)) (p.mach > 0.5 ? s.test : s.train).push_back(p);
    } else if (name == "multi-airfoil") {
        std::vector<double> machs = train_machs();
        const auto extra = test_machs();
        machs.insert(machs.end(), extra.begin(), extra.end());
        std::sort(machs.begin(), machs.end());
        for (const char* id : {"naca4412", "rae2822"}) {
            const auto g = grid(id, machs);
            s.train.insert(s.train.end(), g.begin(), g.end());
        }
        s.test = grid(kDefaultMeshId, machs);
    } else {
        throw DataError("unknown split '" + name + "' (interpolation|generalization|multi-airfoil)");
    }
    std::erase_if(s.train, [&](const ParamPoint& p) {
        return std::any_of(exclusions.begin(), exclusions.end(),
                           [&](const ParamPoint& x) { return same_point(p, x); });
    });
    return s;
}

std::vector<ParamPoint> read_exclusions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open exclusion list " + path.string());
    std::vector<ParamPoint> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split_csv(line);
        if (cells.size() == 3 && cells[0] == "mesh_id") continue;
        if (cells.size() != 3) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected mesh_id,aoa,mach");
        }
        try {
            out.push_back({cells[0], std::stod(cells[1]), std::stod(cells[2])});
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number");
        }
    }
    return out;
}

void write_exclusions(const std::filesystem::path& path, const std::vector<ParamPoint>& points) {
    std::ostringstream s;
    s << "mesh_id,aoa,mach\n" << std::setprecision(17);
    for (const auto& p : points) s << p.mesh_id << ',' << p.aoa << ',' << p.mach << '\n';
    atomic_write(path, s.str());
}

void write_split_csv(const std::filesystem::path& path, const SplitSpec& split) {
    std::ostringstream s;
    s << "mesh_id,aoa,mach,role\n" << std::setprecision(17);
    for (const auto& p : split.train) s << p.mesh_id << ',' << p.aoa << ',' << p.mach << ",train\n";
    for (const auto& p : split.test) s << p.mesh_id << ',' << p.aoa << ',' << p.mach << ",test\n";
    atomic_write(path, s.str());
}

bool has_supersonic_region(const Eigen::MatrixXd& fields, double gamma) {
    // Isentropic density from p / rho^gamma = p_inf / rho_inf^gamma = 1 / gamma.
    for (Eigen::Index i = 0; i < fields.rows(); ++i) {
        const double p = fields(i, 2);
        if (!(p > 0.0)) return true;
        const double rho = std::pow(gamma * p, 1.0 / gamma);
        const double a2 = gamma * p / rho;
        const double q2 = fields(i, 0) * fields(i, 0) + fields(i, 1) * fields(i, 1);
        if (q2 > a2) return true;
    }
    return false;
}

std::string sample_filename(double aoa, double mach) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << aoa << '_' << mach << ".fld";
    return s.str();
}

std::uint64_t sample_mesh_hash(const Mesh& mesh) {
    return mesh_hash(mesh.is_triangular() ? mesh : triangulate(mesh));
}

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ostringstream tmp_name;
    tmp_name << path.filename().string() << ".tmp." << std::this_thread::get_id();
    const auto tmp = path.parent_path() / tmp_name.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_sample(const std::filesystem::path& path, const FieldSample& sample, std::uint64_t mesh_hash) {
    if (sample.fields.cols() != 3) throw DataError("sample fields must be N x 3");
    Writer w;
    w.bytes(kSampleMagic, sizeof kSampleMagic);
    w.put<std::uint32_t>(kSampleVersion);
    w.put<std::uint64_t>(mesh_hash);
    w.put<double>(sample.aoa);
    w.put<double>(sample.mach);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(sample.fields.rows()));
    w.values(sample.fields);
    atomic_write(path, w.str());
}

FieldSample load_sample(const std::filesystem::path& path, const Mesh& mesh, const std::string& mesh_id) {
    Reader r(read_all(path), path.string());
    if (r.bytes(sizeof kSampleMagic) != std::string(kSampleMagic, sizeof kSampleMagic)) {
        throw DataError(path.string() + ": not a field sample file");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kSampleVersion) {
        throw DataError(path.string() + ": unsupported version " + std::to_string(version));
    }
    const auto hash = r.get<std::uint64_t>();
    if (hash != sample_mesh_hash(mesh)) throw DataError(path.string() + ": sample was generated for a different mesh");
    FieldSample s;
    s.mesh_id = mesh_id;
    s.aoa = r.get<double>();
    s.mach = r.get<double>();
    const auto n = r.get<std::uint64_t>();
    if (n != mesh.nodes.size()) {
        throw DataError(path.string() + ": sample has " + std::to_string(n) + " nodes, mesh has " +
                        std::to_string(mesh.nodes.size()));
    }
    s.fields = r.values(n, 3);
    if (!r.at_end()) throw DataError(path.string() + ": trailing bytes");
    return s;
}

void save_dataset(const std::filesystem::path& root, const std::string& mesh_id, const Mesh& mesh,
                  const std::vector<FieldSample>& samples) {
    const auto dir = root / mesh_id;
    std::filesystem::create_directories(dir);
    const auto hash = sample_mesh_hash(mesh);
    for (const auto& s : samples) {
        if (s.fields.rows() != static_cast<Eigen::Index>(mesh.nodes.size())) {
            throw DataError("sample row count does not match mesh '" + mesh_id + "'");
        }
        save_sample(dir / sample_filename(s.aoa, s.mach), s, hash);
    }
}

std::vector<FieldSample> load_dataset(const std::filesystem::path& root, const std::string& mesh_id,
                                      const Mesh& mesh) {
    const auto dir = root / mesh_id;
    std::vector<FieldSample> out;
    if (!std::filesystem::exists(dir)) return out;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".fld") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back(load_sample(f, mesh, mesh_id));
    std::sort(out.begin(), out.end(), [](const FieldSample& a, const FieldSample& b) {
        return std::pair(a.aoa, a.mach) < std::pair(b.aoa, b.mach);
    });
    return out;
}

GenerationReport generate_ground_truth(const std::filesystem::path& root, const std::string& mesh_id,
                                       const Mesh& fine_mesh, const std::vector<ParamPoint>& params,
                                       const GenerationOptions& options) {
    if (params.empty()) throw DataError("generate_ground_truth: no parameter pairs");
    const Mesh mesh = fine_mesh.is_triangular() ? fine_mesh : triangulate(fine_mesh);
    const auto hash = mesh_hash(mesh);
    const auto dir = root / mesh_id;
    std::filesystem::create_directories(dir);

    const auto n = static_cast<std::ptrdiff_t>(params.size());
    std::vector<std::optional<FieldSample>> results(params.size());
    std::vector<char> cached(params.size(), 0);
    std::vector<std::string> fatal(params.size());

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& p = params[static_cast<std::size_t>(i)];
        const auto path = dir / sample_filename(p.aoa, p.mach);
        try {
            if (std::filesystem::exists(path)) {
                try {
                    auto s = load_sample(path, fine_mesh, mesh_id);
                    if (s.aoa == p.aoa && s.mach == p.mach) {
                        results[static_cast<std::size_t>(i)] = std::move(s);
                        cached[static_cast<std::size_t>(i)] = 1;
                        continue;
                    }
                } catch (const DataError&) {
                    // stale entry; regenerate below
                }
            }
            const solver::FreestreamSpec spec{p.aoa, p.mach};
            const auto sol = solver::solve(mesh, spec, options.max_iters, options.residual_tol, options.settings);
            if (!(sol.final_residual_norm < options.residual_tol)) continue;
            FieldSample s{mesh_id, p.aoa, p.mach, sol.node_fields};
            save_sample(path, s, hash);
            results[static_cast<std::size_t>(i)] = std::move(s);
        } catch (const solver::SolverError&) {
            // reported as not converged
        } catch (const std::exception& e) {
            fatal[static_cast<std::size_t>(i)] = e.what();
        }
    }

    GenerationReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!fatal[i].empty()) throw DataError("generate_ground_truth: " + fatal[i]);
        if (!results[i]) {
            report.not_converged.push_back(params[i]);
            continue;
        }
        if (cached[i]) {
            ++report.cache_hits;
        } else {
            ++report.solves_run;
        }
        if (has_supersonic_region(results[i]->fields)) report.supersonic.push_back(params[i]);
        report.samples.push_back(std::move(*results[i]));
    }
    return report;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    Writer w;
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint64_t>(c.seed);
    w.put<std::int64_t>(c.adam.step);
    w.put<double>(c.adam.config.lr);
    w.put<double>(c.adam.config.beta1);
    w.put<double>(c.adam.config.beta2);
    w.put<double>(c.adam.config.eps);
    w.put<std::uint32_t>(c.model_kind);
    w.put<std::uint32_t>(c.frozen_mesh ? 1 : 0);
    w.put<std::uint32_t>(c.concat_layer);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.layers.size()));
    for (const auto& l : c.layers) {
        w.matrix(l.weight);
        w.values(l.bias);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.coarse_nodes.size()));
    for (const auto& [id, m] : c.coarse_nodes) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(id.size()));
        w.bytes(id.data(), id.size());
        w.put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
        w.values(m);
    }
    if (c.adam.m.size() != c.adam.v.size()) throw DataError("checkpoint: inconsistent Adam moments");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.adam.m.size()));
    for (std::size_t i = 0; i < c.adam.m.size(); ++i) {
        w.put<std::uint64_t>(static_cast<std::uint64_t>(c.adam.m[i].rows()));
        w.put<std::uint64_t>(static_cast<std::uint64_t>(c.adam.m[i].cols()));
        w.values(c.adam.m[i]);
        w.values(c.adam.v[i]);
    }
    atomic_write(path, w.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Reader r(read_all(path), path.string());
    if (r.bytes(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
        throw DataError(path.string() + ": not a checkpoint file");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.seed = r.get<std::uint64_t>();
    c.adam.step = r.get<std::int64_t>();
    c.adam.config.lr = r.get<double>();
    c.adam.config.beta1 = r.get<double>();
    c.adam.config.beta2 = r.get<double>();
    c.adam.config.eps = r.get<double>();
    c.model_kind = r.get<std::uint32_t>();
    c.frozen_mesh = r.get<std::uint32_t>() != 0;
    c.concat_layer = r.get<std::uint32_t>();
    const auto num_layers = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < num_layers; ++i) {
        gnn::GcnLayer l;
        l.weight = r.matrix();
        l.bias = r.values(1, static_cast<std::uint64_t>(l.weight.cols()));
        c.layers.push_back(std::move(l));
    }
    const auto num_meshes = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < num_meshes; ++i) {
        const auto len = r.get<std::uint32_t>();
        std::string id = r.bytes(len);
        const auto rows = r.get<std::uint64_t>();
        c.coarse_nodes[id] = r.values(rows, 2);
    }
    const auto num_moments = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < num_moments; ++i) {
        const auto rows = r.get<std::uint64_t>();
        const auto cols = r.get<std::uint64_t>();
        c.adam.m.push_back(r.values(rows, cols));
        c.adam.v.push_back(r.values(rows, cols));
    }
    if (!r.at_end()) throw DataError(path.string() + ": trailing bytes in checkpoint");
    return c;
}

}  // namespace cfdgcn::data
