#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "cfdgcn/meshopt.hpp"
#include "cfdgcn/pipeline.hpp"

namespace cfdgcn::pipeline {

Baseline parse_baseline(const std::string& name) {
    if (name == "none") return Baseline::None;
    if (name == "ucm") return Baseline::Ucm;
    if (name == "gcn") return Baseline::Gcn;
    if (name == "frozen") return Baseline::Frozen;
    throw std::invalid_argument("unknown baseline '" + name + "' (none|ucm|gcn|frozen)");
}

std::string to_string(Baseline b) {
    switch (b) {
        case Baseline::None: return "none";
        case Baseline::Ucm: return "ucm";
        case Baseline::Gcn: return "gcn";
        case Baseline::Frozen: return "frozen";
    }
    return "none";
}

void TrainConfig::validate() const {
    const auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    positive(lr, "lr");
    positive(batch_size, "batch_size");
    positive(coarse_max_iters, "coarse_max_iters");
    positive(epochs, "epochs");
    positive(knn_k, "knn_k");
    positive(concat_layer, "concat_layer");
    positive(num_layers, "num_layers");
    positive(hidden_channels, "hidden_channels");
    positive(num_upsample, "num_upsample");
    positive(cfl, "cfl");
    positive(eval_every, "eval_every");
    if (threads < 0) throw std::invalid_argument("threads must be non-negative");
    if (num_layers < 2) throw std::invalid_argument("num_layers must be at least 2");
    if (baseline != Baseline::Gcn && concat_layer >= num_layers) {
        throw std::invalid_argument("concat_layer must be smaller than num_layers");
    }
}

namespace {

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

}  // namespace

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "lr") cfg.lr = std::stod(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "coarse_max_iters") cfg.coarse_max_iters = std::stoi(value);
        else if (key == "epochs") cfg.epochs = std::stoi(value);
        else if (key == "split") cfg.split = value;
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "knn_k") cfg.knn_k = std::stoi(value);
        else if (key == "concat_layer") cfg.concat_layer = std::stoi(value);
        else if (key == "num_layers") cfg.num_layers = std::stoi(value);
        else if (key == "hidden_channels") cfg.hidden_channels = std::stoi(value);
        else if (key == "num_upsample") cfg.num_upsample = std::stoi(value);
        else if (key == "baseline") cfg.baseline = parse_baseline(value);
        else if (key == "freeze_boundary") cfg.freeze_boundary = parse_bool(value);
        else if (key == "project_updates") cfg.project_updates = parse_bool(value);
        else if (key == "pooled_rmse") cfg.pooled_rmse = parse_bool(value);
        else if (key == "cfl") cfg.cfl = std::stod(value);
        else if (key == "eval_every") cfg.eval_every = std::stoi(value);
        else if (key == "threads") cfg.threads = std::stoi(value);
        else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const std::logic_error& e) {
        // std::stoi and friends throw invalid_argument/out_of_range with terse messages.
        if (std::string(e.what()).find(key) != std::string::npos) throw;
        throw std::invalid_argument("bad value '" + value + "' for config key '" + key + "'");
    }
}

TrainConfig read_config_file(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": expected key=value");
        }
        set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

std::string to_config_text(const TrainConfig& c) {
    std::ostringstream s;
    s << std::setprecision(17);
    s << "lr=" << c.lr << "\nbatch_size=" << c.batch_size << "\ncoarse_max_iters=" << c.coarse_max_iters
      << "\nepochs=" << c.epochs << "\nsplit=" << c.split << "\nseed=" << c.seed << "\nknn_k=" << c.knn_k
      << "\nconcat_layer=" << c.concat_layer << "\nnum_layers=" << c.num_layers
      << "\nhidden_channels=" << c.hidden_channels << "\nnum_upsample=" << c.num_upsample
      << "\nbaseline=" << to_string(c.baseline) << "\nfreeze_boundary=" << c.freeze_boundary
      << "\nproject_updates=" << c.project_updates << "\npooled_rmse=" << c.pooled_rmse
      << "\ncfl=" << c.cfl << "\neval_every=" << c.eval_every << "\nthreads=" << c.threads << '\n';
    return s.str();
}

std::string metric_csv_header() {
    return "epoch,step,train_rmse,test_rmse,wall_seconds,flipped_elements_zeroed";
}

std::string metric_csv_row(const MetricRow& r) {
    std::ostringstream s;
    s << std::setprecision(17) << r.epoch << ',' << r.step << ',' << r.train_rmse << ',' << r.test_rmse
      << ',' << std::setprecision(6) << r.wall_seconds << ',' << r.flipped_elements_zeroed;
    return s.str();
}

EvalResult evaluate(const ModelParams& params, const MeshBank& cases,
                    const std::vector<data::FieldSample>& samples, const TrainConfig& cfg) {
    EvalResult out;
    out.losses.assign(samples.size(), std::numeric_limits<double>::quiet_NaN());
    std::string fatal;
    const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        try {
            const auto found = cases.find(s.mesh_id);
            if (found == cases.end()) throw std::invalid_argument("no mesh registered for id '" + s.mesh_id + "'");
            const MeshCase& c = found->second;
            const solver::FreestreamSpec spec{s.aoa, s.mach};
            const Matrix y_hat = cfg.baseline == Baseline::Ucm ? predict_ucm(c, spec, cfg)
                                                                 : forward(params, c, spec, cfg).y_hat;
            out.losses[static_cast<std::size_t>(i)] = loss_mse(s.fields, y_hat);
        } catch (const SampleError&) {
            // counted below as a failure
        } catch (const std::exception& e) {
#pragma omp critical(cfdgcn_eval_fatal)
            if (fatal.empty()) fatal = e.what();
        }
    }
    if (!fatal.empty()) throw std::runtime_error("evaluate: " + fatal);

    double weighted = 0.0;
    double weight = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double l = out.losses[i];
        if (std::isnan(l)) {
            ++out.failures;
            continue;
        }
        const double w = cfg.pooled_rmse ? static_cast<double>(samples[i].fields.size()) : 1.0;
        weighted += w * l;
        weight += w;
    }
    out.rmse = weight > 0.0 ? std::sqrt(weighted / weight) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

namespace {

bool mesh_trainable(const ModelParams& p) { return p.kind == ModelKind::CfdGcn && !p.frozen_mesh; }

/// Flattened tensor list in optimiser order: W_1, b_1, ..., W_K, b_K, then X_C per mesh id.
std::vector<Matrix> tensors_of(const std::vector<gnn::GcnLayer>& layers,
                               const std::map<std::string, Matrix>& coarse, bool with_coarse) {
    std::vector<Matrix> t;
    for (const auto& l : layers) {
        t.push_back(l.weight);
        t.emplace_back(l.bias);
    }
    if (with_coarse) {
        for (const auto& [id, m] : coarse) t.push_back(m);
    }
    return t;
}

std::vector<int> orientation_signs(const Mesh& topology, const Matrix& nodes) {
    std::vector<Vec2> pts(static_cast<std::size_t>(nodes.rows()));
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) pts[static_cast<std::size_t>(i)] = {nodes(i, 0), nodes(i, 1)};
    const auto o = element_orientations(pts, topology.elements);
    std::vector<int> s(o.size());
    for (std::size_t e = 0; e < o.size(); ++e) s[e] = (o[e] > 0.0) - (o[e] < 0.0);
    return s;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const MeshBank& cases,
                  const std::vector<data::FieldSample>& train_set,
                  const std::vector<data::FieldSample>& test_set, const TrainCallbacks& callbacks) {
    ModelParams params = init_params(cfg, cases);
    auto adam = gnn::AdamState::like(tensors_of(params.layers, params.coarse_nodes, mesh_trainable(params)),
                                     {cfg.lr});
    return train(cfg, cases, train_set, test_set, std::move(params), std::move(adam), callbacks);
}

TrainResult train(const TrainConfig& cfg, const MeshBank& cases,
                  const std::vector<data::FieldSample>& train_set,
                  const std::vector<data::FieldSample>& test_set, ModelParams params,
                  gnn::AdamState adam, const TrainCallbacks& callbacks) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    check_channels(params);
    adam.config.lr = cfg.lr;

    const auto warn = [&](const std::string& msg) {
        if (callbacks.on_warning) callbacks.on_warning(msg);
    };
    const auto t0 = std::chrono::steady_clock::now();
    const auto seconds = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    TrainResult result;
    const auto emit = [&](int epoch, std::int64_t step, std::size_t flipped) {
        MetricRow row;
        row.epoch = epoch;
        row.step = step;
        row.train_rmse = evaluate(params, cases, train_set, cfg).rmse;
        row.test_rmse = test_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : evaluate(params, cases, test_set, cfg).rmse;
        row.wall_seconds = seconds();
        row.flipped_elements_zeroed = flipped;
        result.log.push_back(row);
        if (callbacks.on_epoch) callbacks.on_epoch(row, params, adam);
    };

    if (cfg.baseline == Baseline::Ucm) {
        // Nothing is learned; report the upsampled coarse solve once.
        emit(0, 0, 0);
        result.params = std::move(params);
        result.adam = std::move(adam);
        return result;
    }

    const bool trainable_mesh = mesh_trainable(params);
    std::map<std::string, std::vector<int>> signs;
    for (const auto& [id, nodes] : params.coarse_nodes) {
        signs[id] = orientation_signs(cases.at(id).coarse.mesh, nodes);
    }

    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::int64_t step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        std::size_t flipped_this_epoch = 0;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const auto count = static_cast<std::ptrdiff_t>(end - start);
            std::vector<std::optional<LossAndGradients>> results(static_cast<std::size_t>(count));
            std::vector<std::string> errors(static_cast<std::size_t>(count));
            std::string fatal;

#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t b = 0; b < count; ++b) {
                const auto& s = train_set[order[start + static_cast<std::size_t>(b)]];
                try {
                    const auto found = cases.find(s.mesh_id);
                    if (found == cases.end()) {
                        throw std::invalid_argument("no mesh registered for id '" + s.mesh_id + "'");
                    }
                    results[static_cast<std::size_t>(b)] =
                        forward_backward(params, found->second, {s.aoa, s.mach}, cfg, s.fields);
                } catch (const SampleError& e) {
                    errors[static_cast<std::size_t>(b)] = e.what();
                } catch (const std::exception& e) {
#pragma omp critical(cfdgcn_train_fatal)
                    if (fatal.empty()) fatal = e.what();
                }
            }
            if (!fatal.empty()) throw std::runtime_error("train: " + fatal);

            // Ordered reduction keeps the sum independent of thread scheduling.
            std::optional<std::vector<Matrix>> sum;
            double loss_sum = 0.0;
            int ok = 0;
            for (std::size_t b = 0; b < results.size(); ++b) {
                if (!results[b]) {
                    ++result.skipped_samples;
                    warn("skipping sample: " + errors[b]);
                    continue;
                }
                auto t = tensors_of(results[b]->grads.layers, results[b]->grads.coarse_nodes, trainable_mesh);
                if (!sum) {
                    sum = std::move(t);
                } else {
                    for (std::size_t i = 0; i < t.size(); ++i) (*sum)[i] += t[i];
                }
                loss_sum += results[b]->loss;
                ++ok;
            }
            if (ok == 0) {
                warn("step skipped: every sample in the batch failed");
                continue;
            }
            for (auto& g : *sum) g /= static_cast<double>(ok);

            auto deltas = gnn::adam_deltas(*sum, adam);
            if (!deltas) {
                warn("step skipped: non-finite gradient");
                continue;
            }
            std::size_t k = 0;
            for (auto& layer : params.layers) {
                layer.weight += (*deltas)[k++];
                layer.bias += (*deltas)[k++];
            }
            if (trainable_mesh) {
                for (auto& [id, nodes] : params.coarse_nodes) {
                    const Matrix& d = (*deltas)[k++];
                    const CoarseMesh& coarse = cases.at(id).coarse;
                    std::vector<Vec2> pts(static_cast<std::size_t>(nodes.rows()));
                    std::vector<Vec2> delta(pts.size());
                    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
                        pts[static_cast<std::size_t>(i)] = {nodes(i, 0), nodes(i, 1)};
                        delta[static_cast<std::size_t>(i)] = {d(i, 0), d(i, 1)};
                    }
                    const std::span<const int> frozen =
                        cfg.freeze_boundary ? std::span<const int>(coarse.boundary_nodes) : std::span<const int>();
                    if (cfg.project_updates) {
                        auto proj = meshopt::project_update(pts, delta, coarse.mesh.elements, frozen);
                        flipped_this_epoch += proj.flipped_elements;
                        delta = std::move(proj.projected);
                    } else {
                        for (int v : frozen) delta[static_cast<std::size_t>(v)] = {};
                    }
                    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
                        nodes(i, 0) += delta[static_cast<std::size_t>(i)].x;
                        nodes(i, 1) += delta[static_cast<std::size_t>(i)].y;
                    }
                    auto now = orientation_signs(coarse.mesh, nodes);
                    auto& before = signs[id];
                    for (std::size_t e = 0; e < now.size(); ++e) {
                        if (now[e] != before[e]) ++result.orientation_sign_changes;
                    }
                    before = std::move(now);
                }
            }
            ++step;
            result.step_losses.push_back(loss_sum / ok);
        }

        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) emit(epoch, step, flipped_this_epoch);
    }

    result.params = std::move(params);
    result.adam = std::move(adam);
    return result;
}

data::Checkpoint to_checkpoint(const ModelParams& params, const gnn::AdamState& adam, std::uint64_t seed) {
    data::Checkpoint c;
    c.seed = seed;
    c.model_kind = static_cast<std::uint32_t>(params.kind);
    c.frozen_mesh = params.frozen_mesh;
    c.concat_layer = static_cast<std::uint32_t>(params.concat_layer);
    c.layers = params.layers;
    c.coarse_nodes = params.coarse_nodes;
    c.adam = adam;
    return c;
}

ModelParams from_checkpoint(const data::Checkpoint& ckpt) {
    ModelParams p;
    if (ckpt.model_kind > 1) throw data::DataError("checkpoint has unknown model kind");
    p.kind = static_cast<ModelKind>(ckpt.model_kind);
    p.frozen_mesh = ckpt.frozen_mesh;
    p.concat_layer = static_cast<int>(ckpt.concat_layer);
    p.layers = ckpt.layers;
    p.coarse_nodes = ckpt.coarse_nodes;
    check_channels(p);
    return p;
}

}  // namespace cfdgcn::pipeline
