#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <exception>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gda4rec/config.hpp"
#include "gda4rec/dataset.hpp"
#include "gda4rec/metrics.hpp"
#include "gda4rec/trainer.hpp"

#ifndef GDA4REC_VERSION
#define GDA4REC_VERSION "0.1.0"
#endif

// Experiment drivers behind the command-line commands. Each driver writes its
// artifacts plus one manifest.json into the output directory.
namespace gda4rec {

namespace fs = std::filesystem;

struct RunOptions {
    TrainConfig cfg;
    std::string command;
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    fs::path out_dir = "gda4rec-out";
    std::optional<std::size_t> fold;
    std::ostream* log = nullptr;  // progress and tables; may be null
};

inline std::uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open dataset file: " + path);
    }
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize k = 0; k < in.gcount(); ++k) {
            hash ^= static_cast<unsigned char>(buf[k]);
            hash *= 0x100000001b3ULL;
        }
    }
    return hash;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

inline std::string csv_number(double v) { return detail::format_double(v); }

class Manifest {
public:
    explicit Manifest(const RunOptions& opts) {
        doc_["command"] = opts.command;
        doc_["version"] = GDA4REC_VERSION;
        doc_["config_path"] = opts.config_path;
        doc_["config"] = config_map(opts.cfg);
        doc_["seed"] = opts.cfg.seed;
        doc_["overrides"] = nlohmann::json::object();
        for (const auto& [k, v] : opts.overrides) {
            doc_["overrides"][k] = v;
        }
        doc_["dataset"] = {{"path", opts.cfg.dataset_path}};
        if (!opts.cfg.dataset_path.empty() && fs::exists(opts.cfg.dataset_path)) {
            doc_["dataset"]["fnv1a64"] = hex64(file_checksum(opts.cfg.dataset_path));
        }
        if (opts.fold) {
            doc_["fold"] = *opts.fold;
        }
        doc_["outputs"] = nlohmann::json::array();
    }

    nlohmann::json& doc() { return doc_; }
    void add_output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }

    fs::path write(const fs::path& dir) {
        fs::path path = dir / "manifest.json";
        add_output(path);
        std::ofstream out(path);
        out << doc_.dump(2) << '\n';
        return path;
    }

private:
    nlohmann::json doc_;
};

/// Rebuilds the configuration recorded in a manifest.
inline TrainConfig config_from_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open manifest: " + path);
    }
    auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.contains("config")) {
        throw ConfigError("manifest has no config snapshot: " + path);
    }
    TrainConfig cfg;
    for (const auto& [key, value] : doc["config"].items()) {
        set_config_value(cfg, key, value.get<std::string>());
    }
    return cfg;
}

inline InteractionSet load_dataset(const TrainConfig& cfg) {
    if (cfg.dataset_path.empty()) {
        throw ConfigError("config key dataset.path is not set");
    }
    return load_interactions(cfg.dataset_path);
}

inline void write_metrics_header(std::ostream& out) {
    out << "fold,k,precision,recall,ndcg,users_evaluated,users_skipped\n";
}

inline void write_metrics_row(std::ostream& out, const std::string& fold, const RankingMetrics& m) {
    out << fold << ',' << m.k << ',' << csv_number(m.precision) << ',' << csv_number(m.recall) << ','
        << csv_number(m.ndcg) << ',' << m.users_evaluated << ',' << m.users_skipped << '\n';
}

inline void write_history(std::ostream& out, const std::vector<HistoryRow>& rows) {
    out << "epoch,step,rec,cl,recon,ddl,reg,total,recall20,ndcg20\n";
    for (const auto& r : rows) {
        out << r.epoch << ',' << r.step << ',' << csv_number(r.loss.rec) << ',' << csv_number(r.loss.cl) << ','
            << csv_number(r.loss.recon) << ',' << csv_number(r.loss.ddl) << ',' << csv_number(r.loss.reg) << ','
            << csv_number(r.loss.total) << ',' << (r.recall20 ? csv_number(*r.recall20) : "") << ','
            << (r.ndcg20 ? csv_number(*r.ndcg20) : "") << '\n';
    }
}

/// Renders rows of cells as a left-aligned plain-text table.
inline std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        widths.resize(std::max(widths.size(), row.size()), 0);
        for (std::size_t c = 0; c < row.size(); ++c) {
            widths[c] = std::max(widths[c], row[c].size());
        }
    }
    std::ostringstream out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << std::left << std::setw(static_cast<int>(widths[c] + 2)) << row[c];
        }
        out << '\n';
    }
    return out.str();
}

inline std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

inline void log_line(const RunOptions& opts, const std::string& text) {
    if (opts.log != nullptr) {
        *opts.log << text << '\n' << std::flush;
    }
}

// ---------------------------------------------------------------- prepare

inline nlohmann::json cmd_prepare(const RunOptions& opts) {
    validate(opts.cfg);
    fs::create_directories(opts.out_dir);
    InteractionSet data = load_dataset(opts.cfg);
    auto folds = make_folds(data, opts.cfg.folds, opts.cfg.seed);
    nlohmann::json doc = fold_manifest(folds, opts.cfg.seed);
    doc["num_users"] = data.num_users;
    doc["num_items"] = data.num_items;
    doc["num_pairs"] = data.size();
    fs::path path = opts.out_dir / "folds.json";
    std::ofstream(path) << doc.dump(2) << '\n';
    Manifest manifest(opts);
    manifest.add_output(path);
    manifest.write(opts.out_dir);
    log_line(opts, "users=" + std::to_string(data.num_users) + " items=" + std::to_string(data.num_items) +
                       " interactions=" + std::to_string(data.size()));
    return doc;
}

// ------------------------------------------------------------------ train

struct TrainOutcome {
    FitResult fit;
    std::vector<fs::path> artifacts;
};

inline FitHooks progress_hooks(const RunOptions& opts, std::size_t fold) {
    FitHooks hooks;
    if (opts.log != nullptr) {
        hooks.on_history = [&opts, fold](const HistoryRow& row) {
            std::string line = "fold " + std::to_string(fold) + " epoch " + std::to_string(row.epoch) +
                               " loss " + fixed4(row.loss.total);
            if (row.recall20) {
                line += " recall@20 " + fixed4(*row.recall20) + " ndcg@20 " + fixed4(*row.ndcg20);
            }
            log_line(opts, line);
        };
    }
    return hooks;
}

inline TrainOutcome cmd_train(const RunOptions& opts) {
    validate(opts.cfg);
    fs::create_directories(opts.out_dir);
    InteractionSet data = load_dataset(opts.cfg);
    auto folds = make_folds(data, opts.cfg.folds, opts.cfg.seed);
    const std::size_t f = opts.fold.value_or(0);
    if (f >= folds.size()) {
        throw ConfigError("--fold " + std::to_string(f) + " out of range for " + std::to_string(folds.size()) +
                          " folds");
    }
    TrainOutcome out;
    out.fit = fit(opts.cfg, folds[f], progress_hooks(opts, f));

    fs::path checkpoint = opts.out_dir / "checkpoint.json";
    save_checkpoint(checkpoint.string(), out.fit.best);
    fs::path history = opts.out_dir / "history.csv";
    {
        std::ofstream h(history);
        write_history(h, out.fit.history);
    }
    fs::path metrics = opts.out_dir / "metrics.csv";
    {
        std::ofstream m(metrics);
        write_metrics_header(m);
        for (const auto& r : out.fit.metrics) {
            write_metrics_row(m, std::to_string(f), r);
        }
    }
    Manifest manifest(opts);
    manifest.doc()["fold"] = f;
    manifest.doc()["best_epoch"] = out.fit.best_epoch;
    for (const auto& p : {checkpoint, history, metrics}) {
        manifest.add_output(p);
    }
    out.artifacts = {checkpoint, history, metrics, manifest.write(opts.out_dir)};
    return out;
}

// --------------------------------------------------------------- evaluate

inline std::vector<RankingMetrics> cmd_evaluate(const RunOptions& opts, const std::string& checkpoint_path) {
    validate(opts.cfg);
    fs::create_directories(opts.out_dir);
    InteractionSet data = load_dataset(opts.cfg);
    auto folds = make_folds(data, opts.cfg.folds, opts.cfg.seed);
    const std::size_t f = opts.fold.value_or(0);
    if (f >= folds.size()) {
        throw ConfigError("--fold out of range");
    }
    ModelParams params = load_checkpoint(checkpoint_path);
    if (params.num_users != data.num_users || params.num_items != data.num_items || params.dim != opts.cfg.d) {
        throw DataError("checkpoint shape does not match dataset/config");
    }
    FoldContext ctx(folds[f], opts.cfg);
    auto result = evaluate_fold(params, ctx, opts.cfg);
    fs::path metrics = opts.out_dir / "metrics.csv";
    {
        std::ofstream m(metrics);
        write_metrics_header(m);
        for (const auto& r : result) {
            write_metrics_row(m, std::to_string(f), r);
        }
    }
    Manifest manifest(opts);
    manifest.doc()["checkpoint"] = checkpoint_path;
    manifest.add_output(metrics);
    manifest.write(opts.out_dir);
    return result;
}

// --------------------------------------------------------------- crossval

struct CrossvalResult {
    std::vector<std::vector<RankingMetrics>> folds;  // [fold][cutoff]
    std::vector<RankingMetrics> mean;                // [cutoff]

    const RankingMetrics& mean_at(std::size_t k) const {
        for (const auto& m : mean) {
            if (m.k == k) {
                return m;
            }
        }
        throw std::out_of_range("no metrics at k=" + std::to_string(k));
    }
};

inline std::vector<RankingMetrics> average_metrics(const std::vector<std::vector<RankingMetrics>>& folds) {
    std::vector<RankingMetrics> mean = folds.front();
    for (std::size_t c = 0; c < mean.size(); ++c) {
        RankingMetrics acc;
        acc.k = mean[c].k;
        for (const auto& f : folds) {
            acc.precision += f[c].precision;
            acc.recall += f[c].recall;
            acc.ndcg += f[c].ndcg;
            acc.users_evaluated += f[c].users_evaluated;
            acc.users_skipped += f[c].users_skipped;
        }
        const auto n = static_cast<double>(folds.size());
        acc.precision /= n;
        acc.recall /= n;
        acc.ndcg /= n;
        mean[c] = acc;
    }
    return mean;
}

/// Fits every fold (or only opts.fold when set). With cfg.threads > 1 folds
/// run concurrently; each fold's result is independent of scheduling.
inline CrossvalResult run_crossval(const RunOptions& opts, const InteractionSet& data) {
    validate(opts.cfg);
    auto folds = make_folds(data, opts.cfg.folds, opts.cfg.seed);
    std::vector<std::size_t> selected;
    if (opts.fold) {
        if (*opts.fold >= folds.size()) {
            throw ConfigError("--fold out of range");
        }
        selected.push_back(*opts.fold);
    } else {
        for (std::size_t f = 0; f < folds.size(); ++f) {
            selected.push_back(f);
        }
    }
    CrossvalResult result;
    result.folds.resize(selected.size());
    const std::size_t workers = std::min(std::max<std::size_t>(opts.cfg.threads, 1), selected.size());
    if (workers <= 1) {
        for (std::size_t s = 0; s < selected.size(); ++s) {
            result.folds[s] = fit(opts.cfg, folds[selected[s]], progress_hooks(opts, selected[s])).metrics;
        }
    } else {
        TrainConfig inner = opts.cfg;
        inner.threads = 1;
        std::vector<std::exception_ptr> errors(selected.size());
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t s = next++; s < selected.size(); s = next++) {
                    try {
                        result.folds[s] = fit(inner, folds[selected[s]]).metrics;
                    } catch (...) {
                        errors[s] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
        for (auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    }
    result.mean = average_metrics(result.folds);
    return result;
}

inline void write_crossval_csv(std::ostream& out, const CrossvalResult& r, const std::vector<std::size_t>& fold_ids) {
    write_metrics_header(out);
    for (std::size_t c = 0; c < r.mean.size(); ++c) {
        for (std::size_t s = 0; s < r.folds.size(); ++s) {
            write_metrics_row(out, std::to_string(fold_ids[s]), r.folds[s][c]);
        }
        write_metrics_row(out, "mean", r.mean[c]);
    }
}

/// Table-style rendering: one block per cutoff, Precision/Recall/NDCG rows.
inline std::string render_crossval(const CrossvalResult& r, const std::vector<std::size_t>& fold_ids) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Top@k", "Metric"};
    for (auto f : fold_ids) {
        header.push_back("fold" + std::to_string(f));
    }
    header.push_back("mean");
    rows.push_back(header);
    for (std::size_t c = 0; c < r.mean.size(); ++c) {
        for (int metric = 0; metric < 3; ++metric) {
            auto pick = [metric](const RankingMetrics& m) {
                return metric == 0 ? m.precision : metric == 1 ? m.recall : m.ndcg;
            };
            std::vector<std::string> row{metric == 0 ? std::to_string(r.mean[c].k) : "",
                                         metric == 0 ? "Precision" : metric == 1 ? "Recall" : "NDCG"};
            for (const auto& f : r.folds) {
                row.push_back(fixed4(pick(f[c])));
            }
            row.push_back(fixed4(pick(r.mean[c])));
            rows.push_back(row);
        }
    }
    return render_table(rows);
}

inline std::vector<std::size_t> selected_folds(const RunOptions& opts) {
    if (opts.fold) {
        return {*opts.fold};
    }
    std::vector<std::size_t> ids(opts.cfg.folds);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

inline CrossvalResult cmd_crossval(const RunOptions& opts) {
    fs::create_directories(opts.out_dir);
    InteractionSet data = load_dataset(opts.cfg);
    CrossvalResult result = run_crossval(opts, data);
    auto ids = selected_folds(opts);
    fs::path csv = opts.out_dir / "crossval.csv";
    {
        std::ofstream out(csv);
        write_crossval_csv(out, result, ids);
    }
    fs::path txt = opts.out_dir / "crossval.txt";
    std::string table = render_crossval(result, ids);
    std::ofstream(txt) << table;
    log_line(opts, table);
    Manifest manifest(opts);
    manifest.add_output(csv);
    manifest.add_output(txt);
    manifest.write(opts.out_dir);
    return result;
}

// ----------------------------------------------------------------- ablate

inline const std::vector<std::string>& known_variants() {
    static const std::vector<std::string> names{"full", "w/o-cm", "w/o-g", "w/o-f", "w/-rand", "w/-un"};
    return names;
}

/// Config overrides defining each ablation variant.
inline std::vector<std::pair<std::string, std::string>> variant_overrides(const std::string& variant) {
    if (variant == "full") {
        return {};
    }
    if (variant == "w/o-cm") {
        return {{"complement.enabled", "false"}};
    }
    if (variant == "w/o-g") {
        return {{"noise.mode", "none"}};
    }
    if (variant == "w/o-f") {
        return {{"filter.enabled", "false"}};
    }
    if (variant == "w/-rand") {
        return {{"noise.mode", "random"}};
    }
    if (variant == "w/-un") {
        return {{"noise.distribution", "uniform"}, {"ddl", "mmd"}};
    }
    throw ConfigError("unknown ablation variant: " + variant);
}

inline TrainConfig apply_variant(TrainConfig cfg, const std::string& variant) {
    for (const auto& [k, v] : variant_overrides(variant)) {
        set_config_value(cfg, k, v);
    }
    return cfg;
}

struct AblationResult {
    std::vector<std::string> variants;
    std::vector<CrossvalResult> results;
};

inline std::string render_ablation(const AblationResult& a) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Top@k", "Metric"};
    header.insert(header.end(), a.variants.begin(), a.variants.end());
    rows.push_back(header);
    const auto& cutoffs = a.results.front().mean;
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
        for (int metric = 0; metric < 3; ++metric) {
            std::vector<std::string> row{metric == 0 ? std::to_string(cutoffs[c].k) : "",
                                         metric == 0 ? "Precision" : metric == 1 ? "Recall" : "NDCG"};
            for (const auto& r : a.results) {
                const auto& m = r.mean[c];
                row.push_back(fixed4(metric == 0 ? m.precision : metric == 1 ? m.recall : m.ndcg));
            }
            rows.push_back(row);
        }
    }
    return render_table(rows);
}

inline AblationResult cmd_ablate(const RunOptions& opts, const std::vector<std::string>& variants) {
    for (const auto& v : variants) {
        variant_overrides(v);  // reject unknown names before any training
    }
    fs::create_directories(opts.out_dir);
    InteractionSet data = load_dataset(opts.cfg);
    AblationResult out;
    for (const auto& v : variants) {
        RunOptions vopts = opts;
        vopts.cfg = apply_variant(opts.cfg, v);
        log_line(opts, "variant " + v);
        out.variants.push_back(v);
        out.results.push_back(run_crossval(vopts, data));
    }
    fs::path csv = opts.out_dir / "ablation.csv";
    {
        std::ofstream f(csv);
        f << "k,metric";
        for (const auto& v : out.variants) {
            f << ',' << v;
        }
        f << '\n';
        for (std::size_t c = 0; c < out.results.front().mean.size(); ++c) {
            for (int metric = 0; metric < 3; ++metric) {
                f << out.results.front().mean[c].k << ','
                  << (metric == 0 ? "precision" : metric == 1 ? "recall" : "ndcg");
                for (const auto& r : out.results) {
                    const auto& m = r.mean[c];
                    f << ',' << csv_number(metric == 0 ? m.precision : metric == 1 ? m.recall : m.ndcg);
                }
                f << '\n';
            }
        }
    }
    fs::path txt = opts.out_dir / "ablation.txt";
    std::string table = render_ablation(out);
    std::ofstream(txt) << table;
    log_line(opts, table);
    Manifest manifest(opts);
    manifest.doc()["variants"] = variants;
    manifest.add_output(csv);
    manifest.add_output(txt);
    manifest.write(opts.out_dir);
    return out;
}

// --------------------------------------------------------------- diagnose

struct LayerCell {
    LayerView view_a;
    LayerView view_b;
    double recall20 = 0.0;
    double ndcg20 = 0.0;
};

/// Every (view_a, view_b) in {1..L, avg}^2, trained and evaluated on one fold.
inline std::vector<LayerCell> run_layer_grid(const RunOptions& opts, const InteractionSet& data) {
    auto folds = make_folds(data, opts.cfg.folds, opts.cfg.seed);
    const auto& fold = folds.at(opts.fold.value_or(0));
    std::vector<LayerView> views;
    for (std::size_t l = 1; l <= opts.cfg.L; ++l) {
        views.push_back({l});
    }
    views.push_back(LayerView::average());
    std::vector<LayerCell> cells;
    for (auto a : views) {
        for (auto b : views) {
            TrainConfig cfg = opts.cfg;
            cfg.cl_view_a = a;
            cfg.cl_view_b = b;
            auto result = fit(cfg, fold);
            cells.push_back({a, b, result.metrics.back().recall, result.metrics.back().ndcg});
            log_line(opts, "views (" + a.str() + "," + b.str() + ") ndcg@20 " + fixed4(cells.back().ndcg20));
        }
    }
    return cells;
}

struct TrajectoryPoint {
    std::size_t epoch = 0;
    double align = 0.0;
    double uniform = 0.0;
};

/// Alignment/uniformity after each epoch on up to `max_pairs` test pairs of
/// the selected fold.
inline std::vector<TrajectoryPoint> run_trajectory(const RunOptions& opts, const InteractionSet& data,
                                                   std::size_t max_pairs = 2048) {
    auto folds = make_folds(data, opts.cfg.folds, opts.cfg.seed);
    const auto& fold = folds.at(opts.fold.value_or(0));
    std::vector<Interaction> pairs = fold.test.pairs;
    Rng rng(opts.cfg.seed);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    pairs.resize(std::min(pairs.size(), max_pairs));
    std::vector<TrajectoryPoint> points;
    FitHooks hooks;
    hooks.on_epoch = [&](std::size_t epoch, const ModelParams& params, const NormalizedGraph& graph) {
        Embeddings emb = eval_embeddings(params, graph, opts.cfg);
        auto au = alignment_uniformity(emb.users, emb.items, pairs, opts.cfg.uniformity);
        points.push_back({epoch, au.align, au.uniform});
    };
    fit(opts.cfg, fold, hooks);
    return points;
}

struct GammaPoint {
    double gamma = 0.0;
    RankingMetrics top20;
};

inline std::vector<GammaPoint> run_gamma_sweep(const RunOptions& opts, const InteractionSet& data,
                                               const std::vector<double>& gammas) {
    std::vector<GammaPoint> out;
    for (double g : gammas) {
        RunOptions gopts = opts;
        gopts.cfg.gamma = g;
        auto r = run_crossval(gopts, data);
        out.push_back({g, r.mean_at(20)});
        log_line(opts, "gamma " + csv_number(g) + " recall@20 " + fixed4(out.back().top20.recall));
    }
    return out;
}

enum class DiagnoseMode { layers, trajectory, gamma };

inline DiagnoseMode parse_diagnose_mode(const std::string& s) {
    if (s == "layers") {
        return DiagnoseMode::layers;
    }
    if (s == "trajectory") {
        return DiagnoseMode::trajectory;
    }
    if (s == "gamma") {
        return DiagnoseMode::gamma;
    }
    throw ConfigError("unknown diagnose mode: " + s + " (expected layers|trajectory|gamma)");
}

inline fs::path cmd_diagnose(const RunOptions& opts, DiagnoseMode mode, const std::vector<double>& gammas) {
    validate(opts.cfg);
    fs::create_directories(opts.out_dir);
    InteractionSet data = load_dataset(opts.cfg);
    Manifest manifest(opts);
    fs::path csv;
    if (mode == DiagnoseMode::layers) {
        auto cells = run_layer_grid(opts, data);
        csv = opts.out_dir / "layers.csv";
        std::ofstream f(csv);
        f << "view_a,view_b,recall20,ndcg20\n";
        for (const auto& c : cells) {
            f << c.view_a.str() << ',' << c.view_b.str() << ',' << csv_number(c.recall20) << ','
              << csv_number(c.ndcg20) << '\n';
        }
        manifest.doc()["mode"] = "layers";
    } else if (mode == DiagnoseMode::trajectory) {
        auto points = run_trajectory(opts, data);
        csv = opts.out_dir / "trajectory.csv";
        std::ofstream f(csv);
        f << "epoch,align,uniform\n";
        for (const auto& p : points) {
            f << p.epoch << ',' << csv_number(p.align) << ',' << csv_number(p.uniform) << '\n';
        }
        manifest.doc()["mode"] = "trajectory";
    } else {
        auto points = run_gamma_sweep(opts, data, gammas);
        csv = opts.out_dir / "gamma.csv";
        std::ofstream f(csv);
        f << "gamma,precision20,recall20,ndcg20\n";
        for (const auto& p : points) {
            f << csv_number(p.gamma) << ',' << csv_number(p.top20.precision) << ',' << csv_number(p.top20.recall)
              << ',' << csv_number(p.top20.ndcg) << '\n';
        }
        manifest.doc()["mode"] = "gamma";
        manifest.doc()["gammas"] = gammas;
    }
    manifest.add_output(csv);
    manifest.write(opts.out_dir);
    return csv;
}

}  // namespace gda4rec
