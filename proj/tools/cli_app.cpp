#include "cli_app.hpp"

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>

#include "gda4rec/experiment.hpp"

namespace gda4rec::cli {
namespace {

struct CommonArgs {
    std::string config_path;
    std::string manifest_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::optional<std::size_t> fold;
    std::optional<std::size_t> threads;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "configuration file (key = value lines)");
    cmd->add_option("--manifest", a.manifest_path, "reuse the configuration recorded in a manifest.json");
    cmd->add_option("--set", a.sets, "override one key, e.g. --set L=2 (repeatable)");
    cmd->add_option("--out", a.out_dir, "output directory (default: $GDA_REC_OUT or ./gda4rec-out)");
    cmd->add_option("--fold", a.fold, "fold index");
    cmd->add_option("--threads", a.threads, "worker threads");
    cmd->add_option("--seed", a.seed, "random seed");
}

RunOptions resolve(const std::string& command, const CommonArgs& a, std::ostream& out) {
    RunOptions opts;
    opts.command = command;
    opts.log = &out;
    if (!a.manifest_path.empty()) {
        opts.cfg = config_from_manifest(a.manifest_path);
        opts.config_path = a.manifest_path;
    } else if (!a.config_path.empty()) {
        opts.cfg = load_config(a.config_path);
        opts.config_path = a.config_path;
        auto& path = opts.cfg.dataset_path;
        if (!path.empty() && std::filesystem::path(path).is_relative() && !std::filesystem::exists(path)) {
            auto candidate = std::filesystem::path(a.config_path).parent_path() / path;
            if (std::filesystem::exists(candidate)) {
                path = candidate.string();
            }
        }
    }
    for (const auto& s : a.sets) {
        opts.overrides.push_back(apply_override(opts.cfg, s));
    }
    if (a.threads) {
        opts.cfg.threads = *a.threads;
        opts.overrides.emplace_back("threads", std::to_string(*a.threads));
    }
    if (a.seed) {
        opts.cfg.seed = *a.seed;
        opts.overrides.emplace_back("seed", std::to_string(*a.seed));
    }
    opts.fold = a.fold;
    if (!a.out_dir.empty()) {
        opts.out_dir = a.out_dir;
    } else if (const char* env = std::getenv("GDA_REC_OUT"); env != nullptr && *env != '\0') {
        opts.out_dir = env;
    }
    validate(opts.cfg);
    return opts;
}

std::vector<double> parse_gammas(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(detail::parse_number<double>("--gammas", item));
    }
    if (out.empty()) {
        throw ConfigError("--gammas needs at least one value");
    }
    return out;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"GDA4Rec: graph recommender with generative noise and complement views", "gda4rec"};
    app.require_subcommand(1);
    app.set_version_flag("--version", GDA4REC_VERSION);

    CommonArgs prepare_args, train_args, eval_args, cv_args, ablate_args, diag_args;
    auto* prepare = app.add_subcommand("prepare", "load the dataset and write the fold assignment");
    add_common(prepare, prepare_args);
    auto* train = app.add_subcommand("train", "train on one fold");
    add_common(train, train_args);
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on one fold");
    add_common(evaluate, eval_args);
    std::string checkpoint;
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint.json to evaluate")->required();
    auto* crossval = app.add_subcommand("crossval", "train and evaluate every fold");
    add_common(crossval, cv_args);
    auto* ablate = app.add_subcommand("ablate", "cross-validate ablation variants");
    add_common(ablate, ablate_args);
    std::string variants = "full,w/o-cm,w/o-g,w/o-f,w/-rand,w/-un";
    ablate->add_option("--variants", variants, "comma-separated variant names");
    auto* diagnose = app.add_subcommand("diagnose", "layer grid, alignment/uniformity trajectory or gamma sweep");
    add_common(diagnose, diag_args);
    std::string mode;
    diagnose->add_option("--mode", mode, "layers | trajectory | gamma")->required();
    std::string gammas = "1,2,3,4,5";
    diagnose->add_option("--gammas", gammas, "comma-separated gamma values for --mode gamma");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << GDA4REC_VERSION << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config);
    }

    try {
        if (prepare->parsed()) {
            cmd_prepare(resolve("prepare", prepare_args, out));
        } else if (train->parsed()) {
            auto result = cmd_train(resolve("train", train_args, out));
            out << "best epoch " << result.fit.best_epoch << '\n';
            for (const auto& m : result.fit.metrics) {
                out << "k=" << m.k << " precision " << fixed4(m.precision) << " recall " << fixed4(m.recall)
                    << " ndcg " << fixed4(m.ndcg) << '\n';
            }
        } else if (evaluate->parsed()) {
            auto metrics = cmd_evaluate(resolve("evaluate", eval_args, out), checkpoint);
            for (const auto& m : metrics) {
                out << "k=" << m.k << " precision " << fixed4(m.precision) << " recall " << fixed4(m.recall)
                    << " ndcg " << fixed4(m.ndcg) << '\n';
            }
        } else if (crossval->parsed()) {
            cmd_crossval(resolve("crossval", cv_args, out));
        } else if (ablate->parsed()) {
            auto names = split_list(variants);
            for (const auto& v : names) {
                variant_overrides(v);
            }
            cmd_ablate(resolve("ablate", ablate_args, out), names);
        } else if (diagnose->parsed()) {
            DiagnoseMode m = parse_diagnose_mode(mode);
            auto gamma_list = parse_gammas(gammas);
            auto path = cmd_diagnose(resolve("diagnose", diag_args, out), m, gamma_list);
            out << "wrote " << path.string() << '\n';
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config);
    } catch (const ParseError& e) {
        err << "data error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::data);
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::data);
    } catch (const DivergenceError& e) {
        err << "divergence: " << e.what() << '\n';
        return static_cast<int>(ExitCode::divergence);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return static_cast<int>(ExitCode::ok);
}

}  // namespace gda4rec::cli
