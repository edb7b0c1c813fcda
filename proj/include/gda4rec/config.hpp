#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gda4rec/errors.hpp"
#include "gda4rec/losses.hpp"
#include "gda4rec/metrics.hpp"
#include "gda4rec/model.hpp"

namespace gda4rec {

enum class DdlKind { kl, mmd };
enum class EvalNoise { off, sample };

struct TrainConfig {
    std::string dataset_path;
    std::size_t d = 64;
    std::size_t h = 64;
    std::size_t L = 3;
    double gamma = 3.0;
    double tau = 0.2;
    double lambda = 1.0;
    double learning_rate = 0.001;
    std::size_t batch_size = 2048;
    double reg_coeff = 1e-4;
    std::size_t epochs_max = 500;
    std::size_t patience = 10;
    std::size_t eval_interval = 5;
    std::uint64_t seed = 2024;
    std::size_t folds = 5;
    std::size_t negatives = 1;
    NoiseConfig noise;
    DdlKind ddl = DdlKind::kl;
    KlFormula kl_formula = KlFormula::standard;
    bool complement_enabled = true;
    bool filter_enabled = true;
    LayerView cl_view_a = LayerView::average();
    LayerView cl_view_b{1};
    bool cl_normalize = true;
    bool aug_enabled = true;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    EvalNoise eval_noise = EvalNoise::off;
    UniformityFormula uniformity = UniformityFormula::pairwise;
    std::size_t threads = 1;

    /// Plain LightGCN: no noise, no complement channel, no contrastive or
    /// augmentation terms.
    static TrainConfig lightgcn() {
        TrainConfig c;
        c.noise.mode = NoiseMode::none;
        c.complement_enabled = false;
        c.lambda = 0.0;
        c.aug_enabled = false;
        return c;
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&);
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ConfigError("invalid value '" + text + "' for key " + key);
    }
    return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "on") {
        return true;
    }
    if (text == "false" || text == "0" || text == "off") {
        return false;
    }
    throw ConfigError("invalid value '" + text + "' for key " + key + " (expected true/false)");
}

template <typename E>
E parse_enum(const std::string& key, const std::string& text, std::initializer_list<std::pair<const char*, E>> names) {
    for (const auto& [name, value] : names) {
        if (text == name) {
            return value;
        }
    }
    std::string allowed;
    for (const auto& [name, value] : names) {
        allowed += allowed.empty() ? name : std::string("|") + name;
    }
    throw ConfigError("invalid value '" + text + "' for key " + key + " (expected " + allowed + ")");
}

template <typename E>
std::string enum_name(E value, std::initializer_list<std::pair<const char*, E>> names) {
    for (const auto& [name, v] : names) {
        if (v == value) {
            return name;
        }
    }
    return "?";
}

struct ConfigField {
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&)> set;
};

#define GDA_SIZE_FIELD(key, member)                                                                               \
    {                                                                                                             \
        key, {                                                                                                    \
            [](const TrainConfig& c) { return std::to_string(c.member); },                                        \
                [](TrainConfig& c, const std::string& v) { c.member = parse_number<std::size_t>(key, v); }        \
        }                                                                                                         \
    }
#define GDA_DOUBLE_FIELD(key, member)                                                                             \
    {                                                                                                             \
        key, {                                                                                                    \
            [](const TrainConfig& c) { return format_double(c.member); },                                         \
                [](TrainConfig& c, const std::string& v) { c.member = parse_number<double>(key, v); }             \
        }                                                                                                         \
    }
#define GDA_BOOL_FIELD(key, member)                                                                               \
    {                                                                                                             \
        key, {                                                                                                    \
            [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); },                        \
                [](TrainConfig& c, const std::string& v) { c.member = parse_bool(key, v); }                       \
        }                                                                                                         \
    }
#define GDA_ENUM_FIELD(key, member, ...)                                                                          \
    {                                                                                                             \
        key, {                                                                                                    \
            [](const TrainConfig& c) { return enum_name(c.member, {__VA_ARGS__}); },                              \
                [](TrainConfig& c, const std::string& v) { c.member = parse_enum(key, v, {__VA_ARGS__}); }        \
        }                                                                                                         \
    }

inline const std::map<std::string, ConfigField>& config_fields() {
    using P = std::pair<const char*, NoiseMode>;
    using D = std::pair<const char*, NoiseDistribution>;
    using S = std::pair<const char*, NoiseScale>;
    using K = std::pair<const char*, DdlKind>;
    using F = std::pair<const char*, KlFormula>;
    using EN = std::pair<const char*, EvalNoise>;
    using U = std::pair<const char*, UniformityFormula>;
    static const std::map<std::string, ConfigField> fields{
        {"dataset.path",
         {[](const TrainConfig& c) { return c.dataset_path; },
          [](TrainConfig& c, const std::string& v) { c.dataset_path = v; }}},
        GDA_SIZE_FIELD("d", d),
        GDA_SIZE_FIELD("h", h),
        GDA_SIZE_FIELD("L", L),
        GDA_DOUBLE_FIELD("gamma", gamma),
        GDA_DOUBLE_FIELD("tau", tau),
        GDA_DOUBLE_FIELD("lambda", lambda),
        GDA_DOUBLE_FIELD("learning_rate", learning_rate),
        GDA_SIZE_FIELD("batch_size", batch_size),
        GDA_DOUBLE_FIELD("reg_coeff", reg_coeff),
        GDA_SIZE_FIELD("epochs_max", epochs_max),
        GDA_SIZE_FIELD("patience", patience),
        GDA_SIZE_FIELD("eval_interval", eval_interval),
        {"seed",
         {[](const TrainConfig& c) { return std::to_string(c.seed); },
          [](TrainConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }}},
        GDA_SIZE_FIELD("folds", folds),
        GDA_SIZE_FIELD("negatives", negatives),
        GDA_ENUM_FIELD("noise.mode", noise.mode, P{"generative", NoiseMode::generative}, P{"random", NoiseMode::random},
                       P{"none", NoiseMode::none}),
        GDA_ENUM_FIELD("noise.distribution", noise.distribution, D{"gaussian", NoiseDistribution::gaussian},
                       D{"uniform", NoiseDistribution::uniform}),
        GDA_ENUM_FIELD("noise.scale", noise.scale, S{"variance", NoiseScale::variance},
                       S{"stddev", NoiseScale::stddev}),
        GDA_DOUBLE_FIELD("noise.random_variance", noise.random_variance),
        GDA_DOUBLE_FIELD("noise.magnitude", noise.magnitude),
        GDA_ENUM_FIELD("ddl", ddl, K{"kl", DdlKind::kl}, K{"mmd", DdlKind::mmd}),
        GDA_ENUM_FIELD("kl.formula", kl_formula, F{"standard", KlFormula::standard}, F{"paper", KlFormula::paper}),
        GDA_BOOL_FIELD("complement.enabled", complement_enabled),
        GDA_BOOL_FIELD("filter.enabled", filter_enabled),
        {"cl.view_a",
         {[](const TrainConfig& c) { return c.cl_view_a.str(); },
          [](TrainConfig& c, const std::string& v) { c.cl_view_a = parse_layer_view(v); }}},
        {"cl.view_b",
         {[](const TrainConfig& c) { return c.cl_view_b.str(); },
          [](TrainConfig& c, const std::string& v) { c.cl_view_b = parse_layer_view(v); }}},
        GDA_BOOL_FIELD("cl.normalize", cl_normalize),
        GDA_BOOL_FIELD("aug.enabled", aug_enabled),
        GDA_DOUBLE_FIELD("adam.beta1", adam_beta1),
        GDA_DOUBLE_FIELD("adam.beta2", adam_beta2),
        GDA_DOUBLE_FIELD("adam.eps", adam_eps),
        GDA_ENUM_FIELD("eval.noise", eval_noise, EN{"off", EvalNoise::off}, EN{"sample", EvalNoise::sample}),
        GDA_ENUM_FIELD("uniformity", uniformity, U{"pairwise", UniformityFormula::pairwise},
                       U{"paper", UniformityFormula::paper}),
        GDA_SIZE_FIELD("threads", threads),
    };
    return fields;
}

#undef GDA_SIZE_FIELD
#undef GDA_DOUBLE_FIELD
#undef GDA_BOOL_FIELD
#undef GDA_ENUM_FIELD

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Sets one dotted key; unknown keys raise ConfigError naming the key.
inline void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    const auto& fields = detail::config_fields();
    auto it = fields.find(key);
    if (it == fields.end()) {
        throw ConfigError("unknown config key: " + key);
    }
    it->second.set(cfg, value);
}

inline std::string get_config_value(const TrainConfig& cfg, const std::string& key) {
    const auto& fields = detail::config_fields();
    auto it = fields.find(key);
    if (it == fields.end()) {
        throw ConfigError("unknown config key: " + key);
    }
    return it->second.get(cfg);
}

/// Applies a `key=value` override.
inline std::pair<std::string, std::string> apply_override(TrainConfig& cfg, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must be key=value: " + assignment);
    }
    std::string key = detail::trim(assignment.substr(0, eq));
    std::string value = detail::trim(assignment.substr(eq + 1));
    set_config_value(cfg, key, value);
    return {key, value};
}

inline void validate(const TrainConfig& c) {
    auto positive = [](const char* key, double v) {
        if (!(v > 0.0)) {
            throw ConfigError(std::string("config key ") + key + " must be positive");
        }
    };
    positive("d", static_cast<double>(c.d));
    positive("h", static_cast<double>(c.h));
    positive("L", static_cast<double>(c.L));
    positive("tau", c.tau);
    positive("learning_rate", c.learning_rate);
    positive("batch_size", static_cast<double>(c.batch_size));
    positive("epochs_max", static_cast<double>(c.epochs_max));
    positive("patience", static_cast<double>(c.patience));
    positive("eval_interval", static_cast<double>(c.eval_interval));
    positive("negatives", static_cast<double>(c.negatives));
    positive("noise.random_variance", c.noise.random_variance);
    positive("adam.eps", c.adam_eps);
    if (c.gamma < 0.0) {
        throw ConfigError("config key gamma must be nonnegative");
    }
    if (c.lambda < 0.0 || c.reg_coeff < 0.0 || c.noise.magnitude < 0.0) {
        throw ConfigError("config keys lambda, reg_coeff and noise.magnitude must be nonnegative");
    }
    if (c.folds < 2) {
        throw ConfigError("config key folds must be at least 2");
    }
    if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0 && c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) {
        throw ConfigError("config keys adam.beta1/adam.beta2 must lie in [0, 1)");
    }
    for (auto [key, view] : {std::pair{"cl.view_a", c.cl_view_a}, std::pair{"cl.view_b", c.cl_view_b}}) {
        if (view.layer > c.L) {
            throw ConfigError(std::string("config key ") + key + " selects layer " + std::to_string(view.layer) +
                              " but L=" + std::to_string(c.L));
        }
    }
}

/// `key = value` lines; `#` starts a comment.
inline TrainConfig parse_config(std::istream& in, TrainConfig cfg = {}) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.resize(hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.find('=') == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        apply_override(cfg, line);
    }
    return cfg;
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    return parse_config(in);
}

inline std::string serialize_config(const TrainConfig& cfg) {
    std::ostringstream out;
    for (const auto& [key, field] : detail::config_fields()) {
        out << key << " = " << field.get(cfg) << '\n';
    }
    return out.str();
}

inline std::map<std::string, std::string> config_map(const TrainConfig& cfg) {
    std::map<std::string, std::string> out;
    for (const auto& [key, field] : detail::config_fields()) {
        out[key] = field.get(cfg);
    }
    return out;
}

inline bool operator==(const TrainConfig& a, const TrainConfig& b) { return config_map(a) == config_map(b); }

}  // namespace gda4rec
