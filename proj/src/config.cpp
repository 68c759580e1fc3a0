#include "supcon/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace supcon {

namespace {

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <typename T, typename Fn>
std::vector<T> parse_list(const std::string& text, const std::string& key, Fn convert) {
    std::vector<T> out;
    std::istringstream parts(text);
    std::string item;
    while (std::getline(parts, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(convert(item));
        } catch (const std::exception&) {
            throw ValidationError("config: bad list entry '" + item + "' for " + key);
        }
    }
    return out;
}

std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> kKeys = {
        "data.bank",
        "model.arch",
        "model.width",
        "model.feature_dim",
        "model.head_hidden_dim",
        "model.head_out_dim",
        "optimizer.momentum",
        "optimizer.weight_decay",
        "optimizer.batch_size",
        "optimizer.tau",
        "optimizer.seed",
        "schedule.base_lr",
        "schedule.warmup_epochs",
        "schedule.decay_epochs",
        "schedule.decay_rate",
        "schedule.epochs",
        "schedule.checkpoint_every",
        "augment.strategy",
        "augment.flip_p",
        "augment.jitter_p",
        "augment.gray_p",
        "augment.blur_p",
        "augment.crop_scale_lo",
        "augment.crop_scale_hi",
        "augment.rand_n",
        "augment.rand_m",
        "augment.policy_file",
        "eval.lrs",
        "eval.batches",
        "eval.runs",
        "eval.epochs",
        "eval.metric",
        "eval.seed",
    };
    return kKeys;
}

ConfigFile ConfigFile::parse(const std::string& text) {
    ConfigFile file;
    const auto& known = known_config_keys();
    std::istringstream lines(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw ValidationError("config line " + std::to_string(line_no) +
                                      ": unterminated section header");
            }
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty()) {
                throw ValidationError("config line " + std::to_string(line_no) +
                                      ": empty section name");
            }
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(line_no) +
                                  ": expected key = value");
        }
        const std::string bare = trim(t.substr(0, eq));
        if (bare.empty()) {
            throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
        }
        const std::string key = section.empty() ? bare : section + "." + bare;
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" +
                                  key + "'");
        }
        if (file.values_.count(key)) {
            throw ValidationError("config line " + std::to_string(line_no) + ": duplicate key '" +
                                  key + "'");
        }
        file.values_[key] = trim(t.substr(eq + 1));
    }
    return file;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string ConfigFile::get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ValidationError("config: bad number for " + key + ": '" + it->second + "'");
    }
}

int ConfigFile::get_int(const std::string& key, int fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoi(it->second);
    } catch (const std::exception&) {
        throw ValidationError("config: bad integer for " + key + ": '" + it->second + "'");
    }
}

std::uint64_t ConfigFile::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ValidationError("config: bad integer for " + key + ": '" + it->second + "'");
    }
}

std::vector<double> ConfigFile::get_doubles(const std::string& key,
                                            const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_list<double>(it->second, key, [](const std::string& s) { return std::stod(s); });
}

std::vector<int> ConfigFile::get_ints(const std::string& key,
                                      const std::vector<int>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_list<int>(it->second, key, [](const std::string& s) { return std::stoi(s); });
}

void ConfigFile::set(const std::string& key, const std::string& value) {
    const auto& known = known_config_keys();
    if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw ValidationError("config: unknown key '" + key + "'");
    }
    values_[key] = value;
}

TrainConfig resolve_train_config(const ConfigFile& file, TrainStage stage) {
    TrainConfig cfg;
    cfg.stage = stage;
    cfg.encoder.arch = encoder_arch_from_name(file.get("model.arch", "small"));
    cfg.encoder.width = file.get_int("model.width", 8);
    cfg.encoder.feature_dim = file.get_int("model.feature_dim", 128);
    const bool supcon = stage == TrainStage::kPretrainSupCon;
    cfg.head_hidden_dim = supcon ? file.get_int("model.head_hidden_dim", 0) : 0;
    cfg.head_out_dim = supcon ? file.get_int("model.head_out_dim", 128) : 0;
    cfg.batch_size = file.get_int("optimizer.batch_size", supcon ? 1024 : 512);
    cfg.tau = supcon ? file.get_double("optimizer.tau", 0.13) : 0.0;
    cfg.seed = file.get_u64("optimizer.seed", 42);
    cfg.sgd.momentum = file.get_double("optimizer.momentum", 0.9);
    cfg.sgd.weight_decay = file.get_double("optimizer.weight_decay", 1e-4);
    cfg.schedule.base_lr = file.get_double("schedule.base_lr", 0.1);
    cfg.schedule.warmup_epochs = file.get_int("schedule.warmup_epochs", 10);
    cfg.schedule.decay_epochs =
        file.get_ints("schedule.decay_epochs", supcon ? std::vector<int>{250, 350}
                                                      : std::vector<int>{150, 250, 350});
    cfg.schedule.decay_rate = file.get_double("schedule.decay_rate", 0.1);
    cfg.schedule.total_epochs = file.get_int("schedule.epochs", 400);
    cfg.checkpoint_every = file.get_int("schedule.checkpoint_every", 0);

    cfg.policy.strategy = aug_strategy_from_name(file.get("augment.strategy", "simaugment"));
    cfg.policy.params.flip_p = file.get_double("augment.flip_p", cfg.policy.params.flip_p);
    cfg.policy.params.jitter_p = file.get_double("augment.jitter_p", cfg.policy.params.jitter_p);
    cfg.policy.params.gray_p = file.get_double("augment.gray_p", cfg.policy.params.gray_p);
    cfg.policy.params.blur_p = file.get_double("augment.blur_p", cfg.policy.params.blur_p);
    cfg.policy.params.crop_scale_lo =
        file.get_double("augment.crop_scale_lo", cfg.policy.params.crop_scale_lo);
    cfg.policy.params.crop_scale_hi =
        file.get_double("augment.crop_scale_hi", cfg.policy.params.crop_scale_hi);
    cfg.policy.params.rand_n = file.get_int("augment.rand_n", cfg.policy.params.rand_n);
    cfg.policy.params.rand_m = file.get_int("augment.rand_m", cfg.policy.params.rand_m);
    const std::string policy_file = file.get("augment.policy_file", "");
    if (!policy_file.empty()) cfg.policy.autoaugment_table = load_policy_file(policy_file);
    cfg.validate();
    return cfg;
}

EvalProtocolConfig resolve_eval_config(const ConfigFile& file) {
    EvalProtocolConfig cfg;
    cfg.grid.learning_rates = file.get_doubles("eval.lrs", {0.1, 0.01, 0.001});
    cfg.grid.batch_sizes = file.get_ints("eval.batches", {32, 64, 128});
    cfg.runs = file.get_int("eval.runs", 5);
    cfg.probe_epochs = file.get_int("eval.epochs", 50);
    cfg.metric = metric_kind_from_name(file.get("eval.metric", "top1"));
    cfg.seed = file.get_u64("eval.seed", 42);
    cfg.grid.validate();
    if (cfg.runs < 1) throw ValidationError("config: eval.runs must be >= 1");
    if (cfg.probe_epochs < 1) throw ValidationError("config: eval.epochs must be >= 1");
    return cfg;
}

std::string echo_train_config(const TrainConfig& config, const std::string& bank_path) {
    std::ostringstream out;
    out << "[data]\n";
    out << "bank = " << bank_path << "\n\n";
    out << "[model]\n";
    out << "arch = " << encoder_arch_name(config.encoder.arch) << "\n";
    out << "width = " << config.encoder.width << "\n";
    out << "feature_dim = " << config.encoder.feature_dim << "\n";
    if (config.head_out_dim > 0) {
        out << "head_hidden_dim = "
            << (config.head_hidden_dim > 0 ? config.head_hidden_dim : config.encoder.feature_dim)
            << "\n";
        out << "head_out_dim = " << config.head_out_dim << "\n";
    }
    out << "\n[optimizer]\n";
    out << "momentum = " << format_double(config.sgd.momentum) << "\n";
    out << "weight_decay = " << format_double(config.sgd.weight_decay) << "\n";
    out << "batch_size = " << config.batch_size << "\n";
    if (config.stage == TrainStage::kPretrainSupCon) {
        out << "tau = " << format_double(config.tau) << "\n";
    }
    out << "seed = " << config.seed << "\n";
    out << "\n[schedule]\n";
    out << "base_lr = " << format_double(config.schedule.base_lr) << "\n";
    out << "warmup_epochs = " << config.schedule.warmup_epochs << "\n";
    out << "decay_epochs = ";
    for (std::size_t i = 0; i < config.schedule.decay_epochs.size(); ++i) {
        if (i) out << ",";
        out << config.schedule.decay_epochs[i];
    }
    out << "\n";
    out << "decay_rate = " << format_double(config.schedule.decay_rate) << "\n";
    out << "epochs = " << config.schedule.total_epochs << "\n";
    if (config.checkpoint_every > 0) {
        out << "checkpoint_every = " << config.checkpoint_every << "\n";
    }
    out << "\n[augment]\n";
    out << "strategy = " << aug_strategy_name(config.policy.strategy) << "\n";
    if (config.policy.strategy == AugStrategy::kSimAugment ||
        config.policy.strategy == AugStrategy::kStackedRandAugment) {
        out << "flip_p = " << format_double(config.policy.params.flip_p) << "\n";
        out << "jitter_p = " << format_double(config.policy.params.jitter_p) << "\n";
        out << "gray_p = " << format_double(config.policy.params.gray_p) << "\n";
        out << "blur_p = " << format_double(config.policy.params.blur_p) << "\n";
        out << "crop_scale_lo = " << format_double(config.policy.params.crop_scale_lo) << "\n";
        out << "crop_scale_hi = " << format_double(config.policy.params.crop_scale_hi) << "\n";
    }
    if (config.policy.strategy == AugStrategy::kRandAugment ||
        config.policy.strategy == AugStrategy::kStackedRandAugment) {
        out << "rand_n = " << config.policy.params.rand_n << "\n";
        out << "rand_m = " << config.policy.params.rand_m << "\n";
    }
    return out.str();
}

std::string echo_eval_config(const EvalProtocolConfig& config, const std::string& bank_path,
                             const std::string& checkpoint_path) {
    std::ostringstream out;
    out << "[data]\n";
    out << "bank = " << bank_path << "\n";
    out << "# checkpoint: " << checkpoint_path << "\n";
    out << "\n[eval]\n";
    out << "lrs = ";
    for (std::size_t i = 0; i < config.grid.learning_rates.size(); ++i) {
        if (i) out << ",";
        out << format_double(config.grid.learning_rates[i]);
    }
    out << "\nbatches = ";
    for (std::size_t i = 0; i < config.grid.batch_sizes.size(); ++i) {
        if (i) out << ",";
        out << config.grid.batch_sizes[i];
    }
    out << "\nruns = " << config.runs << "\n";
    out << "epochs = " << config.probe_epochs << "\n";
    out << "metric = " << metric_kind_name(config.metric) << "\n";
    out << "seed = " << config.seed << "\n";
    return out.str();
}

}  // namespace supcon
