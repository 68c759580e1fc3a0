#pragma once

#include <map>
#include <string>
#include <vector>

#include "supcon/evalsuite.hpp"
#include "supcon/trainer.hpp"

namespace supcon {

/// Line-oriented `key = value` configuration with [section] headers.
/// Recognized sections: data, model, optimizer, schedule, augment, eval.
/// Unknown keys are rejected at parse time.
class ConfigFile {
public:
    static ConfigFile parse(const std::string& text);
    static ConfigFile load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const;
    std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;

    void set(const std::string& key, const std::string& value);
    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

const std::vector<std::string>& known_config_keys();

/// Applies the published two-stage recipe as defaults: SupCon pretraining
/// uses batch 1024, τ 0.13, lr 0.1 with 10 warmup epochs and 0.1 decays at
/// {250, 350} over 400 epochs; the cross-entropy baseline differs only in
/// batch 512 and decays {150, 250, 350}. Explicit keys win.
TrainConfig resolve_train_config(const ConfigFile& file, TrainStage stage);

/// Linear-evaluation defaults: lr grid {0.1, 0.01, 0.001}, batch grid
/// {32, 64, 128}, 5 runs, 50 probe epochs, constant lr, top-1 metric.
EvalProtocolConfig resolve_eval_config(const ConfigFile& file);

/// Fully-resolved config echoed into every run directory. Stages without a
/// projection head or temperature omit those keys.
std::string echo_train_config(const TrainConfig& config, const std::string& bank_path);
std::string echo_eval_config(const EvalProtocolConfig& config, const std::string& bank_path,
                             const std::string& checkpoint_path);

}  // namespace supcon
