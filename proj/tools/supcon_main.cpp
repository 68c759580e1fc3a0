#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "supcon/config.hpp"
#include "supcon/data.hpp"
#include "supcon/evalsuite.hpp"
#include "supcon/trainer.hpp"
#include "supcon/verify.hpp"

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw supcon::ValidationError("cannot open " + path.string() + " for writing");
    out << text;
}

struct GenDataArgs {
    int classes = 4;
    int domains = 3;
    int per = 100;
    std::uint64_t seed = 42;
    double test_frac = 0.3;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& args) {
    supcon::ImageBank bank = supcon::gen_synthetic_multidomain(args.classes, args.domains,
                                                               args.per, args.seed,
                                                               args.test_frac);
    supcon::write_bank(bank, args.out);
    std::printf("wrote %zu records (%d classes x %d domains) to %s\n", bank.records.size(),
                args.classes, args.domains, args.out.c_str());
    return 0;
}

struct PretrainArgs {
    std::string config_path;
    std::string loss = "supcon";
    std::string bank_path;
    std::string out_dir;
};

int cmd_pretrain(const PretrainArgs& args) {
    supcon::ConfigFile file = args.config_path.empty() ? supcon::ConfigFile{}
                                                       : supcon::ConfigFile::load(args.config_path);
    supcon::TrainStage stage;
    if (args.loss == "supcon") {
        stage = supcon::TrainStage::kPretrainSupCon;
    } else if (args.loss == "ce") {
        stage = supcon::TrainStage::kPretrainCE;
    } else {
        throw supcon::ValidationError("--loss must be supcon or ce");
    }
    supcon::TrainConfig cfg = supcon::resolve_train_config(file, stage);
    const std::string bank_path =
        !args.bank_path.empty() ? args.bank_path : file.get("data.bank", "");
    if (bank_path.empty()) {
        throw supcon::ValidationError("no bank: pass --bank or set data.bank in the config");
    }
    supcon::ImageBank bank = supcon::read_bank(bank_path);

    fs::create_directories(args.out_dir);
    cfg.checkpoint_dir = args.out_dir;
    write_text(fs::path(args.out_dir) / "config.resolved",
               supcon::echo_train_config(cfg, bank_path));

    supcon::PretrainResult result = supcon::pretrain(bank, cfg);
    supcon::write_history(result.history, (fs::path(args.out_dir) / "history.csv").string());
    if (result.singleton_views > 0) {
        std::fprintf(stderr, "warning: %zu views had no positive in their batch\n",
                     result.singleton_views);
    }
    std::printf("pretrained %s for %d epochs; final mean loss %.6f\n", args.loss.c_str(),
                cfg.schedule.total_epochs, result.history.back().mean_loss);
    std::printf("checkpoint: %s\n", (fs::path(args.out_dir) / "checkpoint_final.sckp").c_str());
    return 0;
}

struct LinearEvalArgs {
    std::string checkpoint;
    std::string bank_path;
    std::string config_path;
    std::string out_dir;
    std::string dataset_name;
    std::string metric;
    bool sweep = false;
    double lr = 0.0;
    int batch = 0;
    int runs = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_linear_eval(const LinearEvalArgs& args) {
    supcon::ConfigFile file = args.config_path.empty() ? supcon::ConfigFile{}
                                                       : supcon::ConfigFile::load(args.config_path);
    supcon::EvalProtocolConfig cfg = supcon::resolve_eval_config(file);
    if (!args.sweep) {
        // A fixed operating point is a single-cell grid.
        cfg.grid.learning_rates = {args.lr > 0.0 ? args.lr : 0.1};
        cfg.grid.batch_sizes = {args.batch > 0 ? args.batch : 32};
    } else if (args.lr > 0.0 || args.batch > 0) {
        throw supcon::ValidationError("--lr/--batch conflict with --sweep");
    }
    if (args.runs > 0) cfg.runs = args.runs;
    if (!args.metric.empty()) cfg.metric = supcon::metric_kind_from_name(args.metric);
    if (args.seed_set) cfg.seed = args.seed;

    supcon::ModelBundle pretrained = supcon::load_checkpoint(args.checkpoint);
    supcon::ImageBank bank = supcon::read_bank(args.bank_path);
    const std::string dataset = !args.dataset_name.empty()
                                    ? args.dataset_name
                                    : fs::path(args.bank_path).stem().string();
    const std::string model = pretrained.metadata.count("stage")
                                  ? pretrained.metadata.at("stage")
                                  : "checkpoint";

    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / "config.resolved",
               supcon::echo_eval_config(cfg, args.bank_path, args.checkpoint));

    supcon::EvalProtocolResult result =
        supcon::linear_eval_protocol(pretrained, bank, dataset, model, cfg);
    supcon::write_sweep_trace(result.trace, (fs::path(args.out_dir) / "sweep_trace.csv").string());
    supcon::RunReport report;
    report.rows.push_back(result.row);
    supcon::write_report(report, (fs::path(args.out_dir) / "report.csv").string());

    std::printf("%s on %s: %s = %.4f", model.c_str(), dataset.c_str(),
                supcon::metric_kind_name(result.row.metric).c_str(), result.row.mean);
    if (result.row.stddev) std::printf(" +/- %.4f", *result.row.stddev);
    std::printf(" (lr %g, batch %d, %zu runs)\n", result.row.lr, result.row.batch,
                result.row.run_accuracies.size());
    return 0;
}

struct AblateArgs {
    std::string knob;
    std::vector<std::string> values;
    std::string config_path;
    std::string bank_path;
    std::vector<std::string> eval_banks;  // name=path
    std::string out_dir;
};

int cmd_ablate(const AblateArgs& args) {
    supcon::AblateKnob knob = supcon::ablate_knob_from_name(args.knob);
    const std::vector<std::string> values =
        args.values.empty() ? supcon::default_ablate_values(knob) : args.values;

    supcon::ConfigFile file = args.config_path.empty() ? supcon::ConfigFile{}
                                                       : supcon::ConfigFile::load(args.config_path);
    supcon::AblateInputs inputs;
    inputs.base = supcon::resolve_train_config(file, supcon::TrainStage::kPretrainSupCon);
    inputs.eval = supcon::resolve_eval_config(file);

    const std::string bank_path =
        !args.bank_path.empty() ? args.bank_path : file.get("data.bank", "");
    if (bank_path.empty()) {
        throw supcon::ValidationError("no bank: pass --bank or set data.bank in the config");
    }
    supcon::ImageBank pretrain_bank = supcon::read_bank(bank_path);
    inputs.pretrain_bank = &pretrain_bank;

    std::vector<std::pair<std::string, std::string>> named;
    for (const std::string& spec : args.eval_banks) {
        const std::size_t eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
            throw supcon::ValidationError("--eval-bank expects name=path, got '" + spec + "'");
        }
        named.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
    }
    std::vector<supcon::ImageBank> eval_banks;
    eval_banks.reserve(named.size());
    for (const auto& [name, path] : named) {
        eval_banks.push_back(supcon::read_bank(path));
        inputs.eval_banks.emplace_back(name, &eval_banks.back());
    }

    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / "config.resolved",
               supcon::echo_train_config(inputs.base, bank_path));
    supcon::RunReport report = supcon::ablate(knob, values, inputs);
    const std::string report_path = (fs::path(args.out_dir) / "report.csv").string();
    supcon::write_report(report, report_path);
    std::printf("%zu report rows (%zu knob values x %zu banks) -> %s\n", report.rows.size(),
                values.size(), inputs.eval_banks.size(), report_path.c_str());
    return 0;
}

int cmd_verify(const std::string& suite) {
    const std::vector<supcon::VerifyResult> results = supcon::run_verify(suite);
    bool all_passed = true;
    for (const supcon::VerifyResult& r : results) {
        std::printf("[%s] %-9s %s\n", r.passed ? "PASS" : "FAIL", r.suite.c_str(),
                    r.detail.c_str());
        all_passed = all_passed && r.passed;
    }
    return all_passed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage contrastive representation learning on multi-domain image banks"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic multi-domain bank");
    gen_cmd->add_option("--classes", gen.classes, "Shape classes (2-8)");
    gen_cmd->add_option("--domains", gen.domains, "Rendering styles (1-5)");
    gen_cmd->add_option("--per", gen.per, "Records per class per domain");
    gen_cmd->add_option("--seed", gen.seed, "Generator seed");
    gen_cmd->add_option("--test-frac", gen.test_frac, "Fraction tagged as the test split");
    gen_cmd->add_option("--out", gen.out, "Output bank path")->required();

    PretrainArgs pre;
    CLI::App* pre_cmd = app.add_subcommand("pretrain", "Stage-one training (SupCon or CE)");
    pre_cmd->add_option("--config", pre.config_path, "Config file");
    pre_cmd->add_option("--loss", pre.loss, "supcon or ce");
    pre_cmd->add_option("--bank", pre.bank_path, "Training bank (overrides data.bank)");
    pre_cmd->add_option("--out", pre.out_dir, "Run directory")->required();

    LinearEvalArgs ev;
    CLI::App* ev_cmd = app.add_subcommand("linear-eval", "Frozen-feature linear evaluation");
    ev_cmd->add_option("--checkpoint", ev.checkpoint, "Pretrained checkpoint")->required();
    ev_cmd->add_option("--bank", ev.bank_path, "Downstream bank")->required();
    ev_cmd->add_option("--config", ev.config_path, "Config file");
    ev_cmd->add_flag("--sweep", ev.sweep, "Sweep the lr/batch grid on the val split");
    ev_cmd->add_option("--lr", ev.lr, "Fixed probe learning rate (no sweep)");
    ev_cmd->add_option("--batch", ev.batch, "Fixed probe batch size (no sweep)");
    ev_cmd->add_option("--runs", ev.runs, "Aggregation runs (default 5)");
    ev_cmd->add_option("--metric", ev.metric, "top1 or mean-per-class");
    ev_cmd->add_option("--dataset-name", ev.dataset_name, "Dataset label in the report");
    ev_cmd->add_option("--seed", ev.seed, "Protocol seed")->each([&ev](const std::string&) {
        ev.seed_set = true;
    });
    ev_cmd->add_option("--out", ev.out_dir, "Run directory")->required();

    AblateArgs ab;
    CLI::App* ab_cmd = app.add_subcommand("ablate", "Knob ablation with full linear-eval sweeps");
    ab_cmd->add_option("--knob", ab.knob, "temperature, augmentation, or encoder")->required();
    ab_cmd->add_option("--values", ab.values, "Knob values (defaults to the published grid)")
        ->delimiter(',');
    ab_cmd->add_option("--config", ab.config_path, "Config file");
    ab_cmd->add_option("--bank", ab.bank_path, "Pretraining bank");
    ab_cmd->add_option("--eval-bank", ab.eval_banks, "name=path, repeatable")->required();
    ab_cmd->add_option("--out", ab.out_dir, "Run directory")->required();

    std::string verify_suite;
    CLI::App* verify_cmd = app.add_subcommand("verify", "Run the self-check suites");
    verify_cmd->add_option("--suite", verify_suite,
                           "Run one suite: oracle, gradcheck, schedule, formats, metrics, augment");

    try {
        app.parse(argc, argv);
        if (gen_cmd->parsed()) return cmd_gen_data(gen);
        if (pre_cmd->parsed()) return cmd_pretrain(pre);
        if (ev_cmd->parsed()) return cmd_linear_eval(ev);
        if (ab_cmd->parsed()) return cmd_ablate(ab);
        if (verify_cmd->parsed()) return cmd_verify(verify_suite);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const supcon::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return 2;
    }
    return 1;
}
