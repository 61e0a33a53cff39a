// timbre: synthesize an instrument bank, train a contrastive embedding
// encoder, and run query-by-example retrieval over it.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "timbre/pipeline.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

timbre::ExperimentConfig load_or_die(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw std::invalid_argument("config not found: " + path);
    return timbre::load_config(path);
}

void require_file(const std::string& path, const std::string& what) {
    if (path != "descriptors" && !std::filesystem::exists(path))
        throw std::invalid_argument(what + " not found: " + path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"procedural instrument bank + contrastive retrieval pipeline"};
    app.require_subcommand(1);

    std::string config_path, bank_path, out_dir = ".", checkpoint_path, db_path, wav_path;
    std::string mode = "single", family_str, out_path;
    std::vector<std::string> method_args;
    int k = 5;
    bool dump_mel = false;

    auto* gen_bank = app.add_subcommand("gen-bank", "generate the instrument bank");
    gen_bank->add_option("--config", config_path, "experiment config (JSON)")->required();
    gen_bank->add_option("--out", out_dir, "output directory");

    auto* gen_data = app.add_subcommand("gen-data", "render the evaluation dataset");
    gen_data->add_option("--config", config_path)->required();
    gen_data->add_option("--bank", bank_path, "bank.json from gen-bank")->required();
    gen_data->add_option("--out", out_dir);
    gen_data->add_flag("--dump-mel", dump_mel, "also dump mel spectrograms (float32)");

    auto* train_cmd = app.add_subcommand("train", "train an encoder");
    train_cmd->add_option("--config", config_path)->required();
    train_cmd->add_option("--bank", bank_path)->required();
    train_cmd->add_option("--out", out_dir);

    auto* build_db = app.add_subcommand("build-db", "embed every instrument's median note");
    build_db->add_option("--config", config_path)->required();
    build_db->add_option("--bank", bank_path)->required();
    build_db->add_option("--checkpoint", checkpoint_path,
                         "checkpoint.bin, or the literal 'descriptors'")->required();
    build_db->add_option("--out", out_path, "database file")->required();

    auto* query_cmd = app.add_subcommand("query", "rank database instruments against a WAV");
    query_cmd->add_option("--config", config_path)->required();
    query_cmd->add_option("--db", db_path)->required();
    query_cmd->add_option("--checkpoint", checkpoint_path)->required();
    query_cmd->add_option("--wav", wav_path)->required();
    query_cmd->add_option("-k", k, "ranks to print");
    query_cmd->add_option("--family", family_str, "restrict candidates to one family");

    auto* eval_cmd = app.add_subcommand("evaluate", "write CSV/Markdown accuracy reports");
    eval_cmd->add_option("--config", config_path)->required();
    eval_cmd->add_option("--bank", bank_path)->required();
    eval_cmd->add_option("--mode", mode, "single | mixture | baselines");
    eval_cmd->add_option("--method", method_args,
                         "name=checkpoint pairs; use name=descriptors for the baseline");
    eval_cmd->add_option("--out", out_dir);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_bank->parsed()) {
            timbre::run_gen_bank(load_or_die(config_path), out_dir);
        } else if (gen_data->parsed()) {
            require_file(bank_path, "bank");
            timbre::run_gen_data(load_or_die(config_path), bank_path, out_dir, dump_mel);
        } else if (train_cmd->parsed()) {
            require_file(bank_path, "bank");
            std::cout << timbre::run_train(load_or_die(config_path), bank_path, out_dir) << "\n";
        } else if (build_db->parsed()) {
            require_file(bank_path, "bank");
            require_file(checkpoint_path, "checkpoint");
            auto cfg = load_or_die(config_path);
            auto db = timbre::run_build_db(cfg, bank_path, checkpoint_path, out_path);
            std::cout << "wrote " << db.entries.size() << " entries to " << out_path
                      << " (config_hash=" << timbre::config_hash(cfg) << ")\n";
        } else if (query_cmd->parsed()) {
            require_file(db_path, "database");
            require_file(checkpoint_path, "checkpoint");
            require_file(wav_path, "wav");
            auto cfg = load_or_die(config_path);
            std::optional<timbre::Family> family;
            if (!family_str.empty()) family = timbre::family_from_name(family_str);
            timbre::run_query(db_path, checkpoint_path, wav_path, k, family, cfg.mel, std::cout);
        } else if (eval_cmd->parsed()) {
            require_file(bank_path, "bank");
            timbre::MethodSpec methods;
            for (const std::string& m : method_args) {
                const auto eq = m.find('=');
                if (eq == std::string::npos)
                    throw std::invalid_argument("--method expects name=checkpoint, got: " + m);
                const std::string path = m.substr(eq + 1);
                require_file(path, "checkpoint for " + m.substr(0, eq));
                methods.emplace_back(m.substr(0, eq), path);
            }
            if (methods.empty() && mode != "baselines")
                throw std::invalid_argument("evaluate needs at least one --method");
            auto cfg = load_or_die(config_path);
            auto rows = timbre::run_evaluate(cfg, bank_path, methods, mode, out_dir);
            for (const auto& row : rows)
                std::cout << row.method << "\ttop1=" << row.report.avg_top1
                          << "\ttop5=" << row.report.avg_top5 << "\n";
            std::cout << "config_hash=" << timbre::config_hash(cfg) << "\n";
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return 0;
}
