#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "timbre/encoder.hpp"
#include "timbre/io.hpp"

namespace timbre {

struct BankSpec {
    int n_per_family = 4;
    std::vector<Family> families{kAllFamilies.begin(), kAllFamilies.end()};
    bool augment = true;
};

struct EvalSpec {
    int n_single_queries = 120;
    int n_mixture_queries = 60;
    int n_mixture_components = 3;
    bool global_ranking = false;
};

// Everything an experiment run depends on. A config plus the code version
// determines every output byte; the FNV-1a hash of the canonical JSON dump
// is embedded in all artifacts.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    double sample_rate = 16000.0;
    BankSpec bank;
    SamplingParams sampling;
    MelParams mel;
    TrainConfig train;
    EvalSpec eval;
    std::string frozen_checkpoint;  // required when train.loss == multi_encoder
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json families = nlohmann::json::array();
    for (Family f : c.bank.families) families.push_back(family_name(f));
    nlohmann::json slots = nlohmann::json::array();
    for (Family f : c.train.family_slots) slots.push_back(family_name(f));
    return {
        {"seed", c.seed},
        {"sample_rate", c.sample_rate},
        {"bank",
         {{"n_per_family", c.bank.n_per_family}, {"families", families}, {"augment", c.bank.augment}}},
        {"sampling",
         {{"note_duration", c.sampling.note_duration},
          {"note_length", c.sampling.note_length},
          {"score_length", c.sampling.score_length},
          {"score_density", c.sampling.score_density}}},
        {"mel",
         {{"n_fft", c.mel.n_fft},
          {"hop", c.mel.hop},
          {"n_mels", c.mel.n_mels},
          {"fmin", c.mel.fmin},
          {"fmax", c.mel.fmax}}},
        {"train",
         {{"loss", loss_kind_name(c.train.loss)},
          {"steps", c.train.steps},
          {"batch_size", c.train.batch_size},
          {"temperature", c.train.temperature},
          {"margin", c.train.margin},
          {"mixture_batches", c.train.mixture_batches},
          {"n_mixtures", c.train.n_mixtures},
          {"family_slots", slots},
          {"arch",
           {{"n_mels", c.train.arch.n_mels},
            {"hidden", c.train.arch.hidden},
            {"embed_dim", c.train.arch.embed_dim}}},
          {"optimizer",
           {{"kind", c.train.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
            {"lr", c.train.optimizer.lr},
            {"beta1", c.train.optimizer.beta1},
            {"beta2", c.train.optimizer.beta2},
            {"eps", c.train.optimizer.eps}}}}},
        {"eval",
         {{"n_single_queries", c.eval.n_single_queries},
          {"n_mixture_queries", c.eval.n_mixture_queries},
          {"n_mixture_components", c.eval.n_mixture_components},
          {"global_ranking", c.eval.global_ranking}}},
        {"frozen_checkpoint", c.frozen_checkpoint}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        c.seed = j.at("seed").get<std::uint64_t>();
        c.sample_rate = j.at("sample_rate").get<double>();
        const auto& jb = j.at("bank");
        c.bank.n_per_family = jb.at("n_per_family").get<int>();
        c.bank.families.clear();
        for (const auto& s : jb.at("families"))
            c.bank.families.push_back(family_from_name(s.get<std::string>()));
        c.bank.augment = jb.at("augment").get<bool>();
        const auto& js = j.at("sampling");
        c.sampling.note_duration = js.at("note_duration").get<double>();
        c.sampling.note_length = js.at("note_length").get<double>();
        c.sampling.score_length = js.at("score_length").get<double>();
        c.sampling.score_density = js.at("score_density").get<double>();
        const auto& jm = j.at("mel");
        c.mel.n_fft = jm.at("n_fft").get<int>();
        c.mel.hop = jm.at("hop").get<int>();
        c.mel.n_mels = jm.at("n_mels").get<int>();
        c.mel.fmin = jm.at("fmin").get<double>();
        c.mel.fmax = jm.at("fmax").get<double>();
        const auto& jt = j.at("train");
        c.train.loss = loss_kind_from_name(jt.at("loss").get<std::string>());
        c.train.steps = jt.at("steps").get<int>();
        c.train.batch_size = jt.at("batch_size").get<int>();
        c.train.temperature = jt.at("temperature").get<double>();
        c.train.margin = jt.at("margin").get<double>();
        c.train.mixture_batches = jt.at("mixture_batches").get<bool>();
        c.train.n_mixtures = jt.at("n_mixtures").get<int>();
        c.train.family_slots.clear();
        for (const auto& s : jt.at("family_slots"))
            c.train.family_slots.push_back(family_from_name(s.get<std::string>()));
        const auto& ja = jt.at("arch");
        c.train.arch = {ja.at("n_mels").get<int>(), ja.at("hidden").get<int>(),
                        ja.at("embed_dim").get<int>()};
        const auto& jo = jt.at("optimizer");
        const std::string ok = jo.at("kind").get<std::string>();
        if (ok == "adam")
            c.train.optimizer.kind = OptimizerKind::adam;
        else if (ok == "sgd")
            c.train.optimizer.kind = OptimizerKind::sgd;
        else
            throw std::invalid_argument("unknown optimizer kind: " + ok);
        c.train.optimizer.lr = jo.at("lr").get<double>();
        c.train.optimizer.beta1 = jo.at("beta1").get<double>();
        c.train.optimizer.beta2 = jo.at("beta2").get<double>();
        c.train.optimizer.eps = jo.at("eps").get<double>();
        const auto& je = j.at("eval");
        c.eval.n_single_queries = je.at("n_single_queries").get<int>();
        c.eval.n_mixture_queries = je.at("n_mixture_queries").get<int>();
        c.eval.n_mixture_components = je.at("n_mixture_components").get<int>();
        c.eval.global_ranking = je.at("global_ranking").get<bool>();
        c.frozen_checkpoint = j.value("frozen_checkpoint", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad config: ") + e.what());
    }
    if (c.bank.n_per_family < 1 || c.bank.families.empty() || c.sample_rate <= 0.0 ||
        c.train.steps < 0 || c.train.batch_size < 2 || c.eval.n_single_queries < 1 ||
        c.eval.n_mixture_queries < 1 || c.eval.n_mixture_components < 1)
        throw std::invalid_argument("bad config: out-of-range field");
    // the trainer reads these from its own struct; keep them in lockstep
    c.train.seed = c.seed;
    c.train.sample_rate = c.sample_rate;
    c.train.mel = c.mel;
    c.train.sampling = c.sampling;
    if (c.train.arch.n_mels != c.mel.n_mels)
        throw std::invalid_argument("bad config: train.arch.n_mels must equal mel.n_mels");
    return c;
}

inline std::string config_hash(const ExperimentConfig& c) {
    return hex64(fnv1a(config_to_json(c).dump()));
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot read config: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad config: ") + e.what());
    }
    return config_from_json(j);
}

inline void save_config(const std::string& path, const ExperimentConfig& c) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write: " + path);
    os << config_to_json(c).dump(2) << "\n";
}

}  // namespace timbre
