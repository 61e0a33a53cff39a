#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "timbre/synth.hpp"

namespace timbre {

inline constexpr int kBankSchemaVersion = 1;

inline nlohmann::json patch_to_json(const InstrumentPatch& p) {
    nlohmann::json j;
    j["id"] = p.id;
    j["family"] = family_name(p.family);
    j["oscillators"] = nlohmann::json::array();
    for (const Oscillator& o : p.oscillators)
        j["oscillators"].push_back({{"wave", waveform_name(o.wave)},
                                    {"amplitude", o.amplitude},
                                    {"detune_cents", o.detune_cents}});
    j["envelope"] = {{"attack", p.envelope.attack},
                     {"decay", p.envelope.decay},
                     {"sustain", p.envelope.sustain},
                     {"release", p.envelope.release}};
    j["filter"] = {{"type", p.filter.type == FilterType::none
                                ? "none"
                                : (p.filter.type == FilterType::lowpass ? "lowpass" : "highpass")},
                   {"cutoff_hz", p.filter.cutoff_hz},
                   {"resonance", p.filter.resonance}};
    j["effects"] = nlohmann::json::array();
    for (const Effect& e : p.effects) {
        nlohmann::json je;
        std::visit(
            [&](const auto& fx) {
                using T = std::decay_t<decltype(fx)>;
                if constexpr (std::is_same_v<T, ReverbFx>)
                    je = {{"kind", "reverb"}, {"decay", fx.decay}, {"wet", fx.wet}};
                else if constexpr (std::is_same_v<T, DelayFx>)
                    je = {{"kind", "delay"}, {"time", fx.time}, {"feedback", fx.feedback}, {"wet", fx.wet}};
                else if constexpr (std::is_same_v<T, DistortionFx>)
                    je = {{"kind", "distortion"}, {"drive", fx.drive}};
                else
                    je = {{"kind", "chorus"}, {"rate_hz", fx.rate_hz}, {"depth", fx.depth}};
            },
            e);
        j["effects"].push_back(je);
    }
    j["master_gain"] = p.master_gain;
    j["seed"] = p.seed;
    if (p.augmented_from) j["augmented_from"] = *p.augmented_from;
    return j;
}

inline InstrumentPatch patch_from_json(const nlohmann::json& j) {
    InstrumentPatch p;
    p.id = j.at("id").get<int>();
    p.family = family_from_name(j.at("family").get<std::string>());
    for (const auto& jo : j.at("oscillators"))
        p.oscillators.push_back({waveform_from_name(jo.at("wave").get<std::string>()),
                                 jo.at("amplitude").get<double>(),
                                 jo.at("detune_cents").get<double>()});
    const auto& je = j.at("envelope");
    p.envelope = {je.at("attack").get<double>(), je.at("decay").get<double>(),
                  je.at("sustain").get<double>(), je.at("release").get<double>()};
    const auto& jf = j.at("filter");
    const std::string ft = jf.at("type").get<std::string>();
    p.filter.type = ft == "none" ? FilterType::none
                                 : (ft == "lowpass" ? FilterType::lowpass : FilterType::highpass);
    p.filter.cutoff_hz = jf.at("cutoff_hz").get<double>();
    p.filter.resonance = jf.at("resonance").get<double>();
    for (const auto& jfx : j.at("effects")) {
        const std::string kind = jfx.at("kind").get<std::string>();
        if (kind == "reverb")
            p.effects.emplace_back(ReverbFx{jfx.at("decay").get<double>(), jfx.at("wet").get<double>()});
        else if (kind == "delay")
            p.effects.emplace_back(DelayFx{jfx.at("time").get<double>(),
                                           jfx.at("feedback").get<double>(),
                                           jfx.at("wet").get<double>()});
        else if (kind == "distortion")
            p.effects.emplace_back(DistortionFx{jfx.at("drive").get<double>()});
        else if (kind == "chorus")
            p.effects.emplace_back(ChorusFx{jfx.at("rate_hz").get<double>(), jfx.at("depth").get<double>()});
        else
            throw std::invalid_argument("unknown effect kind: " + kind);
    }
    p.master_gain = j.at("master_gain").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("augmented_from")) p.augmented_from = j.at("augmented_from").get<int>();
    return p;
}

inline nlohmann::json bank_to_json(const std::vector<InstrumentPatch>& bank) {
    nlohmann::json j;
    j["version"] = kBankSchemaVersion;
    j["patches"] = nlohmann::json::array();
    for (const InstrumentPatch& p : bank) j["patches"].push_back(patch_to_json(p));
    return j;
}

inline std::vector<InstrumentPatch> bank_from_json(const nlohmann::json& j) {
    if (j.at("version").get<int>() != kBankSchemaVersion)
        throw std::invalid_argument("unsupported bank schema version");
    std::vector<InstrumentPatch> bank;
    for (const auto& jp : j.at("patches")) bank.push_back(patch_from_json(jp));
    return bank;
}

inline void save_bank(const std::string& path, const std::vector<InstrumentPatch>& bank) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write bank: " + path);
    os << bank_to_json(bank).dump(2) << "\n";
}

inline std::vector<InstrumentPatch> load_bank(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read bank: " + path);
    nlohmann::json j;
    is >> j;
    return bank_from_json(j);
}

}  // namespace timbre
