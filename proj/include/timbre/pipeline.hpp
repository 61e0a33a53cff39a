#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "timbre/bank_io.hpp"
#include "timbre/config.hpp"
#include "timbre/encoder.hpp"
#include "timbre/features.hpp"
#include "timbre/io.hpp"
#include "timbre/retrieval.hpp"

namespace timbre {

// --- manifest serialization ---------------------------------------------------

inline nlohmann::json sound_spec_to_json(const SoundSpec& s) {
    nlohmann::json notes = nlohmann::json::array();
    for (const NoteEvent& n : s.notes)
        notes.push_back({{"pitch", n.pitch},
                         {"velocity", n.velocity},
                         {"onset", n.onset},
                         {"duration", n.duration}});
    return {{"instrument_id", s.instrument_id},
            {"kind", s.kind == SoundKind::single_note ? "single_note" : "score"},
            {"notes", notes},
            {"length", s.length}};
}

inline SoundSpec sound_spec_from_json(const nlohmann::json& j) {
    SoundSpec s;
    s.instrument_id = j.at("instrument_id").get<int>();
    s.kind = j.at("kind").get<std::string>() == "single_note" ? SoundKind::single_note
                                                              : SoundKind::score;
    for (const auto& jn : j.at("notes"))
        s.notes.push_back({jn.at("pitch").get<int>(), jn.at("velocity").get<int>(),
                           jn.at("onset").get<double>(), jn.at("duration").get<double>()});
    s.length = j.at("length").get<double>();
    return s;
}

inline nlohmann::json mixture_spec_to_json(const MixtureSpec& m) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& [id, stem] : m.components)
        comps.push_back({{"id", id}, {"stem", sound_spec_to_json(stem)}});
    return {{"components", comps}, {"length", m.length}};
}

inline MixtureSpec mixture_spec_from_json(const nlohmann::json& j) {
    MixtureSpec m;
    for (const auto& jc : j.at("components"))
        m.components.emplace_back(jc.at("id").get<int>(), sound_spec_from_json(jc.at("stem")));
    m.length = j.at("length").get<double>();
    return m;
}

// --- embedders ------------------------------------------------------------------

inline AudioEmbedder make_encoder_embedder(EncoderParams params, MelParams mel) {
    return [params = std::move(params), mel](const AudioBuffer& buf) {
        return encode(params, mel_spectrogram(buf, mel));
    };
}

// 12-descriptor baseline: standardized descriptor vector as the embedding.
// The normalizer is fitted on the database instruments' median-note renders.
inline AudioEmbedder make_descriptor_embedder(const std::vector<InstrumentPatch>& bank,
                                              const std::map<Family, FamilyNoteDistribution>& dists,
                                              double sample_rate, const MelParams& mel,
                                              const SamplingParams& sampling) {
    std::vector<DescriptorVector> refs;
    for (const InstrumentPatch& p : bank) {
        if (p.augmented_from) continue;
        const NoteEvent note = median_note(dists.at(p.family), sampling);
        refs.push_back(
            timbre_descriptors(render_sound(p, make_single_note_spec(p.id, note, sampling),
                                            sample_rate),
                               mel));
    }
    const DescriptorNormalizer norm = fit_descriptor_normalizer(refs);
    return [norm, mel](const AudioBuffer& buf) -> Embedding {
        return norm.apply(timbre_descriptors(buf, mel));
    };
}

// --- deterministic evaluation sets -----------------------------------------------

inline std::vector<std::pair<SoundSpec, int>> make_single_test_set(
    const ExperimentConfig& cfg, const std::vector<InstrumentPatch>& bank,
    const std::map<Family, FamilyNoteDistribution>& dists) {
    std::vector<const InstrumentPatch*> candidates;
    for (const InstrumentPatch& p : bank)
        if (!p.augmented_from) candidates.push_back(&p);
    std::vector<std::pair<SoundSpec, int>> out;
    for (int i = 0; i < cfg.eval.n_single_queries; ++i) {
        // redraw until the rendered query is audible (descriptor baselines
        // reject silent inputs)
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (attempt >= 32)
                throw SilentStemError("no non-silent query after 32 draws");
            Rng rng(cfg.seed, 0x51e57, static_cast<std::uint64_t>(i), attempt);
            const InstrumentPatch& p = *candidates[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
            SoundSpec spec =
                rng.bernoulli(0.5)
                    ? make_single_note_spec(p.id,
                                            sample_note(dists.at(p.family), rng, cfg.sampling),
                                            cfg.sampling)
                    : generate_score(dists.at(p.family), cfg.sampling.score_length,
                                     cfg.sampling.score_density, rng, p.id);
            if (rms(render_sound(p, spec, cfg.sample_rate)) < kSilenceRmsThreshold) continue;
            out.emplace_back(std::move(spec), p.id);
            break;
        }
    }
    return out;
}

inline std::vector<MixtureSpec> make_mixture_test_set(
    const ExperimentConfig& cfg, const std::vector<InstrumentPatch>& bank,
    const std::map<Family, FamilyNoteDistribution>& dists) {
    std::vector<Family> slots(cfg.train.family_slots.begin(), cfg.train.family_slots.end());
    slots.resize(static_cast<std::size_t>(cfg.eval.n_mixture_components),
                 slots.empty() ? Family::bass : slots.back());
    if (static_cast<int>(cfg.train.family_slots.size()) >= cfg.eval.n_mixture_components)
        slots.assign(cfg.train.family_slots.begin(),
                     cfg.train.family_slots.begin() + cfg.eval.n_mixture_components);
    std::vector<MixtureSpec> out;
    for (int i = 0; i < cfg.eval.n_mixture_queries; ++i) {
        // redraw until every stem renders audible
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (attempt >= 32) throw SilentStemError("no non-silent mixture after 32 draws");
            Rng rng(cfg.seed, 0x313c7, static_cast<std::uint64_t>(i), attempt);
            BatchSpec batch = build_mixture_batch(bank, dists, 1, slots, rng, cfg.sampling);
            MixtureSpec spec = std::get<MixtureSpec>(batch.items.front());
            try {
                static_cast<void>(render_mixture(bank, spec, cfg.sample_rate));
            } catch (const SilentStemError&) {
                continue;
            }
            out.push_back(std::move(spec));
            break;
        }
    }
    return out;
}

// --- commands (library level, so tests can call them directly) -------------------

inline std::vector<InstrumentPatch> build_configured_bank(const ExperimentConfig& cfg) {
    auto bank = generate_bank(cfg.bank.n_per_family, cfg.bank.families, cfg.seed);
    if (cfg.bank.augment) bank = augment_bank(bank);
    return bank;
}

inline void run_gen_bank(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto bank = build_configured_bank(cfg);
    save_bank(out_dir + "/bank.json", bank);
    std::map<std::string, int> counts;
    int augmented = 0;
    for (const auto& p : bank) {
        if (p.augmented_from) {
            ++augmented;
            continue;
        }
        ++counts[family_name(p.family)];
    }
    nlohmann::json summary = {{"config_hash", config_hash(cfg)},
                              {"total", bank.size()},
                              {"augmented", augmented},
                              {"per_family", counts}};
    std::ofstream os(out_dir + "/bank_summary.json");
    if (!os) throw std::runtime_error("cannot write bank summary");
    os << summary.dump(2) << "\n";
}

inline std::string wav_content_name(const AudioBuffer& buf) {
    std::string bytes(buf.samples.size() * sizeof(double), '\0');
    if (!buf.samples.empty())
        std::memcpy(bytes.data(), buf.samples.data(), bytes.size());
    return hex64(fnv1a(bytes)) + ".wav";
}

inline void run_gen_data(const ExperimentConfig& cfg, const std::string& bank_path,
                         const std::string& out_dir, bool dump_mel = false) {
    namespace fs = std::filesystem;
    const auto bank = load_bank(bank_path);
    const auto dists = all_family_distributions();
    fs::create_directories(out_dir + "/wav");
    if (dump_mel) fs::create_directories(out_dir + "/mel");
    std::ofstream manifest(out_dir + "/manifest.jsonl");
    if (!manifest) throw std::runtime_error("cannot write manifest");

    auto emit = [&](nlohmann::json line, const AudioBuffer& buf) {
        const std::string name = wav_content_name(buf);
        write_wav(out_dir + "/wav/" + name, buf);
        line["wav"] = "wav/" + name;
        if (dump_mel) {
            const std::string mel_name = name.substr(0, 16) + ".f32";
            save_spectrogram(out_dir + "/mel/" + mel_name, mel_spectrogram(buf, cfg.mel));
            line["mel"] = "mel/" + mel_name;
        }
        line["config_hash"] = config_hash(cfg);
        manifest << line.dump() << "\n";
    };

    for (const auto& [spec, true_id] : make_single_test_set(cfg, bank, dists)) {
        const InstrumentPatch& p = detail::patch_by_id(bank, true_id);
        emit({{"type", "single"}, {"spec", sound_spec_to_json(spec)}, {"true_id", true_id}},
             render_sound(p, spec, cfg.sample_rate));
    }
    for (const MixtureSpec& mix : make_mixture_test_set(cfg, bank, dists))
        emit({{"type", "mixture"}, {"spec", mixture_spec_to_json(mix)}},
             render_mixture(bank, mix, cfg.sample_rate));
}

inline std::string run_train(const ExperimentConfig& cfg, const std::string& bank_path,
                             const std::string& out_dir) {
    namespace fs = std::filesystem;
    const auto bank = load_bank(bank_path);
    const auto dists = all_family_distributions();
    fs::create_directories(out_dir);

    EncoderParams frozen;
    const EncoderParams* frozen_ptr = nullptr;
    if (cfg.train.loss == LossKind::multi_encoder) {
        if (cfg.frozen_checkpoint.empty())
            throw std::invalid_argument("multi_encoder needs frozen_checkpoint in the config");
        auto loaded = load_checkpoint(cfg.frozen_checkpoint);
        if (loaded.meta.kind != "encoder")
            throw std::invalid_argument("frozen_checkpoint must be a single-encoder checkpoint");
        frozen = std::move(loaded.params);
        frozen_ptr = &frozen;
    }

    TrainResult result = train(cfg.train, bank, dists, frozen_ptr);
    const std::string hash = config_hash(cfg);
    CheckpointMeta meta;
    meta.seed = cfg.seed;
    meta.step = cfg.train.steps;
    meta.config_hash = hash;
    if (cfg.train.loss == LossKind::multi_encoder)
        save_checkpoint(out_dir + "/checkpoint.bin", result.multi, meta);
    else
        save_checkpoint(out_dir + "/checkpoint.bin", result.params, meta);
    save_loss_trace(out_dir + "/loss.csv", result.loss_trace, hash);
    const double final_loss = result.loss_trace.empty() ? 0.0 : result.loss_trace.back();
    return "trained " + std::string(loss_kind_name(cfg.train.loss)) + " for " +
           std::to_string(cfg.train.steps) + " steps, final loss " + std::to_string(final_loss) +
           ", config_hash=" + hash;
}

inline AudioEmbedder embedder_from_checkpoint(const LoadedCheckpoint& ckpt, const MelParams& mel) {
    if (ckpt.meta.kind == "multi_encoder")
        // the shared trunk with head 0; per-slot heads are used for mixtures
        return make_encoder_embedder(ckpt.multi.slot_params(0), mel);
    return make_encoder_embedder(ckpt.params, mel);
}

inline EmbeddingDatabase run_build_db(const ExperimentConfig& cfg, const std::string& bank_path,
                                      const std::string& checkpoint_path,
                                      const std::string& out_path) {
    const auto bank = load_bank(bank_path);
    const auto dists = all_family_distributions();
    AudioEmbedder embedder;
    std::string ckpt_hash = "descriptors";
    if (checkpoint_path == "descriptors") {
        embedder = make_descriptor_embedder(bank, dists, cfg.sample_rate, cfg.mel, cfg.sampling);
    } else {
        embedder = embedder_from_checkpoint(load_checkpoint(checkpoint_path), cfg.mel);
        ckpt_hash = checkpoint_file_hash(checkpoint_path);
    }
    EmbeddingDatabase db =
        build_database(bank, dists, embedder, cfg.sample_rate, cfg.sampling, ckpt_hash);
    if (!out_path.empty()) save_database(out_path, db);
    return db;
}

inline void run_query(const std::string& db_path, const std::string& checkpoint_path,
                      const std::string& wav_path, int k, std::optional<Family> family,
                      const MelParams& mel, std::ostream& out) {
    const EmbeddingDatabase db = load_database(db_path);
    AudioEmbedder embedder;
    if (checkpoint_path == "descriptors") {
        // a descriptor database stores standardized vectors already; reuse stats is
        // impossible without the bank, so raw descriptors are compared instead
        embedder = [mel](const AudioBuffer& buf) -> Embedding {
            return timbre_descriptors(buf, mel);
        };
    } else {
        embedder = embedder_from_checkpoint(load_checkpoint(checkpoint_path), mel);
    }
    AudioBuffer buf = read_wav(wav_path);
    if (buf.samples.size() < 2) throw std::invalid_argument("WAV too short: " + wav_path);
    std::map<int, Family> family_of;
    for (const auto& e : db.entries) family_of[e.instrument_id] = e.family;
    const QueryResult r = query(db, embedder(buf), k, family);
    for (const auto& [id, dist] : r.ranked)
        out << id << "\t" << family_name(family_of.at(id)) << "\t" << dist << "\n";
}

// method name -> checkpoint path, or the literal "descriptors"
using MethodSpec = std::vector<std::pair<std::string, std::string>>;

inline std::vector<MethodReport> run_evaluate(const ExperimentConfig& cfg,
                                              const std::string& bank_path,
                                              const MethodSpec& methods, const std::string& mode,
                                              const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (mode != "single" && mode != "mixture" && mode != "baselines")
        throw std::invalid_argument("mode must be single, mixture, or baselines");
    const auto bank = load_bank(bank_path);
    const auto dists = all_family_distributions();
    const std::string hash = config_hash(cfg);

    MethodSpec effective = methods;
    if (mode == "baselines") effective = {{"descriptors", "descriptors"}};

    SoundRenderer renderer = [&](const SoundSpec& spec) {
        return render_sound(detail::patch_by_id(bank, spec.instrument_id), spec, cfg.sample_rate);
    };

    std::vector<MethodReport> rows;
    for (const auto& [method, ckpt_path] : effective) {
        AudioEmbedder embedder;
        LoadedCheckpoint ckpt;
        std::string ckpt_hash = "descriptors";
        if (ckpt_path == "descriptors") {
            embedder =
                make_descriptor_embedder(bank, dists, cfg.sample_rate, cfg.mel, cfg.sampling);
        } else {
            ckpt = load_checkpoint(ckpt_path);
            embedder = embedder_from_checkpoint(ckpt, cfg.mel);
            ckpt_hash = checkpoint_file_hash(ckpt_path);
        }
        EmbeddingDatabase db =
            build_database(bank, dists, embedder, cfg.sample_rate, cfg.sampling, ckpt_hash);

        EvalReport report;
        if (mode == "mixture") {
            std::vector<std::pair<MixtureSpec, AudioBuffer>> mixtures;
            for (const MixtureSpec& mix : make_mixture_test_set(cfg, bank, dists))
                mixtures.emplace_back(mix, render_mixture(bank, mix, cfg.sample_rate));
            MixtureEmbedder memb;
            if (ckpt.meta.kind == "multi_encoder") {
                MultiEncoderParams multi = ckpt.multi;
                MelParams mel = cfg.mel;
                memb = [multi, mel](const AudioBuffer& buf, int slot) {
                    const int s = std::min(slot, multi.slots - 1);
                    return encode(multi.slot_params(s), mel_spectrogram(buf, mel));
                };
            } else {
                memb = [embedder](const AudioBuffer& buf, int) { return embedder(buf); };
            }
            report = evaluate_mixture(db, memb, mixtures, cfg.eval.global_ranking);
        } else {
            report = evaluate_single_source(db, embedder, renderer,
                                            make_single_test_set(cfg, bank, dists));
        }
        report.config_echo = hash;
        rows.push_back({method, std::move(report)});
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        save_report_csv(out_dir + "/report.csv", rows, hash);
        save_report_markdown(out_dir + "/report.md", rows, "retrieval accuracy (" + mode + ")",
                             hash);
    }
    return rows;
}

}  // namespace timbre
