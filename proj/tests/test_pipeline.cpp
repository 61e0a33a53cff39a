#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "timbre/config.hpp"
#include "timbre/pipeline.hpp"

using namespace timbre;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig c;
    c.seed = 7;
    c.bank.n_per_family = 3;
    c.bank.families = {Family::bass, Family::percussion, Family::synth_lead};
    c.bank.augment = false;
    c.sampling.note_duration = 1.5;
    c.sampling.note_length = 2.0;
    c.sampling.score_length = 3.0;
    c.mel.n_mels = 32;
    c.train.arch = {32, 32, 16};
    c.train.steps = 3;
    c.train.batch_size = 4;
    c.eval.n_single_queries = 6;
    c.eval.n_mixture_queries = 3;
    c.eval.n_mixture_components = 3;
    // normalize through the JSON path so derived fields are synced
    return config_from_json(config_to_json(c));
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("pipe_tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

}  // namespace

TEST_CASE("config JSON round trip preserves the hash; bad configs are rejected") {
    ExperimentConfig c = tiny_config();
    auto j = config_to_json(c);
    ExperimentConfig back = config_from_json(j);
    CHECK(config_hash(back) == config_hash(c));
    CHECK(back.train.loss == c.train.loss);
    CHECK(back.bank.families == c.bank.families);
    CHECK(back.train.seed == c.seed);  // derived field synced on load

    auto broken = j;
    broken["train"]["loss"] = "nope";
    CHECK_THROWS_AS(static_cast<void>(config_from_json(broken)), std::invalid_argument);
    broken = j;
    broken.erase("seed");
    CHECK_THROWS_AS(static_cast<void>(config_from_json(broken)), std::invalid_argument);
    broken = j;
    broken["bank"]["n_per_family"] = 0;
    CHECK_THROWS_AS(static_cast<void>(config_from_json(broken)), std::invalid_argument);
    broken = j;
    broken["train"]["arch"]["n_mels"] = 8;  // inconsistent with mel.n_mels
    CHECK_THROWS_AS(static_cast<void>(config_from_json(broken)), std::invalid_argument);

    // hash reacts to any field change
    auto changed = j;
    changed["seed"] = 8;
    CHECK(config_hash(config_from_json(changed)) != config_hash(c));
}

TEST_CASE("sound and mixture specs survive the manifest JSON round trip") {
    SoundSpec s;
    s.instrument_id = 4;
    s.kind = SoundKind::score;
    s.length = 3.25;
    s.notes = {{60, 100, 0.0, 0.5}, {64, 80, 1.0, 0.75}};
    SoundSpec s2 = sound_spec_from_json(sound_spec_to_json(s));
    CHECK(s2.instrument_id == 4);
    CHECK(s2.kind == SoundKind::score);
    CHECK(s2.length == 3.25);
    REQUIRE(s2.notes.size() == 2);
    CHECK(s2.notes[1].pitch == 64);
    CHECK(s2.notes[1].onset == 1.0);

    MixtureSpec m;
    m.length = 3.0;
    m.components.emplace_back(1, s);
    m.components.emplace_back(7, s);
    MixtureSpec m2 = mixture_spec_from_json(mixture_spec_to_json(m));
    REQUIRE(m2.components.size() == 2);
    CHECK(m2.components[1].first == 7);
    CHECK(m2.components[0].second.notes.size() == 2);
}

TEST_CASE("spectrogram dump round trips at float precision") {
    TempDir dir("mel");
    AudioBuffer buf;
    buf.samples.resize(16000);
    for (std::size_t i = 0; i < buf.samples.size(); ++i)
        buf.samples[i] = 0.5 * std::sin(2.0 * M_PI * 440.0 * static_cast<double>(i) / 16000.0);
    MelParams mp;
    mp.n_mels = 32;
    MelSpectrogram mel = mel_spectrogram(buf, mp);
    save_spectrogram(dir / "a.f32", mel);
    MelSpectrogram back = load_spectrogram(dir / "a.f32");
    REQUIRE(back.data.rows() == mel.data.rows());
    REQUIRE(back.data.cols() == mel.data.cols());
    CHECK(back.params.n_mels == 32);
    for (long t = 0; t < mel.data.rows(); ++t)
        for (long m = 0; m < mel.data.cols(); ++m)
            CHECK(back.data(t, m) ==
                  doctest::Approx(mel.data(t, m)).epsilon(1e-6));
}

TEST_CASE("gen-bank is deterministic and its summary matches the config") {
    ExperimentConfig cfg = tiny_config();
    TempDir a("bank_a"), b("bank_b");
    run_gen_bank(cfg, a / "");
    run_gen_bank(cfg, b / "");
    CHECK(slurp(a / "bank.json") == slurp(b / "bank.json"));
    CHECK(slurp(a / "bank_summary.json") == slurp(b / "bank_summary.json"));

    auto summary = nlohmann::json::parse(slurp(a / "bank_summary.json"));
    CHECK(summary.at("total").get<int>() == 9);
    CHECK(summary.at("config_hash").get<std::string>() == config_hash(cfg));
    for (Family f : cfg.bank.families)
        CHECK(summary.at("per_family").at(family_name(f)).get<int>() == 3);

    // augmentation adds stripped variants and reports them separately
    ExperimentConfig aug = cfg;
    aug.bank.augment = true;
    TempDir c("bank_c");
    run_gen_bank(aug, c / "");
    auto s2 = nlohmann::json::parse(slurp(c / "bank_summary.json"));
    CHECK(s2.at("total").get<int>() ==
          9 + s2.at("augmented").get<int>());
    auto bank = load_bank(c / "bank.json");
    CHECK(bank.size() == s2.at("total").get<std::size_t>());
}

TEST_CASE("gen-data writes a complete deterministic manifest") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir("data");
    run_gen_bank(cfg, dir / "");
    run_gen_data(cfg, dir / "bank.json", dir / "out", true);

    std::ifstream manifest(dir / "out/manifest.jsonl");
    int singles = 0, mixtures = 0;
    std::string line;
    while (std::getline(manifest, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.at("config_hash").get<std::string>() == config_hash(cfg));
        CHECK(fs::exists(fs::path(dir / "out") / j.at("wav").get<std::string>()));
        CHECK(fs::exists(fs::path(dir / "out") / j.at("mel").get<std::string>()));
        if (j.at("type") == "single") {
            ++singles;
            SoundSpec s = sound_spec_from_json(j.at("spec"));
            CHECK(s.instrument_id == j.at("true_id").get<int>());
            AudioBuffer wav =
                read_wav((fs::path(dir / "out") / j.at("wav").get<std::string>()).string());
            CHECK(rms(wav) >= kSilenceRmsThreshold);
        } else {
            ++mixtures;
            MixtureSpec m = mixture_spec_from_json(j.at("spec"));
            CHECK(static_cast<int>(m.components.size()) == cfg.eval.n_mixture_components);
        }
    }
    CHECK(singles == cfg.eval.n_single_queries);
    CHECK(mixtures == cfg.eval.n_mixture_queries);

    run_gen_data(cfg, dir / "bank.json", dir / "out2", true);
    CHECK(slurp(dir / "out/manifest.jsonl") == slurp(dir / "out2/manifest.jsonl"));
}

TEST_CASE("train: zero learning rate leaves the initialization untouched") {
    ExperimentConfig cfg = tiny_config();
    cfg.train.optimizer.lr = 0.0;
    TempDir dir("lr0");
    run_gen_bank(cfg, dir / "");
    run_train(cfg, dir / "bank.json", dir / "run");
    auto ckpt = load_checkpoint(dir / "run/checkpoint.bin");
    EncoderParams init = EncoderParams::init(cfg.train.arch, cfg.seed);
    CHECK(ckpt.params.flat == init.flat);  // bit-exact
    CHECK(ckpt.meta.step == cfg.train.steps);
    CHECK(ckpt.meta.config_hash == config_hash(cfg));

    std::string trace = slurp(dir / "run/loss.csv");
    CHECK(trace.find("config_hash=" + config_hash(cfg)) != std::string::npos);
    CHECK(trace.find("step,loss") != std::string::npos);
}

TEST_CASE("train: identical seeds give byte-identical checkpoints") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir("det");
    run_gen_bank(cfg, dir / "");
    run_train(cfg, dir / "bank.json", dir / "a");
    run_train(cfg, dir / "bank.json", dir / "b");
    CHECK(slurp(dir / "a/checkpoint.bin") == slurp(dir / "b/checkpoint.bin"));
    CHECK(slurp(dir / "a/loss.csv") == slurp(dir / "b/loss.csv"));

    ExperimentConfig other = cfg;
    other.seed = 8;
    other = config_from_json(config_to_json(other));
    run_train(other, dir / "bank.json", dir / "c");
    CHECK(slurp(dir / "a/checkpoint.bin") != slurp(dir / "c/checkpoint.bin"));
}

TEST_CASE("build-db writes one entry per non-augmented instrument") {
    ExperimentConfig cfg = tiny_config();
    cfg.bank.augment = true;
    cfg = config_from_json(config_to_json(cfg));
    TempDir dir("db");
    run_gen_bank(cfg, dir / "");
    run_train(cfg, dir / "bank.json", dir / "run");
    auto db = run_build_db(cfg, dir / "bank.json", dir / "run/checkpoint.bin", dir / "db.bin");
    CHECK(db.entries.size() == 9);
    CHECK(db.checkpoint_hash == checkpoint_file_hash(dir / "run/checkpoint.bin"));
    auto loaded = load_database(dir / "db.bin");
    REQUIRE(loaded.entries.size() == db.entries.size());
    for (std::size_t i = 0; i < db.entries.size(); ++i)
        CHECK(loaded.entries[i].vec == db.entries[i].vec);

    auto db_desc = run_build_db(cfg, dir / "bank.json", "descriptors", "");
    CHECK(db_desc.entries.size() == 9);
    CHECK(db_desc.checkpoint_hash == "descriptors");
}

TEST_CASE("evaluate reports equal a direct rerun of the retrieval module") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir("xcheck");
    run_gen_bank(cfg, dir / "");
    run_train(cfg, dir / "bank.json", dir / "run");
    auto rows = run_evaluate(cfg, dir / "bank.json",
                             {{"descriptors", "descriptors"},
                              {"infonce", dir / "run/checkpoint.bin"}},
                             "single", dir / "eval");
    REQUIRE(rows.size() == 2);

    // independent recomputation through the retrieval API
    const auto bank = load_bank(dir / "bank.json");
    const auto dists = all_family_distributions();
    auto ckpt = load_checkpoint(dir / "run/checkpoint.bin");
    AudioEmbedder embedder = make_encoder_embedder(ckpt.params, cfg.mel);
    auto db = build_database(bank, dists, embedder, cfg.sample_rate, cfg.sampling);
    SoundRenderer renderer = [&](const SoundSpec& spec) {
        return render_sound(detail::patch_by_id(bank, spec.instrument_id), spec, cfg.sample_rate);
    };
    auto direct =
        evaluate_single_source(db, embedder, renderer, make_single_test_set(cfg, bank, dists));
    CHECK(rows[1].report.avg_top1 == direct.avg_top1);
    CHECK(rows[1].report.avg_top5 == direct.avg_top5);
    CHECK(rows[1].report.query_count == direct.query_count);

    // report files carry the hash and the schema
    std::string csv = slurp(dir / "eval/report.csv");
    CHECK(csv.find("config_hash=" + config_hash(cfg)) != std::string::npos);
    CHECK(csv.find("method,top1,top5") != std::string::npos);
    CHECK(csv.find("descriptors,") != std::string::npos);
    CHECK(csv.find("bass_top1") != std::string::npos);
    std::string md = slurp(dir / "eval/report.md");
    CHECK(md.find("| method | top-1 (%) | top-5 (%) |") != std::string::npos);

    // byte-identical on rerun
    auto rows2 = run_evaluate(cfg, dir / "bank.json",
                              {{"descriptors", "descriptors"},
                               {"infonce", dir / "run/checkpoint.bin"}},
                              "single", dir / "eval2");
    CHECK(slurp(dir / "eval/report.csv") == slurp(dir / "eval2/report.csv"));
    CHECK(slurp(dir / "eval/report.md") == slurp(dir / "eval2/report.md"));

    CHECK_THROWS_AS(static_cast<void>(run_evaluate(cfg, dir / "bank.json", {}, "bogus", "")),
                    std::invalid_argument);
}

TEST_CASE("query against an instrument's own median-note WAV ranks it first") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir("query");
    run_gen_bank(cfg, dir / "");
    run_train(cfg, dir / "bank.json", dir / "run");
    auto db = run_build_db(cfg, dir / "bank.json", dir / "run/checkpoint.bin", dir / "db.bin");

    const auto bank = load_bank(dir / "bank.json");
    const auto dists = all_family_distributions();
    const InstrumentPatch& p = bank[4];
    const NoteEvent note = median_note(dists.at(p.family), cfg.sampling);
    AudioBuffer buf =
        render_sound(p, make_single_note_spec(p.id, note, cfg.sampling), cfg.sample_rate);
    write_wav(dir / "probe.wav", buf);

    std::ostringstream out;
    run_query(dir / "db.bin", dir / "run/checkpoint.bin", dir / "probe.wav", 5, std::nullopt,
              cfg.mel, out);
    std::istringstream lines(out.str());
    std::string line;
    int count = 0, first_id = -1;
    double first_dist = 1e9;
    while (std::getline(lines, line)) {
        std::istringstream ls(line);
        int id;
        std::string fam;
        double dist;
        ls >> id >> fam >> dist;
        if (count == 0) {
            first_id = id;
            first_dist = dist;
        }
        ++count;
    }
    CHECK(count == 5);
    CHECK(first_id == p.id);
    // WAV quantizes to 16 bits, so allow a small nonzero self-distance
    CHECK(first_dist < 1e-3);

    // cross-check against the programmatic query on the same (re-read) audio
    auto ckpt = load_checkpoint(dir / "run/checkpoint.bin");
    AudioEmbedder embedder = make_encoder_embedder(ckpt.params, cfg.mel);
    auto direct = query(db, embedder(read_wav(dir / "probe.wav")), 5);
    CHECK(direct.ranked[0].first == first_id);
    CHECK(direct.ranked[0].second == doctest::Approx(first_dist).epsilon(1e-4));
}

TEST_CASE("multi-encoder training through the pipeline produces per-slot heads") {
    ExperimentConfig cfg = tiny_config();
    TempDir dir("multi");
    run_gen_bank(cfg, dir / "");
    run_train(cfg, dir / "bank.json", dir / "frozen");

    ExperimentConfig mcfg = cfg;
    mcfg.train.loss = LossKind::multi_encoder;
    mcfg.frozen_checkpoint = dir / "frozen/checkpoint.bin";
    mcfg = config_from_json(config_to_json(mcfg));
    run_train(mcfg, dir / "bank.json", dir / "run");
    auto ckpt = load_checkpoint(dir / "run/checkpoint.bin");
    CHECK(ckpt.meta.kind == "multi_encoder");
    CHECK(ckpt.meta.slots == 3);

    auto rows = run_evaluate(mcfg, dir / "bank.json", {{"multi", dir / "run/checkpoint.bin"}},
                             "mixture", dir / "eval");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].report.query_count ==
          mcfg.eval.n_mixture_queries * mcfg.eval.n_mixture_components);
    CHECK(rows[0].report.avg_top1 <= rows[0].report.avg_top5);

    // missing frozen checkpoint is a config error
    ExperimentConfig bad = mcfg;
    bad.frozen_checkpoint = "";
    CHECK_THROWS_AS(static_cast<void>(run_train(bad, dir / "bank.json", dir / "x")),
                    std::invalid_argument);
}
