#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "timbre/encoder.hpp"
#include "timbre/features.hpp"
#include "timbre/io.hpp"
#include "timbre/retrieval.hpp"

using namespace timbre;

namespace {

Embedding random_unit(Rng& rng, int dim) {
    Embedding v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.normal(0.0, 1.0);
    return v.normalized();
}

// Synthetic database: `per_family` random unit vectors for each of `families`.
EmbeddingDatabase synthetic_db(const std::vector<Family>& families, int per_family, int dim,
                               std::uint64_t seed) {
    EmbeddingDatabase db;
    int id = 0;
    for (Family f : families) {
        for (int i = 0; i < per_family; ++i) {
            Rng rng(seed, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(i));
            db.entries.push_back({id++, f, random_unit(rng, dim)});
        }
    }
    return db;
}

// Brute-force ranking oracle: cosine distance to every kept entry, stable sort.
std::vector<std::pair<int, double>> scan_oracle(const EmbeddingDatabase& db, const Embedding& q,
                                                std::optional<Family> filter = std::nullopt) {
    std::vector<std::pair<int, double>> out;
    const Embedding qb = q.normalized();
    for (const DatabaseEntry& e : db.entries) {
        if (filter && e.family != *filter) continue;
        out.emplace_back(e.instrument_id, 1.0 - oracle::cosine(e.vec, qb));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    return out;
}

}  // namespace

TEST_CASE("query returns an exact database vector at rank 1 with zero distance") {
    auto db = synthetic_db({Family::bass, Family::reed}, 10, 16, 11);
    for (std::size_t i : {std::size_t{0}, std::size_t{7}, std::size_t{19}}) {
        auto r = query(db, db.entries[i].vec, 5);
        REQUIRE(r.ranked.size() == 5);
        CHECK(r.ranked[0].first == db.entries[i].instrument_id);
        CHECK(std::abs(r.ranked[0].second) < 1e-9);
    }
}

TEST_CASE("query matches a brute-force full scan") {
    auto db = synthetic_db({Family::bass, Family::strings, Family::mallet}, 15, 24, 3);
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        Embedding q(24);
        for (int i = 0; i < 24; ++i) q(i) = rng.normal(0.0, 1.0);
        auto want = scan_oracle(db, q);
        auto top5 = query(db, q, 5);
        REQUIRE(top5.ranked.size() == 5);
        for (int i = 0; i < 5; ++i) {
            CHECK(top5.ranked[static_cast<std::size_t>(i)].first ==
                  want[static_cast<std::size_t>(i)].first);
            CHECK(top5.ranked[static_cast<std::size_t>(i)].second ==
                  doctest::Approx(want[static_cast<std::size_t>(i)].second).epsilon(1e-12));
        }
        // k past the database size yields the complete ranking
        auto full = query(db, q, 10000);
        REQUIRE(full.ranked.size() == db.entries.size());
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(full.ranked[i].first == want[i].first);
    }
}

TEST_CASE("query distance ties break by ascending instrument id") {
    EmbeddingDatabase db;
    Embedding v = Embedding::Unit(4, 0);
    db.entries.push_back({9, Family::bass, v});
    db.entries.push_back({2, Family::bass, v});
    db.entries.push_back({5, Family::bass, v});
    auto r = query(db, v, 3);
    CHECK(r.ranked[0].first == 2);
    CHECK(r.ranked[1].first == 5);
    CHECK(r.ranked[2].first == 9);
}

TEST_CASE("query family filter restricts candidates; empty result throws") {
    auto db = synthetic_db({Family::bass, Family::organ}, 8, 12, 21);
    Rng rng(4);
    Embedding q = random_unit(rng, 12);
    auto r = query(db, q, 100, Family::organ);
    REQUIRE(r.ranked.size() == 8);
    auto want = scan_oracle(db, q, Family::organ);
    for (std::size_t i = 0; i < 8; ++i) CHECK(r.ranked[i].first == want[i].first);
    for (const auto& [id, dist] : r.ranked) CHECK(id >= 8);  // organ ids come second
    CHECK_THROWS_AS(static_cast<void>(query(db, q, 5, Family::flute)), std::invalid_argument);
    CHECK_THROWS_AS(static_cast<void>(query(db, q, 0)), std::invalid_argument);
    CHECK_THROWS_AS(static_cast<void>(query(db, Embedding::Zero(12), 5)), std::invalid_argument);
}

TEST_CASE("chance_level is k over candidate count, clipped to one") {
    auto db = synthetic_db({Family::bass, Family::organ}, 8, 6, 1);
    CHECK(chance_level(db, std::nullopt, 1) == doctest::Approx(1.0 / 16.0));
    CHECK(chance_level(db, std::nullopt, 5) == doctest::Approx(5.0 / 16.0));
    CHECK(chance_level(db, Family::bass, 5) == doctest::Approx(5.0 / 8.0));
    CHECK(chance_level(db, Family::bass, 20) == doctest::Approx(1.0));
    CHECK_THROWS_AS(static_cast<void>(chance_level(db, Family::reed, 5)), std::invalid_argument);
}

TEST_CASE("build_database: one unit-norm entry per non-augmented instrument, deterministic") {
    auto bank = generate_bank(3, {Family::bass, Family::keyboard, Family::flute}, 77);
    auto aug = augment_bank(bank);
    auto dists = all_family_distributions();

    EncoderParams params = EncoderParams::init({}, 5);
    AudioEmbedder embedder = [&](const AudioBuffer& buf) {
        return encode(params, mel_spectrogram(buf));
    };

    auto db = build_database(aug, dists, embedder, 16000.0, {}, "cafe");
    CHECK(db.entries.size() == bank.size());  // stripped variants are skipped
    CHECK(db.checkpoint_hash == "cafe");
    CHECK(db.policy == "median_note");
    std::vector<int> ids;
    for (const auto& e : db.entries) {
        ids.push_back(e.instrument_id);
        CHECK(e.vec.norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(e.instrument_id < kAugmentIdOffset);
    }
    CHECK(std::is_sorted(ids.begin(), ids.end()));

    auto db2 = build_database(aug, dists, embedder, 16000.0, {}, "cafe");
    REQUIRE(db2.entries.size() == db.entries.size());
    for (std::size_t i = 0; i < db.entries.size(); ++i)
        CHECK(db.entries[i].vec == db2.entries[i].vec);  // bit-exact
}

TEST_CASE("build_database rejects a silent instrument") {
    auto bank = generate_bank(1, {Family::bass}, 3);
    bank[0].master_gain = 0.0;
    auto dists = all_family_distributions();
    AudioEmbedder embedder = [](const AudioBuffer&) { return Embedding::Unit(4, 0); };
    CHECK_THROWS_AS(static_cast<void>(build_database(bank, dists, embedder, 16000.0)),
                    SilentStemError);
}

TEST_CASE("database save/load round trip is bit-exact") {
    auto db = synthetic_db({Family::guitar, Family::brass}, 6, 32, 8);
    db.checkpoint_hash = "deadbeef";
    const std::string path = "rt_db.bin";
    save_database(path, db);
    auto back = load_database(path);
    REQUIRE(back.entries.size() == db.entries.size());
    CHECK(back.checkpoint_hash == "deadbeef");
    CHECK(back.policy == db.policy);
    for (std::size_t i = 0; i < db.entries.size(); ++i) {
        CHECK(back.entries[i].instrument_id == db.entries[i].instrument_id);
        CHECK(back.entries[i].family == db.entries[i].family);
        CHECK(back.entries[i].vec == db.entries[i].vec);
    }
    CHECK_THROWS_AS(save_database("x.bin", EmbeddingDatabase{}), std::invalid_argument);
}

TEST_CASE("evaluate_single_source: an embedder that recovers the database vector scores 100%") {
    auto db = synthetic_db({Family::bass, Family::reed, Family::synth_pad}, 12, 16, 31);
    // Smuggle the instrument id through the audio buffer so the fake embedder
    // can look up the exact database vector.
    SoundRenderer renderer = [](const SoundSpec& spec) {
        AudioBuffer buf;
        buf.samples = {static_cast<double>(spec.instrument_id)};
        return buf;
    };
    AudioEmbedder embedder = [&](const AudioBuffer& buf) {
        const int id = static_cast<int>(buf.samples.at(0));
        return db.entries[static_cast<std::size_t>(id)].vec;
    };
    std::vector<std::pair<SoundSpec, int>> tests;
    for (const auto& e : db.entries) {
        SoundSpec s;
        s.instrument_id = e.instrument_id;
        tests.emplace_back(s, e.instrument_id);
    }
    auto report = evaluate_single_source(db, embedder, renderer, tests);
    CHECK(report.avg_top1 == doctest::Approx(1.0));
    CHECK(report.avg_top5 == doctest::Approx(1.0));
    CHECK(report.query_count == 36);
    CHECK(report.per_family.size() == 3);

    SoundSpec bogus;
    bogus.instrument_id = 999;
    CHECK_THROWS_AS(
        static_cast<void>(evaluate_single_source(db, embedder, renderer, {{bogus, 999}})),
        std::invalid_argument);
}

TEST_CASE("evaluate_single_source: a random encoder sits at chance level") {
    const int per_family = 10;
    auto db = synthetic_db({Family::bass, Family::organ, Family::flute, Family::guitar},
                           per_family, 24, 5);
    Rng qrng(1234);
    SoundRenderer renderer = [](const SoundSpec& spec) {
        AudioBuffer buf;
        buf.samples = {static_cast<double>(spec.instrument_id)};
        return buf;
    };
    AudioEmbedder embedder = [&](const AudioBuffer&) { return random_unit(qrng, 24); };

    const int reps = 50;  // 50 passes over 40 instruments = 2000 queries
    std::vector<std::pair<SoundSpec, int>> tests;
    for (int r = 0; r < reps; ++r)
        for (const auto& e : db.entries) {
            SoundSpec s;
            s.instrument_id = e.instrument_id;
            tests.emplace_back(s, e.instrument_id);
        }
    auto report = evaluate_single_source(db, embedder, renderer, tests);
    const auto n = static_cast<double>(tests.size());
    const double p1 = 1.0 / 40.0, p5 = 5.0 / 40.0;
    CHECK(std::abs(report.avg_top1 - p1) < 3.0 * std::sqrt(p1 * (1 - p1) / n));
    CHECK(std::abs(report.avg_top5 - p5) < 3.0 * std::sqrt(p5 * (1 - p5) / n));
    CHECK(report.avg_top1 <= report.avg_top5);
}

TEST_CASE("rankings are invariant under a global rotation of embedding space") {
    const int dim = 16;
    auto db = synthetic_db({Family::bass, Family::strings}, 10, dim, 41);
    Rng rng(7);
    Eigen::MatrixXd m(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = rng.normal(0.0, 1.0);
    Eigen::MatrixXd rot = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();

    EmbeddingDatabase rotated = db;
    for (auto& e : rotated.entries) e.vec = (rot * e.vec).eval();

    for (int trial = 0; trial < 20; ++trial) {
        Embedding q(dim);
        for (int i = 0; i < dim; ++i) q(i) = rng.normal(0.0, 1.0);
        auto a = query(db, q, 20);
        auto b = query(rotated, (rot * q).eval(), 20);
        REQUIRE(a.ranked.size() == b.ranked.size());
        for (std::size_t i = 0; i < a.ranked.size(); ++i) {
            CHECK(a.ranked[i].first == b.ranked[i].first);
            CHECK(a.ranked[i].second == doctest::Approx(b.ranked[i].second).epsilon(1e-9));
        }
    }
}

TEST_CASE("evaluate_mixture: perfect per-slot embedder scores 100%, random sits at chance") {
    const int per_family = 10;
    auto db = synthetic_db({Family::percussion, Family::bass, Family::synth_lead}, per_family, 16,
                           13);
    // Mixture "audio" carries its constituent ids, one per slot.
    auto make_mixture = [&](std::vector<int> ids) {
        MixtureSpec spec;
        AudioBuffer audio;
        for (int id : ids) {
            SoundSpec s;
            s.instrument_id = id;
            spec.components.emplace_back(id, s);
            audio.samples.push_back(static_cast<double>(id));
        }
        return std::make_pair(spec, audio);
    };
    std::vector<std::pair<MixtureSpec, AudioBuffer>> mixtures;
    Rng pick(17);
    for (int m = 0; m < 60; ++m)
        mixtures.push_back(make_mixture({pick.uniform_int(0, 9), 10 + pick.uniform_int(0, 9),
                                         20 + pick.uniform_int(0, 9)}));

    MixtureEmbedder perfect = [&](const AudioBuffer& audio, int slot) {
        const int id = static_cast<int>(audio.samples.at(static_cast<std::size_t>(slot)));
        return db.entries[static_cast<std::size_t>(id)].vec;
    };
    auto report = evaluate_mixture(db, perfect, mixtures);
    CHECK(report.avg_top1 == doctest::Approx(1.0));
    CHECK(report.avg_top5 == doctest::Approx(1.0));
    CHECK(report.query_count == 180);  // 60 mixtures x 3 slots
    CHECK(report.per_family.size() == 3);

    Rng qrng(55);
    MixtureEmbedder random = [&](const AudioBuffer&, int) { return random_unit(qrng, 16); };
    auto rnd = evaluate_mixture(db, random, mixtures);
    // family-filtered ranking: chance is 5 of 10 for top-5, 1 of 10 for top-1
    const double n = 180.0;
    CHECK(std::abs(rnd.avg_top1 - 0.1) < 3.0 * std::sqrt(0.1 * 0.9 / n));
    CHECK(std::abs(rnd.avg_top5 - 0.5) < 3.0 * std::sqrt(0.5 * 0.5 / n));

    // global ranking drops the filter: top-1 chance falls to 1 of 30
    auto glob = evaluate_mixture(db, random, mixtures, true);
    CHECK(glob.avg_top1 < rnd.avg_top1 + 3.0 * std::sqrt(0.1 * 0.9 / n));
    CHECK(glob.avg_top5 <= 1.0);
}

TEST_CASE("checkpoint save/load round trips both encoder kinds") {
    EncoderConfig cfg{8, 16, 6};
    EncoderParams p = EncoderParams::init(cfg, 42);
    CheckpointMeta meta;
    meta.seed = 42;
    meta.step = 17;
    meta.config_hash = "abc";
    save_checkpoint("rt_enc.bin", p, meta);
    auto back = load_checkpoint("rt_enc.bin");
    CHECK(back.meta.kind == "encoder");
    CHECK(back.meta.step == 17);
    CHECK(back.meta.seed == 42);
    CHECK(back.meta.config_hash == "abc");
    CHECK(back.params.config.hidden == 16);
    CHECK(back.params.flat == p.flat);  // bit-exact

    MultiEncoderParams mp = MultiEncoderParams::init(cfg, 3, 43);
    save_checkpoint("rt_multi.bin", mp, meta);
    auto mback = load_checkpoint("rt_multi.bin");
    CHECK(mback.meta.kind == "multi_encoder");
    CHECK(mback.meta.slots == 3);
    CHECK(mback.multi.flat == mp.flat);

    // identical writes produce identical files
    save_checkpoint("rt_enc2.bin", p, meta);
    CHECK(checkpoint_file_hash("rt_enc.bin") == checkpoint_file_hash("rt_enc2.bin"));
}
