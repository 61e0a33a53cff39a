#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "timbre/encoder.hpp"
#include "timbre/features.hpp"
#include "timbre/retrieval.hpp"

namespace timbre {

// FNV-1a 64; stable across platforms, used to fingerprint configs and blobs.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << v;
    return os.str();
}

namespace detail {

inline void write_blob_file(const std::string& path, const nlohmann::json& header,
                            const double* data, std::size_t count) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write: " + path);
    const std::string h = header.dump();
    const std::uint64_t hlen = h.size();
    os.write("TMB1", 4);
    os.write(reinterpret_cast<const char*>(&hlen), 8);
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

inline nlohmann::json read_blob_file(const std::string& path, std::vector<double>& data) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read: " + path);
    char magic[4];
    is.read(magic, 4);
    if (std::string(magic, 4) != "TMB1") throw std::runtime_error("bad file magic: " + path);
    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), 8);
    std::string h(hlen, '\0');
    is.read(h.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(h);
    const std::size_t count = header.at("count").get<std::size_t>();
    data.resize(count);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 8));
    if (!is) throw std::runtime_error("truncated blob: " + path);
    return header;
}

}  // namespace detail

// --- checkpoints -------------------------------------------------------------

struct CheckpointMeta {
    std::string kind;  // "encoder" or "multi_encoder"
    EncoderConfig arch;
    int slots = 0;  // multi_encoder only
    std::uint64_t seed = 0;
    int step = 0;
    std::string config_hash;
};

inline nlohmann::json meta_to_json(const CheckpointMeta& m, std::size_t count) {
    return {{"kind", m.kind},
            {"count", count},
            {"arch", {{"n_mels", m.arch.n_mels}, {"hidden", m.arch.hidden}, {"embed_dim", m.arch.embed_dim}}},
            {"slots", m.slots},
            {"seed", m.seed},
            {"step", m.step},
            {"config_hash", m.config_hash}};
}

inline CheckpointMeta meta_from_json(const nlohmann::json& j) {
    CheckpointMeta m;
    m.kind = j.at("kind").get<std::string>();
    const auto& a = j.at("arch");
    m.arch = {a.at("n_mels").get<int>(), a.at("hidden").get<int>(), a.at("embed_dim").get<int>()};
    m.slots = j.at("slots").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.step = j.at("step").get<int>();
    m.config_hash = j.at("config_hash").get<std::string>();
    return m;
}

inline void save_checkpoint(const std::string& path, const EncoderParams& p, CheckpointMeta meta) {
    meta.kind = "encoder";
    meta.arch = p.config;
    detail::write_blob_file(path, meta_to_json(meta, static_cast<std::size_t>(p.flat.size())),
                            p.flat.data(), static_cast<std::size_t>(p.flat.size()));
}

inline void save_checkpoint(const std::string& path, const MultiEncoderParams& p,
                            CheckpointMeta meta) {
    meta.kind = "multi_encoder";
    meta.arch = p.config;
    meta.slots = p.slots;
    detail::write_blob_file(path, meta_to_json(meta, static_cast<std::size_t>(p.flat.size())),
                            p.flat.data(), static_cast<std::size_t>(p.flat.size()));
}

struct LoadedCheckpoint {
    CheckpointMeta meta;
    EncoderParams params;      // valid when meta.kind == "encoder"
    MultiEncoderParams multi;  // valid when meta.kind == "multi_encoder"
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::vector<double> data;
    nlohmann::json header = detail::read_blob_file(path, data);
    LoadedCheckpoint out;
    out.meta = meta_from_json(header);
    if (out.meta.kind == "encoder") {
        out.params.config = out.meta.arch;
        if (static_cast<long>(data.size()) != out.meta.arch.param_count())
            throw std::runtime_error("checkpoint size mismatch: " + path);
        out.params.flat = Eigen::Map<Eigen::VectorXd>(data.data(), static_cast<long>(data.size()));
    } else if (out.meta.kind == "multi_encoder") {
        out.multi.config = out.meta.arch;
        out.multi.slots = out.meta.slots;
        if (static_cast<long>(data.size()) != out.multi.param_count())
            throw std::runtime_error("checkpoint size mismatch: " + path);
        out.multi.flat = Eigen::Map<Eigen::VectorXd>(data.data(), static_cast<long>(data.size()));
    } else {
        throw std::runtime_error("unknown checkpoint kind: " + out.meta.kind);
    }
    return out;
}

inline std::string checkpoint_file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return hex64(fnv1a(ss.str()));
}

// --- embedding database --------------------------------------------------------

inline void save_database(const std::string& path, const EmbeddingDatabase& db) {
    if (db.entries.empty()) throw std::invalid_argument("refusing to save an empty database");
    const auto dim = db.entries.front().vec.size();
    std::vector<double> flat;
    flat.reserve(db.entries.size() * static_cast<std::size_t>(dim));
    nlohmann::json index = nlohmann::json::array();
    for (const DatabaseEntry& e : db.entries) {
        index.push_back({{"id", e.instrument_id}, {"family", family_name(e.family)}});
        for (long i = 0; i < dim; ++i) flat.push_back(e.vec(i));
    }
    nlohmann::json header = {{"count", flat.size()},
                             {"dim", dim},
                             {"index", index},
                             {"checkpoint_hash", db.checkpoint_hash},
                             {"policy", db.policy}};
    detail::write_blob_file(path, header, flat.data(), flat.size());
}

inline EmbeddingDatabase load_database(const std::string& path) {
    std::vector<double> flat;
    nlohmann::json header = detail::read_blob_file(path, flat);
    const long dim = header.at("dim").get<long>();
    EmbeddingDatabase db;
    db.checkpoint_hash = header.at("checkpoint_hash").get<std::string>();
    db.policy = header.at("policy").get<std::string>();
    std::size_t off = 0;
    for (const auto& je : header.at("index")) {
        DatabaseEntry e;
        e.instrument_id = je.at("id").get<int>();
        e.family = family_from_name(je.at("family").get<std::string>());
        e.vec = Eigen::Map<Eigen::VectorXd>(flat.data() + off, dim);
        off += static_cast<std::size_t>(dim);
        db.entries.push_back(std::move(e));
    }
    return db;
}

// --- spectrogram dump (32-bit float, row-major frames x n_mels) -------------------

inline void save_spectrogram(const std::string& path, const MelSpectrogram& mel) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write: " + path);
    nlohmann::json header = {{"frames", mel.data.rows()},
                             {"n_mels", mel.data.cols()},
                             {"params",
                              {{"n_fft", mel.params.n_fft},
                               {"hop", mel.params.hop},
                               {"n_mels", mel.params.n_mels},
                               {"fmin", mel.params.fmin},
                               {"fmax", mel.params.fmax}}}};
    const std::string h = header.dump();
    const std::uint64_t hlen = h.size();
    os.write("TMS1", 4);
    os.write(reinterpret_cast<const char*>(&hlen), 8);
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (long t = 0; t < mel.data.rows(); ++t)
        for (long m = 0; m < mel.data.cols(); ++m) {
            const float v = static_cast<float>(mel.data(t, m));
            os.write(reinterpret_cast<const char*>(&v), 4);
        }
}

inline MelSpectrogram load_spectrogram(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read: " + path);
    char magic[4];
    is.read(magic, 4);
    if (std::string(magic, 4) != "TMS1") throw std::runtime_error("bad file magic: " + path);
    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), 8);
    std::string h(hlen, '\0');
    is.read(h.data(), static_cast<std::streamsize>(hlen));
    const nlohmann::json header = nlohmann::json::parse(h);
    MelSpectrogram mel;
    const auto& jp = header.at("params");
    mel.params.n_fft = jp.at("n_fft").get<int>();
    mel.params.hop = jp.at("hop").get<int>();
    mel.params.n_mels = jp.at("n_mels").get<int>();
    mel.params.fmin = jp.at("fmin").get<double>();
    mel.params.fmax = jp.at("fmax").get<double>();
    mel.data.resize(header.at("frames").get<long>(), header.at("n_mels").get<long>());
    for (long t = 0; t < mel.data.rows(); ++t)
        for (long m = 0; m < mel.data.cols(); ++m) {
            float v = 0.0f;
            is.read(reinterpret_cast<char*>(&v), 4);
            mel.data(t, m) = v;
        }
    if (!is) throw std::runtime_error("truncated spectrogram: " + path);
    return mel;
}

// --- loss trace and reports -----------------------------------------------------

inline void save_loss_trace(const std::string& path, const std::vector<double>& trace,
                            const std::string& config_hash) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write: " + path);
    os << "# config_hash=" << config_hash << "\n";
    os << "step,loss\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < trace.size(); ++i) os << i << "," << trace[i] << "\n";
}

struct MethodReport {
    std::string method;
    EvalReport report;
};

inline void save_report_csv(const std::string& path, const std::vector<MethodReport>& rows,
                            const std::string& config_hash) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write: " + path);
    os << "# config_hash=" << config_hash << "\n";
    os << "method,top1,top5";
    std::vector<Family> fams;
    if (!rows.empty())
        for (const auto& [f, acc] : rows.front().report.per_family) fams.push_back(f);
    for (Family f : fams) os << "," << family_name(f) << "_top1," << family_name(f) << "_top5";
    os << "\n" << std::setprecision(10);
    for (const auto& row : rows) {
        os << row.method << "," << row.report.avg_top1 << "," << row.report.avg_top5;
        for (Family f : fams) {
            const auto& acc = row.report.per_family.at(f);
            os << "," << acc.top1 << "," << acc.top5;
        }
        os << "\n";
    }
}

inline void save_report_markdown(const std::string& path, const std::vector<MethodReport>& rows,
                                 const std::string& title, const std::string& config_hash) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write: " + path);
    os << "# " << title << "\n\n";
    os << "config hash: `" << config_hash << "`\n\n";
    os << "| method | top-1 (%) | top-5 (%) |\n|---|---|---|\n";
    os << std::fixed << std::setprecision(1);
    for (const auto& row : rows)
        os << "| " << row.method << " | " << 100.0 * row.report.avg_top1 << " | "
           << 100.0 * row.report.avg_top5 << " |\n";
}

}  // namespace timbre
