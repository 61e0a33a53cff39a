#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "timbre/dataset.hpp"
#include "timbre/features.hpp"
#include "timbre/losses.hpp"
#include "timbre/rng.hpp"

namespace timbre {

struct EncoderConfig {
    int n_mels = 64;
    int hidden = 256;
    int embed_dim = 64;

    int input_dim() const { return 2 * n_mels; }
    long param_count() const {
        const long in = input_dim(), h = hidden, d = embed_dim;
        return h * in + h + h * h + h + d * h + d;
    }
};

// Pooled-Mel MLP: temporal mean+max pooling -> two tanh layers -> linear
// projection -> L2 normalization. Parameters live in one flat vector so the
// optimizer and finite-difference checks can treat them uniformly.
struct EncoderParams {
    EncoderConfig config;
    Eigen::VectorXd flat;

    using MatMap = Eigen::Map<Eigen::MatrixXd>;
    using VecMap = Eigen::Map<Eigen::VectorXd>;
    using CMatMap = Eigen::Map<const Eigen::MatrixXd>;
    using CVecMap = Eigen::Map<const Eigen::VectorXd>;

    long off_b1() const { return static_cast<long>(config.hidden) * config.input_dim(); }
    long off_w2() const { return off_b1() + config.hidden; }
    long off_b2() const { return off_w2() + static_cast<long>(config.hidden) * config.hidden; }
    long off_w3() const { return off_b2() + config.hidden; }
    long off_b3() const { return off_w3() + static_cast<long>(config.embed_dim) * config.hidden; }

    MatMap w1() { return {flat.data(), config.hidden, config.input_dim()}; }
    VecMap b1() { return {flat.data() + off_b1(), config.hidden}; }
    MatMap w2() { return {flat.data() + off_w2(), config.hidden, config.hidden}; }
    VecMap b2() { return {flat.data() + off_b2(), config.hidden}; }
    MatMap w3() { return {flat.data() + off_w3(), config.embed_dim, config.hidden}; }
    VecMap b3() { return {flat.data() + off_b3(), config.embed_dim}; }
    CMatMap w1() const { return {flat.data(), config.hidden, config.input_dim()}; }
    CVecMap b1() const { return {flat.data() + off_b1(), config.hidden}; }
    CMatMap w2() const { return {flat.data() + off_w2(), config.hidden, config.hidden}; }
    CVecMap b2() const { return {flat.data() + off_b2(), config.hidden}; }
    CMatMap w3() const { return {flat.data() + off_w3(), config.embed_dim, config.hidden}; }
    CVecMap b3() const { return {flat.data() + off_b3(), config.embed_dim}; }

    static EncoderParams init(const EncoderConfig& cfg, std::uint64_t seed) {
        EncoderParams p;
        p.config = cfg;
        p.flat.setZero(cfg.param_count());
        Rng rng(seed, 0x696e6974ULL);
        auto fill = [&](MatMap m, double fan_in) {
            const double scale = 1.0 / std::sqrt(fan_in);
            for (long c = 0; c < m.cols(); ++c)
                for (long r = 0; r < m.rows(); ++r) m(r, c) = scale * rng.normal(0.0, 1.0);
        };
        fill(p.w1(), cfg.input_dim());
        fill(p.w2(), cfg.hidden);
        fill(p.w3(), cfg.hidden);
        return p;
    }
};

// Temporal mean and max pooling of a log-Mel matrix.
inline Eigen::VectorXd pool_mel(const MelSpectrogram& mel) {
    const auto n_mels = mel.data.cols();
    Eigen::VectorXd x(2 * n_mels);
    x.head(n_mels) = mel.data.colwise().mean();
    x.tail(n_mels) = mel.data.colwise().maxCoeff();
    return x;
}

struct ForwardCache {
    Eigen::VectorXd x, h1, h2, z;
};

inline Eigen::VectorXd forward_projection(const EncoderParams& p, const Eigen::VectorXd& x,
                                          ForwardCache* cache = nullptr) {
    if (x.size() != p.config.input_dim())
        throw std::invalid_argument("input dimension mismatch with encoder config");
    Eigen::VectorXd h1 = (p.w1() * x + p.b1()).array().tanh();
    Eigen::VectorXd h2 = (p.w2() * h1 + p.b2()).array().tanh();
    Eigen::VectorXd z = p.w3() * h2 + p.b3();
    if (cache) {
        cache->x = x;
        cache->h1 = h1;
        cache->h2 = h2;
        cache->z = z;
    }
    return z;
}

inline constexpr double kZeroNormEps = 1e-12;

// L2 normalization; the zero vector maps to the first basis vector
// (documented fallback), reported through the optional flag.
inline Embedding normalize_embedding(const Eigen::VectorXd& z, bool* fallback = nullptr) {
    const double n = z.norm();
    if (n < kZeroNormEps) {
        if (fallback) *fallback = true;
        Embedding e = Embedding::Zero(z.size());
        e(0) = 1.0;
        return e;
    }
    if (fallback) *fallback = false;
    return z / n;
}

inline Embedding encode(const EncoderParams& p, const MelSpectrogram& mel,
                        bool* fallback = nullptr) {
    if (mel.data.cols() != p.config.n_mels)
        throw std::invalid_argument("mel band count mismatch with encoder config");
    return normalize_embedding(forward_projection(p, pool_mel(mel)), fallback);
}

// Accumulates d(loss)/d(params) given d(loss)/dz; returns nothing extra since
// inputs are not trained.
inline void backward_projection(const EncoderParams& p, const ForwardCache& c,
                                const Eigen::VectorXd& dz, Eigen::VectorXd& grad_flat) {
    EncoderParams g;  // reuse the layout over the caller's gradient buffer
    g.config = p.config;
    if (grad_flat.size() != p.flat.size()) grad_flat.setZero(p.flat.size());
    g.flat.swap(grad_flat);

    g.w3() += dz * c.h2.transpose();
    g.b3() += dz;
    Eigen::VectorXd dh2 = p.w3().transpose() * dz;
    Eigen::VectorXd da2 = dh2.array() * (1.0 - c.h2.array().square());
    g.w2() += da2 * c.h1.transpose();
    g.b2() += da2;
    Eigen::VectorXd dh1 = p.w2().transpose() * da2;
    Eigen::VectorXd da1 = dh1.array() * (1.0 - c.h1.array().square());
    g.w1() += da1 * c.x.transpose();
    g.b1() += da1;

    g.flat.swap(grad_flat);
}

// --- classification pretext --------------------------------------------------

struct ClassifierHead {
    Eigen::MatrixXd w;  // classes x embed_dim
    Eigen::VectorXd b;

    static ClassifierHead init(int classes, int embed_dim, std::uint64_t seed) {
        ClassifierHead h;
        h.w.resize(classes, embed_dim);
        h.b.setZero(classes);
        Rng rng(seed, 0x68656164ULL);
        const double scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
        for (long c = 0; c < h.w.cols(); ++c)
            for (long r = 0; r < h.w.rows(); ++r) h.w(r, c) = scale * rng.normal(0.0, 1.0);
        return h;
    }
};

struct ClassificationResult {
    double loss = 0.0;
    Eigen::VectorXd encoder_grad;
    Eigen::MatrixXd head_w_grad;
    Eigen::VectorXd head_b_grad;
};

// Softmax cross-entropy over the pre-normalization projection output.
inline ClassificationResult classification_pretext_loss(const EncoderParams& params,
                                                        const ClassifierHead& head,
                                                        const std::vector<Eigen::VectorXd>& pooled,
                                                        const std::vector<int>& labels) {
    if (pooled.size() != labels.size() || pooled.empty())
        throw std::invalid_argument("batch/label size mismatch");
    const auto classes = static_cast<int>(head.w.rows());
    ClassificationResult r;
    r.encoder_grad.setZero(params.flat.size());
    r.head_w_grad.setZero(head.w.rows(), head.w.cols());
    r.head_b_grad.setZero(head.b.size());
    const double inv_n = 1.0 / static_cast<double>(pooled.size());

    for (std::size_t i = 0; i < pooled.size(); ++i) {
        const int label = labels[i];
        if (label < 0 || label >= classes) throw std::invalid_argument("label out of range");
        ForwardCache cache;
        const Eigen::VectorXd z = forward_projection(params, pooled[i], &cache);
        Eigen::VectorXd logits = head.w * z + head.b;
        const double mx = logits.maxCoeff();
        Eigen::VectorXd ex = (logits.array() - mx).exp();
        const double zsum = ex.sum();
        r.loss += inv_n * (std::log(zsum) + mx - logits(label));

        Eigen::VectorXd dlogits = ex / zsum;
        dlogits(label) -= 1.0;
        dlogits *= inv_n;
        r.head_w_grad += dlogits * z.transpose();
        r.head_b_grad += dlogits;
        const Eigen::VectorXd dzv = head.w.transpose() * dlogits;
        backward_projection(params, cache, dzv, r.encoder_grad);
    }
    return r;
}

// --- multi-encoder (shared trunk + per-slot heads) ---------------------------

struct MultiEncoderParams {
    EncoderConfig config;
    int slots = 3;
    Eigen::VectorXd flat;  // trunk (w1,b1,w2,b2) then per-slot (w3,b3)

    long trunk_size() const {
        const long in = config.input_dim(), h = config.hidden;
        return h * in + h + h * h + h;
    }
    long head_size() const {
        return static_cast<long>(config.embed_dim) * config.hidden + config.embed_dim;
    }
    long param_count() const { return trunk_size() + slots * head_size(); }

    // view one slot as a plain EncoderParams (copy; sizes are small)
    EncoderParams slot_params(int k) const {
        EncoderParams p;
        p.config = config;
        p.flat.setZero(config.param_count());
        p.flat.head(trunk_size()) = flat.head(trunk_size());
        p.flat.tail(head_size()) = flat.segment(trunk_size() + k * head_size(), head_size());
        return p;
    }
    void scatter_slot_grad(int k, const Eigen::VectorXd& slot_grad, Eigen::VectorXd& grad) const {
        if (grad.size() != flat.size()) grad.setZero(flat.size());
        grad.head(trunk_size()) += slot_grad.head(trunk_size());
        grad.segment(trunk_size() + k * head_size(), head_size()) += slot_grad.tail(head_size());
    }

    static MultiEncoderParams init(const EncoderConfig& cfg, int slots, std::uint64_t seed) {
        MultiEncoderParams m;
        m.config = cfg;
        m.slots = slots;
        EncoderParams base = EncoderParams::init(cfg, seed);
        m.flat.setZero(m.param_count());
        m.flat.head(m.trunk_size()) = base.flat.head(m.trunk_size());
        for (int k = 0; k < slots; ++k) {
            EncoderParams head = EncoderParams::init(cfg, hash_combine(seed, 0x6865ULL + k));
            m.flat.segment(m.trunk_size() + k * m.head_size(), m.head_size()) =
                head.flat.tail(m.head_size());
        }
        return m;
    }
};

// One projection per slot from a shared trunk.
inline std::vector<Eigen::VectorXd> multi_forward(const MultiEncoderParams& m,
                                                  const Eigen::VectorXd& x,
                                                  std::vector<ForwardCache>* caches = nullptr) {
    std::vector<Eigen::VectorXd> zs;
    if (caches) caches->resize(static_cast<std::size_t>(m.slots));
    for (int k = 0; k < m.slots; ++k) {
        EncoderParams p = m.slot_params(k);
        ForwardCache c;
        zs.push_back(forward_projection(p, x, &c));
        if (caches) (*caches)[static_cast<std::size_t>(k)] = std::move(c);
    }
    return zs;
}

// --- optimizer ----------------------------------------------------------------

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Optimizer {
public:
    explicit Optimizer(const OptimizerConfig& cfg) : cfg_(cfg) {}

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        if (cfg_.kind == OptimizerKind::sgd) {
            params -= cfg_.lr * grad;
            return;
        }
        if (m_.size() != params.size()) {
            m_.setZero(params.size());
            v_.setZero(params.size());
        }
        ++t_;
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
        v_ = cfg_.beta2 * v_.array().matrix() + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        params -= (cfg_.lr * (m_ / bc1).array() / ((v_ / bc2).array().sqrt() + cfg_.eps)).matrix();
    }

private:
    OptimizerConfig cfg_;
    Eigen::VectorXd m_, v_;
    long t_ = 0;
};

// --- training -------------------------------------------------------------------

enum class LossKind { infonce, triplet, full_triplet, classification, multi_encoder };

inline const char* loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::infonce: return "infonce";
        case LossKind::triplet: return "triplet";
        case LossKind::full_triplet: return "full_triplet";
        case LossKind::classification: return "classification";
        case LossKind::multi_encoder: return "multi_encoder";
    }
    throw std::invalid_argument("unknown loss kind");
}

inline LossKind loss_kind_from_name(const std::string& s) {
    for (LossKind k : {LossKind::infonce, LossKind::triplet, LossKind::full_triplet,
                       LossKind::classification, LossKind::multi_encoder})
        if (s == loss_kind_name(k)) return k;
    throw std::invalid_argument("unknown loss kind: " + s);
}

struct TrainConfig {
    OptimizerConfig optimizer;
    int steps = 300;
    int batch_size = 24;  // single-source batches; must be even
    double temperature = 0.1;
    double margin = 0.2;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::infonce;
    bool mixture_batches = false;  // triplet/infonce over mixture batches
    int n_mixtures = 2;
    // During contrastive mixture training, every k-th step draws a paired
    // single-note batch instead of a mixture batch (0 disables). The pairs
    // teach same-instrument note invariance, which mixture batches never
    // show (each constituent appears only once as a single there).
    std::vector<Family> family_slots = {Family::percussion, Family::bass, Family::synth_lead};
    EncoderConfig arch;
    MelParams mel;
    SamplingParams sampling;
    double sample_rate = 16000.0;
};

struct TrainResult {
    EncoderParams params;           // single-encoder losses
    ClassifierHead head;            // classification only
    MultiEncoderParams multi;       // multi_encoder only
    std::vector<double> loss_trace;
};

namespace detail {

inline const InstrumentPatch& patch_by_id(const std::vector<InstrumentPatch>& bank, int id) {
    for (const auto& p : bank)
        if (p.id == id) return p;
    throw std::invalid_argument("unknown instrument id " + std::to_string(id));
}

}  // namespace detail

// Runs `steps` optimizer updates over freshly sampled batches. Deterministic
// in config.seed. The frozen encoder is required for multi_encoder only.
inline TrainResult train(const TrainConfig& cfg, const std::vector<InstrumentPatch>& bank,
                         const std::map<Family, FamilyNoteDistribution>& dists,
                         const EncoderParams* frozen = nullptr) {
    const bool uses_mixtures = cfg.mixture_batches || cfg.loss == LossKind::full_triplet ||
                               cfg.loss == LossKind::multi_encoder;
    if (cfg.loss == LossKind::multi_encoder && frozen == nullptr)
        throw std::invalid_argument("multi_encoder training needs a frozen single encoder");
    if (cfg.temperature <= 0.0) throw std::invalid_argument("temperature must be > 0");
    if (cfg.batch_size % 2 != 0) throw std::invalid_argument("batch size must be even");

    TrainResult result;
    result.params = EncoderParams::init(cfg.arch, cfg.seed);
    if (cfg.loss == LossKind::classification)
        result.head = ClassifierHead::init(static_cast<int>(bank.size()), cfg.arch.embed_dim,
                                           cfg.seed);
    if (cfg.loss == LossKind::multi_encoder)
        result.multi = MultiEncoderParams::init(cfg.arch, static_cast<int>(cfg.family_slots.size()),
                                                cfg.seed);

    std::map<int, int> label_of_id;
    for (std::size_t i = 0; i < bank.size(); ++i)
        label_of_id[bank[i].id] = static_cast<int>(i);

    Optimizer opt(cfg.optimizer);

    auto pooled_of = [&](const BatchItem& item) {
        AudioBuffer buf;
        if (const auto* s = std::get_if<SoundSpec>(&item))
            buf = render_sound(detail::patch_by_id(bank, s->instrument_id), *s, cfg.sample_rate);
        else
            buf = render_mixture(bank, std::get<MixtureSpec>(item), cfg.sample_rate);
        return pool_mel(mel_spectrogram(buf, cfg.mel));
    };

    for (int step = 0; step < cfg.steps; ++step) {
        // a drawn mixture can have a silent stem (rare, short low-velocity
        // notes); redraw deterministically until every item renders audible
        BatchSpec batch;
        std::vector<Eigen::VectorXd> pooled_items;
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (attempt >= 32)
                throw SilentStemError("no non-silent batch after 32 draws at step " +
                                      std::to_string(step));
            Rng rng(cfg.seed, 0xba7c4ULL, static_cast<std::uint64_t>(step), attempt);
            BatchSpec candidate =
                uses_mixtures
                    ? build_mixture_batch(bank, dists, cfg.n_mixtures, cfg.family_slots, rng,
                                          cfg.sampling)
                    : build_single_source_batch(bank, dists, cfg.batch_size, rng, cfg.sampling);
            try {
                std::vector<Eigen::VectorXd> pooled;
                for (const auto& item : candidate.items) pooled.push_back(pooled_of(item));
                batch = std::move(candidate);
                pooled_items = std::move(pooled);
                break;
            } catch (const SilentStemError&) {
                continue;
            }
        }

        double loss = 0.0;
        if (cfg.loss == LossKind::classification) {
            std::vector<int> labels;
            for (const auto& item : batch.items)
                labels.push_back(label_of_id.at(std::get<SoundSpec>(item).instrument_id));
            auto r = classification_pretext_loss(result.params, result.head, pooled_items, labels);
            loss = r.loss;
            opt.step(result.params.flat, r.encoder_grad);
            // plain SGD on the head; it is discarded after training
            result.head.w -= cfg.optimizer.lr * r.head_w_grad;
            result.head.b -= cfg.optimizer.lr * r.head_b_grad;
        } else if (cfg.loss == LossKind::multi_encoder) {
            // one multi-encoder forward per mixture; frozen targets from the
            // constituents' single-note positives, aligned by slot order
            std::map<int, Eigen::VectorXd> frozen_emb;  // instrument id -> embedding
            for (std::size_t i = 0; i < batch.items.size(); ++i) {
                if (const auto* s = std::get_if<SoundSpec>(&batch.items[i])) {
                    ForwardCache c;
                    const Eigen::VectorXd z = forward_projection(*frozen, pooled_items[i], &c);
                    frozen_emb[s->instrument_id] = normalize_embedding(z);
                }
            }
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(result.multi.flat.size());
            int n_mix = 0;
            for (std::size_t i = 0; i < batch.items.size(); ++i) {
                const auto* m = std::get_if<MixtureSpec>(&batch.items[i]);
                if (!m) continue;
                ++n_mix;
                const Eigen::VectorXd& x = pooled_items[i];
                std::vector<ForwardCache> caches;
                std::vector<Embedding> outputs = multi_forward(result.multi, x, &caches);
                std::vector<Embedding> targets;
                for (const auto& [id, stem] : m->components) targets.push_back(frozen_emb.at(id));
                auto lo = multi_encoder_loss(outputs, targets);
                loss += lo.loss;
                for (int k = 0; k < result.multi.slots; ++k) {
                    EncoderParams slot = result.multi.slot_params(k);
                    Eigen::VectorXd slot_grad = Eigen::VectorXd::Zero(slot.flat.size());
                    backward_projection(slot, caches[static_cast<std::size_t>(k)],
                                        lo.embedding_grads[static_cast<std::size_t>(k)], slot_grad);
                    result.multi.scatter_slot_grad(k, slot_grad, grad);
                }
            }
            loss /= std::max(1, n_mix);
            grad /= std::max(1, n_mix);
            opt.step(result.multi.flat, grad);
        } else {
            // contrastive losses over the whole batch
            TargetSimilarityMatrix targets = build_target_matrix(batch);
            std::vector<ForwardCache> caches(batch.items.size());
            std::vector<Embedding> zs;
            for (std::size_t i = 0; i < batch.items.size(); ++i)
                zs.push_back(forward_projection(result.params, pooled_items[i], &caches[i]));
            LossOutput lo;
            if (cfg.loss == LossKind::infonce) {
                lo = infonce_loss(zs, targets, cfg.temperature);
            } else {
                const TripletAnchorMode mode =
                    cfg.loss == LossKind::full_triplet
                        ? TripletAnchorMode::full
                        : (uses_mixtures ? TripletAnchorMode::mixture_anchored
                                         : TripletAnchorMode::singles_and_pairs);
                lo = triplet_loss(zs, targets, cfg.margin, mode, mixture_flags(batch));
            }
            loss = lo.loss;
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(result.params.flat.size());
            for (std::size_t i = 0; i < zs.size(); ++i)
                backward_projection(result.params, caches[i], lo.embedding_grads[i], grad);
            opt.step(result.params.flat, grad);
        }

        if (!std::isfinite(loss))
            throw std::runtime_error("loss diverged (NaN/inf) at step " + std::to_string(step));
        result.loss_trace.push_back(loss);
    }
    return result;
}

// --- finite-difference gradient check -------------------------------------------

// f: flat parameter vector -> (loss, analytic gradient). Probes a random
// coordinate subset with central differences; returns the max relative error.
template <class F>
inline double grad_check(F&& f, const Eigen::VectorXd& x0, double eps, int n_probes, Rng& rng) {
    if (eps < 1e-7 || eps > 1e-3) throw std::invalid_argument("eps outside [1e-7, 1e-3]");
    const auto [loss0, grad] = f(x0);
    static_cast<void>(loss0);
    double max_rel = 0.0;
    for (int probe = 0; probe < n_probes; ++probe) {
        const long i = rng.uniform_int(0, static_cast<int>(x0.size()) - 1);
        Eigen::VectorXd xp = x0, xm = x0;
        xp(i) += eps;
        xm(i) -= eps;
        const double fp = f(xp).first;
        const double fm = f(xm).first;
        const double fd = (fp - fm) / (2.0 * eps);
        const double rel = std::abs(fd - grad(i)) / std::max({std::abs(fd), std::abs(grad(i)), 1e-6});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace timbre
