#pragma once

#include "manga/codec.hpp"
#include "manga/model.hpp"
#include "manga/panelization.hpp"
#include "manga/script_splitter.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace manga {

struct NoiseSchedule {
    int steps = 0;
    std::vector<double> beta, alpha, alpha_bar;
};

/// Linear beta schedule (the only kind supported).
NoiseSchedule make_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2,
                            const std::string& kind = "linear");

/// Sub-seed for stream `stream` at counter `counter`: splitmix64 over the
/// three words. All randomness in training and sampling goes through this.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t counter, std::uint64_t stream);

enum SeedStream : std::uint64_t { kStreamInit = 1, kStreamShuffle = 2, kStreamStep = 3, kStreamSample = 4 };

template <class Scalar>
LatentStack<Scalar> standard_normal_like(const LatentStack<Scalar>& shape, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    LatentStack<Scalar> out = shape;
    for (Eigen::Index i = 0; i < out.values.size(); ++i) out.values[i] = Scalar(nd(rng));
    return out;
}

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
template <class Scalar>
LatentStack<Scalar> q_sample(const LatentStack<Scalar>& z0, int t, const LatentStack<Scalar>& eps,
                             const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.steps) throw DataError("q_sample: timestep " + std::to_string(t) + " out of range");
    if (!z0.same_shape(eps)) throw DataError("q_sample: eps shape differs from z0");
    const Scalar a = Scalar(std::sqrt(sched.alpha_bar[std::size_t(t)]));
    const Scalar b = Scalar(std::sqrt(1.0 - sched.alpha_bar[std::size_t(t)]));
    LatentStack<Scalar> out = z0;
    out.values = a * z0.values + b * eps.values;
    return out;
}

/// Latent-resolution mask: every token cell expands to its p x p footprint
/// in all channels.
template <class Scalar>
LatentStack<Scalar> expand_intra_mask(const MaskSet& masks, int patch, int channels, int height, int width) {
    const int gw = width / patch;
    if (masks.tokens() != (height / patch) * gw) throw DataError("intra mask does not match the latent grid");
    auto m = LatentStack<Scalar>::zeros(masks.panels(), channels, height, width);
    for (int k = 0; k < masks.panels(); ++k)
        for (int s = 0; s < masks.tokens(); ++s) {
            if (!masks.intra(k, s)) continue;
            const int gy = s / gw, gx = s % gw;
            for (int c = 0; c < channels; ++c)
                for (int dy = 0; dy < patch; ++dy)
                    for (int dx = 0; dx < patch; ++dx) m(k, c, gy * patch + dy, gx * patch + dx) = Scalar(1);
        }
    return m;
}

template <class Scalar>
struct LossResult {
    double loss = 0.0;
    LatentStack<Scalar> grad;  ///< d loss / d eps_hat
    Eigen::Index counted = 0;
    bool all_masked = false;
};

/// Mean squared error over latent positions outside the intra mask. Padded
/// panels are included. With every position masked the loss is 0.
template <class Scalar>
LossResult<Scalar> masked_denoising_loss(const LatentStack<Scalar>& eps, const LatentStack<Scalar>& eps_hat,
                                         const MaskSet& masks, int patch) {
    if (!eps.same_shape(eps_hat)) throw DataError("masked_denoising_loss: shape mismatch");
    if (masks.panels() != eps.panels) throw DataError("masked_denoising_loss: mask panel count mismatch");
    const auto excluded = expand_intra_mask<Scalar>(masks, patch, eps.channels, eps.height, eps.width);
    LossResult<Scalar> r;
    r.grad = eps;
    r.grad.values.setZero();
    Vec<Scalar> keep = (Scalar(1) - excluded.values.array()).matrix();
    r.counted = Eigen::Index(keep.sum() + Scalar(0.5));
    if (r.counted == 0) {
        r.all_masked = true;
        return r;
    }
    Vec<Scalar> diff = ((eps_hat.values - eps.values).array() * keep.array()).matrix();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < diff.size(); ++i) acc += double(diff[i]) * double(diff[i]);
    r.loss = acc / double(r.counted);
    r.grad.values = diff * Scalar(2.0 / double(r.counted));
    return r;
}

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::string lr_schedule = "constant";  ///< or "warmup_cosine"
    int warmup_steps = 0;
};

/// Learning rate for `step` (0-based) of `total_steps`. warmup_cosine ramps
/// linearly over warmup_steps, then decays to zero along a half cosine.
double learning_rate(const AdamWConfig& cfg, std::int64_t step, std::int64_t total_steps);

template <class Scalar>
struct AdamState {
    std::vector<Mat<Scalar>> m, v;
    std::int64_t steps = 0;

    void reset(const nn::ParamStore<Scalar>& ps) {
        m.clear();
        v.clear();
        for (const auto& p : ps.all()) {
            m.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
            v.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
        }
        steps = 0;
    }
};

/// Decoupled weight decay Adam step using the gradients stored in `ps`.
template <class Scalar>
void adamw_update(nn::ParamStore<Scalar>& ps, AdamState<Scalar>& st, const AdamWConfig& cfg) {
    if (st.m.size() != ps.size()) st.reset(ps);
    ++st.steps;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.steps));
    const Scalar lr = Scalar(cfg.lr), b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto& p = ps.all()[i];
        p.value *= Scalar(1.0 - cfg.lr * cfg.weight_decay);
        st.m[i] = b1 * st.m[i] + (Scalar(1) - b1) * p.grad;
        st.v[i] = b2 * st.v[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
        auto mhat = st.m[i].array() / Scalar(bc1);
        auto vhat = st.v[i].array() / Scalar(bc2);
        p.value.array() -= lr * mhat / (vhat.sqrt() + Scalar(cfg.eps));
    }
}

/// One page prepared for the model: clean latents, caption embeddings, masks.
template <class Scalar>
struct TrainingSample {
    LatentStack<Scalar> z0;
    CaptionEmbedding<Scalar> captions;
    MaskSet masks;
};

template <class Scalar>
struct TrainState {
    MangaDiffusionModel<Scalar> model;
    AdamState<Scalar> optimizer;
    std::int64_t step = 0;
    std::uint64_t seed = 0;

    TrainState(const ModelConfig& cfg, std::uint64_t seed_)
        : model(cfg, derive_seed(seed_, 0, kStreamInit)), seed(seed_) {
        optimizer.reset(model.params());
    }
};

/// Forward + masked loss + backward for one page at a given t and eps.
/// Gradients are accumulated with weight `weight`. Returns the loss.
template <class Scalar>
double accumulate_sample_gradient(MangaDiffusionModel<Scalar>& model, const TrainingSample<Scalar>& s, int t,
                                  const LatentStack<Scalar>& eps, const NoiseSchedule& sched, Scalar weight) {
    const auto z_t = q_sample(s.z0, t, eps, sched);
    typename MangaDiffusionModel<Scalar>::Tape tape;
    const auto eps_hat = model.forward(z_t, t, s.captions, s.masks, &tape);
    auto lr = masked_denoising_loss(eps, eps_hat, s.masks, model.config().patch);
    if (lr.all_masked) return 0.0;
    lr.grad.values *= weight;
    model.backward(tape, lr.grad);
    return lr.loss;
}

/// One optimizer step on a batch. t is drawn uniformly per page (shared by
/// that page's panels); eps is standard normal. Both come from
/// derive_seed(seed, step, kStreamStep). Throws RuntimeError if the loss is
/// not finite.
template <class Scalar>
double train_step(TrainState<Scalar>& st, const std::vector<const TrainingSample<Scalar>*>& batch,
                  const NoiseSchedule& sched, const AdamWConfig& opt) {
    if (batch.empty()) throw DataError("train_step: empty batch");
    std::mt19937_64 rng(derive_seed(st.seed, std::uint64_t(st.step), kStreamStep));
    std::uniform_int_distribution<int> pick_t(0, sched.steps - 1);
    auto& ps = st.model.params();
    ps.zero_grad();
    double total = 0.0;
    std::vector<int> ts;
    const Scalar w = Scalar(1.0 / double(batch.size()));
    for (const auto* s : batch) {
        const int t = pick_t(rng);
        ts.push_back(t);
        const auto eps = standard_normal_like(s->z0, rng);
        total += accumulate_sample_gradient(st.model, *s, t, eps, sched, w);
    }
    const double loss = total / double(batch.size());
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite loss at step " << st.step << " (timesteps:";
        for (int t : ts) os << ' ' << t;
        os << ")";
        throw RuntimeError(os.str());
    }
    adamw_update(ps, st.optimizer, opt);
    ++st.step;
    return loss;
}

template <class Scalar>
double train_step(TrainState<Scalar>& st, const std::vector<TrainingSample<Scalar>>& batch, const NoiseSchedule& sched,
                  const AdamWConfig& opt) {
    std::vector<const TrainingSample<Scalar>*> ptrs;
    for (const auto& s : batch) ptrs.push_back(&s);
    return train_step(st, ptrs, sched, opt);
}

/// Batch indices for a step: the data order is a per-epoch shuffle seeded
/// by derive_seed(seed, epoch, kStreamShuffle).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t step, std::size_t batch_size,
                                       std::size_t dataset_size);

/// Ancestral DDPM sampling from z_T with posterior variance
/// beta_t (1 - abar_{t-1}) / (1 - abar_t); no noise is added at t = 0.
template <class Scalar, class Denoiser>
LatentStack<Scalar> ancestral_sample(Denoiser&& eps_fn, LatentStack<Scalar> z, const NoiseSchedule& sched,
                                     std::mt19937_64& rng) {
    for (int t = sched.steps - 1; t >= 0; --t) {
        const LatentStack<Scalar> eps = eps_fn(z, t);
        const double beta = sched.beta[std::size_t(t)];
        const double abar = sched.alpha_bar[std::size_t(t)];
        const double coef = beta / std::sqrt(1.0 - abar);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[std::size_t(t)]);
        z.values = ((z.values - Scalar(coef) * eps.values) * Scalar(inv_sqrt_alpha)).eval();
        if (t > 0) {
            const double var = beta * (1.0 - sched.alpha_bar[std::size_t(t - 1)]) / (1.0 - abar);
            const auto noise = standard_normal_like(z, rng);
            z.values += Scalar(std::sqrt(var)) * noise.values;
        }
    }
    return z;
}

/// Inference masks: padding where the script is EMPTY, no bubble masking.
MaskSet inference_masks(const ScriptSet& scripts, int tokens_per_panel);

/// Jointly samples all K_max panels for the padded scripts and decodes them.
template <class Scalar>
PanelImageStack sample(const MangaDiffusionModel<Scalar>& model, const ScriptSet& scripts, const MaskSet& masks,
                       const NoiseSchedule& sched, std::uint64_t seed, const ImageCodec& codec,
                       const TextEmbedder& embedder) {
    const auto& cfg = model.config();
    if (int(scripts.scripts.size()) != cfg.k_max)
        throw ConfigError("sample: scripts must be padded to K_max=" + std::to_string(cfg.k_max));
    if (sched.steps != cfg.num_timesteps) throw ConfigError("sample: schedule length differs from the model's");
    const auto captions = embedder.embed(scripts.scripts).template cast<Scalar>();
    std::mt19937_64 rng(derive_seed(seed, 0, kStreamSample));
    auto z = standard_normal_like(
        LatentStack<Scalar>::zeros(cfg.k_max, cfg.latent_channels, cfg.latent_height, cfg.latent_width), rng);
    auto denoise = [&](const LatentStack<Scalar>& zt, int t) { return model.forward(zt, t, captions, masks); };
    z = ancestral_sample(denoise, std::move(z), sched, rng);
    PanelImageStack out;
    out.images = codec.decode(z.template cast<float>());
    for (auto& img : out.images) {
        img.clamp();
        out.boxes.push_back({0, 0, img.width(), img.height()});
    }
    return out;
}

}  // namespace manga
