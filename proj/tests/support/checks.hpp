#pragma once

// Property checks shared by the unit tests and the acceptance runner.

#include "manga/model.hpp"
#include "reference_blocks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace manga::testing {

inline ModelConfig micro_config() {
    ModelConfig c;
    c.d_model = 8;
    c.depth = 1;
    c.heads = 2;
    c.patch = 2;
    c.latent_channels = 2;
    c.latent_height = 4;
    c.latent_width = 4;  // n = 4
    c.k_max = 2;
    c.d_text = 6;
    c.max_text_tokens = 5;
    c.mlp_ratio = 2;
    c.time_freq_dim = 8;
    c.num_timesteps = 50;
    return c;
}

template <class Scalar>
LatentStack<Scalar> random_latents(const ModelConfig& c, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    auto z = LatentStack<Scalar>::zeros(c.k_max, c.latent_channels, c.latent_height, c.latent_width);
    for (Eigen::Index i = 0; i < z.values.size(); ++i) z.values[i] = Scalar(nd(rng));
    return z;
}

struct GradCheckResult {
    int checked = 0;
    int failed = 0;
    double worst_rel = 0.0;
    std::string worst_param;
};

/// Central differences on `count` random scalar parameters of a double
/// micro model, against the analytic backward of L = sum(w * eps_hat).
inline GradCheckResult gradient_check(const ModelConfig& cfg, std::uint64_t seed, int count, double step = 1e-4,
                                      double rtol = 1e-3) {
    std::mt19937_64 rng(seed);
    MangaDiffusionModel<double> model(cfg, seed);
    randomize_parameters(model, seed + 1, 0.4);
    const auto z = random_latents<double>(cfg, rng);
    const auto caps = random_captions<double>(cfg.k_max, cfg.max_text_tokens, cfg.d_text, rng);
    MaskSet masks = MaskSet::none(cfg.k_max, cfg.tokens_per_panel());
    masks.intra(0, 1) = true;
    if (cfg.k_max > 1) masks.inter[cfg.k_max - 1] = true;
    const int t = std::uniform_int_distribution<int>(0, cfg.num_timesteps - 1)(rng);
    auto w = random_latents<double>(cfg, rng);

    auto loss = [&] { return model.forward(z, t, caps, masks).values.dot(w.values); };

    typename MangaDiffusionModel<double>::Tape tape;
    model.params().zero_grad();
    model.forward(z, t, caps, masks, &tape);
    model.backward(tape, w);

    // Every tensor at least once, then random picks.
    auto& all = model.params().all();
    std::vector<std::pair<int, Eigen::Index>> picks;
    for (std::size_t p = 0; p < all.size() && int(picks.size()) < count; ++p)
        picks.push_back({int(p), std::uniform_int_distribution<Eigen::Index>(0, all[p].value.size() - 1)(rng)});
    while (int(picks.size()) < count) {
        const int p = std::uniform_int_distribution<int>(0, int(all.size()) - 1)(rng);
        picks.push_back({p, std::uniform_int_distribution<Eigen::Index>(0, all[std::size_t(p)].value.size() - 1)(rng)});
    }

    GradCheckResult r;
    for (auto [p, i] : picks) {
        double& v = all[std::size_t(p)].value.data()[i];
        const double analytic = all[std::size_t(p)].grad.data()[i];
        const double saved = v;
        v = saved + step;
        const double lp = loss();
        v = saved - step;
        const double lm = loss();
        v = saved;
        const double numeric = (lp - lm) / (2.0 * step);
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        const double rel = std::abs(analytic - numeric) / scale;
        ++r.checked;
        if (rel > rtol) ++r.failed;
        if (rel > r.worst_rel) {
            r.worst_rel = rel;
            r.worst_param = all[std::size_t(p)].name;
        }
    }
    return r;
}

/// Runs the full network twice, perturbing only the padded panels' latents
/// and captions; true when every real-panel output value is bit-identical.
inline bool padded_isolation_holds(const ModelConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    MangaDiffusionModel<float> model(cfg, seed);
    randomize_parameters(model, seed + 7, 0.2);
    MaskSet masks = random_masks(cfg.k_max, cfg.tokens_per_panel(), rng);
    if (!masks.inter.any() && cfg.k_max > 1) {
        const int k = cfg.k_max - 1;
        masks.inter[k] = true;
        masks.intra.row(k).setConstant(false);
    }
    auto z = random_latents<float>(cfg, rng);
    auto caps = random_captions<float>(cfg.k_max, cfg.max_text_tokens, cfg.d_text, rng);
    const int t = std::uniform_int_distribution<int>(0, cfg.num_timesteps - 1)(rng);
    const auto a = model.forward(z, t, caps, masks);

    std::normal_distribution<double> nd(0.0, 10.0);
    std::bernoulli_distribution coin(0.5);
    for (int k = 0; k < cfg.k_max; ++k) {
        if (!masks.inter[k]) continue;
        for (Eigen::Index i = 0; i < z.panel_size(); ++i) z.panel(k)[i] = float(nd(rng));
        for (Eigen::Index i = 0; i < caps.tokens[std::size_t(k)].size(); ++i)
            caps.tokens[std::size_t(k)].data()[i] = float(nd(rng));
        for (int i = 0; i < caps.max_tokens; ++i) caps.valid(k, i) = coin(rng);
    }
    const auto b = model.forward(z, t, caps, masks);
    for (int k = 0; k < cfg.k_max; ++k) {
        if (masks.inter[k]) continue;
        for (Eigen::Index i = 0; i < a.panel_size(); ++i)
            if (a.panel(k)[i] != b.panel(k)[i]) return false;
    }
    return true;
}

}  // namespace manga::testing
