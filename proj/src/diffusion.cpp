#include "manga/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace manga {

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end, const std::string& kind) {
    if (kind != "linear") throw ConfigError("unsupported noise schedule kind '" + kind + "'");
    if (steps < 1) throw ConfigError("schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_start < 1.0 && beta_end > 0.0 && beta_end < 1.0))
        throw ConfigError("schedule betas must lie in (0, 1)");
    if (steps > 1 && !(beta_start < beta_end)) throw ConfigError("schedule requires beta_start < beta_end");
    NoiseSchedule s;
    s.steps = steps;
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        const double b = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * double(t) / double(steps - 1);
        prod *= 1.0 - b;
        s.beta.push_back(b);
        s.alpha.push_back(1.0 - b);
        s.alpha_bar.push_back(prod);
    }
    return s;
}

double learning_rate(const AdamWConfig& cfg, std::int64_t step, std::int64_t total_steps) {
    if (cfg.lr_schedule == "constant") return cfg.lr;
    if (cfg.lr_schedule != "warmup_cosine") throw ConfigError("unknown lr schedule '" + cfg.lr_schedule + "'");
    if (step < cfg.warmup_steps) return cfg.lr * double(step + 1) / double(cfg.warmup_steps);
    const double span = double(std::max<std::int64_t>(1, total_steps - cfg.warmup_steps));
    const double progress = std::min(1.0, double(step - cfg.warmup_steps) / span);
    return cfg.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t counter, std::uint64_t stream) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ counter) ^ (stream * 0x2545f4914f6cdd1dull));
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t step, std::size_t batch_size,
                                       std::size_t dataset_size) {
    if (dataset_size == 0 || batch_size == 0) throw DataError("batch_indices: empty dataset or batch");
    std::vector<std::size_t> out;
    std::vector<std::size_t> order;
    std::int64_t cached_epoch = -1;
    for (std::size_t j = 0; j < batch_size; ++j) {
        const std::uint64_t global = std::uint64_t(step) * batch_size + j;
        const auto epoch = std::int64_t(global / dataset_size);
        if (epoch != cached_epoch) {
            order.resize(dataset_size);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::mt19937_64 rng(derive_seed(seed, std::uint64_t(epoch), kStreamShuffle));
            // Fisher-Yates with an explicit modulo draw; std::shuffle's
            // algorithm is unspecified across standard libraries.
            for (std::size_t i = dataset_size; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
            cached_epoch = epoch;
        }
        out.push_back(order[global % dataset_size]);
    }
    return out;
}

MaskSet inference_masks(const ScriptSet& scripts, int tokens_per_panel) {
    const int K = int(scripts.scripts.size());
    MaskSet m = MaskSet::none(K, tokens_per_panel);
    for (int k = 0; k < K; ++k) m.inter[k] = scripts.scripts[std::size_t(k)] == kEmptyCaption;
    return m;
}

}  // namespace manga
