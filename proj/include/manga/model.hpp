#pragma once

#include "manga/nn.hpp"
#include "manga/tensor.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace manga {

struct ModelConfig {
    int d_model = 64;
    int depth = 2;  ///< number of (intra, inter) block pairs
    int heads = 4;
    int patch = 2;
    int latent_channels = 4;
    int latent_height = 8;  ///< page height / 8
    int latent_width = 6;   ///< page width / 8
    int k_max = 4;
    int d_text = 32;
    int max_text_tokens = 300;
    int mlp_ratio = 4;
    int time_freq_dim = 64;
    int num_timesteps = 1000;
    double init_std = 0.02;
    /// Captions also condition the inter-panel blocks. Off by default.
    bool caption_in_inter_block = false;

    int grid_height() const { return latent_height / patch; }
    int grid_width() const { return latent_width / patch; }
    int tokens_per_panel() const { return grid_height() * grid_width(); }
    int patch_dim() const { return patch * patch * latent_channels; }

    /// Throws ConfigError on inconsistent values.
    void validate() const;
};

inline void ModelConfig::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("model config: " + what);
    };
    need(d_model > 0 && heads > 0 && d_model % heads == 0, "d_model must be a positive multiple of heads");
    need(d_model % 4 == 0, "d_model must be divisible by 4 (2D sin-cos embedding)");
    need(depth >= 1, "depth must be >= 1");
    need(patch >= 1 && latent_height % patch == 0 && latent_width % patch == 0,
         "latent dims must be divisible by the patch size");
    need(latent_channels >= 1 && k_max >= 1 && d_text >= 1 && max_text_tokens >= 1, "sizes must be positive");
    need(mlp_ratio >= 1 && time_freq_dim >= 2 && num_timesteps >= 1, "mlp_ratio/time_freq_dim/num_timesteps");
}

/// Token state K x n x d in one of two layouts. PanelMajor is z_e (row k*n+s),
/// PositionMajor is z_a (row s*K+k).
enum class TokenView { PanelMajor, PositionMajor };

template <class Scalar>
struct TokenGrid {
    int panels = 0;
    int tokens = 0;
    TokenView view = TokenView::PanelMajor;
    Mat<Scalar> data;

    int dim() const { return int(data.cols()); }
    Eigen::Index row_of(int k, int s) const {
        return view == TokenView::PanelMajor ? Eigen::Index(k) * tokens + s : Eigen::Index(s) * panels + k;
    }

    TokenGrid to_view(TokenView target) const {
        if (target == view) return *this;
        TokenGrid out{panels, tokens, target, Mat<Scalar>(data.rows(), data.cols())};
        for (int k = 0; k < panels; ++k)
            for (int s = 0; s < tokens; ++s) out.data.row(out.row_of(k, s)) = data.row(row_of(k, s));
        return out;
    }
};

/// Splits every panel into p x p patches; token s = py * (w/p) + px and its
/// features are ordered (channel, dy, dx). Throws if dims are indivisible.
template <class Scalar>
TokenGrid<Scalar> patchify(const LatentStack<Scalar>& x, int p) {
    if (p < 1 || x.height % p || x.width % p)
        throw ConfigError("patchify: latent " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                          " not divisible by patch " + std::to_string(p));
    const int gh = x.height / p, gw = x.width / p, n = gh * gw;
    TokenGrid<Scalar> t{x.panels, n, TokenView::PanelMajor, Mat<Scalar>(Eigen::Index(x.panels) * n, x.channels * p * p)};
    for (int k = 0; k < x.panels; ++k)
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx) {
                const Eigen::Index r = Eigen::Index(k) * n + gy * gw + gx;
                int f = 0;
                for (int c = 0; c < x.channels; ++c)
                    for (int dy = 0; dy < p; ++dy)
                        for (int dx = 0; dx < p; ++dx) t.data(r, f++) = x(k, c, gy * p + dy, gx * p + dx);
            }
    return t;
}

/// Exact inverse of patchify for a grid with features (channel, dy, dx).
template <class Scalar>
LatentStack<Scalar> unpatchify(const TokenGrid<Scalar>& tokens, int p, int channels, int height, int width) {
    const TokenGrid<Scalar> t = tokens.to_view(TokenView::PanelMajor);
    const int gh = height / p, gw = width / p;
    if (height % p || width % p || gh * gw != t.tokens || t.dim() != channels * p * p)
        throw ConfigError("unpatchify: token grid does not match the latent shape");
    auto x = LatentStack<Scalar>::zeros(t.panels, channels, height, width);
    for (int k = 0; k < t.panels; ++k)
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx) {
                const Eigen::Index r = Eigen::Index(k) * t.tokens + gy * gw + gx;
                int f = 0;
                for (int c = 0; c < channels; ++c)
                    for (int dy = 0; dy < p; ++dy)
                        for (int dx = 0; dx < p; ++dx) x(k, c, gy * p + dy, gx * p + dx) = t.data(r, f++);
            }
    return x;
}

/// Softmax attention over the valid keys only; a query with no valid key
/// returns its own row unchanged.
template <class Scalar>
Mat<Scalar> masked_attention(const Mat<Scalar>& queries, const Mat<Scalar>& keys, const Mat<Scalar>& values,
                             const MaskVec& key_valid, int heads = 1) {
    if (keys.rows() != values.rows() || keys.rows() != key_valid.size() || queries.cols() != keys.cols() ||
        queries.cols() % heads != 0)
        throw DataError("masked_attention: shape mismatch");
    std::vector<int> idx;
    for (Eigen::Index i = 0; i < key_valid.size(); ++i)
        if (key_valid[i]) idx.push_back(int(i));
    if (idx.empty()) {
        if (values.cols() != queries.cols()) throw DataError("masked_attention: pass-through needs equal widths");
        return queries;
    }
    nn::AttentionCache<Scalar> cache;
    return nn::attention_forward(queries, keys, values, idx, heads, cache);
}

/// shift/scale/gate for one sublayer.
template <class Scalar>
struct Modulation {
    RowVec<Scalar> shift, scale, gate;
};

template <class Scalar>
struct ModulationGrad {
    RowVec<Scalar> shift, scale, gate;
};

/// Chunks of the global adaLN-single vector, in units of d_model.
enum Sublayer : int { kSelfAttention = 0, kCrossAttention = 1, kFeedForward = 2 };
inline constexpr int kModulationChunks = 9;

struct ForwardOptions {
    bool skip_inter_blocks = false;
};

template <class Scalar>
class MangaDiffusionModel {
public:
    using MatS = Mat<Scalar>;
    using Store = nn::ParamStore<Scalar>;

    // ---- sublayer caches ----
    struct NormMod {
        nn::LayerNormCache<Scalar> ln;
        MatS xm;
    };
    struct SelfAttnCache {
        NormMod nm;
        MatS in;  // qkv input: modulated x plus any extra rows
        MatS qkv, o, y;
        std::vector<nn::AttentionCache<Scalar>> groups;
        std::vector<char> active;
        MaskVec key_valid;
        int group = 0;
    };
    struct CrossAttnCache {
        NormMod nm;
        MatS q, o, y;
        std::vector<MatS> kv;
        std::vector<nn::AttentionCache<Scalar>> groups;
    };
    struct MlpCache {
        NormMod nm;
        MatS pre, act, y;
    };
    struct IntraTape {
        SelfAttnCache sa;
        CrossAttnCache ca;
        MlpCache mlp;
    };
    struct InterTape {
        SelfAttnCache sa;
        std::optional<CrossAttnCache> ca;
        MlpCache mlp;
    };
    struct Tape {
        ForwardOptions options;
        MaskSet masks;
        std::vector<MatS> captions;  ///< valid caption tokens per panel
        RowVec<Scalar> t_freq;
        MatS t_h, t_emb, t_emb_act, t_mod;
        MatS patches;
        std::vector<IntraTape> intra;
        std::vector<InterTape> inter;
        nn::LayerNormCache<Scalar> final_ln;
        MatS final_xm;
    };

    struct IntraBlock {
        int table = -1;  ///< 9 x d: rows (shift, scale, gate) per sublayer
        nn::Linear<Scalar> qkv, proj, cq, ckv, cproj, fc1, fc2;
    };
    struct InterBlock {
        int table = -1;  ///< 6 x d, or 9 x d with caption_in_inter_block
        int panel_embed = -1;
        nn::Linear<Scalar> qkv, proj, fc1, fc2;
        nn::Linear<Scalar> cq, ckv, cproj;
    };

    explicit MangaDiffusionModel(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(cfg) {
        cfg_.validate();
        build();
        initialize(seed);
    }

    const ModelConfig& config() const { return cfg_; }
    Store& params() { return ps_; }
    const Store& params() const { return ps_; }

    /// Truncated-normal weights, zero biases, zero gates and a zero adaLN
    /// projection, so every block starts as the identity.
    void initialize(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (auto& p : ps_.all()) p.value.setZero();
        auto tn = [&](int idx) { nn::trunc_normal(ps_.value(idx), cfg_.init_std, rng); };
        auto tn_lin = [&](const nn::Linear<Scalar>& l) {
            if (l.weight >= 0) tn(l.weight);
        };
        tn_lin(patch_embed_);
        tn_lin(t_fc1_);
        tn_lin(t_fc2_);
        for (auto& b : intra_) {
            for (auto* l : {&b.qkv, &b.proj, &b.cq, &b.ckv, &b.cproj, &b.fc1, &b.fc2}) tn_lin(*l);
            init_table(b.table, rng);
        }
        for (auto& b : inter_) {
            for (auto* l : {&b.qkv, &b.proj, &b.fc1, &b.fc2, &b.cq, &b.ckv, &b.cproj}) tn_lin(*l);
            tn(b.panel_embed);
            init_table(b.table, rng);
        }
        tn(final_table_);
        tn_lin(final_linear_);
        ps_.zero_grad();
    }

    /// Global adaLN-single modulation vector (1 x 9d) for timestep t.
    RowVec<Scalar> timestep_modulation(int t) const {
        Tape tape;
        time_forward(t, tape);
        return tape.t_mod.row(0);
    }

    /// eps prediction for z_t. Fills `tape` when given, for backward().
    LatentStack<Scalar> forward(const LatentStack<Scalar>& z_t, int t, const CaptionEmbedding<Scalar>& captions,
                                const MaskSet& masks, Tape* tape = nullptr, ForwardOptions options = {}) const {
        check_inputs(z_t, t, captions, masks);
        Tape local;
        Tape& tp = tape ? *tape : local;
        tp.options = options;
        tp.masks = masks;
        tp.captions.clear();
        for (int k = 0; k < captions.panels(); ++k) tp.captions.push_back(captions.valid_tokens(k));

        time_forward(t, tp);
        const RowVec<Scalar> t_mod = tp.t_mod.row(0);

        tp.patches = patchify(z_t, cfg_.patch).data;
        MatS x = embed(tp.patches);

        const int K = cfg_.k_max, n = cfg_.tokens_per_panel();
        tp.intra.assign(std::size_t(cfg_.depth), {});
        tp.inter.assign(std::size_t(cfg_.depth), {});
        for (int i = 0; i < cfg_.depth; ++i) {
            x = intra_forward(intra_[i], x, t_mod, tp.captions, masks, tp.intra[i]);
            if (options.skip_inter_blocks) continue;
            x = reorder(x, K, n, true);
            x = inter_forward(inter_[i], x, t_mod, tp.captions, masks, tp.inter[i]);
            x = reorder(x, K, n, false);
        }

        // final modulated projection
        const RowVec<Scalar> t_emb = tp.t_emb.row(0);
        MatS xn = nn::layer_norm(x, tp.final_ln);
        RowVec<Scalar> shift = ps_.value(final_table_).row(0) + t_emb;
        RowVec<Scalar> scale = ps_.value(final_table_).row(1) + t_emb;
        tp.final_xm = modulate(xn, shift, scale);
        MatS out = final_linear_.forward(ps_, tp.final_xm);
        TokenGrid<Scalar> grid{K, n, TokenView::PanelMajor, std::move(out)};
        return unpatchify(grid, cfg_.patch, cfg_.latent_channels, cfg_.latent_height, cfg_.latent_width);
    }

    /// Accumulates d(loss)/d(params) given d(loss)/d(eps_hat).
    void backward(Tape& tp, const LatentStack<Scalar>& d_eps) {
        const int K = cfg_.k_max, n = cfg_.tokens_per_panel(), d = cfg_.d_model;
        const RowVec<Scalar> t_emb = tp.t_emb.row(0);
        const RowVec<Scalar> t_mod = tp.t_mod.row(0);
        RowVec<Scalar> d_t_emb = RowVec<Scalar>::Zero(d);
        RowVec<Scalar> d_t_mod = RowVec<Scalar>::Zero(kModulationChunks * d);

        MatS d_out = patchify(d_eps, cfg_.patch).data;
        MatS d_xm = final_linear_.backward(ps_, tp.final_xm, d_out);
        RowVec<Scalar> scale = ps_.value(final_table_).row(1) + t_emb;
        RowVec<Scalar> d_shift = d_xm.colwise().sum();
        RowVec<Scalar> d_scale = (d_xm.array() * tp.final_ln.normalized.array()).colwise().sum();
        ps_.grad(final_table_).row(0) += d_shift;
        ps_.grad(final_table_).row(1) += d_scale;
        d_t_emb += d_shift + d_scale;
        MatS d_xn = d_xm.array().rowwise() * (scale.array() + Scalar(1));
        MatS dx = nn::layer_norm_backward(tp.final_ln, d_xn);

        for (int i = cfg_.depth - 1; i >= 0; --i) {
            if (!tp.options.skip_inter_blocks) {
                dx = reorder(dx, K, n, true);
                dx = inter_backward(inter_[i], tp.inter[i], t_mod, tp.captions, tp.masks, dx, d_t_mod);
                dx = reorder(dx, K, n, false);
            }
            dx = intra_backward(intra_[i], tp.intra[i], t_mod, tp.captions, dx, d_t_mod);
        }
        patch_embed_.backward(ps_, tp.patches, dx);

        // t_mod = adaln(silu(t_emb))
        MatS d_act = adaln_.backward(ps_, tp.t_emb_act, d_t_mod);
        d_t_emb += nn::silu_backward(tp.t_emb, d_act).row(0);
        // t_emb = fc2(silu(fc1(t_freq)))
        MatS d_h_act = t_fc2_.backward(ps_, nn::silu(tp.t_h), d_t_emb);
        MatS d_h = nn::silu_backward(tp.t_h, d_h_act);
        t_fc1_.backward(ps_, tp.t_freq, d_h);
    }

    // ---- block-level access ----

    /// Applies intra block i to a PanelMajor grid with an explicit global
    /// modulation vector (1 x 9d).
    TokenGrid<Scalar> intra_panel_block(int i, const TokenGrid<Scalar>& z_e, const CaptionEmbedding<Scalar>& captions,
                                        const RowVec<Scalar>& t_mod, const MaskSet& masks) const {
        if (z_e.view != TokenView::PanelMajor) throw DataError("intra_panel_block expects the PanelMajor view");
        if (captions.panels() != z_e.panels) throw DataError("intra_panel_block: caption count does not match panels");
        check_masks(masks, z_e.panels, z_e.tokens);
        std::vector<MatS> caps;
        for (int k = 0; k < captions.panels(); ++k) caps.push_back(captions.valid_tokens(k));
        IntraTape tape;
        return {z_e.panels, z_e.tokens, TokenView::PanelMajor,
                intra_forward(intra_.at(std::size_t(i)), z_e.data, t_mod, caps, masks, tape)};
    }

    TokenGrid<Scalar> inter_panel_block(int i, const TokenGrid<Scalar>& z_a, const RowVec<Scalar>& t_mod,
                                        const MaskSet& masks,
                                        const CaptionEmbedding<Scalar>* captions = nullptr) const {
        if (z_a.view != TokenView::PositionMajor) throw DataError("inter_panel_block expects the PositionMajor view");
        check_masks(masks, z_a.panels, z_a.tokens);
        std::vector<MatS> caps;
        if (cfg_.caption_in_inter_block) {
            if (!captions) throw DataError("inter_panel_block: captions required by caption_in_inter_block");
            for (int k = 0; k < captions->panels(); ++k) caps.push_back(captions->valid_tokens(k));
        }
        InterTape tape;
        return {z_a.panels, z_a.tokens, TokenView::PositionMajor,
                inter_forward(inter_.at(std::size_t(i)), z_a.data, t_mod, caps, masks, tape)};
    }

    const IntraBlock& intra_block(int i) const { return intra_.at(std::size_t(i)); }
    const InterBlock& inter_block(int i) const { return inter_.at(std::size_t(i)); }
    const nn::Linear<Scalar>& patch_embedding() const { return patch_embed_; }
    const nn::Linear<Scalar>& final_linear() const { return final_linear_; }
    int final_table() const { return final_table_; }
    const MatS& positional_embedding() const { return pos_; }

    /// Row of a block table holding (shift, scale, gate)[which] of a sublayer.
    static int table_row(bool inter, bool inter_has_caption, Sublayer s, int which) {
        int slot = int(s);
        if (inter && !inter_has_caption && s == kFeedForward) slot = 1;
        return slot * 3 + which;
    }

private:
    void build() {
        const int d = cfg_.d_model, hid = d * cfg_.mlp_ratio, dT = cfg_.d_text;
        patch_embed_ = nn::Linear<Scalar>::make(ps_, "patch_embed", cfg_.patch_dim(), d);
        t_fc1_ = nn::Linear<Scalar>::make(ps_, "t_embed.fc1", cfg_.time_freq_dim, d);
        t_fc2_ = nn::Linear<Scalar>::make(ps_, "t_embed.fc2", d, d);
        adaln_ = nn::Linear<Scalar>::make(ps_, "adaln_single", d, kModulationChunks * d);
        for (int i = 0; i < cfg_.depth; ++i) {
            const std::string pre = "blocks." + std::to_string(i);
            IntraBlock a;
            a.table = ps_.add(pre + ".intra.table", 9, d);
            a.qkv = nn::Linear<Scalar>::make(ps_, pre + ".intra.attn.qkv", d, 3 * d);
            a.proj = nn::Linear<Scalar>::make(ps_, pre + ".intra.attn.proj", d, d);
            a.cq = nn::Linear<Scalar>::make(ps_, pre + ".intra.cross.q", d, d);
            a.ckv = nn::Linear<Scalar>::make(ps_, pre + ".intra.cross.kv", dT, 2 * d);
            a.cproj = nn::Linear<Scalar>::make(ps_, pre + ".intra.cross.proj", d, d);
            a.fc1 = nn::Linear<Scalar>::make(ps_, pre + ".intra.mlp.fc1", d, hid);
            a.fc2 = nn::Linear<Scalar>::make(ps_, pre + ".intra.mlp.fc2", hid, d);
            intra_.push_back(a);

            InterBlock b;
            b.table = ps_.add(pre + ".inter.table", cfg_.caption_in_inter_block ? 9 : 6, d);
            b.panel_embed = ps_.add(pre + ".inter.panel_embed", cfg_.k_max, d);
            b.qkv = nn::Linear<Scalar>::make(ps_, pre + ".inter.attn.qkv", d, 3 * d);
            b.proj = nn::Linear<Scalar>::make(ps_, pre + ".inter.attn.proj", d, d);
            if (cfg_.caption_in_inter_block) {
                b.cq = nn::Linear<Scalar>::make(ps_, pre + ".inter.cross.q", d, d);
                b.ckv = nn::Linear<Scalar>::make(ps_, pre + ".inter.cross.kv", dT, 2 * d);
                b.cproj = nn::Linear<Scalar>::make(ps_, pre + ".inter.cross.proj", d, d);
            }
            b.fc1 = nn::Linear<Scalar>::make(ps_, pre + ".inter.mlp.fc1", d, hid);
            b.fc2 = nn::Linear<Scalar>::make(ps_, pre + ".inter.mlp.fc2", hid, d);
            inter_.push_back(b);
        }
        final_table_ = ps_.add("final.table", 2, d);
        final_linear_ = nn::Linear<Scalar>::make(ps_, "final.linear", d, cfg_.patch_dim());

        // fixed 2D positional table, repeated per panel
        const MatS grid = nn::sincos_2d<Scalar>(cfg_.grid_height(), cfg_.grid_width(), d);
        pos_.resize(Eigen::Index(cfg_.k_max) * grid.rows(), d);
        for (int k = 0; k < cfg_.k_max; ++k) pos_.middleRows(k * grid.rows(), grid.rows()) = grid;
    }

    void init_table(int table, std::mt19937_64& rng) {
        MatS& t = ps_.value(table);
        nn::trunc_normal(t, cfg_.init_std, rng);
        for (Eigen::Index r = 2; r < t.rows(); r += 3) t.row(r).setZero();  // gates
    }

    void check_masks(const MaskSet& masks, int K, int n) const {
        if (masks.intra.rows() != K || masks.intra.cols() != n || masks.inter.size() != K)
            throw DataError("mask shapes do not match K=" + std::to_string(K) + ", n=" + std::to_string(n));
        for (int k = 0; k < K; ++k)
            if (masks.inter[k] && masks.intra.row(k).any())
                throw DataError("padded panel " + std::to_string(k) + " carries an intra-panel mask");
        if (masks.inter.all()) throw DataError("every panel is marked as padding");
    }

    void check_inputs(const LatentStack<Scalar>& z, int t, const CaptionEmbedding<Scalar>& captions,
                      const MaskSet& masks) const {
        if (z.panels != cfg_.k_max || z.channels != cfg_.latent_channels || z.height != cfg_.latent_height ||
            z.width != cfg_.latent_width)
            throw DataError("latent stack shape does not match the model config");
        if (t < 0 || t >= cfg_.num_timesteps)
            throw DataError("timestep " + std::to_string(t) + " out of range [0, " + std::to_string(cfg_.num_timesteps) + ")");
        if (captions.panels() != cfg_.k_max || captions.dim != cfg_.d_text)
            throw DataError("caption embedding does not match K_max/d_text");
        check_masks(masks, cfg_.k_max, cfg_.tokens_per_panel());
    }

    void time_forward(int t, Tape& tp) const {
        tp.t_freq = nn::timestep_features<Scalar>(double(t), cfg_.time_freq_dim);
        tp.t_h = t_fc1_.forward(ps_, tp.t_freq);
        tp.t_emb = t_fc2_.forward(ps_, nn::silu(tp.t_h));
        tp.t_emb_act = nn::silu(tp.t_emb);
        tp.t_mod = adaln_.forward(ps_, tp.t_emb_act);
    }

    MatS embed(const MatS& patches) const { return patch_embed_.forward(ps_, patches) + pos_; }

    static MatS reorder(const MatS& x, int K, int n, bool to_position_major) {
        MatS out(x.rows(), x.cols());
        for (int k = 0; k < K; ++k)
            for (int s = 0; s < n; ++s) {
                const Eigen::Index pm = Eigen::Index(k) * n + s, am = Eigen::Index(s) * K + k;
                if (to_position_major) out.row(am) = x.row(pm);
                else out.row(pm) = x.row(am);
            }
        return out;
    }

    static MatS modulate(const MatS& xn, const RowVec<Scalar>& shift, const RowVec<Scalar>& scale) {
        MatS xm = xn.array().rowwise() * (scale.array() + Scalar(1));
        xm.rowwise() += shift;
        return xm;
    }

    Modulation<Scalar> modulation(int table, int row0, const RowVec<Scalar>& t_mod, Sublayer s) const {
        const int d = cfg_.d_model;
        const MatS& tab = ps_.value(table);
        return {tab.row(row0) + t_mod.segment((3 * s + 0) * d, d), tab.row(row0 + 1) + t_mod.segment((3 * s + 1) * d, d),
                tab.row(row0 + 2) + t_mod.segment((3 * s + 2) * d, d)};
    }

    void modulation_backward(int table, int row0, Sublayer s, const ModulationGrad<Scalar>& g,
                             RowVec<Scalar>& d_t_mod) {
        const int d = cfg_.d_model;
        MatS& tab = ps_.grad(table);
        tab.row(row0) += g.shift;
        tab.row(row0 + 1) += g.scale;
        tab.row(row0 + 2) += g.gate;
        d_t_mod.segment((3 * s + 0) * d, d) += g.shift;
        d_t_mod.segment((3 * s + 1) * d, d) += g.scale;
        d_t_mod.segment((3 * s + 2) * d, d) += g.gate;
    }

    MatS norm_mod(const MatS& x, const Modulation<Scalar>& m, NormMod& c) const {
        MatS xn = nn::layer_norm(x, c.ln);
        c.xm = modulate(xn, m.shift, m.scale);
        return c.xm;
    }

    MatS norm_mod_backward(const NormMod& c, const Modulation<Scalar>& m, const MatS& d_xm,
                           ModulationGrad<Scalar>& g) const {
        g.shift = d_xm.colwise().sum();
        g.scale = (d_xm.array() * c.ln.normalized.array()).colwise().sum();
        MatS d_xn = d_xm.array().rowwise() * (m.scale.array() + Scalar(1));
        return nn::layer_norm_backward(c.ln, d_xn);
    }

    // Self-attention within consecutive row groups of size `group`. Rows with
    // key_valid false are excluded as keys and keep their input (no update).
    MatS self_attn_forward(const nn::Linear<Scalar>& qkv, const nn::Linear<Scalar>& proj, const MatS& x,
                           const Modulation<Scalar>& m, int group, const MaskVec& key_valid, const MatS* extra,
                           SelfAttnCache& c) const {
        const int d = cfg_.d_model;
        MatS xm = norm_mod(x, m, c.nm);
        if (extra) xm += *extra;
        c.qkv = qkv.forward(ps_, xm);
        c.in = std::move(xm);
        c.o = MatS::Zero(x.rows(), d);
        c.group = group;
        c.key_valid = key_valid;
        const int groups = int(x.rows()) / group;
        c.groups.assign(std::size_t(groups), {});
        c.active.assign(std::size_t(groups), 0);
        for (int g = 0; g < groups; ++g) {
            const Eigen::Index r0 = Eigen::Index(g) * group;
            std::vector<int> keys;
            for (int i = 0; i < group; ++i)
                if (key_valid[r0 + i]) keys.push_back(i);
            if (keys.empty()) continue;
            c.active[std::size_t(g)] = 1;
            MatS q = c.qkv.block(r0, 0, group, d), k = c.qkv.block(r0, d, group, d), v = c.qkv.block(r0, 2 * d, group, d);
            c.o.middleRows(r0, group) = nn::attention_forward(q, k, v, keys, cfg_.heads, c.groups[std::size_t(g)]);
        }
        c.y = proj.forward(ps_, c.o);
        for (Eigen::Index r = 0; r < x.rows(); ++r)
            if (!key_valid[r]) c.y.row(r).setZero();
        MatS out = x;
        out.array() += c.y.array().rowwise() * m.gate.array();
        return out;
    }

    MatS self_attn_backward(const nn::Linear<Scalar>& qkv, const nn::Linear<Scalar>& proj, const SelfAttnCache& c,
                            const Modulation<Scalar>& m, const MatS& dout, ModulationGrad<Scalar>& g,
                            MatS* d_extra) {
        const int d = cfg_.d_model, group = c.group;
        g.gate = (dout.array() * c.y.array()).colwise().sum();
        MatS dy = dout.array().rowwise() * m.gate.array();
        for (Eigen::Index r = 0; r < dy.rows(); ++r)
            if (!c.key_valid[r]) dy.row(r).setZero();
        MatS d_o = proj.backward(ps_, c.o, dy);
        MatS d_qkv = MatS::Zero(c.qkv.rows(), 3 * d);
        for (std::size_t gi = 0; gi < c.groups.size(); ++gi) {
            if (!c.active[gi]) continue;
            const Eigen::Index r0 = Eigen::Index(gi) * group;
            MatS q = c.qkv.block(r0, 0, group, d), k = c.qkv.block(r0, d, group, d), v = c.qkv.block(r0, 2 * d, group, d);
            MatS dq = MatS::Zero(group, d), dk = MatS::Zero(group, d), dv = MatS::Zero(group, d);
            nn::attention_backward(q, k, v, c.groups[gi], cfg_.heads, MatS(d_o.middleRows(r0, group)), dq, dk, dv);
            d_qkv.block(r0, 0, group, d) = dq;
            d_qkv.block(r0, d, group, d) = dk;
            d_qkv.block(r0, 2 * d, group, d) = dv;
        }
        MatS d_xm = qkv.backward(ps_, c.in, d_qkv);
        if (d_extra) *d_extra = d_xm;
        MatS dx = dout;
        dx += norm_mod_backward(c.nm, m, d_xm, g);
        return dx;
    }

    // Cross-attention of panel k's tokens (PanelMajor rows) to caption k.
    MatS cross_attn_forward(const nn::Linear<Scalar>& cq, const nn::Linear<Scalar>& ckv, const nn::Linear<Scalar>& cproj,
                            const MatS& x, const Modulation<Scalar>& m, const std::vector<MatS>& captions,
                            CrossAttnCache& c) const {
        const int d = cfg_.d_model, n = cfg_.tokens_per_panel(), K = cfg_.k_max;
        MatS xm = norm_mod(x, m, c.nm);
        c.q = cq.forward(ps_, xm);
        c.o = MatS::Zero(x.rows(), d);
        c.kv.assign(std::size_t(K), MatS());
        c.groups.assign(std::size_t(K), {});
        for (int k = 0; k < K; ++k) {
            if (captions[std::size_t(k)].rows() == 0) continue;
            c.kv[std::size_t(k)] = ckv.forward(ps_, captions[std::size_t(k)]);
            const MatS& kv = c.kv[std::size_t(k)];
            std::vector<int> keys(std::size_t(kv.rows()));
            for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = int(i);
            c.o.middleRows(Eigen::Index(k) * n, n) =
                nn::attention_forward(MatS(c.q.middleRows(Eigen::Index(k) * n, n)), MatS(kv.leftCols(d)),
                                      MatS(kv.rightCols(d)), keys, cfg_.heads, c.groups[std::size_t(k)]);
        }
        c.y = cproj.forward(ps_, c.o);
        for (int k = 0; k < K; ++k)
            if (captions[std::size_t(k)].rows() == 0) c.y.middleRows(Eigen::Index(k) * n, n).setZero();
        MatS out = x;
        out.array() += c.y.array().rowwise() * m.gate.array();
        return out;
    }

    MatS cross_attn_backward(const nn::Linear<Scalar>& cq, const nn::Linear<Scalar>& ckv,
                             const nn::Linear<Scalar>& cproj, const CrossAttnCache& c, const Modulation<Scalar>& m,
                             const std::vector<MatS>& captions, const MatS& dout, ModulationGrad<Scalar>& g) {
        const int d = cfg_.d_model, n = cfg_.tokens_per_panel(), K = cfg_.k_max;
        g.gate = (dout.array() * c.y.array()).colwise().sum();
        MatS dy = dout.array().rowwise() * m.gate.array();
        for (int k = 0; k < K; ++k)
            if (captions[std::size_t(k)].rows() == 0) dy.middleRows(Eigen::Index(k) * n, n).setZero();
        MatS d_o = cproj.backward(ps_, c.o, dy);
        MatS d_q = MatS::Zero(c.q.rows(), d);
        for (int k = 0; k < K; ++k) {
            if (captions[std::size_t(k)].rows() == 0) continue;
            const MatS& kv = c.kv[std::size_t(k)];
            MatS q = c.q.middleRows(Eigen::Index(k) * n, n);
            MatS kk = kv.leftCols(d), vv = kv.rightCols(d);
            MatS dq = MatS::Zero(n, d), dk = MatS::Zero(kv.rows(), d), dv = MatS::Zero(kv.rows(), d);
            nn::attention_backward(q, kk, vv, c.groups[std::size_t(k)], cfg_.heads,
                                   MatS(d_o.middleRows(Eigen::Index(k) * n, n)), dq, dk, dv);
            d_q.middleRows(Eigen::Index(k) * n, n) = dq;
            MatS d_kv(kv.rows(), 2 * d);
            d_kv << dk, dv;
            ckv.backward(ps_, captions[std::size_t(k)], d_kv);
        }
        MatS d_xm = cq.backward(ps_, c.nm.xm, d_q);
        MatS dx = dout;
        dx += norm_mod_backward(c.nm, m, d_xm, g);
        return dx;
    }

    MatS mlp_forward(const nn::Linear<Scalar>& fc1, const nn::Linear<Scalar>& fc2, const MatS& x,
                     const Modulation<Scalar>& m, MlpCache& c) const {
        MatS xm = norm_mod(x, m, c.nm);
        c.pre = fc1.forward(ps_, xm);
        c.act = nn::gelu(c.pre);
        c.y = fc2.forward(ps_, c.act);
        MatS out = x;
        out.array() += c.y.array().rowwise() * m.gate.array();
        return out;
    }

    MatS mlp_backward(const nn::Linear<Scalar>& fc1, const nn::Linear<Scalar>& fc2, const MlpCache& c,
                      const Modulation<Scalar>& m, const MatS& dout, ModulationGrad<Scalar>& g) {
        g.gate = (dout.array() * c.y.array()).colwise().sum();
        MatS dy = dout.array().rowwise() * m.gate.array();
        MatS d_act = fc2.backward(ps_, c.act, dy);
        MatS d_pre = nn::gelu_backward(c.pre, d_act);
        MatS d_xm = fc1.backward(ps_, c.nm.xm, d_pre);
        MatS dx = dout;
        dx += norm_mod_backward(c.nm, m, d_xm, g);
        return dx;
    }

    MaskVec intra_key_valid(const MaskSet& masks) const {
        const int K = cfg_.k_max, n = cfg_.tokens_per_panel();
        MaskVec v(Eigen::Index(K) * n);
        for (int k = 0; k < K; ++k)
            for (int s = 0; s < n; ++s) v[Eigen::Index(k) * n + s] = !masks.intra(k, s);
        return v;
    }

    MaskVec inter_key_valid(const MaskSet& masks) const {
        const int K = cfg_.k_max, n = cfg_.tokens_per_panel();
        MaskVec v(Eigen::Index(K) * n);
        for (int s = 0; s < n; ++s)
            for (int k = 0; k < K; ++k) v[Eigen::Index(s) * K + k] = !masks.inter[k];
        return v;
    }

    MatS panel_embedding_rows(const InterBlock& b) const {
        const int K = cfg_.k_max, n = cfg_.tokens_per_panel();
        MatS e(Eigen::Index(K) * n, cfg_.d_model);
        for (int s = 0; s < n; ++s) e.middleRows(Eigen::Index(s) * K, K) = ps_.value(b.panel_embed);
        return e;
    }

    MatS intra_forward(const IntraBlock& b, const MatS& x, const RowVec<Scalar>& t_mod, const std::vector<MatS>& caps,
                       const MaskSet& masks, IntraTape& tp) const {
        const auto m_sa = modulation(b.table, table_row(false, false, kSelfAttention, 0), t_mod, kSelfAttention);
        const auto m_ca = modulation(b.table, table_row(false, false, kCrossAttention, 0), t_mod, kCrossAttention);
        const auto m_ff = modulation(b.table, table_row(false, false, kFeedForward, 0), t_mod, kFeedForward);
        MatS h = self_attn_forward(b.qkv, b.proj, x, m_sa, cfg_.tokens_per_panel(), intra_key_valid(masks), nullptr, tp.sa);
        h = cross_attn_forward(b.cq, b.ckv, b.cproj, h, m_ca, caps, tp.ca);
        return mlp_forward(b.fc1, b.fc2, h, m_ff, tp.mlp);
    }

    MatS intra_backward(const IntraBlock& b, const IntraTape& tp, const RowVec<Scalar>& t_mod,
                        const std::vector<MatS>& caps, const MatS& dout, RowVec<Scalar>& d_t_mod) {
        const auto m_sa = modulation(b.table, table_row(false, false, kSelfAttention, 0), t_mod, kSelfAttention);
        const auto m_ca = modulation(b.table, table_row(false, false, kCrossAttention, 0), t_mod, kCrossAttention);
        const auto m_ff = modulation(b.table, table_row(false, false, kFeedForward, 0), t_mod, kFeedForward);
        ModulationGrad<Scalar> g;
        MatS dx = mlp_backward(b.fc1, b.fc2, tp.mlp, m_ff, dout, g);
        modulation_backward(b.table, table_row(false, false, kFeedForward, 0), kFeedForward, g, d_t_mod);
        dx = cross_attn_backward(b.cq, b.ckv, b.cproj, tp.ca, m_ca, caps, dx, g);
        modulation_backward(b.table, table_row(false, false, kCrossAttention, 0), kCrossAttention, g, d_t_mod);
        dx = self_attn_backward(b.qkv, b.proj, tp.sa, m_sa, dx, g, nullptr);
        modulation_backward(b.table, table_row(false, false, kSelfAttention, 0), kSelfAttention, g, d_t_mod);
        return dx;
    }

    MatS inter_forward(const InterBlock& b, const MatS& x, const RowVec<Scalar>& t_mod, const std::vector<MatS>& caps,
                       const MaskSet& masks, InterTape& tp) const {
        const bool cap = cfg_.caption_in_inter_block;
        const int K = cfg_.k_max, n = cfg_.tokens_per_panel();
        const auto m_sa = modulation(b.table, table_row(true, cap, kSelfAttention, 0), t_mod, kSelfAttention);
        const auto m_ff = modulation(b.table, table_row(true, cap, kFeedForward, 0), t_mod, kFeedForward);
        const MatS pe = panel_embedding_rows(b);
        MatS h = self_attn_forward(b.qkv, b.proj, x, m_sa, K, inter_key_valid(masks), &pe, tp.sa);
        if (cap) {
            const auto m_ca = modulation(b.table, table_row(true, cap, kCrossAttention, 0), t_mod, kCrossAttention);
            tp.ca.emplace();
            h = reorder(cross_attn_forward(b.cq, b.ckv, b.cproj, reorder(h, K, n, false), m_ca, caps, *tp.ca), K, n, true);
        }
        return mlp_forward(b.fc1, b.fc2, h, m_ff, tp.mlp);
    }

    MatS inter_backward(const InterBlock& b, const InterTape& tp, const RowVec<Scalar>& t_mod,
                        const std::vector<MatS>& caps, const MaskSet&, const MatS& dout, RowVec<Scalar>& d_t_mod) {
        const bool cap = cfg_.caption_in_inter_block;
        const int K = cfg_.k_max, n = cfg_.tokens_per_panel();
        const auto m_sa = modulation(b.table, table_row(true, cap, kSelfAttention, 0), t_mod, kSelfAttention);
        const auto m_ff = modulation(b.table, table_row(true, cap, kFeedForward, 0), t_mod, kFeedForward);
        ModulationGrad<Scalar> g;
        MatS dx = mlp_backward(b.fc1, b.fc2, tp.mlp, m_ff, dout, g);
        modulation_backward(b.table, table_row(true, cap, kFeedForward, 0), kFeedForward, g, d_t_mod);
        if (cap) {
            const auto m_ca = modulation(b.table, table_row(true, cap, kCrossAttention, 0), t_mod, kCrossAttention);
            dx = reorder(cross_attn_backward(b.cq, b.ckv, b.cproj, *tp.ca, m_ca, caps, reorder(dx, K, n, false), g), K, n,
                         true);
            modulation_backward(b.table, table_row(true, cap, kCrossAttention, 0), kCrossAttention, g, d_t_mod);
        }
        MatS d_pe;
        dx = self_attn_backward(b.qkv, b.proj, tp.sa, m_sa, dx, g, &d_pe);
        modulation_backward(b.table, table_row(true, cap, kSelfAttention, 0), kSelfAttention, g, d_t_mod);
        for (int s = 0; s < n; ++s) ps_.grad(b.panel_embed) += d_pe.middleRows(Eigen::Index(s) * K, K);
        return dx;
    }

    ModelConfig cfg_;
    Store ps_;
    nn::Linear<Scalar> patch_embed_, t_fc1_, t_fc2_, adaln_, final_linear_;
    std::vector<IntraBlock> intra_;
    std::vector<InterBlock> inter_;
    int final_table_ = -1;
    MatS pos_;
};

}  // namespace manga
