#include "manga/config.hpp"

#include "manga/error.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace manga {

using nlohmann::json;

namespace {

// Reads the fields of one JSON object, remembering which keys were seen so
// leftovers can be reported.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
    }

    template <class T>
    bool get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return false;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: '" + path_ + key + "' has the wrong type");
        }
        return true;
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + path_ + it.key() + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

void PipelineConfig::validate(int codec_downsample) const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("config: " + what);
    };
    need(page_height > 0 && page_width > 0, "page size must be positive");
    need(k_max >= 1, "k_max must be >= 1");
    need(model.k_max == k_max, "model.k_max=" + std::to_string(model.k_max) + " disagrees with k_max=" +
                                   std::to_string(k_max));
    need(page_height % codec_downsample == 0 && page_width % codec_downsample == 0,
         "page size must be divisible by the codec downsampling factor " + std::to_string(codec_downsample));
    need(model.latent_height == page_height / codec_downsample && model.latent_width == page_width / codec_downsample,
         "model latent size disagrees with the page size");
    need(model.num_timesteps == schedule.steps, "model.num_timesteps disagrees with schedule.steps");
    need(data.token_stride == codec_downsample * model.patch,
         "data.token_stride must equal the model token footprint (" + std::to_string(codec_downsample * model.patch) +
             " px)");
    need(data.coverage_threshold >= 0.0 && data.coverage_threshold <= 1.0, "coverage_threshold must lie in [0, 1]");
    need(data.caption_attempts >= 1, "caption_attempts must be >= 1");
    need(train.batch_size >= 1 && train.steps >= 0 && train.log_every >= 1 && train.checkpoint_every >= 0,
         "train section out of range");
    need(optimizer.lr >= 0.0 && optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 &&
             optimizer.beta2 < 1.0 && optimizer.eps > 0.0 && optimizer.weight_decay >= 0.0,
         "optimizer section out of range");
    need(optimizer.lr_schedule == "constant" || optimizer.lr_schedule == "warmup_cosine",
         "optimizer.lr_schedule must be \"constant\" or \"warmup_cosine\"");
    need(optimizer.warmup_steps >= 0, "optimizer.warmup_steps must be >= 0");
    model.validate();
    schedule.make();
}

PipelineConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    PipelineConfig c;
    Section top(root, "");
    top.get("page_height", c.page_height);
    top.get("page_width", c.page_width);
    top.get("k_max", c.k_max);
    top.get("seed", c.seed);

    if (const json* s = top.child("schedule")) {
        Section sec(*s, "schedule.");
        sec.get("steps", c.schedule.steps);
        sec.get("beta_start", c.schedule.beta_start);
        sec.get("beta_end", c.schedule.beta_end);
        sec.get("kind", c.schedule.kind);
        sec.finish();
    }

    c.model.k_max = c.k_max;
    c.model.latent_height = c.page_height / 8;
    c.model.latent_width = c.page_width / 8;
    c.model.num_timesteps = c.schedule.steps;
    if (const json* s = top.child("model")) {
        Section sec(*s, "model.");
        auto& m = c.model;
        sec.get("d_model", m.d_model);
        sec.get("depth", m.depth);
        sec.get("heads", m.heads);
        sec.get("patch", m.patch);
        sec.get("latent_channels", m.latent_channels);
        sec.get("latent_height", m.latent_height);
        sec.get("latent_width", m.latent_width);
        sec.get("k_max", m.k_max);
        sec.get("d_text", m.d_text);
        sec.get("max_text_tokens", m.max_text_tokens);
        sec.get("mlp_ratio", m.mlp_ratio);
        sec.get("time_freq_dim", m.time_freq_dim);
        sec.get("num_timesteps", m.num_timesteps);
        sec.get("init_std", m.init_std);
        sec.get("caption_in_inter_block", m.caption_in_inter_block);
        sec.finish();
    }
    if (const json* s = top.child("optimizer")) {
        Section sec(*s, "optimizer.");
        sec.get("lr", c.optimizer.lr);
        sec.get("beta1", c.optimizer.beta1);
        sec.get("beta2", c.optimizer.beta2);
        sec.get("eps", c.optimizer.eps);
        sec.get("weight_decay", c.optimizer.weight_decay);
        sec.get("lr_schedule", c.optimizer.lr_schedule);
        sec.get("warmup_steps", c.optimizer.warmup_steps);
        sec.finish();
    }
    if (const json* s = top.child("train")) {
        Section sec(*s, "train.");
        sec.get("batch_size", c.train.batch_size);
        sec.get("steps", c.train.steps);
        sec.get("log_every", c.train.log_every);
        sec.get("checkpoint_every", c.train.checkpoint_every);
        sec.finish();
    }
    if (const json* s = top.child("data")) {
        Section sec(*s, "data.");
        sec.get("token_stride", c.data.token_stride);
        sec.get("coverage_threshold", c.data.coverage_threshold);
        sec.get("caption_attempts", c.data.caption_attempts);
        sec.finish();
    }
    top.finish();
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const PipelineConfig& c, int indent) {
    const auto& m = c.model;
    json j = {
        {"page_height", c.page_height},
        {"page_width", c.page_width},
        {"k_max", c.k_max},
        {"seed", c.seed},
        {"model",
         {{"d_model", m.d_model},
          {"depth", m.depth},
          {"heads", m.heads},
          {"patch", m.patch},
          {"latent_channels", m.latent_channels},
          {"latent_height", m.latent_height},
          {"latent_width", m.latent_width},
          {"k_max", m.k_max},
          {"d_text", m.d_text},
          {"max_text_tokens", m.max_text_tokens},
          {"mlp_ratio", m.mlp_ratio},
          {"time_freq_dim", m.time_freq_dim},
          {"num_timesteps", m.num_timesteps},
          {"init_std", m.init_std},
          {"caption_in_inter_block", m.caption_in_inter_block}}},
        {"schedule",
         {{"steps", c.schedule.steps},
          {"beta_start", c.schedule.beta_start},
          {"beta_end", c.schedule.beta_end},
          {"kind", c.schedule.kind}}},
        {"optimizer",
         {{"lr", c.optimizer.lr},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"eps", c.optimizer.eps},
          {"weight_decay", c.optimizer.weight_decay},
          {"lr_schedule", c.optimizer.lr_schedule},
          {"warmup_steps", c.optimizer.warmup_steps}}},
        {"train",
         {{"batch_size", c.train.batch_size},
          {"steps", c.train.steps},
          {"log_every", c.train.log_every},
          {"checkpoint_every", c.train.checkpoint_every}}},
        {"data",
         {{"token_stride", c.data.token_stride},
          {"coverage_threshold", c.data.coverage_threshold},
          {"caption_attempts", c.data.caption_attempts}}},
    };
    return j.dump(indent);
}

}  // namespace manga
