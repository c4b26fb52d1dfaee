#include "cli.hpp"

#include "manga/pipeline.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace manga::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open " + file);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t parse_seed_env(const char* v) {
    std::uint64_t s = 0;
    const std::string str(v);
    auto [p, ec] = std::from_chars(str.data(), str.data() + str.size(), s);
    if (ec != std::errc() || p != str.data() + str.size()) throw ConfigError("MANGA_SEED is not an unsigned integer: '" + str + "'");
    return s;
}

// Config file (or defaults), then flags. Seed: --seed, else MANGA_SEED, else the file.
PipelineConfig resolve_config(const Invocation& inv) {
    PipelineConfig cfg = inv.config_file.empty() ? PipelineConfig{} : load_config(inv.config_file);
    if (inv.seed) cfg.seed = *inv.seed;
    else if (const char* env = std::getenv("MANGA_SEED")) cfg.seed = parse_seed_env(env);
    if (inv.k_max) cfg.k_max = cfg.model.k_max = *inv.k_max;
    if (inv.steps) cfg.train.steps = *inv.steps;
    if (inv.batch_size) cfg.train.batch_size = *inv.batch_size;
    if (inv.lr) cfg.optimizer.lr = *inv.lr;
    if (inv.token_stride) cfg.data.token_stride = *inv.token_stride;
    if (inv.coverage_threshold) cfg.data.coverage_threshold = *inv.coverage_threshold;
    return cfg;
}

json cut_tree_json(const CutNode& n) {
    json j = {{"axis", to_string(n.axis)}, {"indices", n.indices}};
    if (n.axis != CutAxis::None) j["position"] = n.position;
    if (!n.children.empty()) {
        j["children"] = json::array();
        for (const auto& c : n.children) j["children"].push_back(cut_tree_json(c));
    }
    return j;
}

void cmd_make_synthetic(const Invocation& inv, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(inv);
    SyntheticOptions o;
    o.width = cfg.page_width;
    o.height = cfg.page_height;
    o.max_panels = std::min(inv.max_panels, cfg.k_max);
    const auto pages = write_synthetic_corpus(inv.out, inv.count, cfg.seed, o);
    out << "wrote " << pages.size() << " pages to " << inv.out << "\n";
}

void cmd_build_dataset(const Invocation& inv, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(inv);
    cfg.validate();
    RecordOptions ro{cfg.k_max, cfg.data.token_stride, cfg.data.coverage_threshold};
    DatasetPaths paths{inv.annotations, inv.images, inv.out, std::nullopt};
    if (!inv.bubbles.empty()) paths.bubbles = fs::path(inv.bubbles);
    MockCaptioningClient client;
    const auto pages = build_dataset(paths, client, ro, cfg.data.caption_attempts);
    out << "built " << pages.size() << " records in " << inv.out << "\n";
}

void cmd_order_panels(const Invocation& inv, std::ostream& out) {
    std::vector<std::string> warnings;
    const PageAnnotation a = parse_page_annotation(read_text(inv.xml), &warnings);
    const double tol = inv.gap_tolerance ? *inv.gap_tolerance : default_gap_tolerance(a.height);
    const OrderResult r = order_panels(a.panel_boxes(), a.width, a.height, tol);
    json j = {{"page_id", a.page_id}, {"order", r.permutation}};
    if (inv.explain) {
        j["gap_tolerance"] = tol;
        j["cut_tree"] = cut_tree_json(r.cut_tree);
    }
    if (!warnings.empty()) j["warnings"] = warnings;
    out << j.dump(2) << "\n";
}

void cmd_split_story(const Invocation& inv, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(inv);
    const ScriptSet s = split_story(read_text(inv.story_file), inv.k, cfg.k_max);
    const ScriptSet padded = pad_scripts(s.scripts, cfg.k_max);
    json j = {{"k", s.k}, {"scripts", s.scripts}, {"padded", padded.scripts}, {"warnings", s.warnings}};
    out << j.dump(2) << "\n";
}

void cmd_train(const Invocation& inv, std::ostream& out) {
    const PipelineConfig cfg = resolve_config(inv);
    cfg.validate();
    const auto records = read_records(inv.data);
    if (records.empty()) throw DataError("no records in " + inv.data);
    const auto codec = make_codec(cfg);
    const auto embedder = make_embedder(cfg);
    std::vector<TrainingSample<float>> samples;
    for (const auto& r : records) samples.push_back(prepare_sample<float>(r, codec, embedder, cfg.model));

    std::unique_ptr<TrainState<float>> state;
    if (inv.resume && fs::exists(fs::path(inv.out) / "manifest.json")) {
        Checkpoint ck = load_checkpoint(inv.out);
        if (config_to_json(ck.config) != config_to_json(cfg)) {
            // Only the step budget may change when resuming.
            PipelineConfig a = ck.config, b = cfg;
            a.train.steps = b.train.steps = 0;
            if (config_to_json(a) != config_to_json(b))
                throw ConfigError("--resume: checkpoint config differs from the requested config");
        }
        state = std::move(ck.state);
        out << "resuming at step " << state->step << "\n";
    } else {
        state = std::make_unique<TrainState<float>>(cfg.model, cfg.seed);
    }

    fs::create_directories(inv.out);
    std::ofstream log(fs::path(inv.out) / "loss.csv", inv.resume ? std::ios::app : std::ios::trunc);
    if (!inv.resume || state->step == 0) log << "step,loss\n";
    train_model(cfg, *state, samples, [&](const TrainProgress& p) {
        log << p.step << ',' << p.loss << '\n';
        if (p.step % cfg.train.log_every == 0 || p.step == cfg.train.steps)
            out << "step " << p.step << " loss " << p.loss << "\n";
        if (cfg.train.checkpoint_every > 0 && p.step % cfg.train.checkpoint_every == 0)
            save_checkpoint(inv.out, cfg, *state);
    });
    save_checkpoint(inv.out, cfg, *state);
    out << "checkpoint written to " << inv.out << "\n";
}

void cmd_sample(const Invocation& inv, std::ostream& out) {
    const Checkpoint ck = in_stage("load-checkpoint", [&] { return load_checkpoint(inv.ckpt); });
    std::uint64_t seed = ck.config.seed;
    if (inv.seed) seed = *inv.seed;
    else if (const char* env = std::getenv("MANGA_SEED")) seed = parse_seed_env(env);
    if (inv.k < 1 || inv.k > ck.config.k_max)
        throw ConfigError("k exceeds K_max: k=" + std::to_string(inv.k) + ", K_max=" + std::to_string(ck.config.k_max));
    const std::string story = in_stage("read-story", [&] { return read_text(inv.story_file); });
    const GeneratedPage g = generate_page(ck, story, inv.k, seed);
    in_stage("write-page", [&] { write_png(g.page, inv.out); });
    if (!inv.panels_dir.empty()) {
        fs::create_directories(inv.panels_dir);
        for (std::size_t i = 0; i < g.panels.size(); ++i)
            write_png(g.panels.images[i], fs::path(inv.panels_dir) / ("panel_" + std::to_string(i) + ".png"));
    }
    json j = {{"k", g.scripts.k}, {"scripts", g.scripts.scripts}, {"warnings", g.scripts.warnings}, {"out", inv.out}};
    out << j.dump(2) << "\n";
}

void cmd_compose(const Invocation& inv, std::ostream& out) {
    std::vector<Image> images;
    for (const auto& p : inv.panels) images.push_back(read_png(p));
    write_png(compose_page(images), inv.out);
    out << "composed " << images.size() << " panels into " << inv.out << "\n";
}

void cmd_evaluate(const Invocation& inv, std::ostream& out) {
    if (inv.extractor != "stub") throw ConfigError("unknown extractor '" + inv.extractor + "' (available: stub)");
    StubExtractor ex;
    const EvalReport r = run_eval(inv.gen, inv.ref, ex);
    const std::string text = r.to_json();
    if (!inv.report.empty()) {
        std::ofstream f(inv.report);
        if (!f) throw RuntimeError("cannot write " + inv.report);
        f << text << "\n";
    }
    out << text << "\n";
}

}  // namespace

std::unique_ptr<CLI::App> make_app(Invocation& inv) {
    auto app = std::make_unique<CLI::App>("Multi-panel manga page generation toolkit", "manga");
    app->require_subcommand(1);

    auto add_config = [&](CLI::App* c) {
        c->add_option("--config", inv.config_file, "Pipeline config JSON; flags override its values")
            ->check(CLI::ExistingFile);
    };
    auto add_seed = [&](CLI::App* c) {
        c->add_option("--seed", inv.seed, "Master seed (falls back to MANGA_SEED, then the config)");
    };

    auto* syn = app->add_subcommand("make-synthetic", "Write a synthetic annotated corpus");
    syn->add_option("--out", inv.out, "Output directory")->required();
    syn->add_option("--count", inv.count, "Number of pages")->capture_default_str();
    syn->add_option("--max-panels", inv.max_panels, "Largest panel count per page (capped by K_max)")
        ->capture_default_str();
    add_config(syn);
    add_seed(syn);

    auto* bd = app->add_subcommand("build-dataset", "Turn annotated pages into training records");
    bd->add_option("--annotations", inv.annotations, "Directory of page XML files")->required()->check(CLI::ExistingDirectory);
    bd->add_option("--images", inv.images, "Directory of page PNGs named <page_id>.png")->required()->check(CLI::ExistingDirectory);
    bd->add_option("--out", inv.out, "Output directory for records and manifest")->required();
    bd->add_option("--bubbles", inv.bubbles, "Directory of <page_id>.json bubble box lists (default: text boxes)")
        ->check(CLI::ExistingDirectory);
    bd->add_option("--k-max", inv.k_max, "Maximum panels per page");
    bd->add_option("--token-stride", inv.token_stride, "Page pixels per token cell");
    bd->add_option("--coverage-threshold", inv.coverage_threshold, "Bubble coverage above which a token is masked");
    add_config(bd);

    auto* op = app->add_subcommand("order-panels", "Print the reading order of a page's panels");
    op->add_option("--xml", inv.xml, "Page annotation XML")->required()->check(CLI::ExistingFile);
    op->add_flag("--explain", inv.explain, "Also print the recursive cut tree");
    op->add_option("--gap-tolerance", inv.gap_tolerance, "Pixels a box may cross a cut (default scales with height)");

    auto* ss = app->add_subcommand("split-story", "Split a story into per-panel scripts");
    ss->add_option("--k", inv.k, "Number of panels")->required();
    ss->add_option("--story-file", inv.story_file, "UTF-8 story text")->required()->check(CLI::ExistingFile);
    ss->add_option("--k-max", inv.k_max, "Maximum panels per page");
    add_config(ss);

    auto* tr = app->add_subcommand("train", "Train the diffusion model on a record archive");
    tr->add_option("--data", inv.data, "Directory written by build-dataset")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--out", inv.out, "Checkpoint directory")->required();
    tr->add_option("--steps", inv.steps, "Total optimizer steps");
    tr->add_option("--batch-size", inv.batch_size, "Pages per step");
    tr->add_option("--lr", inv.lr, "AdamW learning rate");
    tr->add_option("--k-max", inv.k_max, "Maximum panels per page");
    tr->add_flag("--resume", inv.resume, "Continue from the checkpoint in --out");
    add_config(tr);
    add_seed(tr);

    auto* sa = app->add_subcommand("sample", "Generate a page from a story");
    sa->add_option("--ckpt", inv.ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    sa->add_option("--story", inv.story_file, "UTF-8 story text")->required()->check(CLI::ExistingFile);
    sa->add_option("--k", inv.k, "Number of panels")->required();
    sa->add_option("--out", inv.out, "Output page PNG")->required();
    sa->add_option("--panels-dir", inv.panels_dir, "Also write every decoded panel here");
    add_seed(sa);

    auto* co = app->add_subcommand("compose", "Merge full-page panel images by pixel minimum");
    co->add_option("--panels", inv.panels, "Panel PNGs, all the same size")->required()->check(CLI::ExistingFile);
    co->add_option("--out", inv.out, "Output page PNG")->required();

    auto* ev = app->add_subcommand("evaluate", "Frechet distance and mean cosine similarity of two image sets");
    ev->add_option("--gen", inv.gen, "Generated PNG directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--ref", inv.ref, "Reference PNG directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--extractor", inv.extractor, "Feature extractor")->capture_default_str();
    ev->add_option("--report", inv.report, "Write the JSON report here");

    return app;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Invocation inv;
    auto app = make_app(inv);
    try {
        app->parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app->exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app->exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app->exit(e, out, err);
        return 2;
    }

    const CLI::App* cmd = app->get_subcommands().front();
    const std::string name = cmd->get_name();
    try {
        if (name == "make-synthetic") cmd_make_synthetic(inv, out);
        else if (name == "build-dataset") cmd_build_dataset(inv, out);
        else if (name == "order-panels") cmd_order_panels(inv, out);
        else if (name == "split-story") cmd_split_story(inv, out);
        else if (name == "train") cmd_train(inv, out);
        else if (name == "sample") cmd_sample(inv, out);
        else if (name == "compose") cmd_compose(inv, out);
        else if (name == "evaluate") cmd_evaluate(inv, out);
        return 0;
    } catch (const Error& e) {
        err << "manga " << name << ": error: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::Config: return 2;
            case ErrorKind::Data: return 3;
            default: return 4;
        }
    } catch (const std::exception& e) {
        err << "manga " << name << ": error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace manga::cli
