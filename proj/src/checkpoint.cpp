#include "manga/checkpoint.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace manga {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "manga-checkpoint-1";

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big)
        v = (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
    return v;
}

void write_floats(const fs::path& file, const std::vector<const Mat<float>*>& mats) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + file.string());
    for (const auto* m : mats)
        for (Eigen::Index i = 0; i < m->size(); ++i) {
            std::uint32_t u;
            std::memcpy(&u, m->data() + i, 4);
            u = to_le(u);
            out.write(reinterpret_cast<const char*>(&u), 4);
        }
    if (!out) throw RuntimeError("write failed: " + file.string());
}

void read_floats(const fs::path& file, const std::vector<Mat<float>*>& mats) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("checkpoint file missing: " + file.string());
    std::uintmax_t expected = 0;
    for (const auto* m : mats) expected += std::uintmax_t(m->size()) * 4;
    if (fs::file_size(file) != expected)
        throw DataError(file.string() + " holds " + std::to_string(fs::file_size(file)) + " bytes, expected " +
                        std::to_string(expected));
    for (auto* m : mats)
        for (Eigen::Index i = 0; i < m->size(); ++i) {
            std::uint32_t u;
            in.read(reinterpret_cast<char*>(&u), 4);
            u = to_le(u);
            std::memcpy(m->data() + i, &u, 4);
        }
}

}  // namespace

void save_checkpoint(const fs::path& dir, const PipelineConfig& cfg, const TrainState<float>& state) {
    fs::create_directories(dir);
    const auto& ps = state.model.params();
    json manifest;
    manifest["format"] = kFormat;
    manifest["config"] = json::parse(config_to_json(cfg));
    manifest["step"] = state.step;
    manifest["seed"] = state.seed;
    manifest["adam_steps"] = state.optimizer.steps;
    manifest["dtype"] = "float32-le";
    manifest["parameters"] = json::array();
    std::vector<const Mat<float>*> values, m, v;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto& p = ps.all()[i];
        manifest["parameters"].push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}});
        values.push_back(&p.value);
    }
    const bool has_moments = state.optimizer.m.size() == ps.size();
    manifest["optimizer_moments"] = has_moments;
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
    write_floats(dir / "params.bin", values);
    if (has_moments) {
        for (std::size_t i = 0; i < ps.size(); ++i) {
            m.push_back(&state.optimizer.m[i]);
            v.push_back(&state.optimizer.v[i]);
        }
        write_floats(dir / "adam_m.bin", m);
        write_floats(dir / "adam_v.bin", v);
    }
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("checkpoint manifest missing in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("checkpoint manifest unreadable: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != kFormat) throw DataError("unsupported checkpoint format in " + dir.string());

    Checkpoint ck;
    try {
        ck.config = parse_config(manifest.at("config").dump());
        ck.state = std::make_unique<TrainState<float>>(ck.config.model, manifest.at("seed").get<std::uint64_t>());
        ck.state->step = manifest.at("step").get<std::int64_t>();
        auto& ps = ck.state->model.params();
        const auto& list = manifest.at("parameters");
        if (list.size() != ps.size())
            throw DataError("checkpoint lists " + std::to_string(list.size()) + " parameters, model has " +
                            std::to_string(ps.size()));
        std::vector<Mat<float>*> values;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            auto& p = ps.all()[i];
            const auto shape = list[i].at("shape").get<std::vector<Eigen::Index>>();
            if (list[i].at("name").get<std::string>() != p.name || shape.size() != 2 || shape[0] != p.value.rows() ||
                shape[1] != p.value.cols())
                throw DataError("checkpoint parameter " + std::to_string(i) + " ('" +
                                list[i].at("name").get<std::string>() + "') does not match the model");
            values.push_back(&p.value);
        }
        read_floats(dir / "params.bin", values);
        ck.state->optimizer.reset(ps);
        if (manifest.value("optimizer_moments", false)) {
            std::vector<Mat<float>*> m, v;
            for (std::size_t i = 0; i < ps.size(); ++i) {
                m.push_back(&ck.state->optimizer.m[i]);
                v.push_back(&ck.state->optimizer.v[i]);
            }
            read_floats(dir / "adam_m.bin", m);
            read_floats(dir / "adam_v.bin", v);
            ck.state->optimizer.steps = manifest.at("adam_steps").get<std::int64_t>();
        }
    } catch (const json::exception& e) {
        throw DataError("checkpoint manifest malformed: " + std::string(e.what()));
    }
    return ck;
}

}  // namespace manga
