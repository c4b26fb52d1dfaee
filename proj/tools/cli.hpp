#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace CLI {
class App;
}

namespace manga::cli {

/// Values bound to the command line.
struct Invocation {
    std::string config_file;
    std::optional<std::uint64_t> seed;

    std::string annotations, images, bubbles, out, data, ckpt, story_file, xml, report, gen, ref;
    std::string extractor = "stub";
    std::vector<std::string> panels;
    std::string panels_dir;
    std::optional<int> k_max, steps, batch_size, token_stride;
    std::optional<double> lr, coverage_threshold, gap_tolerance;
    int k = 0;
    int count = 20;
    int max_panels = 4;
    bool explain = false;
    bool resume = false;
};

std::unique_ptr<CLI::App> make_app(Invocation& inv);

/// Parses argv and runs one subcommand. Returns the process exit code:
/// 0 ok, 2 config error, 3 data error, 4 runtime error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace manga::cli
