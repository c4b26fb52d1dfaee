#include "doctest.h"

#include "manga/error.hpp"
#include "manga/script_splitter.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>

using namespace manga;

namespace {

// Best achievable max-group-sum over all contiguous splits into g non-empty groups.
std::size_t brute_force(const std::vector<std::size_t>& len, std::size_t g) {
    std::size_t best = SIZE_MAX;
    std::function<void(std::size_t, std::size_t, std::size_t)> rec = [&](std::size_t at, std::size_t left,
                                                                         std::size_t worst) {
        if (left == 1) {
            const std::size_t rest = std::accumulate(len.begin() + long(at), len.end(), std::size_t{0});
            best = std::min(best, std::max(worst, rest));
            return;
        }
        std::size_t acc = 0;
        for (std::size_t end = at + 1; end + left - 1 <= len.size(); ++end) {
            acc += len[end - 1];
            rec(end, left - 1, std::max(worst, acc));
        }
    };
    rec(0, g, 0);
    return best;
}

struct FixedClient : StorySplitClient {
    std::vector<std::string> answer;
    int calls = 0;
    std::vector<std::string> split(const std::string&, int, const std::string& prompt) override {
        ++calls;
        CHECK(prompt.find("exactly") != std::string::npos);
        return answer;
    }
};

}  // namespace

TEST_CASE("sentence splitting") {
    const auto s = split_sentences("Aki runs.  Ben waits!\nDoes Chie know? Yes.");
    CHECK(s == std::vector<std::string>{"Aki runs.", "Ben waits!", "Does Chie know?", "Yes."});
    CHECK(split_sentences("   ").empty());
    CHECK(utf8_length("日本語") == 3);
    CHECK(split_sentences("猫が来た。犬も来た。").size() == 2);
}

TEST_CASE("split_story examples") {
    SUBCASE("four equal sentences into two") {
        const auto r = split_story("Aaaa one. Bbbb two. Cccc tre. Dddd for.", 2, 8);
        CHECK(r.scripts == std::vector<std::string>{"Aaaa one. Bbbb two.", "Cccc tre. Dddd for."});
        CHECK(r.k == 2);
        CHECK(r.warnings.empty());
    }
    SUBCASE("k = 1 returns the whole story") {
        const std::string story = "First one here. Second one there!";
        CHECK(split_story(story, 1, 8).scripts == std::vector<std::string>{story});
        // whitespace between sentences is normalized
        CHECK(split_story("First.   \n Second.", 1, 8).scripts == std::vector<std::string>{"First. Second."});
    }
    SUBCASE("too few sentences pad with EMPTY and warn") {
        const auto r = split_story("One. Two.", 4, 8);
        CHECK(r.scripts == std::vector<std::string>{"One.", "Two.", "EMPTY", "EMPTY"});
        CHECK(r.k == 2);
        CHECK(r.warnings.size() == 1);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(split_story("A.", 9, 8), ConfigError);
        CHECK_THROWS_AS(split_story("A.", 0, 8), ConfigError);
        CHECK_THROWS_AS(split_story("  \n", 1, 8), DataError);
    }
}

TEST_CASE("pad_scripts") {
    const auto r = pad_scripts({"a", "b", "c"}, 8);
    CHECK(r.scripts.size() == 8);
    CHECK(r.k == 3);
    for (int i = 3; i < 8; ++i) CHECK(r.scripts[std::size_t(i)] == "EMPTY");
    const std::vector<std::string> eight(8, "x");
    CHECK(pad_scripts(eight, 8).scripts == eight);
    CHECK_THROWS_AS(pad_scripts(std::vector<std::string>(9, "x"), 8), ConfigError);
}

TEST_CASE("fallback splitter is order preserving and balanced") {
    std::mt19937_64 rng(5);
    const std::vector<std::string> words = {"Go.", "A cat sat.", "The long road bends north.", "Rain!", "Why not?",
                                            "Ben laughs at the sky.", "Silence.", "It was over."};
    for (int trial = 0; trial < 200; ++trial) {
        const int n = std::uniform_int_distribution<int>(1, 8)(rng);
        std::vector<std::string> sentences;
        for (int i = 0; i < n; ++i) sentences.push_back(words[std::uniform_int_distribution<std::size_t>(0, 7)(rng)]);
        std::string story;
        for (const auto& s : sentences) story += s + (trial % 2 ? "  " : "\n");
        const int k = std::uniform_int_distribution<int>(1, n)(rng);
        const auto r = split_story(story, k, 8);
        REQUIRE(int(r.scripts.size()) == k);

        std::string joined, normalized;
        for (const auto& s : r.scripts) joined += (joined.empty() ? "" : " ") + s;
        for (const auto& s : sentences) normalized += (normalized.empty() ? "" : " ") + s;
        CHECK(joined == normalized);

        std::vector<std::size_t> len;
        for (const auto& s : sentences) len.push_back(utf8_length(s));
        std::size_t worst = 0;
        for (const auto& s : r.scripts) {
            // a script's length is its sentences' lengths without the joining spaces
            std::size_t l = 0;
            for (const auto& piece : split_sentences(s)) l += utf8_length(piece);
            worst = std::max(worst, l);
        }
        CHECK(worst == brute_force(len, std::size_t(k)));
    }
}

TEST_CASE("balanced_partition against brute force") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
        std::vector<std::size_t> len(n);
        for (auto& l : len) l = std::uniform_int_distribution<std::size_t>(1, 30)(rng);
        const std::size_t g = std::uniform_int_distribution<std::size_t>(1, n)(rng);
        const auto sizes = balanced_partition(len, g);
        REQUIRE(sizes.size() == g);
        std::size_t at = 0, worst = 0;
        for (auto s : sizes) {
            CHECK(s >= 1);
            worst = std::max(worst, std::accumulate(len.begin() + long(at), len.begin() + long(at + s), std::size_t{0}));
            at += s;
        }
        CHECK(at == n);
        CHECK(worst == brute_force(len, g));
    }
    CHECK_THROWS_AS(balanced_partition({1, 2}, 3), DataError);
}

TEST_CASE("split client contract") {
    FixedClient c;
    const std::string story = "Aki wakes up. She eats toast. Ben calls.";
    c.answer = {"Aki wakes up. She eats toast.", "Ben calls."};
    const auto r = split_story(story, 2, 4, &c);
    CHECK(r.scripts == c.answer);
    CHECK(c.calls == 1);

    c.answer = {"Aki wakes up."};
    CHECK_THROWS_AS(split_story(story, 2, 4, &c), ProtocolError);
    c.answer = {"Ben calls.", "Aki wakes up."};
    CHECK_THROWS_AS(split_story(story, 2, 4, &c), ProtocolError);
    c.answer = {"Aki wakes up.", "  "};
    CHECK_THROWS_AS(split_story(story, 2, 4, &c), ProtocolError);
    c.answer = {"Aki wakes up.", "Chie sleeps."};
    CHECK_THROWS_AS(split_story(story, 2, 4, &c), ProtocolError);
}
