#include "manga/script_splitter.hpp"

#include "manga/error.hpp"

#include <unicode/brkiter.h>
#include <unicode/locid.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <memory>
#include <numeric>

namespace manga {

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_ws(s[b])) ++b;
    while (e > b && is_ws(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string collapse_ws(std::string_view s) {
    std::string out;
    bool pending = false;
    for (char c : s) {
        if (is_ws(c)) {
            pending = !out.empty();
            continue;
        }
        if (pending) out += ' ';
        pending = false;
        out += c;
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::size_t from, std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to; ++i) {
        if (i > from) out += ' ';
        out += parts[i];
    }
    return out;
}

}  // namespace

std::size_t utf8_length(std::string_view s) {
    return std::size_t(std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string story_split_prompt(int k) {
    return "Split the following story into exactly " + std::to_string(k) +
           " consecutive segments, one per manga panel. Keep the original wording and order; "
           "do not add, drop, or reorder sentences. Return one segment per line.";
}

std::vector<std::string> split_sentences(const std::string& story) {
    UErrorCode status = U_ZERO_ERROR;
    std::unique_ptr<icu::BreakIterator> it(icu::BreakIterator::createSentenceInstance(icu::Locale::getRoot(), status));
    if (U_FAILURE(status)) throw RuntimeError(std::string("ICU sentence iterator unavailable: ") + u_errorName(status));
    icu::UnicodeString text = icu::UnicodeString::fromUTF8(story);
    it->setText(text);
    std::vector<std::string> out;
    int32_t start = it->first();
    for (int32_t end = it->next(); end != icu::BreakIterator::DONE; start = end, end = it->next()) {
        std::string piece;
        text.tempSubStringBetween(start, end).toUTF8String(piece);
        piece = trim(piece);
        if (!piece.empty()) out.push_back(std::move(piece));
    }
    return out;
}

std::vector<std::size_t> balanced_partition(const std::vector<std::size_t>& lengths, std::size_t groups) {
    const std::size_t n = lengths.size();
    if (groups == 0 || n < groups) throw DataError("balanced_partition: need at least one item per group");

    // Smallest feasible bound by binary search over the greedy packer.
    auto fits = [&](std::size_t bound) {
        std::size_t used = 1, acc = 0;
        for (auto l : lengths) {
            if (l > bound) return false;
            if (acc + l > bound) {
                ++used;
                acc = 0;
            }
            acc += l;
        }
        return used <= groups;
    };
    std::size_t lo = lengths.empty() ? 0 : *std::max_element(lengths.begin(), lengths.end());
    std::size_t hi = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
    while (lo < hi) {
        std::size_t mid = lo + (hi - lo) / 2;
        if (fits(mid)) hi = mid;
        else lo = mid + 1;
    }
    const std::size_t bound = lo;

    // Greedy fill from the front, leaving at least one item per remaining group.
    std::vector<std::size_t> sizes;
    std::size_t i = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t groups_left = groups - g - 1;
        std::size_t acc = 0, take = 0;
        while (i + take < n && n - (i + take) > groups_left && (take == 0 || acc + lengths[i + take] <= bound)) {
            acc += lengths[i + take];
            ++take;
        }
        sizes.push_back(take);
        i += take;
    }
    return sizes;
}

ScriptSet pad_scripts(const std::vector<std::string>& scripts, int k_max) {
    if (int(scripts.size()) > k_max)
        throw ConfigError("k exceeds K_max: " + std::to_string(scripts.size()) + " scripts for K_max=" +
                          std::to_string(k_max));
    ScriptSet out;
    out.scripts = scripts;
    out.k = int(scripts.size());
    while (int(out.scripts.size()) < k_max) out.scripts.emplace_back(kEmptyCaption);
    return out;
}

ScriptSet split_story(const std::string& story, int k, int k_max, StorySplitClient* client) {
    if (k < 1 || k > k_max)
        throw ConfigError("k exceeds K_max: k=" + std::to_string(k) + " must be in [1, " + std::to_string(k_max) + "]");
    if (trim(story).empty()) throw DataError("split_story: story is empty");

    ScriptSet out;
    if (client) {
        auto segments = client->split(story, k, story_split_prompt(k));
        if (int(segments.size()) != k)
            throw ProtocolError("split client returned " + std::to_string(segments.size()) + " segments, expected " +
                                std::to_string(k));
        const std::string haystack = collapse_ws(story);
        std::size_t cursor = 0;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const std::string needle = collapse_ws(segments[i]);
            if (needle.empty()) throw ProtocolError("split client returned an empty segment " + std::to_string(i));
            auto pos = haystack.find(needle, cursor);
            if (pos == std::string::npos)
                throw ProtocolError("split client segment " + std::to_string(i) + " is not an in-order excerpt of the story");
            cursor = pos + needle.size();
            out.scripts.push_back(trim(segments[i]));
        }
        out.k = k;
        return out;
    }

    auto sentences = split_sentences(story);
    if (int(sentences.size()) < k) {
        out.warnings.push_back("story has " + std::to_string(sentences.size()) + " sentences for k=" + std::to_string(k) +
                               "; remaining scripts set to EMPTY");
        out.scripts = sentences;
        out.k = int(sentences.size());
        while (int(out.scripts.size()) < k) out.scripts.emplace_back(kEmptyCaption);
        return out;
    }
    std::vector<std::size_t> lengths;
    for (const auto& s : sentences) lengths.push_back(utf8_length(s));
    auto sizes = balanced_partition(lengths, std::size_t(k));
    std::size_t at = 0;
    for (auto sz : sizes) {
        out.scripts.push_back(join(sentences, at, at + sz));
        at += sz;
    }
    out.k = k;
    return out;
}

}  // namespace manga
