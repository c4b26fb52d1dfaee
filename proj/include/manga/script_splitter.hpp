#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace manga {

/// Padding sentinel for scripts and captions. Matched case-sensitively.
inline constexpr std::string_view kEmptyCaption = "EMPTY";

/// Panel scripts s_1..s_K, possibly followed by EMPTY pads.
struct ScriptSet {
    std::vector<std::string> scripts;
    int k = 0;  ///< number of real (non-pad) scripts
    std::vector<std::string> warnings;
};

/// Segments a story with an external language model.
class StorySplitClient {
public:
    virtual ~StorySplitClient() = default;
    virtual std::vector<std::string> split(const std::string& story, int k, const std::string& prompt) = 0;
};

/// Prompt sent to a StorySplitClient; a paraphrase, not validated against any original.
std::string story_split_prompt(int k);

/// Sentences by the Unicode (ICU) default sentence-break rules, trimmed.
std::vector<std::string> split_sentences(const std::string& story);

/// Number of Unicode code points in UTF-8 text.
std::size_t utf8_length(std::string_view s);

/// Contiguous partition of `lengths` into `groups` non-empty groups that
/// minimizes the largest group sum. Returns group sizes. Requires
/// lengths.size() >= groups >= 1.
std::vector<std::size_t> balanced_partition(const std::vector<std::size_t>& lengths, std::size_t groups);

ScriptSet split_story(const std::string& story, int k, int k_max, StorySplitClient* client = nullptr);

ScriptSet pad_scripts(const std::vector<std::string>& scripts, int k_max);

}  // namespace manga
