#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace manga::xml {

/// Element node of a parsed document. Character data directly inside the
/// element is concatenated into `text`; comments and processing
/// instructions are dropped.
struct Node {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<Node> children;
    std::string text;
    int line = 0;
    int column = 0;

    const std::string* attribute(std::string_view key) const;
    bool has_attribute(std::string_view key) const { return attribute(key) != nullptr; }
};

/// Parses a document and returns its root element. Throws XmlParseError
/// with the 1-based line/column of the first offending character.
Node parse(std::string_view text);

std::string escape(std::string_view raw, bool attribute);

/// Indenting serializer. Leaf elements with text are written on one line
/// so their content round-trips exactly.
class Writer {
public:
    void open(std::string_view name, const std::vector<std::pair<std::string, std::string>>& attrs);
    void close(std::string_view name);
    void leaf(std::string_view name, const std::vector<std::pair<std::string, std::string>>& attrs,
              std::optional<std::string_view> text = std::nullopt);
    std::string str() const { return out_; }

private:
    void indent();
    void start_tag(std::string_view name, const std::vector<std::pair<std::string, std::string>>& attrs);
    std::string out_ = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    int depth_ = 0;
};

}  // namespace manga::xml
