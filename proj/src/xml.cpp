#include "manga/xml.hpp"

#include "manga/error.hpp"

#include <cstdint>

namespace manga::xml {

const std::string* Node::attribute(std::string_view key) const {
    for (const auto& [k, v] : attributes)
        if (k == key) return &v;
    return nullptr;
}

namespace {

bool is_name_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == ':' ||
           static_cast<unsigned char>(c) >= 0x80;
}
bool is_name_char(char c) {
    return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += char(cp);
    } else if (cp < 0x800) {
        out += char(0xC0 | (cp >> 6));
        out += char(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += char(0xE0 | (cp >> 12));
        out += char(0x80 | ((cp >> 6) & 0x3F));
        out += char(0x80 | (cp & 0x3F));
    } else {
        out += char(0xF0 | (cp >> 18));
        out += char(0x80 | ((cp >> 12) & 0x3F));
        out += char(0x80 | ((cp >> 6) & 0x3F));
        out += char(0x80 | (cp & 0x3F));
    }
}

class Parser {
public:
    explicit Parser(std::string_view s) : s_(s) {}

    Node document() {
        skip_misc();
        if (eof()) fail("document has no root element");
        if (peek() != '<') fail("expected '<'");
        Node root = element();
        skip_misc();
        if (!eof()) fail("content after root element");
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw XmlParseError(msg, line_, col_); }

    bool eof() const { return pos_ >= s_.size(); }
    char peek(std::size_t off = 0) const { return pos_ + off < s_.size() ? s_[pos_ + off] : '\0'; }
    bool starts_with(std::string_view p) const { return s_.substr(pos_, p.size()) == p; }

    char get() {
        if (eof()) fail("unexpected end of input");
        char c = s_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }
    void expect(std::string_view p) {
        if (!starts_with(p)) fail("expected '" + std::string(p) + "'");
        for (std::size_t i = 0; i < p.size(); ++i) get();
    }
    void skip_space() {
        while (!eof() && is_space(peek())) get();
    }
    void skip_until(std::string_view terminator) {
        while (!starts_with(terminator)) {
            if (eof()) fail("unterminated construct, expected '" + std::string(terminator) + "'");
            get();
        }
        expect(terminator);
    }

    // Prolog/epilog: whitespace, comments, PIs, doctype.
    void skip_misc() {
        for (;;) {
            skip_space();
            if (starts_with("<?")) {
                skip_until("?>");
            } else if (starts_with("<!--")) {
                skip_until("-->");
            } else if (starts_with("<!DOCTYPE")) {
                skip_until(">");
            } else {
                return;
            }
        }
    }

    std::string name() {
        if (eof() || !is_name_start(peek())) fail("expected a name");
        std::string n;
        while (!eof() && is_name_char(peek())) n += get();
        return n;
    }

    void reference(std::string& out) {
        expect("&");
        if (peek() == '#') {
            get();
            int base = 10;
            if (peek() == 'x') {
                get();
                base = 16;
            }
            std::uint32_t cp = 0;
            int digits = 0;
            while (!eof() && peek() != ';') {
                char c = get();
                int d;
                if (c >= '0' && c <= '9') d = c - '0';
                else if (base == 16 && c >= 'a' && c <= 'f') d = c - 'a' + 10;
                else if (base == 16 && c >= 'A' && c <= 'F') d = c - 'A' + 10;
                else fail("bad character reference");
                cp = cp * base + d;
                if (cp > 0x10FFFF) fail("character reference out of range");
                ++digits;
            }
            if (digits == 0) fail("empty character reference");
            expect(";");
            append_utf8(out, cp);
            return;
        }
        std::string ent = name();
        expect(";");
        if (ent == "lt") out += '<';
        else if (ent == "gt") out += '>';
        else if (ent == "amp") out += '&';
        else if (ent == "quot") out += '"';
        else if (ent == "apos") out += '\'';
        else fail("unknown entity '&" + ent + ";'");
    }

    Node element() {
        Node node;
        node.line = line_;
        node.column = col_;
        expect("<");
        node.name = name();
        for (;;) {
            bool had_space = !eof() && is_space(peek());
            skip_space();
            if (starts_with("/>")) {
                expect("/>");
                return node;
            }
            if (peek() == '>') {
                get();
                break;
            }
            if (!had_space) fail("expected whitespace before attribute");
            std::string key = name();
            if (node.has_attribute(key)) fail("duplicate attribute '" + key + "'");
            skip_space();
            expect("=");
            skip_space();
            char q = peek();
            if (q != '"' && q != '\'') fail("attribute value must be quoted");
            get();
            std::string value;
            while (peek() != q) {
                if (eof()) fail("unterminated attribute value");
                if (peek() == '<') fail("'<' in attribute value");
                if (peek() == '&') reference(value);
                else value += get();
            }
            get();
            node.attributes.emplace_back(std::move(key), std::move(value));
        }
        // content
        for (;;) {
            if (eof()) fail("unclosed element '" + node.name + "'");
            if (starts_with("</")) {
                expect("</");
                std::string closing = name();
                if (closing != node.name)
                    fail("mismatched closing tag '" + closing + "', expected '" + node.name + "'");
                skip_space();
                expect(">");
                return node;
            }
            if (starts_with("<!--")) {
                skip_until("-->");
            } else if (starts_with("<![CDATA[")) {
                expect("<![CDATA[");
                while (!starts_with("]]>")) {
                    if (eof()) fail("unterminated CDATA");
                    node.text += get();
                }
                expect("]]>");
            } else if (starts_with("<?")) {
                skip_until("?>");
            } else if (peek() == '<') {
                node.children.push_back(element());
            } else if (peek() == '&') {
                reference(node.text);
            } else {
                char c = get();
                // \r\n and lone \r normalize to \n
                if (c == '\r') {
                    if (peek() == '\n') get();
                    c = '\n';
                }
                node.text += c;
            }
        }
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

}  // namespace

Node parse(std::string_view text) { return Parser(text).document(); }

std::string escape(std::string_view raw, bool attribute) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += attribute ? "&quot;" : "\""; break;
            case '\'': out += attribute ? "&apos;" : "'"; break;
            case '\r': out += "&#13;"; break;
            case '\n': out += attribute ? "&#10;" : "\n"; break;
            case '\t': out += attribute ? "&#9;" : "\t"; break;
            default: out += c;
        }
    }
    return out;
}

void Writer::indent() { out_.append(std::size_t(depth_) * 2, ' '); }

void Writer::start_tag(std::string_view name, const std::vector<std::pair<std::string, std::string>>& attrs) {
    indent();
    out_ += '<';
    out_ += name;
    for (const auto& [k, v] : attrs) {
        out_ += ' ';
        out_ += k;
        out_ += "=\"";
        out_ += escape(v, true);
        out_ += '"';
    }
}

void Writer::open(std::string_view name, const std::vector<std::pair<std::string, std::string>>& attrs) {
    start_tag(name, attrs);
    out_ += ">\n";
    ++depth_;
}

void Writer::close(std::string_view name) {
    --depth_;
    indent();
    out_ += "</";
    out_ += name;
    out_ += ">\n";
}

void Writer::leaf(std::string_view name, const std::vector<std::pair<std::string, std::string>>& attrs,
                  std::optional<std::string_view> text) {
    start_tag(name, attrs);
    if (!text) {
        out_ += "/>\n";
        return;
    }
    out_ += '>';
    out_ += escape(*text, false);
    out_ += "</";
    out_ += name;
    out_ += ">\n";
}

}  // namespace manga::xml
