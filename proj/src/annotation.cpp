#include "manga/annotation.hpp"

#include "manga/xml.hpp"

#include <algorithm>
#include <charconv>
#include <set>

namespace manga {

std::vector<BBox> PageAnnotation::panel_boxes() const {
    std::vector<BBox> out;
    out.reserve(panels.size());
    for (const auto& p : panels) out.push_back(p.box);
    return out;
}

bool is_permutation_of_range(const std::vector<int>& order, std::size_t n) {
    if (order.size() != n) return false;
    std::vector<bool> seen(n, false);
    for (int i : order) {
        if (i < 0 || std::size_t(i) >= n || seen[i]) return false;
        seen[i] = true;
    }
    return true;
}

namespace {

std::string element_ref(const char* kind, std::size_t i) { return std::string(kind) + "[" + std::to_string(i) + "]"; }

void check_box(const BBox& b, int w, int h, const std::string& where, std::vector<Violation>& out) {
    if (b.xmin >= b.xmax)
        out.push_back({"bbox_inverted_x", where, "xmin must be < xmax"});
    if (b.ymin >= b.ymax)
        out.push_back({"bbox_inverted_y", where, "ymin must be < ymax"});
    if (!b.inside(w, h))
        out.push_back({"bbox_out_of_page", where, "box lies outside the page extent"});
}

int int_attr(const xml::Node& n, std::string_view key) {
    const std::string* v = n.attribute(key);
    auto where = "<" + n.name + "> at line " + std::to_string(n.line);
    if (!v) throw DataError("missing attribute '" + std::string(key) + "' on " + where);
    int out = 0;
    const char* first = v->data();
    const char* last = first + v->size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last || v->empty())
        throw DataError("attribute '" + std::string(key) + "' on " + where + " is not an integer: '" + *v + "'");
    return out;
}

std::string str_attr(const xml::Node& n, std::string_view key) {
    const std::string* v = n.attribute(key);
    if (!v)
        throw DataError("missing attribute '" + std::string(key) + "' on <" + n.name + "> at line " +
                        std::to_string(n.line));
    return *v;
}

BBox box_attrs(const xml::Node& n) {
    return {int_attr(n, "xmin"), int_attr(n, "ymin"), int_attr(n, "xmax"), int_attr(n, "ymax")};
}

std::vector<std::pair<std::string, std::string>> box_pairs(const BBox& b) {
    return {{"xmin", std::to_string(b.xmin)},
            {"ymin", std::to_string(b.ymin)},
            {"xmax", std::to_string(b.xmax)},
            {"ymax", std::to_string(b.ymax)}};
}

}  // namespace

std::vector<Violation> validate(const PageAnnotation& a) {
    std::vector<Violation> out;
    if (a.width <= 0 || a.height <= 0) out.push_back({"page_extent_invalid", "page", "width and height must be positive"});

    std::size_t with_order = 0;
    for (std::size_t i = 0; i < a.panels.size(); ++i) {
        const auto& p = a.panels[i];
        check_box(p.box, a.width, a.height, element_ref("panel", i), out);
        if (p.order_index) {
            ++with_order;
            if (*p.order_index < 0) out.push_back({"order_negative", element_ref("panel", i), "order must be >= 0"});
        }
    }
    if (with_order != 0 && with_order != a.panels.size()) {
        out.push_back({"order_partial", "page", "order given for some panels but not all"});
    } else if (with_order == a.panels.size() && with_order > 0) {
        std::vector<int> order;
        for (const auto& p : a.panels) order.push_back(*p.order_index);
        if (!is_permutation_of_range(order, a.panels.size()))
            out.push_back({"order_not_permutation", "page", "panel orders must be a permutation of 0..n-1"});
    }
    for (std::size_t i = 0; i < a.characters.size(); ++i)
        check_box(a.characters[i].box, a.width, a.height, element_ref("character", i), out);
    for (std::size_t i = 0; i < a.faces.size(); ++i)
        check_box(a.faces[i].box, a.width, a.height, element_ref("face", i), out);
    for (std::size_t i = 0; i < a.texts.size(); ++i)
        check_box(a.texts[i].box, a.width, a.height, element_ref("text", i), out);

    std::set<std::string> names;
    for (const auto& c : a.characters) names.insert(c.name);
    for (std::size_t i = 0; i < a.dialog_links.size(); ++i) {
        const auto& l = a.dialog_links[i];
        if (l.text_index < 0 || std::size_t(l.text_index) >= a.texts.size())
            out.push_back({"link_text_out_of_range", element_ref("link", i),
                           "text_index " + std::to_string(l.text_index) + " does not name a text"});
        if (!names.count(l.character))
            out.push_back({"link_unknown_character", element_ref("link", i),
                           "character '" + l.character + "' does not exist"});
    }
    return out;
}

PageAnnotation parse_page_annotation(std::string_view xml_text, std::vector<std::string>* warnings) {
    xml::Node root = xml::parse(xml_text);
    if (root.name != "page") throw DataError("root element must be <page>, got <" + root.name + ">");

    PageAnnotation a;
    a.page_id = str_attr(root, "id");
    a.width = int_attr(root, "width");
    a.height = int_attr(root, "height");

    for (const auto& n : root.children) {
        if (n.name == "panel") {
            PanelAnnotation p;
            p.box = box_attrs(n);
            if (n.has_attribute("order")) p.order_index = int_attr(n, "order");
            if (const auto* c = n.attribute("caption")) p.caption = *c;
            a.panels.push_back(std::move(p));
        } else if (n.name == "character") {
            a.characters.push_back({str_attr(n, "name"), box_attrs(n)});
        } else if (n.name == "face") {
            a.faces.push_back({str_attr(n, "name"), box_attrs(n)});
        } else if (n.name == "text") {
            a.texts.push_back({n.text, box_attrs(n)});
        } else if (n.name == "link") {
            a.dialog_links.push_back({int_attr(n, "text_index"), str_attr(n, "character")});
        } else if (warnings) {
            warnings->push_back("ignored unknown element <" + n.name + "> at line " + std::to_string(n.line));
        }
    }
    if (auto v = validate(a); !v.empty()) throw ValidationError(std::move(v));
    return a;
}

std::string serialize_page_annotation(const PageAnnotation& a) {
    if (auto v = validate(a); !v.empty()) throw ValidationError(std::move(v));

    xml::Writer w;
    w.open("page", {{"id", a.page_id}, {"width", std::to_string(a.width)}, {"height", std::to_string(a.height)}});
    for (const auto& p : a.panels) {
        std::vector<std::pair<std::string, std::string>> attrs;
        if (p.order_index) attrs.emplace_back("order", std::to_string(*p.order_index));
        for (auto& kv : box_pairs(p.box)) attrs.push_back(std::move(kv));
        if (p.caption) attrs.emplace_back("caption", *p.caption);
        w.leaf("panel", attrs);
    }
    for (const auto& c : a.characters) {
        auto attrs = box_pairs(c.box);
        attrs.insert(attrs.begin(), {"name", c.name});
        w.leaf("character", attrs);
    }
    for (const auto& f : a.faces) {
        auto attrs = box_pairs(f.box);
        attrs.insert(attrs.begin(), {"name", f.name});
        w.leaf("face", attrs);
    }
    for (const auto& t : a.texts) w.leaf("text", box_pairs(t.box), t.content);
    for (const auto& l : a.dialog_links)
        w.leaf("link", {{"text_index", std::to_string(l.text_index)}, {"character", l.character}});
    w.close("page");
    return w.str();
}

std::optional<int> owning_panel(const BBox& item, const std::vector<BBox>& panels) {
    std::optional<int> best;
    std::int64_t best_area = -1;
    const double cx = item.center_x();
    const double cy = item.center_y();
    for (std::size_t i = 0; i < panels.size(); ++i) {
        if (!panels[i].contains_point(cx, cy)) continue;
        std::int64_t area = intersection_area(item, panels[i]);
        if (area > best_area) {
            best_area = area;
            best = int(i);
        }
    }
    return best;
}

EnrichedPageXML build_enriched_xml(const PageAnnotation& a, const std::vector<int>& order) {
    if (!is_permutation_of_range(order, a.panels.size()))
        throw DataError("panel order is not a permutation of 0.." + std::to_string(a.panels.size()) + "-1");

    const auto boxes = a.panel_boxes();
    EnrichedPageXML out;
    out.page_id = a.page_id;
    out.width = a.width;
    out.height = a.height;

    // position of each source panel in the emitted sequence
    std::vector<int> slot(a.panels.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        slot[order[i]] = int(i);
        out.panels.push_back({order[i], a.panels[order[i]].box, {}, {}});
    }

    // character index -> (emitted panel slot, index within that panel)
    std::vector<std::pair<int, int>> char_slot(a.characters.size(), {-1, -1});
    for (std::size_t c = 0; c < a.characters.size(); ++c) {
        const auto& ch = a.characters[c];
        EnrichedCharacter ec{int(c), ch.name, ch.box, {}};
        if (auto owner = owning_panel(ch.box, boxes)) {
            auto& panel = out.panels[slot[*owner]];
            char_slot[c] = {slot[*owner], int(panel.characters.size())};
            panel.characters.push_back(std::move(ec));
        } else {
            out.unassigned_characters.push_back(std::move(ec));
        }
    }

    std::vector<const DialogLink*> speaker(a.texts.size(), nullptr);
    for (const auto& l : a.dialog_links)
        if (!speaker[l.text_index]) speaker[l.text_index] = &l;

    for (std::size_t t = 0; t < a.texts.size(); ++t) {
        const auto& tx = a.texts[t];
        EnrichedText et{int(t), tx.content, tx.box};
        auto owner = owning_panel(tx.box, boxes);
        if (!owner) {
            out.unassigned_texts.push_back(std::move(et));
            continue;
        }
        auto& panel = out.panels[slot[*owner]];
        EnrichedCharacter* target = nullptr;
        if (speaker[t]) {
            for (auto& ec : panel.characters) {
                if (ec.name == speaker[t]->character) {
                    target = &ec;
                    break;
                }
            }
        }
        if (target) target->texts.push_back(std::move(et));
        else panel.texts.push_back(std::move(et));
    }
    return out;
}

std::string EnrichedPageXML::to_xml() const {
    xml::Writer w;
    w.open("page", {{"id", page_id}, {"width", std::to_string(width)}, {"height", std::to_string(height)}});
    auto write_character = [&](const EnrichedCharacter& c) {
        auto attrs = box_pairs(c.box);
        attrs.insert(attrs.begin(), {"name", c.name});
        if (c.texts.empty()) {
            w.leaf("character", attrs);
            return;
        }
        w.open("character", attrs);
        for (const auto& t : c.texts) w.leaf("text", box_pairs(t.box), t.content);
        w.close("character");
    };
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const auto& p = panels[i];
        auto attrs = box_pairs(p.box);
        attrs.insert(attrs.begin(), {"order", std::to_string(i)});
        if (p.characters.empty() && p.texts.empty()) {
            w.leaf("panel", attrs);
            continue;
        }
        w.open("panel", attrs);
        for (const auto& c : p.characters) write_character(c);
        for (const auto& t : p.texts) w.leaf("text", box_pairs(t.box), t.content);
        w.close("panel");
    }
    if (!unassigned_characters.empty() || !unassigned_texts.empty()) {
        w.open("unassigned", {});
        for (const auto& c : unassigned_characters) write_character(c);
        for (const auto& t : unassigned_texts) w.leaf("text", box_pairs(t.box), t.content);
        w.close("unassigned");
    }
    w.close("page");
    return w.str();
}

}  // namespace manga
