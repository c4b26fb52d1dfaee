#pragma once

#include "manga/bbox.hpp"
#include "manga/error.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace manga {

struct PanelAnnotation {
    BBox box;
    std::optional<int> order_index;
    std::optional<std::string> caption;

    friend bool operator==(const PanelAnnotation&, const PanelAnnotation&) = default;
};

struct NamedBox {
    std::string name;
    BBox box;
    friend bool operator==(const NamedBox&, const NamedBox&) = default;
};

struct TextAnnotation {
    std::string content;
    BBox box;
    friend bool operator==(const TextAnnotation&, const TextAnnotation&) = default;
};

/// Dialogue-speaker pair: texts[text_index] is spoken by `character`.
struct DialogLink {
    int text_index = 0;
    std::string character;
    friend bool operator==(const DialogLink&, const DialogLink&) = default;
};

/// One manga page as annotated in the flat Manga109 style.
struct PageAnnotation {
    std::string page_id;
    int width = 0;
    int height = 0;
    std::vector<PanelAnnotation> panels;
    std::vector<NamedBox> characters;
    std::vector<NamedBox> faces;
    std::vector<TextAnnotation> texts;
    std::vector<DialogLink> dialog_links;

    std::vector<BBox> panel_boxes() const;

    friend bool operator==(const PageAnnotation&, const PageAnnotation&) = default;
};

/// Every violated invariant, each with a distinct code. Empty means valid.
std::vector<Violation> validate(const PageAnnotation& a);

/// Parses the flat page schema. Unknown elements are skipped and reported
/// through `warnings` when given. Throws XmlParseError or ValidationError.
PageAnnotation parse_page_annotation(std::string_view xml_text, std::vector<std::string>* warnings = nullptr);

/// Throws ValidationError when `a` is invalid.
std::string serialize_page_annotation(const PageAnnotation& a);

struct EnrichedText {
    int source_index = 0;  ///< index into PageAnnotation::texts
    std::string content;
    BBox box;
    friend bool operator==(const EnrichedText&, const EnrichedText&) = default;
};

struct EnrichedCharacter {
    int source_index = 0;  ///< index into PageAnnotation::characters
    std::string name;
    BBox box;
    std::vector<EnrichedText> texts;
    friend bool operator==(const EnrichedCharacter&, const EnrichedCharacter&) = default;
};

struct EnrichedPanel {
    int source_index = 0;  ///< index into PageAnnotation::panels
    BBox box;
    std::vector<EnrichedCharacter> characters;
    std::vector<EnrichedText> texts;  ///< dialogue without an in-panel speaker
    friend bool operator==(const EnrichedPanel&, const EnrichedPanel&) = default;
};

/// Panel -> character -> text tree with panels in reading order. Items whose
/// center falls in no panel land in the unassigned lists.
struct EnrichedPageXML {
    std::string page_id;
    int width = 0;
    int height = 0;
    std::vector<EnrichedPanel> panels;
    std::vector<EnrichedCharacter> unassigned_characters;
    std::vector<EnrichedText> unassigned_texts;

    std::string to_xml() const;
};

/// Index of the panel that owns a box: center containment, ties broken by
/// the largest intersection area, then by lowest index.
std::optional<int> owning_panel(const BBox& item, const std::vector<BBox>& panels);

EnrichedPageXML build_enriched_xml(const PageAnnotation& a, const std::vector<int>& order);

bool is_permutation_of_range(const std::vector<int>& order, std::size_t n);

}  // namespace manga
