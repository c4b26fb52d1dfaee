#pragma once

#include "manga/annotation.hpp"
#include "manga/image.hpp"
#include "manga/panel_order.hpp"
#include "manga/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace manga {

struct CaptionResult {
    std::vector<std::string> panel_captions;  ///< reading order
    std::string story;
};

/// Multimodal captioning service: page image + enriched XML + prompt in,
/// per-panel captions and a page story out. Implementations report
/// transport problems (including timeouts) as TransportError.
class CaptioningClient {
public:
    virtual ~CaptioningClient() = default;
    virtual CaptionResult request(const Image& page, const std::string& enriched_xml, const std::string& prompt) = 0;
};

/// Offline client. Each panel's caption is its dialogue lines joined by a
/// space, or "a wordless panel" when it has none; the story joins all
/// captions. Depends only on the XML text, so it is pure.
class MockCaptioningClient final : public CaptioningClient {
public:
    CaptionResult request(const Image& page, const std::string& enriched_xml, const std::string& prompt) override;
};

inline constexpr const char* kWordlessCaption = "a wordless panel";

/// Instruction given to the captioning model.
std::string caption_prompt_template();

/// Calls the client, retrying TransportError up to `max_attempts` times, and
/// checks the answer: one non-empty caption per panel, else ProtocolError.
CaptionResult request_captions(CaptioningClient& client, const Image& page, const EnrichedPageXML& enriched,
                               int max_attempts = 3);

/// Token cell (r, c) covers pixels [c*stride, (c+1)*stride) x [r*stride, (r+1)*stride).
/// A cell is masked iff the area it shares with the union of the boxes
/// exceeds coverage_threshold * stride^2.
MaskGrid rasterize_bubble_mask(const std::vector<BBox>& bubble_boxes, int page_width, int page_height,
                               int token_stride = 16, double coverage_threshold = 0.5);

struct TrainingRecord {
    std::string page_id;
    int num_panels = 0;               ///< K real panels, first in every list
    std::vector<Image> panel_images;  ///< K_max full-page images
    std::vector<std::string> captions;
    std::vector<MaskGrid> intra_mask;  ///< per panel, token grid (true = excluded)
    std::vector<bool> inter_mask;      ///< true = padded panel
    std::vector<BBox> boxes;           ///< padded entries hold BBox::sentinel()
    int token_stride = 16;

    int k_max() const { return int(panel_images.size()); }
};

struct RecordOptions {
    int k_max = 8;
    int token_stride = 16;
    double coverage_threshold = 0.5;
};

TrainingRecord build_record(const Image& page_image, const PageAnnotation& annotation, const OrderResult& order,
                            const CaptionResult& captions, const std::vector<BBox>& bubble_boxes,
                            const RecordOptions& options);

/// Checks every TrainingRecord invariant; empty when valid.
std::vector<std::string> check_record(const TrainingRecord& r);

/// Line-delimited archive `records.jsonl` in `dir` with side-car PNGs under
/// `dir/panels/`; paths are relative to `dir`. Padded panels are stored as null.
void write_records(const std::filesystem::path& dir, const std::vector<TrainingRecord>& records);
std::vector<TrainingRecord> read_records(const std::filesystem::path& dir);

/// One line of the dataset manifest.
struct ManifestEntry {
    std::string page_id;
    std::string image_path;
    std::string xml_path;
    std::vector<std::string> captions;
    std::string story;
    std::vector<BBox> bubble_boxes;
    std::vector<int> order;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

void write_manifest(const std::filesystem::path& file, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file);

}  // namespace manga
