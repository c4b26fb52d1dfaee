#include "manga/dataset.hpp"

#include "manga/panelization.hpp"
#include "manga/script_splitter.hpp"
#include "manga/xml.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace manga {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void collect_texts(const xml::Node& n, std::vector<std::string>& out) {
    for (const auto& c : n.children) {
        if (c.name == "text") out.push_back(c.text);
        else collect_texts(c, out);
    }
}

json box_json(const BBox& b) { return json::array({b.xmin, b.ymin, b.xmax, b.ymax}); }

BBox box_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw DataError("box must be [xmin, ymin, xmax, ymax]");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

// Exact area of (union of boxes) within `cell`, by coordinate compression.
std::int64_t covered_area(const std::vector<BBox>& boxes, const BBox& cell) {
    std::vector<BBox> clipped;
    for (const auto& b : boxes) {
        BBox c = intersect(b, cell);
        if (c.valid()) clipped.push_back(c);
    }
    if (clipped.empty()) return 0;
    std::vector<int> xs, ys;
    for (const auto& c : clipped) {
        xs.insert(xs.end(), {c.xmin, c.xmax});
        ys.insert(ys.end(), {c.ymin, c.ymax});
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    std::int64_t area = 0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
        for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
            const BBox e{xs[i], ys[j], xs[i + 1], ys[j + 1]};
            for (const auto& c : clipped)
                if (c.xmin <= e.xmin && c.xmax >= e.xmax && c.ymin <= e.ymin && c.ymax >= e.ymax) {
                    area += e.area();
                    break;
                }
        }
    return area;
}

std::string mask_row_string(const MaskGrid& m, Eigen::Index r) {
    std::string s;
    for (Eigen::Index c = 0; c < m.cols(); ++c) s += m(r, c) ? '1' : '0';
    return s;
}

}  // namespace

std::string caption_prompt_template() {
    return "You are given a manga page and an XML file describing it. The XML lists the panels in reading order; "
           "each panel contains the characters that appear in it, and each character contains the lines of "
           "dialogue they speak. For every panel, write one caption describing what happens in that panel, "
           "using the dialogue and the image. Then summarize the story of the whole page. Return exactly one "
           "caption per panel, in the same order as the XML.";
}

CaptionResult MockCaptioningClient::request(const Image&, const std::string& enriched_xml, const std::string&) {
    const xml::Node root = xml::parse(enriched_xml);
    CaptionResult r;
    for (const auto& panel : root.children) {
        if (panel.name != "panel") continue;
        std::vector<std::string> lines;
        collect_texts(panel, lines);
        std::string caption;
        for (const auto& l : lines) {
            if (l.empty()) continue;
            if (!caption.empty()) caption += ' ';
            caption += l;
        }
        r.panel_captions.push_back(caption.empty() ? std::string(kWordlessCaption) : caption);
    }
    for (const auto& c : r.panel_captions) {
        if (!r.story.empty()) r.story += ' ';
        r.story += c;
    }
    return r;
}

CaptionResult request_captions(CaptioningClient& client, const Image& page, const EnrichedPageXML& enriched,
                               int max_attempts) {
    const std::string xml_text = enriched.to_xml();
    const std::string prompt = caption_prompt_template();
    for (int attempt = 1;; ++attempt) {
        try {
            CaptionResult r = client.request(page, xml_text, prompt);
            if (r.panel_captions.size() != enriched.panels.size())
                throw ProtocolError("captioning client returned " + std::to_string(r.panel_captions.size()) +
                                    " captions for " + std::to_string(enriched.panels.size()) + " panels on page '" +
                                    enriched.page_id + "'");
            for (std::size_t i = 0; i < r.panel_captions.size(); ++i)
                if (r.panel_captions[i].empty())
                    throw ProtocolError("captioning client returned an empty caption for panel " + std::to_string(i));
            return r;
        } catch (const TransportError&) {
            if (attempt >= max_attempts) throw;
        }
    }
}

MaskGrid rasterize_bubble_mask(const std::vector<BBox>& bubble_boxes, int page_width, int page_height,
                               int token_stride, double coverage_threshold) {
    if (token_stride <= 0 || page_width % token_stride || page_height % token_stride)
        throw ConfigError("token stride " + std::to_string(token_stride) + " does not divide the " +
                          std::to_string(page_width) + "x" + std::to_string(page_height) + " page");
    const int rows = page_height / token_stride, cols = page_width / token_stride;
    MaskGrid m = MaskGrid::Constant(rows, cols, false);
    if (bubble_boxes.empty()) return m;
    const double limit = coverage_threshold * double(token_stride) * double(token_stride);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const BBox cell{c * token_stride, r * token_stride, (c + 1) * token_stride, (r + 1) * token_stride};
            m(r, c) = double(covered_area(bubble_boxes, cell)) > limit;
        }
    return m;
}

TrainingRecord build_record(const Image& page_image, const PageAnnotation& annotation, const OrderResult& order,
                            const CaptionResult& captions, const std::vector<BBox>& bubble_boxes,
                            const RecordOptions& options) {
    const int K = int(annotation.panels.size());
    if (K == 0) throw DataError("page '" + annotation.page_id + "' has no panels");
    if (K > options.k_max)
        throw DataError("page '" + annotation.page_id + "' has " + std::to_string(K) + " panels, more than K_max=" +
                        std::to_string(options.k_max));
    if (!is_permutation_of_range(order.permutation, std::size_t(K)))
        throw DataError("panel order for page '" + annotation.page_id + "' is not a permutation");
    if (int(captions.panel_captions.size()) != K)
        throw DataError("page '" + annotation.page_id + "': " + std::to_string(captions.panel_captions.size()) +
                        " captions for " + std::to_string(K) + " panels");
    if (page_image.width() != annotation.width || page_image.height() != annotation.height)
        throw DataError("page '" + annotation.page_id + "': image size differs from the annotation");

    TrainingRecord rec;
    rec.page_id = annotation.page_id;
    rec.num_panels = K;
    rec.token_stride = options.token_stride;
    for (int i = 0; i < K; ++i) rec.boxes.push_back(annotation.panels[std::size_t(order.permutation[std::size_t(i)])].box);
    rec.panel_images = split_page(page_image, rec.boxes).images;
    rec.captions = captions.panel_captions;

    for (const auto& panel_box : rec.boxes) {
        std::vector<BBox> clipped;
        for (const auto& b : bubble_boxes) {
            BBox c = intersect(b, panel_box);
            if (c.valid()) clipped.push_back(c);
        }
        rec.intra_mask.push_back(rasterize_bubble_mask(clipped, page_image.width(), page_image.height(),
                                                       options.token_stride, options.coverage_threshold));
    }
    rec.inter_mask.assign(std::size_t(K), false);

    const MaskGrid empty_mask = MaskGrid::Constant(page_image.height() / options.token_stride,
                                                   page_image.width() / options.token_stride, false);
    for (int i = K; i < options.k_max; ++i) {
        rec.panel_images.emplace_back(page_image.height(), page_image.width(), 1.0f);
        rec.captions.emplace_back(kEmptyCaption);
        rec.intra_mask.push_back(empty_mask);
        rec.inter_mask.push_back(true);
        rec.boxes.push_back(BBox::sentinel());
    }
    return rec;
}

std::vector<std::string> check_record(const TrainingRecord& r) {
    std::vector<std::string> out;
    const auto kmax = std::size_t(r.k_max());
    if (r.captions.size() != kmax || r.intra_mask.size() != kmax || r.inter_mask.size() != kmax ||
        r.boxes.size() != kmax) {
        out.push_back("field lengths differ from K_max");
        return out;
    }
    if (r.num_panels < 1 || r.num_panels > r.k_max()) out.push_back("real panel count outside [1, K_max]");
    for (std::size_t i = 0; i < kmax; ++i) {
        const bool pad = int(i) >= r.num_panels;
        if (r.inter_mask[i] != pad) out.push_back("inter mask disagrees with padding at " + std::to_string(i));
        if (pad) {
            for (const auto& c : r.panel_images[i].channels)
                if (!(c == 1.0f).all()) {
                    out.push_back("padded panel " + std::to_string(i) + " is not all ones");
                    break;
                }
            if (r.captions[i] != kEmptyCaption) out.push_back("padded caption " + std::to_string(i) + " is not EMPTY");
            if (r.intra_mask[i].any()) out.push_back("padded panel " + std::to_string(i) + " has an intra mask");
            if (!r.boxes[i].is_sentinel()) out.push_back("padded box " + std::to_string(i) + " is not the sentinel");
        } else if (r.captions[i].empty()) {
            out.push_back("caption " + std::to_string(i) + " is empty");
        }
    }
    return out;
}

void write_records(const fs::path& dir, const std::vector<TrainingRecord>& records) {
    fs::create_directories(dir / "panels");
    std::ofstream out(dir / "records.jsonl");
    if (!out) throw RuntimeError("cannot write " + (dir / "records.jsonl").string());
    for (const auto& r : records) {
        json j;
        j["page_id"] = r.page_id;
        j["num_panels"] = r.num_panels;
        j["width"] = r.panel_images.front().width();
        j["height"] = r.panel_images.front().height();
        j["token_stride"] = r.token_stride;
        j["captions"] = r.captions;
        j["inter_mask"] = r.inter_mask;
        j["boxes"] = json::array();
        j["intra_mask"] = json::array();
        j["panel_images"] = json::array();
        for (int i = 0; i < r.k_max(); ++i) {
            j["boxes"].push_back(box_json(r.boxes[std::size_t(i)]));
            json rows = json::array();
            for (Eigen::Index y = 0; y < r.intra_mask[std::size_t(i)].rows(); ++y)
                rows.push_back(mask_row_string(r.intra_mask[std::size_t(i)], y));
            j["intra_mask"].push_back(rows);
            if (i < r.num_panels) {
                const std::string rel = "panels/" + r.page_id + "_p" + std::to_string(i) + ".png";
                write_png(r.panel_images[std::size_t(i)], dir / rel);
                j["panel_images"].push_back(rel);
            } else {
                j["panel_images"].push_back(nullptr);
            }
        }
        out << j.dump() << '\n';
    }
}

std::vector<TrainingRecord> read_records(const fs::path& dir) {
    std::ifstream in(dir / "records.jsonl");
    if (!in) throw DataError("cannot open " + (dir / "records.jsonl").string());
    std::vector<TrainingRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            TrainingRecord r;
            r.page_id = j.at("page_id").get<std::string>();
            r.num_panels = j.at("num_panels").get<int>();
            r.token_stride = j.at("token_stride").get<int>();
            const int w = j.at("width").get<int>(), h = j.at("height").get<int>();
            r.captions = j.at("captions").get<std::vector<std::string>>();
            r.inter_mask = j.at("inter_mask").get<std::vector<bool>>();
            for (const auto& b : j.at("boxes")) r.boxes.push_back(box_from_json(b));
            for (const auto& rows : j.at("intra_mask")) {
                const auto rs = rows.get<std::vector<std::string>>();
                MaskGrid m(Eigen::Index(rs.size()), rs.empty() ? 0 : Eigen::Index(rs[0].size()));
                for (std::size_t y = 0; y < rs.size(); ++y) {
                    if (Eigen::Index(rs[y].size()) != m.cols()) throw DataError("ragged intra mask");
                    for (std::size_t x = 0; x < rs[y].size(); ++x) m(Eigen::Index(y), Eigen::Index(x)) = rs[y][x] == '1';
                }
                r.intra_mask.push_back(std::move(m));
            }
            for (const auto& p : j.at("panel_images")) {
                if (p.is_null()) r.panel_images.emplace_back(h, w, 1.0f);
                else r.panel_images.push_back(read_png(dir / p.get<std::string>()));
            }
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw DataError((dir / "records.jsonl").string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_manifest(const fs::path& file, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write " + file.string());
    for (const auto& e : entries) {
        json j;
        j["page_id"] = e.page_id;
        j["image_path"] = e.image_path;
        j["xml_path"] = e.xml_path;
        j["captions"] = e.captions;
        j["story"] = e.story;
        j["bubble_boxes"] = json::array();
        for (const auto& b : e.bubble_boxes) j["bubble_boxes"].push_back(box_json(b));
        j["order"] = e.order;
        out << j.dump() << '\n';
    }
}

std::vector<ManifestEntry> read_manifest(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    std::vector<ManifestEntry> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            ManifestEntry e;
            e.page_id = j.at("page_id").get<std::string>();
            e.image_path = j.at("image_path").get<std::string>();
            e.xml_path = j.at("xml_path").get<std::string>();
            e.captions = j.at("captions").get<std::vector<std::string>>();
            e.story = j.at("story").get<std::string>();
            for (const auto& b : j.at("bubble_boxes")) e.bubble_boxes.push_back(box_from_json(b));
            e.order = j.at("order").get<std::vector<int>>();
            out.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw DataError(file.string() + ":" + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return out;
}

}  // namespace manga
