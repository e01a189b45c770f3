#include "wideangle/supervision.hpp"

#include <algorithm>
#include <cmath>

#include "wideangle/errors.hpp"

namespace wideangle {

void AnnotationSet::validate() const {
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].size() < 2) {
            throw ValidationError("line " + std::to_string(i) + " has fewer than 2 points");
        }
    }
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const FaceAnnotation& f = faces[i];
        if (!(f.bbox.w > 0.0) || !(f.bbox.h > 0.0)) {
            throw ValidationError("face " + std::to_string(i) + " has an empty bbox");
        }
        if (f.landmarks.size() < 2) {
            throw ValidationError("face " + std::to_string(i) + " has fewer than 2 landmarks");
        }
        if (f.nose_index >= f.landmarks.size()) {
            throw ValidationError("face " + std::to_string(i) + " nose_index out of range");
        }
    }
}

int AnnotationSet::clamp_to(int width, int height) {
    int moved = 0;
    auto clamp_point = [&](Vec2& p) {
        const Vec2 c{std::clamp(p.x, 0.0, width - 1.0), std::clamp(p.y, 0.0, height - 1.0)};
        if (!(c == p)) {
            ++moved;
            p = c;
        }
    };
    for (Polyline& line : lines) {
        std::for_each(line.begin(), line.end(), clamp_point);
    }
    for (FaceAnnotation& face : faces) {
        std::for_each(face.landmarks.begin(), face.landmarks.end(), clamp_point);
    }
    return moved;
}

namespace {

Vec2 point_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) {
        throw ValidationError("point must be an [x, y] array");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

nlohmann::json point_to_json(Vec2 p) { return nlohmann::json::array({p.x, p.y}); }

}  // namespace

void to_json(nlohmann::json& j, const AnnotationSet& a) {
    j = nlohmann::json::object();
    j["lines"] = nlohmann::json::array();
    for (const Polyline& line : a.lines) {
        nlohmann::json pts = nlohmann::json::array();
        for (Vec2 p : line) {
            pts.push_back(point_to_json(p));
        }
        j["lines"].push_back(std::move(pts));
    }
    j["faces"] = nlohmann::json::array();
    for (const FaceAnnotation& f : a.faces) {
        nlohmann::json lm = nlohmann::json::array();
        for (Vec2 p : f.landmarks) {
            lm.push_back(point_to_json(p));
        }
        j["faces"].push_back({{"bbox", {f.bbox.x, f.bbox.y, f.bbox.w, f.bbox.h}},
                              {"landmarks", std::move(lm)},
                              {"nose_index", f.nose_index}});
    }
}

void from_json(const nlohmann::json& j, AnnotationSet& a) {
    try {
        a = AnnotationSet{};
        for (const auto& line : j.value("lines", nlohmann::json::array())) {
            Polyline pts;
            for (const auto& p : line) {
                pts.push_back(point_from_json(p));
            }
            a.lines.push_back(std::move(pts));
        }
        for (const auto& f : j.value("faces", nlohmann::json::array())) {
            FaceAnnotation face;
            const auto& box = f.at("bbox");
            if (!box.is_array() || box.size() != 4) {
                throw ValidationError("bbox must be [x, y, w, h]");
            }
            face.bbox = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
                         box[3].get<double>()};
            for (const auto& p : f.at("landmarks")) {
                face.landmarks.push_back(point_from_json(p));
            }
            face.nose_index = f.at("nose_index").get<std::size_t>();
            a.faces.push_back(std::move(face));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("annotation JSON: ") + e.what());
    }
    a.validate();
}

double face_heat(const FaceAnnotation& face, Vec2 p) {
    const Vec2 c = face.bbox.center();
    const double sx = 0.5 * face.bbox.w;
    const double sy = 0.5 * face.bbox.h;
    const double u = (p.x - c.x) / sx;
    const double v = (p.y - c.y) / sy;
    return std::exp(-0.5 * (u * u + v * v));
}

ImageBuffer face_heatmap(const std::vector<FaceAnnotation>& faces, int width, int height) {
    ImageBuffer heat(width, height, 1);
    for (const FaceAnnotation& face : faces) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const float v = static_cast<float>(face_heat(face, {double(x), double(y)}));
                heat.at(x, y) = std::max(heat.at(x, y), v);
            }
        }
    }
    return heat;
}

double polyline_length(const Polyline& line) {
    double total = 0.0;
    for (std::size_t i = 1; i < line.size(); ++i) {
        total += std::hypot(line[i].x - line[i - 1].x, line[i].y - line[i - 1].y);
    }
    return total;
}

std::vector<Vec2> sample_line(const Polyline& line, int n) {
    if (n < 1) {
        throw ValidationError("sample_line needs n >= 1");
    }
    const double total = polyline_length(line);
    if (line.size() < 2 || !(total > 0.0)) {
        throw DegenerateLine("polyline has zero arc length");
    }
    std::vector<Vec2> out;
    out.reserve(n + 1);
    out.push_back(line.front());
    std::size_t seg = 1;
    double walked = 0.0;  // arc length at the start of segment `seg`
    for (int i = 1; i < n; ++i) {
        const double s = total * i / n;
        double len = std::hypot(line[seg].x - line[seg - 1].x, line[seg].y - line[seg - 1].y);
        while (seg + 1 < line.size() && walked + len < s) {
            walked += len;
            ++seg;
            len = std::hypot(line[seg].x - line[seg - 1].x, line[seg].y - line[seg - 1].y);
        }
        const double t = len > 0.0 ? std::clamp((s - walked) / len, 0.0, 1.0) : 0.0;
        out.push_back(line[seg - 1] + t * (line[seg] - line[seg - 1]));
    }
    out.push_back(line.back());
    return out;
}

EdgeTargets lam_target(const ImageBuffer& img) {
    const int hw = std::max(1, img.width() / 2);
    const int hh = std::max(1, img.height() / 2);
    const int qw = std::max(1, img.width() / 4);
    const int qh = std::max(1, img.height() / 4);
    return {sobel_edges(resize_bilinear(img, hw, hh)), sobel_edges(resize_bilinear(img, qw, qh))};
}

ImageBuffer rasterize_lines(const std::vector<Polyline>& lines, int width, int height) {
    ImageBuffer out(width, height, 1);
    for (const Polyline& line : lines) {
        for (std::size_t i = 1; i < line.size(); ++i) {
            const Vec2 a = line[i - 1];
            const Vec2 b = line[i];
            const double len = std::hypot(b.x - a.x, b.y - a.y);
            const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x))) - 1);
            const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x))) + 1);
            const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y))) - 1);
            const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y))) + 1);
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    double t = 0.0;
                    if (len > 0.0) {
                        t = std::clamp(((x - a.x) * (b.x - a.x) + (y - a.y) * (b.y - a.y)) /
                                           (len * len),
                                       0.0, 1.0);
                    }
                    const Vec2 c = a + t * (b - a);
                    const double d = std::hypot(x - c.x, y - c.y);
                    const float v = static_cast<float>(std::max(0.0, 1.0 - d));
                    out.at(x, y) = std::max(out.at(x, y), v);
                }
            }
        }
    }
    return out;
}

AnnotationSet forward_map_annotations(const AnnotationSet& a, const FlowField& flow) {
    AnnotationSet out = a;
    for (Polyline& line : out.lines) {
        for (Vec2& p : line) {
            p = forward_map(flow, p);
        }
    }
    for (FaceAnnotation& face : out.faces) {
        for (Vec2& p : face.landmarks) {
            p = forward_map(flow, p);
        }
        const BoundingBox& b = face.bbox;
        double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
        for (Vec2 corner : {Vec2{b.x, b.y}, Vec2{b.x + b.w, b.y}, Vec2{b.x, b.y + b.h},
                            Vec2{b.x + b.w, b.y + b.h}}) {
            const Vec2 m = forward_map(flow, corner);
            lo_x = std::min(lo_x, m.x);
            lo_y = std::min(lo_y, m.y);
            hi_x = std::max(hi_x, m.x);
            hi_y = std::max(hi_y, m.y);
        }
        face.bbox = {lo_x, lo_y, hi_x - lo_x, hi_y - lo_y};
    }
    return out;
}

AnnotationSet scale_annotations(const AnnotationSet& a, double sx, double sy) {
    auto scale = [&](Vec2 p) { return Vec2{(p.x + 0.5) * sx - 0.5, (p.y + 0.5) * sy - 0.5}; };
    AnnotationSet out = a;
    for (Polyline& line : out.lines) {
        for (Vec2& p : line) {
            p = scale(p);
        }
    }
    for (FaceAnnotation& face : out.faces) {
        for (Vec2& p : face.landmarks) {
            p = scale(p);
        }
        const Vec2 tl = scale({face.bbox.x, face.bbox.y});
        face.bbox = {tl.x, tl.y, face.bbox.w * sx, face.bbox.h * sy};
    }
    return out;
}

}  // namespace wideangle
