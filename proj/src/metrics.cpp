#include "wideangle/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "wideangle/errors.hpp"

namespace wideangle {

double line_acc(const std::vector<Vec2>& result, const std::vector<Vec2>& reference) {
    if (result.size() != reference.size() || reference.size() < 2) {
        throw DimensionMismatch("line_acc needs equal sample counts of at least 2");
    }
    const Vec2 g0 = reference.front();
    const Vec2 gn = reference.back();
    double ref_dx = g0.x - gn.x;
    double ref_dy = g0.y - gn.y;
    if (ref_dx == 0.0 && ref_dy == 0.0) {
        throw DegenerateReference("reference line endpoints coincide");
    }
    const bool swap = std::abs(ref_dx) < std::abs(ref_dy);
    if (swap) {
        std::swap(ref_dx, ref_dy);
    }
    const double ref_slope = ref_dy / ref_dx;

    const std::size_t n = result.size() - 1;
    double deviation = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        double dx = result[i].x - result[i - 1].x;
        double dy = result[i].y - result[i - 1].y;
        if (swap) {
            std::swap(dx, dy);
        }
        if (dx == 0.0) {
            if (dy == 0.0) {
                continue;  // coincident samples carry no direction
            }
            throw DegenerateLine("result segment is perpendicular to the reference frame");
        }
        deviation += std::abs(dy / dx - ref_slope);
    }
    return 100.0 * (1.0 - deviation / static_cast<double>(n));
}

double shape_acc(const std::vector<Vec2>& result, const std::vector<Vec2>& reference,
                 std::size_t nose_index) {
    if (result.size() != reference.size() || reference.size() < 2) {
        throw DimensionMismatch("shape_acc needs equal landmark counts of at least 2");
    }
    if (nose_index >= reference.size()) {
        throw ValidationError("nose_index out of range");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        if (i == nose_index) {
            continue;
        }
        const Vec2 g = reference[i] - reference[nose_index];
        const Vec2 d = result[i] - result[nose_index];
        const double ng = std::hypot(g.x, g.y);
        const double nd = std::hypot(d.x, d.y);
        if (ng == 0.0 || nd == 0.0) {
            throw ZeroVector("landmark " + std::to_string(i) + " coincides with the nose");
        }
        sum += (g.x * d.x + g.y * d.y) / (ng * nd);
        ++count;
    }
    return 100.0 * sum / static_cast<double>(count);
}

EvalReport evaluate(const AnnotationSet& result, const AnnotationSet& reference, int samples) {
    if (result.lines.size() != reference.lines.size()) {
        throw IdMismatch("result has " + std::to_string(result.lines.size()) +
                         " lines, reference has " + std::to_string(reference.lines.size()));
    }
    if (result.faces.size() != reference.faces.size()) {
        throw IdMismatch("result has " + std::to_string(result.faces.size()) +
                         " faces, reference has " + std::to_string(reference.faces.size()));
    }
    EvalReport report;
    for (std::size_t i = 0; i < reference.lines.size(); ++i) {
        const auto ref = sample_line(reference.lines[i], samples);
        const auto res = sample_line(result.lines[i], samples);
        report.per_line.push_back({i, line_acc(res, ref)});
    }
    for (std::size_t i = 0; i < reference.faces.size(); ++i) {
        const FaceAnnotation& ref = reference.faces[i];
        const FaceAnnotation& res = result.faces[i];
        if (ref.landmarks.size() != res.landmarks.size() || ref.nose_index != res.nose_index) {
            throw IdMismatch("face " + std::to_string(i) + " landmark layout differs");
        }
        report.per_face.push_back({i, shape_acc(res.landmarks, ref.landmarks, ref.nose_index)});
    }
    auto mean = [](const std::vector<ItemScore>& items) -> std::optional<double> {
        if (items.empty()) {
            return std::nullopt;
        }
        double sum = 0.0;
        for (const ItemScore& s : items) {
            sum += s.score;
        }
        return sum / static_cast<double>(items.size());
    };
    report.line_acc = mean(report.per_line);
    report.shape_acc = mean(report.per_face);
    return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["line_acc"] = report.line_acc ? nlohmann::json(*report.line_acc) : nlohmann::json(nullptr);
    j["shape_acc"] =
        report.shape_acc ? nlohmann::json(*report.shape_acc) : nlohmann::json(nullptr);
    j["per_line"] = nlohmann::json::array();
    for (const ItemScore& s : report.per_line) {
        j["per_line"].push_back({{"id", s.id}, {"score", s.score}});
    }
    j["per_face"] = nlohmann::json::array();
    for (const ItemScore& s : report.per_face) {
        j["per_face"].push_back({{"id", s.id}, {"score", s.score}});
    }
    j["counts"] = {{"lines", report.line_count()}, {"faces", report.face_count()}};
    return j;
}

std::string report_to_text(const EvalReport& report) {
    auto fmt = [](std::optional<double> v) {
        if (!v) {
            return std::string("n/a");
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", *v);
        return std::string(buf);
    };
    std::string out;
    char line[96];
    std::snprintf(line, sizeof line, "%-10s %6s %12s\n", "metric", "count", "score");
    out += line;
    std::snprintf(line, sizeof line, "%-10s %6zu %12s\n", "LineAcc", report.line_count(),
                  fmt(report.line_acc).c_str());
    out += line;
    std::snprintf(line, sizeof line, "%-10s %6zu %12s\n", "ShapeAcc", report.face_count(),
                  fmt(report.shape_acc).c_str());
    out += line;
    for (const ItemScore& s : report.per_line) {
        std::snprintf(line, sizeof line, "  line %-4zu %17s\n", s.id, fmt(s.score).c_str());
        out += line;
    }
    for (const ItemScore& s : report.per_face) {
        std::snprintf(line, sizeof line, "  face %-4zu %17s\n", s.id, fmt(s.score).c_str());
        out += line;
    }
    return out;
}

}  // namespace wideangle
