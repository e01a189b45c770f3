#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wideangle/supervision.hpp"

namespace wideangle {

/// Line straightness score (x100). Reference slope is taken between the
/// reference endpoints; result segment slopes are compared against it by
/// absolute deviation. When the reference is closer to vertical, x and y are
/// swapped for both point sets. 100 means every segment matches; unbounded below.
///
/// Throws DegenerateReference if the reference endpoints coincide and
/// DimensionMismatch if the point counts differ or are below 2.
double line_acc(const std::vector<Vec2>& result, const std::vector<Vec2>& reference);

/// Face congruence score (x100): mean normalized cosine between corresponding
/// nose-to-landmark vectors. Lies in [-100, 100]. Throws ZeroVector if a
/// landmark coincides with the nose.
double shape_acc(const std::vector<Vec2>& result, const std::vector<Vec2>& reference,
                 std::size_t nose_index);

struct ItemScore {
    std::size_t id;
    double score;
};

struct EvalReport {
    std::optional<double> line_acc;
    std::optional<double> shape_acc;
    std::vector<ItemScore> per_line;
    std::vector<ItemScore> per_face;

    std::size_t line_count() const { return per_line.size(); }
    std::size_t face_count() const { return per_face.size(); }
};

/// Scores result annotations against reference annotations item by item.
/// Lines are resampled with `samples` segments. Throws IdMismatch when the
/// two sets do not describe the same items.
EvalReport evaluate(const AnnotationSet& result, const AnnotationSet& reference, int samples = 16);

nlohmann::json report_to_json(const EvalReport& report);
std::string report_to_text(const EvalReport& report);

}  // namespace wideangle
