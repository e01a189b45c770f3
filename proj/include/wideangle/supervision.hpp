#pragma once

#include <utility>
#include <vector>

#include <json.hpp>

#include "wideangle/flow.hpp"
#include "wideangle/image.hpp"

namespace wideangle {

using Polyline = std::vector<Vec2>;

struct BoundingBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    Vec2 center() const { return {x + 0.5 * w, y + 0.5 * h}; }
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct FaceAnnotation {
    BoundingBox bbox;
    std::vector<Vec2> landmarks;
    std::size_t nose_index = 0;

    friend bool operator==(const FaceAnnotation&, const FaceAnnotation&) = default;
};

/// Salient lines and faces in pixel coordinates. Items are identified by
/// their position in the list.
struct AnnotationSet {
    std::vector<Polyline> lines;
    std::vector<FaceAnnotation> faces;

    /// Throws ValidationError on short polylines, too few landmarks, a nose
    /// index out of range or a non-positive bbox.
    void validate() const;

    /// Clamps every point into [0, w-1] x [0, h-1]; returns how many moved.
    int clamp_to(int width, int height);

    bool empty() const { return lines.empty() && faces.empty(); }
    friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

void to_json(nlohmann::json& j, const AnnotationSet& a);
void from_json(const nlohmann::json& j, AnnotationSet& a);

/// Max-combined axis-aligned Gaussians, one per face, centered on the bbox
/// with sigma = half the bbox extent and peak 1.
ImageBuffer face_heatmap(const std::vector<FaceAnnotation>& faces, int width, int height);

/// Heat of one face at a point (same Gaussian as face_heatmap).
double face_heat(const FaceAnnotation& face, Vec2 p);

/// n + 1 points equally spaced by arc length from the first to the last
/// vertex. Throws DegenerateLine on zero length.
std::vector<Vec2> sample_line(const Polyline& line, int n);

double polyline_length(const Polyline& line);

/// Edge targets at 1/2 and 1/4 resolution (each side at least 1 px).
struct EdgeTargets {
    ImageBuffer half;
    ImageBuffer quarter;
};
EdgeTargets lam_target(const ImageBuffer& img);

/// Alternative LAM target: annotation polylines drawn as 1-px anti-aliased strokes.
ImageBuffer rasterize_lines(const std::vector<Polyline>& lines, int width, int height);

/// Maps every annotated point through the forward map of a backward flow
/// (where each input point lands in warp(input, flow)). Bounding boxes become
/// the bounds of their four mapped corners.
AnnotationSet forward_map_annotations(const AnnotationSet& a, const FlowField& flow);

/// Uniform scaling of every coordinate (half-pixel-center convention).
AnnotationSet scale_annotations(const AnnotationSet& a, double sx, double sy);

}  // namespace wideangle
