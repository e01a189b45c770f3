#pragma once

#include <json.hpp>

#include "wideangle/flow.hpp"
#include "wideangle/image.hpp"

namespace wideangle {

/// Pinhole intrinsics plus Brown radial distortion r -> r(1 + k1 r^2 + k2 r^4 + k3 r^6).
/// width/height are the native raster the intrinsics refer to.
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    double k1 = 0.0;
    double k2 = 0.0;
    double k3 = 0.0;
    int width = 1;
    int height = 1;

    /// Throws ValidationError on bad intrinsics and NonInvertibleModel when the
    /// distortion is not monotone over the native raster.
    void validate() const;

    bool distortion_free() const { return k1 == 0.0 && k2 == 0.0 && k3 == 0.0; }

    /// Distortion factor 1 + k1 r^2 + k2 r^4 + k3 r^6 at squared normalized radius.
    double radial_factor(double r2) const { return 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3)); }

    friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

/// Intrinsics of a CameraModel re-expressed on an out_w x out_h raster
/// (half-pixel-center scaling).
struct Intrinsics {
    double fx;
    double fy;
    double cx;
    double cy;
};

Intrinsics scaled_intrinsics(const CameraModel& cam, int out_width, int out_height);

/// Throws NonInvertibleModel unless the radial map is monotone over the
/// normalized radius range of the given raster.
void check_monotone(const CameraModel& cam, int out_width, int out_height);

/// Backward flow from the rectilinear raster into the captured (distorted) image.
FlowField perspective_undistort_flow(const CameraModel& cam, int out_width, int out_height);

/// Backward flow from a stereographic raster into a rectilinear one. Uses the
/// isotropic focal (fx + fy) / 2. Throws DomainError if any pixel's view angle
/// reaches 90 degrees.
FlowField stereographic_flow(const CameraModel& cam, int out_width, int out_height);

/// F = w * stereo + (1 - w) * persp, pointwise.
FlowField blend_flows(const FlowField& persp, const FlowField& stereo, const ImageBuffer& weight);

void to_json(nlohmann::json& j, const CameraModel& cam);
void from_json(const nlohmann::json& j, CameraModel& cam);

}  // namespace wideangle
