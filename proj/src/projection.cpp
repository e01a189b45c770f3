#include "wideangle/projection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wideangle/errors.hpp"

namespace wideangle {

void CameraModel::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw ValidationError("camera focal lengths must be positive");
    }
    if (width < 1 || height < 1) {
        throw ValidationError("camera raster must be at least 1x1");
    }
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
        throw ValidationError("camera principal point must lie inside the raster");
    }
    if (!std::isfinite(k1) || !std::isfinite(k2) || !std::isfinite(k3)) {
        throw ValidationError("camera distortion coefficients must be finite");
    }
    check_monotone(*this, width, height);
}

Intrinsics scaled_intrinsics(const CameraModel& cam, int out_width, int out_height) {
    const double sx = static_cast<double>(out_width) / cam.width;
    const double sy = static_cast<double>(out_height) / cam.height;
    return {cam.fx * sx, cam.fy * sy, (cam.cx + 0.5) * sx - 0.5, (cam.cy + 0.5) * sy - 0.5};
}

void check_monotone(const CameraModel& cam, int out_width, int out_height) {
    if (cam.distortion_free()) {
        return;
    }
    const Intrinsics in = scaled_intrinsics(cam, out_width, out_height);
    double r_max = 0.0;
    for (double x : {0.0, static_cast<double>(out_width - 1)}) {
        for (double y : {0.0, static_cast<double>(out_height - 1)}) {
            r_max = std::max(r_max, std::hypot((x - in.cx) / in.fx, (y - in.cy) / in.fy));
        }
    }
    constexpr int kSamples = 1024;
    for (int i = 0; i <= kSamples; ++i) {
        const double r = r_max * i / kSamples;
        const double r2 = r * r;
        const double slope = 1.0 + r2 * (3.0 * cam.k1 + r2 * (5.0 * cam.k2 + r2 * 7.0 * cam.k3));
        if (!(slope > 0.0)) {
            throw NonInvertibleModel("radial distortion is not monotone within the raster");
        }
    }
}

FlowField perspective_undistort_flow(const CameraModel& cam, int out_width, int out_height) {
    cam.validate();
    FlowField flow(out_width, out_height);
    if (cam.distortion_free()) {
        return flow;
    }
    check_monotone(cam, out_width, out_height);
    const Intrinsics in = scaled_intrinsics(cam, out_width, out_height);
    for (int y = 0; y < out_height; ++y) {
        for (int x = 0; x < out_width; ++x) {
            const double nx = (x - in.cx) / in.fx;
            const double ny = (y - in.cy) / in.fy;
            const double factor = cam.radial_factor(nx * nx + ny * ny);
            const double sx = in.fx * nx * factor + in.cx;
            const double sy = in.fy * ny * factor + in.cy;
            flow.set(x, y, {sx - x, sy - y});
        }
    }
    return flow;
}

FlowField stereographic_flow(const CameraModel& cam, int out_width, int out_height) {
    cam.validate();
    const Intrinsics in = scaled_intrinsics(cam, out_width, out_height);
    const double f = 0.5 * (in.fx + in.fy);
    FlowField flow(out_width, out_height);
    for (int y = 0; y < out_height; ++y) {
        for (int x = 0; x < out_width; ++x) {
            const double dx = x - in.cx;
            const double dy = y - in.cy;
            const double r_out = std::hypot(dx, dy);
            if (r_out == 0.0) {
                continue;
            }
            const double theta = 2.0 * std::atan(r_out / (2.0 * f));
            if (theta >= 0.5 * std::numbers::pi) {
                throw DomainError("stereographic view angle reaches 90 degrees inside the raster");
            }
            const double gain = f * std::tan(theta) / r_out - 1.0;
            flow.set(x, y, {dx * gain, dy * gain});
        }
    }
    return flow;
}

FlowField blend_flows(const FlowField& persp, const FlowField& stereo, const ImageBuffer& weight) {
    if (persp.width() != stereo.width() || persp.height() != stereo.height() ||
        weight.width() != persp.width() || weight.height() != persp.height()) {
        throw DimensionMismatch("blend_flows: raster sizes differ");
    }
    if (weight.channels() != 1) {
        throw ValidationError("blend weight must be single-channel");
    }
    FlowField out(persp.width(), persp.height());
    for (int y = 0; y < persp.height(); ++y) {
        for (int x = 0; x < persp.width(); ++x) {
            const double w = weight.at(x, y);
            const Vec2 a = persp.at(x, y);
            const Vec2 b = stereo.at(x, y);
            if (w == 0.0) {
                out.set(x, y, a);
            } else if (w == 1.0) {
                out.set(x, y, b);
            } else {
                out.set(x, y, {w * b.x + (1.0 - w) * a.x, w * b.y + (1.0 - w) * a.y});
            }
        }
    }
    return out;
}

void to_json(nlohmann::json& j, const CameraModel& cam) {
    j = nlohmann::json{{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx},
                       {"cy", cam.cy}, {"k1", cam.k1}, {"k2", cam.k2},
                       {"k3", cam.k3}, {"width", cam.width}, {"height", cam.height}};
}

void from_json(const nlohmann::json& j, CameraModel& cam) {
    try {
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        cam.k1 = j.value("k1", 0.0);
        cam.k2 = j.value("k2", 0.0);
        cam.k3 = j.value("k3", 0.0);
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("camera JSON: ") + e.what());
    }
}

}  // namespace wideangle
