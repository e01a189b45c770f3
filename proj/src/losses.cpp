#include "wideangle/losses.hpp"

#include <cmath>
#include <span>

#include "wideangle/errors.hpp"

namespace wideangle {

namespace {

double mean_squared(std::span<const float> a, std::span<const float> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

void require_same(const ImageBuffer& a, const ImageBuffer& b) {
    if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels()) {
        throw DimensionMismatch("loss operands differ in shape");
    }
}

void require_same(const FlowField& a, const FlowField& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw DimensionMismatch("loss operands differ in shape");
    }
}

}  // namespace

double l2(const ImageBuffer& a, const ImageBuffer& b) {
    require_same(a, b);
    return mean_squared(a.samples(), b.samples());
}

double l2(const FlowField& a, const FlowField& b) {
    require_same(a, b);
    return mean_squared(a.data(), b.data());
}

double sobel_l2(const ImageBuffer& a, const ImageBuffer& b) {
    require_same(a, b);
    return l2(sobel_edges(a), sobel_edges(b));
}

double sobel_l2(const FlowField& a, const FlowField& b) {
    require_same(a, b);
    double sum = 0.0;
    for (int c = 0; c < 2; ++c) {
        const auto ea = sobel_magnitude(a.component(c), a.width(), a.height());
        const auto eb = sobel_magnitude(b.component(c), b.width(), b.height());
        sum += mean_squared(ea, eb);
    }
    return sum / 2.0;
}

double line_loss(const FlowField& pred_flow, const FlowField& gt_flow,
                 const ImageBuffer& pred_proj, const ImageBuffer& gt_proj) {
    return l2(pred_flow, gt_flow) + sobel_l2(pred_flow, gt_flow) + l2(pred_proj, gt_proj) +
           sobel_l2(pred_proj, gt_proj);
}

double shape_loss(const FlowField& pred_flow, const FlowField& gt_flow,
                  const ImageBuffer& pred_out, const ImageBuffer& gt_out) {
    return l2(pred_flow, gt_flow) + sobel_l2(pred_flow, gt_flow) + l2(pred_out, gt_out) +
           sobel_l2(pred_out, gt_out);
}

double lam_loss(const ImageBuffer& pred_edges, const ImageBuffer& gt_edges) {
    return l2(pred_edges, gt_edges);
}

double fam_loss(const ImageBuffer& pred_heat, const ImageBuffer& gt_heat) {
    return l2(pred_heat, gt_heat);
}

void LossWeights::validate() const {
    for (double v : {lambda1, lambda2, lambda3, lambda4}) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ValidationError("loss weights must be finite and nonnegative");
        }
    }
}

double total_loss(const LossParts& parts, const LossWeights& weights) {
    weights.validate();
    return weights.lambda1 * parts.lam + weights.lambda2 * parts.fam +
           weights.lambda3 * parts.line + weights.lambda4 * parts.shape;
}

}  // namespace wideangle
