#pragma once

#include "wideangle/flow.hpp"
#include "wideangle/image.hpp"

namespace wideangle {

/// Mean squared difference over all samples.
double l2(const ImageBuffer& a, const ImageBuffer& b);
double l2(const FlowField& a, const FlowField& b);

/// l2 between Sobel edge maps. Flows use the raw per-component gradient
/// magnitude (flow values are not confined to [0,1], so nothing is clamped).
double sobel_l2(const ImageBuffer& a, const ImageBuffer& b);
double sobel_l2(const FlowField& a, const FlowField& b);

/// Stage-1 loss: flow terms plus terms on the projected image.
double line_loss(const FlowField& pred_flow, const FlowField& gt_flow,
                 const ImageBuffer& pred_proj, const ImageBuffer& gt_proj);

/// Stage-2 loss: correction-flow terms plus terms on the final image.
double shape_loss(const FlowField& pred_flow, const FlowField& gt_flow,
                  const ImageBuffer& pred_out, const ImageBuffer& gt_out);

/// Plain l2 against the edge target.
double lam_loss(const ImageBuffer& pred_edges, const ImageBuffer& gt_edges);

/// Plain l2 against the face heatmap.
double fam_loss(const ImageBuffer& pred_heat, const ImageBuffer& gt_heat);

struct LossWeights {
    double lambda1 = 5.0;  // LAM
    double lambda2 = 5.0;  // FAM
    double lambda3 = 1.0;  // line
    double lambda4 = 1.0;  // shape

    void validate() const;
};

struct LossParts {
    double lam = 0.0;
    double fam = 0.0;
    double line = 0.0;
    double shape = 0.0;
};

double total_loss(const LossParts& parts, const LossWeights& weights = {});

}  // namespace wideangle
