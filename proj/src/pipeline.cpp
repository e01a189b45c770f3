#include "wideangle/pipeline.hpp"

#include <algorithm>

namespace wideangle {

PerspectiveStage::PerspectiveStage(CameraModel cam) : cam_(cam) { cam_.validate(); }

StageOutput PerspectiveStage::run(const ImageBuffer& input, const TransitionPayload*) const {
    FlowField flow = perspective_undistort_flow(cam_, input.width(), input.height());
    ImageBuffer projected = warp(input, flow);
    std::vector<ImageBuffer> aux{sobel_edges(projected)};
    return {std::move(flow), std::move(projected), std::move(aux)};
}

MeshCorrectionStage::MeshCorrectionStage(CameraModel cam, AnnotationSet annotations,
                                         MeshStageParams params)
    : cam_(cam), annotations_(std::move(annotations)), params_(params) {
    cam_.validate();
    annotations_.validate();
}

AnnotationSet MeshCorrectionStage::project_annotations(int width, int height,
                                                       const TransitionPayload* t) const {
    AnnotationSet a = annotations_;
    if (t != nullptr && t->source_width > 0 && t->source_height > 0) {
        a = scale_annotations(a, static_cast<double>(width) / t->source_width,
                              static_cast<double>(height) / t->source_height);
    }
    if (t != nullptr && !t->flow.data().empty()) {
        a = forward_map_annotations(a, t->flow);
    }
    return a;
}

StageOutput MeshCorrectionStage::run(const ImageBuffer& input,
                                     const TransitionPayload* transition) const {
    const int w = input.width();
    const int h = input.height();
    last_solve_.reset();
    if (annotations_.faces.empty()) {
        return {FlowField(w, h), input, {ImageBuffer(w, h, 1)}};
    }
    AnnotationSet local = project_annotations(w, h, transition);
    local.clamp_to(w, h);

    ImageBuffer heat = face_heatmap(local.faces, w, h);
    const FlowField stereo = stereographic_flow(cam_, w, h);
    const MeshGrid mesh = MeshGrid::regular(w, h, params_.spacing);
    ConstraintSet constraints;
    for (const Polyline& line : local.lines) {
        if (polyline_length(line) > 0.0) {
            constraints.lines.push_back(line);
        }
    }
    SolveResult solved =
        solve(mesh, stereo, heat, constraints, params_.weights, params_.options, local.faces);
    FlowField flow = mesh_to_flow(solved.mesh, w, h);
    last_solve_ = std::move(solved);
    ImageBuffer projected = warp(input, flow);
    return {std::move(flow), std::move(projected), {std::move(heat)}};
}

StageOutput IdentityStage::run(const ImageBuffer& input, const TransitionPayload*) const {
    return {FlowField(input.width(), input.height()), input, {}};
}

std::unique_ptr<FlowProducer> reference_stage1(const CameraModel& cam) {
    return std::make_unique<PerspectiveStage>(cam);
}

std::unique_ptr<MeshCorrectionStage> reference_stage2(const CameraModel& cam,
                                                      const AnnotationSet& annotations,
                                                      const MeshStageParams& params) {
    return std::make_unique<MeshCorrectionStage>(cam, annotations, params);
}

WorkingSize default_working_size(int width, int height) {
    return width > height ? WorkingSize{384, 256} : WorkingSize{256, 384};
}

namespace {

template <typename Fn>
auto attributed(int stage, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const SolverDiverged& e) {
        throw StageError(stage, e.what(), true);
    } catch (const FlippedQuad& e) {
        throw StageError(stage, e.what(), true);
    } catch (const std::exception& e) {
        throw StageError(stage, e.what(), false);
    }
}

void check_stage_output(int stage, const StageOutput& out, int w, int h) {
    if (out.flow.width() != w || out.flow.height() != h) {
        throw StageError(stage, "producer returned a flow at the wrong resolution", false);
    }
}

}  // namespace

PipelineResult run_pipeline(const ImageBuffer& input, const FlowProducer& stage1,
                            const FlowProducer& stage2, std::optional<WorkingSize> working) {
    const WorkingSize ws = working.value_or(default_working_size(input.width(), input.height()));
    const ImageBuffer reduced = resize_bilinear(input, ws.width, ws.height);

    StageOutput s1 = attributed(1, [&] { return stage1.run(reduced, nullptr); });
    check_stage_output(1, s1, ws.width, ws.height);
    s1.projected = warp(reduced, s1.flow);

    TransitionPayload payload{s1.flow, s1.projected, s1.aux, input.width(), input.height()};
    StageOutput s2 = attributed(2, [&] { return stage2.run(s1.projected, &payload); });
    check_stage_output(2, s2, ws.width, ws.height);

    FlowField fused_working = compose(s2.flow, s1.flow);
    FlowField fused = rescale_flow(fused_working, input.width(), input.height());
    ImageBuffer corrected = warp(input, fused);
    return {std::move(corrected), std::move(fused), std::move(s1),
            std::move(s2),        std::move(fused_working), ws.width, ws.height};
}

}  // namespace wideangle
