#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wideangle/errors.hpp"
#include "wideangle/flow.hpp"
#include "wideangle/image.hpp"
#include "wideangle/mesh_solver.hpp"
#include "wideangle/projection.hpp"
#include "wideangle/supervision.hpp"

namespace wideangle {

/// What a stage hands to the pipeline. `projected` is the stage input warped
/// by `flow`; `aux` carries opaque feature planes.
struct StageOutput {
    FlowField flow;
    ImageBuffer projected;
    std::vector<ImageBuffer> aux;
};

/// Stage-1 results forwarded to stage 2.
struct TransitionPayload {
    FlowField flow;
    ImageBuffer projected;
    std::vector<ImageBuffer> features;
    /// Size of the full-resolution pipeline input the working raster was reduced from.
    int source_width = 0;
    int source_height = 0;
};

/// A correction stage: image at working resolution in, backward flow out.
/// Learned models can sit behind this interface; the library ships analytic ones.
class FlowProducer {
public:
    virtual ~FlowProducer() = default;
    virtual StageOutput run(const ImageBuffer& input, const TransitionPayload* transition) const = 0;
};

/// Error raised by a stage, tagged with the stage that failed.
class StageError : public Error {
public:
    StageError(int stage, const std::string& message, bool solver_failure)
        : Error("stage " + std::to_string(stage) + ": " + message),
          stage_(stage), solver_failure_(solver_failure) {}
    int stage() const { return stage_; }
    bool solver_failure() const { return solver_failure_; }

private:
    int stage_;
    bool solver_failure_;
};

/// Stage 1: perspective undistortion from a calibrated camera. Emits the Sobel
/// edge map of its projected image as the single aux plane.
class PerspectiveStage : public FlowProducer {
public:
    explicit PerspectiveStage(CameraModel cam);
    StageOutput run(const ImageBuffer& input, const TransitionPayload* transition) const override;

private:
    CameraModel cam_;
};

struct MeshStageParams {
    EnergyWeights weights;
    SolveOptions options;
    /// Vertex spacing in working-raster pixels.
    int spacing = 8;
};

/// Stage 2: content-aware mesh correction on the projected frame. Faces follow
/// the stereographic re-projection, the rest stays put, annotated lines stay
/// straight. Annotations are given in full-resolution input coordinates and
/// are carried into the projected frame through the stage-1 flow.
class MeshCorrectionStage : public FlowProducer {
public:
    MeshCorrectionStage(CameraModel cam, AnnotationSet annotations, MeshStageParams params = {});
    StageOutput run(const ImageBuffer& input, const TransitionPayload* transition) const override;

    /// Annotations expressed on the stage input raster.
    AnnotationSet project_annotations(int width, int height, const TransitionPayload* t) const;

    /// Diagnostics of the most recent run (not thread-safe across concurrent runs).
    const std::optional<SolveResult>& last_solve() const { return last_solve_; }

private:
    CameraModel cam_;
    AnnotationSet annotations_;
    MeshStageParams params_;
    mutable std::optional<SolveResult> last_solve_;
};

std::unique_ptr<FlowProducer> reference_stage1(const CameraModel& cam);
std::unique_ptr<MeshCorrectionStage> reference_stage2(const CameraModel& cam,
                                                      const AnnotationSet& annotations,
                                                      const MeshStageParams& params = {});

/// Produces zero flow; useful for disabling a stage.
class IdentityStage : public FlowProducer {
public:
    StageOutput run(const ImageBuffer& input, const TransitionPayload* transition) const override;
};

struct PipelineResult {
    ImageBuffer corrected;
    FlowField fused;  // full resolution
    StageOutput stage1;
    StageOutput stage2;
    FlowField fused_working;
    int working_width = 0;
    int working_height = 0;
};

struct WorkingSize {
    int width;
    int height;
};

/// 256x384 for portrait (or square) inputs, 384x256 for landscape.
WorkingSize default_working_size(int width, int height);

/// Reduce to working resolution, run both stages, fuse their flows, scale the
/// fused flow back up and warp the full-resolution input once.
PipelineResult run_pipeline(const ImageBuffer& input, const FlowProducer& stage1,
                            const FlowProducer& stage2,
                            std::optional<WorkingSize> working = std::nullopt);

}  // namespace wideangle
