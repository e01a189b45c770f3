#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "wideangle/flow.hpp"
#include "wideangle/image.hpp"
#include "wideangle/pipeline.hpp"
#include "wideangle/projection.hpp"
#include "wideangle/supervision.hpp"

namespace wideangle {

inline constexpr int kRecordFormatVersion = 1;

struct DatasetParams {
    MeshStageParams stage{EnergyWeights{}, SolveOptions{}, 32};
    /// Reject records whose corrected lines score below this straightness.
    std::optional<double> line_acc_floor;
    /// Warp invariant tolerance (L-infinity, [0,1] units).
    double warp_tolerance = 0.02;
};

/// One training pair with everything derived from it:
///   input --proj_flow--> projection --corr_flow--> corrected
/// heatmap lives on the projection raster; edges are taken from `corrected`.
struct SampleRecord {
    std::string id;
    int version = 1;
    CameraModel camera;
    DatasetParams params;
    ImageBuffer input;
    ImageBuffer projection;
    ImageBuffer corrected;
    FlowField proj_flow;
    FlowField corr_flow;
    AnnotationSet annotations;  // on the input raster
    ImageBuffer heatmap;
    EdgeTargets edges;
};

/// Builds a record from a captured image. `corr_override` replaces the solver's
/// correction flow (e.g. a flow exported from the mesh editor).
SampleRecord generate(const std::string& id, const ImageBuffer& input, const CameraModel& cam,
                      const AnnotationSet& annotations, const DatasetParams& params = {},
                      const std::optional<FlowField>& corr_override = std::nullopt);

/// Re-solves the correction stage with new weights; bumps the version.
SampleRecord iterate_refine(const SampleRecord& record, const EnergyWeights& weights);

/// Throws InvalidRecord if either warp invariant or the line floor fails.
void validate_record(const SampleRecord& record);

/// Straightness of each annotated line after both flows, scored against the
/// chord between its mapped endpoints.
std::vector<double> corrected_line_scores(const SampleRecord& record, int samples = 16);

/// Directory layout: input.png, projection.png, corrected.png, proj_flow.pflo,
/// corr_flow.pflo, annotations.json, heatmap.png, edges_half.png,
/// edges_quarter.png, meta.json. Written to a temporary directory first.
void save_record(const SampleRecord& record, const std::filesystem::path& dir);

/// Throws CorruptRecord on unreadable or inconsistent files and InvalidRecord
/// if the reloaded data fails its warp invariants.
SampleRecord load_record(const std::filesystem::path& dir);

}  // namespace wideangle
