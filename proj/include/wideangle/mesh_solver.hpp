#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wideangle/flow.hpp"
#include "wideangle/image.hpp"
#include "wideangle/projection.hpp"
#include "wideangle/supervision.hpp"

namespace wideangle {

/// Tensor-product quad mesh. Rest vertex (r, c) sits at (xs[c], ys[r]); the
/// deformed positions are the unknowns of the solver. Row-major storage.
class MeshGrid {
public:
    MeshGrid() = default;
    MeshGrid(std::vector<double> xs, std::vector<double> ys);

    /// Uniform grid spanning [0, width-1] x [0, height-1] with at most
    /// `spacing` pixels between vertices.
    static MeshGrid regular(int width, int height, int spacing = 32);

    int rows() const { return static_cast<int>(ys_.size()); }
    int cols() const { return static_cast<int>(xs_.size()); }
    int vertex_count() const { return rows() * cols(); }
    int vertex(int r, int c) const { return r * cols() + c; }

    const std::vector<double>& xs() const { return xs_; }
    const std::vector<double>& ys() const { return ys_; }

    Vec2 rest(int r, int c) const { return {xs_[c], ys_[r]}; }
    Vec2 current(int r, int c) const { return current_[vertex(r, c)]; }
    const std::vector<Vec2>& current() const { return current_; }
    void set_current(std::vector<Vec2> positions);
    void reset();

    bool contains_rest(Vec2 p) const;

    /// Rest cell containing p (clamped to the grid) and local coordinates in it.
    struct Cell {
        int r;
        int c;
        double s;
        double t;
    };
    Cell locate(Vec2 p) const;

    /// Bilinear image of a rest point under the current deformation.
    Vec2 map(Vec2 p) const;

    /// Quads (r, c) whose two triangles do not both have positive signed area.
    std::vector<std::pair<int, int>> flipped_quads() const;

    friend bool operator==(const MeshGrid&, const MeshGrid&) = default;

private:
    std::vector<double> xs_;
    std::vector<double> ys_;
    std::vector<Vec2> current_;
};

void to_json(nlohmann::json& j, const MeshGrid& mesh);
void from_json(const nlohmann::json& j, MeshGrid& mesh);

struct EnergyWeights {
    double face = 4.0;
    double background = 1.0;
    double line = 8.0;
    double regularity = 2.0;
    double boundary = 16.0;

    /// Nonnegative and finite, with face or background positive.
    void validate() const;
    friend bool operator==(const EnergyWeights&, const EnergyWeights&) = default;
};

void to_json(nlohmann::json& j, const EnergyWeights& w);
void from_json(const nlohmann::json& j, EnergyWeights& w);

/// Drag handle: the rest point `anchor` should land on `target`.
struct PointConstraint {
    Vec2 anchor;
    Vec2 target;
    double weight = 1000.0;
    friend bool operator==(const PointConstraint&, const PointConstraint&) = default;
};

struct ConstraintSet {
    std::vector<PointConstraint> points;
    /// Polylines in rest coordinates that should stay straight.
    std::vector<Polyline> lines;

    /// Throws ValidationError if an anchor or line point lies outside the rest
    /// mesh, a weight is negative, or a line has fewer than 2 points.
    void validate(const MeshGrid& mesh) const;
    friend bool operator==(const ConstraintSet&, const ConstraintSet&) = default;
};

void to_json(nlohmann::json& j, const ConstraintSet& c);
void from_json(const nlohmann::json& j, ConstraintSet& c);

/// One data term: the mesh image of `rest` is pulled towards `target`.
struct DataSample {
    Vec2 rest;
    Vec2 target;
    double weight;
};

struct SolveOptions {
    int iterations = 5;
    int sample_stride = 4;
    double cg_tolerance = 1e-6;
    int cg_max_iterations = 2000;
    /// Spacing in pixels between samples along constrained lines.
    double line_sample_spacing = 4.0;
};

struct SolveResult {
    MeshGrid mesh;
    /// Total energy after each outer iteration.
    std::vector<double> energies;
    std::vector<int> cg_iterations;
    std::vector<std::pair<int, int>> flipped_quads;
};

/// Builds the data terms on a lattice of rest points.
///
/// face_target and background_target are backward flows on the mesh raster;
/// each is turned into a forward destination by inverting it at the sample.
/// Face terms carry weight w.face * h(p), background terms w.background * (1 - h(p)).
/// When `faces` is non-empty, face_target is the unblended face projection:
/// each face's destinations are re-anchored by the rigid motion that best maps
/// them back onto the face's own samples (the projection's local shape and
/// scale are imposed, not its absolute position), then blended with the
/// background destination by h(p).
std::vector<DataSample> build_data_samples(const MeshGrid& mesh, const FlowField& face_target,
                                           const ImageBuffer& heatmap, const EnergyWeights& w,
                                           const std::vector<FaceAnnotation>& faces = {},
                                           const FlowField* background_target = nullptr,
                                           int stride = 4);

/// Iterated linear least squares over the vertex positions. Each outer
/// iteration re-fits the constrained lines' directions on the previous iterate
/// and solves the normal equations with Jacobi-preconditioned CG, warm-started
/// from the current mesh. Throws SolverDiverged if CG does not converge.
SolveResult solve_samples(const MeshGrid& mesh, const std::vector<DataSample>& samples,
                          const ConstraintSet& constraints, const EnergyWeights& weights,
                          const SolveOptions& options = {});

/// Convenience wrapper: build_data_samples + solve_samples.
SolveResult solve(const MeshGrid& mesh, const FlowField& target, const ImageBuffer& heatmap,
                  const ConstraintSet& constraints, const EnergyWeights& weights,
                  const SolveOptions& options = {},
                  const std::vector<FaceAnnotation>& faces = {});

/// Total energy of a mesh state, with each constrained line measured against
/// its own best-fit direction.
double mesh_energy(const MeshGrid& mesh, const std::vector<DataSample>& samples,
                   const ConstraintSet& constraints, const EnergyWeights& weights,
                   const SolveOptions& options = {});

/// Backward flow that reproduces the mesh deformation: warp(img, flow) moves
/// content from rest positions to deformed positions. Throws FlippedQuad.
FlowField mesh_to_flow(const MeshGrid& mesh, int out_width, int out_height);

/// Heatmap-blended analytic target on one raster:
/// blend_flows(perspective_undistort_flow, stereographic_flow, face_heatmap).
std::pair<FlowField, ImageBuffer> build_target_flow(const CameraModel& cam,
                                                    const AnnotationSet& faces, int out_width,
                                                    int out_height);

}  // namespace wideangle
