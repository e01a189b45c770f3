#include "wideangle/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "wideangle/errors.hpp"
#include "wideangle/metrics.hpp"
#include "wideangle/png_io.hpp"

namespace wideangle {

namespace fs = std::filesystem;

namespace {

void rebuild_correction(SampleRecord& r, const std::optional<FlowField>& corr_override) {
    const int w = r.input.width();
    const int h = r.input.height();
    if (corr_override) {
        if (corr_override->width() != w || corr_override->height() != h) {
            throw DimensionMismatch("correction flow does not match the input raster");
        }
        r.corr_flow = *corr_override;
        MeshCorrectionStage stage(r.camera, r.annotations, r.params.stage);
        TransitionPayload t{r.proj_flow, r.projection, {}, w, h};
        r.heatmap = face_heatmap(stage.project_annotations(w, h, &t).faces, w, h);
    } else {
        MeshCorrectionStage stage(r.camera, r.annotations, r.params.stage);
        TransitionPayload t{r.proj_flow, r.projection, {}, w, h};
        StageOutput out = stage.run(r.projection, &t);
        r.corr_flow = std::move(out.flow);
        r.heatmap = r.annotations.faces.empty() ? ImageBuffer(w, h, 1) : out.aux.front();
    }
    r.corrected = warp(r.projection, r.corr_flow);
    r.edges = lam_target(r.corrected);
}

nlohmann::json meta_json(const SampleRecord& r) {
    nlohmann::json params;
    params["weights"] = r.params.stage.weights;
    params["iterations"] = r.params.stage.options.iterations;
    params["sample_stride"] = r.params.stage.options.sample_stride;
    params["spacing"] = r.params.stage.spacing;
    params["warp_tolerance"] = r.params.warp_tolerance;
    params["line_acc_floor"] =
        r.params.line_acc_floor ? nlohmann::json(*r.params.line_acc_floor) : nlohmann::json();
    return {{"format_version", kRecordFormatVersion},
            {"id", r.id},
            {"version", r.version},
            {"camera", r.camera},
            {"params", params}};
}

void apply_meta(const nlohmann::json& j, SampleRecord& r) {
    if (j.at("format_version").get<int>() != kRecordFormatVersion) {
        throw CorruptRecord("unsupported record format_version");
    }
    r.id = j.at("id").get<std::string>();
    r.version = j.at("version").get<int>();
    r.camera = j.at("camera").get<CameraModel>();
    const auto& p = j.at("params");
    r.params.stage.weights = p.at("weights").get<EnergyWeights>();
    r.params.stage.options.iterations = p.at("iterations").get<int>();
    r.params.stage.options.sample_stride = p.at("sample_stride").get<int>();
    r.params.stage.spacing = p.at("spacing").get<int>();
    r.params.warp_tolerance = p.at("warp_tolerance").get<double>();
    if (!p.at("line_acc_floor").is_null()) {
        r.params.line_acc_floor = p.at("line_acc_floor").get<double>();
    }
}

}  // namespace

SampleRecord generate(const std::string& id, const ImageBuffer& input, const CameraModel& cam,
                      const AnnotationSet& annotations, const DatasetParams& params,
                      const std::optional<FlowField>& corr_override) {
    cam.validate();
    annotations.validate();
    params.stage.weights.validate();
    SampleRecord r;
    r.id = id;
    r.camera = cam;
    r.params = params;
    r.input = input;
    r.annotations = annotations;
    r.proj_flow = perspective_undistort_flow(cam, input.width(), input.height());
    r.projection = warp(input, r.proj_flow);
    rebuild_correction(r, corr_override);
    validate_record(r);
    return r;
}

SampleRecord iterate_refine(const SampleRecord& record, const EnergyWeights& weights) {
    weights.validate();
    SampleRecord r = record;
    r.params.stage.weights = weights;
    rebuild_correction(r, std::nullopt);
    ++r.version;
    validate_record(r);
    return r;
}

std::vector<double> corrected_line_scores(const SampleRecord& r, int samples) {
    std::vector<double> scores;
    for (const Polyline& line : r.annotations.lines) {
        Polyline mapped;
        for (Vec2 p : line) {
            mapped.push_back(forward_map(r.corr_flow, forward_map(r.proj_flow, p)));
        }
        if (!(polyline_length(mapped) > 0.0)) {
            continue;
        }
        const auto pts = sample_line(mapped, samples);
        const auto chord = sample_line(Polyline{mapped.front(), mapped.back()}, samples);
        scores.push_back(line_acc(pts, chord));
    }
    return scores;
}

void validate_record(const SampleRecord& r) {
    const double tol = r.params.warp_tolerance;
    const double e1 = max_abs_diff(warp(r.input, r.proj_flow), r.projection);
    if (e1 > tol) {
        throw InvalidRecord("record " + r.id + ": projection invariant off by " +
                            std::to_string(e1));
    }
    const double e2 = max_abs_diff(warp(r.projection, r.corr_flow), r.corrected);
    if (e2 > tol) {
        throw InvalidRecord("record " + r.id + ": correction invariant off by " +
                            std::to_string(e2));
    }
    if (r.params.line_acc_floor) {
        for (double s : corrected_line_scores(r)) {
            if (s < *r.params.line_acc_floor) {
                throw InvalidRecord("record " + r.id + ": corrected line scores " +
                                    std::to_string(s) + " below the floor");
            }
        }
    }
}

void save_record(const SampleRecord& r, const fs::path& dir) {
    fs::path tmp = dir;
    tmp += ".partial";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    write_png(tmp / "input.png", r.input);
    write_png(tmp / "projection.png", r.projection);
    write_png(tmp / "corrected.png", r.corrected);
    write_pflo(tmp / "proj_flow.pflo", r.proj_flow);
    write_pflo(tmp / "corr_flow.pflo", r.corr_flow);
    write_file_atomic(tmp / "annotations.json", nlohmann::json(r.annotations).dump(2) + "\n");
    write_png(tmp / "heatmap.png", r.heatmap);
    write_png(tmp / "edges_half.png", r.edges.half);
    write_png(tmp / "edges_quarter.png", r.edges.quarter);
    write_file_atomic(tmp / "meta.json", meta_json(r).dump(2) + "\n");
    fs::remove_all(dir);
    fs::rename(tmp, dir);
}

SampleRecord load_record(const fs::path& dir) {
    SampleRecord r;
    try {
        apply_meta(nlohmann::json::parse(std::ifstream(dir / "meta.json")), r);
        r.annotations =
            nlohmann::json::parse(std::ifstream(dir / "annotations.json")).get<AnnotationSet>();
        r.input = read_png(dir / "input.png");
        r.projection = read_png(dir / "projection.png");
        r.corrected = read_png(dir / "corrected.png");
        r.heatmap = read_png(dir / "heatmap.png");
        r.edges.half = read_png(dir / "edges_half.png");
        r.edges.quarter = read_png(dir / "edges_quarter.png");
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRecord(dir.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw CorruptRecord(dir.string() + ": " + e.what());
    }
    r.proj_flow = read_pflo(dir / "proj_flow.pflo");
    r.corr_flow = read_pflo(dir / "corr_flow.pflo");

    const int w = r.input.width();
    const int h = r.input.height();
    auto same = [&](int ow, int oh) { return ow == w && oh == h; };
    if (!same(r.projection.width(), r.projection.height()) ||
        !same(r.corrected.width(), r.corrected.height()) ||
        !same(r.proj_flow.width(), r.proj_flow.height()) ||
        !same(r.corr_flow.width(), r.corr_flow.height()) ||
        !same(r.heatmap.width(), r.heatmap.height())) {
        throw CorruptRecord(dir.string() + ": record rasters disagree in size");
    }
    validate_record(r);
    return r;
}

}  // namespace wideangle
