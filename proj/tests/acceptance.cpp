// Acceptance gate: one PASS/FAIL line per top-level criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "support/solver_oracle.hpp"
#include "support/synth.hpp"
#include "wideangle/dataset.hpp"
#include "wideangle/errors.hpp"
#include "wideangle/flow.hpp"
#include "wideangle/losses.hpp"
#include "wideangle/metrics.hpp"
#include "wideangle/mesh_solver.hpp"
#include "wideangle/pipeline.hpp"
#include "wideangle/png_io.hpp"
#include "wideangle/projection.hpp"

namespace fs = std::filesystem;
using namespace wideangle;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("wapc_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// ---------------------------------------------------------------------------

void metric_golden(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Vec2> straight, zigzag, horizontal;
    for (int i = 0; i <= 10; ++i) {
        straight.push_back({10.0 * i, 3.0 + 2.5 * i});
        zigzag.push_back({double(i), i % 2 == 0 ? 0.0 : 0.2});
        horizontal.push_back({double(i), 0.0});
    }
    const double s1 = line_acc(straight, straight);
    const double s2 = line_acc(zigzag, horizontal);
    o.require(s1 == 100.0, "straight line scores exactly 100");
    o.require(std::abs(s2 - 80.0) <= 1e-9, "zigzag scores 80");

    const std::vector<Vec2> face = {{0, 0}, {3, 1}, {-2, 4}, {1, -5}};
    std::vector<Vec2> rotated;
    const double a = std::numbers::pi / 3.0;
    for (Vec2 p : face) {
        rotated.push_back({std::cos(a) * p.x - std::sin(a) * p.y, std::sin(a) * p.x + std::cos(a) * p.y});
    }
    const double f1 = shape_acc(face, face, 0);
    const double f2 = shape_acc(rotated, face, 0);
    o.require(std::abs(f1 - 100.0) <= 1e-12, "identical landmarks score 100");
    o.require(std::abs(f2 - 50.0) <= 1e-9, "60 degree rotation scores 50");
    const double t = seconds_since(t0);
    o.require(t < 1.0, "runtime under 1 s");
    o.detail << "straight=" << fmt(s1, 9) << " zigzag=" << fmt(s2, 9) << " same=" << fmt(f1, 9)
             << " rot60=" << fmt(f2, 9) << " t=" << fmt(t, 3) << "s";
}

// ---------------------------------------------------------------------------

void projection_checkerboard(Outcome& o) {
    const CameraModel cam{700.0, 700.0, 511.5, 511.5, 0.1, 0.0, 0.0, 1024, 1024};
    const double square = 64.0;
    const ImageBuffer captured = synth::render_distorted_checkerboard(cam, square, 3);

    const auto t0 = std::chrono::steady_clock::now();
    const FlowField flow = perspective_undistort_flow(cam, 1024, 1024);
    const ImageBuffer corrected = warp(captured, flow);

    auto valid = [&](int x, int y) {
        const Vec2 s = Vec2{double(x), double(y)} + flow.at(x, y);
        return s.x >= 1.0 && s.y >= 1.0 && s.x <= 1022.0 && s.y <= 1022.0;
    };
    // Sub-pixel crossings of the mid level across each grid line.
    double worst = 0.0;
    int lines_checked = 0;
    for (int axis = 0; axis < 2; ++axis) {
        for (int k = 1; k * square < 1024 - 4; ++k) {
            const double g = k * square;
            std::vector<Eigen::Vector2d> pts;  // (along, across)
            for (int s = 2; s < 1022; ++s) {
                const double frac = std::fmod(s, square);
                if (frac < 4.0 || frac > square - 4.0) {
                    continue;
                }
                auto value = [&](int across) {
                    return axis == 0 ? corrected.at(across, s) : corrected.at(s, across);
                };
                bool ok = true;
                for (int d = -4; d <= 4 && ok; ++d) {
                    const int across = static_cast<int>(g) + d;
                    ok = axis == 0 ? valid(across, s) : valid(s, across);
                }
                if (!ok) {
                    continue;
                }
                const double lo = value(static_cast<int>(g) - 4);
                const double hi = value(static_cast<int>(g) + 4);
                const double mid = 0.5 * (lo + hi);
                for (int d = -4; d < 4; ++d) {
                    const int a = static_cast<int>(g) + d;
                    const double va = value(a), vb = value(a + 1);
                    if ((va - mid) * (vb - mid) <= 0.0 && va != vb) {
                        pts.emplace_back(s, a + (mid - va) / (vb - va));
                        break;
                    }
                }
            }
            if (pts.size() < 20) {
                continue;
            }
            ++lines_checked;
            // Total least squares line through the crossings.
            Eigen::Vector2d mean = Eigen::Vector2d::Zero();
            for (const auto& p : pts) mean += p;
            mean /= static_cast<double>(pts.size());
            Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
            for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
            const Eigen::Vector2d n = es.eigenvectors().col(0);
            for (const auto& p : pts) {
                worst = std::max(worst, std::abs(n.dot(p - mean)));
            }
        }
    }

    // Annotated grid lines: captured positions carried through the flow.
    double min_acc = 1e9;
    for (int axis = 0; axis < 2; ++axis) {
        for (int k = 2; k * square <= 1024 - 2 * square; ++k) {
            Polyline captured_line;
            for (int i = 0; i <= 32; ++i) {
                const double along = 2 * square + i * (1024 - 4 * square) / 32.0;
                const Vec2 u = axis == 0 ? Vec2{k * square, along} : Vec2{along, k * square};
                captured_line.push_back(synth::brown_distort(cam, u));
            }
            Polyline mapped;
            for (Vec2 p : captured_line) {
                mapped.push_back(forward_map(flow, p));
            }
            const auto pts = sample_line(mapped, 16);
            const auto chord = sample_line(Polyline{mapped.front(), mapped.back()}, 16);
            min_acc = std::min(min_acc, line_acc(pts, chord));
        }
    }
    const double t = seconds_since(t0);
    o.require(lines_checked >= 24, "enough grid lines measured");
    o.require(worst <= 0.5, "max perpendicular residual <= 0.5 px");
    o.require(min_acc >= 99.0, "LineAcc >= 99 on annotated lines");
    o.require(t < 10.0, "runtime under 10 s");
    o.detail << "lines=" << lines_checked << " max_residual=" << fmt(worst, 4)
             << "px min_line_acc=" << fmt(min_acc, 4) << " t=" << fmt(t, 2) << "s";
}

// ---------------------------------------------------------------------------

void stereographic_conformality(Outcome& o) {
    const CameraModel cam{420.0, 420.0, 319.5, 239.5, 0.0, 0.0, 0.0, 640, 480};
    const FlowField flow = stereographic_flow(cam, 640, 480);
    const double f = 420.0;
    // Output pixel -> viewing direction through the rectilinear camera.
    auto direction = [&](int x, int y) {
        const Vec2 q = Vec2{double(x), double(y)} + flow.at(x, y);
        Eigen::Vector3d d((q.x - cam.cx) / f, (q.y - cam.cy) / f, 1.0);
        return Eigen::Vector3d(d.normalized());
    };
    std::mt19937 rng(99);
    std::uniform_int_distribution<int> ux(1, 638), uy(1, 478);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const int x = ux(rng), y = uy(rng);
        Eigen::Matrix<double, 3, 2> j;
        j.col(0) = 0.5 * (direction(x + 1, y) - direction(x - 1, y));
        j.col(1) = 0.5 * (direction(x, y + 1) - direction(x, y - 1));
        Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(j);
        const double ratio = svd.singularValues()[0] / svd.singularValues()[1];
        worst = std::max(worst, std::abs(ratio - 1.0));
    }

    const CameraModel radial{500.0, 500.0, 600.0 - 414.2136, 300.0, 0.0, 0.0, 0.0, 1024, 600};
    const FlowField rf = stereographic_flow(radial, 1024, 600);
    const double outward = rf.at(600, 300).x;
    o.require(worst <= 1e-3, "singular value ratio within 1 +- 1e-3");
    o.require(std::abs(outward - 85.7864) <= 1e-3, "radial displacement 85.7864");
    o.detail << "max|ratio-1|=" << fmt(worst, 7) << " displacement=" << fmt(outward, 5) << "px";
}

// ---------------------------------------------------------------------------

EvalReport score(const PipelineResult* result, const synth::Scene& scene) {
    const AnnotationSet input = synth::scene_input_annotations(scene);
    const AnnotationSet mapped = result ? forward_map_annotations(input, result->fused) : input;
    return evaluate(mapped, synth::scene_reference_annotations(scene));
}

void tradeoff(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    // Moderate barrel lenses: curved lines and still-stretched faces in the capture.
    for (double k1 : {-0.02, -0.03, -0.04}) {
        const synth::Scene scene = synth::portrait_scene(k1);
        const ImageBuffer image = synth::smooth_image(scene.cam.width, scene.cam.height, 3, 5);
        const AnnotationSet ann = synth::scene_input_annotations(scene);

        const PerspectiveStage stage1(scene.cam);
        const IdentityStage none;
        const auto stage2 = reference_stage2(scene.cam, ann);
        const PipelineResult persp = run_pipeline(image, stage1, none);
        const PipelineResult full = run_pipeline(image, stage1, *stage2);

        const EvalReport in = score(nullptr, scene);
        const EvalReport pr = score(&persp, scene);
        const EvalReport fr = score(&full, scene);
        const std::string tag = "k1=" + fmt(k1, 2) + ": ";
        o.require(*pr.line_acc > *in.line_acc, tag + "perspective raises LineAcc");
        o.require(*pr.shape_acc < *in.shape_acc, tag + "perspective lowers ShapeAcc");
        o.require(*fr.line_acc > *in.line_acc, tag + "mesh output raises LineAcc");
        o.require(*fr.shape_acc > *in.shape_acc, tag + "mesh output raises ShapeAcc");
        o.detail << tag << "input(L=" << fmt(*in.line_acc, 3) << ",S=" << fmt(*in.shape_acc, 3)
                 << ") persp(L=" << fmt(*pr.line_acc, 3) << ",S=" << fmt(*pr.shape_acc, 3)
                 << ") mesh(L=" << fmt(*fr.line_acc, 3) << ",S=" << fmt(*fr.shape_acc, 3) << ") ";
    }
    const double t = seconds_since(t0);
    o.require(t < 60.0, "runtime under 60 s");
    o.detail << "t=" << fmt(t, 2) << "s";
}

// ---------------------------------------------------------------------------

void solver_oracle(Outcome& o) {
    double worst_rel = 0.0;
    const auto fixtures = oracle::small_fixtures();
    for (const oracle::Problem& p : fixtures) {
        SolveOptions opt;
        opt.iterations = 1;
        opt.line_sample_spacing = p.line_spacing;
        const SolveResult r = solve_samples(p.mesh, p.samples, p.constraints, p.weights, opt);
        const Eigen::VectorXd dense = oracle::dense_solution(p);
        Eigen::VectorXd cg(dense.size());
        for (int i = 0; i < p.mesh.vertex_count(); ++i) {
            cg[2 * i] = r.mesh.current()[i].x;
            cg[2 * i + 1] = r.mesh.current()[i].y;
        }
        worst_rel = std::max(worst_rel, (cg - dense).norm() / dense.norm());
    }
    int monotone = 0;
    double worst_rise = 0.0;
    for (unsigned seed = 0; seed < 20; ++seed) {
        const oracle::Problem p = oracle::random_fixture(1000 + seed);
        SolveOptions opt;
        opt.iterations = 5;
        const SolveResult r = solve_samples(p.mesh, p.samples, p.constraints, p.weights, opt);
        std::vector<double> e = {mesh_energy(p.mesh, p.samples, p.constraints, p.weights, opt)};
        e.insert(e.end(), r.energies.begin(), r.energies.end());
        bool ok = true;
        for (std::size_t i = 1; i < e.size(); ++i) {
            if (e[i] > e[i - 1]) {
                ok = false;
                worst_rise = std::max(worst_rise, (e[i] - e[i - 1]) / e[i - 1]);
            }
        }
        monotone += ok ? 1 : 0;
    }
    o.require(worst_rel <= 1e-6, "CG matches dense solve within 1e-6");
    o.require(monotone == 20, "energy non-increasing on all random fixtures");
    o.detail << "fixtures=" << fixtures.size() << " max_rel_err=" << worst_rel
             << " monotone=" << monotone << "/20";
    if (worst_rise > 0.0) {
        o.detail << " worst_rise=" << worst_rise;
    }
}

// ---------------------------------------------------------------------------

void flow_algebra(Outcome& o) {
    double worst = 0.0;
    for (unsigned i = 0; i < 100; ++i) {
        const ImageBuffer img = synth::smooth_image(64, 64, 1, 7000 + i);
        const FlowField first = synth::smooth_flow_inside(64, 64, 3.0, 2 * i + 1);
        const FlowField second = synth::smooth_flow_inside(64, 64, 3.0, 2 * i + 2);
        const ImageBuffer twice = warp(warp(img, first), second);
        const ImageBuffer once = warp(img, compose(second, first));
        worst = std::max(worst, max_abs_diff(twice, once));
    }
    bool pflo_exact = true;
    for (unsigned i = 0; i < 10; ++i) {
        FlowField f = synth::smooth_flow(37 + i, 23 + 2 * i, 7.5, 300 + i);
        f.data()[0] = -0.0f;
        f.data()[1] = 1e-42f;
        const auto bytes = encode_pflo(f);
        const FlowField g = decode_pflo(bytes);
        pflo_exact = pflo_exact && std::memcmp(f.data().data(), g.data().data(), f.data().size_bytes()) == 0 &&
                     f.width() == g.width() && f.height() == g.height() && encode_pflo(g) == bytes;
    }
    bool rescale_exact = true;
    for (auto [w, h, nw, nh] : std::vector<std::array<int, 4>>{{64, 48, 128, 96}, {64, 48, 32, 24}, {40, 40, 100, 70}}) {
        const FlowField c = FlowField::constant(w, h, 1.25f, -3.5f);
        const FlowField r = rescale_flow(c, nw, nh);
        const float ex = static_cast<float>(1.25 * nw / w), ey = static_cast<float>(-3.5 * nh / h);
        rescale_exact = rescale_exact && r == FlowField::constant(nw, nh, ex, ey);
    }
    o.require(worst <= 0.02, "compose/warp equivalence within 0.02");
    o.require(pflo_exact, "PFLO round trip bit-exact");
    o.require(rescale_exact, "constant flow rescale exact");
    o.detail << "max_linf=" << fmt(worst, 5) << " pflo_exact=" << pflo_exact
             << " rescale_exact=" << rescale_exact;
}

// ---------------------------------------------------------------------------

void loss_suite(Outcome& o) {
    const ImageBuffer a(8, 6, 1, std::vector<float>(48, 0.25f));
    const ImageBuffer b(8, 6, 1, std::vector<float>(48, 0.75f));
    o.require(l2(a, a) == 0.0, "l2 of identical images is 0");
    o.require(std::abs(l2(a, b) - 0.25) <= 1e-12, "l2 of 0.25 offset is 0.0625*4");
    o.require(sobel_l2(a, b) == 0.0, "flat images have equal edges");

    const FlowField zero(16, 12);
    const FlowField one = FlowField::constant(16, 12, 1.0f, -1.0f);
    o.require(l2(zero, one) == 1.0, "flow l2 averages both channels");
    o.require(sobel_l2(zero, one) == 0.0, "constant flows have no edges");

    // Vertical step in one channel: interior Sobel magnitude 1 on two columns.
    FlowField step(16, 12);
    for (int y = 0; y < 12; ++y)
        for (int x = 8; x < 16; ++x) step.set(x, y, {1.0, 0.0});
    const double expected_step = (2.0 * 12 * 1.0) / (16.0 * 12.0) / 2.0;
    o.require(std::abs(sobel_l2(zero, step) - expected_step) <= 1e-12, "step flow Sobel term");

    const double ll = line_loss(zero, one, a, b);
    const double sl = shape_loss(zero, one, a, b);
    o.require(std::abs(ll - (1.0 + 0.25)) <= 1e-12, "line loss sums flow and image terms");
    o.require(std::abs(sl - (1.0 + 0.25)) <= 1e-12, "shape loss sums flow and image terms");
    o.require(lam_loss(a, b) == l2(a, b) && fam_loss(a, b) == l2(a, b), "LAM/FAM losses are l2");
    const double total = total_loss({1.0, 1.0, 1.0, 1.0});
    o.require(total == 12.0, "total_loss(1,1,1,1) == 12");
    o.require(total_loss({0.5, 0.2, 3.0, 4.0}) == 5 * 0.5 + 5 * 0.2 + 3.0 + 4.0, "weighted sum");
    o.detail << "total=" << fmt(total, 12) << " line=" << fmt(ll, 6) << " shape=" << fmt(sl, 6);
}

// ---------------------------------------------------------------------------

int run(const std::string& cmd) {
    const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void end_to_end(Outcome& o) {
    const fs::path dir = scratch("cli");
    const std::string wapc = WAPC_PATH;

    // Zero distortion: output bytes equal input bytes.
    const ImageBuffer img = synth::smooth_image(120, 90, 3, 11);
    write_png(dir / "in.png", img);
    const CameraModel flat{100.0, 100.0, 59.5, 44.5, 0.0, 0.0, 0.0, 120, 90};
    write_file_atomic(dir / "flat.json", nlohmann::json(flat).dump());
    const int rc1 = run(wapc + " correct --input " + (dir / "in.png").string() + " --camera " +
                        (dir / "flat.json").string() + " --output " + (dir / "out.png").string());
    const bool identical = rc1 == 0 && read_file(dir / "in.png") == read_file(dir / "out.png");
    o.require(identical, "zero-distortion output byte-identical");

    // Checkerboard through the CLI, scored with the CLI.
    const CameraModel cam{360.0, 360.0, 255.5, 255.5, 0.1, 0.0, 0.0, 512, 512};
    write_png(dir / "board.png", synth::render_distorted_checkerboard(cam, 32.0, 3));
    write_file_atomic(dir / "cam.json", nlohmann::json(cam).dump());
    AnnotationSet captured, reference;
    for (int k = 3; k <= 13; k += 2) {
        Polyline cl, rl;
        for (int i = 0; i <= 16; ++i) {
            const Vec2 u{k * 32.0, 96.0 + i * 20.0};
            rl.push_back(u);
            cl.push_back(synth::brown_distort(cam, u));
        }
        captured.lines.push_back(cl);
        reference.lines.push_back(rl);
    }
    write_file_atomic(dir / "lines.json", nlohmann::json(captured).dump());
    write_file_atomic(dir / "ref.json", nlohmann::json(reference).dump());
    const int rc2 = run(wapc + " correct --input " + (dir / "board.png").string() + " --camera " +
                        (dir / "cam.json").string() + " --lines " + (dir / "lines.json").string() +
                        " --output " + (dir / "board_out.png").string() + " --flow-out " +
                        (dir / "board.pflo").string());
    const int rc3 = run(wapc + " eval --source " + (dir / "lines.json").string() + " --flow " +
                        (dir / "board.pflo").string() + " --reference " + (dir / "ref.json").string() +
                        " --report " + (dir / "report.json").string());
    double cli_line_acc = -1.0;
    if (rc2 == 0 && rc3 == 0) {
        const auto bytes = read_file(dir / "report.json");
        cli_line_acc = nlohmann::json::parse(bytes.begin(), bytes.end()).at("line_acc").get<double>();
    }
    o.require(cli_line_acc >= 99.0, "checkerboard LineAcc >= 99 via CLI");

    // Dataset records: generate, save, reload, re-validate.
    fs::create_directories(dir / "inputs");
    fs::create_directories(dir / "ann");
    const synth::Scene scene = synth::portrait_scene();
    write_file_atomic(dir / "scene_cam.json", nlohmann::json(scene.cam).dump());
    for (int i = 0; i < 2; ++i) {
        const std::string id = "shot" + std::to_string(i);
        write_png(dir / "inputs" / (id + ".png"), synth::smooth_image(768, 512, 3, 40 + i));
        write_file_atomic(dir / "ann" / (id + ".json"),
                          nlohmann::json(synth::scene_input_annotations(scene)).dump());
    }
    const int rc4 = run(wapc + " genpairs --input-dir " + (dir / "inputs").string() + " --output-dir " +
                        (dir / "records").string() + " --camera " + (dir / "scene_cam.json").string() +
                        " --annotations-dir " + (dir / "ann").string());
    int valid_records = 0;
    double worst = 0.0;
    if (rc4 == 0) {
        for (int i = 0; i < 2; ++i) {
            try {
                const SampleRecord r = load_record(dir / "records" / ("shot" + std::to_string(i)));
                worst = std::max({worst, max_abs_diff(warp(r.input, r.proj_flow), r.projection),
                                  max_abs_diff(warp(r.projection, r.corr_flow), r.corrected)});
                ++valid_records;
            } catch (const Error&) {
            }
        }
    }
    o.require(valid_records == 2 && worst <= 0.02, "dataset records self-validate");
    o.detail << "identical=" << identical << " cli_line_acc=" << fmt(cli_line_acc, 4)
             << " records=" << valid_records << "/2 max_invariant=" << fmt(worst, 5);
    fs::remove_all(dir);
}

// ---------------------------------------------------------------------------

void background_preservation(Outcome& o) {
    const synth::Scene scene = synth::portrait_scene();
    const ImageBuffer image = synth::smooth_image(scene.cam.width, scene.cam.height, 3, 5);
    const AnnotationSet ann = synth::scene_input_annotations(scene);
    const PerspectiveStage stage1(scene.cam);
    const auto stage2 = reference_stage2(scene.cam, ann);
    const PipelineResult r = run_pipeline(image, stage1, *stage2);
    const FlowField& flow = r.stage2.flow;
    const ImageBuffer& heat = r.stage2.aux.front();
    double worst = 0.0, peak = 0.0;
    int background = 0;
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < flow.width(); ++x) {
            const Vec2 d = flow.at(x, y);
            const double m = std::hypot(d.x, d.y);
            peak = std::max(peak, m);
            if (heat.at(x, y) < 0.01) {
                worst = std::max(worst, m);
                ++background;
            }
        }
    }
    o.require(background > 0, "background pixels exist");
    o.require(peak > 1.0, "face region is actually corrected");
    o.require(worst <= 0.5, "background flow <= 0.5 px");
    o.detail << "background_px=" << background << " max_bg=" << fmt(worst, 4) << "px face_peak="
             << fmt(peak, 3) << "px";
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
        {"metric golden suite", metric_golden},
        {"projection correctness", projection_checkerboard},
        {"stereographic conformality", stereographic_conformality},
        {"line/shape trade-off", tradeoff},
        {"solver oracle equivalence", solver_oracle},
        {"flow algebra", flow_algebra},
        {"loss suite", loss_suite},
        {"end-to-end CLI", end_to_end},
        {"background preservation", background_preservation},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            check(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "[exception: " << e.what() << "]";
        }
        std::printf("%s  %-28s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
