#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "wideangle/dataset.hpp"
#include "wideangle/errors.hpp"
#include "wideangle/metrics.hpp"
#include "wideangle/pipeline.hpp"
#include "wideangle/png_io.hpp"
#include "wideangle/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wideangle;

namespace {

constexpr int kValidationExit = 2;
constexpr int kSolverExit = 3;

json load_json(const std::string& path, const std::string& flag) {
    try {
        const auto bytes = read_file(path);
        return json::parse(bytes.begin(), bytes.end());
    } catch (const std::exception& e) {
        throw ValidationError(flag + ": " + e.what());
    }
}

template <class T>
T load_as(const std::string& path, const std::string& flag) {
    try {
        return load_json(path, flag).get<T>();
    } catch (const ValidationError& e) {
        const std::string what = e.what();
        if (what.rfind(flag, 0) == 0) {
            throw;
        }
        throw ValidationError(flag + ": " + what);
    } catch (const json::exception& e) {
        throw ValidationError(flag + ": " + e.what());
    }
}

ImageBuffer load_image(const std::string& path, const std::string& flag) {
    try {
        return read_png(path);
    } catch (const std::exception& e) {
        throw ValidationError(flag + ": " + e.what());
    }
}

EnergyWeights parse_weights(const std::string& arg) {
    EnergyWeights w;
    if (arg.empty()) {
        return w;
    }
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("--weights: expected name=value, got '" + item + "'");
        }
        const std::string name = item.substr(0, eq);
        double value = 0.0;
        try {
            value = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw ValidationError("--weights: bad number in '" + item + "'");
        }
        if (name == "face") {
            w.face = value;
        } else if (name == "background") {
            w.background = value;
        } else if (name == "line") {
            w.line = value;
        } else if (name == "regularity") {
            w.regularity = value;
        } else if (name == "boundary") {
            w.boundary = value;
        } else {
            throw ValidationError("--weights: unknown term '" + name + "'");
        }
    }
    w.validate();
    return w;
}

WorkingSize parse_working(const std::string& arg) {
    int w = 0;
    int h = 0;
    char tail = 0;
    if (std::sscanf(arg.c_str(), "%dx%d%c", &w, &h, &tail) != 2 || w < 2 || h < 2) {
        throw ValidationError("--working: expected WxH, got '" + arg + "'");
    }
    return {w, h};
}

/// Writes every file to a temporary name first, then renames them all.
void commit_files(const std::vector<std::pair<fs::path, std::vector<std::uint8_t>>>& files) {
    std::vector<fs::path> staged;
    try {
        for (const auto& [path, bytes] : files) {
            fs::path tmp = path;
            tmp += ".partial";
            write_file_atomic(tmp, bytes);
            staged.push_back(tmp);
        }
        for (std::size_t i = 0; i < files.size(); ++i) {
            fs::rename(staged[i], files[i].first);
        }
    } catch (...) {
        std::error_code ec;
        for (const auto& p : staged) {
            fs::remove(p, ec);
        }
        throw;
    }
}

template <class F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.solver_failure() ? kSolverExit : kValidationExit;
    } catch (const SolverDiverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kSolverExit;
    } catch (const FlippedQuad& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kSolverExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationExit;
    }
}

struct CorrectArgs {
    std::string input, camera, faces, lines, output, flow_out, weights, working;
    int iters = 5;
    int spacing = 8;
};

int run_correct(const CorrectArgs& a) {
    const ImageBuffer input = load_image(a.input, "--input");
    const CameraModel cam = load_as<CameraModel>(a.camera, "--camera");
    cam.validate();
    AnnotationSet ann;
    if (!a.faces.empty()) {
        ann.faces = load_as<AnnotationSet>(a.faces, "--faces").faces;
    }
    if (!a.lines.empty()) {
        ann.lines = load_as<AnnotationSet>(a.lines, "--lines").lines;
    }
    ann.validate();
    MeshStageParams params;
    params.weights = parse_weights(a.weights);
    params.options.iterations = a.iters;
    params.spacing = a.spacing;
    if (a.iters < 1 || a.spacing < 2) {
        throw ValidationError("--iters must be >= 1 and --spacing >= 2");
    }
    std::optional<WorkingSize> working;
    if (!a.working.empty()) {
        working = parse_working(a.working);
    }

    const auto stage1 = reference_stage1(cam);
    const auto stage2 = reference_stage2(cam, ann, params);
    const PipelineResult result = run_pipeline(input, *stage1, *stage2, working);

    std::vector<std::pair<fs::path, std::vector<std::uint8_t>>> files;
    files.emplace_back(a.output, encode_png(result.corrected));
    if (!a.flow_out.empty()) {
        files.emplace_back(a.flow_out, encode_pflo(result.fused));
    }
    commit_files(files);
    return 0;
}

struct EvalArgs {
    std::string result, reference, report, source, flow;
    int samples = 16;
};

int run_eval(const EvalArgs& a) {
    AnnotationSet result;
    if (!a.result.empty()) {
        result = load_as<AnnotationSet>(a.result, "--result");
    } else if (!a.source.empty() && !a.flow.empty()) {
        const AnnotationSet source = load_as<AnnotationSet>(a.source, "--source");
        FlowField flow;
        try {
            flow = read_pflo(a.flow);
        } catch (const std::exception& e) {
            throw ValidationError(std::string("--flow: ") + e.what());
        }
        result = forward_map_annotations(source, flow);
    } else {
        throw ValidationError("--result, or --source together with --flow, is required");
    }
    const AnnotationSet reference = load_as<AnnotationSet>(a.reference, "--reference");
    if (a.samples < 2) {
        throw ValidationError("--samples must be at least 2");
    }
    const EvalReport report = evaluate(result, reference, a.samples);
    const std::string text = report_to_text(report);
    std::cout << text;
    if (!a.report.empty()) {
        const bool as_text = fs::path(a.report).extension() == ".txt";
        const std::string body = as_text ? text : report_to_json(report).dump(2) + "\n";
        commit_files({{a.report, std::vector<std::uint8_t>(body.begin(), body.end())}});
    }
    return 0;
}

struct GenArgs {
    std::string input_dir, output_dir, camera, annotations_dir, weights;
    std::optional<double> line_floor;
    int iters = 5;
    int spacing = 32;
};

int run_genpairs(const GenArgs& a) {
    const CameraModel cam = load_as<CameraModel>(a.camera, "--camera");
    cam.validate();
    if (!fs::is_directory(a.input_dir)) {
        throw ValidationError("--input-dir: not a directory: " + a.input_dir);
    }
    DatasetParams params;
    params.stage.weights = parse_weights(a.weights);
    params.stage.options.iterations = a.iters;
    params.stage.spacing = a.spacing;
    params.line_acc_floor = a.line_floor;

    std::vector<fs::path> inputs;
    for (const auto& entry : fs::directory_iterator(a.input_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            inputs.push_back(entry.path());
        }
    }
    std::sort(inputs.begin(), inputs.end());

    int written = 0;
    for (const auto& path : inputs) {
        const std::string id = path.stem().string();
        AnnotationSet ann;
        if (!a.annotations_dir.empty()) {
            const fs::path ap = fs::path(a.annotations_dir) / (id + ".json");
            if (fs::exists(ap)) {
                ann = load_as<AnnotationSet>(ap.string(), "--annotations-dir");
            }
        }
        const ImageBuffer input = load_image(path.string(), "--input-dir");
        const SampleRecord record = generate(id, input, cam, ann, params);
        fs::create_directories(a.output_dir);
        save_record(record, fs::path(a.output_dir) / id);
        ++written;
    }
    std::cout << "wrote " << written << " record" << (written == 1 ? "" : "s") << "\n";
    return 0;
}

HttpService* g_service = nullptr;

void handle_signal(int) {
    if (g_service != nullptr) {
        g_service->stop();
    }
}

struct ServeArgs {
    std::string host = "127.0.0.1";
    std::string data_dir;
    int port = 8080;
    int spacing = 32;
};

int run_serve(const ServeArgs& a) {
    std::optional<fs::path> dir;
    if (!a.data_dir.empty()) {
        fs::create_directories(a.data_dir);
        dir = a.data_dir;
    }
    SessionStore store(dir, a.spacing);
    HttpService service(store);
    if (!service.bind(a.host, a.port)) {
        std::cerr << "error: cannot bind " << a.host << ":" << a.port << "\n";
        return kSolverExit;
    }
    g_service = &service;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    std::cout << "listening on " << a.host << ":" << service.port() << std::endl;
    service.listen();
    g_service = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wide-angle portrait correction toolkit"};
    app.require_subcommand(1);

    CorrectArgs ca;
    auto* correct = app.add_subcommand("correct", "Correct a wide-angle photo");
    correct->add_option("--input", ca.input, "Input PNG")->required();
    correct->add_option("--camera", ca.camera, "Camera model JSON")->required();
    correct->add_option("--faces", ca.faces, "Annotation JSON with faces");
    correct->add_option("--lines", ca.lines, "Annotation JSON with lines");
    correct->add_option("--output", ca.output, "Output PNG")->required();
    correct->add_option("--flow-out", ca.flow_out, "Write the fused flow (PFLO)");
    correct->add_option("--weights", ca.weights, "e.g. face=4,line=8");
    correct->add_option("--working", ca.working, "Working resolution WxH");
    correct->add_option("--iters", ca.iters, "Solver iterations");
    correct->add_option("--spacing", ca.spacing, "Mesh spacing at working resolution");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Score annotations with LineAcc and ShapeAcc");
    eval->add_option("--result", ea.result, "Result-frame annotation JSON");
    eval->add_option("--source", ea.source, "Source-frame annotation JSON (with --flow)");
    eval->add_option("--flow", ea.flow, "Correction flow (PFLO) mapping source to result");
    eval->add_option("--reference", ea.reference, "Reference annotation JSON")->required();
    eval->add_option("--report", ea.report, "Report path (.json or .txt)");
    eval->add_option("--samples", ea.samples, "Samples per line");

    GenArgs ga;
    auto* gen = app.add_subcommand("genpairs", "Generate training records");
    gen->add_option("--input-dir", ga.input_dir, "Directory of input PNGs")->required();
    gen->add_option("--output-dir", ga.output_dir, "Record output directory")->required();
    gen->add_option("--camera", ga.camera, "Camera model JSON")->required();
    gen->add_option("--annotations-dir", ga.annotations_dir, "Per-image <stem>.json annotations");
    gen->add_option("--line-floor", ga.line_floor, "Minimum corrected LineAcc");
    gen->add_option("--weights", ga.weights, "e.g. face=4,line=8");
    gen->add_option("--iters", ga.iters, "Solver iterations");
    gen->add_option("--spacing", ga.spacing, "Mesh spacing in pixels");

    ServeArgs sa;
    auto* serve = app.add_subcommand("serve", "Run the editor HTTP service");
    serve->add_option("--port", sa.port, "TCP port");
    serve->add_option("--host", sa.host, "Bind address");
    serve->add_option("--data-dir", sa.data_dir, "Snapshot directory for deleted sessions");
    serve->add_option("--spacing", sa.spacing, "Mesh spacing in pixels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationExit;
    }

    if (correct->parsed()) {
        return guarded([&] { return run_correct(ca); });
    }
    if (eval->parsed()) {
        return guarded([&] { return run_eval(ea); });
    }
    if (gen->parsed()) {
        return guarded([&] { return run_genpairs(ga); });
    }
    return guarded([&] { return run_serve(sa); });
}
