#include <doctest.h>

#include <filesystem>
#include <random>
#include <thread>

#include <httplib.h>

#include "support/synth.hpp"
#include "wideangle/png_io.hpp"
#include "wideangle/service.hpp"

using namespace wideangle;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

MeshGrid mesh_of(const json& j) { return j.at("mesh").get<MeshGrid>(); }

json drag(Vec2 anchor, Vec2 target) {
    return {{"add_points",
             json::array({{{"anchor", {anchor.x, anchor.y}}, {"target", {target.x, target.y}}}})}};
}

struct RunningService {
    SessionStore store;
    HttpService service{store};
    std::thread thread;

    RunningService() {
        REQUIRE(service.bind("127.0.0.1", 0));
        thread = std::thread([this] { service.listen(); });
        service.wait_until_ready();
    }
    ~RunningService() {
        service.stop();
        thread.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", service.port()); }
};

std::string png_body(const ImageBuffer& img) {
    const auto bytes = encode_png(img);
    return std::string(bytes.begin(), bytes.end());
}

}  // namespace

TEST_CASE("base64 round trip") {
    CHECK(base64_encode({'M', 'a', 'n'}) == "TWFu");
    CHECK(base64_encode({'M', 'a'}) == "TWE=");
    CHECK(base64_encode({}).empty());
    std::mt19937 rng(3);
    for (int n = 0; n < 40; ++n) {
        std::vector<std::uint8_t> bytes(n);
        for (auto& b : bytes) {
            b = static_cast<std::uint8_t>(rng());
        }
        CHECK(base64_decode(base64_encode(bytes)) == bytes);
    }
    CHECK_THROWS_AS(base64_decode("a*b"), ValidationError);
}

TEST_CASE("new session starts at the rest mesh") {
    SessionStore store(std::nullopt, 16);
    const json created = store.create(synth::smooth_image(100, 80, 3, 1), std::nullopt, {});
    const std::string id = created.at("id");
    CHECK(id.size() == 16);
    CHECK(mesh_of(created) == MeshGrid::regular(100, 80, 16));
    const json state = store.state(id);
    CHECK(mesh_of(state) == MeshGrid::regular(100, 80, 16));
    CHECK(state.at("history_depth") == 0);
    CHECK(state.at("solving") == false);
    CHECK(store.size() == 1);
    CHECK(store.create(synth::smooth_image(100, 80, 3, 1), std::nullopt, {}).at("id") != id);
}

TEST_CASE("solving without constraints keeps the rest mesh") {
    SessionStore store(std::nullopt, 16);
    const std::string id = store.create(synth::smooth_image(100, 80, 3, 2), std::nullopt, {}).at("id");
    const json solved = store.solve(id, {});
    const MeshGrid rest = MeshGrid::regular(100, 80, 16);
    const MeshGrid m = mesh_of(solved);
    for (int i = 0; i < m.vertex_count(); ++i) {
        CHECK(std::hypot(m.current()[i].x - rest.current()[i].x,
                         m.current()[i].y - rest.current()[i].y) < 1e-6);
    }
    CHECK(solved.at("history_depth") == 1);
    CHECK(solved.at("last_solve").at("flipped_quads").empty());
}

TEST_CASE("undo restores the previous mesh exactly") {
    SessionStore store(std::nullopt, 16);
    const std::string id = store.create(synth::smooth_image(96, 96, 1, 3), std::nullopt, {}).at("id");
    CHECK_THROWS_AS(store.undo(id), NothingToUndo);
    store.patch_constraints(id, drag({48, 48}, {52, 45}));
    const MeshGrid first = mesh_of(store.solve(id, {}));
    store.patch_constraints(id, drag({20, 70}, {16, 74}));
    const MeshGrid second = mesh_of(store.solve(id, {}));
    CHECK(!(first == second));
    CHECK(mesh_of(store.undo(id)) == first);
    CHECK(mesh_of(store.undo(id)) == MeshGrid::regular(96, 96, 16));
    CHECK_THROWS_AS(store.undo(id), NothingToUndo);
}

TEST_CASE("dragged point lands on its target in the exported flow") {
    SessionStore store(std::nullopt, 16);
    const ImageBuffer img = synth::smooth_image(128, 96, 3, 4);
    const std::string id = store.create(img, std::nullopt, {}).at("id");
    const Vec2 anchor{60, 40}, target{66, 44};
    store.patch_constraints(id, drag(anchor, target));
    const json solved = store.solve(id, SolveRequest{10, std::nullopt, false});
    CHECK(solved.at("last_solve").at("energies").size() == 10);

    const json out = store.export_result(id);
    const FlowField flow = decode_pflo(base64_decode(out.at("corr_flow")));
    REQUIRE(flow.width() == 128);
    const Vec2 landed = forward_map(flow, anchor);
    CHECK(std::hypot(landed.x - target.x, landed.y - target.y) <= 1.0);
    const ImageBuffer corrected = decode_png(base64_decode(out.at("corrected")));
    CHECK(max_abs_diff(corrected, warp(img, flow)) <= 1.0 / 255.0);
}

TEST_CASE("constraint patches are validated atomically") {
    SessionStore store(std::nullopt, 16);
    const std::string id = store.create(synth::smooth_image(64, 64, 1, 5), std::nullopt, {}).at("id");
    store.patch_constraints(id, drag({10, 10}, {12, 12}));
    CHECK_THROWS_AS(store.patch_constraints(id, {{"bogus", 1}}), ValidationError);
    CHECK_THROWS_AS(store.patch_constraints(id, drag({500, 10}, {0, 0})), ValidationError);
    CHECK_THROWS_AS(store.patch_constraints(id, {{"remove_points", {3}}}), ValidationError);
    json bad_then_good = drag({20, 20}, {21, 21});
    bad_then_good["remove_lines"] = {0};
    CHECK_THROWS_AS(store.patch_constraints(id, bad_then_good), ValidationError);
    CHECK(store.state(id).at("constraints").at("points").size() == 1);

    json line = {{"add_lines", {{{5, 30}, {60, 30}}}}};
    CHECK(store.patch_constraints(id, line).at("constraints").at("lines").size() == 1);
    CHECK(store.patch_constraints(id, {{"remove_points", {0}}}).at("constraints").at("points").empty());
    CHECK(store.patch_constraints(id, {{"clear", true}}).at("constraints").at("lines").empty());
}

TEST_CASE("faces with a camera set up a heatmap") {
    SessionStore store;
    const CameraModel cam{200.0, 200.0, 99.5, 79.5, 0.0, 0.0, 0.0, 200, 160};
    AnnotationSet ann;
    ann.faces.push_back({{120, 90, 40, 40}, {{130, 105}, {150, 105}, {140, 115}}, 2});
    const json created = store.create(synth::smooth_image(200, 160, 3, 6), cam, ann);
    CHECK(created.at("heatmap").at("faces") == 1);
    CHECK(created.at("heatmap").at("max").get<double>() > 0.9);
    const json plain = store.create(synth::smooth_image(200, 160, 3, 6), std::nullopt, ann);
    CHECK(plain.at("heatmap").at("max").get<double>() == 0.0);
    CameraModel bad = cam;
    bad.fy = 0.0;
    CHECK_THROWS_AS(store.create(synth::smooth_image(200, 160, 3, 6), bad, ann), ValidationError);
}

TEST_CASE("a second solve while one is running is refused") {
    SessionStore store(std::nullopt, 4);
    const std::string id = store.create(synth::smooth_image(640, 640, 1, 7), std::nullopt, {}).at("id");
    store.patch_constraints(id, drag({320, 320}, {330, 300}));
    const json started = store.solve(id, SolveRequest{40, std::nullopt, true});
    CHECK(started.at("solving") == true);
    CHECK_THROWS_AS(store.solve(id, {}), SolveInProgress);
    CHECK_THROWS_AS(store.undo(id), SolveInProgress);
    store.wait(id);
    const json done = store.state(id);
    CHECK(done.at("solving") == false);
    CHECK(done.at("history_depth") == 1);
    CHECK(done.at("last_error").is_null());
}

TEST_CASE("deleting a session snapshots it") {
    const fs::path dir = fs::temp_directory_path() / ("wideangle_svc_" + std::to_string(std::random_device{}()));
    {
        SessionStore store(dir, 16);
        const std::string id = store.create(synth::smooth_image(64, 48, 3, 8), std::nullopt, {}).at("id");
        store.patch_constraints(id, drag({30, 20}, {33, 22}));
        store.solve(id, {});
        store.remove(id);
        CHECK(store.size() == 0);
        CHECK_THROWS_AS(store.state(id), SessionNotFound);
        CHECK_THROWS_AS(store.remove(id), SessionNotFound);
        const json snap = json::parse(read_file(dir / id / "session.json"));
        CHECK(snap.at("id") == id);
        CHECK(snap.at("constraints").at("points").size() == 1);
        CHECK(read_png(dir / id / "image.png").width() == 64);
        CHECK(read_pflo(dir / id / "corr_flow.pflo").height() == 48);
    }
    fs::remove_all(dir);
}

TEST_CASE("HTTP API") {
    RunningService svc;
    httplib::Client cli = svc.client();

    auto created = cli.Post("/session", png_body(synth::smooth_image(96, 64, 3, 9)), "image/png");
    REQUIRE(created);
    CHECK(created->status == 201);
    const std::string id = json::parse(created->body).at("id");
    const std::string base = "/session/" + id;

    SUBCASE("unknown session is 404") {
        auto r = cli.Get("/session/nope/state");
        REQUIRE(r);
        CHECK(r->status == 404);
        CHECK(json::parse(r->body).contains("error"));
        CHECK(cli.Delete("/session/nope")->status == 404);
    }
    SUBCASE("bad input is 422") {
        CHECK(cli.Post("/session", "not a png", "image/png")->status == 422);
        CHECK(cli.Post(base + "/constraints", "{oops", "application/json")->status == 422);
        CHECK(cli.Post(base + "/constraints", R"({"frobnicate": 1})", "application/json")->status == 422);
        CHECK(cli.Post(base + "/solve", R"({"iters": 0})", "application/json")->status == 422);
        CHECK(cli.Post(base + "/solve", R"({"weights": {"face": 0, "background": 0}})",
                       "application/json")->status == 422);
        CHECK(cli.Get(base + "/preview?scale=-1")->status == 422);
        CHECK(cli.Get(base + "/preview?scale=abc")->status == 422);
    }
    SUBCASE("nothing to undo is 409") {
        CHECK(cli.Post(base + "/undo", "", "application/json")->status == 409);
    }
    SUBCASE("edit, solve, preview, undo, export, delete") {
        auto state = cli.Get(base + "/state");
        REQUIRE(state);
        CHECK(state->status == 200);
        CHECK(mesh_of(json::parse(state->body)) == MeshGrid::regular(96, 64, 32));

        auto patched = cli.Post(base + "/constraints", drag({40, 30}, {44, 28}).dump(), "application/json");
        CHECK(patched->status == 200);
        auto solved = cli.Post(base + "/solve", R"({"iters": 3})", "application/json");
        REQUIRE(solved);
        CHECK(solved->status == 200);
        CHECK(json::parse(solved->body).at("history_depth") == 1);
        httplib::Client again = svc.client();
        CHECK(again.Get(base + "/state")->body == cli.Get(base + "/state")->body);

        auto preview = cli.Get(base + "/preview?scale=0.5");
        REQUIRE(preview);
        CHECK(preview->status == 200);
        CHECK(preview->get_header_value("Content-Type") == "image/png");
        const ImageBuffer small = decode_png({preview->body.begin(), preview->body.end()});
        CHECK(small.width() == 48);
        CHECK(small.height() == 32);

        auto exported = cli.Get(base + "/export");
        REQUIRE(exported);
        const FlowField flow = decode_pflo(base64_decode(json::parse(exported->body).at("corr_flow")));
        CHECK(flow.max_magnitude() > 1.0);

        auto undone = cli.Post(base + "/undo", "", "application/json");
        CHECK(undone->status == 200);
        CHECK(mesh_of(json::parse(undone->body)) == MeshGrid::regular(96, 64, 32));

        CHECK(cli.Delete(base)->status == 200);
        CHECK(cli.Get(base + "/state")->status == 404);
    }
    SUBCASE("multipart upload with camera and annotations") {
        const CameraModel cam{300.0, 300.0, 47.5, 31.5, -0.02, 0.0, 0.0, 96, 64};
        AnnotationSet ann;
        ann.faces.push_back({{30, 20, 30, 30}, {{38, 30}, {52, 30}, {45, 38}}, 2});
        httplib::MultipartFormDataItems items = {
            {"image", png_body(synth::smooth_image(96, 64, 3, 10)), "in.png", "image/png"},
            {"camera", json(cam).dump(), "cam.json", "application/json"},
            {"annotations", json(ann).dump(), "ann.json", "application/json"},
        };
        auto r = cli.Post("/session", items);
        REQUIRE(r);
        CHECK(r->status == 201);
        CHECK(json::parse(r->body).at("heatmap").at("faces") == 1);

        httplib::MultipartFormDataItems missing = {{"camera", json(cam).dump(), "cam.json", "application/json"}};
        CHECK(cli.Post("/session", missing)->status == 422);
    }
}

TEST_CASE("occupied port cannot be bound twice") {
    RunningService svc;
    SessionStore other;
    HttpService second(other);
    CHECK(!second.bind("127.0.0.1", svc.service.port()));
}
