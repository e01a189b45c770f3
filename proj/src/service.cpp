#include "wideangle/service.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <httplib.h>

#include "wideangle/metrics.hpp"
#include "wideangle/png_io.hpp"

namespace wideangle {

namespace fs = std::filesystem;
using nlohmann::json;

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    static const std::string alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::vector<std::uint8_t> out;
    std::uint32_t acc = 0;
    int bits = 0;
    for (char ch : text) {
        if (ch == '=' || ch == '\n' || ch == '\r') {
            continue;
        }
        const auto pos = alphabet.find(ch);
        if (pos == std::string::npos) {
            throw ValidationError("invalid base64 input");
        }
        acc = (acc << 6) | static_cast<std::uint32_t>(pos);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

namespace {

std::vector<std::optional<double>> line_scores(const MeshGrid& mesh, const ConstraintSet& c) {
    std::vector<std::optional<double>> scores;
    for (const Polyline& line : c.lines) {
        try {
            std::vector<Vec2> mapped;
            for (Vec2 p : sample_line(line, 16)) {
                mapped.push_back(mesh.map(p));
            }
            const auto chord = sample_line(Polyline{mapped.front(), mapped.back()}, 16);
            scores.emplace_back(line_acc(mapped, chord));
        } catch (const Error&) {
            scores.emplace_back(std::nullopt);
        }
    }
    return scores;
}

json diagnostics_json(const SolveDiagnostics& d) {
    json flipped = json::array();
    for (auto [r, c] : d.flipped_quads) {
        flipped.push_back({r, c});
    }
    json lines = json::array();
    for (double v : d.line_acc) {
        lines.push_back(std::isnan(v) ? json() : json(v));
    }
    return {{"energies", d.energies},
            {"cg_iterations", d.cg_iterations},
            {"flipped_quads", flipped},
            {"line_acc", lines}};
}

json heatmap_meta(const Session& s) {
    const auto& v = s.heatmap.samples();
    const double peak = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    return {{"width", s.heatmap.width()},
            {"height", s.heatmap.height()},
            {"max", peak},
            {"faces", s.annotations.faces.size()}};
}

}  // namespace

json session_json(const Session& s) {
    json j;
    j["id"] = s.id;
    j["width"] = s.image.width();
    j["height"] = s.image.height();
    j["camera"] = s.cam ? json(*s.cam) : json();
    j["annotations"] = s.annotations;
    j["mesh"] = s.mesh;
    j["constraints"] = s.constraints;
    j["weights"] = s.weights;
    j["history_depth"] = s.history.size();
    j["solving"] = s.solving;
    j["last_solve"] = s.last_solve ? diagnostics_json(*s.last_solve) : json();
    j["last_error"] = s.last_error.empty() ? json() : json(s.last_error);
    j["heatmap"] = heatmap_meta(s);
    return j;
}

SessionStore::SessionStore(std::optional<fs::path> data_dir, int mesh_spacing)
    : data_dir_(std::move(data_dir)), spacing_(mesh_spacing), rng_state_(std::random_device{}()) {
    if (mesh_spacing < 2) {
        throw ValidationError("mesh spacing must be at least 2");
    }
}

SessionStore::~SessionStore() {
    std::map<std::string, std::shared_ptr<Session>> sessions;
    {
        std::lock_guard lock(mutex_);
        sessions.swap(sessions_);
    }
    for (auto& [id, s] : sessions) {
        std::future<void> f;
        {
            std::lock_guard lock(s->mutex);
            f = std::move(s->worker);
        }
        if (f.valid()) {
            f.wait();
        }
    }
}

std::string SessionStore::new_id() {
    std::mt19937_64 rng(rng_state_);
    rng_state_ = rng();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

std::shared_ptr<Session> SessionStore::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw SessionNotFound("unknown session " + id);
    }
    return it->second;
}

std::size_t SessionStore::size() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

json SessionStore::create(const ImageBuffer& image, const std::optional<CameraModel>& cam,
                          const AnnotationSet& annotations) {
    if (image.width() < 2 || image.height() < 2) {
        throw ValidationError("image must be at least 2x2");
    }
    if (cam) {
        cam->validate();
    }
    annotations.validate();

    auto s = std::make_shared<Session>();
    s->image = image;
    s->cam = cam;
    s->annotations = annotations;
    s->annotations.clamp_to(image.width(), image.height());
    s->mesh = MeshGrid::regular(image.width(), image.height(), spacing_);
    if (cam && !annotations.faces.empty()) {
        s->face_target = stereographic_flow(*cam, image.width(), image.height());
        s->heatmap = face_heatmap(s->annotations.faces, image.width(), image.height());
    } else {
        s->face_target = FlowField(image.width(), image.height());
        s->heatmap = ImageBuffer(image.width(), image.height(), 1);
    }

    std::lock_guard lock(mutex_);
    do {
        s->id = new_id();
    } while (sessions_.count(s->id) != 0);
    sessions_.emplace(s->id, s);
    return {{"id", s->id}, {"mesh", s->mesh}, {"heatmap", heatmap_meta(*s)}};
}

json SessionStore::state(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return session_json(*s);
}

json SessionStore::patch_constraints(const std::string& id, const json& patch) {
    if (!patch.is_object()) {
        throw ValidationError("constraint patch must be a JSON object");
    }
    for (const auto& [key, value] : patch.items()) {
        if (key != "add_points" && key != "add_lines" && key != "remove_points" &&
            key != "remove_lines" && key != "clear") {
            throw ValidationError("unknown patch key " + key);
        }
    }
    const ConstraintSet added = json{{"points", patch.value("add_points", json::array())},
                                     {"lines", patch.value("add_lines", json::array())}}
                                    .get<ConstraintSet>();
    auto indices = [&](const char* key) {
        std::vector<std::size_t> out;
        try {
            for (const auto& v : patch.value(key, json::array())) {
                out.push_back(v.get<std::size_t>());
            }
        } catch (const json::exception&) {
            throw ValidationError(std::string(key) + " must list nonnegative indices");
        }
        std::sort(out.rbegin(), out.rend());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    };
    const auto drop_points = indices("remove_points");
    const auto drop_lines = indices("remove_lines");
    const bool clear = patch.value("clear", false);

    auto s = find(id);
    std::lock_guard lock(s->mutex);
    ConstraintSet next = clear ? ConstraintSet{} : s->constraints;
    for (std::size_t i : drop_points) {
        if (i >= next.points.size()) {
            throw ValidationError("remove_points index out of range");
        }
        next.points.erase(next.points.begin() + static_cast<std::ptrdiff_t>(i));
    }
    for (std::size_t i : drop_lines) {
        if (i >= next.lines.size()) {
            throw ValidationError("remove_lines index out of range");
        }
        next.lines.erase(next.lines.begin() + static_cast<std::ptrdiff_t>(i));
    }
    next.points.insert(next.points.end(), added.points.begin(), added.points.end());
    next.lines.insert(next.lines.end(), added.lines.begin(), added.lines.end());
    next.validate(s->mesh);
    s->constraints = std::move(next);
    return session_json(*s);
}

json SessionStore::solve(const std::string& id, const SolveRequest& request) {
    if (request.iterations && (*request.iterations < 1 || *request.iterations > 100)) {
        throw ValidationError("iters must be in [1, 100]");
    }
    if (request.weights) {
        request.weights->validate();
    }
    auto s = find(id);

    MeshGrid start;
    ConstraintSet constraints;
    EnergyWeights weights;
    SolveOptions options;
    {
        std::lock_guard lock(s->mutex);
        if (s->solving) {
            throw SolveInProgress("a solve is already running for session " + id);
        }
        if (request.weights) {
            s->weights = *request.weights;
        }
        s->solving = true;
        s->last_error.clear();
        start = s->mesh;
        constraints = s->constraints;
        weights = s->weights;
    }
    if (request.iterations) {
        options.iterations = *request.iterations;
    }

    // face_target, heatmap and faces never change after creation.
    auto job = [s, start, constraints, weights, options] {
        try {
            SolveResult r = wideangle::solve(start, s->face_target, s->heatmap, constraints,
                                             weights, options, s->annotations.faces);
            SolveDiagnostics d{r.energies, r.cg_iterations, r.flipped_quads, {}};
            for (const auto& v : line_scores(r.mesh, constraints)) {
                d.line_acc.push_back(v ? *v : std::nan(""));
            }
            std::lock_guard lock(s->mutex);
            s->history.push_back(s->mesh);
            if (s->history.size() > kHistoryDepth) {
                s->history.pop_front();
            }
            s->mesh = std::move(r.mesh);
            s->last_solve = std::move(d);
            s->solving = false;
        } catch (const std::exception& e) {
            std::lock_guard lock(s->mutex);
            s->last_error = e.what();
            s->solving = false;
            throw;
        }
    };

    if (request.async) {
        std::future<void> previous;
        {
            std::lock_guard lock(s->mutex);
            previous = std::move(s->worker);
            s->worker = std::async(std::launch::async, job);
        }
        if (previous.valid()) {
            previous.wait();
        }
        std::lock_guard lock(s->mutex);
        return session_json(*s);
    }
    job();
    std::lock_guard lock(s->mutex);
    return session_json(*s);
}

void SessionStore::wait(const std::string& id) {
    auto s = find(id);
    std::shared_future<void> f;
    {
        std::lock_guard lock(s->mutex);
        if (!s->worker.valid()) {
            return;
        }
        f = s->worker.share();
    }
    f.wait();
}

std::vector<std::uint8_t> SessionStore::preview(const std::string& id, double scale) {
    if (!(scale > 0.0 && scale <= 4.0)) {
        throw ValidationError("scale must be in (0, 4]");
    }
    auto s = find(id);
    MeshGrid mesh;
    {
        std::lock_guard lock(s->mutex);
        mesh = s->mesh;
    }
    const ImageBuffer warped = warp(s->image, mesh_to_flow(mesh, s->image.width(), s->image.height()));
    const int w = std::max(1, static_cast<int>(std::lround(warped.width() * scale)));
    const int h = std::max(1, static_cast<int>(std::lround(warped.height() * scale)));
    return encode_png(resize_bilinear(warped, w, h));
}

json SessionStore::undo(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (s->solving) {
        throw SolveInProgress("cannot undo while a solve is running");
    }
    if (s->history.empty()) {
        throw NothingToUndo("no earlier mesh state");
    }
    s->mesh = std::move(s->history.back());
    s->history.pop_back();
    return session_json(*s);
}

json SessionStore::export_result(const std::string& id) {
    auto s = find(id);
    MeshGrid mesh;
    {
        std::lock_guard lock(s->mutex);
        mesh = s->mesh;
    }
    const FlowField flow = mesh_to_flow(mesh, s->image.width(), s->image.height());
    return {{"corr_flow", base64_encode(encode_pflo(flow))},
            {"corrected", base64_encode(encode_png(warp(s->image, flow)))}};
}

void SessionStore::remove(const std::string& id) {
    std::shared_ptr<Session> s;
    {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) {
            throw SessionNotFound("unknown session " + id);
        }
        std::lock_guard slock(it->second->mutex);
        if (it->second->solving) {
            throw SolveInProgress("cannot delete while a solve is running");
        }
        s = it->second;
        sessions_.erase(it);
    }
    if (s->worker.valid()) {
        s->worker.wait();
    }
    if (!data_dir_) {
        return;
    }
    const fs::path dir = *data_dir_ / id;
    fs::create_directories(dir);
    write_file_atomic(dir / "session.json", session_json(*s).dump(2) + "\n");
    write_png(dir / "image.png", s->image);
    if (s->mesh.flipped_quads().empty()) {
        write_pflo(dir / "corr_flow.pflo",
                   mesh_to_flow(s->mesh, s->image.width(), s->image.height()));
    }
}

// ---------------------------------------------------------------------------
// HTTP

struct HttpService::Impl {
    SessionStore& store;
    httplib::Server server;
    int port = -1;

    explicit Impl(SessionStore& st) : store(st) {}
};

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const SessionNotFound& e) {
        send_json(res, {{"error", e.what()}}, 404);
    } catch (const SolveInProgress& e) {
        send_json(res, {{"error", e.what()}}, 409);
    } catch (const NothingToUndo& e) {
        send_json(res, {{"error", e.what()}}, 409);
    } catch (const ValidationError& e) {
        send_json(res, {{"error", e.what()}}, 422);
    } catch (const DimensionMismatch& e) {
        send_json(res, {{"error", e.what()}}, 422);
    } catch (const DegenerateLine& e) {
        send_json(res, {{"error", e.what()}}, 422);
    } catch (const FlippedQuad& e) {
        send_json(res, {{"error", e.what()}}, 422);
    } catch (const json::exception& e) {
        send_json(res, {{"error", std::string("malformed JSON: ") + e.what()}}, 422);
    } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) {
        return json::object();
    }
    return json::parse(req.body);
}

}  // namespace

HttpService::HttpService(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {
    auto& srv = impl_->server;
    SessionStore& st = store;

    // SO_REUSEPORT would let a second server share an occupied port.
    srv.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes),
                   sizeof(yes));
    });
    srv.set_payload_max_length(256u << 20);

    srv.Post("/session", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::string png;
            std::optional<CameraModel> cam;
            AnnotationSet ann;
            if (req.is_multipart_form_data()) {
                if (!req.has_file("image")) {
                    throw ValidationError("multipart field 'image' is required");
                }
                png = req.get_file_value("image").content;
                if (req.has_file("camera")) {
                    cam = json::parse(req.get_file_value("camera").content).get<CameraModel>();
                }
                if (req.has_file("annotations")) {
                    ann = json::parse(req.get_file_value("annotations").content)
                              .get<AnnotationSet>();
                }
            } else {
                png = req.body;
            }
            const ImageBuffer img = decode_png(std::vector<std::uint8_t>(png.begin(), png.end()));
            send_json(res, st.create(img, cam, ann), 201);
        });
    });

    srv.Get(R"(/session/([^/]+)/state)", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, st.state(req.matches[1])); });
    });

    srv.Post(R"(/session/([^/]+)/constraints)",
             [&st](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                     send_json(res, st.patch_constraints(req.matches[1], parse_body(req)));
                 });
             });

    srv.Post(R"(/session/([^/]+)/solve)", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = parse_body(req);
            SolveRequest r;
            if (body.contains("iters")) {
                r.iterations = body.at("iters").get<int>();
            }
            if (body.contains("weights")) {
                r.weights = body.at("weights").get<EnergyWeights>();
            }
            r.async = body.value("async", false);
            send_json(res, st.solve(req.matches[1], r), r.async ? 202 : 200);
        });
    });

    srv.Get(R"(/session/([^/]+)/preview)", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            double scale = 1.0;
            if (req.has_param("scale")) {
                try {
                    scale = std::stod(req.get_param_value("scale"));
                } catch (const std::exception&) {
                    throw ValidationError("scale must be a number");
                }
            }
            const auto png = st.preview(req.matches[1], scale);
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        });
    });

    srv.Post(R"(/session/([^/]+)/undo)", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, st.undo(req.matches[1])); });
    });

    srv.Get(R"(/session/([^/]+)/export)", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, st.export_result(req.matches[1])); });
    });

    srv.Delete(R"(/session/([^/]+))", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            st.remove(id);
            send_json(res, {{"deleted", id}});
        });
    });
}

HttpService::~HttpService() { stop(); }

bool HttpService::bind(const std::string& host, int port) {
    if (port == 0) {
        impl_->port = impl_->server.bind_to_any_port(host);
        return impl_->port > 0;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        return false;
    }
    impl_->port = port;
    return true;
}

int HttpService::port() const { return impl_->port; }

void HttpService::listen() { impl_->server.listen_after_bind(); }

void HttpService::wait_until_ready() { impl_->server.wait_until_ready(); }

void HttpService::stop() {
    if (impl_->server.is_running()) {
        impl_->server.stop();
    }
}

}  // namespace wideangle
