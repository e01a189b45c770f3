#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wideangle/errors.hpp"
#include "wideangle/flow.hpp"
#include "wideangle/image.hpp"
#include "wideangle/mesh_solver.hpp"
#include "wideangle/projection.hpp"
#include "wideangle/supervision.hpp"

namespace wideangle {

inline constexpr std::size_t kHistoryDepth = 32;

class SessionNotFound : public Error {
public:
    using Error::Error;
};

class SolveInProgress : public Error {
public:
    using Error::Error;
};

class NothingToUndo : public Error {
public:
    using Error::Error;
};

struct SolveDiagnostics {
    std::vector<double> energies;
    std::vector<int> cg_iterations;
    std::vector<std::pair<int, int>> flipped_quads;
    /// Straightness of each line constraint under the solved mesh.
    std::vector<double> line_acc;
};

struct Session {
    std::string id;
    ImageBuffer image;
    std::optional<CameraModel> cam;
    AnnotationSet annotations;
    MeshGrid mesh;
    ConstraintSet constraints;
    EnergyWeights weights;
    std::deque<MeshGrid> history;

    FlowField face_target;
    ImageBuffer heatmap;

    bool solving = false;
    std::optional<SolveDiagnostics> last_solve;
    std::string last_error;
    std::future<void> worker;

    std::mutex mutex;
};

struct SolveRequest {
    std::optional<int> iterations;
    std::optional<EnergyWeights> weights;
    bool async = false;
};

/// In-memory session registry behind the HTTP API. Every method is safe to
/// call concurrently; a solve only holds its own session's lock while reading
/// inputs and publishing results.
class SessionStore {
public:
    explicit SessionStore(std::optional<std::filesystem::path> data_dir = std::nullopt,
                          int mesh_spacing = 32);
    ~SessionStore();

    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    /// Returns {id, mesh, heatmap}. Throws ValidationError on bad inputs.
    nlohmann::json create(const ImageBuffer& image, const std::optional<CameraModel>& cam,
                          const AnnotationSet& annotations);

    nlohmann::json state(const std::string& id);

    /// Patch keys: add_points, add_lines, remove_points (indices),
    /// remove_lines (indices), clear. Applied atomically.
    nlohmann::json patch_constraints(const std::string& id, const nlohmann::json& patch);

    /// Synchronous solves return the solved state; async ones return at once
    /// with "solving": true. Throws SolveInProgress.
    nlohmann::json solve(const std::string& id, const SolveRequest& request);

    /// Warped image at the given scale, PNG encoded.
    std::vector<std::uint8_t> preview(const std::string& id, double scale);

    nlohmann::json undo(const std::string& id);

    /// {corr_flow, corrected}, both base64.
    nlohmann::json export_result(const std::string& id);

    /// Removes the session, snapshotting it under the data directory if one is set.
    void remove(const std::string& id);

    /// Blocks until the session's running solve (if any) finishes.
    void wait(const std::string& id);

    std::size_t size() const;

private:
    std::shared_ptr<Session> find(const std::string& id) const;
    std::string new_id();

    std::optional<std::filesystem::path> data_dir_;
    int spacing_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t rng_state_;
};

nlohmann::json session_json(const Session& s);

/// HTTP front end for a SessionStore.
class HttpService {
public:
    explicit HttpService(SessionStore& store);
    ~HttpService();

    /// False if the address cannot be bound. Port 0 picks a free port.
    bool bind(const std::string& host, int port);
    int port() const;
    /// Serves until stop() is called.
    void listen();
    /// Blocks until listen() has started accepting.
    void wait_until_ready();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace wideangle
