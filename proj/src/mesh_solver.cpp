#include "wideangle/mesh_solver.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>

#include "wideangle/errors.hpp"

namespace wideangle {

// ---------------------------------------------------------------------------
// MeshGrid

MeshGrid::MeshGrid(std::vector<double> xs, std::vector<double> ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
    if (xs_.size() < 2 || ys_.size() < 2) {
        throw ValidationError("mesh needs at least 2 vertices per axis");
    }
    auto increasing = [](const std::vector<double>& v) {
        return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
    };
    if (!increasing(xs_) || !increasing(ys_)) {
        throw ValidationError("mesh rest positions must be strictly increasing");
    }
    reset();
}

MeshGrid MeshGrid::regular(int width, int height, int spacing) {
    if (width < 2 || height < 2) {
        throw ValidationError("mesh raster must be at least 2x2");
    }
    if (spacing < 1) {
        throw ValidationError("mesh spacing must be positive");
    }
    auto axis = [spacing](int extent) {
        const int n = std::max(2, static_cast<int>(std::ceil((extent - 1.0) / spacing)) + 1);
        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) {
            v[i] = (extent - 1.0) * i / (n - 1);
        }
        return v;
    };
    return MeshGrid(axis(width), axis(height));
}

void MeshGrid::reset() {
    current_.resize(xs_.size() * ys_.size());
    for (int r = 0; r < rows(); ++r) {
        for (int c = 0; c < cols(); ++c) {
            current_[vertex(r, c)] = rest(r, c);
        }
    }
}

void MeshGrid::set_current(std::vector<Vec2> positions) {
    if (positions.size() != current_.size()) {
        throw DimensionMismatch("mesh position count mismatch");
    }
    current_ = std::move(positions);
}

bool MeshGrid::contains_rest(Vec2 p) const {
    return p.x >= xs_.front() && p.x <= xs_.back() && p.y >= ys_.front() && p.y <= ys_.back();
}

MeshGrid::Cell MeshGrid::locate(Vec2 p) const {
    auto find = [](const std::vector<double>& axis, double v, int& i, double& t) {
        const auto it = std::upper_bound(axis.begin(), axis.end(), v);
        i = std::clamp(static_cast<int>(it - axis.begin()) - 1, 0,
                       static_cast<int>(axis.size()) - 2);
        t = (v - axis[i]) / (axis[i + 1] - axis[i]);
    };
    Cell cell{};
    find(xs_, p.x, cell.c, cell.s);
    find(ys_, p.y, cell.r, cell.t);
    return cell;
}

Vec2 MeshGrid::map(Vec2 p) const {
    const Cell k = locate(p);
    const Vec2 a = current(k.r, k.c);
    const Vec2 b = current(k.r, k.c + 1);
    const Vec2 d = current(k.r + 1, k.c);
    const Vec2 e = current(k.r + 1, k.c + 1);
    return (1 - k.s) * (1 - k.t) * a + k.s * (1 - k.t) * b + (1 - k.s) * k.t * d +
           k.s * k.t * e;
}

namespace {

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

}  // namespace

std::vector<std::pair<int, int>> MeshGrid::flipped_quads() const {
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r + 1 < rows(); ++r) {
        for (int c = 0; c + 1 < cols(); ++c) {
            const Vec2 v00 = current(r, c);
            const Vec2 v01 = current(r, c + 1);
            const Vec2 v10 = current(r + 1, c);
            const Vec2 v11 = current(r + 1, c + 1);
            if (!(cross(v01 - v00, v11 - v00) > 0.0) || !(cross(v11 - v00, v10 - v00) > 0.0)) {
                out.emplace_back(r, c);
            }
        }
    }
    return out;
}

namespace {

nlohmann::json points_json(const std::vector<Vec2>& pts) {
    nlohmann::json arr = nlohmann::json::array();
    for (Vec2 p : pts) {
        arr.push_back({p.x, p.y});
    }
    return arr;
}

Vec2 point_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) {
        throw ValidationError("point must be an [x, y] array");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

void to_json(nlohmann::json& j, const MeshGrid& mesh) {
    std::vector<Vec2> rest;
    for (int r = 0; r < mesh.rows(); ++r) {
        for (int c = 0; c < mesh.cols(); ++c) {
            rest.push_back(mesh.rest(r, c));
        }
    }
    j = {{"rows", mesh.rows()},
         {"cols", mesh.cols()},
         {"rest", points_json(rest)},
         {"current", points_json(mesh.current())}};
}

void from_json(const nlohmann::json& j, MeshGrid& mesh) {
    try {
        const int rows = j.at("rows").get<int>();
        const int cols = j.at("cols").get<int>();
        const auto& rest = j.at("rest");
        if (rows < 2 || cols < 2 || rest.size() != static_cast<std::size_t>(rows) * cols) {
            throw ValidationError("mesh JSON: inconsistent vertex counts");
        }
        std::vector<double> xs(cols), ys(rows);
        for (int c = 0; c < cols; ++c) {
            xs[c] = point_json(rest[c]).x;
        }
        for (int r = 0; r < rows; ++r) {
            ys[r] = point_json(rest[static_cast<std::size_t>(r) * cols]).y;
        }
        MeshGrid out(xs, ys);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                if (!(point_json(rest[static_cast<std::size_t>(r) * cols + c]) == out.rest(r, c))) {
                    throw ValidationError("mesh JSON: rest grid is not a tensor-product grid");
                }
            }
        }
        if (j.contains("current")) {
            std::vector<Vec2> cur;
            for (const auto& p : j.at("current")) {
                cur.push_back(point_json(p));
            }
            out.set_current(std::move(cur));
        }
        mesh = std::move(out);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("mesh JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Weights and constraints

void EnergyWeights::validate() const {
    for (double v : {face, background, line, regularity, boundary}) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ValidationError("energy weights must be finite and nonnegative");
        }
    }
    if (!(face > 0.0) && !(background > 0.0)) {
        throw ValidationError("face or background weight must be positive");
    }
}

void to_json(nlohmann::json& j, const EnergyWeights& w) {
    j = {{"face", w.face},
         {"background", w.background},
         {"line", w.line},
         {"regularity", w.regularity},
         {"boundary", w.boundary}};
}

void from_json(const nlohmann::json& j, EnergyWeights& w) {
    try {
        const EnergyWeights d;
        w.face = j.value("face", d.face);
        w.background = j.value("background", d.background);
        w.line = j.value("line", d.line);
        w.regularity = j.value("regularity", d.regularity);
        w.boundary = j.value("boundary", d.boundary);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("weights JSON: ") + e.what());
    }
}

void ConstraintSet::validate(const MeshGrid& mesh) const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        const PointConstraint& p = points[i];
        if (!mesh.contains_rest(p.anchor)) {
            throw ValidationError("point constraint " + std::to_string(i) +
                                  " anchor lies outside the mesh");
        }
        if (!std::isfinite(p.target.x) || !std::isfinite(p.target.y) ||
            !std::isfinite(p.weight) || p.weight < 0.0) {
            throw ValidationError("point constraint " + std::to_string(i) + " is not finite");
        }
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].size() < 2) {
            throw ValidationError("line constraint " + std::to_string(i) +
                                  " has fewer than 2 points");
        }
        for (Vec2 p : lines[i]) {
            if (!mesh.contains_rest(p)) {
                throw ValidationError("line constraint " + std::to_string(i) +
                                      " leaves the mesh");
            }
        }
    }
}

void to_json(nlohmann::json& j, const ConstraintSet& c) {
    j = nlohmann::json::object();
    j["points"] = nlohmann::json::array();
    for (const PointConstraint& p : c.points) {
        j["points"].push_back({{"anchor", {p.anchor.x, p.anchor.y}},
                               {"target", {p.target.x, p.target.y}},
                               {"weight", p.weight}});
    }
    j["lines"] = nlohmann::json::array();
    for (const Polyline& line : c.lines) {
        j["lines"].push_back(points_json(line));
    }
}

void from_json(const nlohmann::json& j, ConstraintSet& c) {
    try {
        c = ConstraintSet{};
        for (const auto& p : j.value("points", nlohmann::json::array())) {
            c.points.push_back({point_json(p.at("anchor")), point_json(p.at("target")),
                                p.value("weight", PointConstraint{}.weight)});
        }
        for (const auto& line : j.value("lines", nlohmann::json::array())) {
            Polyline pts;
            for (const auto& p : line) {
                pts.push_back(point_json(p));
            }
            c.lines.push_back(std::move(pts));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("constraints JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Data terms

namespace {

// Weighted least-squares rigid motion in complex form: a * u + t ~ p, |a| = 1.
struct RigidMotion {
    std::complex<double> a{1.0, 0.0};
    std::complex<double> t{0.0, 0.0};

    Vec2 apply(Vec2 u) const {
        const std::complex<double> z = a * std::complex<double>(u.x, u.y) + t;
        return {z.real(), z.imag()};
    }
};

RigidMotion fit_rigid(const std::vector<Vec2>& from, const std::vector<Vec2>& to,
                          const std::vector<double>& w) {
    double total = 0.0;
    std::complex<double> mu_from, mu_to;
    for (std::size_t i = 0; i < from.size(); ++i) {
        total += w[i];
        mu_from += w[i] * std::complex<double>(from[i].x, from[i].y);
        mu_to += w[i] * std::complex<double>(to[i].x, to[i].y);
    }
    RigidMotion s;
    if (!(total > 0.0)) {
        return s;
    }
    mu_from /= total;
    mu_to /= total;
    std::complex<double> num;
    for (std::size_t i = 0; i < from.size(); ++i) {
        const std::complex<double> u = std::complex<double>(from[i].x, from[i].y) - mu_from;
        const std::complex<double> p = std::complex<double>(to[i].x, to[i].y) - mu_to;
        num += w[i] * p * std::conj(u);
    }
    if (std::abs(num) > 0.0) {
        s.a = num / std::abs(num);
    }
    s.t = mu_to - s.a * mu_from;
    return s;
}

}  // namespace

std::vector<DataSample> build_data_samples(const MeshGrid& mesh, const FlowField& face_target,
                                           const ImageBuffer& heatmap, const EnergyWeights& w,
                                           const std::vector<FaceAnnotation>& faces,
                                           const FlowField* background_target, int stride) {
    w.validate();
    if (stride < 1) {
        throw ValidationError("sample stride must be positive");
    }
    const int width = face_target.width();
    const int height = face_target.height();
    if (heatmap.width() != width || heatmap.height() != height || heatmap.channels() != 1) {
        throw DimensionMismatch("heatmap must be single-channel and match the target flow");
    }
    if (background_target &&
        (background_target->width() != width || background_target->height() != height)) {
        throw DimensionMismatch("background target must match the face target");
    }
    if (!mesh.contains_rest({0.0, 0.0}) || !mesh.contains_rest({width - 1.0, height - 1.0})) {
        throw ValidationError("mesh rest grid must cover the target raster");
    }

    std::vector<DataSample> samples;
    // Face samples grouped by the face with the strongest heat, for re-anchoring.
    std::vector<std::vector<std::size_t>> groups(faces.size());
    for (int y = 0; y < height; y += stride) {
        for (int x = 0; x < width; x += stride) {
            const Vec2 p{double(x), double(y)};
            const double h = std::clamp(static_cast<double>(heatmap.at(x, y)), 0.0, 1.0);
            if (w.face > 0.0 && h > 0.0) {
                samples.push_back({p, forward_map(face_target, p), w.face * h});
                if (!faces.empty()) {
                    std::size_t best = 0;
                    for (std::size_t k = 1; k < faces.size(); ++k) {
                        if (face_heat(faces[k], p) > face_heat(faces[best], p)) {
                            best = k;
                        }
                    }
                    groups[best].push_back(samples.size() - 1);
                }
            }
            if (w.background > 0.0 && h < 1.0) {
                const Vec2 dst = background_target ? forward_map(*background_target, p) : p;
                samples.push_back({p, dst, w.background * (1.0 - h)});
            }
        }
    }
    for (const auto& group : groups) {
        std::vector<Vec2> from, to;
        std::vector<double> weight;
        for (std::size_t i : group) {
            from.push_back(samples[i].target);
            to.push_back(samples[i].rest);
            weight.push_back(samples[i].weight);
        }
        const RigidMotion s = fit_rigid(from, to, weight);
        for (std::size_t i : group) {
            DataSample& d = samples[i];
            const double h = d.weight / w.face;
            const Vec2 bg = background_target ? forward_map(*background_target, d.rest) : d.rest;
            d.target = bg + h * (s.apply(d.target) - bg);
        }
    }
    return samples;
}

// ---------------------------------------------------------------------------
// Least-squares assembly

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct Term {
    int vertex;
    double coef;
};

std::array<Term, 4> bilinear_terms(const MeshGrid& mesh, Vec2 p) {
    const MeshGrid::Cell k = mesh.locate(p);
    return {{{mesh.vertex(k.r, k.c), (1 - k.s) * (1 - k.t)},
             {mesh.vertex(k.r, k.c + 1), k.s * (1 - k.t)},
             {mesh.vertex(k.r + 1, k.c), (1 - k.s) * k.t},
             {mesh.vertex(k.r + 1, k.c + 1), k.s * k.t}}};
}

// Rows of a weighted linear least-squares system ||A x - b||^2 over the
// interleaved unknowns x = (x0, y0, x1, y1, ...).
class LinearSystem {
public:
    explicit LinearSystem(int unknowns) : unknowns_(unknowns) {}

    void add_row(const std::vector<std::pair<int, double>>& coefs, double rhs, double weight) {
        const double s = std::sqrt(weight);
        for (const auto& [col, v] : coefs) {
            if (v != 0.0) {
                triplets_.emplace_back(rows_, col, s * v);
            }
        }
        rhs_.push_back(s * rhs);
        ++rows_;
    }

    // Same scalar coefficients on the x and the y unknowns.
    template <typename Terms>
    void add_point_rows(const Terms& terms, Vec2 target, double weight) {
        std::vector<std::pair<int, double>> cx, cy;
        for (const Term& t : terms) {
            cx.emplace_back(2 * t.vertex, t.coef);
            cy.emplace_back(2 * t.vertex + 1, t.coef);
        }
        add_row(cx, target.x, weight);
        add_row(cy, target.y, weight);
    }

    SparseMatrix matrix() const {
        SparseMatrix a(rows_, unknowns_);
        a.setFromTriplets(triplets_.begin(), triplets_.end());
        return a;
    }
    Eigen::VectorXd rhs() const {
        return Eigen::Map<const Eigen::VectorXd>(rhs_.data(), static_cast<Eigen::Index>(rhs_.size()));
    }

private:
    int unknowns_;
    int rows_ = 0;
    std::vector<Triplet> triplets_;
    std::vector<double> rhs_;
};

struct LineSamples {
    std::vector<std::array<Term, 4>> points;
};

std::vector<LineSamples> sample_constraint_lines(const MeshGrid& mesh,
                                                 const ConstraintSet& constraints,
                                                 double spacing) {
    std::vector<LineSamples> out;
    for (const Polyline& line : constraints.lines) {
        const double length = polyline_length(line);
        if (!(length > 0.0)) {
            continue;
        }
        const int n = std::max(2, static_cast<int>(std::ceil(length / spacing)));
        LineSamples ls;
        for (Vec2 q : sample_line(line, n)) {
            ls.points.push_back(bilinear_terms(mesh, q));
        }
        out.push_back(std::move(ls));
    }
    return out;
}

Vec2 eval_terms(const std::array<Term, 4>& terms, const std::vector<Vec2>& positions) {
    Vec2 v;
    for (const Term& t : terms) {
        v = v + t.coef * positions[t.vertex];
    }
    return v;
}

// Unit normal of the least-squares line through the points; nullopt if they coincide.
std::optional<Vec2> best_fit_normal(const std::vector<Vec2>& pts) {
    Vec2 mean;
    for (Vec2 p : pts) {
        mean = mean + p;
    }
    mean = (1.0 / pts.size()) * mean;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (Vec2 p : pts) {
        const Vec2 d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    if (sxx + syy <= 0.0) {
        return std::nullopt;
    }
    const double angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    return Vec2{-std::sin(angle), std::cos(angle)};
}

// Rows n . (V(q_i) - mean_j V(q_j)) for one line, with n fitted at `positions`.
void add_line_rows(LinearSystem& sys, const LineSamples& line, const std::vector<Vec2>& positions,
                   double weight) {
    std::vector<Vec2> mapped;
    for (const auto& terms : line.points) {
        mapped.push_back(eval_terms(terms, positions));
    }
    const std::optional<Vec2> normal = best_fit_normal(mapped);
    if (!normal) {
        return;
    }
    const double m = static_cast<double>(line.points.size());
    std::vector<std::pair<int, double>> mean_coefs;  // vertex -> sum_j B_j / m
    for (const auto& terms : line.points) {
        for (const Term& t : terms) {
            auto it = std::find_if(mean_coefs.begin(), mean_coefs.end(),
                                   [&](const auto& e) { return e.first == t.vertex; });
            if (it == mean_coefs.end()) {
                mean_coefs.emplace_back(t.vertex, t.coef / m);
            } else {
                it->second += t.coef / m;
            }
        }
    }
    for (const auto& terms : line.points) {
        std::vector<std::pair<int, double>> per_vertex = mean_coefs;
        for (auto& e : per_vertex) {
            e.second = -e.second;
        }
        for (const Term& t : terms) {
            auto it = std::find_if(per_vertex.begin(), per_vertex.end(),
                                   [&](const auto& e) { return e.first == t.vertex; });
            it->second += t.coef;
        }
        std::vector<std::pair<int, double>> row;
        for (const auto& [v, c] : per_vertex) {
            row.emplace_back(2 * v, normal->x * c);
            row.emplace_back(2 * v + 1, normal->y * c);
        }
        sys.add_row(row, 0.0, weight);
    }
}

// Every rest-grid quad corner written in the frame of its two quad neighbours.
void add_similarity_rows(LinearSystem& sys, const MeshGrid& mesh, double weight) {
    for (int r = 0; r + 1 < mesh.rows(); ++r) {
        for (int c = 0; c + 1 < mesh.cols(); ++c) {
            const std::array<std::pair<int, int>, 4> ring = {
                {{r, c}, {r, c + 1}, {r + 1, c + 1}, {r + 1, c}}};
            for (int i = 0; i < 4; ++i) {
                const auto [ri, ci] = ring[i];
                const auto [rp, cp] = ring[(i + 3) % 4];
                const auto [rn, cn] = ring[(i + 1) % 4];
                const Vec2 e = mesh.rest(rp, cp) - mesh.rest(rn, cn);
                const Vec2 d = mesh.rest(ri, ci) - mesh.rest(rn, cn);
                const double len2 = e.x * e.x + e.y * e.y;
                const double u = (d.x * e.x + d.y * e.y) / len2;
                const double s = (d.x * -e.y + d.y * e.x) / len2;
                const int vi = mesh.vertex(ri, ci);
                const int vp = mesh.vertex(rp, cp);
                const int vn = mesh.vertex(rn, cn);
                // x: Vi.x - Vn.x - u (Vp.x - Vn.x) + s (Vp.y - Vn.y)
                sys.add_row({{2 * vi, 1.0},
                             {2 * vn, -1.0 + u},
                             {2 * vp, -u},
                             {2 * vp + 1, s},
                             {2 * vn + 1, -s}},
                            0.0, weight);
                // y: Vi.y - Vn.y - u (Vp.y - Vn.y) - s (Vp.x - Vn.x)
                sys.add_row({{2 * vi + 1, 1.0},
                             {2 * vn + 1, -1.0 + u},
                             {2 * vp + 1, -u},
                             {2 * vp, -s},
                             {2 * vn, s}},
                            0.0, weight);
            }
        }
    }
}

// Border vertices keep their outward coordinate on the frame edge.
void add_boundary_rows(LinearSystem& sys, const MeshGrid& mesh, double weight) {
    const int last_r = mesh.rows() - 1;
    const int last_c = mesh.cols() - 1;
    for (int r = 0; r <= last_r; ++r) {
        sys.add_row({{2 * mesh.vertex(r, 0), 1.0}}, mesh.xs().front(), weight);
        sys.add_row({{2 * mesh.vertex(r, last_c), 1.0}}, mesh.xs().back(), weight);
    }
    for (int c = 0; c <= last_c; ++c) {
        sys.add_row({{2 * mesh.vertex(0, c) + 1, 1.0}}, mesh.ys().front(), weight);
        sys.add_row({{2 * mesh.vertex(last_r, c) + 1, 1.0}}, mesh.ys().back(), weight);
    }
}

LinearSystem assemble_fixed(const MeshGrid& mesh, const std::vector<DataSample>& samples,
                            const ConstraintSet& constraints, const EnergyWeights& weights) {
    LinearSystem sys(2 * mesh.vertex_count());
    for (const DataSample& s : samples) {
        if (s.weight > 0.0) {
            sys.add_point_rows(bilinear_terms(mesh, s.rest), s.target, s.weight);
        }
    }
    if (weights.regularity > 0.0) {
        add_similarity_rows(sys, mesh, weights.regularity);
    }
    if (weights.boundary > 0.0) {
        add_boundary_rows(sys, mesh, weights.boundary);
    }
    for (const PointConstraint& p : constraints.points) {
        if (p.weight > 0.0) {
            sys.add_point_rows(bilinear_terms(mesh, p.anchor), p.target, p.weight);
        }
    }
    return sys;
}

Eigen::VectorXd to_vector(const std::vector<Vec2>& positions) {
    Eigen::VectorXd x(2 * positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        x[2 * i] = positions[i].x;
        x[2 * i + 1] = positions[i].y;
    }
    return x;
}

std::vector<Vec2> to_positions(const Eigen::VectorXd& x) {
    std::vector<Vec2> out(x.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = {x[2 * i], x[2 * i + 1]};
    }
    return out;
}

LinearSystem with_lines(LinearSystem sys, const std::vector<LineSamples>& lines,
                        const std::vector<Vec2>& positions, double weight) {
    if (weight > 0.0) {
        for (const LineSamples& line : lines) {
            add_line_rows(sys, line, positions, weight);
        }
    }
    return sys;
}

double residual_energy(const LinearSystem& sys, const Eigen::VectorXd& x) {
    return (sys.matrix() * x - sys.rhs()).squaredNorm();
}

}  // namespace

SolveResult solve_samples(const MeshGrid& mesh, const std::vector<DataSample>& samples,
                          const ConstraintSet& constraints, const EnergyWeights& weights,
                          const SolveOptions& options) {
    weights.validate();
    constraints.validate(mesh);
    if (options.iterations < 1) {
        throw ValidationError("solver needs at least one outer iteration");
    }
    const LinearSystem fixed = assemble_fixed(mesh, samples, constraints, weights);
    const auto lines = sample_constraint_lines(mesh, constraints, options.line_sample_spacing);

    SolveResult result{mesh, {}, {}, {}};
    // The first linearization uses the annotated lines themselves (rest positions).
    MeshGrid rest = mesh;
    rest.reset();
    std::vector<Vec2> linearize_at = rest.current();
    Eigen::VectorXd x = to_vector(mesh.current());

    for (int iter = 0; iter < options.iterations; ++iter) {
        const LinearSystem sys = with_lines(fixed, lines, linearize_at, weights.line);
        const SparseMatrix a = sys.matrix();
        const SparseMatrix normal = SparseMatrix(a.transpose() * a);
        const Eigen::VectorXd rhs = a.transpose() * sys.rhs();

        Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                                 Eigen::DiagonalPreconditioner<double>>
            cg;
        cg.setTolerance(options.cg_tolerance);
        cg.setMaxIterations(options.cg_max_iterations);
        cg.compute(normal);
        // Solved for the step from the warm start, so the tolerance is relative
        // to the warm start's residual.
        const Eigen::VectorXd step = cg.solve(rhs - normal * x);
        const Eigen::VectorXd next = x + step;
        if (cg.info() != Eigen::Success || !next.allFinite()) {
            throw SolverDiverged("conjugate gradient did not converge (residual " +
                                 std::to_string(cg.error()) + " after " +
                                 std::to_string(cg.iterations()) + " iterations)");
        }
        x = next;
        linearize_at = to_positions(x);
        result.cg_iterations.push_back(static_cast<int>(cg.iterations()));
        result.energies.push_back(
            residual_energy(with_lines(fixed, lines, linearize_at, weights.line), x));
    }
    result.mesh.set_current(to_positions(x));
    result.flipped_quads = result.mesh.flipped_quads();
    return result;
}

double mesh_energy(const MeshGrid& mesh, const std::vector<DataSample>& samples,
                   const ConstraintSet& constraints, const EnergyWeights& weights,
                   const SolveOptions& options) {
    const LinearSystem fixed = assemble_fixed(mesh, samples, constraints, weights);
    const auto lines = sample_constraint_lines(mesh, constraints, options.line_sample_spacing);
    return residual_energy(with_lines(fixed, lines, mesh.current(), weights.line),
                           to_vector(mesh.current()));
}

SolveResult solve(const MeshGrid& mesh, const FlowField& target, const ImageBuffer& heatmap,
                  const ConstraintSet& constraints, const EnergyWeights& weights,
                  const SolveOptions& options, const std::vector<FaceAnnotation>& faces) {
    const auto samples = build_data_samples(mesh, target, heatmap, weights, faces, nullptr,
                                            options.sample_stride);
    return solve_samples(mesh, samples, constraints, weights, options);
}

// ---------------------------------------------------------------------------
// Mesh to flow

namespace {

struct Quad {
    Vec2 v00, v01, v10, v11;

    Vec2 eval(double s, double t) const {
        return (1 - s) * (1 - t) * v00 + s * (1 - t) * v01 + (1 - s) * t * v10 + s * t * v11;
    }
};

// Newton inversion of the bilinear quad map; returns false if it stalls.
bool inverse_bilinear(const Quad& q, Vec2 p, double& s, double& t) {
    s = 0.5;
    t = 0.5;
    for (int iter = 0; iter < 20; ++iter) {
        const Vec2 r = q.eval(s, t) - p;
        if (std::hypot(r.x, r.y) < 1e-9) {
            return true;
        }
        const Vec2 ds = (1 - t) * (q.v01 - q.v00) + t * (q.v11 - q.v10);
        const Vec2 dt = (1 - s) * (q.v10 - q.v00) + s * (q.v11 - q.v01);
        const double det = cross(ds, dt);
        if (std::abs(det) < 1e-14) {
            return false;
        }
        s -= cross(r, dt) / det;
        t -= cross(ds, r) / det;
    }
    const Vec2 r = q.eval(s, t) - p;
    return std::hypot(r.x, r.y) < 1e-6;
}

double outside_distance(double s, double t) {
    return std::max({0.0, -s, s - 1.0, -t, t - 1.0});
}

}  // namespace

FlowField mesh_to_flow(const MeshGrid& mesh, int out_width, int out_height) {
    const auto flipped = mesh.flipped_quads();
    if (!flipped.empty()) {
        throw FlippedQuad(std::to_string(flipped.size()) + " flipped quad(s), first at row " +
                          std::to_string(flipped.front().first) + " col " +
                          std::to_string(flipped.front().second));
    }
    FlowField flow(out_width, out_height);
    std::vector<char> filled(static_cast<std::size_t>(out_width) * out_height, 0);
    auto quad_at = [&](int r, int c) {
        return Quad{mesh.current(r, c), mesh.current(r, c + 1), mesh.current(r + 1, c),
                    mesh.current(r + 1, c + 1)};
    };
    auto emit = [&](int r, int c, int x, int y, double s, double t) {
        const Vec2 rest{mesh.xs()[c] + s * (mesh.xs()[c + 1] - mesh.xs()[c]),
                        mesh.ys()[r] + t * (mesh.ys()[r + 1] - mesh.ys()[r])};
        flow.set(x, y, rest - Vec2{double(x), double(y)});
        filled[static_cast<std::size_t>(y) * out_width + x] = 1;
    };

    constexpr double kEdge = 1e-9;
    for (int r = 0; r + 1 < mesh.rows(); ++r) {
        for (int c = 0; c + 1 < mesh.cols(); ++c) {
            const Quad q = quad_at(r, c);
            // An undeformed quad is the identity; skip the inversion round-off.
            const bool at_rest = q.v00 == mesh.rest(r, c) && q.v01 == mesh.rest(r, c + 1) &&
                                 q.v10 == mesh.rest(r + 1, c) && q.v11 == mesh.rest(r + 1, c + 1);
            const double lo_x = std::min({q.v00.x, q.v01.x, q.v10.x, q.v11.x});
            const double hi_x = std::max({q.v00.x, q.v01.x, q.v10.x, q.v11.x});
            const double lo_y = std::min({q.v00.y, q.v01.y, q.v10.y, q.v11.y});
            const double hi_y = std::max({q.v00.y, q.v01.y, q.v10.y, q.v11.y});
            const int x0 = std::max(0, static_cast<int>(std::ceil(lo_x - kEdge)));
            const int x1 = std::min(out_width - 1, static_cast<int>(std::floor(hi_x + kEdge)));
            const int y0 = std::max(0, static_cast<int>(std::ceil(lo_y - kEdge)));
            const int y1 = std::min(out_height - 1, static_cast<int>(std::floor(hi_y + kEdge)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    if (filled[static_cast<std::size_t>(y) * out_width + x]) {
                        continue;
                    }
                    if (at_rest) {
                        filled[static_cast<std::size_t>(y) * out_width + x] = 1;
                        continue;
                    }
                    double s, t;
                    if (inverse_bilinear(q, {double(x), double(y)}, s, t) &&
                        outside_distance(s, t) <= kEdge) {
                        emit(r, c, x, y, std::clamp(s, 0.0, 1.0), std::clamp(t, 0.0, 1.0));
                    }
                }
            }
        }
    }

    // Pixels the deformed mesh does not cover (it may pull in from the frame):
    // extrapolate from the best-matching quad around the pixel's rest cell.
    for (int y = 0; y < out_height; ++y) {
        for (int x = 0; x < out_width; ++x) {
            if (filled[static_cast<std::size_t>(y) * out_width + x]) {
                continue;
            }
            const MeshGrid::Cell home = mesh.locate({double(x), double(y)});
            double best = std::numeric_limits<double>::infinity();
            int br = home.r, bc = home.c;
            double bs = home.s, bt = home.t;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int r = home.r + dr;
                    const int c = home.c + dc;
                    if (r < 0 || c < 0 || r + 1 >= mesh.rows() || c + 1 >= mesh.cols()) {
                        continue;
                    }
                    double s, t;
                    if (inverse_bilinear(quad_at(r, c), {double(x), double(y)}, s, t) &&
                        outside_distance(s, t) < best) {
                        best = outside_distance(s, t);
                        br = r;
                        bc = c;
                        bs = s;
                        bt = t;
                    }
                }
            }
            if (!std::isfinite(best)) {
                throw FlippedQuad("cannot invert the mesh around pixel (" + std::to_string(x) +
                                  ", " + std::to_string(y) + ")");
            }
            emit(br, bc, x, y, bs, bt);
        }
    }
    return flow;
}

std::pair<FlowField, ImageBuffer> build_target_flow(const CameraModel& cam,
                                                    const AnnotationSet& faces, int out_width,
                                                    int out_height) {
    const FlowField persp = perspective_undistort_flow(cam, out_width, out_height);
    const FlowField stereo = stereographic_flow(cam, out_width, out_height);
    ImageBuffer heat = face_heatmap(faces.faces, out_width, out_height);
    return {blend_flows(persp, stereo, heat), std::move(heat)};
}

}  // namespace wideangle
