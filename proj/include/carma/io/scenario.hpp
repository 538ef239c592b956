#ifndef CARMA_IO_SCENARIO_HPP
#define CARMA_IO_SCENARIO_HPP

// JSON scenario files (schema_version 1).
//
//   {
//     "schema_version": 1,
//     "grid":  {"axes": [{"lo": 0, "hi": 1, "cells": 32}], "periodic": true}
//              or {"points": [[x], ...], "weights": [...], "periodic": false},
//     "model": {"p": 2, "q": 1, "cone_mode": true,
//               "A": [op, ...],          // A_1 .. A_p
//               "E": op,
//               "C": [op, ...],          // C_0 .. C_q
//               "driver": {...},
//               "initial": "zero" | [field, ...]},
//     "run":   {...}                      // see RunSpec
//   }
//
// Schema errors carry the config line of the offending value and its JSON
// pointer.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "carma/analytics.hpp"
#include "carma/core.hpp"
#include "carma/dynamics.hpp"
#include "carma/io/csv.hpp"
#include "carma/levy.hpp"
#include "carma/model.hpp"
#include "carma/operators.hpp"
#include "carma/quadrature.hpp"

namespace carma::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Line (1-based) of every value in a JSON text, keyed by JSON pointer.
/// A small scanner; only run on text that already parsed.
inline std::map<std::string, int> pointer_lines(const std::string& text) {
    std::map<std::string, int> lines;
    struct Frame {
        bool object;
        std::string base;
        std::size_t index;
        std::string key;
    };
    std::vector<Frame> stack;
    int line = 1;
    std::size_t i = 0;
    auto escape = [](const std::string& k) {
        std::string out;
        for (char c : k) {
            if (c == '~') out += "~0";
            else if (c == '/') out += "~1";
            else out += c;
        }
        return out;
    };
    auto current = [&]() -> std::string {
        if (stack.empty()) return "";
        const auto& f = stack.back();
        return f.base + "/" + (f.object ? escape(f.key) : std::to_string(f.index));
    };
    auto read_string = [&]() {
        std::string s;
        ++i;  // opening quote
        while (i < text.size() && text[i] != '"') {
            if (text[i] == '\\' && i + 1 < text.size()) {
                char e = text[i + 1];
                s += (e == 'n' ? '\n' : e == 't' ? '\t' : e);
                i += 2;
                continue;
            }
            s += text[i++];
        }
        ++i;
        return s;
    };
    bool expect_key = false;
    while (i < text.size()) {
        char c = text[i];
        if (c == '\n') {
            ++line;
            ++i;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r' || c == ':') {
            ++i;
            continue;
        }
        if (c == ',') {
            if (!stack.empty()) {
                if (stack.back().object) expect_key = true;
                else ++stack.back().index;
            }
            ++i;
            continue;
        }
        if (c == '}' || c == ']') {
            stack.pop_back();
            expect_key = false;
            ++i;
            continue;
        }
        if (expect_key && c == '"') {
            stack.back().key = read_string();
            expect_key = false;
            continue;
        }
        // start of a value
        lines.emplace(current(), line);
        if (c == '{' || c == '[') {
            stack.push_back({c == '{', current(), 0, ""});
            expect_key = c == '{';
            ++i;
        } else if (c == '"') {
            read_string();
        } else {
            while (i < text.size() && std::string_view(",}] \t\r\n").find(text[i]) == std::string_view::npos) ++i;
        }
    }
    return lines;
}

/// Accessor that knows where it is in the document, for error messages.
class Node {
public:
    Node(const json& value, std::string pointer, const std::map<std::string, int>* lines)
        : value_(&value), pointer_(std::move(pointer)), lines_(lines) {}

    const json& value() const { return *value_; }
    const std::string& pointer() const { return pointer_; }

    [[noreturn]] void fail(const std::string& msg) const {
        int line = 0;
        std::string p = pointer_;
        while (lines_) {
            auto it = lines_->find(p);
            if (it != lines_->end()) {
                line = it->second;
                break;
            }
            if (p.empty()) break;
            p = p.substr(0, p.rfind('/'));
        }
        std::string where = "config";
        if (line > 0) where += ":" + std::to_string(line);
        model_error(where + ": " + (pointer_.empty() ? "/" : pointer_) + ": " + msg);
    }

    bool has(const std::string& key) const { return value_->is_object() && value_->contains(key); }

    Node operator[](const std::string& key) const {
        if (!value_->is_object()) fail("expected an object");
        auto it = value_->find(key);
        if (it == value_->end()) fail("missing required key '" + key + "'");
        return Node(*it, pointer_ + "/" + key, lines_);
    }

    Node at(std::size_t k) const {
        if (!value_->is_array() || k >= value_->size()) fail("index out of range");
        return Node((*value_)[k], pointer_ + "/" + std::to_string(k), lines_);
    }

    std::size_t size() const {
        if (!value_->is_array()) fail("expected an array");
        return value_->size();
    }

    bool is_string() const { return value_->is_string(); }
    bool is_number() const { return value_->is_number(); }
    bool is_array() const { return value_->is_array(); }
    bool is_object() const { return value_->is_object(); }

    double number() const {
        if (!value_->is_number()) fail("expected a number");
        double v = value_->get<double>();
        if (!std::isfinite(v)) fail("expected a finite number");
        return v;
    }

    std::uint64_t uint() const {
        if (!value_->is_number_unsigned() && !(value_->is_number_integer() && value_->get<long long>() >= 0)) {
            fail("expected a non-negative integer");
        }
        return value_->get<std::uint64_t>();
    }

    bool boolean() const {
        if (!value_->is_boolean()) fail("expected true or false");
        return value_->get<bool>();
    }

    std::string string() const {
        if (!value_->is_string()) fail("expected a string");
        return value_->get<std::string>();
    }

    std::vector<double> numbers() const {
        std::vector<double> out;
        for (std::size_t k = 0; k < size(); ++k) out.push_back(at(k).number());
        return out;
    }

    double number_or(const std::string& key, double fallback) const {
        return has(key) ? (*this)[key].number() : fallback;
    }
    std::uint64_t uint_or(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? (*this)[key].uint() : fallback;
    }
    bool bool_or(const std::string& key, bool fallback) const {
        return has(key) ? (*this)[key].boolean() : fallback;
    }

    /// Wraps a library error with this node's location.
    template <class F>
    auto guard(F&& f) const -> decltype(f()) {
        try {
            return f();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::model || std::string_view(e.what()).starts_with("config")) throw;
            fail(e.what());
        }
    }

private:
    const json* value_;
    std::string pointer_;
    const std::map<std::string, int>* lines_;
};

inline GridPtr parse_grid(const Node& n) {
    const bool periodic = n.bool_or("periodic", false);
    if (n.has("axes")) {
        auto axes_node = n["axes"];
        std::vector<Axis> axes;
        for (std::size_t k = 0; k < axes_node.size(); ++k) {
            auto a = axes_node.at(k);
            auto cells = a["cells"].uint();
            if (cells == 0) a["cells"].fail("an axis needs at least one cell");
            axes.push_back({a["lo"].number(), a["hi"].number(), static_cast<std::size_t>(cells)});
        }
        return n.guard([&] { return Grid::rectilinear(axes, periodic); });
    }
    if (n.has("points")) {
        auto pts = n["points"];
        std::vector<std::vector<double>> points;
        for (std::size_t k = 0; k < pts.size(); ++k) {
            auto p = pts.at(k);
            points.push_back(p.is_number() ? std::vector<double>{p.number()} : p.numbers());
        }
        auto weights = n["weights"].numbers();
        return n.guard([&] { return Grid::from_points(points, weights, periodic); });
    }
    n.fail("grid needs either 'axes' or 'points'");
}

/// Grid-function forms shared by densities and test functions:
///   number                          constant
///   {"constant": c}
///   {"values": [...]}
///   {"gaussian": {"center": [..], "width": s, "mass": m}}   normalized bump
///   {"cell": i, "value": v}          one non-zero cell
///   {"box": {"lo": [..], "hi": [..], "value": v}}          v on the overlap
inline Vec parse_field(const Node& n, const Grid& grid) {
    const auto size = static_cast<Eigen::Index>(grid.size());
    if (n.is_number()) return Vec::Constant(size, n.number());
    if (!n.is_object()) n.fail("expected a number or a field object");
    if (n.has("constant")) return Vec::Constant(size, n["constant"].number());
    if (n.has("values")) {
        auto v = n["values"].numbers();
        if (v.size() != grid.size()) {
            n["values"].fail("expected " + std::to_string(grid.size()) + " values, got " + std::to_string(v.size()));
        }
        return Eigen::Map<Vec>(v.data(), size);
    }
    if (n.has("gaussian")) {
        auto gn = n["gaussian"];
        auto center = gn["center"].is_number() ? std::vector<double>{gn["center"].number()} : gn["center"].numbers();
        if (center.size() != grid.dim()) gn["center"].fail("center dimension does not match the grid");
        const double width = gn["width"].number();
        if (!(width > 0.0)) gn["width"].fail("width must be > 0");
        const double mass = gn.number_or("mass", 1.0);
        Vec v(size);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            auto x = grid.point(i);
            double r2 = 0.0;
            for (std::size_t k = 0; k < grid.dim(); ++k) {
                double d = x[k] - center[k];
                if (grid.periodic() && grid.is_rectilinear()) {
                    double len = grid.axes()[k].hi - grid.axes()[k].lo;
                    d -= len * std::round(d / len);
                }
                r2 += d * d;
            }
            v[static_cast<Eigen::Index>(i)] = std::exp(-0.5 * r2 / (width * width));
        }
        double total = grid.weights().dot(v);
        if (!(total > 0.0)) gn.fail("gaussian has no mass on the grid");
        return v * (mass / total);
    }
    if (n.has("cell")) {
        auto cell = n["cell"].uint();
        if (cell >= grid.size()) n["cell"].fail("cell index out of range");
        Vec v = Vec::Zero(size);
        v[static_cast<Eigen::Index>(cell)] = n.number_or("value", 1.0);
        return v;
    }
    if (n.has("box")) {
        auto b = n["box"];
        auto lo = b["lo"].is_number() ? std::vector<double>{b["lo"].number()} : b["lo"].numbers();
        auto hi = b["hi"].is_number() ? std::vector<double>{b["hi"].number()} : b["hi"].numbers();
        if (lo.size() != grid.dim() || hi.size() != grid.dim()) b.fail("box dimension does not match the grid");
        std::vector<std::pair<double, double>> box;
        for (std::size_t k = 0; k < lo.size(); ++k) box.emplace_back(lo[k], hi[k]);
        const double value = b.number_or("value", 1.0);
        Vec v(size);
        for (std::size_t i = 0; i < grid.size(); ++i) v[static_cast<Eigen::Index>(i)] = value * grid.overlap_fraction(i, box);
        return v;
    }
    n.fail("unknown field form (expected constant, values, gaussian, cell or box)");
}

inline Density parse_density(const Node& n, const GridPtr& grid, bool positive = true) {
    Density d(grid, parse_field(n, *grid));
    if (positive && !d.is_positive()) n.fail("density must be non-negative");
    return d;
}

inline TestFunction parse_test_function(const Node& n, const GridPtr& grid) {
    return TestFunction(grid, parse_field(n, *grid));
}

/// {"kind": "scaled_identity", "c": x} | {"kind": "zero"}
/// | {"kind": "dense", "matrix": [[..], ..]}
/// | {"kind": "convolution", "kernel": field, "truncate": false, "scale": 1}
/// | {"kind": "sum", "terms": [op, ...]}
/// A bare number is shorthand for scaled_identity.
inline LinOp parse_op(const Node& n, const GridPtr& grid) {
    if (n.is_number()) return LinOp::identity(grid, n.number());
    const auto kind = n["kind"].string();
    if (kind == "scaled_identity") return LinOp::identity(grid, n["c"].number());
    if (kind == "zero") return LinOp::zero(grid);
    if (kind == "dense") {
        auto rows = n["matrix"];
        const auto sz = grid->size();
        if (rows.size() != sz) rows.fail("dense matrix must have " + std::to_string(sz) + " rows");
        Mat m(static_cast<Eigen::Index>(sz), static_cast<Eigen::Index>(sz));
        for (std::size_t i = 0; i < sz; ++i) {
            auto r = rows.at(i).numbers();
            if (r.size() != sz) rows.at(i).fail("dense matrix row must have " + std::to_string(sz) + " entries");
            for (std::size_t j = 0; j < sz; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
        }
        return n.guard([&] { return LinOp::dense(grid, m); });
    }
    if (kind == "convolution") {
        Density kernel(grid, n.number_or("scale", 1.0) * parse_field(n["kernel"], *grid));
        const bool truncate = n.bool_or("truncate", false);
        return n.guard([&] { return LinOp::convolution(kernel, truncate); });
    }
    if (kind == "sum") {
        auto terms = n["terms"];
        if (terms.size() == 0) terms.fail("sum needs at least one term");
        Mat m = parse_op(terms.at(0), grid).matrix();
        for (std::size_t k = 1; k < terms.size(); ++k) m += parse_op(terms.at(k), grid).matrix();
        return LinOp::dense(grid, m);
    }
    n["kind"].fail("unknown operator kind '" + kind + "'");
}

/// {"kind": "deterministic", "value": v} | {"kind": "discrete", "values": [..],
/// "probs": [..]} | {"kind": "exponential", "rate": r}
inline AmplitudeLaw parse_amplitude(const Node& n) {
    const auto kind = n["kind"].string();
    return n.guard([&] {
        if (kind == "deterministic") return AmplitudeLaw::deterministic(n["value"].number());
        if (kind == "discrete") return AmplitudeLaw::discrete(n["values"].numbers(), n["probs"].numbers());
        if (kind == "exponential") return AmplitudeLaw::exponential(n["rate"].number());
        n["kind"].fail("unknown amplitude kind '" + kind + "'");
    });
}

inline std::vector<AmplitudeLaw> parse_amplitudes(const Node& n) {
    if (n.has("amplitude")) return {parse_amplitude(n["amplitude"])};
    auto list = n["amplitudes"];
    std::vector<AmplitudeLaw> out;
    for (std::size_t k = 0; k < list.size(); ++k) out.push_back(parse_amplitude(list.at(k)));
    return out;
}

/// "uniform" (normalized cell weights) | {"cell": i} | field of probabilities.
inline LocationLaw parse_locations(const Node& n, const GridPtr& grid) {
    if (n.is_string()) {
        if (n.string() != "uniform") n.fail("unknown location law '" + n.string() + "'");
        return LocationLaw::from_weights(*grid);
    }
    if (n.is_object() && n.has("cell") && !n.has("value")) {
        auto cell = n["cell"].uint();
        if (cell >= grid->size()) n["cell"].fail("cell index out of range");
        return LocationLaw::single(grid->size(), static_cast<std::size_t>(cell));
    }
    Vec p = parse_field(n, *grid);
    return n.guard([&] { return LocationLaw(p); });
}

inline LevyDriver parse_driver(const Node& n, const GridPtr& grid) {
    const auto kind = n["kind"].string();
    if (kind == "drift_only") {
        auto gamma = parse_density(n["drift"], grid);
        return n.guard([&] { return LevyDriver::drift_only(gamma); });
    }
    if (kind == "finite_basis") {
        FiniteBasis s;
        auto basis = n["basis"];
        for (std::size_t k = 0; k < basis.size(); ++k) s.basis.push_back(parse_density(basis.at(k), grid));
        s.drift = n.has("drift") ? parse_density(n["drift"], grid) : Density::zeros(grid);
        s.intensity = n["intensity"].number();
        s.amplitudes = parse_amplitudes(n);
        if (s.amplitudes.size() == 1 && s.basis.size() > 1) s.amplitudes.assign(s.basis.size(), s.amplitudes.front());
        return n.guard([&] { return LevyDriver(grid, s); });
    }
    if (kind == "shifted_profile") {
        ShiftedProfile s;
        s.profile = parse_density(n["profile"], grid);
        s.drift_scale = n.number_or("drift_scale", 0.0);
        s.intensity = n["intensity"].number();
        s.locations = n.has("locations") ? parse_locations(n["locations"], grid) : LocationLaw::from_weights(*grid);
        s.amplitudes = parse_amplitudes(n);
        return n.guard([&] { return LevyDriver(grid, s); });
    }
    if (kind == "dirac_atoms") {
        DiracAtoms s;
        s.intensity = n["intensity"].number();
        s.locations = n.has("locations") ? parse_locations(n["locations"], grid) : LocationLaw::from_weights(*grid);
        s.amplitudes = parse_amplitudes(n);
        return n.guard([&] { return LevyDriver(grid, s); });
    }
    if (kind == "fixed_jump_poisson") {
        FixedJumpPoisson s;
        auto mu = n["mu"];
        if (mu.is_object() && mu.has("atoms")) {
            auto list = mu["atoms"];
            std::vector<Atom> atoms;
            for (std::size_t k = 0; k < list.size(); ++k) {
                auto a = list.at(k);
                auto loc = a["location"].is_number() ? std::vector<double>{a["location"].number()}
                                                     : a["location"].numbers();
                atoms.push_back({loc, a["mass"].number()});
            }
            s.mu = mu.guard([&] { return deposit(AtomicMeasure(atoms), grid); });
        } else {
            s.mu = parse_density(mu, grid);
        }
        s.z0 = n["z0"].number();
        s.intensity = n["intensity"].number();
        return n.guard([&] { return LevyDriver(grid, s); });
    }
    n["kind"].fail("unknown driver kind '" + kind + "'");
}

/// Everything needed to build a CarmaModel; cone mode is applied at build
/// time so `validate` can report on models that cone mode would reject.
struct ModelSpec {
    std::size_t p = 1;
    std::size_t q = 0;
    bool cone_mode = false;
    CompanionOp companion;
    LinOp input;
    std::vector<LinOp> outputs;
    LevyDriver driver;
    StateVec initial;

    CarmaModel build(std::optional<bool> cone_override = std::nullopt) const {
        return CarmaModel(companion, input, outputs, driver, initial, cone_override.value_or(cone_mode));
    }
};

inline ModelSpec parse_model(const Node& n, const GridPtr& grid) {
    ModelSpec m;
    const auto p = n["p"].uint();
    const auto q = n["q"].uint();
    if (p < 1) n["p"].fail("p must be >= 1");
    if (q >= p) n["q"].fail("q must satisfy 0 <= q < p (got q=" + std::to_string(q) + ", p=" + std::to_string(p) + ")");
    m.p = p;
    m.q = q;
    m.cone_mode = n.bool_or("cone_mode", false);

    auto a = n["A"];
    if (a.size() != p) a.fail("expected " + std::to_string(p) + " operators A_1..A_p");
    std::vector<LinOp> blocks;
    for (std::size_t k = 0; k < p; ++k) blocks.push_back(parse_op(a.at(k), grid));
    m.companion = CompanionOp(grid, std::move(blocks));
    m.input = n.has("E") ? parse_op(n["E"], grid) : LinOp::identity(grid);

    auto c = n["C"];
    if (c.size() != q + 1) c.fail("expected " + std::to_string(q + 1) + " operators C_0..C_q");
    for (std::size_t k = 0; k <= q; ++k) m.outputs.push_back(parse_op(c.at(k), grid));

    m.driver = parse_driver(n["driver"], grid);

    if (!n.has("initial") || (n["initial"].is_string() && n["initial"].string() == "zero")) {
        m.initial = StateVec::zeros(grid, m.p);
    } else {
        auto init = n["initial"];
        if (init.size() != p) init.fail("initial state needs " + std::to_string(p) + " blocks");
        std::vector<Density> blocks0;
        for (std::size_t k = 0; k < p; ++k) blocks0.push_back(parse_density(init.at(k), grid, false));
        m.initial = StateVec(blocks0);
    }
    return m;
}

struct NamedFunction {
    std::string name;
    TestFunction g;
};

struct KernelSpec {
    std::vector<double> times{0.1, 0.5, 1.0, 2.0};
    std::optional<double> omega_max;
    std::size_t n_omega = 16384;
};

struct PriceSpec {
    double horizon = 1.0;
    TestFunction h;
    Payoff payoff;
    PricingOptions options;
    std::size_t mc_paths = 0;  // 0: no Monte Carlo cross-check
};

struct EsscherSpec {
    std::vector<TestFunction> theta;  // p test functions
    double horizon = 1.0;
};

/// The "run" section. Every field has a default that `validate` prints.
struct RunSpec {
    std::vector<double> t_grid;
    std::uint64_t paths = 100;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    bool stationary = false;
    std::optional<double> burn_in;
    TimeQuadrature quad{};
    std::vector<NamedFunction> functionals;
    std::vector<TestFunction> laplace_g;  // p test functions
    KernelSpec kernel;
    std::optional<PriceSpec> price;
    std::optional<EsscherSpec> esscher;
    std::uint64_t export_paths = 0;  // how many full paths to write
};

inline std::vector<double> parse_time_grid(const Node& n) {
    std::vector<double> t;
    if (n.is_array()) {
        t = n.numbers();
    } else {
        const double start = n.number_or("start", 0.0);
        const double stop = n["stop"].number();
        const auto steps = n["steps"].uint();
        if (steps == 0) n["steps"].fail("steps must be >= 1");
        for (std::uint64_t k = 0; k <= steps; ++k) {
            t.push_back(start + (stop - start) * static_cast<double>(k) / static_cast<double>(steps));
        }
    }
    if (t.empty()) n.fail("time grid is empty");
    n.guard([&] { check_time_grid(t); return 0; });
    return t;
}

inline std::vector<TestFunction> parse_block_functions(const Node& n, const GridPtr& grid, std::size_t p) {
    if (n.size() != p) n.fail("expected " + std::to_string(p) + " test functions (one per block)");
    std::vector<TestFunction> out;
    for (std::size_t k = 0; k < p; ++k) out.push_back(parse_test_function(n.at(k), grid));
    return out;
}

inline Payoff parse_payoff(const Node& n) {
    const auto kind = n["kind"].string();
    if (kind == "exp_affine") return Payoff::exp_affine(n["a"].number());
    if (kind == "damped_call") {
        const double a = n["damping"].number();
        if (a == 0.0) n["damping"].fail("damping must be non-zero");
        return Payoff::damped_call(n["strike"].number(), a);
    }
    if (kind == "tabulated") {
        auto ys = n["y"].numbers();
        auto re = n["re"].numbers();
        auto im = n.has("im") ? n["im"].numbers() : std::vector<double>(re.size(), 0.0);
        if (re.size() != ys.size() || im.size() != ys.size()) n.fail("y, re and im must have equal length");
        std::vector<cplx> tr(ys.size());
        for (std::size_t k = 0; k < ys.size(); ++k) tr[k] = {re[k], im[k]};
        const double a = n["damping"].number();
        return n.guard([&] { return Payoff::tabulated(a, ys, tr); });
    }
    n["kind"].fail("unknown payoff kind '" + kind + "'");
}

inline RunSpec parse_run(const Node& n, const GridPtr& grid, std::size_t p) {
    RunSpec r;
    r.t_grid = n.has("t_grid") ? parse_time_grid(n["t_grid"]) : std::vector<double>{0.0, 1.0};
    r.paths = n.uint_or("paths", r.paths);
    r.seed = n.uint_or("seed", r.seed);
    r.threads = static_cast<unsigned>(n.uint_or("threads", r.threads));
    r.stationary = n.bool_or("stationary", false);
    if (n.has("burn_in") && !n["burn_in"].value().is_null()) {
        r.burn_in = n["burn_in"].number();
        if (*r.burn_in < 0.0) n["burn_in"].fail("burn_in must be >= 0");
    }
    if (n.has("quadrature")) {
        auto qn = n["quadrature"];
        r.quad.order = static_cast<std::size_t>(qn.uint_or("order", r.quad.order));
        r.quad.panels = static_cast<std::size_t>(qn.uint_or("panels", r.quad.panels));
        if (r.quad.order < 1) qn.fail("quadrature order must be >= 1");
        if (r.quad.panels < 1) qn.fail("quadrature panel count must be >= 1");
    }
    if (n.has("functionals")) {
        auto fs = n["functionals"];
        for (std::size_t k = 0; k < fs.size(); ++k) {
            auto f = fs.at(k);
            r.functionals.push_back({f["name"].string(), parse_test_function(f["g"], grid)});
        }
    } else {
        r.functionals.push_back({"total_mass", TestFunction::constant(grid, 1.0)});
    }
    if (n.has("laplace")) {
        r.laplace_g = parse_block_functions(n["laplace"]["g"], grid, p);
    } else {
        r.laplace_g.assign(p, TestFunction::zeros(grid));
        r.laplace_g.front() = TestFunction::constant(grid, 1.0);
    }
    if (n.has("kernel")) {
        auto kn = n["kernel"];
        if (kn.has("t")) r.kernel.times = kn["t"].numbers();
        if (kn.has("omega_max")) {
            r.kernel.omega_max = kn["omega_max"].number();
            if (!(*r.kernel.omega_max > 0.0)) kn["omega_max"].fail("omega_max must be > 0");
        }
        r.kernel.n_omega = static_cast<std::size_t>(kn.uint_or("n_omega", r.kernel.n_omega));
        if (r.kernel.n_omega == 0) kn["n_omega"].fail("n_omega must be > 0");
    }
    if (n.has("price")) {
        auto pn = n["price"];
        PriceSpec ps;
        ps.horizon = pn.number_or("horizon", 1.0);
        if (!(ps.horizon >= 0.0)) pn["horizon"].fail("horizon must be >= 0");
        ps.h = pn.has("h") ? parse_test_function(pn["h"], grid) : TestFunction::constant(grid, 1.0);
        ps.payoff = parse_payoff(pn["payoff"]);
        ps.options.y_max = pn.number_or("y_max", ps.options.y_max);
        ps.options.nodes = static_cast<std::size_t>(pn.uint_or("nodes", ps.options.nodes));
        ps.options.tail_tolerance = pn.number_or("tail_tolerance", ps.options.tail_tolerance);
        ps.options.quad = r.quad;
        ps.mc_paths = pn.uint_or("mc_paths", 0);
        r.price = std::move(ps);
    }
    if (n.has("esscher")) {
        auto en = n["esscher"];
        EsscherSpec es;
        es.theta = parse_block_functions(en["theta"], grid, p);
        es.horizon = en.number_or("horizon", 1.0);
        if (!(es.horizon > 0.0)) en["horizon"].fail("horizon must be > 0");
        r.esscher = std::move(es);
    }
    r.export_paths = n.uint_or("export_paths", 0);
    return r;
}

struct Scenario {
    std::string text;
    std::string hash;  // FNV-1a of the config bytes
    GridPtr grid;
    ModelSpec model;
    RunSpec run;
};

inline Scenario parse_scenario(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        // locate the byte offset as line:column
        std::size_t line = 1, col = 1;
        for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
            if (text[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        model_error("config:" + std::to_string(line) + ":" + std::to_string(col) + ": JSON syntax error");
    }
    const auto lines = pointer_lines(text);
    Node root(doc, "", &lines);
    if (!root.is_object()) root.fail("top level must be an object");
    const auto version = root["schema_version"].uint();
    if (version != static_cast<std::uint64_t>(kSchemaVersion)) {
        root["schema_version"].fail("unsupported schema_version " + std::to_string(version) + " (expected " +
                                    std::to_string(kSchemaVersion) + ")");
    }
    for (const auto& [key, _] : doc.items()) {
        if (key != "schema_version" && key != "grid" && key != "model" && key != "run" && key != "description") {
            root[key].fail("unknown top-level key '" + key + "'");
        }
    }
    Scenario s;
    s.text = text;
    s.hash = fnv1a_hex(text);
    s.grid = parse_grid(root["grid"]);
    s.model = parse_model(root["model"], s.grid);
    s.run = root.has("run") ? parse_run(root["run"], s.grid, s.model.p)
                            : parse_run(Node(json::object(), "/run", &lines), s.grid, s.model.p);
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) model_error("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

}  // namespace carma::io

#endif
