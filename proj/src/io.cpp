#include "convexdp/io.hpp"

#include <fstream>
#include <sstream>

namespace cdp::io {

namespace {

[[noreturn]] void parse_error(const std::string& msg, std::optional<std::string> node = std::nullopt) {
    throw Error(ErrorCode::Parse, msg, std::move(node));
}

const Json& field(const Json& j, const std::string& name, const std::string& where) {
    if (!j.is_object() || !j.contains(name)) parse_error("missing field '" + name + "' in " + where);
    return j.at(name);
}

double number(const Json& j, const std::string& what) {
    if (!j.is_number()) parse_error(what + " must be a number");
    return j.get<double>();
}

std::size_t count(const Json& j, const std::string& what) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) parse_error(what + " must be a nonnegative integer");
    return j.get<std::size_t>();
}

}  // namespace

const Json* TreeFile::entry(NodeIndex i, const std::string& name) const {
    const auto& d = data.at(i);
    if (!d.is_object() || !d.contains(name)) return nullptr;
    return &d.at(name);
}

std::string TreeFile::kind() const {
    if (meta.contains("kind") && meta.at("kind").is_string()) return meta.at("kind").get<std::string>();
    return "stage";
}

TreeFile parse_tree_file(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const std::exception& e) {
        parse_error(std::string("malformed document: ") + e.what());
    }
    if (!doc.is_object()) parse_error("document must be an object");
    const auto& nodes = field(doc, "nodes", "document");
    if (!nodes.is_array()) parse_error("'nodes' must be an array");
    std::vector<RawNode> raw;
    std::vector<Json> data_raw;
    for (const auto& n : nodes) {
        RawNode r;
        const auto& id = field(n, "id", "node record");
        if (!id.is_string()) parse_error("node id must be a string");
        r.id = id.get<std::string>();
        const auto& par = field(n, "parent", "node '" + r.id + "'");
        if (par.is_string())
            r.parent = par.get<std::string>();
        else if (!par.is_null())
            parse_error("parent must be a string or null", r.id);
        const auto& st = field(n, "stage", "node '" + r.id + "'");
        if (!st.is_number_integer()) parse_error("stage must be an integer", r.id);
        r.stage = st.get<int>();
        const auto& pr = field(n, "prob", "node '" + r.id + "'");
        if (pr.is_string()) {
            try {
                r.prob_exact = Rational(pr.get<std::string>());
            } catch (const std::exception&) {
                parse_error("probability string must be a fraction like 1/3", r.id);
            }
            r.prob = static_cast<double>(*r.prob_exact);
        } else if (pr.is_number()) {
            r.prob = pr.get<double>();
        } else {
            parse_error("prob must be a number or a fraction string", r.id);
        }
        raw.push_back(std::move(r));
        data_raw.push_back(n.contains("data") ? n.at("data") : Json::object());
    }
    const bool exact = doc.contains("exact") && doc.at("exact").is_boolean() && doc.at("exact").get<bool>();
    TreeFile f;
    f.tree = validate_tree(raw, exact);
    f.data.assign(f.tree.size(), Json::object());
    for (std::size_t k = 0; k < raw.size(); ++k) f.data[f.tree.index_of(raw[k].id)] = data_raw[k];
    for (const auto& [key, value] : doc.items())
        if (key != "nodes") f.meta[key] = value;
    return f;
}

TreeFile read_tree_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) parse_error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_tree_file(ss.str());
}

Json to_json(const TreeFile& f) {
    Json doc = f.meta;
    Json nodes = Json::array();
    const auto raw = f.tree.raw();
    for (NodeIndex i = 0; i < f.tree.size(); ++i) {
        Json n;
        n["id"] = raw[i].id;
        n["parent"] = raw[i].parent ? Json(*raw[i].parent) : Json(nullptr);
        n["stage"] = raw[i].stage;
        if (raw[i].prob_exact)
            n["prob"] = raw[i].prob_exact->str();
        else
            n["prob"] = raw[i].prob;
        if (i < f.data.size() && !f.data[i].empty()) n["data"] = f.data[i];
        nodes.push_back(std::move(n));
    }
    doc["nodes"] = std::move(nodes);
    return doc;
}

// ============================================================================
// Arrays and functions
// ============================================================================

Vec<double> vec_from_json(const Json& j) {
    if (j.is_number()) return {j.get<double>()};
    if (!j.is_array()) parse_error("expected a vector");
    Vec<double> v;
    for (const auto& x : j) v.push_back(number(x, "vector entry"));
    return v;
}

Mat<double> mat_from_json(const Json& j, std::size_t cols_if_empty) {
    if (j.is_number()) return Mat<double>{{j.get<double>()}};
    if (!j.is_array()) parse_error("expected a matrix (array of rows)");
    if (j.empty()) return Mat<double>(0, cols_if_empty);
    Mat<double> m(j.size(), 0);
    std::size_t cols = 0;
    std::vector<Vec<double>> rows;
    for (const auto& r : j) {
        rows.push_back(vec_from_json(r));
        if (rows.size() == 1) cols = rows[0].size();
        if (rows.back().size() != cols) parse_error("ragged matrix rows");
    }
    m = Mat<double>(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) m.set_row(r, rows[r]);
    return m;
}

Json to_json(const Vec<double>& v) { return Json(v); }

Json to_json(const Mat<double>& m) {
    Json out = Json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) out.push_back(m.row(r));
    return out;
}

ConvexFn fn_from_json(const Json& j) {
    const auto& type = field(j, "type", "function record");
    if (!type.is_string()) parse_error("function type must be a string");
    const auto t = type.get<std::string>();
    if (t == "quadratic") {
        Quadratic<double> q;
        q.q = vec_from_json(field(j, "q", "quadratic"));
        const std::size_t d = q.q.size();
        q.Q = j.contains("Q") ? mat_from_json(j.at("Q"), d) : Mat<double>(d, d);
        if (q.Q.rows() != d || q.Q.cols() != d) parse_error("Q must be square with the length of q");
        q.c = j.contains("c") ? number(j.at("c"), "c") : 0.0;
        q.A = j.contains("A") ? mat_from_json(j.at("A"), d) : Mat<double>(0, d);
        q.b = j.contains("b") ? vec_from_json(j.at("b")) : Vec<double>{};
        if (q.A.cols() != d || q.A.rows() != q.b.size()) parse_error("A, b shapes");
        return q;
    }
    if (t == "polyhedral") {
        const std::size_t d = count(field(j, "dim", "polyhedral"), "dim");
        const auto& pieces = field(j, "pieces", "polyhedral");
        if (!pieces.is_array()) parse_error("pieces must be an array");
        Mat<double> G(0, d);
        Vec<double> beta;
        for (const auto& p : pieces) {
            auto g = vec_from_json(field(p, "gradient", "piece"));
            if (g.size() != d) parse_error("piece gradient length");
            G.append_row(g);
            beta.push_back(number(field(p, "offset", "piece"), "offset"));
        }
        Mat<double> C = j.contains("C") ? mat_from_json(j.at("C"), d) : Mat<double>(0, d);
        Vec<double> e = j.contains("e") ? vec_from_json(j.at("e")) : Vec<double>{};
        if (C.cols() != d || C.rows() != e.size()) parse_error("C, e shapes");
        if (pieces.empty()) return polyhedral_indicator<double>(d, C, e);
        return make_polyhedral<double>(d, G, beta, C, e);
    }
    if (t == "sampled") {
        Sampled1D<double> s;
        s.knots = vec_from_json(field(j, "knots", "sampled"));
        s.values = vec_from_json(field(j, "values", "sampled"));
        if (s.knots.size() != s.values.size()) parse_error("knots and values differ in length");
        for (std::size_t k = 1; k < s.knots.size(); ++k)
            if (!(s.knots[k] > s.knots[k - 1])) parse_error("knots must increase");
        s.extrapolate = j.contains("extrapolate") && j.at("extrapolate").is_boolean() && j.at("extrapolate").get<bool>();
        return s;
    }
    parse_error("unknown function type '" + t + "'");
}

Json to_json(const ConvexFn& f) {
    Json out;
    if (f.is<Quadratic<double>>()) {
        const auto& q = f.as<Quadratic<double>>();
        out["type"] = "quadratic";
        out["Q"] = to_json(q.Q);
        out["q"] = q.q;
        out["c"] = q.c;
        if (q.A.rows() > 0) {
            out["A"] = to_json(q.A);
            out["b"] = q.b;
        }
    } else if (f.is<Polyhedral<double>>()) {
        const auto& p = f.as<Polyhedral<double>>();
        out["type"] = "polyhedral";
        out["dim"] = p.dim;
        Json pieces = Json::array();
        for (std::size_t k = 0; k < p.G.rows(); ++k) pieces.push_back({{"gradient", p.G.row(k)}, {"offset", p.beta[k]}});
        out["pieces"] = pieces;
        if (p.C.rows() > 0) {
            out["C"] = to_json(p.C);
            out["e"] = p.e;
        }
    } else if (f.is<Sampled1D<double>>()) {
        const auto& s = f.as<Sampled1D<double>>();
        out["type"] = "sampled";
        out["knots"] = s.knots;
        out["values"] = s.values;
        out["extrapolate"] = s.extrapolate;
    } else {
        throw Error(ErrorCode::BackendClash, "mixed quadratic-polyhedral functions are not serialized");
    }
    return out;
}

// ============================================================================
// Instances
// ============================================================================

namespace {

TreeFile blank(const ScenarioTree& tree, const std::string& kind) {
    TreeFile f;
    f.tree = tree;
    f.data.assign(tree.size(), Json::object());
    f.meta["schema"] = 1;
    f.meta["kind"] = kind;
    return f;
}

const Json& node_entry(const TreeFile& f, NodeIndex i, const std::string& name) {
    const Json* e = f.entry(i, name);
    if (!e) parse_error("missing data entry '" + name + "'", f.tree.id(i));
    return *e;
}

template <class F>
auto at_node(const TreeFile& f, NodeIndex i, F&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw e.at_node(f.tree.id(i));
    }
}

}  // namespace

StageProblem stage_problem(const TreeFile& f) {
    const auto& dims_j = field(f.meta, "dims", "stage document");
    std::vector<std::size_t> dims;
    for (const auto& d : dims_j) dims.push_back(count(d, "dims entry"));
    Mode mode = Mode::StageAdditive;
    if (f.meta.contains("mode")) {
        const auto m = f.meta.at("mode").get<std::string>();
        if (m == "general")
            mode = Mode::General;
        else if (m != "additive")
            parse_error("mode must be 'additive' or 'general'");
    }
    auto p = make_problem(f.tree, mode, dims);
    for (NodeIndex i = 0; i < f.tree.size(); ++i) {
        const Json* c = f.entry(i, "cost");
        if (c) p.cost[i] = at_node(f, i, [&] { return fn_from_json(*c); });
    }
    p.validate();
    return p;
}

TreeFile to_file(const StageProblem& p) {
    auto f = blank(p.tree, "stage");
    f.meta["mode"] = p.mode == Mode::General ? "general" : "additive";
    f.meta["dims"] = p.dims;
    for (NodeIndex i = 0; i < p.tree.size(); ++i) f.data[i]["cost"] = to_json(p.cost[i]);
    return f;
}

AdaptedProcess<double> rewards(const TreeFile& f) {
    AdaptedProcess<double> R(f.tree, 0, f.tree.horizon(), 0.0);
    for (NodeIndex i = 0; i < f.tree.size(); ++i) R[i] = number(node_entry(f, i, "R"), "R at node " + f.tree.id(i));
    return R;
}

TreeFile to_file(const ScenarioTree& tree, const AdaptedProcess<double>& R) {
    auto f = blank(tree, "rewards");
    for (NodeIndex i = 0; i < tree.size(); ++i) f.data[i]["R"] = R[i];
    return f;
}

LQFile lq_control(const TreeFile& f) {
    const std::size_t N = count(field(f.meta, "N", "control document"), "N");
    const std::size_t M = count(field(f.meta, "M", "control document"), "M");
    LQFile out;
    out.sys = make_system(f.tree, N, M);
    out.x0 = f.meta.contains("x0") ? vec_from_json(f.meta.at("x0")) : Vec<double>(N, 0.0);
    if (out.x0.size() != N) parse_error("x0 length must equal N");
    for (NodeIndex i = 0; i < f.tree.size(); ++i) {
        at_node(f, i, [&] {
            if (i != f.tree.root()) {
                if (const Json* a = f.entry(i, "A")) out.sys.A[i] = mat_from_json(*a, N);
                out.sys.B[i] = mat_from_json(node_entry(f, i, "B"), M);
                if (const Json* w = f.entry(i, "W")) out.sys.W[i] = vec_from_json(*w);
            }
            out.costs.Q.push_back(mat_from_json(node_entry(f, i, "Q"), N));
            out.costs.R.push_back(mat_from_json(node_entry(f, i, "R"), M));
            if (out.costs.Q.back().rows() != N || out.costs.R.back().rows() != M)
                throw Error(ErrorCode::DimensionMismatch, "Q must be N x N and R must be M x M");
            return 0;
        });
    }
    out.sys.validate();
    return out;
}

TreeFile to_file(const ControlSystem& sys, const LQCosts& c, const Vec<double>& x0) {
    auto f = blank(sys.tree, "control");
    f.meta["N"] = sys.N;
    f.meta["M"] = sys.M;
    f.meta["x0"] = x0;
    for (NodeIndex i = 0; i < sys.tree.size(); ++i) {
        if (i != sys.tree.root()) {
            f.data[i]["A"] = to_json(sys.A[i]);
            f.data[i]["B"] = to_json(sys.B[i]);
            f.data[i]["W"] = sys.W[i];
        }
        f.data[i]["Q"] = to_json(c.Q[i]);
        f.data[i]["R"] = to_json(c.R[i]);
    }
    return f;
}

LagrangeInstance lagrange(const TreeFile& f) {
    const std::size_t d = count(field(f.meta, "d", "lagrange document"), "d");
    auto inst = make_lagrange(f.tree, d);
    for (NodeIndex i = 0; i < f.tree.size(); ++i)
        if (const Json* k = f.entry(i, "K")) inst.K[i] = at_node(f, i, [&] { return fn_from_json(*k); });
    inst.validate();
    return inst;
}

TreeFile to_file(const LagrangeInstance& inst) {
    auto f = blank(inst.tree, "lagrange");
    f.meta["d"] = inst.d;
    for (NodeIndex i = 0; i < inst.tree.size(); ++i) f.data[i]["K"] = to_json(inst.K[i]);
    return f;
}

LPData lp_data(const TreeFile& f) {
    LPData out;
    out.tree = f.tree;
    out.d = count(field(f.meta, "d", "lp document"), "d");
    for (NodeIndex i = 0; i < f.tree.size(); ++i) {
        out.nodes.push_back(at_node(f, i, [&] {
            LPStage s;
            s.c = f.entry(i, "c") ? vec_from_json(*f.entry(i, "c")) : Vec<double>(out.d, 0.0);
            s.b = f.entry(i, "b") ? vec_from_json(*f.entry(i, "b")) : Vec<double>{};
            const std::size_t m = s.b.size();
            s.T = f.entry(i, "T") ? mat_from_json(*f.entry(i, "T"), out.d) : Mat<double>(m, out.d);
            s.W = f.entry(i, "W") ? mat_from_json(*f.entry(i, "W"), out.d) : Mat<double>(m, out.d);
            if (const Json* C = f.entry(i, "C")) {
                const auto form = field(*C, "form", "cone").get<std::string>();
                if (form == "inequalities")
                    s.C.form = Cone::Form::Inequalities;
                else if (form == "generators")
                    s.C.form = Cone::Form::Generators;
                else
                    parse_error("cone form must be 'inequalities' or 'generators'");
                s.C.M = mat_from_json(field(*C, "M", "cone"), m);
            } else {
                s.C = nonnegative_orthant(m);
            }
            return s;
        }));
    }
    return out;
}

TreeFile to_file(const LPData& data) {
    auto f = blank(data.tree, "lp");
    f.meta["d"] = data.d;
    for (NodeIndex i = 0; i < data.tree.size(); ++i) {
        const auto& s = data.nodes[i];
        f.data[i]["T"] = to_json(s.T);
        f.data[i]["W"] = to_json(s.W);
        f.data[i]["b"] = s.b;
        f.data[i]["c"] = s.c;
        f.data[i]["C"] = {{"form", s.C.form == Cone::Form::Generators ? "generators" : "inequalities"}, {"M", to_json(s.C.M)}};
    }
    return f;
}

MarketModel market(const TreeFile& f) {
    std::vector<Vec<double>> s;
    for (NodeIndex i = 0; i < f.tree.size(); ++i) s.push_back(at_node(f, i, [&] { return vec_from_json(node_entry(f, i, "s")); }));
    auto m = make_market(f.tree, s);
    for (NodeIndex i = 0; i < f.tree.size(); ++i) {
        at_node(f, i, [&] {
            if (const Json* D = f.entry(i, "D")) {
                m.D[i].A = mat_from_json(field(*D, "A", "D"), m.J);
                m.D[i].b = vec_from_json(field(*D, "b", "D"));
                if (m.D[i].A.rows() != m.D[i].b.size()) parse_error("D rows and bounds differ");
            }
            if (const Json* c = f.entry(i, "c")) m.c[i] = number(*c, "c");
            return 0;
        });
    }
    m.validate();
    return m;
}

TreeFile to_file(const MarketModel& m) {
    auto f = blank(m.tree, "market");
    for (NodeIndex i = 0; i < m.tree.size(); ++i) {
        f.data[i]["s"] = m.s[i];
        if (m.D[i].rows() > 0) f.data[i]["D"] = {{"A", to_json(m.D[i].A)}, {"b", m.D[i].b}};
        if (m.tree.is_leaf(i)) f.data[i]["c"] = m.c[i];
    }
    return f;
}

}  // namespace cdp::io
