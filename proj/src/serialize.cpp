#include "mwdha/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mwdha {

namespace {

// JSON has no infinity; keep it readable and parseable
json num(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

json coords(const Cube& q, int d) {
    json c = json::array();
    for (int a = 0; a < d; ++a) c.push_back(q.c[a]);
    return c;
}

json level_map(const std::map<int, double>& m) {
    json o = json::object();
    for (auto& [k, v] : m) o[std::to_string(k)] = num(v);
    return o;
}

}  // namespace

json to_json(const Mat& m) {
    json rows = json::array();
    for (const auto& r : m.rows()) rows.push_back(r);
    return rows;
}

Mat mat_from_json(const json& j) { return Mat::from_rows(j.get<std::vector<Vec>>()); }

json to_json(const Cube& q, int d) { return {{"level", q.level}, {"coords", coords(q, d)}}; }

Cube cube_from_json(const json& j) {
    Cube q;
    q.level = j.at("level").get<int>();
    auto c = j.at("coords").get<std::vector<int>>();
    if (c.size() > 3) throw ValidationError("cube coords: at most 3 entries");
    for (size_t a = 0; a < c.size(); ++a) q.c[a] = c[a];
    return q;
}

json to_json(const Lattice& lat) {
    const Mesh& m = lat.mesh;
    json om = json::array();
    for (const auto& w : lat.omega) {
        json e = json::array();
        for (int a = 0; a < m.d; ++a) e.push_back(w[a]);
        om.push_back(e);
    }
    json org = json::array();
    for (int a = 0; a < m.d; ++a) org.push_back(m.origin[a]);
    return {{"d", m.d}, {"L", m.L}, {"omega", om}, {"origin", org}, {"side", m.side}};
}

Lattice lattice_from_json(const json& j) {
    const int d = j.at("d").get<int>();
    std::vector<Index3> omega;
    for (const auto& e : j.at("omega")) {
        Index3 w{0, 0, 0};
        auto v = e.get<std::vector<int>>();
        for (size_t a = 0; a < v.size() && a < 3; ++a) w[a] = v[a];
        omega.push_back(w);
    }
    std::array<double, 3> org{0, 0, 0};
    auto o = j.at("origin").get<std::vector<double>>();
    for (size_t a = 0; a < o.size() && a < 3; ++a) org[a] = o[a];
    return build_lattice(d, j.at("L").get<int>(), omega, org, j.at("side").get<double>());
}

json to_json(const HaarCoefficients& c) {
    const Mesh& m = c.lattice.mesh;
    const int ns = num_signatures(m.d);
    json list = json::array();
    for (int k = 0; k < static_cast<int>(c.detail.size()); ++k)
        for (long long i = 0; i < cubes_at(m, k); ++i)
            for (int e = 0; e < ns; ++e) {
                const double* v = c.at(k, i, e);
                bool any = false;
                for (int t = 0; t < c.m; ++t) any = any || v[t] != 0.0;
                if (!any) continue;
                Cube q = cube_at(m, k, i);
                list.push_back({{"level", k},
                                {"coords", coords(q, m.d)},
                                {"signature", signature_bits(e, m.d)},
                                {"value", std::vector<double>(v, v + c.m)}});
            }
    return {{"lattice", to_json(c.lattice)}, {"m", c.m}, {"mean", c.mean}, {"coefficients", list}};
}

HaarCoefficients haar_from_json(const json& j) {
    HaarCoefficients c;
    c.lattice = lattice_from_json(j.at("lattice"));
    c.m = j.at("m").get<int>();
    c.mean = j.at("mean").get<std::vector<double>>();
    const Mesh& m = c.lattice.mesh;
    const int ns = num_signatures(m.d);
    c.detail.resize(m.L);
    for (int k = 0; k < m.L; ++k) c.detail[k].assign(static_cast<size_t>(cubes_at(m, k)) * ns * c.m, 0.0);
    for (const auto& e : j.at("coefficients")) {
        Cube q = cube_from_json(e);
        if (q.level < 0 || q.level >= m.L) throw ValidationError("haar coefficient level out of range");
        int mask = signature_mask(e.at("signature").get<std::vector<int>>());
        auto v = e.at("value").get<std::vector<double>>();
        if (static_cast<int>(v.size()) != c.m) throw ValidationError("haar coefficient has wrong size");
        std::copy(v.begin(), v.end(), c.at(q.level, cube_index(m, q), mask));
    }
    return c;
}

json to_json(const CharacteristicReport& r, int d) {
    return {{"value", num(r.value)},
            {"attaining", to_json(r.attaining, d)},
            {"method", r.method},
            {"distortion_bound", num(r.distortion_bound)},
            {"truncation_deficit", num(r.truncation_deficit)},
            {"sampling_error", num(r.sampling_error)}};
}

json to_json(const ReducingPair& r, int d) {
    return {{"cube", to_json(r.cube, d)},     {"V", to_json(r.V)},
            {"V_dual", to_json(r.V_dual)},     {"method", method_name(r.method)},
            {"kappa", num(r.kappa)},           {"kappa_dual", num(r.kappa_dual)},
            {"distortion", num(std::sqrt(r.kappa))}, {"directions", r.directions.size()}};
}

json to_json(const CubeSup& s, int d) { return {{"value", num(s.value)}, {"cube", to_json(s.cube, d)}}; }

json to_json(const BmoW& r, int d) {
    return {{"value", num(r.value)},
            {"primal", num(r.primal)},
            {"dual", num(r.dual)},
            {"primal_cube", to_json(r.primal_cube, d)},
            {"dual_cube", to_json(r.dual_cube, d)},
            {"form", r.form}};
}

json to_json(const PrimeFormsReport& r) {
    return {{"a", num(r.a)},
            {"b", num(r.b)},
            {"c", num(r.c)},
            {"ratio_ab", num(r.ratio_ab)},
            {"ratio_ac", num(r.ratio_ac)},
            {"ratio_bc", num(r.ratio_bc)},
            {"max_ratio", num(r.max_ratio)},
            {"comparable", r.comparable}};
}

json to_json(const TraceCheck& r) {
    return {{"bmo_w", num(r.bmo_w)},
            {"bmo_w_adjoint", num(r.bmo_w_adjoint)},
            {"classical", num(r.classical)},
            {"ratio", num(r.ratio)}};
}

json to_json(const CarlesonNorm& r, int d) { return {{"norm", num(r.norm)}, {"cube", to_json(r.cube, d)}}; }

json to_json(const EmbeddingReport& r) {
    return {{"lhs", num(r.lhs)}, {"carleson", num(r.carleson)}, {"b_lp", num(r.b_lp)}, {"ratio", num(r.ratio)}};
}

json to_json(const StoppingTree& t) {
    json gens = json::array();
    for (const auto& g : t.generations) {
        json cubes = json::array();
        for (const auto& s : g)
            cubes.push_back({{"cube", to_json(s.cube, t.d)}, {"trigger", s.trigger}, {"parent", s.parent}});
        gens.push_back(cubes);
    }
    json pack = json::array();
    for (int j = 0; j < static_cast<int>(t.generations.size()); ++j) pack.push_back(num(packing_measure(t, j)));
    return {{"root", to_json(t.root, t.d)}, {"lambda1", num(t.lambda1)}, {"lambda2", num(t.lambda2)},
            {"p", t.p},                     {"generations", gens},       {"packing", pack}};
}

json to_json(const PiBadEstimate& e) {
    return {{"estimate", e.estimate}, {"stderr", e.stderr_}, {"trials", e.trials}, {"depth", e.depth}};
}

json to_json(const T1Result& r, bool coefficients) {
    json o = {{"max_coefficient_norm", num(max_coefficient_norm(r.coeffs))},
              {"max_near", num(r.max_near)},
              {"max_far", num(r.max_far)},
              {"qstar", r.qstar},
              {"r_levels", r.r_levels},
              {"radius", r.radius},
              {"tail_bound", r.tail_bound}};
    if (coefficients) o["coefficients"] = to_json(r.coeffs);
    return o;
}

json to_json(const KernelCheckReport& r, int) {
    return {{"size_max", num(r.size_max)},
            {"holder_max", num(r.holder_max)},
            {"holder_dual_max", num(r.holder_dual_max)},
            {"size_q50", num(r.size_q50)},
            {"size_q90", num(r.size_q90)},
            {"size_q99", num(r.size_q99)},
            {"compat_sup_sampled", num(r.compat_sup)},
            {"size_max_by_level", level_map(r.size_max_by_level)},
            {"samples", r.samples}};
}

json to_json(const CompatReport& r, int d) {
    return {{"primal", num(r.primal)},
            {"dual", num(r.dual)},
            {"primal_cube", to_json(r.primal_cube, d)},
            {"dual_cube", to_json(r.dual_cube, d)},
            {"by_level", level_map(r.by_level)}};
}

json to_json(const WbpReport& r, int d) {
    return {{"value", num(r.value)},
            {"I", to_json(r.I, d)},
            {"J", to_json(r.J, d)},
            {"by_level", level_map(r.by_level)},
            {"max_abs_testing", num(r.max_abs_testing)}};
}

json to_json(const DecayReport& r, int d) {
    json b = json::array();
    for (const auto& k : r.buckets)
        b.push_back({{"gap", k.gap},
                     {"dist", k.dist},
                     {"max_ratio", num(k.max_ratio)},
                     {"pairs", k.pairs},
                     {"I", to_json(k.I, d)},
                     {"J", to_json(k.J, d)}});
    return {{"I0", to_json(r.I0, d)},       {"r", r.r},
            {"max_ratio", num(r.max_ratio)}, {"pairs", r.pairs},
            {"skipped_bad", r.skipped_bad}, {"buckets", b},
            {"t1_max", num(r.t1_max)},       {"t1_adjoint_max", num(r.t1_adjoint_max)}};
}

json to_json(const NormProbe& p) {
    json members = json::array();
    for (size_t i = 0; i < p.ratios.size(); ++i) members.push_back({{"label", p.labels[i]}, {"ratio", num(p.ratios[i])}});
    return {{"lower_bound", num(p.lower_bound)},
            {"bound_kind", p.bound_kind},
            {"witness", p.witness >= 0 ? json(p.labels[p.witness]) : json(nullptr)},
            {"members", members}};
}

std::string packing_csv(const StoppingTree& t) {
    std::ostringstream os;
    os.precision(17);
    os << "j,packing,bound,cubes\n";
    for (int j = 0; j < static_cast<int>(t.generations.size()); ++j)
        os << j << ',' << packing_measure(t, j) << ',' << std::ldexp(1.0, -j) << ',' << t.generations[j].size() << '\n';
    return os.str();
}

std::string decay_csv(const DecayReport& r, int d) {
    std::ostringstream os;
    os.precision(17);
    auto cs = [&](const Cube& q) {
        std::string s;
        for (int a = 0; a < d; ++a) s += (a ? " " : "") + std::to_string(q.c[a]);
        return s;
    };
    os << "gap,dist,max_ratio,pairs,I_level,I_coords,J_level,J_coords\n";
    for (const auto& b : r.buckets)
        os << b.gap << ',' << b.dist << ',' << b.max_ratio << ',' << b.pairs << ',' << b.I.level << ',' << cs(b.I)
           << ',' << b.J.level << ',' << cs(b.J) << '\n';
    return os.str();
}

void write_atomic(const std::string& path, const std::string& text) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ResourceError("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw ResourceError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw ResourceError("cannot rename onto " + path + ": " + ec.message());
    }
}

}  // namespace mwdha
