#pragma once

// JSON and CSV encodings of distributions, policies, solver output, batch
// results and calibration certificates.

#include <json.hpp>

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "crw/analysis.hpp"
#include "crw/dp.hpp"
#include "crw/errors.hpp"
#include "crw/lattice.hpp"
#include "crw/montecarlo.hpp"
#include "crw/policy.hpp"
#include "crw/scalar.hpp"

namespace crw {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json scalar_json(double v) { return v; }
inline Json scalar_json(const Rational& v) { return v.str(); }

template <class Real>
Real scalar_from_json(const Json& j);

template <>
inline double scalar_from_json<double>(const Json& j) {
    if (j.is_string()) return to_double(Rational(j.get<std::string>()));
    return j.get<double>();
}

template <>
inline Rational scalar_from_json<Rational>(const Json& j) {
    if (j.is_string()) return Rational(j.get<std::string>());
    return from_double<Rational>(j.get<double>());
}

template <class Range>
Json scalar_array(const Range& v) {
    Json a = Json::array();
    for (const auto& x : v) a.push_back(scalar_json(x));
    return a;
}

template <class Real>
std::vector<Real> scalar_vector(const Json& a) {
    std::vector<Real> v;
    for (const auto& x : a) v.push_back(scalar_from_json<Real>(x));
    return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Distributions

/// {time, offset, mass[], flag_split}; with flag_split the per-flag layers
/// are added as mass_not_hit / mass_hit. Rational masses are "p/q" strings.
template <class Real>
Json distribution_to_json(const Distribution<Real>& d, bool flag_split = false) {
    Json j;
    j["time"] = d.time();
    j["offset"] = d.lo();
    j["mass"] = detail::scalar_array(d.collapsed());
    j["flag_split"] = flag_split;
    if (flag_split) {
        j["mass_not_hit"] = detail::scalar_array(d.layer(Flag::not_hit));
        j["mass_hit"] = detail::scalar_array(d.layer(Flag::hit));
    }
    return j;
}

template <class Real = double>
Distribution<Real> distribution_from_json(const Json& j) {
    const Step time = j.at("time").get<Step>();
    const Site offset = j.at("offset").get<Site>();
    if (j.value("flag_split", false))
        return Distribution<Real>(time, offset, detail::scalar_vector<Real>(j.at("mass_not_hit")),
                                  detail::scalar_vector<Real>(j.at("mass_hit")));
    // Without the split all mass is put on the not-hit layer.
    auto m = detail::scalar_vector<Real>(j.at("mass"));
    std::vector<Real> zeros(m.size(), Real(0));
    return Distribution<Real>(time, offset, std::move(m), std::move(zeros));
}

// ---------------------------------------------------------------------------
// Policies

namespace detail {

inline Json phase_to_json(const PhaseControl& c) {
    return std::visit(
        [](const auto& p) -> Json {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ConstantControl>) return {{"kind", "constant"}, {"u", p.u}};
            else if constexpr (std::is_same_v<T, TwoZoneControl>) return {{"kind", "two-zone"}, {"band", p.band}};
            else return {{"kind", "fast-until-zero"}};
        },
        c);
}

inline PhaseControl phase_from_json(const Json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "constant") return ConstantControl{j.at("u").get<double>()};
    if (kind == "two-zone") return TwoZoneControl{j.at("band").get<Site>()};
    if (kind == "fast-until-zero") return FastUntilZeroControl{};
    throw ParameterError("unknown phase kind '" + kind + "'");
}

}  // namespace detail

inline Json region_bitmap_to_json(const RegionBitmap& r) {
    Json rows = Json::array();
    for (Step t = 0; t < r.horizon(); ++t) rows.push_back(r.encode_row(t));
    return {{"horizon", r.horizon()}, {"lo", r.lo()}, {"hi", r.hi()}, {"rows", rows}};
}

inline RegionBitmap region_bitmap_from_json(const Json& j) {
    RegionBitmap r(j.at("horizon").get<Step>(), j.at("lo").get<Site>(), j.at("hi").get<Site>());
    const auto& rows = j.at("rows");
    if (rows.size() != static_cast<std::size_t>(r.horizon())) throw ParameterError("region row count mismatch");
    for (Step t = 0; t < r.horizon(); ++t)
        r.decode_row(t, rows[static_cast<std::size_t>(t)].get<std::vector<std::uint64_t>>());
    return r;
}

/// {kind, q_cap, params}.
inline Json policy_to_json(const PolicySpec& p) {
    Json j;
    j["kind"] = to_string(p.kind());
    j["q_cap"] = p.q_cap();
    Json params = Json::object();
    std::visit(
        [&](const auto& b) {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, ConstantControl>) params["u"] = b.u;
            else if constexpr (std::is_same_v<T, TwoZoneControl>) params["band"] = b.band;
            else if constexpr (std::is_same_v<T, ScheduleControl>) {
                Json segs = Json::array();
                for (const auto& g : b.segments)
                    segs.push_back({{"t_start", g.t_start},
                                    {"t_end", g.t_end},
                                    {"control", detail::phase_to_json(g.control)},
                                    {"scale_index", g.scale_index},
                                    {"scale", g.scale},
                                    {"resets_flag", g.resets_flag}});
                params["segments"] = segs;
            } else if constexpr (std::is_same_v<T, BangBangControl>) {
                params["region"] = region_bitmap_to_json(*b.region);
            }
        },
        p.body());
    j["params"] = params;
    return j;
}

inline PolicySpec policy_from_json(const Json& j) {
    const auto kind = j.at("kind").get<std::string>();
    const double q = j.at("q_cap").get<double>();
    const Json params = j.value("params", Json::object());
    if (kind == "constant") return PolicySpec(q, ConstantControl{params.at("u").get<double>()});
    if (kind == "two-zone") return PolicySpec(q, TwoZoneControl{params.at("band").get<Site>()});
    if (kind == "fast-until-zero") return PolicySpec(q, FastUntilZeroControl{});
    if (kind == "schedule") {
        ScheduleControl s;
        for (const auto& g : params.at("segments"))
            s.segments.push_back(ScheduleSegment{g.at("t_start").get<Step>(), g.at("t_end").get<Step>(),
                                                 detail::phase_from_json(g.at("control")),
                                                 g.value("scale_index", 0), g.value("scale", 0.0),
                                                 g.value("resets_flag", false)});
        return PolicySpec(q, std::move(s));
    }
    if (kind == "bang-bang-table")
        return PolicySpec(q, BangBangControl{std::make_shared<const RegionBitmap>(
                                 region_bitmap_from_json(params.at("region")))});
    throw ParameterError("unknown policy kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Solver output

inline Json region_to_json(const std::vector<RegionSlice>& slices) {
    Json a = Json::array();
    for (const auto& s : slices) {
        Json iv = Json::array();
        for (const auto& i : s.intervals) iv.push_back({i.lo, i.hi});
        a.push_back({{"t", s.t}, {"intervals", iv}, {"max_radius", s.max_radius}});
    }
    return a;
}

/// Plot-ready boundary curve: t, max_radius (-1 for an empty slice).
inline void write_region_boundary_csv(std::ostream& os, const std::vector<RegionSlice>& slices) {
    os << "t,max_radius\n";
    for (const auto& s : slices) os << s.t << ',' << s.max_radius << '\n';
}

// ---------------------------------------------------------------------------
// Monte Carlo output

inline Json estimate_to_json(const HitEstimate& e) {
    return {{"trials", e.trials}, {"hits", e.hits}, {"p_hat", e.p_hat}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high}};
}

inline Json stage_stats_to_json(const StageStats& s) {
    Json j{{"index", s.index},
           {"radius", s.radius},
           {"t_lo", s.t_lo},
           {"entered", s.entered},
           {"entered_before_horizon", s.entered_before_horizon}};
    if (s.has_next) {
        j["next_entered"] = s.next_entered;
        j["next_frequency"] = s.next_frequency;
        j["next_ci_low"] = s.next_ci_low;
        j["next_ci_high"] = s.next_ci_high;
        j["escape_frequency"] = s.escape_frequency;
    }
    return j;
}

/// {policy, n, trials, seed, p_hat, ci_low, ci_high, stage_stats[]}.
inline Json batch_to_json(const PolicySpec& policy, Step n, std::uint64_t seed, const HitEstimate& e,
                          const std::vector<StageStats>& stages = {}) {
    Json j{{"policy", policy_to_json(policy)}, {"n", n},           {"trials", e.trials},   {"seed", seed},
           {"hits", e.hits},                   {"p_hat", e.p_hat}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high}};
    Json st = Json::array();
    for (const auto& s : stages) st.push_back(stage_stats_to_json(s));
    j["stage_stats"] = st;
    return j;
}

inline Json barrier_report_to_json(const BarrierReport& r) {
    Json st = Json::array();
    for (const auto& s : r.stages) st.push_back(stage_stats_to_json(s));
    Json j{{"n", r.family.n},
           {"beta", r.family.beta_exp},
           {"N0", r.family.N0},
           {"rule", to_string(r.rule)},
           {"trials", r.trials},
           {"seed", r.seed},
           {"terminal_in_window", r.terminal_in_window},
           {"terminal_at_zero", r.terminal_at_zero},
           {"window_violations", r.window_violations},
           {"zero_violations", r.zero_violations},
           {"monotone", r.monotone},
           {"stage_stats", st}};
    j["min_escape"] = r.min_escape ? Json(*r.min_escape) : Json(nullptr);
    return j;
}

inline Json lemma0_to_json(const Lemma0Result& r) {
    return {{"q", r.q_cap},
            {"h", r.h},
            {"delta", r.delta},
            {"ell", r.ell},
            {"estimate", estimate_to_json(r.estimate)},
            {"bound", Lemma0Result::bound},
            {"violation", r.violation},
            {"pass", !r.violation}};
}

inline Json lemma_ori_to_json(const LemmaOriResult& r) {
    Json starts = Json::array();
    for (const auto& s : r.starts)
        starts.push_back({{"x", s.x},
                          {"contained", estimate_to_json(s.contained)},
                          {"never_hit", s.never_hit},
                          {"exit_after_hit", s.exit_after_hit}});
    return {{"q", r.q_cap},
            {"A", r.A},
            {"K", r.K},
            {"steps", r.steps},
            {"min_contained", r.min_contained},
            {"worst_start", r.worst_start},
            {"never_hit_frequency", r.never_hit_frequency},
            {"exit_after_hit_frequency", r.exit_after_hit_frequency},
            {"starts", starts}};
}

// ---------------------------------------------------------------------------
// Analysis output

inline constexpr const char* kSweepCsvHeader = "policy_kind,q,n,p,method,ci_low,ci_high";

inline std::string sweep_csv_row(const SweepRecord& r) {
    std::ostringstream os;
    os.precision(17);
    os << r.policy_kind << ',' << r.q << ',' << r.n << ',' << r.p << ',' << to_string(r.method) << ',' << r.ci_low
       << ',' << r.ci_high;
    return os.str();
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRecord>& records) {
    os << kSweepCsvHeader << '\n';
    for (const auto& r : records) os << sweep_csv_row(r) << '\n';
}

inline Json sweep_record_to_json(const SweepRecord& r) {
    return {{"policy_kind", r.policy_kind}, {"q", r.q},           {"n", r.n},
            {"p", r.p},                     {"method", to_string(r.method)},
            {"ci_low", r.ci_low},           {"ci_high", r.ci_high}};
}

/// {sigma_hat, intercept, r2, n_min, n_max} plus the residuals.
inline Json fit_to_json(const ExponentFit& f) {
    return {{"sigma_hat", f.sigma_hat}, {"intercept", f.intercept}, {"r2", f.r_squared},
            {"n_min", f.n_min},         {"n_max", f.n_max},         {"cutoff", f.cutoff},
            {"residuals", f.residuals}};
}

inline Json heat_kernel_to_json(const HeatKernelProfile& p) {
    Json rows = Json::array();
    for (const auto& r : p.rows)
        rows.push_back({{"t", r.t},
                        {"sup_scaled", r.sup_scaled},
                        {"x", r.arg_x},
                        {"y", r.arg_y},
                        {"running_max", r.running_max}});
    return {{"q", p.q},
            {"band", p.band},
            {"probes", p.probes},
            {"rows", rows},
            {"max_total_mass", p.max_total_mass},
            {"top_octave_increase", p.top_octave_increase},
            {"bounded", p.bounded}};
}

// ---------------------------------------------------------------------------
// Certificates. Doubles are written in shortest round-trip form, so a stored
// certificate reloads bit-for-bit.

inline Json lemma5_to_json(const Lemma5Certificate& c) {
    Json scales = Json::array();
    for (const auto& s : c.per_scale)
        scales.push_back({{"K", s.K},
                          {"steps", s.steps},
                          {"band", s.band},
                          {"y", s.ys},
                          {"identity_sums", s.identity_sums},
                          {"direct_sums", s.direct_sums},
                          {"min_sum", s.min_sum},
                          {"max_crosscheck_diff", s.max_crosscheck_diff}});
    return {{"kind", "lemma5"},
            {"q", c.q},
            {"alpha", c.alpha},
            {"beta", c.beta},
            {"K0", c.K0},
            {"eps", c.eps},
            {"gain", c.gain},
            {"reference_horizon", c.reference_horizon},
            {"scales", c.scales},
            {"max_crosscheck_diff", c.max_crosscheck_diff},
            {"per_scale", scales}};
}

inline Lemma5Certificate lemma5_from_json(const Json& j) {
    Lemma5Certificate c;
    c.q = j.at("q").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.beta = j.at("beta").get<double>();
    c.K0 = j.at("K0").get<double>();
    c.eps = j.at("eps").get<double>();
    c.gain = j.at("gain").get<double>();
    c.reference_horizon = j.at("reference_horizon").get<Step>();
    c.scales = j.at("scales").get<int>();
    c.max_crosscheck_diff = j.at("max_crosscheck_diff").get<double>();
    for (const auto& s : j.at("per_scale")) {
        Lemma5Scale sc;
        sc.K = s.at("K").get<Site>();
        sc.steps = s.at("steps").get<Step>();
        sc.band = s.at("band").get<Site>();
        sc.ys = s.at("y").get<std::vector<Site>>();
        sc.identity_sums = s.at("identity_sums").get<std::vector<double>>();
        sc.direct_sums = s.at("direct_sums").get<std::vector<double>>();
        sc.min_sum = s.at("min_sum").get<double>();
        sc.max_crosscheck_diff = s.at("max_crosscheck_diff").get<double>();
        c.per_scale.push_back(std::move(sc));
    }
    return c;
}

inline Json lemma6_to_json(const Lemma6Certificate& c) {
    Json scales = Json::array();
    for (const auto& s : c.per_scale)
        scales.push_back({{"K", s.K}, {"steps", s.steps}, {"fast_failure", s.fast_failure},
                          {"slow_failure", s.slow_failure}});
    return {{"kind", "lemma6"},
            {"eps", c.eps},
            {"A", c.A},
            {"q", c.q},
            {"q_exponent", c.q_exponent},
            {"per_scale", scales},
            {"fast_check", {{"K", c.fast_check_K}, {"closed_form", c.fast_check_closed}, {"evolved", c.fast_check_evolved}}},
            {"slow_check", {{"K", c.slow_check_K}, {"closed_form", c.slow_check_closed}, {"evolved", c.slow_check_evolved}}},
            {"max_crosscheck_diff", c.max_crosscheck_diff}};
}

inline Lemma6Certificate lemma6_from_json(const Json& j) {
    Lemma6Certificate c;
    c.eps = j.at("eps").get<double>();
    c.A = j.at("A").get<double>();
    c.q = j.at("q").get<double>();
    c.q_exponent = j.at("q_exponent").get<int>();
    for (const auto& s : j.at("per_scale"))
        c.per_scale.push_back(Lemma6Scale{s.at("K").get<Site>(), s.at("steps").get<Step>(),
                                          s.at("fast_failure").get<double>(), s.at("slow_failure").get<double>()});
    const auto& f = j.at("fast_check");
    c.fast_check_K = f.at("K").get<Site>();
    c.fast_check_closed = f.at("closed_form").get<double>();
    c.fast_check_evolved = f.at("evolved").get<double>();
    const auto& s = j.at("slow_check");
    c.slow_check_K = s.at("K").get<Site>();
    c.slow_check_closed = s.at("closed_form").get<double>();
    c.slow_check_evolved = s.at("evolved").get<double>();
    c.max_crosscheck_diff = j.at("max_crosscheck_diff").get<double>();
    return c;
}

inline Json replay_to_json(const ReplayResult& r) {
    return {{"identical", r.identical}, {"max_abs_diff", r.max_abs_diff}, {"values_checked", r.values_checked}};
}

// ---------------------------------------------------------------------------
// Files

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParameterError("'" + path + "' is not valid JSON: " + e.what());
    }
}

/// Reads newline-delimited JSON records.
inline std::vector<Json> read_ndjson_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open '" + path + "'");
    std::vector<Json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParameterError("bad record in '" + path + "': " + e.what());
        }
    }
    return out;
}

}  // namespace crw
