#include "nssm/cli.hpp"

#include "nssm/diagnostics.hpp"
#include "nssm/evalharness.hpp"
#include "nssm/gaussmodel.hpp"
#include "nssm/io.hpp"
#include "nssm/parallel.hpp"
#include "nssm/poissonmodel.hpp"
#include "nssm/rng.hpp"
#include "nssm/simulate.hpp"
#include "nssm/tensorcp.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace nssm::cli {

namespace {

using io::Json;
namespace fs = std::filesystem;

// Typed access to one JSON object with key-level error messages.
class Cfg {
public:
    Cfg(const Json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "must be a JSON object");
    }

    [[nodiscard]] bool has(const std::string& k) const { return j_.contains(k); }
    [[nodiscard]] std::string key(const std::string& k) const { return prefix_.empty() ? k : prefix_ + "." + k; }

    [[nodiscard]] double num(const std::string& k, double def) const {
        if (!has(k)) return def;
        return number_at(k);
    }
    [[nodiscard]] double num(const std::string& k) const {
        if (!has(k)) throw ConfigError(key(k), "is required");
        return number_at(k);
    }
    [[nodiscard]] int integer(const std::string& k, int def) const {
        if (!has(k)) return def;
        return integer_at(k);
    }
    [[nodiscard]] int integer(const std::string& k) const {
        if (!has(k)) throw ConfigError(key(k), "is required");
        return integer_at(k);
    }
    [[nodiscard]] bool flag(const std::string& k, bool def) const {
        if (!has(k)) return def;
        if (!j_.at(k).is_boolean()) throw ConfigError(key(k), "must be true or false");
        return j_.at(k).get<bool>();
    }
    [[nodiscard]] std::string str(const std::string& k, const std::string& def) const {
        if (!has(k)) return def;
        if (!j_.at(k).is_string()) throw ConfigError(key(k), "must be a string");
        return j_.at(k).get<std::string>();
    }
    /// Scalar broadcast to length n, or an array of length n.
    [[nodiscard]] VectorXd vec(const std::string& k, int n, double def) const {
        if (!has(k)) return VectorXd::Constant(n, def);
        const Json& v = j_.at(k);
        if (v.is_number()) return VectorXd::Constant(n, number_at(k));
        if (!v.is_array() || static_cast<int>(v.size()) != n)
            throw ConfigError(key(k), "must be a number or an array of length " + std::to_string(n));
        VectorXd out(n);
        for (int i = 0; i < n; ++i) {
            if (!v[static_cast<std::size_t>(i)].is_number()) throw ConfigError(key(k), "array entries must be numbers");
            out(i) = v[static_cast<std::size_t>(i)].get<double>();
        }
        return out;
    }
    [[nodiscard]] std::vector<int> int_list(const std::string& k, std::vector<int> def) const {
        if (!has(k)) return def;
        const Json& v = j_.at(k);
        if (!v.is_array()) throw ConfigError(key(k), "must be an array of integers");
        std::vector<int> out;
        for (const auto& e : v) {
            if (!e.is_number_integer()) throw ConfigError(key(k), "must be an array of integers");
            out.push_back(e.get<int>());
        }
        return out;
    }
    [[nodiscard]] Cfg sub(const std::string& k) const {
        static const Json empty = Json::object();
        return has(k) ? Cfg(j_.at(k), key(k)) : Cfg(empty, key(k));
    }
    void only(const std::set<std::string>& allowed) const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (allowed.count(it.key()) == 0) throw ConfigError(key(it.key()), "is not a recognized key");
    }
    [[nodiscard]] const Json& raw() const { return j_; }

private:
    double number_at(const std::string& k) const {
        if (!j_.at(k).is_number()) throw ConfigError(key(k), "must be a number");
        return j_.at(k).get<double>();
    }
    int integer_at(const std::string& k) const {
        if (!j_.at(k).is_number_integer()) throw ConfigError(key(k), "must be an integer");
        return j_.at(k).get<int>();
    }
    const Json& j_;
    std::string prefix_;
};

struct Options {
    std::string command;
    std::string config_path;
    std::string out_dir = "out";
    std::string panel_path;
    std::string network_path;
    std::string covariates_path;
    std::uint64_t seed = 0;
    int threads = 0;
    bool dump_states = false;
    bool dump_draws = false;
    bool quiet = false;
};

class Run {
public:
    explicit Run(Options opt) : opt_(std::move(opt)) {
        if (!opt_.config_path.empty()) {
            const std::string text = io::read_text(opt_.config_path);
            try {
                config_ = Json::parse(text);
            } catch (const Json::parse_error& e) {
                throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
            }
            inputs_[opt_.config_path] = io::fnv1a_hex(text);
        } else {
            config_ = Json::object();
        }
        threads_ = resolve_threads(opt_.threads);
    }

    int execute();

private:
    void output_csv(const std::string& name, const MatrixXd& m, const std::vector<std::string>& header) {
        io::write_csv(out_path(name), m, header);
        outputs_.push_back(name);
    }
    void output_text(const std::string& name, const std::string& text) {
        io::write_text(out_path(name), text);
        outputs_.push_back(name);
    }
    void output_registered(const std::string& name) { outputs_.push_back(name); }
    [[nodiscard]] fs::path out_path(const std::string& name) const { return fs::path(opt_.out_dir) / name; }
    void say(const std::string& s) const {
        if (!opt_.quiet) std::cout << s;
    }

    PanelData load_panel();
    design::DesignRecipe recipe_from(const Cfg& c, int q) const;
    lgss::StateNoiseSpec noise_from(const Cfg& c, int k) const;
    gauss::GaussianSpec gaussian_spec(const Cfg& c, int q) const;
    poisson::PoissonSpec poisson_spec(const Cfg& c, int q) const;
    poisson::StabilizerConfig stabilizer(const Cfg& c) const;
    std::unique_ptr<eval::ForecastModel> model_from(const Cfg& c, int q, bool with_network) const;

    void write_manifest();
    void cmd_simulate();
    void cmd_fit();
    void cmd_forecast();
    void cmd_evaluate();
    void cmd_diagnose();
    void cmd_irf();
    void cmd_perturb();

    Options opt_;
    Json config_;
    int threads_ = 1;
    std::map<std::string, std::string> inputs_;
    std::vector<std::string> outputs_;
};

const std::set<std::string> kModelKeys{"model", "p", "q0", "q1", "d", "sigma2", "m0_scale", "P0_scale",
                                       "network_policy", "include_network", "include_own", "include_intercept",
                                       "S", "stabilizer", "rank", "sweeps", "q", "seed"};

std::set<std::string> with(std::set<std::string> base, std::initializer_list<std::string> more) {
    base.insert(more);
    return base;
}

std::vector<std::string> labelled(const std::string& prefix, const std::vector<std::string>& labels) {
    std::vector<std::string> out;
    for (const auto& l : labels) out.push_back(prefix + l);
    return out;
}

std::vector<std::string> node_header(int n) {
    std::vector<std::string> h;
    for (int i = 0; i < n; ++i) h.push_back("node" + std::to_string(i));
    return h;
}

PanelData Run::load_panel() {
    if (opt_.panel_path.empty()) throw ConfigError("--panel", "is required for this command");
    PanelData d;
    d.y = io::read_panel(opt_.panel_path);
    inputs_[opt_.panel_path] = io::file_checksum(opt_.panel_path);
    if (!opt_.network_path.empty()) {
        d.w_seq = io::read_networks(opt_.network_path, d.n_nodes());
        inputs_[opt_.network_path] = io::file_checksum(opt_.network_path);
    } else {
        d.w_seq = {MatrixXd::Zero(d.n_nodes(), d.n_nodes())};
    }
    if (!opt_.covariates_path.empty()) {
        d.z = io::read_covariates(opt_.covariates_path, d.n_times(), d.n_nodes());
        inputs_[opt_.covariates_path] = io::file_checksum(opt_.covariates_path);
    }
    d.validate();
    return d;
}

design::DesignRecipe Run::recipe_from(const Cfg& c, int q) const {
    design::DesignRecipe r;
    r.lag_order = c.integer("p", 1);
    if (r.lag_order < 1) throw ConfigError(c.key("p"), "must be >= 1");
    r.include_network_lags = c.flag("include_network", !opt_.network_path.empty());
    r.include_own_lags = c.flag("include_own", true);
    r.include_intercept = c.flag("include_intercept", true);
    r.covariate_count = q;
    return r;
}

lgss::StateNoiseSpec Run::noise_from(const Cfg& c, int k) const {
    const VectorXd q0 = c.vec("q0", k, 1e-4);
    if ((q0.array() < 0.0).any()) throw ConfigError(c.key("q0"), "must be nonnegative");
    if (c.has("q1") || c.has("d")) {
        if (!c.has("q1") || !c.has("d")) throw ConfigError(c.key(c.has("q1") ? "d" : "q1"), "threshold noise needs both q1 and d");
        const VectorXd q1 = c.vec("q1", k, 0.0);
        const VectorXd d = c.vec("d", k, 0.0);
        if ((q1.array() < 0.0).any()) throw ConfigError(c.key("q1"), "must be nonnegative");
        if ((d.array() <= 0.0).any()) throw ConfigError(c.key("d"), "must be positive");
        return lgss::StateNoiseSpec::threshold(q0, q1, d);
    }
    return lgss::StateNoiseSpec::constant(q0.asDiagonal());
}

gauss::GaussianSpec Run::gaussian_spec(const Cfg& c, int q) const {
    const design::DesignRecipe r = recipe_from(c, q);
    const int k = r.n_columns();
    const double sigma2 = c.num("sigma2", 1.0);
    if (!(sigma2 > 0.0)) throw ConfigError(c.key("sigma2"), "must be positive");
    const double p0 = c.num("P0_scale", 10.0);
    if (!(p0 > 0.0)) throw ConfigError(c.key("P0_scale"), "must be positive");
    gauss::GaussianSpec s = gauss::GaussianSpec::make(r, noise_from(c, k), sigma2, p0);
    s.m0 = VectorXd::Constant(k, c.num("m0_scale", 0.0));
    try {
        s.network_policy = parse_network_policy(c.str("network_policy", "carry_forward"));
    } catch (const InvalidArgument& e) {
        throw ConfigError(c.key("network_policy"), e.what());
    }
    return s;
}

poisson::PoissonSpec Run::poisson_spec(const Cfg& c, int q) const {
    const design::DesignRecipe r = recipe_from(c, q);
    const int k = r.n_columns();
    const double p0 = c.num("P0_scale", 1.0);
    if (!(p0 > 0.0)) throw ConfigError(c.key("P0_scale"), "must be positive");
    poisson::PoissonSpec s = poisson::PoissonSpec::make(r, noise_from(c, k), p0);
    s.m0 = VectorXd::Constant(k, c.num("m0_scale", 0.0));
    return s;
}

poisson::StabilizerConfig Run::stabilizer(const Cfg& c) const {
    const Cfg s = c.sub("stabilizer");
    s.only({"phi", "eta_max", "lambda_max", "enabled"});
    poisson::StabilizerConfig out;
    out.phi = s.num("phi", out.phi);
    out.eta_max = s.num("eta_max", out.eta_max);
    out.lambda_max = s.num("lambda_max", out.lambda_max);
    out.enabled = s.flag("enabled", out.enabled);
    try {
        out.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(c.key("stabilizer"), e.what());
    }
    return out;
}

std::unique_ptr<eval::ForecastModel> Run::model_from(const Cfg& c, int q, bool with_network) const {
    const std::string kind = c.str("model", "gaussian");
    Json tweaked = c.raw();
    if (!with_network) tweaked["include_network"] = false;
    const Cfg t(tweaked, "");
    if (kind == "gaussian") {
        auto spec = gaussian_spec(t, q);
        const auto policy = spec.network_policy;
        return std::make_unique<eval::GaussianForecaster>(std::move(spec), policy,
                                                          with_network ? "gaussian" : "gaussian_no_network");
    }
    if (kind == "poisson") {
        const int s = t.integer("S", 300);
        if (s < 1) throw ConfigError("S", "must be >= 1");
        NetworkPolicy policy;
        try {
            policy = parse_network_policy(t.str("network_policy", "carry_forward"));
        } catch (const InvalidArgument& e) {
            throw ConfigError("network_policy", e.what());
        }
        return std::make_unique<eval::PoissonForecaster>(poisson_spec(t, q), s, stabilizer(t), policy,
                                                         with_network ? "poisson" : "poisson_no_network");
    }
    throw ConfigError("model", "must be \"gaussian\" or \"poisson\" for this command (got \"" + kind + "\")");
}

void Run::write_manifest() {
    Json m;
    m["command"] = opt_.command;
    m["config"] = config_;
    m["seed"] = opt_.seed;
    m["threads"] = threads_;
    m["version"] = kVersion;
    Json in = Json::object();
    for (const auto& [path, sum] : inputs_) in[path] = sum;
    m["inputs"] = in;
    Json out = Json::object();
    for (const auto& name : outputs_) out[name] = io::file_checksum(out_path(name));
    m["outputs"] = out;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    m["created_at"] = ts.str();
    io::write_text(out_path("manifest.json"), m.dump(2) + "\n");
}

void Run::cmd_simulate() {
    const Cfg root(config_, "");
    root.only({"simulate"});
    const Cfg c = root.sub("simulate");
    c.only({"family", "N", "T", "graph", "init", "rw_sd", "jump_rate", "jump_lo", "jump_hi", "c", "sigma2",
            "burn_in", "drift_sd"});
    const std::string family = c.str("family", "gaussian");
    if (family != "gaussian" && family != "poisson") throw ConfigError(c.key("family"), "must be gaussian or poisson");
    const int n = c.integer("N", 20);
    const int t_count = c.integer("T", 200);
    if (n < 2) throw ConfigError(c.key("N"), "must be >= 2");
    if (t_count < 3) throw ConfigError(c.key("T"), "must be >= 3");

    const Cfg g = c.sub("graph");
    g.only({"kind", "dim", "scale", "density", "block_sizes", "p_in", "p_out", "m_attach"});
    const std::string kind = g.str("kind", "latent_distance");
    const double drift = c.num("drift_sd", 0.0);
    std::vector<MatrixXd> w_seq;
    if (kind == "latent_distance") {
        sim::LatentDistance ld;
        ld.dim = g.integer("dim", 2);
        ld.scale = g.num("scale", 1.0);
        if (g.has("density") && g.raw().at("density").is_null()) ld.target_density.reset();
        else ld.target_density = g.num("density", 0.15);
        if (drift > 0.0) {
            for (auto& gg : sim::gen_latent_drift(n, ld, t_count, drift, derive_seed(opt_.seed, "sim_graph")))
                w_seq.push_back(gg.w.w);
        } else {
            w_seq.push_back(sim::gen_graph({ld, n, derive_seed(opt_.seed, "sim_graph")}).w.w);
        }
    } else if (kind == "sbm") {
        sim::Sbm sbm;
        sbm.block_sizes = g.int_list("block_sizes", {n / 2, n - n / 2});
        sbm.p_in = g.num("p_in", 0.3);
        sbm.p_out = g.num("p_out", 0.02);
        w_seq.push_back(sim::gen_graph({sbm, n, derive_seed(opt_.seed, "sim_graph")}).w.w);
    } else if (kind == "scale_free") {
        w_seq.push_back(sim::gen_graph({sim::ScaleFree{g.integer("m_attach", 2)}, n, derive_seed(opt_.seed, "sim_graph")}).w.w);
    } else {
        throw ConfigError(g.key("kind"), "must be latent_distance, sbm or scale_free");
    }

    sim::CoeffPathSpec cps;
    // Count lags enter the log-intensity unscaled, so Poisson defaults keep
    // beta1 + beta2 small enough for a stable fixed point.
    const bool counts = family == "poisson";
    cps.init = c.vec("init", 3, 0.0);
    if (!c.has("init")) {
        if (counts) cps.init << 0.5, 0.08, 0.08;
        else cps.init << 0.5, 0.3, 0.3;
    }
    cps.rw_sd = c.vec("rw_sd", 3, 0.0);
    if (!c.has("rw_sd")) {
        if (counts) cps.rw_sd << 0.005, 0.0005, 0.0005;
        else cps.rw_sd << 0.01, 0.005, 0.005;
    }
    const double rate = c.num("jump_rate", counts ? 0.0 : 0.02);
    if (rate > 0.0) cps.jumps = sim::SparseJumps{rate, c.num("jump_lo", 0.2), c.num("jump_hi", 0.5), {1}, true};
    cps.c = c.num("c", 1.0);
    const sim::CoeffPaths paths = sim::gen_coeff_paths(cps, t_count, derive_seed(opt_.seed, "sim_paths"));

    sim::PanelOptions po;
    po.sigma2 = c.num("sigma2", 0.25);
    po.burn_in = c.integer("burn_in", 50);
    const sim::SimulatedPanel panel =
        family == "gaussian" ? sim::gen_gaussian_panel(w_seq, paths.theta, po, derive_seed(opt_.seed, "sim_panel"))
                             : sim::gen_poisson_panel(w_seq, paths.theta, po, derive_seed(opt_.seed, "sim_panel"));

    output_csv("panel.csv", panel.data.y, node_header(n));
    if (w_seq.size() == 1) output_csv("network.csv", w_seq.front(), {});
    else {
        io::write_network_sequence(out_path("network.csv"), w_seq);
        output_registered("network.csv");
    }
    output_csv("true_paths.csv", paths.theta, po.recipe.column_labels());
    std::string jumps = "coef,time,size\n";
    for (std::size_t j = 0; j < paths.jump_times.size(); ++j)
        for (std::size_t k = 0; k < paths.jump_times[j].size(); ++k)
            jumps += std::to_string(j) + ',' + std::to_string(paths.jump_times[j][k]) + ',' +
                     io::format_double(paths.jump_sizes[j][k]) + '\n';
    output_text("jumps.csv", jumps);
    if (panel.unstable)
        std::cerr << "warning: simulated spillover operator exceeded unit operator norm (max "
                  << panel.max_op_norm << ")\n";
    say("simulated " + family + " panel: T=" + std::to_string(t_count) + " N=" + std::to_string(n) + "\n");
}

void Run::cmd_fit() {
    const Cfg c(config_, "");
    c.only(kModelKeys);
    const PanelData data = load_panel();
    const std::string kind = c.str("model", "gaussian");
    Json summary;
    summary["model"] = kind;

    auto write_states = [&](const std::string& name, const std::vector<lgss::Belief>& beliefs,
                            const std::vector<std::string>& labels) {
        const auto k = static_cast<Eigen::Index>(labels.size());
        MatrixXd m(static_cast<Eigen::Index>(beliefs.size()), 1 + 2 * k);
        for (std::size_t s = 0; s < beliefs.size(); ++s) {
            const auto r = static_cast<Eigen::Index>(s);
            m(r, 0) = beliefs[s].time_index;
            m.row(r).segment(1, k) = beliefs[s].mean.transpose();
            m.row(r).segment(1 + k, k) = beliefs[s].cov.diagonal().cwiseMax(0.0).cwiseSqrt().transpose();
        }
        std::vector<std::string> header{"time"};
        for (const auto& l : labelled("mean_", labels)) header.push_back(l);
        for (const auto& l : labelled("sd_", labels)) header.push_back(l);
        output_csv(name, m, header);
    };

    if (kind == "gaussian" || kind == "poisson") {
        lgss::FilterRun run;
        std::vector<std::string> labels;
        if (kind == "gaussian") {
            const auto spec = gaussian_spec(c, data.n_covariates());
            run = gauss::fit_gaussian(data, spec);
            labels = spec.recipe.column_labels();
            write_states("smoothed.csv", lgss::rts_smooth(run), labels);
        } else {
            const auto spec = poisson_spec(c, data.n_covariates());
            run = poisson::fit_poisson(data, spec);
            labels = spec.recipe.column_labels();
        }
        write_states("filtered.csv", run.filtered, labels);
        summary["loglik"] = run.loglik;
        summary["steps"] = run.n_steps();
        summary["columns"] = labels;
        if (opt_.dump_states) output_text("states.json", io::filter_run_to_json(run).dump(1) + "\n");
    } else if (kind == "cp_tvpvar") {
        const int rank = c.integer("rank", 1);
        const int p = c.integer("p", 1);
        cp::CPNoise noise;
        const VectorXd q = c.vec("q", 3, 1e-4);
        for (int m = 0; m < 3; ++m) noise.q[static_cast<std::size_t>(m)] = q(m);
        noise.sigma2 = c.num("sigma2", 1.0);
        cp::SweepSchedule sched;
        sched.sweeps = c.integer("sweeps", 2);
        const auto res = cp::cp_filter_alternating(data.y, rank, p, noise, sched, derive_seed(opt_.seed, "cp_fit"));
        MatrixXd m(static_cast<Eigen::Index>(res.filtered.size()), 2);
        for (std::size_t s = 0; s < res.filtered.size(); ++s) {
            m(static_cast<Eigen::Index>(s), 0) = p + static_cast<double>(s);
            m(static_cast<Eigen::Index>(s), 1) = res.step_loglik[s];
        }
        output_csv("cp_loglik.csv", m, {"time", "loglik"});
        const cp::CPFactors last = cp::sign_fix(res.filtered.back());
        const VectorXd xi = last.stack();
        output_csv("cp_factors.csv", xi, {"xi"});
        summary["loglik"] = res.loglik;
        summary["state_dim"] = last.state_dim();
        summary["skipped_updates"] = res.skipped_updates;
    } else {
        throw ConfigError("model", "must be gaussian, poisson or cp_tvpvar");
    }
    output_text("summary.json", summary.dump(2) + "\n");
    say("fit " + kind + ": loglik " + io::format_double(summary["loglik"].get<double>()) + "\n");
}

void Run::cmd_forecast() {
    const Cfg c(config_, "");
    c.only(with(kModelKeys, {"origin", "horizon"}));
    const PanelData data = load_panel();
    const int origin = c.integer("origin", data.n_times() - 1);
    const int horizon = c.integer("horizon", 1);
    if (horizon < 1) throw ConfigError("horizon", "must be >= 1");
    if (origin < 0 || origin >= data.n_times()) throw ConfigError("origin", "must index a row of the panel");
    const std::string kind = c.str("model", "gaussian");
    const int n = data.n_nodes();
    if (kind == "gaussian") {
        const auto spec = gaussian_spec(c, data.n_covariates());
        const auto run = gauss::fit_gaussian(data, spec);
        const auto fc = gauss::forecast_gaussian(run, spec, data, origin, horizon, spec.network_policy);
        MatrixXd m(horizon * n, 4);
        for (int h = 0; h < horizon; ++h)
            for (int i = 0; i < n; ++i) {
                const auto r = static_cast<Eigen::Index>(h) * n + i;
                const auto& f = fc[static_cast<std::size_t>(h)];
                m.row(r) << h + 1, i, f.mean(i), std::sqrt(std::max(f.cov(i, i), 0.0));
            }
        output_csv("forecast.csv", m, {"horizon", "node", "mean", "sd"});
    } else if (kind == "poisson") {
        const auto spec = poisson_spec(c, data.n_covariates());
        const auto run = poisson::fit_poisson(data, spec);
        const int s = c.integer("S", 300);
        const auto policy = parse_network_policy(c.str("network_policy", "carry_forward"));
        const auto ens = poisson::mc_forecast(run, spec, data, origin, horizon, s, stabilizer(c),
                                              derive_seed(opt_.seed, "cli_forecast"), policy, threads_);
        MatrixXd m(horizon * n, 8);
        for (int h = 0; h < horizon; ++h) {
            const auto st = poisson::ensemble_stats(ens[static_cast<std::size_t>(h)]);
            for (int i = 0; i < n; ++i)
                m.row(static_cast<Eigen::Index>(h) * n + i) << h + 1, i, st.mean_intensity(i), st.median_intensity(i),
                    st.count_quantiles(0, i), st.count_quantiles(1, i), st.count_quantiles(2, i), st.explosion_prob;
        }
        output_csv("forecast.csv", m,
                   {"horizon", "node", "mean_intensity", "median_intensity", "q05", "q50", "q95", "explosion_prob"});
        if (opt_.dump_draws) {
            io::write_draws_csv(out_path("draws.csv"), ens);
            output_registered("draws.csv");
        }
    } else {
        throw ConfigError("model", "must be gaussian or poisson for forecast");
    }
    say("forecast written for origin " + std::to_string(origin) + "\n");
}

void Run::cmd_evaluate() {
    const Cfg c(config_, "");
    c.only(with(kModelKeys, {"origins", "horizons", "scores", "coverage_level", "bootstrap", "baseline"}));
    const PanelData data = load_panel();
    eval::EvalPlan plan;
    plan.horizons = c.int_list("horizons", {1, 2, 4, 8});
    if (plan.horizons.empty()) throw ConfigError("horizons", "must not be empty");
    if (c.has("origins") && c.raw().at("origins").is_object()) {
        const Cfg o = c.sub("origins");
        o.only({"first", "last", "step"});
        const int first = o.integer("first");
        const int last = o.integer("last", data.n_times() - 1 - plan.horizons.back());
        const int step = o.integer("step", 1);
        if (step < 1) throw ConfigError(o.key("step"), "must be >= 1");
        for (int t = first; t <= last; t += step) plan.origins.push_back(t);
    } else {
        const int default_first = std::max(data.n_times() / 2, 2);
        std::vector<int> def;
        for (int t = default_first; t + plan.horizons.back() < data.n_times(); ++t)
            def.push_back(t);
        plan.origins = c.int_list("origins", def);
    }
    const std::string kind = c.str("model", "gaussian");
    plan.scores = {eval::ScoreKind::mae, eval::ScoreKind::mse, eval::ScoreKind::coverage, eval::ScoreKind::pit,
                   kind == "poisson" ? eval::ScoreKind::preq_mc_ls : eval::ScoreKind::gaussian_lpd};
    if (c.has("scores")) {
        plan.scores.clear();
        if (!c.raw().at("scores").is_array()) throw ConfigError("scores", "must be an array of score names");
        for (const auto& s : c.raw().at("scores")) {
            if (!s.is_string()) throw ConfigError("scores", "must be an array of score names");
            try {
                plan.scores.insert(eval::parse_score_kind(s.get<std::string>()));
            } catch (const InvalidArgument& e) {
                throw ConfigError("scores", e.what());
            }
        }
    }
    plan.coverage_level = c.num("coverage_level", 0.9);
    const Cfg b = c.sub("bootstrap");
    b.only({"block_len", "B", "level"});
    plan.bootstrap.block_len = b.integer("block_len", 8);
    plan.bootstrap.replicates = b.integer("B", 2000);
    plan.bootstrap.level = b.num("level", 0.95);
    plan.bootstrap.seed = derive_seed(opt_.seed, "cli_bootstrap");
    plan.seed = derive_seed(opt_.seed, "cli_evaluate");
    plan.threads = threads_;
    try {
        plan.validate(data.n_times());
    } catch (const InvalidArgument& e) {
        throw ConfigError("origins", e.what());
    }

    Json cfg_model = c.raw();
    for (const char* k : {"origins", "horizons", "scores", "coverage_level", "bootstrap", "baseline"}) cfg_model.erase(k);
    const Cfg mc(cfg_model, "");
    auto model = model_from(mc, data.n_covariates(), true);
    const eval::EvalReport rep = eval::rolling_eval(*model, data, plan);
    io::write_cells_csv(out_path("cells.csv"), rep);
    output_registered("cells.csv");

    std::vector<const eval::EvalReport*> reports{&rep};
    std::optional<eval::EvalReport> base;
    const std::string baseline = c.str("baseline", data.static_network() && opt_.network_path.empty() ? "none" : "no_network");
    if (baseline == "no_network") {
        auto bm = model_from(mc, data.n_covariates(), false);
        base = eval::rolling_eval(*bm, data, plan);
    } else if (baseline == "static_ols") {
        eval::StaticOlsForecaster bm(recipe_from(mc, data.n_covariates()));
        base = eval::rolling_eval(bm, data, plan);
    } else if (baseline != "none") {
        throw ConfigError("baseline", "must be no_network, static_ols or none");
    }
    if (base) reports.push_back(&*base);

    std::ostringstream table;
    table << std::left << std::setw(22) << "model" << std::setw(6) << "h" << std::setw(14) << "MAE" << std::setw(14)
          << "MSE" << std::setw(14) << "log score" << std::setw(10) << "coverage" << "valid\n";
    MatrixXd summary(static_cast<Eigen::Index>(reports.size() * plan.horizons.size()), 7);
    Eigen::Index row = 0;
    for (std::size_t r = 0; r < reports.size(); ++r)
        for (const auto& hr : reports[r]->by_horizon) {
            summary.row(row++) << static_cast<double>(r), hr.horizon, hr.mae, hr.mse, hr.mean_log_score,
                hr.coverage_rate, hr.n_valid;
            table << std::setw(22) << reports[r]->model << std::setw(6) << hr.horizon << std::setw(14)
                  << io::format_double(hr.mae) << std::setw(14) << io::format_double(hr.mse) << std::setw(14)
                  << io::format_double(hr.mean_log_score) << std::setw(10) << io::format_double(hr.coverage_rate)
                  << hr.n_valid << "\n";
        }
    output_csv("summary.csv", summary, {"model_index", "horizon", "mae", "mse", "log_score", "coverage", "n_valid"});

    Json rj;
    rj["models"] = Json::array();
    for (const auto* r : reports) rj["models"].push_back(r->model);
    rj["origins"] = rep.origins;
    rj["log_score"] = rep.log_score_kind;
    for (const auto& hr : rep.by_horizon) {
        Json hj;
        hj["horizon"] = hr.horizon;
        hj["failures"] = Json::array();
        for (std::size_t o = 0; o < hr.failed.size(); ++o)
            if (hr.failed[o]) hj["failures"].push_back({{"origin", rep.origins[o]}, {"message", hr.failure[o]}});
        if (hr.tail)
            hj["tail"] = {{"explosion_prob", hr.tail->explosion_prob},
                          {"median_abs_err", hr.tail->median_abs_err},
                          {"trimmed_mae", hr.tail->trimmed_mae}};
        if (hr.pit.size() != 0) {
            std::vector<double> pit;
            for (Eigen::Index o = 0; o < hr.pit.rows(); ++o)
                for (Eigen::Index i = 0; i < hr.pit.cols(); ++i)
                    if (!std::isnan(hr.pit(o, i))) pit.push_back(hr.pit(o, i));
            if (!pit.empty()) {
                const auto chi = eval::pit_uniformity(pit);
                hj["pit_histogram"] = chi.counts;
                hj["pit_chi2_p"] = chi.p_value;
            }
        }
        rj["horizons"].push_back(hj);
    }
    if (base) {
        MatrixXd dm(static_cast<Eigen::Index>(3 * plan.horizons.size()), 5);
        Eigen::Index dr = 0;
        table << "\npaired deltas (" << rep.model << " - " << base->model << "), "
              << static_cast<int>(100 * plan.bootstrap.level) << "% block-bootstrap CI\n";
        const std::vector<std::string> metrics{"mae", "mse", "log_score"};
        for (std::size_t mi = 0; mi < metrics.size(); ++mi) {
            if (metrics[mi] == "log_score" && rep.log_score_kind.empty()) continue;
            for (const auto& pd : eval::paired_deltas(rep, *base, metrics[mi], plan.bootstrap)) {
                dm.row(dr++) << static_cast<double>(mi), pd.horizon, pd.mean, pd.ci.lo, pd.ci.hi;
                table << "  " << std::setw(10) << metrics[mi] << "h=" << std::setw(4) << pd.horizon
                      << io::format_double(pd.mean) << "  [" << io::format_double(pd.ci.lo) << ", "
                      << io::format_double(pd.ci.hi) << "]\n";
            }
        }
        output_csv("deltas.csv", dm.topRows(dr), {"metric_index", "horizon", "delta", "lo", "hi"});
    }
    output_text("report.json", rj.dump(2) + "\n");
    say(table.str());
}

void Run::cmd_diagnose() {
    const Cfg c(config_, "");
    c.only(with(kModelKeys, {"break_factor"}));
    const PanelData data = load_panel();
    if (c.str("model", "gaussian") != "gaussian") throw ConfigError("model", "diagnose needs the gaussian model");
    const auto spec = gaussian_spec(c, data.n_covariates());
    const int net = spec.recipe.include_network_lags ? spec.recipe.network_column(1, 1) : -1;
    const int own = spec.recipe.own_column(1);
    if (net < 0 || own < 0) throw ConfigError("include_network", "diagnose needs network and own lag columns");
    const auto run = gauss::fit_gaussian(data, spec);
    const auto smoothed = lgss::rts_smooth(run);
    const auto steps = static_cast<Eigen::Index>(smoothed.size());
    VectorXd b1(steps);
    VectorXd b2(steps);
    MatrixXd theta(steps, spec.state_dim());
    std::vector<MatrixXd> ws;
    for (Eigen::Index s = 0; s < steps; ++s) {
        theta.row(s) = smoothed[static_cast<std::size_t>(s)].mean.transpose();
        b1(s) = theta(s, net);
        b2(s) = theta(s, own);
        ws.push_back(data.w_at(smoothed[static_cast<std::size_t>(s)].time_index));
    }
    const auto rep = diag::stability_report(b1, b2, ws);
    MatrixXd st(steps, 5);
    for (Eigen::Index s = 0; s < steps; ++s) {
        const auto& r = rep.rows[static_cast<std::size_t>(s)];
        st.row(s) << smoothed[static_cast<std::size_t>(s)].time_index, r.op_norm, r.spectral_radius, r.inf_norm, r.proxy;
    }
    output_csv("stability.csv", st, {"time", "op_norm", "spectral_radius", "inf_norm", "proxy"});

    const auto d = diag::data_scaled_threshold(theta, c.num("break_factor", 4.0));
    const auto breaks = diag::detect_breaks(theta, d);
    std::string bt = "coef,time\n";
    const auto labels = spec.recipe.column_labels();
    for (std::size_t j = 0; j < breaks.activations.size(); ++j)
        for (int t : breaks.activations[j]) bt += labels[j] + ',' + std::to_string(t + spec.recipe.lag_order) + '\n';
    output_text("breaks.csv", bt);
    Json s;
    s["max_op_norm"] = rep.max_op_norm;
    s["max_spectral_radius"] = rep.max_spectral_radius;
    s["max_inf_norm"] = rep.max_inf_norm;
    s["contraction"] = rep.contraction;
    s["thresholds"] = std::vector<double>(d.data(), d.data() + d.size());
    output_text("summary.json", s.dump(2) + "\n");
    say("max ||B_t||_op = " + io::format_double(rep.max_op_norm) + ", max rho(B_t) = " +
        io::format_double(rep.max_spectral_radius) + "\n");
}

void Run::cmd_irf() {
    const Cfg c(config_, "");
    c.only(with(kModelKeys, {"t", "h", "shock_node"}));
    const PanelData data = load_panel();
    const auto spec = gaussian_spec(c, data.n_covariates());
    const int net = spec.recipe.include_network_lags ? spec.recipe.network_column(1, 1) : -1;
    const int own = spec.recipe.own_column(1);
    if (net < 0 || own < 0 || spec.recipe.lag_order != 1)
        throw ConfigError("p", "irf needs a lag-1 design with network and own lags");
    const auto run = gauss::fit_gaussian(data, spec);
    const auto smoothed = lgss::rts_smooth(run);
    const int h = c.integer("h", 4);
    const int j = c.integer("shock_node", 0);
    const int p = spec.recipe.lag_order;
    const int t = c.integer("t", data.n_times() - 1 - h);
    if (t < p - 1 || t + h > data.n_times() - 1) throw ConfigError("t", "t + h must lie within the fitted sample");
    if (j < 0 || j >= data.n_nodes()) throw ConfigError("shock_node", "out of range");
    // Coefficient paths indexed by time; entry t + k is the smoothed mean at time t + k.
    VectorXd b1 = VectorXd::Zero(data.n_times());
    VectorXd b2 = VectorXd::Zero(data.n_times());
    for (const auto& b : smoothed) {
        b1(b.time_index) = b.mean(net);
        b2(b.time_index) = b.mean(own);
    }
    std::vector<MatrixXd> window;
    for (int k = 1; k <= h; ++k) window.push_back(data.w_at(t + k));
    const auto hop = diag::hop_coefficients(b1, b2, t, h);
    const auto res = diag::irf(window, hop, j);
    MatrixXd m(data.n_nodes() * (h + 1), 3);
    for (int r = 0; r <= h; ++r)
        for (int i = 0; i < data.n_nodes(); ++i) m.row(r * data.n_nodes() + i) << i, r, res.contributions(i, r);
    output_csv("irf_hops.csv", m, {"node", "hop", "contribution"});
    MatrixXd tot(data.n_nodes(), 2);
    for (int i = 0; i < data.n_nodes(); ++i) tot.row(i) << i, res.total(i);
    output_csv("irf_total.csv", tot, {"node", "response"});
    Json s;
    s["hop_coefficients"] = std::vector<double>(hop.c.data(), hop.c.data() + hop.c.size());
    try {
        const auto pi = graph::invariant_vector(graph::WeightMatrix{window.front(), graph::Provenance::observed, {}});
        s["macro_irf"] = diag::macro_irf(pi, b1, b2, t, h, j);
    } catch (const std::exception& e) {
        s["macro_irf"] = nullptr;
        s["macro_irf_note"] = e.what();
    }
    output_text("summary.json", s.dump(2) + "\n");
    say("irf written for shock at node " + std::to_string(j) + "\n");
}

void Run::cmd_perturb() {
    const Cfg root(config_, "");
    root.only({"perturbation", "N"});
    const Cfg c = root.sub("perturbation");
    c.only({"kind", "frac", "alpha", "iters"});
    if (opt_.network_path.empty()) throw ConfigError("--network", "is required for perturb");
    int n = root.integer("N", 0);
    if (n <= 0) {
        if (opt_.panel_path.empty()) throw ConfigError("N", "give N or --panel to size the network");
        n = static_cast<int>(io::read_panel(opt_.panel_path).cols());
    }
    const auto w_seq = io::read_networks(opt_.network_path, n);
    inputs_[opt_.network_path] = io::file_checksum(opt_.network_path);
    const std::string kind = c.str("kind", "edge_delete");
    graph::Perturbation pert;
    if (kind == "edge_delete") pert = graph::EdgeDelete{c.num("frac", 0.1)};
    else if (kind == "mix_uniform") pert = graph::MixUniform{c.num("alpha", 0.1)};
    else if (kind == "permute_labels") pert = graph::PermuteLabels{};
    else if (kind == "rewire_degseq") pert = graph::RewireDegseq{c.integer("iters", 100)};
    else throw ConfigError(c.key("kind"), "must be edge_delete, mix_uniform, permute_labels or rewire_degseq");
    std::vector<MatrixXd> out;
    const std::uint64_t s = derive_seed(opt_.seed, "cli_perturb");
    for (const auto& w : w_seq) out.push_back(graph::perturb(graph::WeightMatrix{w, graph::Provenance::observed, {}}, pert, s).w);
    if (out.size() == 1) output_csv("network_perturbed.csv", out.front(), {});
    else {
        io::write_network_sequence(out_path("network_perturbed.csv"), out);
        output_registered("network_perturbed.csv");
    }
    say("perturbed network: " + graph::describe(pert) + "\n");
}

int Run::execute() {
    fs::create_directories(opt_.out_dir);
    const std::string& cmd = opt_.command;
    if (cmd == "simulate") cmd_simulate();
    else if (cmd == "fit") cmd_fit();
    else if (cmd == "forecast") cmd_forecast();
    else if (cmd == "evaluate") cmd_evaluate();
    else if (cmd == "diagnose") cmd_diagnose();
    else if (cmd == "irf") cmd_irf();
    else if (cmd == "perturb") cmd_perturb();
    else throw ConfigError("command", "unknown command '" + cmd + "'");
    write_manifest();
    return 0;
}

void report_error(const std::string& kind, const std::string& message, Json extra = Json::object()) {
    Json e;
    e["error"] = extra;
    e["error"]["kind"] = kind;
    e["error"]["message"] = message;
    std::cerr << e.dump() << "\n";
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Network state-space models: simulate, fit, forecast, evaluate, diagnose"};
    app.require_subcommand(1);
    Options opt;
    if (const char* env = std::getenv("NSSM_THREADS")) opt.threads = std::max(0, std::atoi(env));
    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "simulate a panel, network and coefficient paths"},
        {"fit", "filter a panel and write state estimates"},
        {"forecast", "h-step predictive distribution from an origin"},
        {"evaluate", "rolling-origin forecast evaluation"},
        {"diagnose", "stability and break diagnostics of the smoothed fit"},
        {"irf", "impulse responses with hop attribution"},
        {"perturb", "apply a network perturbation"}};
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", opt.config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("-o,--out", opt.out_dir, "output directory");
        sub->add_option("--panel", opt.panel_path, "panel CSV (wide, or long time,node,value)")->check(CLI::ExistingFile);
        sub->add_option("--network", opt.network_path, "network CSV (dense, edge list, or sequence)")->check(CLI::ExistingFile);
        sub->add_option("--covariates", opt.covariates_path, "covariates CSV (time,node,z0,...)")->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "top-level random seed");
        sub->add_option("--threads", opt.threads, "worker threads (0 = auto; overrides NSSM_THREADS)");
        sub->add_flag("--dump-states", opt.dump_states, "write the full filter run as JSON");
        sub->add_flag("--dump-draws", opt.dump_draws, "write Monte-Carlo draws as CSV");
        sub->add_flag("-q,--quiet", opt.quiet, "suppress the stdout summary");
        sub->callback([&opt, name = name] { opt.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("usage", e.what());
        return 2;
    }
    try {
        Run r(opt);
        return r.execute();
    } catch (const ConfigError& e) {
        report_error("config", e.what(), {{"key", e.key()}});
        return 2;
    } catch (const NonConvergenceError& e) {
        report_error("numerical", e.what(), {{"last_iterate", e.last_iterate()}, {"iterations", e.iterations()}});
        return 3;
    } catch (const NumericalError& e) {
        report_error("numerical", e.what(), {{"condition", e.condition()}});
        return 3;
    } catch (const InvalidArgument& e) {
        report_error("input", e.what());
        return 2;
    } catch (const Unsupported& e) {
        report_error("unsupported", e.what());
        return 2;
    } catch (const io::IoError& e) {
        report_error("io", e.what());
        return 2;
    } catch (const std::exception& e) {
        report_error("internal", e.what());
        return 1;
    }
}

}  // namespace nssm::cli
