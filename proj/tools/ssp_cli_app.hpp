#ifndef SSP_TOOLS_CLI_APP_HPP
#define SSP_TOOLS_CLI_APP_HPP

// Command-line front end. Exit codes: 0 ok, 1 usage/config, 2 file format or
// IO, 3 pipeline failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "ssp/ssp.hpp"

namespace ssp::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kFormat = 2, kPipeline = 3 };

inline std::shared_ptr<spdlog::logger> logger() {
    static const std::shared_ptr<spdlog::logger> log = [] {
        auto l = std::make_shared<spdlog::logger>("ssp", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        l->set_pattern("[%l] %v");
        const char* env = std::getenv("SSP_LOG");
        const std::string level = env ? env : "warn";
        if (level == "error") {
            l->set_level(spdlog::level::err);
        } else if (level == "info") {
            l->set_level(spdlog::level::info);
        } else if (level == "debug") {
            l->set_level(spdlog::level::debug);
        } else {
            l->set_level(spdlog::level::warn);
        }
        return l;
    }();
    return log;
}

/// Options shared by every subcommand.
struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::size_t jobs = default_jobs();
    std::string out;
    std::string format = "json";
};

/// Where episodes come from: a manifest, or a seeded synthetic suite.
struct EpisodeSource {
    std::string manifest;
    std::size_t synthetic = 0;
    std::size_t shots = 1;
};

struct Effective {
    SspConfig cfg;
    SyntheticSpec synthetic;
};

inline std::vector<double> parse_grid(const std::string& text, const char* name) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) {
            throw Error(ErrorCode::InvalidConfig, std::string(name) + ": not a number: '" + item + "'");
        }
        out.push_back(v);
    }
    return out;
}

inline Effective resolve(const CommonOptions& opt) {
    Effective e;
    e.synthetic.seed = opt.seed;
    if (!opt.config_path.empty()) {
        std::ifstream in(opt.config_path);
        if (!in) {
            throw Error(ErrorCode::Io, "cannot open config " + opt.config_path);
        }
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::InvalidConfig, opt.config_path + ": invalid JSON: " + ex.what());
        }
        if (!j.is_object()) {
            throw Error(ErrorCode::InvalidConfig, opt.config_path + ": config must be a JSON object");
        }
        if (j.contains("synthetic")) {
            if (!j["synthetic"].is_object()) {
                throw Error(ErrorCode::InvalidConfig, "synthetic must be an object");
            }
            for (const auto& [k, v] : j["synthetic"].items()) {
                apply_override(e.synthetic, k, v.is_string() ? v.get<std::string>() : v.dump());
            }
            j.erase("synthetic");
        }
        e.cfg = config_from_json(j);
    }
    for (const auto& kv : opt.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw Error(ErrorCode::InvalidConfig, "--set expects KEY=VALUE, got '" + kv + "'");
        }
        const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key.rfind("synthetic.", 0) == 0) {
            apply_override(e.synthetic, std::string_view(key).substr(10), value);
        } else {
            apply_override(e.cfg, key, value);
        }
    }
    validate(e.cfg);
    validate(e.synthetic);
    return e;
}

inline std::vector<Episode> load_episodes(const EpisodeSource& src, const Effective& eff) {
    if (!src.manifest.empty() && src.synthetic > 0) {
        throw Error(ErrorCode::InvalidConfig, "use either --manifest or --synthetic, not both");
    }
    if (!src.manifest.empty()) {
        logger()->info("loading manifest {}", src.manifest);
        return load_manifest(src.manifest);
    }
    if (src.synthetic == 0) {
        throw Error(ErrorCode::InvalidConfig, "no episodes: pass --manifest PATH or --synthetic N");
    }
    if (src.shots == 0) {
        throw Error(ErrorCode::InvalidConfig, "--shots must be >= 1");
    }
    logger()->info("generating {} synthetic episodes ({}-shot)", src.synthetic, src.shots);
    return generate_suite(eff.synthetic, src.synthetic, src.shots);
}

/// Config block echoed into every artifact.
inline nlohmann::json echo(const Effective& eff, const CommonOptions& opt, const EpisodeSource* src) {
    nlohmann::json j{{"config", to_json(eff.cfg)}, {"seed", opt.seed}};
    if (src && src->synthetic > 0) {
        j["synthetic"] = to_json(eff.synthetic);
        j["synthetic"]["episodes"] = src->synthetic;
        j["synthetic"]["shots"] = src->shots;
    } else if (src) {
        j["manifest"] = src->manifest;
    }
    return j;
}

inline std::string csv_echo(const nlohmann::json& echo_block) { return "# " + echo_block.dump() + "\n"; }

class Emitter {
public:
    Emitter(const CommonOptions& opt, std::ostream& out) : opt_(opt), out_(out) {}

    void write(const std::string& text) const {
        if (opt_.out.empty()) {
            out_ << text;
            return;
        }
        const std::filesystem::path p(opt_.out);
        if (p.has_parent_path()) {
            std::filesystem::create_directories(p.parent_path());
        }
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw Error(ErrorCode::Io, "cannot write " + opt_.out);
        }
        f << text;
    }

private:
    const CommonOptions& opt_;
    std::ostream& out_;
};

inline void require_format(const CommonOptions& opt) {
    if (opt.format != "json" && opt.format != "csv") {
        throw Error(ErrorCode::InvalidConfig, "--format must be json or csv");
    }
}

// ---------------------------------------------------------------------------
// Subcommands

inline std::size_t count_fg(const Mask& fg_prob) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < fg_prob.pixels(); ++i) {
        n += fg_prob[i] > kBinarizeThreshold ? 1 : 0;
    }
    return n;
}

inline int cmd_match(const CommonOptions& opt, const EpisodeSource& src, std::optional<std::int64_t> episode_id,
                     std::ostream& out) {
    const Effective eff = resolve(opt);
    if (opt.out.empty()) {
        throw Error(ErrorCode::InvalidConfig, "match requires --out DIR");
    }
    const auto episodes = load_episodes(src, eff);
    if (episodes.empty()) {
        throw Error(ErrorCode::BadManifest, "manifest lists no episodes");
    }
    const Episode* ep = &episodes.front();
    if (episode_id) {
        ep = nullptr;
        for (const auto& e : episodes) {
            if (e.episode_id == *episode_id) {
                ep = &e;
            }
        }
        if (!ep) {
            throw Error(ErrorCode::InvalidConfig, "episode " + std::to_string(*episode_id) + " not found");
        }
    }
    const MatchResult r = run_pipeline(ep->supports, ep->query, eff.cfg);

    const std::filesystem::path dir(opt.out);
    std::filesystem::create_directories(dir);
    nlohmann::json stages;
    auto stage = [&](const char* name, const Prediction& p) {
        sspt::write_file(dir / (std::string(name) + ".sspt"), p.fg);
        nlohmann::json s{{"file", std::string(name) + ".sspt"}, {"fg_pixels", count_fg(p.fg)}};
        if (ep->query_gt) {
            s["metrics"] = to_json(pixel_metrics(p.fg, *ep->query_gt));
        }
        stages[name] = std::move(s);
    };
    stage("m1", r.m1);
    if (r.m2) {
        stage("m2", *r.m2);
    }
    if (r.m3) {
        stage("m3", *r.m3);
    }
    stage("m_final", r.m_final);

    nlohmann::json summary = echo(eff, opt, &src);
    summary["episode_id"] = ep->episode_id;
    summary["class_id"] = ep->class_id;
    summary["stages"] = std::move(stages);
    summary["self_support"] = optional_json(r.self_support);
    summary["refinement"] = optional_json(r.refinement);
    const std::string text = summary.dump(2) + "\n";
    std::ofstream f(dir / "summary.json", std::ios::trunc);
    if (!f) {
        throw Error(ErrorCode::Io, "cannot write " + (dir / "summary.json").string());
    }
    f << text;
    out << text;
    return kOk;
}

inline int cmd_eval(const CommonOptions& opt, const EpisodeSource& src, const std::string& ablation,
                    std::ostream& out) {
    require_format(opt);
    const Effective eff = resolve(opt);
    const auto episodes = load_episodes(src, eff);
    const auto report = evaluate(episodes, eff.cfg, parse_ablation(ablation), opt.seed, opt.jobs);
    logger()->info("evaluated {} episodes, mIoU {:.4f}", report.episodes.size(), report.miou());
    const auto block = echo(eff, opt, &src);
    if (opt.format == "csv") {
        Emitter(opt, out).write(csv_echo(block) + to_csv(report));
    } else {
        nlohmann::json j = to_json(report);
        j["run"] = block;
        Emitter(opt, out).write(j.dump(2) + "\n");
    }
    return kOk;
}

inline bool in_reference_plateau(double tau_fg, double tau_bg) {
    return tau_fg >= 0.7 && tau_fg <= 0.9 && tau_bg >= 0.5 && tau_bg <= 0.7;
}

inline int cmd_sweep_threshold(const CommonOptions& opt, const EpisodeSource& src, const std::string& fg_grid,
                               const std::string& bg_grid, const std::string& ablation, std::ostream& out) {
    require_format(opt);
    const Effective eff = resolve(opt);
    const auto fgs = parse_grid(fg_grid, "--tau-fg");
    const auto bgs = parse_grid(bg_grid, "--tau-bg");
    if (fgs.empty() || bgs.empty()) {
        throw Error(ErrorCode::InvalidConfig, "threshold grid is empty");
    }
    const auto episodes = load_episodes(src, eff);
    const Ablation ab = parse_ablation(ablation);
    nlohmann::json rows = nlohmann::json::array();
    std::ostringstream csv;
    csv.precision(17);
    csv << "tau_fg,tau_bg,miou,mae_all,in_reference_plateau\n";
    for (double tf : fgs) {
        for (double tb : bgs) {
            SspConfig cfg = eff.cfg;
            cfg.tau_fg = tf;
            cfg.tau_bg = tb;
            const auto rep = evaluate(episodes, cfg, ab, opt.seed, opt.jobs);
            const bool plateau = in_reference_plateau(tf, tb);
            rows.push_back({{"tau_fg", tf},
                            {"tau_bg", tb},
                            {"miou", rep.miou()},
                            {"mae_all", rep.m_final.mae_all},
                            {"in_reference_plateau", plateau}});
            csv << tf << ',' << tb << ',' << rep.miou() << ',' << rep.m_final.mae_all << ',' << (plateau ? 1 : 0)
                << '\n';
        }
    }
    nlohmann::json block = echo(eff, opt, &src);
    block["reference_plateau"] = {{"tau_fg", {0.7, 0.9}}, {"tau_bg", {0.5, 0.7}}};
    block["ablation"] = ablation;
    if (opt.format == "csv") {
        Emitter(opt, out).write(csv_echo(block) + csv.str());
    } else {
        block["grid"] = std::move(rows);
        Emitter(opt, out).write(block.dump(2) + "\n");
    }
    return kOk;
}

/// Table rows mirroring the self-support ablation: name and evaluation mode.
inline const std::vector<std::pair<std::string, Ablation>>& ablation_rows() {
    static const std::vector<std::pair<std::string, Ablation>> rows{{"baseline", Ablation::no_ssm},
                                                                    {"ssm", Ablation::no_asbp},
                                                                    {"ssm+asbp", Ablation::no_ssl_metrics},
                                                                    {"full", Ablation::full}};
    return rows;
}

inline int cmd_ablate(const CommonOptions& opt, const EpisodeSource& src, std::ostream& out) {
    require_format(opt);
    const Effective eff = resolve(opt);
    const auto episodes = load_episodes(src, eff);
    nlohmann::json rows = nlohmann::json::array();
    std::ostringstream csv;
    csv.precision(17);
    csv << "row,miou,mae_all_pct,mae_tp_pct\n";
    for (const auto& [name, ab] : ablation_rows()) {
        const auto rep = evaluate(episodes, eff.cfg, ab, opt.seed, opt.jobs);
        nlohmann::json row{{"row", name},
                           {"ablation", std::string(to_string(ab))},
                           {"miou", rep.miou()},
                           {"mae_all_pct", rep.m_final.mae_all * 100.0},
                           {"mae_tp_pct", rep.m_final.mae_tp * 100.0}};
        row["losses"] = optional_json(rep.mean_losses);
        rows.push_back(std::move(row));
        csv << name << ',' << rep.miou() << ',' << rep.m_final.mae_all * 100.0 << ',' << rep.m_final.mae_tp * 100.0
            << '\n';
    }
    nlohmann::json block = echo(eff, opt, &src);
    block["note"] = "losses are reported at inference time only; no training loop";
    if (opt.format == "csv") {
        Emitter(opt, out).write(csv_echo(block) + csv.str());
    } else {
        block["rows"] = std::move(rows);
        Emitter(opt, out).write(block.dump(2) + "\n");
    }
    return kOk;
}

inline int cmd_stats(const CommonOptions& opt, const EpisodeSource& src, std::ostream& out) {
    const Effective eff = resolve(opt);
    const auto episodes = load_episodes(src, eff);
    const auto st = similarity_stats(episodes, opt.seed);
    std::vector<double> fg_margin, bg_margin;
    for (const auto& s : st.per_episode) {
        if (s.fg_cross && s.fg_intra) {
            fg_margin.push_back(*s.fg_intra - *s.fg_cross);
        }
        if (s.bg_cross && s.bg_intra) {
            bg_margin.push_back(*s.bg_intra - *s.bg_cross);
        }
    }
    auto ci_json = [&](const std::vector<double>& v) -> nlohmann::json {
        if (v.empty()) {
            return nullptr;
        }
        const auto ci = bootstrap_mean(v, opt.seed);
        return {{"mean", ci.mean}, {"ci95_lower", ci.lower}, {"ci95_upper", ci.upper}};
    };
    nlohmann::json j = echo(eff, opt, &src);
    j["fg"] = {{"cross_object", st.fg_cross}, {"intra_object", st.fg_intra}, {"margin", ci_json(fg_margin)}};
    j["bg"] = {{"cross_image", st.bg_cross}, {"intra_image", st.bg_intra}, {"margin", ci_json(bg_margin)}};
    if (opt.format == "csv") {
        std::ostringstream csv;
        csv.precision(17);
        csv << "statistic,value\nfg_cross," << st.fg_cross << "\nfg_intra," << st.fg_intra << "\nbg_cross,"
            << st.bg_cross << "\nbg_intra," << st.bg_intra << '\n';
        Emitter(opt, out).write(csv_echo(echo(eff, opt, &src)) + csv.str());
    } else {
        Emitter(opt, out).write(j.dump(2) + "\n");
    }
    return kOk;
}

inline int cmd_partial(const CommonOptions& opt, const EpisodeSource& src, const std::string& ratios,
                       const std::string& noises, std::ostream& out) {
    require_format(opt);
    const Effective eff = resolve(opt);
    const auto rs = parse_grid(ratios, "--ratio");
    const auto ns = parse_grid(noises, "--noise");
    if (rs.empty() || ns.empty()) {
        throw Error(ErrorCode::InvalidConfig, "--ratio and --noise need at least one value");
    }
    const auto episodes = load_episodes(src, eff);
    nlohmann::json rows = nlohmann::json::array();
    std::ostringstream csv;
    csv.precision(17);
    csv << "object_ratio,noise_ratio,support_miou,self_miou\n";
    for (double r : rs) {
        for (double n : ns) {
            const auto sup =
                partial_prototype_experiment(episodes, r, n, PrototypeSource::support, opt.seed, eff.cfg.temperature);
            const auto self =
                partial_prototype_experiment(episodes, r, n, PrototypeSource::self, opt.seed, eff.cfg.temperature);
            rows.push_back({{"object_ratio", r},
                            {"noise_ratio", n},
                            {"support_miou", sup.mean_iou},
                            {"self_miou", self.mean_iou}});
            csv << r << ',' << n << ',' << sup.mean_iou << ',' << self.mean_iou << '\n';
        }
    }
    if (opt.format == "csv") {
        Emitter(opt, out).write(csv_echo(echo(eff, opt, &src)) + csv.str());
    } else {
        nlohmann::json j = echo(eff, opt, &src);
        j["rows"] = std::move(rows);
        Emitter(opt, out).write(j.dump(2) + "\n");
    }
    return kOk;
}

inline int cmd_gen_synthetic(const CommonOptions& opt, const EpisodeSource& src, bool bbox_supports,
                             std::ostream& out) {
    const Effective eff = resolve(opt);
    if (opt.out.empty()) {
        throw Error(ErrorCode::InvalidConfig, "gen-synthetic requires --out DIR");
    }
    if (!src.manifest.empty()) {
        throw Error(ErrorCode::InvalidConfig, "gen-synthetic does not read a manifest");
    }
    auto episodes = load_episodes(src, eff);
    if (bbox_supports) {
        episodes = with_bbox_supports(episodes);
    }
    const auto manifest = std::filesystem::path(opt.out) / "manifest.json";
    save_manifest(manifest, episodes);
    nlohmann::json j = echo(eff, opt, &src);
    j["manifest"] = manifest.string();
    j["bbox_supports"] = bbox_supports;
    std::ofstream f(std::filesystem::path(opt.out) / "generation.json", std::ios::trunc);
    f << j.dump(2) << '\n';
    out << j.dump(2) << '\n';
    return kOk;
}

struct GradCheckResult {
    std::size_t cases = 0;
    std::size_t components = 0;
    double max_rel_error = 0.0;
};

/// Central finite differences of loss_matching against loss_grad_query on
/// random cases. Each difference divides by the distance between the actually
/// stored float perturbations.
inline GradCheckResult gradient_check(std::size_t cases, std::size_t channels, std::size_t size, double step,
                                      std::uint64_t seed, double temperature, double min_grad = 1e-6) {
    GradCheckResult res;
    for (std::size_t k = 0; k < cases; ++k) {
        std::mt19937_64 rng(mix_seed(seed, k));
        std::normal_distribution<double> n(0.0, 1.0);
        auto rand_vec = [&](std::size_t len) {
            std::vector<float> v(len);
            for (auto& x : v) {
                x = static_cast<float>(n(rng));
            }
            return v;
        };
        FeatureMap q(channels, size, size, rand_vec(channels * size * size));
        const Prototype fg(rand_vec(channels));
        const PrototypeField bg(channels, size, size, rand_vec(channels * size * size));
        std::vector<std::uint8_t> bits(size * size);
        for (auto& b : bits) {
            b = static_cast<std::uint8_t>(rng() & 1u);
        }
        const Mask gt = Mask::binary(size, size, bits);
        const FeatureMap grad = loss_grad_query(fg, bg, q, gt, temperature);
        for (std::size_t i = 0; i < q.data().size(); ++i) {
            const float orig = q.data()[i];
            const float up = static_cast<float>(orig + step);
            const float down = static_cast<float>(orig - step);
            q.data()[i] = up;
            const double lp = loss_matching(fg, bg, q, gt, temperature);
            q.data()[i] = down;
            const double lm = loss_matching(fg, bg, q, gt, temperature);
            q.data()[i] = orig;
            const double numeric = (lp - lm) / (static_cast<double>(up) - static_cast<double>(down));
            const double analytic = grad.data()[i];
            if (std::abs(analytic) < min_grad) {
                continue;
            }
            res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - analytic) / std::abs(analytic));
            ++res.components;
        }
        ++res.cases;
    }
    return res;
}

inline int cmd_verify_grad(const CommonOptions& opt, std::size_t cases, std::size_t channels, std::size_t size,
                           double step, double tolerance, std::ostream& out) {
    const Effective eff = resolve(opt);
    const auto r = gradient_check(cases, channels, size, step, opt.seed, eff.cfg.temperature);
    const bool pass = r.max_rel_error < tolerance;
    nlohmann::json j = echo(eff, opt, nullptr);
    j["gradient_check"] = {{"cases", r.cases},         {"components_checked", r.components},
                           {"channels", channels},     {"size", size},
                           {"step", step},             {"max_rel_error", r.max_rel_error},
                           {"tolerance", tolerance},   {"pass", pass}};
    Emitter(opt, out).write(j.dump(2) + "\n");
    return pass ? kOk : kPipeline;
}

// ---------------------------------------------------------------------------

inline void add_common(CLI::App* sub, CommonOptions& o) {
    sub->add_option("--config", o.config_path, "JSON config file");
    sub->add_option("--set", o.overrides, "KEY=VALUE override (repeatable; synthetic.* for generator keys)");
    sub->add_option("--seed", o.seed, "run seed");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output path");
    sub->add_option("--format", o.format, "json or csv");
}

inline void add_source(CLI::App* sub, EpisodeSource& s) {
    sub->add_option("--manifest", s.manifest, "episode manifest (JSON)");
    sub->add_option("--synthetic", s.synthetic, "number of synthetic episodes");
    sub->add_option("--shots", s.shots, "supports per synthetic episode");
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Self-support prototype matching for few-shot segmentation features"};
    app.require_subcommand(1);
    CommonOptions common;
    EpisodeSource source;

    auto* match = app.add_subcommand("match", "run the pipeline on one episode and write the predictions");
    std::optional<std::int64_t> episode_id;
    add_common(match, common);
    add_source(match, source);
    match->add_option("--episode", episode_id, "episode_id to match (default: first)");

    auto* eval = app.add_subcommand("eval", "evaluate episodes and emit a batch report");
    std::string ablation = "full";
    add_common(eval, common);
    add_source(eval, source);
    eval->add_option("--ablation", ablation, "full | no_ssm | no_ssl_metrics | no_asbp");

    auto* sweep = app.add_subcommand("sweep-threshold", "mIoU over a tau_fg x tau_bg grid");
    std::string tau_fg = "0.5,0.6,0.7,0.8,0.9", tau_bg = "0.4,0.5,0.6,0.7,0.8";
    add_common(sweep, common);
    add_source(sweep, source);
    sweep->add_option("--tau-fg", tau_fg, "comma-separated foreground thresholds");
    sweep->add_option("--tau-bg", tau_bg, "comma-separated background thresholds");
    sweep->add_option("--ablation", ablation, "evaluation mode for every grid point");

    auto* ablate = app.add_subcommand("ablate", "baseline / ssm / ssm+asbp / full table");
    add_common(ablate, common);
    add_source(ablate, source);

    auto* stats = app.add_subcommand("stats", "cross vs intra object cosine similarity");
    add_common(stats, common);
    add_source(stats, source);

    auto* partial = app.add_subcommand("partial-proto", "support vs self prototypes from partial / noisy objects");
    std::string ratios = "1.0,0.1,0.01", noises = "0.0,0.2";
    add_common(partial, common);
    add_source(partial, source);
    partial->add_option("--ratio", ratios, "comma-separated object ratios in (0, 1]");
    partial->add_option("--noise", noises, "comma-separated noise ratios in [0, 1)");

    auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic suite as SSPT files plus manifest");
    bool bbox = false;
    add_common(gen, common);
    add_source(gen, source);
    gen->add_flag("--bbox-supports", bbox, "replace support masks with their bounding boxes");

    auto* grad = app.add_subcommand("verify-grad", "finite-difference check of the matching-loss gradient");
    std::size_t cases = 20, channels = 3, size = 4;
    double step = 1e-3, tolerance = 1e-3;
    add_common(grad, common);
    grad->add_option("--cases", cases, "random cases");
    grad->add_option("--channels", channels, "feature channels")->check(CLI::PositiveNumber);
    grad->add_option("--size", size, "spatial size (H = W)")->check(CLI::PositiveNumber);
    grad->add_option("--step", step, "finite-difference step");
    grad->add_option("--tolerance", tolerance, "max relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*match) return cmd_match(common, source, episode_id, out);
        if (*eval) return cmd_eval(common, source, ablation, out);
        if (*sweep) return cmd_sweep_threshold(common, source, tau_fg, tau_bg, ablation, out);
        if (*ablate) return cmd_ablate(common, source, out);
        if (*stats) return cmd_stats(common, source, out);
        if (*partial) return cmd_partial(common, source, ratios, noises, out);
        if (*gen) return cmd_gen_synthetic(common, source, bbox, out);
        if (*grad) return cmd_verify_grad(common, cases, channels, size, step, tolerance, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        if (e.code() == ErrorCode::InvalidConfig || e.code() == ErrorCode::InvalidRatio) {
            return kUsage;
        }
        return is_format_error(e.code()) ? kFormat : kPipeline;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kFormat;
    }
    return kUsage;
}

} // namespace ssp::cli

#endif // SSP_TOOLS_CLI_APP_HPP
