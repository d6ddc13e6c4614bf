// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ssp_cli_app.hpp"

using namespace ssp;
using oracle::to_vec;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// 1. Oracle equivalence ---------------------------------------------------------

Outcome oracle_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::size_t cases = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> dim(1, 8);
        const std::size_t C = dim(rng), H = dim(rng) + 1, W = dim(rng);
        const std::size_t HW = H * W;
        const FeatureMap f(C, H, W, oracle::gaussian(rng, C * HW));
        const auto fv = to_vec(f.data());

        const Mask m = Mask::binary(H, W, oracle::mixed_bits(rng, HW));
        worst = std::max(worst, oracle::max_rel_err(to_vec(masked_average_pooling(f, m).values()),
                                                    oracle::masked_average(fv, C, HW, to_vec(m.data()))));

        const Prototype p(oracle::gaussian(rng, C));
        const auto cos = oracle::cosine_map(to_vec(p.values()), fv, C, HW);
        worst = std::max(worst, oracle::max_rel_err(to_vec(cosine_map(p, f).data()), cos));

        const PrototypeField field(C, H, W, oracle::gaussian(rng, C * HW));
        const auto fcos = oracle::field_cosine_map(to_vec(field.data()), fv, C, HW);
        worst = std::max(worst, oracle::max_rel_err(to_vec(cosine_field_map(field, f).data()), fcos));

        const double t = 0.5 + static_cast<double>(seed % 20);
        const Prediction pr = pairwise_softmax(cosine_map(p, f), cosine_field_map(field, f), t);
        worst = std::max(worst, oracle::max_rel_err(to_vec(pr.fg.data()), oracle::softmax_fg(cos, fcos, t)));

        const std::size_t n = dim(rng), k = dim(rng), c = dim(rng);
        std::normal_distribution<double> g;
        std::vector<double> a(n * k), b(k * c);
        for (auto& x : a) x = g(rng);
        for (auto& x : b) x = g(rng);
        worst = std::max(worst, oracle::max_rel_err(to_vec(matmul(Matrix(n, k, a), Matrix(k, c, b)).data()),
                                                    oracle::matmul(a, b, n, k, c)));

        const Mask bg = Mask::binary(H, W, oracle::mixed_bits(rng, HW));
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < HW; ++i)
            if (bg[i] != 0.0f) idx.push_back(i);
        worst = std::max(worst, oracle::max_rel_err(to_vec(adaptive_bg_prototype(f, bg).data()),
                                                    oracle::adaptive_background(fv, C, HW, idx)));

        const Mask gt = Mask::binary(H, W, oracle::bits(rng, HW));
        const auto pm = pixel_metrics(pr.fg, gt);
        const auto pv = to_vec(pr.fg.data()), gv = to_vec(gt.data());
        worst = std::max({worst, oracle::rel_err(pm.iou, oracle::iou(pv, gv)),
                          oracle::rel_err(pm.mae_all, oracle::mae_all(pv, gv)),
                          oracle::rel_err(pm.mae_tp, oracle::mae_tp(pv, gv))});
        ++cases;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = cases >= 100 && worst < 1e-5 && secs < 60.0;
    return {pass, std::to_string(cases) + " cases x 8 ops, max rel err " + fmt("%.3g", worst) + ", " +
                      fmt("%.2f", secs) + " s"};
}

// 2. ASBP exhaustive --------------------------------------------------------------

Outcome asbp_exhaustive() {
    double worst = 0.0;
    std::size_t cases = 0;
    for (std::size_t C = 1; C <= 8; ++C) {
        for (std::size_t S = 1; S <= 8; ++S) {
            for (std::uint64_t seed = 0; seed < 10; ++seed) {
                std::mt19937_64 rng(mix_seed(seed, C * 100 + S));
                const FeatureMap q(C, S, S, oracle::gaussian(rng, C * S * S));
                auto bits = oracle::bits(rng, S * S);
                bits[std::uniform_int_distribution<std::size_t>(0, S * S - 1)(rng)] = 1;
                std::vector<std::size_t> idx;
                for (std::size_t i = 0; i < bits.size(); ++i)
                    if (bits[i]) idx.push_back(i);
                const auto got = adaptive_bg_prototype(q, Mask::binary(S, S, bits));
                worst = std::max(worst, oracle::max_rel_err(to_vec(got.data()),
                                                            oracle::adaptive_background(to_vec(q.data()), C, S * S, idx)));
                ++cases;
            }
        }
    }
    return {worst < 1e-5, std::to_string(cases) + " shapes/seeds (C<=8, H=W<=8), max deviation " + fmt("%.3g", worst)};
}

// 3. Gradient check ---------------------------------------------------------------

Outcome gradient_check() {
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 7000);
        FeatureMap q(3, 4, 4, oracle::gaussian(rng, 48));
        const Prototype fg(oracle::gaussian(rng, 3));
        const PrototypeField bg(3, 4, 4, oracle::gaussian(rng, 48));
        const Mask gt = Mask::binary(4, 4, oracle::bits(rng, 16));
        const FeatureMap g = loss_grad_query(fg, bg, q, gt);
        for (std::size_t i = 0; i < 48; ++i) {
            const float orig = q.data()[i];
            const float up = orig + 1e-3f, down = orig - 1e-3f;
            q.data()[i] = up;
            const double lp = loss_matching(fg, bg, q, gt);
            q.data()[i] = down;
            const double lm = loss_matching(fg, bg, q, gt);
            q.data()[i] = orig;
            const double fd = (lp - lm) / (static_cast<double>(up) - static_cast<double>(down));
            const double an = g.data()[i];
            if (std::abs(an) < 1e-6) {
                ++skipped;
                continue;
            }
            worst = std::max(worst, std::abs(fd - an) / std::abs(an));
            ++checked;
        }
    }
    return {worst < 1e-3 && checked > 0, "20 cases 3x4x4, h=1e-3: " + std::to_string(checked) + " components, " +
                                             std::to_string(skipped) + " below 1e-6 skipped, max rel err " +
                                             fmt("%.3g", worst)};
}

// 4-6. Synthetic suite properties ---------------------------------------------------

const std::vector<Episode>& suite() {
    static const std::vector<Episode> eps = generate_suite(SyntheticSpec{}, 200);
    return eps;
}

Outcome gestalt_ordering() {
    const auto st = similarity_stats(suite(), 0);
    std::vector<double> fg, bg;
    for (const auto& s : st.per_episode) {
        if (s.fg_intra && s.fg_cross) fg.push_back(*s.fg_intra - *s.fg_cross);
        if (s.bg_intra && s.bg_cross) bg.push_back(*s.bg_intra - *s.bg_cross);
    }
    const auto cf = bootstrap_mean(fg, 1), cb = bootstrap_mean(bg, 2);
    std::ostringstream d;
    d.precision(4);
    d << "fg intra " << st.fg_intra << " vs cross " << st.fg_cross << " (margin CI95 [" << cf.lower << ", "
      << cf.upper << "]); bg intra " << st.bg_intra << " vs cross " << st.bg_cross << " (margin CI95 [" << cb.lower
      << ", " << cb.upper << "])";
    return {st.fg_intra > st.fg_cross && st.bg_intra > st.bg_cross && cf.lower > 0.0 && cb.lower > 0.0, d.str()};
}

Outcome self_support_benefit() {
    std::ostringstream d;
    d.precision(4);
    bool pass = true;
    const std::pair<double, double> settings[] = {{1.0, 0.0}, {0.1, 0.0}, {0.01, 0.0}, {0.01, 0.2}};
    for (const auto& [r, n] : settings) {
        const double self = partial_prototype_experiment(suite(), r, n, PrototypeSource::self, 0).mean_iou;
        const double sup = partial_prototype_experiment(suite(), r, n, PrototypeSource::support, 0).mean_iou;
        pass = pass && self > sup;
        d << "r=" << r << (n > 0 ? "+noise" : "") << ": self " << self << " vs support " << sup << "; ";
    }
    const auto rep = evaluate(suite(), SspConfig{}, Ablation::full, 0, default_jobs());
    pass = pass && rep.m2 && rep.m2->miou > rep.m1.miou;
    d << "m2 " << (rep.m2 ? rep.m2->miou : 0.0) << " vs m1 " << rep.m1.miou;
    return {pass, d.str()};
}

Outcome ablation_monotonicity() {
    const auto full = evaluate(suite(), SspConfig{}, Ablation::full, 0, default_jobs());
    const auto base = evaluate(suite(), SspConfig{}, Ablation::no_ssm, 0, default_jobs());
    std::ostringstream d;
    d.precision(4);
    d << "mIoU full " << full.miou() << " vs baseline " << base.miou() << "; MAE_all(x100) full "
      << full.m_final.mae_all * 100 << " vs baseline " << base.m_final.mae_all * 100;
    return {full.miou() >= base.miou() && full.m_final.mae_all <= base.m_final.mae_all, d.str()};
}

// 7. Fallback / degeneracy ----------------------------------------------------------

Outcome fallback_degeneracy() {
    std::size_t runs = 0, typed = 0;
    std::vector<std::string> problems;
    auto check_prediction = [&](const Prediction& p, const std::string& what) {
        for (std::size_t i = 0; i < p.fg.pixels(); ++i) {
            const double s = static_cast<double>(p.fg[i]) + p.bg[i];
            if (!std::isfinite(p.fg[i]) || p.fg[i] < 0.0f || p.fg[i] > 1.0f || std::abs(s - 1.0) > 1e-5) {
                problems.push_back(what + ": invalid prediction");
                return;
            }
        }
    };
    auto attempt = [&](const std::string& what, const std::function<void()>& fn, bool error_expected = false) {
        ++runs;
        try {
            fn();
            if (error_expected) problems.push_back(what + ": expected a typed error");
        } catch (const Error&) {
            ++typed;
            if (!error_expected) problems.push_back(what + ": unexpected error");
        } catch (const std::exception& e) {
            problems.push_back(what + ": untyped exception " + e.what());
        }
    };

    const auto eps = generate_suite(SyntheticSpec{}, 6);
    std::vector<SspConfig> configs;
    for (double tf : {0.01, 0.5, 0.99}) {
        for (double tb : {0.01, 0.5, 0.99}) {
            for (bool refine : {false, true}) {
                for (auto kind : {FallbackKind::support_only, FallbackKind::topk}) {
                    SspConfig cfg;
                    cfg.tau_fg = tf;
                    cfg.tau_bg = tb;
                    cfg.refine = refine;
                    cfg.empty_mask_fallback = {kind, 16};
                    configs.push_back(cfg);
                }
            }
        }
    }
    for (const auto& cfg : configs) {
        for (const auto& ep : eps) {
            attempt("tau grid corner", [&] {
                const auto r = run_pipeline(ep.supports, ep.query, cfg);
                check_prediction(r.m_final, "tau grid corner");
                if (cfg.tau_fg == 0.99 && cfg.tau_bg == 0.99 &&
                    cfg.empty_mask_fallback.kind == FallbackKind::support_only && !(r.m_final.fg == r.m1.fg)) {
                    problems.push_back("empty estimates: support_only fallback differs from baseline");
                }
            });
        }
        for (auto ab : {Ablation::full, Ablation::no_asbp}) {
            attempt("evaluate corner", [&] { evaluate(eps, cfg, ab); });
        }
    }

    // single-pixel supports and ground truth
    for (const auto& base : eps) {
        Episode ep = base;
        Mask one = Mask::binary(ep.query.extent());
        one.set(0, 1.0f);
        ep.supports[0].mask = one;
        ep.query_gt = one;
        attempt("single-pixel masks", [&] {
            const auto o = evaluate_episode(ep, SspConfig{}, Ablation::full);
            if (!std::isfinite(o.losses->total)) problems.push_back("single-pixel: non-finite loss");
        });
        // all-foreground / all-background query ground truth
        Episode fg = base;
        fg.query_gt = Mask::binary(fg.query.extent()).complement();
        attempt("all-fg ground truth", [&] { evaluate_episode(fg, SspConfig{}, Ablation::full); });
        Episode bg = base;
        bg.query_gt = Mask::binary(bg.query.extent());
        attempt("all-bg ground truth", [&] { evaluate_episode(bg, SspConfig{}, Ablation::full); });
        // support without background, support without foreground: typed errors
        Episode full_support = base;
        for (std::size_t i = 0; i < full_support.supports[0].mask.pixels(); ++i)
            full_support.supports[0].mask.set(i, 1.0f);
        attempt("support without background", [&] { evaluate_episode(full_support, SspConfig{}, Ablation::full); }, true);
        Episode empty_support = base;
        empty_support.supports[0].mask = Mask::binary(base.query.extent());
        attempt("support without foreground", [&] { evaluate_episode(empty_support, SspConfig{}, Ablation::full); }, true);
    }

    // 1x1 frames and constant features
    attempt("1x1 query", [&] {
        const SupportSample s{FeatureMap(2, 1, 2, {1.0f, -1.0f, 0.5f, 0.5f}), Mask::binary(1, 2, {1, 0})};
        const SupportSample ss[] = {s};
        SspConfig cfg;
        cfg.refine = true;
        check_prediction(run_pipeline(ss, FeatureMap(2, 1, 1, {0.3f, 0.2f}), cfg).m_final, "1x1 query");
    });
    attempt("constant query", [&] {
        SspConfig cfg;
        cfg.refine = true;
        check_prediction(run_pipeline(eps[0].supports, FeatureMap(32, 20, 20, std::vector<float>(12800, 1.0f)), cfg).m_final,
                         "constant query");
    });
    attempt("zero query", [&] {
        check_prediction(run_pipeline(eps[0].supports, FeatureMap(32, 20, 20), SspConfig{}).m_final, "zero query");
    });

    std::string detail = std::to_string(runs) + " runs, " + std::to_string(typed) + " typed errors (all expected)";
    if (!problems.empty()) detail = problems.front() + " (+" + std::to_string(problems.size() - 1) + " more)";
    return {problems.empty(), detail};
}

// 8. Determinism -----------------------------------------------------------------

std::string run_eval(const std::vector<std::string>& extra) {
    std::vector<std::string> args{"ssp_cli", "eval", "--synthetic", "200", "--seed", "11"};
    args.insert(args.end(), extra.begin(), extra.end());
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return code == 0 ? out.str() : "exit " + std::to_string(code) + ": " + err.str();
}

Outcome determinism() {
    const std::string a = run_eval({"--jobs", "1"});
    const std::string b = run_eval({"--jobs", "1"});
    const std::string c = run_eval({"--jobs", "8"});
    const std::string d = run_eval({"--jobs", "1", "--set", "refine=true"});
    const std::string e = run_eval({"--jobs", "8", "--set", "refine=true"});
    const bool pass = a.rfind("exit", 0) != 0 && a == b && a == c && d == e;
    return {pass, "cmd_eval 200 episodes: serial x2 " + std::string(a == b ? "identical" : "DIFFER") +
                      ", jobs 8 vs serial " + (a == c ? "identical" : "DIFFER") + ", refine variant " +
                      (d == e ? "identical" : "DIFFER") + " (" + std::to_string(a.size()) + " bytes)"};
}

// 9. Format fuzz -------------------------------------------------------------------

Outcome format_fuzz() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<std::size_t> len(0, 96);
    std::size_t typed = 0, accepted = 0;
    std::vector<std::string> problems;

    const std::vector<std::vector<std::uint8_t>> seeds{
        sspt::encode(FeatureMap(2, 2, 3, oracle::gaussian(rng, 12))),
        sspt::encode(Mask::binary(3, 3, oracle::bits(rng, 9))),
        sspt::encode(Mask(MaskKind::probability, 2, 2, {0.1f, 0.2f, 0.9f, 1.0f})),
    };
    const auto dir = std::filesystem::temp_directory_path() / "ssp_acceptance_fuzz";
    std::filesystem::create_directories(dir);

    for (std::size_t i = 0; i < 100000; ++i) {
        std::vector<std::uint8_t> b;
        switch (i % 4) {
        case 0: // pure noise
            b.resize(len(rng));
            for (auto& x : b) x = static_cast<std::uint8_t>(byte(rng));
            break;
        case 1: { // noise behind a valid magic/version
            b = {'S', 'S', 'P', 'T', 1, 0};
            const std::size_t extra = len(rng);
            for (std::size_t k = 0; k < extra; ++k) b.push_back(static_cast<std::uint8_t>(byte(rng)));
            break;
        }
        case 2: { // mutated valid file
            b = seeds[i % seeds.size()];
            const int flips = 1 + byte(rng) % 4;
            for (int k = 0; k < flips; ++k) b[static_cast<std::size_t>(byte(rng)) % b.size()] = static_cast<std::uint8_t>(byte(rng));
            break;
        }
        default: { // truncated or extended valid file
            b = seeds[i % seeds.size()];
            b.resize(static_cast<std::size_t>(byte(rng)) % (b.size() + 8));
            break;
        }
        }
        try {
            if (i % 100 == 0) { // route a share through the file reader
                const auto p = dir / "blob.sspt";
                std::ofstream(p, std::ios::binary | std::ios::trunc)
                    .write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
                read_tensor_file(p);
            } else {
                sspt::decode(b);
            }
            ++accepted;
        } catch (const Error& e) {
            if (is_format_error(e.code())) {
                ++typed;
            } else {
                problems.push_back(std::string("non-format error ") + std::string(to_string(e.code())));
            }
        } catch (const std::exception& e) {
            problems.push_back(std::string("untyped exception: ") + e.what());
        }
    }

    std::size_t exact = 0;
    std::uniform_int_distribution<std::size_t> dim(1, 9);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    for (std::size_t i = 0; i < 1000; ++i) {
        const std::size_t c = dim(rng), h = dim(rng), w = dim(rng);
        sspt::Item item = FeatureMap(1, 1, 1);
        if (i % 3 == 0) {
            item = FeatureMap(c, h, w, oracle::gaussian(rng, c * h * w, 1e3));
        } else if (i % 3 == 1) {
            item = Mask::binary(h, w, oracle::bits(rng, h * w));
        } else {
            std::vector<float> p(h * w);
            for (auto& x : p) x = unit(rng);
            item = Mask(MaskKind::probability, h, w, p);
        }
        const auto bytes = sspt::encode(item);
        sspt::Item back = sspt::decode(bytes);
        if (i % 10 == 0) {
            write_tensor_file(dir / "rt.sspt", item);
            back = read_tensor_file(dir / "rt.sspt");
        }
        const bool same = sspt::encode(back) == bytes && back.index() == item.index() &&
                          std::visit([&](const auto& x) {
                              using T = std::decay_t<decltype(x)>;
                              const auto& y = std::get<T>(item);
                              const auto xs = x.data(), ys = y.data();
                              if (xs.size() != ys.size()) return false;
                              for (std::size_t k = 0; k < xs.size(); ++k)
                                  if (std::bit_cast<std::uint32_t>(xs[k]) != std::bit_cast<std::uint32_t>(ys[k]))
                                      return false;
                              return true;
                          }, back);
        exact += same ? 1 : 0;
    }
    std::filesystem::remove_all(dir);

    std::string detail = "1e5 blobs: " + std::to_string(typed) + " typed format errors, " + std::to_string(accepted) +
                         " valid; round trip " + std::to_string(exact) + "/1000 bit-exact";
    if (!problems.empty()) detail = problems.front() + " (" + std::to_string(problems.size()) + " problems)";
    return {problems.empty() && exact == 1000, detail};
}

} // namespace

int main() {
    const std::pair<const char*, Outcome (*)()> criteria[] = {
        {"oracle-equivalence", oracle_suite},
        {"asbp-exhaustive", asbp_exhaustive},
        {"gradient-check", gradient_check},
        {"gestalt-ordering", gestalt_ordering},
        {"self-support-benefit", self_support_benefit},
        {"ablation-monotonicity", ablation_monotonicity},
        {"fallback-degeneracy", fallback_degeneracy},
        {"determinism", determinism},
        {"format-fuzz", format_fuzz},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o{false, ""};
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s  %-22s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
    return failed == 0 ? 0 : 1;
}
