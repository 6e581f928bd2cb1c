// Acceptance suite: one pass/fail line per criterion, exit 0 only if every
// requested criterion passes. Run with no arguments for all of AC-1..AC-9,
// or name a subset (e.g. `voxseg_acceptance AC-3 AC-7`).

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "grad_checks.hpp"
#include "oracles.hpp"
#include "voxseg/c2f.hpp"
#include "voxseg/components.hpp"
#include "voxseg/metrics.hpp"
#include "voxseg/optim.hpp"
#include "voxseg/synth.hpp"
#include "voxseg/thread_pool.hpp"
#include "voxseg/tiling.hpp"
#include "voxseg/train.hpp"

using namespace voxseg;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
    std::cout << id << (pass ? " PASS  " : " FAIL  ") << detail << std::endl;
    if (!pass) ++g_failures;
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// ------------------------------------------------------------------- AC-1

void ac1_gradients() {
    const double t0 = now_seconds();
    double worst_op = 0.0, worst_e2e = 0.0;
    int64_t checks = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        for (auto fn : {gradcheck::check_conv3d, gradcheck::check_deconv3d,
                        gradcheck::check_maxpool, gradcheck::check_batchnorm,
                        gradcheck::check_relu, gradcheck::check_residual,
                        gradcheck::check_softmax_xent}) {
            auto res = fn(seed);
            worst_op = std::max(worst_op, res.max_rel_err);
            checks += res.checks;
        }
    }
    std::vector<int64_t> coverage;
    int64_t skipped = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto res = gradcheck::check_end_to_end(seed, gradcheck::grad_check_config());
        worst_e2e = std::max(worst_e2e, res.max_rel_err);
        checks += res.checks;
        skipped += res.skipped;
        if (coverage.empty()) coverage = res.valid_per_tensor;
        else
            for (size_t i = 0; i < coverage.size(); ++i)
                coverage[i] += res.valid_per_tensor[i];
    }
    bool covered = true;
    for (int64_t v : coverage) covered = covered && v >= 1;
    const double secs = now_seconds() - t0;
    std::ostringstream d;
    d << "per-op max rel err " << worst_op << " (< 1e-4), end-to-end " << worst_e2e
      << " (< 1e-3, every tensor covered: " << (covered ? "yes" : "NO") << ", "
      << skipped << " kink-straddling probes excluded), " << checks << " derivatives, "
      << secs << " s (< 300)";
    report("AC-1", worst_op < 1e-4 && worst_e2e < 1e-3 && covered && secs < 300.0, d.str());
}

// ------------------------------------------------------------------- AC-2

void ac2_conv_oracle() {
    Rng rng(2024);
    int64_t instances = 0, mismatches = 0;
    for (int it = 0; it < 200; ++it) {
        Rng r = rng.stream(it);
        const int64_t b = 1 + r.next_below(2);
        const int64_t ci = 1 + r.next_below(2);
        const int64_t co = 1 + r.next_below(2);
        const int64_t k = 1 + 2 * r.next_below(2);
        const int64_t e = k + r.next_below(7 - k); // up to 6^3, output never empty
        const int64_t pad = r.next_below(k);
        Tensor<float> x({b, ci, e, e, e}), w({co, ci, k, k, k}), bias({co});
        for (int64_t i = 0; i < x.count(); ++i) x[i] = static_cast<float>(r.next_normal());
        for (int64_t i = 0; i < w.count(); ++i) w[i] = static_cast<float>(r.next_normal());
        for (int64_t i = 0; i < bias.count(); ++i)
            bias[i] = static_cast<float>(r.next_normal());
        Tensor<float> expect = oracles::conv3d_naive(x, w, bias, k, 1, pad);
        Tensor<float> got = conv3d_fwd(x, w, bias, ConvSpec{ci, co, k, 1, pad});
        ++instances;
        if (std::memcmp(expect.data(), got.data(), expect.count() * 4) != 0) ++mismatches;
    }
    std::ostringstream d;
    d << instances << " random instances vs the 7-loop oracle, " << mismatches
      << " mismatches (exact comparison)";
    report("AC-2", instances == 200 && mismatches == 0, d.str());
}

// ------------------------------------------------------------------- AC-3

void ac3_tiling() {
    const double t0 = now_seconds();
    bool ok = true;
    std::ostringstream d;

    // the overlap-count formula whenever it is achievable under coverage
    for (int64_t extent : {512, 100, 64}) {
        for (int64_t n : {0, 6, 12}) {
            const auto origins = plan_axis(extent, 64, n);
            int64_t expect;
            if (extent <= 64) {
                expect = 1;
            } else {
                const int64_t formula = extent / 64 + n;
                const int64_t cover = (extent + 63) / 64;
                const int64_t span1 = extent - 64 + 1;
                expect = formula >= cover && formula <= span1 ? formula
                                                              : std::max(formula, cover);
            }
            if (static_cast<int64_t>(origins.size()) != expect) {
                ok = false;
                d << "[" << extent << ", n=" << n << " gave " << origins.size()
                  << ", want " << expect << "] ";
            }
        }
    }
    if (plan_axis(512, 64, 6).size() != 14) {
        ok = false;
        d << "[512/64/n=6 != 14] ";
    }

    // exhaustive coverage
    int64_t holes = 0;
    for (int64_t extent = 1; extent <= 600; ++extent)
        for (int64_t n = 0; n <= 12; ++n) {
            const auto o = plan_axis(extent, 64, n);
            int64_t covered = 0;
            bool hole = o.front() != 0;
            for (int64_t org : o) {
                if (org > covered) hole = true;
                covered = std::max(covered, org + 64);
            }
            if (covered < extent || hole) ++holes;
        }
    if (holes) ok = false;
    const double secs = now_seconds() - t0;
    d << "counts match the floor(W/64)+n formula; coverage holes " << holes << "/7800, "
      << secs << " s (< 60)";
    report("AC-3", ok && secs < 60.0, d.str());
}

// ------------------------------------------------------------------- AC-4

void ac4_geometry() {
    bool ok = true;
    std::ostringstream d;

    // 500 crop/decrop roundtrips, exact
    int64_t bad_roundtrip = 0;
    for (uint64_t seed = 0; seed < 500; ++seed) {
        Rng r(seed);
        const Dims3 dims{10 + static_cast<int64_t>(r.next_below(20)),
                         10 + static_cast<int64_t>(r.next_below(20)),
                         10 + static_cast<int64_t>(r.next_below(20))};
        LabelVolume p;
        p.dims = dims;
        p.mask.resize(static_cast<size_t>(dims.count()));
        const double density = 0.001 + r.next_unit() * 0.2;
        for (auto& v : p.mask) v = r.next_unit() < density ? 1 : 0;
        const int64_t margin = r.next_in(0, 12);
        CtVolume x;
        x.dims = dims;
        x.voxels.assign(static_cast<size_t>(dims.count()), 0.0f);
        auto [crop, rec] = crop_with_margin(x, p, margin);
        LabelVolume pf;
        pf.dims = crop.dims;
        pf.mask.resize(static_cast<size_t>(pf.dims.count()));
        for (int64_t z = 0; z < pf.dims.z; ++z)
            for (int64_t y = 0; y < pf.dims.y; ++y)
                for (int64_t xx = 0; xx < pf.dims.x; ++xx)
                    pf.at(xx, y, z) =
                        p.at(rec.box.lo[0] + xx, rec.box.lo[1] + y, rec.box.lo[2] + z);
        if (decrop(pf, p, rec).mask != p.mask) ++bad_roundtrip;
    }
    if (bad_roundtrip) ok = false;

    // 500 DSC pairs vs the voxel-count oracle, exact
    int64_t bad_dsc = 0;
    for (uint64_t seed = 0; seed < 500; ++seed) {
        Rng r(seed * 7 + 1);
        LabelVolume p, y;
        p.dims = y.dims = {9, 8, 7};
        p.mask.resize(504);
        y.mask.resize(504);
        for (auto& v : p.mask) v = r.next_unit() < 0.3 ? 1 : 0;
        for (auto& v : y.mask) v = r.next_unit() < 0.3 ? 1 : 0;
        if (dsc(p, y) != oracles::dsc_sets(p, y)) ++bad_dsc;
    }
    if (bad_dsc) ok = false;

    // component labeling vs the flood-fill oracle on 100 random 12^3 masks
    int64_t bad_cc = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Rng r(seed + 31);
        LabelVolume m;
        m.dims = {12, 12, 12};
        m.mask.resize(1728);
        for (auto& v : m.mask) v = r.next_unit() < 0.25 ? 1 : 0;
        for (int conn : {6, 26}) {
            auto cc = connected_components(m, conn);
            if (!oracles::same_partition(cc.labels, oracles::floodfill_oracle(m, conn)))
                ++bad_cc;
        }
    }
    if (bad_cc) ok = false;

    d << "roundtrip failures " << bad_roundtrip << "/500, dsc mismatches " << bad_dsc
      << "/500, labeling mismatches " << bad_cc << "/200";
    report("AC-4", ok, d.str());
}

// ----------------------------------------------------------------- AC-5/6

struct DeskModels {
    ResDsnNet<float> coarse;
    ResDsnNet<float> fine;
    std::vector<TrainCase> train_cases; // preprocessed
    std::vector<TrainCase> test_cases;
    double train_seconds = 0.0;
};

NetworkConfig desk_config() {
    NetworkConfig cfg = NetworkConfig::tiny(); // 4-8-16-32 channels
    return cfg;
}

TrainOptions desk_options(SamplerSpec::Stage stage) {
    TrainOptions opt;
    opt.net = desk_config();
    opt.sampler.stage = stage;
    opt.sampler.patch_size = opt.net.input_size;
    opt.sampler.fine_margin = 8;
    opt.optim.batch_size = 4;
    opt.optim.total_iters = 2000;
    opt.seed = 0;
    opt.log_interval = 200;
    return opt;
}

std::optional<DeskModels>& desk_models() {
    static std::optional<DeskModels> cached;
    return cached;
}

DeskModels& train_desk_models() {
    auto& cached = desk_models();
    if (cached) return *cached;
    const double t0 = now_seconds();
    SynthOptions sopt;
    sopt.count = 15;
    sopt.dims = {64, 64, 64};
    sopt.seed = 0;

    std::vector<TrainCase> train_cases, test_cases;
    for (int64_t i = 0; i < 15; ++i) {
        auto [img, lab] = synth_case(sopt, i);
        TrainCase tc{normalize_zero_mean_unit_var(truncate_intensity(img)), std::move(lab)};
        if (i < 10)
            train_cases.push_back(std::move(tc));
        else
            test_cases.push_back(std::move(tc));
    }

    TrainOptions copt = desk_options(SamplerSpec::Stage::coarse);
    std::cerr << "[acceptance] training coarse stage (2000 iterations)..." << std::endl;
    ResDsnNet<float> coarse = train_stage(train_cases, copt, &std::cerr);

    TrainOptions fopt = desk_options(SamplerSpec::Stage::fine);
    std::cerr << "[acceptance] training fine stage (2000 iterations)..." << std::endl;
    ResDsnNet<float> fine = train_stage(train_cases, fopt, &std::cerr);

    cached = DeskModels{std::move(coarse), std::move(fine), std::move(train_cases),
                        std::move(test_cases), now_seconds() - t0};
    return *cached;
}

LabelVolume coarse_predict(ResDsnNet<float>& model, const CtVolume& vol, int64_t n) {
    ProbVolume prob = infer_volume(model, vol, n, FusionMode::average);
    return filter_small_components(binarize(prob), 0.2, 26);
}

void ac5_learning() {
    DeskModels& m = train_desk_models();

    double train_dsc_sum = 0.0;
    for (const auto& c : m.train_cases) {
        LabelVolume pred = coarse_predict(m.coarse, c.image, 6);
        train_dsc_sum += dsc(pred, c.label);
    }
    const double train_mean = train_dsc_sum / static_cast<double>(m.train_cases.size());

    double coarse_sum = 0.0, c2f_sum = 0.0;
    for (const auto& c : m.test_cases) {
        LabelVolume coarse_pred = coarse_predict(m.coarse, c.image, 6);
        coarse_sum += dsc(coarse_pred, c.label);
        C2fOptions opt;
        opt.n_coarse = 6;
        opt.n_fine = 12;
        opt.margin = 8;
        opt.filter_fraction = 0.2;
        LabelVolume c2f = run_c2f(m.coarse, m.fine, c.image, opt, nullptr);
        c2f_sum += dsc(c2f, c.label);
    }
    const double coarse_mean = coarse_sum / static_cast<double>(m.test_cases.size());
    const double c2f_mean = c2f_sum / static_cast<double>(m.test_cases.size());

    std::ostringstream d;
    d << "train-set mean DSC " << train_mean << " (>= 0.90); held-out coarse "
      << coarse_mean << ", C2F " << c2f_mean << " (>= coarse - 0.005); training took "
      << m.train_seconds << " s (target < 3600)";
    report("AC-5", train_mean >= 0.90 && c2f_mean >= coarse_mean - 0.005, d.str());
}

void ac6_efficiency() {
    DeskModels& m = train_desk_models();

    SynthOptions sopt;
    sopt.dims = {160, 160, 160};
    sopt.seed = 606;
    // at most 1% occupancy: the smallest ellipsoid semi-axis is then at most
    // (3fV/4pi)^(1/3) <= 21.4 voxels, so at least one padded box axis stays
    // within one window and the crop plan collapses on that axis
    sopt.occupancy_lo = 0.007;
    sopt.occupancy_hi = 0.010;

    // pick the first case whose coarse box (padded by 8) fits in 80 per axis
    for (int64_t idx = 0; idx < 20; ++idx) {
        auto [img, lab] = synth_case(sopt, idx);
        CtVolume vol = normalize_zero_mean_unit_var(truncate_intensity(img));
        LabelVolume pc = coarse_predict(m.coarse, vol, 6);
        if (pc.foreground_count() == 0) continue;
        auto box = bbox_of_mask(pc);
        const BoundingBox padded = box->padded_clamped(8, vol.dims);
        if (padded.extent(0) > 80 || padded.extent(1) > 80 || padded.extent(2) > 80)
            continue;

        auto [crop, rec] = crop_with_margin(vol, pc, 8);
        InferenceReport crop_rep, full_rep;
        infer_volume(m.fine, crop, 12, FusionMode::average, &crop_rep);
        infer_volume(m.fine, vol, 12, FusionMode::average, &full_rep);

        const double ratio = static_cast<double>(crop_rep.total_windows) /
                             static_cast<double>(full_rep.total_windows);
        std::ostringstream d;
        d << "case " << idx << ": padded box " << padded.extent(0) << "x"
          << padded.extent(1) << "x" << padded.extent(2) << "; fine windows crop "
          << crop_rep.total_windows << " vs full " << full_rep.total_windows << " (ratio "
          << ratio << " <= 0.5); wall time " << crop_rep.seconds << " s vs "
          << full_rep.seconds << " s";
        report("AC-6", ratio <= 0.5 && crop_rep.seconds < full_rep.seconds, d.str());
        return;
    }
    report("AC-6", false, "no 160^3 synthetic case produced a coarse box within 80 voxels");
}

// ------------------------------------------------------------------- AC-7

void ac7_schedule() {
    OptimConfig cfg; // base_lr 0.01, power 0.9
    cfg.total_iters = 80000;
    const double lr0 = lr_poly(0, cfg);
    const double lrT = lr_poly(cfg.total_iters, cfg);
    const double lrH = lr_poly(cfg.total_iters / 2, cfg);
    const bool lr_ok =
        lr0 == 0.01 && lrT == 0.0 && std::fabs(lrH - 5.3589e-3) <= 1e-7;

    // two-step momentum hand arithmetic on L = w^2/2 from w = 1, lr = 0.1
    Tensor<float> w({1}), grad({1});
    w[0] = 1.0f;
    std::vector<ParamRef<float>> params{{"w", &w, &grad, true}};
    SgdMomentum<float> sgd(params);
    grad[0] = w[0];
    sgd.step(params, 0.1, 0.9, 0.0);
    const float after1 = w[0];
    grad[0] = w[0];
    sgd.step(params, 0.1, 0.9, 0.0);
    const float after2 = w[0];
    const bool sgd_ok =
        std::fabs(after1 - 0.9f) < 1e-7f && std::fabs(after2 - 0.72f) < 1e-7f;

    std::ostringstream d;
    d << "lr(0)=" << lr0 << ", lr(T)=" << lrT << ", lr(T/2)=" << lrH
      << "; momentum steps -> " << after1 << ", " << after2 << " (0.9, 0.72)";
    report("AC-7", lr_ok && sgd_ok, d.str());
}

// ------------------------------------------------------------------- AC-8

void ac8_ablation() {
    DeskModels& m = train_desk_models();
    const char* names[] = {"ResDSN", "FResDSN", "SResDSN", "DSN", "Res"};
    std::set<std::string> digests;
    bool ok = true;
    std::ostringstream d;
    const std::string dir =
        (fs::temp_directory_path() / "voxseg_acceptance_ac8").string();
    fs::create_directories(dir);
    for (const char* name : names) {
        TrainOptions opt = desk_options(SamplerSpec::Stage::coarse);
        NetworkConfig cfg = NetworkConfig::variant(name);
        cfg.stage_channels = opt.net.stage_channels;
        cfg.input_size = opt.net.input_size;
        opt.net = cfg;
        opt.optim.total_iters = 200;
        try {
            ResDsnNet<float> net = train_stage(m.train_cases, opt, nullptr);
            const std::string path = dir + "/" + name + ".ckpt";
            save_checkpoint(net, path, 200, opt.seed);
            std::ifstream f(path, std::ios::binary);
            std::string bytes((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
            digests.insert(std::to_string(std::hash<std::string>{}(bytes)) + ":" +
                           std::to_string(bytes.size()));
            d << name << " ok (" << net.param_count() << " params); ";
        } catch (const std::exception& e) {
            ok = false;
            d << name << " FAILED: " << e.what() << "; ";
        }
    }
    if (digests.size() != 5) {
        ok = false;
        d << "checkpoints are not all distinct; ";
    }
    report("AC-8", ok, d.str() + "5 variants, 200 iterations each, distinct checkpoints");
}

// ------------------------------------------------------------------- AC-9

void ac9_determinism() {
    DeskModels& m = train_desk_models();
    TrainOptions opt = desk_options(SamplerSpec::Stage::coarse);
    opt.optim.total_iters = 50;

    const std::string dir =
        (fs::temp_directory_path() / "voxseg_acceptance_ac9").string();
    fs::create_directories(dir);
    auto run_once = [&](const std::string& path) {
        ResDsnNet<float> net = train_stage(m.train_cases, opt, nullptr);
        save_checkpoint(net, path, 50, opt.seed);
        std::ifstream f(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
    };
    const std::string a = run_once(dir + "/a.ckpt");
    const std::string b = run_once(dir + "/b.ckpt");
    const bool train_ok = !a.empty() && a == b;

    auto& pool = ThreadPool::instance();
    const int before = pool.thread_count();
    const CtVolume& vol = m.test_cases[0].image;
    pool.resize(1);
    ProbVolume p1 = infer_volume(m.coarse, vol, 6, FusionMode::average);
    pool.resize(8);
    ProbVolume p8 = infer_volume(m.coarse, vol, 6, FusionMode::average);
    pool.resize(before);
    const bool infer_ok =
        p1.values.size() == p8.values.size() &&
        std::memcmp(p1.values.data(), p8.values.data(), p1.values.size() * 4) == 0;

    std::ostringstream d;
    d << "50-iteration retrain checkpoints " << (train_ok ? "identical" : "DIFFER")
      << " (" << a.size() << " bytes); 1-thread vs 8-thread inference "
      << (infer_ok ? "bitwise identical" : "DIFFERS");
    report("AC-9", train_ok && infer_ok, d.str());
}

} // namespace

int main(int argc, char** argv) {
    std::set<std::string> want;
    for (int i = 1; i < argc; ++i) want.insert(argv[i]);
    auto wanted = [&](const std::string& id) { return want.empty() || want.count(id); };

    struct Entry {
        const char* id;
        void (*fn)();
    };
    const Entry entries[] = {
        {"AC-1", ac1_gradients}, {"AC-2", ac2_conv_oracle}, {"AC-3", ac3_tiling},
        {"AC-4", ac4_geometry},  {"AC-5", ac5_learning},    {"AC-6", ac6_efficiency},
        {"AC-7", ac7_schedule},  {"AC-8", ac8_ablation},    {"AC-9", ac9_determinism},
    };
    for (const auto& e : entries) {
        if (!wanted(e.id)) continue;
        try {
            e.fn();
        } catch (const std::exception& ex) {
            report(e.id, false, std::string("exception: ") + ex.what());
        }
    }
    return g_failures == 0 ? 0 : 1;
}
