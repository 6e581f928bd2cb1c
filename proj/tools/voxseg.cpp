// voxseg: two-stage volumetric segmentation toolkit.
//
// Subcommands: synth, preprocess, split, train, predict, eval.
// Exit codes: 0 success, 2 usage/config error, 3 I/O error, 4 divergence.
// VOXSEG_THREADS caps worker threads; VOXSEG_SIMD=scalar|avx2|auto selects
// the kernel backend.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "voxseg/c2f.hpp"
#include "voxseg/components.hpp"
#include "voxseg/metrics.hpp"
#include "voxseg/network.hpp"
#include "voxseg/png.hpp"
#include "voxseg/run_config.hpp"
#include "voxseg/synth.hpp"
#include "voxseg/tiling.hpp"
#include "voxseg/train.hpp"
#include "voxseg/volume.hpp"

namespace fs = std::filesystem;
using namespace voxseg;

namespace {

struct DatasetCase {
    std::string id;
    std::string img_path;
    std::string lab_path; // may be empty
};

std::vector<DatasetCase> scan_dataset(const std::string& dir, bool need_labels) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<DatasetCase> cases;
    std::vector<std::string> img_jsons;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.size() > 9 && name.ends_with("_img.json"))
            img_jsons.push_back(e.path().string());
    }
    std::sort(img_jsons.begin(), img_jsons.end());
    for (const auto& p : img_jsons) {
        DatasetCase c;
        c.img_path = p.substr(0, p.size() - 5); // strip .json
        const std::string base = c.img_path.substr(0, c.img_path.size() - 4); // strip _img
        c.id = fs::path(base).filename().string();
        const std::string lab = base + "_lab";
        if (fs::exists(lab + ".json")) c.lab_path = lab;
        else if (need_labels)
            throw std::runtime_error("missing label volume for case " + c.id);
        cases.push_back(std::move(c));
    }
    if (cases.empty()) throw std::runtime_error("no cases (*_img.json) found in " + dir);
    return cases;
}

CtVolume preprocess_case(const CtVolume& v) {
    return normalize_zero_mean_unit_var(truncate_intensity(v));
}

std::vector<TrainCase> load_train_cases(const std::string& dir) {
    std::vector<TrainCase> out;
    for (const auto& c : scan_dataset(dir, true)) {
        TrainCase tc;
        tc.image = preprocess_case(load_ct(c.img_path));
        tc.label = load_label(c.lab_path);
        out.push_back(std::move(tc));
    }
    return out;
}

void save_prob(const ProbVolume& prob, const std::string& path) {
    CtVolume v;
    v.dims = prob.dims;
    v.spacing = prob.spacing;
    v.voxels = prob.values;
    save_volume(v, path);
}

int cmd_synth(const SynthOptions& opt, const std::string& out_dir, const RunConfig& rc) {
    generate_synthetic(opt, out_dir);
    rc.write(out_dir + "/runconfig.json");
    std::cout << "wrote " << opt.count << " cases to " << out_dir << "\n";
    return 0;
}

int cmd_preprocess(const std::string& in_dir, const std::string& out_dir, float lo, float hi,
                   const RunConfig& rc) {
    fs::create_directories(out_dir);
    const auto cases = scan_dataset(in_dir, false);
    for (const auto& c : cases) {
        CtVolume v = load_ct(c.img_path);
        v = normalize_zero_mean_unit_var(truncate_intensity(v, lo, hi));
        save_volume(v, out_dir + "/" + c.id + "_img");
        if (!c.lab_path.empty())
            save_volume(load_label(c.lab_path), out_dir + "/" + c.id + "_lab");
    }
    rc.write(out_dir + "/runconfig.json");
    std::cout << "preprocessed " << cases.size() << " cases into " << out_dir << "\n";
    return 0;
}

int cmd_split(const std::string& dir, uint64_t seed, int folds, const std::string& out,
              const RunConfig& rc) {
    std::vector<std::string> ids;
    for (const auto& c : scan_dataset(dir, false)) ids.push_back(c.id);
    const SplitManifest m = make_split(ids, seed, folds);
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write split manifest: " + out);
    f << m.to_json() << "\n";
    rc.write(out + ".runconfig.json");
    std::cout << "wrote " << folds << "-fold split of " << ids.size() << " cases to " << out
              << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& stage, const std::string& out,
              RunConfig rc, const std::string& log_path) {
    TrainOptions opt;
    opt.net = rc.network;
    opt.optim = rc.optim;
    opt.seed = rc.seed;
    opt.log_interval = rc.log_interval;
    opt.sampler.stage =
        stage == "fine" ? SamplerSpec::Stage::fine : SamplerSpec::Stage::coarse;
    opt.sampler.patch_size = rc.network.input_size;
    opt.sampler.fine_margin = rc.fine_margin;

    const auto data = load_train_cases(data_dir);
    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw std::runtime_error("cannot write training log: " + log_path);
        log = &log_file;
    }
    ResDsnNet<float> net = train_stage(data, opt, log);
    save_checkpoint(net, out, rc.optim.total_iters, rc.seed);
    rc.write(out + ".runconfig.json");
    std::cout << "saved checkpoint " << out << " (" << net.param_count() << " parameters)\n";
    return 0;
}

struct PredictArgs {
    std::string model, fine_model, in, out;
    std::string prob_path, report_path, gt_path;
    bool c2f = false;
    bool debug_png = false;
};

void predict_one(ResDsnNet<float>& model, ResDsnNet<float>* fine, const CtVolume& raw,
                 const RunConfig& rc, const PredictArgs& args, const std::string& out_path,
                 const LabelVolume* gt) {
    const CtVolume vol = preprocess_case(raw);
    LabelVolume mask;
    if (args.c2f) {
        C2fOptions copt;
        copt.n_coarse = rc.n_coarse;
        copt.n_fine = rc.n_fine;
        copt.margin = rc.fine_margin;
        copt.fusion = rc.fusion;
        copt.filter_fraction = rc.filter_fraction;
        copt.connectivity = rc.connectivity;
        copt.mask_input = rc.mask_crop_input;
        C2fReport report;
        mask = run_c2f(model, *fine, vol, copt, &report);
        if (report.empty_coarse_fallback)
            std::cerr << "warning: empty coarse prediction, fine stage ran on the whole "
                         "volume\n";
        if (!args.report_path.empty()) {
            std::ofstream rf(args.report_path);
            rf << report.to_json() << "\n";
        }
    } else {
        InferenceReport report;
        ProbVolume prob = infer_volume(model, vol, rc.n_coarse, rc.fusion, &report);
        if (!args.prob_path.empty()) save_prob(prob, args.prob_path);
        mask = filter_small_components(binarize(prob), rc.filter_fraction, rc.connectivity);
        if (!args.report_path.empty()) {
            std::ofstream rf(args.report_path);
            rf << "{\"axis_counts\":[" << report.axis_counts[0] << ','
               << report.axis_counts[1] << ',' << report.axis_counts[2]
               << "],\"total_windows\":" << report.total_windows
               << ",\"seconds\":" << report.seconds << ",\"fusion\":\""
               << fusion_name(report.fusion) << "\"}\n";
        }
    }
    mask.spacing = raw.spacing;
    mask.case_id = raw.case_id;
    save_volume(mask, out_path);
    if (args.debug_png && gt)
        write_overlay_png(out_path + ".png", vol, mask, *gt);
}

int cmd_predict(const PredictArgs& args, RunConfig rc) {
    auto [model, info] = load_checkpoint(args.model);
    rc.network = info.config;
    std::unique_ptr<ResDsnNet<float>> fine;
    if (args.c2f) {
        auto [fm, finfo] = load_checkpoint(args.fine_model);
        fine = std::make_unique<ResDsnNet<float>>(fm);
    }

    if (fs::is_directory(args.in)) {
        fs::create_directories(args.out);
        const auto cases = scan_dataset(args.in, false);
        for (const auto& c : cases) {
            const CtVolume raw = load_ct(c.img_path);
            LabelVolume gt;
            const bool have_gt = !c.lab_path.empty();
            if (have_gt) gt = load_label(c.lab_path);
            PredictArgs one = args;
            one.prob_path = args.prob_path.empty() ? "" : args.out + "/" + c.id + "_prob";
            one.report_path =
                args.report_path.empty() ? "" : args.out + "/" + c.id + "_report.json";
            predict_one(model, fine.get(), raw, rc, one, args.out + "/" + c.id + "_pred",
                        have_gt ? &gt : nullptr);
        }
        rc.write(args.out + "/runconfig.json");
        std::cout << "predicted " << cases.size() << " cases into " << args.out << "\n";
    } else {
        const CtVolume raw = load_ct(args.in);
        LabelVolume gt;
        const bool have_gt = !args.gt_path.empty();
        if (have_gt) gt = load_label(args.gt_path);
        predict_one(model, fine.get(), raw, rc, args, args.out, have_gt ? &gt : nullptr);
        rc.write(args.out + ".runconfig.json");
        std::cout << "wrote " << args.out << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out,
             RunConfig rc) {
    const auto cases = scan_dataset(gt_dir, true);
    std::vector<CaseEval> rows;
    for (const auto& c : cases) {
        const std::string pred_path = pred_dir + "/" + c.id + "_pred";
        if (!fs::exists(pred_path + ".json"))
            throw std::runtime_error("missing prediction for case " + c.id);
        const LabelVolume pred = load_label(pred_path);
        const LabelVolume gt = load_label(c.lab_path);
        CaseEval row;
        row.case_id = c.id;
        row.counts = overlap_counts(pred, gt);
        row.dsc = dsc(pred, gt);
        row.components_before = connected_components(pred, rc.connectivity).count;
        row.components_after =
            connected_components(
                filter_small_components(pred, rc.filter_fraction, rc.connectivity),
                rc.connectivity)
                .count;
        rows.push_back(std::move(row));
    }
    const std::string csv = eval_report_csv(rows);
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write eval report: " + out);
    f << csv;
    rc.write(out + ".runconfig.json");
    const EvalSummary s = summarize(rows);
    std::cout << "mean dsc " << s.mean << " +/- " << s.stddev << " (max " << s.max << ", min "
              << s.min << ") over " << rows.size() << " cases\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"voxseg: coarse-to-fine volumetric segmentation toolkit"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path;
    app.add_option("--config", config_path, "run config JSON (defaults otherwise)")
        ->check(CLI::ExistingFile);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    SynthOptions sopt;
    std::string synth_out;
    std::vector<int64_t> synth_dims{64, 64, 64};
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--count", sopt.count, "number of cases");
    synth->add_option("--dims", synth_dims, "volume dims (x y z)")->expected(3);
    synth->add_option("--seed", sopt.seed, "generator seed");
    synth->add_option("--offset", sopt.foreground_offset, "foreground intensity offset");
    synth->add_option("--noise", sopt.noise_sigma, "voxel noise sigma");

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "truncate + normalize a dataset");
    std::string prep_in, prep_out;
    float prep_lo = -100.0f, prep_hi = 240.0f;
    prep->add_option("--in", prep_in, "input dataset directory")->required();
    prep->add_option("--out", prep_out, "output directory")->required();
    prep->add_option("--lo", prep_lo, "truncation lower bound");
    prep->add_option("--hi", prep_hi, "truncation upper bound");

    // split
    auto* split = app.add_subcommand("split", "emit a cross-validation split manifest");
    std::string split_data, split_out = "splits.json";
    uint64_t split_seed = 0;
    int split_folds = 4;
    split->add_option("--data", split_data, "dataset directory")->required();
    split->add_option("--seed", split_seed, "shuffle seed");
    split->add_option("--folds", split_folds, "fold count");
    split->add_option("--out", split_out, "manifest path");

    // train
    auto* train = app.add_subcommand("train", "train one stage");
    std::string train_data, train_stage_name = "coarse", train_out = "model.ckpt";
    std::string train_log, train_variant;
    int64_t train_iters = -1, train_batch = -1;
    int64_t train_input = -1;
    uint64_t train_seed = 0;
    bool train_seed_set = false, train_tiny = false;
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--stage", train_stage_name, "coarse|fine")
        ->check(CLI::IsMember({"coarse", "fine"}));
    train->add_option("--out", train_out, "checkpoint path");
    train->add_option("--iters", train_iters, "total iterations");
    train->add_option("--batch", train_batch, "mini-batch size");
    train->add_option("--variant", train_variant, "ResDSN|FResDSN|SResDSN|DSN|Res");
    train->add_flag("--tiny", train_tiny, "desk-scale channels 4-8-16-32");
    train->add_option("--input-size", train_input, "cubic network input extent");
    train->add_option("--seed", train_seed, "training seed")
        ->each([&](const std::string&) { train_seed_set = true; });
    train->add_option("--log", train_log, "CSV training log path");

    // predict
    auto* predict = app.add_subcommand("predict", "run inference");
    PredictArgs pargs;
    int64_t predict_n = -1, predict_nf = -1, predict_margin = -1;
    std::string predict_fusion;
    double predict_filter = -1.0;
    predict->add_option("--model", pargs.model, "checkpoint")->required();
    predict->add_option("--in", pargs.in, "input volume or dataset directory")->required();
    predict->add_option("--out", pargs.out, "output mask path or directory")->required();
    predict->add_flag("--c2f", pargs.c2f, "two-stage coarse-to-fine");
    predict->add_option("--fine-model", pargs.fine_model, "fine-stage checkpoint");
    predict->add_option("--n", predict_n, "overlap parameter (single stage / coarse)");
    predict->add_option("--nf", predict_nf, "fine-stage overlap parameter");
    predict->add_option("--margin", predict_margin, "crop margin (voxels)");
    predict->add_option("--fusion", predict_fusion, "average|vote")
        ->check(CLI::IsMember({"average", "vote"}));
    predict->add_option("--filter", predict_filter, "small-component fraction");
    predict->add_option("--prob", pargs.prob_path, "also save the probability volume");
    predict->add_option("--report", pargs.report_path, "write an inference report JSON");
    predict->add_option("--gt", pargs.gt_path, "ground truth (for --debug-png)");
    predict->add_flag("--debug-png", pargs.debug_png, "write mid-slice overlay PNGs");

    // eval
    auto* eval = app.add_subcommand("eval", "DSC report for predictions");
    std::string eval_pred, eval_gt, eval_out = "eval.csv";
    eval->add_option("--pred", eval_pred, "prediction directory")->required();
    eval->add_option("--gt", eval_gt, "ground-truth dataset directory")->required();
    eval->add_option("--out", eval_out, "report CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc_parse = app.exit(e);
        return rc_parse == 0 ? 0 : 2;
    }

    try {
        if (!config_path.empty()) rc = RunConfig::from_file(config_path);

        if (synth->parsed()) {
            sopt.dims = {synth_dims[0], synth_dims[1], synth_dims[2]};
            rc.seed = sopt.seed;
            return cmd_synth(sopt, synth_out, rc);
        }
        if (prep->parsed()) {
            if (!(prep_lo < prep_hi))
                throw std::invalid_argument("--lo must be below --hi");
            return cmd_preprocess(prep_in, prep_out, prep_lo, prep_hi, rc);
        }
        if (split->parsed()) {
            rc.seed = split_seed;
            return cmd_split(split_data, split_seed, split_folds, split_out, rc);
        }
        if (train->parsed()) {
            if (!train_variant.empty()) {
                NetworkConfig base = NetworkConfig::variant(train_variant);
                base.stage_channels = rc.network.stage_channels;
                base.input_size = rc.network.input_size;
                rc.network = base;
            }
            if (train_tiny) rc.network.stage_channels = {4, 8, 16, 32};
            if (train_input > 0)
                rc.network.input_size = {train_input, train_input, train_input};
            if (train_iters > 0) rc.optim.total_iters = train_iters;
            if (train_batch > 0) rc.optim.batch_size = train_batch;
            if (train_seed_set) rc.seed = train_seed;
            return cmd_train(train_data, train_stage_name, train_out, rc, train_log);
        }
        if (predict->parsed()) {
            if (pargs.c2f && pargs.fine_model.empty())
                throw std::invalid_argument("--c2f requires --fine-model");
            if (predict_n >= 0) rc.n_coarse = predict_n;
            if (predict_nf >= 0) rc.n_fine = predict_nf;
            if (predict_margin >= 0) rc.fine_margin = predict_margin;
            if (!predict_fusion.empty()) rc.fusion = fusion_from(predict_fusion);
            if (predict_filter >= 0) rc.filter_fraction = predict_filter;
            return cmd_predict(pargs, rc);
        }
        if (eval->parsed()) return cmd_eval(eval_pred, eval_gt, eval_out, rc);
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
