// radarseg: command-line front end for the full pipeline — synthetic corpus
// generation, dataset preparation, the five training regimes, pseudo-labeling,
// clustering grid search, evaluation, inference, and SVG plot export.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rseg/clustering.hpp"
#include "rseg/data.hpp"
#include "rseg/metrics.hpp"
#include "rseg/model.hpp"
#include "rseg/plot.hpp"
#include "rseg/pseudolabel.hpp"
#include "rseg/synthdata.hpp"
#include "rseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace rseg;

namespace {

std::string run_root() {
    const char* env = std::getenv("RADARSEG_RUN_ROOT");
    return env && *env ? env : "runs";
}

FrameList load_frames(const std::string& path) { return load_frames_jsonl(path); }

struct Prediction {
    int64_t frame_id = 0;
    std::vector<int> classes;
    std::vector<int> instances;
};

void save_predictions(const std::vector<Prediction>& preds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const Prediction& p : preds) {
        nlohmann::json j;
        j["id"] = p.frame_id;
        j["classes"] = p.classes;
        j["instances"] = p.instances;
        os << j.dump() << '\n';
    }
}

std::vector<Prediction> load_predictions(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open predictions: " + path);
    std::vector<Prediction> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        out.push_back({j.at("id").get<int64_t>(), j.at("classes").get<std::vector<int>>(),
                       j.at("instances").get<std::vector<int>>()});
    }
    return out;
}

std::vector<Prediction> run_inference(Model& model, const FrameList& frames,
                                      const ParamsPerClass& params) {
    std::vector<Prediction> out;
    for (const FrameSemantics& fs : predict_semantics(model, frames)) {
        const auto inst = extract_instances(fs.frame->points, fs.predicted_classes,
                                            fs.class_probs, params);
        out.push_back({fs.frame->id, inst.class_ids, inst.instance_ids});
    }
    return out;
}

MetricsReport evaluate(Model& model, const FrameList& frames, const ParamsPerClass& params) {
    std::vector<std::vector<GtInstance>> gt;
    std::vector<std::vector<PredInstance>> pred;
    for (const FrameSemantics& fs : predict_semantics(model, frames)) {
        gt.push_back(gt_instances(*fs.frame));
        pred.push_back(extract_instances(fs.frame->points, fs.predicted_classes, fs.class_probs,
                                         params)
                           .as_pred_instances());
    }
    return evaluate_instances(gt, pred);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"radarseg: contrastive representation learning and instance "
                 "segmentation on sparse radar point clouds"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus (JSONL)");
    int synth_frames = 2000;
    uint64_t synth_seed = 7;
    std::string synth_out = "corpus.jsonl";
    synth->add_option("--frames", synth_frames, "Number of frames")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Generation seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output JSONL path")->capture_default_str();

    // ---- split ----
    auto* split = app.add_subcommand("split", "Shuffled 8:1:1 train/validation/test split");
    std::string split_in, split_dir = ".";
    uint64_t split_seed = 7;
    split->add_option("--in", split_in, "Corpus JSONL")->required();
    split->add_option("--out-dir", split_dir, "Directory for train/validation/test JSONL")
        ->capture_default_str();
    split->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();

    // ---- mask ----
    auto* mask = app.add_subcommand("mask", "Strip labels from all but a fraction of frames");
    std::string mask_in, mask_out = "train_masked.jsonl";
    double mask_fraction = 0.05;
    uint64_t mask_seed = 7;
    mask->add_option("--in", mask_in, "Labeled train JSONL")->required();
    mask->add_option("--labeled-fraction", mask_fraction, "Fraction of frames keeping labels")
        ->capture_default_str();
    mask->add_option("--seed", mask_seed, "Selection seed")->capture_default_str();
    mask->add_option("--out", mask_out, "Output JSONL path")->capture_default_str();

    // ---- train ----
    auto* train = app.add_subcommand(
        "train", "Run one training regime end to end into a run directory");
    std::string train_regime;
    std::string train_train, train_val, train_test, train_cfg, train_dir;
    TrainConfig defaults;  // for default strings in --help
    std::optional<double> opt_fraction, opt_tau, opt_alpha, opt_threshold;
    std::optional<uint64_t> opt_seed;
    std::optional<int> opt_epochs_repr, opt_epochs_ft, opt_epochs_joint, opt_epochs_sup;
    train->add_option("regime", train_regime,
                      "supervised | nonjoint_full | nonjoint_semi | joint_full | joint_semi")
        ->required();
    train->add_option("--train", train_train, "Train split JSONL (fully labeled)")->required();
    train->add_option("--val", train_val, "Validation split JSONL")->required();
    train->add_option("--test", train_test, "Test split JSONL")->required();
    train->add_option("--config", train_cfg, "INI config file; flags override its values");
    train->add_option("--run-dir", train_dir,
                      "Run directory (default $RADARSEG_RUN_ROOT/<regime>_p<frac>_s<seed>)");
    train->add_option("--labeled-fraction", opt_fraction,
                      "Fraction of labeled train frames (default " +
                          std::to_string(defaults.labeled_fraction) + ")");
    train->add_option("--seed", opt_seed, "Training seed (default 1)");
    train->add_option("--tau", opt_tau, "InfoNCE temperature (default 0.1)");
    train->add_option("--alpha", opt_alpha, "Joint-loss weight alpha (default 1)");
    train->add_option("--pseudo-threshold", opt_threshold,
                      "Pseudo-label confidence threshold (default 0.9)");
    train->add_option("--epochs-representation", opt_epochs_repr, "Representation epochs (30)");
    train->add_option("--epochs-finetune", opt_epochs_ft, "Fine-tune epochs (15)");
    train->add_option("--epochs-joint", opt_epochs_joint, "Joint epochs (40)");
    train->add_option("--epochs-supervised", opt_epochs_sup, "Supervised epochs (40)");

    // ---- pseudo-label ----
    auto* pseudo = app.add_subcommand("pseudo-label",
                                      "Write confidence-thresholded pseudo-labels for frames");
    std::string pl_model, pl_in, pl_out = "pseudo_labels.txt";
    double pl_threshold = 0.9;
    pseudo->add_option("--model", pl_model, "Model checkpoint")->required();
    pseudo->add_option("--in", pl_in, "Frames JSONL")->required();
    pseudo->add_option("--threshold", pl_threshold, "Confidence threshold")->capture_default_str();
    pseudo->add_option("--out", pl_out, "Output pseudo-label file")->capture_default_str();

    // ---- grid-search ----
    auto* grid = app.add_subcommand("grid-search",
                                    "Per-class DBSCAN parameter search on labeled frames");
    std::string gs_model, gs_in, gs_out = "clustering_params.txt";
    grid->add_option("--model", gs_model, "Model checkpoint")->required();
    grid->add_option("--in", gs_in, "Labeled frames JSONL (validation split)")->required();
    grid->add_option("--out", gs_out, "Output parameter file")->capture_default_str();

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "Report mCov and mAP@0.5 on labeled frames");
    std::string ev_run, ev_split = "test", ev_model, ev_params, ev_in;
    eval_cmd->add_option("--run", ev_run, "Run directory (uses its checkpoint, params, data)");
    eval_cmd->add_option("--split", ev_split, "Split when using --run: test | validation")
        ->capture_default_str();
    eval_cmd->add_option("--model", ev_model, "Model checkpoint (without --run)");
    eval_cmd->add_option("--params", ev_params, "Clustering parameter file (without --run)");
    eval_cmd->add_option("--in", ev_in, "Labeled frames JSONL (without --run)");

    // ---- infer ----
    auto* infer = app.add_subcommand("infer", "Predict classes and instances for frames");
    std::string in_model, in_params, in_in, in_out = "predictions.jsonl";
    infer->add_option("--model", in_model, "Model checkpoint")->required();
    infer->add_option("--params", in_params, "Clustering parameter file")->required();
    infer->add_option("--in", in_in, "Frames JSONL")->required();
    infer->add_option("--out", in_out, "Output predictions JSONL")->capture_default_str();

    // ---- export-plot ----
    auto* plot = app.add_subcommand("export-plot", "Render one frame's segmentation to SVG");
    std::string ep_in, ep_pred, ep_out = "frame.svg";
    int64_t ep_frame = 0;
    bool ep_gt = false;
    plot->add_option("--in", ep_in, "Frames JSONL")->required();
    plot->add_option("--frame", ep_frame, "Frame id")->capture_default_str();
    plot->add_option("--pred", ep_pred, "Predictions JSONL (omit with --ground-truth)");
    plot->add_flag("--ground-truth", ep_gt, "Plot the frame's ground truth");
    plot->add_option("--out", ep_out, "Output SVG path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) {
            save_frames_jsonl(generate_corpus(SceneConfig::defaults(), synth_frames, synth_seed),
                              synth_out);
            std::cout << "wrote " << synth_frames << " frames to " << synth_out << "\n";
        } else if (*split) {
            DatasetSplit s = split_dataset(load_frames(split_in), split_seed);
            fs::create_directories(split_dir);
            save_frames_jsonl(s.train, (fs::path(split_dir) / "train.jsonl").string());
            save_frames_jsonl(s.validation, (fs::path(split_dir) / "validation.jsonl").string());
            save_frames_jsonl(s.test, (fs::path(split_dir) / "test.jsonl").string());
            std::cout << "split " << s.train.size() << "/" << s.validation.size() << "/"
                      << s.test.size() << " into " << split_dir << "\n";
        } else if (*mask) {
            FrameList masked = mask_labels(load_frames(mask_in), mask_fraction, mask_seed);
            save_frames_jsonl(masked, mask_out);
            int labeled = 0;
            for (const RadarFrame& f : masked) labeled += f.labeled() ? 1 : 0;
            std::cout << "kept labels on " << labeled << "/" << masked.size() << " frames -> "
                      << mask_out << "\n";
        } else if (*train) {
            TrainConfig cfg =
                train_cfg.empty() ? TrainConfig{} : TrainConfig::from_ini(IniConfig::load(train_cfg));
            cfg.regime = parse_regime(train_regime);
            if (opt_fraction) cfg.labeled_fraction = *opt_fraction;
            if (opt_seed) cfg.seed = *opt_seed;
            if (opt_tau) cfg.tau = *opt_tau;
            if (opt_alpha) cfg.alpha = *opt_alpha;
            if (opt_threshold) cfg.pseudo_threshold = *opt_threshold;
            if (opt_epochs_repr) cfg.epochs_representation = *opt_epochs_repr;
            if (opt_epochs_ft) cfg.epochs_finetune = *opt_epochs_ft;
            if (opt_epochs_joint) cfg.epochs_joint = *opt_epochs_joint;
            if (opt_epochs_sup) cfg.epochs_supervised = *opt_epochs_sup;

            DatasetSplit data;
            data.train = mask_labels(load_frames(train_train), cfg.labeled_fraction, cfg.seed);
            data.validation = load_frames(train_val);
            data.test = load_frames(train_test);

            if (train_dir.empty()) {
                char tag[96];
                std::snprintf(tag, sizeof(tag), "%s_p%g_s%llu", regime_name(cfg.regime),
                              cfg.labeled_fraction,
                              static_cast<unsigned long long>(cfg.seed));
                train_dir = (fs::path(run_root()) / tag).string();
            }
            RunArtifacts art = run_regime(cfg, data, train_dir);
            // Record the dataset paths so `eval --run` can reconstruct the run.
            IniConfig snapshot = IniConfig::load(art.config_path);
            snapshot.set("data", "train", train_train);
            snapshot.set("data", "validation", train_val);
            snapshot.set("data", "test", train_test);
            snapshot.save(art.config_path);
            std::cout << "run dir: " << art.run_dir << "\n";
            std::cout << "validation mAP@0.5: " << art.validation_map * 100.0 << "%\n";
            std::cout << "test " << art.test_metrics.summary() << "\n";
        } else if (*pseudo) {
            Model model = Model::load(pl_model);
            FrameList unlabeled;
            for (RadarFrame& f : load_frames(pl_in))
                if (!f.labeled()) unlabeled.push_back(std::move(f));
            save_pseudo_labels(generate_pseudo_labels(model, unlabeled, pl_threshold), pl_out);
            std::cout << "wrote pseudo-labels to " << pl_out << "\n";
        } else if (*grid) {
            Model model = Model::load(gs_model);
            const FrameList frames = load_frames(gs_in);  // outlives sem's frame pointers
            const auto sem = predict_semantics(model, frames);
            auto [best, map] = grid_search_per_class(sem, default_eps_grid(),
                                                     default_min_pts_grid(), default_vw_grid());
            save_params(best, gs_out);
            std::cout << "best validation mAP@0.5: " << map * 100.0 << "% -> " << gs_out << "\n";
        } else if (*eval_cmd) {
            if (!ev_run.empty()) {
                IniConfig snapshot = IniConfig::load((fs::path(ev_run) / "config.ini").string());
                ev_model = (fs::path(ev_run) / "model.ckpt").string();
                ev_params = (fs::path(ev_run) / "clustering_params.txt").string();
                if (ev_split != "test" && ev_split != "validation")
                    throw std::runtime_error("eval: --split must be test or validation");
                ev_in = snapshot.get("data", ev_split);
                if (ev_in.empty())
                    throw std::runtime_error("eval: run config has no recorded " + ev_split +
                                             " dataset path");
            } else if (ev_model.empty() || ev_params.empty() || ev_in.empty()) {
                throw std::runtime_error("eval: need --run or all of --model/--params/--in");
            }
            Model model = Model::load(ev_model);
            std::cout << evaluate(model, load_frames(ev_in), load_params(ev_params)).summary()
                      << "\n";
        } else if (*infer) {
            Model model = Model::load(in_model);
            save_predictions(run_inference(model, load_frames(in_in), load_params(in_params)),
                             in_out);
            std::cout << "wrote predictions to " << in_out << "\n";
        } else if (*plot) {
            if (ep_gt != ep_pred.empty())
                throw std::runtime_error("export-plot: pass exactly one of --ground-truth, --pred");
            const FrameList frames = load_frames(ep_in);
            const RadarFrame* frame = nullptr;
            for (const RadarFrame& f : frames)
                if (f.id == ep_frame) frame = &f;
            if (!frame) throw std::runtime_error("export-plot: frame id not found");
            std::string svg;
            if (ep_gt) {
                svg = render_ground_truth_svg(*frame);
            } else {
                const Prediction* pred = nullptr;
                for (const Prediction& p : load_predictions(ep_pred))
                    if (p.frame_id == ep_frame) {
                        svg = render_frame_svg(*frame, p.classes, p.instances);
                        pred = &p;
                        break;
                    }
                if (!pred) throw std::runtime_error("export-plot: frame id not in predictions");
            }
            save_svg(svg, ep_out);
            std::cout << "wrote " << ep_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
