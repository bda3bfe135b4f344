// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "gambas/checkpoint.hpp"
#include "gambas/curves.hpp"
#include "gambas/metrics.hpp"
#include "gambas/network.hpp"
#include "gambas/phantom.hpp"
#include "gambas/ssm.hpp"
#include "gambas/trainer.hpp"
#include "gambas/volume_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gambas;

namespace {

TrainConfig load_train_config(const std::string& config_path,
                              const std::vector<std::string>& overrides) {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = train_config_from_map(parse_kv_file(config_path), cfg);
    if (!overrides.empty()) {
        std::string text;
        for (const auto& kv : overrides) text += kv + "\n";
        cfg = train_config_from_map(parse_kv_text(text), cfg);
    }
    return cfg;
}

json stats_to_json(const PathStats& st) {
    return json{{"steps", st.steps},
                {"unit_step_fraction", st.unit_step_fraction},
                {"max_step_distance", st.max_step_distance},
                {"mean_adjacent_index_distance", st.mean_adjacent_index_distance}};
}

json eval_to_json(const EvalSummary& ev) {
    auto stat = [](const EvalStat& s) { return json{{"mean", s.mean}, {"sd", s.sd}}; };
    return json{{"volumes", ev.n},
                {"nrmse", {{"pred", stat(ev.nrmse_pred)}, {"input", stat(ev.nrmse_input)}}},
                {"psnr_db", {{"pred", stat(ev.psnr_pred)}, {"input", stat(ev.psnr_input)}}},
                {"ssim", {{"pred", stat(ev.ssim_pred)}, {"input", stat(ev.ssim_input)}}},
                {"mean_dice", {{"pred", stat(ev.dice_pred)}, {"input", stat(ev.dice_input)}}}};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    GB_CHECK(os.good(), "cannot write " + path);
    os << text;
}

void write_svg(const std::string& path, const CurvePath& p) {
    GB_CHECK(p.d == 1, "SVG output is only available for 2D paths");
    std::ostringstream os;
    const int scale = 10;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"-5 -5 " << (p.w * scale + 10)
       << " " << (p.h * scale + 10) << "\">\n  <polyline fill=\"none\" stroke=\"black\" "
       << "stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < p.order.size(); ++i) {
        if (i) os << ' ';
        os << p.order[i].x * scale << ',' << (p.h - 1 - p.order[i].y) * scale;
    }
    os << "\"/>\n</svg>\n";
    write_text(path, os.str());
}

/// Loads generator weights from a checkpoint into a model of scalar type S
/// (values stored as f64; cast on load for the f32 inference path).
template <typename S>
void load_generator_weights(Generator<S>& gen, const std::string& path) {
    const auto records = read_checkpoint_records(path);
    for (auto& p : gen.params.items) {
        const auto it = records.find(p->name);
        GB_CHECK(it != records.end(), "checkpoint missing parameter " + p->name);
        GB_CHECK(numel_of(it->second.shape()) == p->value.numel(),
                 "checkpoint shape mismatch for " + p->name);
        for (int64_t i = 0; i < p->value.numel(); ++i)
            p->value[i] = static_cast<S>(it->second[i]);
    }
}

int cmd_curve(const std::string& kind, int64_t w, int64_t h, int64_t d, int iterations,
              const std::string& csv, const std::string& stats, const std::string& svg) {
    CurvePath path;
    if (kind == "gilbert") path = gilbert3d(w, h, d);
    else if (kind == "raster") path = raster3d(w, h, d);
    else if (kind == "hilbert2d") path = lsystem_draw(lsystem_expand(hilbert_lsystem(), iterations));
    else fail("unknown curve kind '" + kind + "' (gilbert, raster, hilbert2d)");

    if (!csv.empty()) {
        std::ostringstream os;
        os << "step,x,y,z\n";
        for (size_t i = 0; i < path.order.size(); ++i)
            os << i << ',' << path.order[i].x << ',' << path.order[i].y << ',' << path.order[i].z
               << '\n';
        write_text(csv, os.str());
    }
    if (!stats.empty()) write_text(stats, stats_to_json(path_stats(path)).dump(2) + "\n");
    if (!svg.empty()) write_svg(svg, path);
    if (csv.empty() && stats.empty() && svg.empty())
        std::cout << stats_to_json(path_stats(path)).dump(2) << std::endl;
    return 0;
}

int cmd_ssm_check(uint64_t seed, const std::string& out_path) {
    const SsmCheckReport rep = run_ssm_checks(seed);
    const json j{{"pass", rep.pass},
                 {"zoh_analytic_max_err", rep.zoh_analytic_err},
                 {"zoh_limit_max_err", rep.zoh_limit_err},
                 {"lti_equivalence_max_err", rep.lti_equivalence_err},
                 {"scan_equivalence_max_err", rep.scan_equivalence_err},
                 {"associativity_max_err", rep.associativity_err}};
    if (!out_path.empty()) write_text(out_path, j.dump(2) + "\n");
    std::cout << j.dump(2) << std::endl;
    return rep.pass ? 0 : 1;
}

int cmd_synth(int64_t count, int64_t extent, int components, uint64_t seed,
              const std::string& out_dir) {
    fs::create_directories(out_dir);
    for (int64_t i = 0; i < count; ++i) {
        PhantomSpec spec;
        spec.extent = extent;
        spec.components = components;
        spec.seed = splitmix64(seed ^ (0xA11CE000ULL + static_cast<uint64_t>(i)));
        const VolumePair pair = synth_phantom_pair(spec);
        const std::string tag = std::to_string(i);
        write_volume(out_dir + "/hf_" + tag + ".vol", pair.hf);
        write_volume(out_dir + "/ulf_" + tag + ".vol", pair.ulf);
        write_labels(out_dir + "/labels_" + tag + ".vol", pair.labels);
    }
    std::cout << "wrote " << count << " paired volumes to " << out_dir << std::endl;
    return 0;
}

int cmd_train(const TrainConfig& cfg) {
    const TrainResult res = train(cfg);
    const json j{{"steps", res.steps_run},
                 {"history_csv", res.history_csv},
                 {"final_checkpoint", res.final_checkpoint},
                 {"eval", eval_to_json(res.eval)}};
    write_text(cfg.out_dir + "/eval.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << std::endl;
    return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& input, const std::string& output,
              const TrainConfig& cfg, int64_t patch, int64_t overlap,
              const std::string& precision) {
    const Tensor<double> ulf = read_volume(input);
    Tensor<double> pred;
    if (precision == "f64") {
        Generator<double> gen = build_generator<double>(cfg.gen, cfg.seed);
        load_generator_weights(gen, checkpoint);
        pred = infer_volume(gen, ulf, patch, overlap);
    } else if (precision == "f32") {
        Generator<float> gen = build_generator<float>(cfg.gen, cfg.seed);
        load_generator_weights(gen, checkpoint);
        const Tensor<float> ulf32 = ulf.cast<float>();
        pred = infer_volume(
            [&gen](const Tensor<double>& tile) {
                Tape<float> tape;
                Var<float> out = gen.forward(tape, tape.leaf(tile.cast<float>()));
                return out.value().template cast<double>();
            },
            ulf, patch, overlap);
        (void)ulf32;
    } else {
        fail("precision must be f32 or f64");
    }
    write_volume(output, pred, precision == "f32" ? VolumeDtype::F32 : VolumeDtype::F64);
    std::cout << "wrote " << output << std::endl;
    return 0;
}

int cmd_metrics(const std::string& pred_path, const std::string& ref_path,
                const std::string& pred_labels, const std::string& ref_labels,
                const std::string& pred_dir, const std::string& ref_dir,
                const std::string& out_path) {
    if (!pred_dir.empty()) { // batch mode -> CSV with mean/sd rows
        GB_CHECK(!ref_dir.empty(), "batch mode needs --ref-dir");
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(pred_dir))
            if (e.path().extension() == ".vol") names.push_back(e.path().filename().string());
        std::sort(names.begin(), names.end());
        GB_CHECK(!names.empty(), "no .vol files in " + pred_dir);
        std::ostringstream os;
        os << "volume,nrmse,psnr_db,ssim\n";
        std::vector<double> nr, ps, ss;
        for (const auto& name : names) {
            const Tensor<double> pred = read_volume(pred_dir + "/" + name);
            const Tensor<double> ref = read_volume(ref_dir + "/" + name);
            const MetricReport r = evaluate_pair(pred, ref);
            os << name << ',' << r.nrmse << ',' << r.psnr << ',' << r.ssim << '\n';
            nr.push_back(r.nrmse);
            ps.push_back(r.psnr);
            ss.push_back(r.ssim);
        }
        auto mean_sd = [](const std::vector<double>& v) {
            double m = 0, s = 0;
            for (double x : v) m += x;
            m /= v.size();
            for (double x : v) s += (x - m) * (x - m);
            return std::pair{m, std::sqrt(s / v.size())};
        };
        const auto [nm, nsd] = mean_sd(nr);
        const auto [pm, psd] = mean_sd(ps);
        const auto [sm, ssd] = mean_sd(ss);
        os << "mean," << nm << ',' << pm << ',' << sm << '\n';
        os << "sd," << nsd << ',' << psd << ',' << ssd << '\n';
        if (out_path.empty()) std::cout << os.str();
        else write_text(out_path, os.str());
        return 0;
    }
    const Tensor<double> pred = read_volume(pred_path);
    const Tensor<double> ref = read_volume(ref_path);
    MetricReport rep;
    if (!pred_labels.empty() && !ref_labels.empty()) {
        const Tensor<uint16_t> pl = read_labels(pred_labels);
        const Tensor<uint16_t> rl = read_labels(ref_labels);
        rep = evaluate_pair(pred, ref, &pl, &rl);
    } else {
        rep = evaluate_pair(pred, ref);
    }
    json j{{"nrmse", rep.nrmse}, {"ssim", rep.ssim}};
    j["psnr_db"] = std::isinf(rep.psnr) ? json("inf") : json(rep.psnr);
    if (!rep.dice.empty()) {
        json d;
        for (const auto& [cls, v] : rep.dice) d[std::to_string(cls)] = v;
        j["dice"] = d;
        // empty-in-both classes score 1 by convention
        j["dice_convention"] = "absent-in-both=1";
    }
    if (!out_path.empty()) write_text(out_path, j.dump(2) + "\n");
    std::cout << j.dump(2) << std::endl;
    return 0;
}

int cmd_ablate(const TrainConfig& base, const std::string& which, const std::string& csv_path) {
    const auto grid = ablation_grid(base, which);
    const auto rows = ablate(grid, csv_path);
    std::cout << "wrote " << rows.size() << " rows to " << csv_path << std::endl;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAMBAS: generalized-Hilbert Mamba GAN for volume-to-volume translation"};
    app.require_subcommand(1);
    app.fallthrough(); // global --config/--seed/--out-dir work after the subcommand

    std::string config_path, out_dir;
    uint64_t seed = 0;
    bool seed_set = false, out_set = false;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key=value config file")->expected(1);
    app.add_option("--seed", seed, "master seed")->each([&](const std::string&) { seed_set = true; });
    app.add_option("--out-dir", out_dir, "output directory")->each([&](const std::string&) { out_set = true; });
    app.add_option("--set", overrides, "config override key=value (repeatable)");

    auto resolve_cfg = [&]() {
        TrainConfig cfg = load_train_config(config_path, overrides);
        if (seed_set) cfg.seed = seed;
        if (out_set) cfg.out_dir = out_dir;
        return cfg;
    };

    // curve
    auto* curve = app.add_subcommand("curve", "emit space-filling curve paths and stats");
    std::string curve_kind = "gilbert", curve_csv, curve_stats, curve_svg;
    int64_t cw = 8, ch = 8, cd = 8;
    int iterations = 3;
    curve->add_option("--kind", curve_kind, "gilbert | raster | hilbert2d");
    curve->add_option("--width", cw, "grid width");
    curve->add_option("--height", ch, "grid height");
    curve->add_option("--depth", cd, "grid depth");
    curve->add_option("--iterations", iterations, "L-system iterations (hilbert2d)");
    curve->add_option("--csv", curve_csv, "write path as CSV (step,x,y,z)");
    curve->add_option("--stats", curve_stats, "write stats JSON");
    curve->add_option("--svg", curve_svg, "write SVG polyline (2D paths)");

    // ssm-check
    auto* ssmc = app.add_subcommand("ssm-check", "run the SSM equivalence oracles");
    std::string ssm_out;
    ssmc->add_option("--out", ssm_out, "write the JSON report here too");

    // synth
    auto* synth = app.add_subcommand("synth", "synthesize paired phantom volumes");
    int64_t synth_count = 4, synth_extent = 48;
    int synth_components = 5;
    synth->add_option("--count", synth_count, "number of pairs");
    synth->add_option("--extent", synth_extent, "cubic volume extent");
    synth->add_option("--components", synth_components, "ellipsoid component count");

    // train
    auto* tr = app.add_subcommand("train", "adversarial training on synthetic pairs");
    bool print_defaults = false;
    tr->add_flag("--print-defaults", print_defaults, "print every config key with its default");

    // infer
    auto* inf = app.add_subcommand("infer", "sliding-window volume translation");
    std::string ckpt, in_vol, out_vol, precision = "f64";
    int64_t patch = 0, overlap = -1;
    inf->add_option("--checkpoint", ckpt, "trained checkpoint (.gck)")->required();
    inf->add_option("--input", in_vol, "input volume (.vol)")->required();
    inf->add_option("--output", out_vol, "output volume (.vol)")->required();
    inf->add_option("--patch", patch, "patch extent (default: config patch_size)");
    inf->add_option("--overlap", overlap, "window overlap (default: config infer_overlap)");
    inf->add_option("--precision", precision, "f64 (default) or f32");

    // metrics
    auto* met = app.add_subcommand("metrics", "image-quality metrics between volumes");
    std::string m_pred, m_ref, m_pred_lab, m_ref_lab, m_pred_dir, m_ref_dir, m_out;
    met->add_option("--pred", m_pred, "predicted volume");
    met->add_option("--ref", m_ref, "reference volume");
    met->add_option("--pred-labels", m_pred_lab, "predicted label volume");
    met->add_option("--ref-labels", m_ref_lab, "reference label volume");
    met->add_option("--pred-dir", m_pred_dir, "batch mode: directory of predictions");
    met->add_option("--ref-dir", m_ref_dir, "batch mode: directory of references");
    met->add_option("--out", m_out, "output path (JSON single / CSV batch)");

    // ablate
    auto* abl = app.add_subcommand("ablate", "train/evaluate an ablation grid");
    std::string grid_kind = "all", abl_csv = "ablation.csv";
    abl->add_option("--grid", grid_kind, "table4 | table5 | table6 | all");
    abl->add_option("--csv", abl_csv, "results CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (curve->parsed())
            return cmd_curve(curve_kind, cw, ch, cd, iterations, curve_csv, curve_stats, curve_svg);
        if (ssmc->parsed()) return cmd_ssm_check(seed, ssm_out);
        if (synth->parsed()) {
            const TrainConfig cfg = resolve_cfg();
            return cmd_synth(synth_count, synth_extent, synth_components, cfg.seed,
                             out_set ? out_dir : "synth_out");
        }
        if (tr->parsed()) {
            if (print_defaults) {
                for (const auto& [k, v] : train_config_defaults())
                    std::cout << k << " = " << v << "\n";
                return 0;
            }
            return cmd_train(resolve_cfg());
        }
        if (inf->parsed()) {
            const TrainConfig cfg = resolve_cfg();
            return cmd_infer(ckpt, in_vol, out_vol, cfg, patch > 0 ? patch : cfg.gen.patch_size,
                             overlap >= 0 ? overlap : cfg.infer_overlap, precision);
        }
        if (met->parsed())
            return cmd_metrics(m_pred, m_ref, m_pred_lab, m_ref_lab, m_pred_dir, m_ref_dir, m_out);
        if (abl->parsed()) return cmd_ablate(resolve_cfg(), grid_kind, abl_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
