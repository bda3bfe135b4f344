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

#include "gambas/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gambas/checkpoint.hpp"
#include "gambas/metrics.hpp"

namespace gambas {

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        GB_CHECK(eq != std::string::npos,
                 "config line " + std::to_string(lineno) + " is not key=value: '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        GB_CHECK(!key.empty(), "config line " + std::to_string(lineno) + " has an empty key");
        kv[key] = val;
    }
    return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream is(path);
    GB_CHECK(is.good(), "cannot open config file: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_kv_text(buf.str());
}

namespace {

std::set<int> parse_placement(const std::string& s) {
    if (s == "none" || s.empty()) return {};
    std::set<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        GB_CHECK(!tok.empty(), "empty entry in placement list '" + s + "'");
        out.insert(std::stoi(tok));
    }
    return out;
}

std::string placement_to_string(const std::set<int>& p) {
    if (p.empty()) return "none";
    std::string out;
    for (int v : p) out += (out.empty() ? "" : ",") + std::to_string(v);
    return out;
}

bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    fail("config key '" + key + "' expects a boolean, got '" + s + "'");
}

} // namespace

std::map<std::string, std::string> train_config_defaults() {
    const TrainConfig d;
    std::map<std::string, std::string> kv;
    kv["base_channels"] = std::to_string(d.gen.base_channels);
    kv["placement"] = placement_to_string(d.gen.placement);
    kv["trajectory"] = to_string(d.gen.trajectory);
    kv["bidirectional"] = d.gen.bidirectional ? "true" : "false";
    kv["d_state"] = std::to_string(d.gen.d_state);
    kv["expand"] = std::to_string(d.gen.expand);
    kv["conv_width"] = std::to_string(d.gen.conv_width);
    kv["patch_size"] = std::to_string(d.gen.patch_size);
    kv["mix_kernel_a"] = std::to_string(d.gen.mix_kernel_a);
    kv["mix_kernel_b"] = std::to_string(d.gen.mix_kernel_b);
    kv["steps"] = std::to_string(d.steps);
    kv["lr"] = "0.0002";
    kv["beta1"] = "0.5";
    kv["beta2"] = "0.999";
    kv["lambda_adv"] = "1";
    kv["lambda_l1"] = "100";
    kv["saturating"] = "false";
    kv["volume_extent"] = std::to_string(d.volume_extent);
    kv["n_train"] = std::to_string(d.n_train);
    kv["n_val"] = std::to_string(d.n_val);
    kv["components"] = std::to_string(d.components);
    kv["augment"] = "true";
    kv["aug_flip"] = "true";
    kv["aug_rot90"] = "true";
    kv["aug_rot_small"] = "true";
    kv["aug_warp"] = "true";
    kv["aug_intensity"] = "true";
    kv["seed"] = "0";
    kv["checkpoint_every"] = std::to_string(d.checkpoint_every);
    kv["infer_overlap"] = std::to_string(d.infer_overlap);
    kv["out_dir"] = d.out_dir;
    kv["resume_from"] = "";
    return kv;
}

TrainConfig train_config_from_map(const std::map<std::string, std::string>& kv, TrainConfig c) {
    const auto known = train_config_defaults();
    for (const auto& [key, val] : kv) {
        GB_CHECK(known.count(key), "unknown config key '" + key + "'");
        if (key == "base_channels") c.gen.base_channels = std::stoll(val);
        else if (key == "placement") c.gen.placement = parse_placement(val);
        else if (key == "trajectory") c.gen.trajectory = trajectory_from_string(val);
        else if (key == "bidirectional") c.gen.bidirectional = parse_bool(val, key);
        else if (key == "d_state") c.gen.d_state = std::stoll(val);
        else if (key == "expand") c.gen.expand = std::stoll(val);
        else if (key == "conv_width") c.gen.conv_width = std::stoll(val);
        else if (key == "patch_size") c.gen.patch_size = std::stoll(val);
        else if (key == "mix_kernel_a") c.gen.mix_kernel_a = std::stoi(val);
        else if (key == "mix_kernel_b") c.gen.mix_kernel_b = std::stoi(val);
        else if (key == "steps") c.steps = std::stoll(val);
        else if (key == "lr") c.lr = std::stod(val);
        else if (key == "beta1") c.beta1 = std::stod(val);
        else if (key == "beta2") c.beta2 = std::stod(val);
        else if (key == "lambda_adv") c.weights.lambda_adv = std::stod(val);
        else if (key == "lambda_l1") c.weights.lambda_l1 = std::stod(val);
        else if (key == "saturating") c.weights.saturating = parse_bool(val, key);
        else if (key == "volume_extent") c.volume_extent = std::stoll(val);
        else if (key == "n_train") c.n_train = std::stoll(val);
        else if (key == "n_val") c.n_val = std::stoll(val);
        else if (key == "components") c.components = std::stoi(val);
        else if (key == "augment") c.augment_enabled = parse_bool(val, key);
        else if (key == "aug_flip") c.aug.flip = parse_bool(val, key);
        else if (key == "aug_rot90") c.aug.rot90 = parse_bool(val, key);
        else if (key == "aug_rot_small") c.aug.rot_small = parse_bool(val, key);
        else if (key == "aug_warp") c.aug.warp = parse_bool(val, key);
        else if (key == "aug_intensity") c.aug.intensity = parse_bool(val, key);
        else if (key == "seed") c.seed = std::stoull(val);
        else if (key == "checkpoint_every") c.checkpoint_every = std::stoll(val);
        else if (key == "infer_overlap") c.infer_overlap = std::stoll(val);
        else if (key == "out_dir") c.out_dir = val;
        else if (key == "resume_from") c.resume_from = val;
    }
    GB_CHECK(c.weights.lambda_adv >= 0 && c.weights.lambda_l1 >= 0,
             "loss weights must be >= 0");
    GB_CHECK(c.gen.patch_size % 4 == 0, "patch_size must be divisible by 4");
    return c;
}

// ---------------------------------------------------------------------------
// Training session
// ---------------------------------------------------------------------------

TrainSession::TrainSession(const TrainConfig& cfg)
    : cfg_(cfg),
      gen_(build_generator<double>(cfg.gen, cfg.seed)),
      disc_(build_discriminator<double>(cfg.gen.base_channels, cfg.seed)),
      g_opt_(AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, 1e-8}),
      d_opt_(AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, 1e-8}) {}

StepReport TrainSession::train_step(const Tensor<double>& ulf_patch,
                                    const Tensor<double>& hf_patch) {
    GB_CHECK(ulf_patch.shape() == hf_patch.shape(), "train_step: patch shape mismatch");
    StepReport rep;

    // Generator forward once; its output serves the D phase detached and
    // the G phase attached.
    Tape<double> gtape;
    Var<double> x = gtape.leaf(ulf_patch);
    Var<double> y = gtape.leaf(hf_patch);
    Var<double> fake = gen_.forward(gtape, x);

    { // discriminator phase
        Tape<double> dtape;
        Var<double> xd = dtape.leaf(ulf_patch);
        Var<double> yd = dtape.leaf(hf_patch);
        Var<double> fd = dtape.leaf(fake.value()); // detached
        Var<double> real_logits = disc_.forward(dtape, xd, yd);
        Var<double> fake_logits = disc_.forward(dtape, xd, fd);
        Var<double> d_loss = cgan_loss_d(real_logits, fake_logits);
        rep.d_loss = d_loss.value()[0];
        GB_CHECK(std::isfinite(rep.d_loss), "non-finite discriminator loss (NaN guard)");
        disc_.params.zero_grad();
        dtape.backward(d_loss);
        rep.d_grad_norm = disc_.params.grad_norm();
        d_opt_.step(disc_.params);
    }

    { // generator phase, against the updated discriminator
        Var<double> fake_logits = disc_.forward(gtape, x, fake);
        Var<double> g_adv = cgan_loss_g(fake_logits, cfg_.weights.saturating);
        Var<double> g_l1 = l1_loss(fake, y);
        rep.g_adv = g_adv.value()[0];
        rep.g_l1 = g_l1.value()[0];
        // lambda_adv = 0 reduces the backward pass to the bare L1 path, so
        // pure-regression gradients match bitwise.
        Var<double> total =
            cfg_.weights.lambda_adv == 0.0
                ? scale(g_l1, cfg_.weights.lambda_l1)
                : add(scale(g_adv, cfg_.weights.lambda_adv), scale(g_l1, cfg_.weights.lambda_l1));
        rep.g_total = total.value()[0];
        GB_CHECK(std::isfinite(rep.g_total) && std::isfinite(rep.g_adv),
                 "non-finite generator loss (NaN guard)");
        gen_.params.zero_grad();
        disc_.params.zero_grad();
        gtape.backward(total);
        rep.g_grad_norm = gen_.params.grad_norm();
        g_opt_.step(gen_.params);
    }
    return rep;
}

void TrainSession::save(const std::string& path) const {
    ParamStore<double> all;
    all.absorb(gen_.params);
    all.absorb(disc_.params);
    // Both optimizers share the step count (they advance in lockstep).
    save_checkpoint(path, all, &g_opt_);
}

void TrainSession::load(const std::string& path) {
    ParamStore<double> all;
    all.absorb(gen_.params);
    all.absorb(disc_.params);
    load_checkpoint(path, all, &g_opt_);
    d_opt_.set_steps_taken(g_opt_.steps_taken());
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

namespace {

std::vector<int64_t> window_starts(int64_t extent, int64_t patch, int64_t stride) {
    std::vector<int64_t> starts;
    for (int64_t s = 0;; s += stride) {
        if (s + patch >= extent) {
            starts.push_back(extent - patch);
            break;
        }
        starts.push_back(s);
    }
    return starts;
}

double hann(int64_t i, int64_t n) {
    return 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * (i + 0.5) / n);
}

/// Reflect-pad a [1,1,D,H,W] volume up to at least `target` per axis.
Tensor<double> reflect_pad_to(const Tensor<double>& v, int64_t target) {
    const Shape& s = v.shape();
    const int64_t D = s[2], H = s[3], W = s[4];
    const int64_t nd = std::max(D, target), nh = std::max(H, target), nw = std::max(W, target);
    const int64_t pz = (nd - D) / 2, py = (nh - H) / 2, px = (nw - W) / 2;
    Tensor<double> out({1, 1, nd, nh, nw});
    auto reflect = [](int64_t i, int64_t n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * n - 2 - i;
        }
        return i;
    };
    for (int64_t z = 0; z < nd; ++z)
        for (int64_t y = 0; y < nh; ++y)
            for (int64_t x = 0; x < nw; ++x)
                out[(z * nh + y) * nw + x] =
                    v[(reflect(z - pz, D) * H + reflect(y - py, H)) * W + reflect(x - px, W)];
    return out;
}

} // namespace

Tensor<double> infer_volume(const std::function<Tensor<double>(const Tensor<double>&)>& forward,
                            const Tensor<double>& volume, int64_t patch, int64_t overlap) {
    const Shape& s = volume.shape();
    GB_CHECK(s.size() == 5 && s[0] == 1 && s[1] == 1, "infer expects a [1,1,D,H,W] volume");
    GB_CHECK(patch % 4 == 0 && patch >= 8, "patch must be >= 8 and divisible by 4");
    GB_CHECK(overlap >= 0 && overlap < patch, "overlap must lie in [0, patch)");
    const int64_t D = s[2], H = s[3], W = s[4];

    if (D < patch || H < patch || W < patch) {
        Tensor<double> padded = reflect_pad_to(volume, patch);
        Tensor<double> pred = infer_volume(forward, padded, patch, overlap);
        const Shape& ps = padded.shape();
        Tensor<double> out({1, 1, D, H, W});
        const int64_t pz = (ps[2] - D) / 2, py = (ps[3] - H) / 2, px = (ps[4] - W) / 2;
        for (int64_t z = 0; z < D; ++z)
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x)
                    out[(z * H + y) * W + x] =
                        pred[((z + pz) * ps[3] + (y + py)) * ps[4] + (x + px)];
        return out;
    }

    const int64_t stride = patch - overlap;
    const auto zs = window_starts(D, patch, stride);
    const auto ys = window_starts(H, patch, stride);
    const auto xs = window_starts(W, patch, stride);

    Tensor<double> acc = Tensor<double>::zeros({1, 1, D, H, W});
    Tensor<double> wsum = Tensor<double>::zeros({1, 1, D, H, W});
    std::vector<double> win(static_cast<size_t>(patch));
    for (int64_t i = 0; i < patch; ++i) win[i] = hann(i, patch);

    Tensor<double> tile({1, 1, patch, patch, patch});
    for (const int64_t z0 : zs)
        for (const int64_t y0 : ys)
            for (const int64_t x0 : xs) {
                for (int64_t z = 0; z < patch; ++z)
                    for (int64_t y = 0; y < patch; ++y)
                        std::copy_n(volume.data() + ((z + z0) * H + (y + y0)) * W + x0, patch,
                                    tile.data() + (z * patch + y) * patch);
                Tensor<double> pred = forward(tile);
                GB_CHECK(pred.shape() == tile.shape(), "infer: forward changed the patch shape");
                for (int64_t z = 0; z < patch; ++z)
                    for (int64_t y = 0; y < patch; ++y)
                        for (int64_t x = 0; x < patch; ++x) {
                            const double w = win[z] * win[y] * win[x];
                            const int64_t dst = ((z + z0) * H + (y + y0)) * W + (x + x0);
                            acc[dst] += w * pred[(z * patch + y) * patch + x];
                            wsum[dst] += w;
                        }
            }
    for (int64_t i = 0; i < acc.numel(); ++i) acc[i] /= wsum[i];
    return acc;
}

Tensor<double> infer_volume(Generator<double>& gen, const Tensor<double>& volume, int64_t patch,
                            int64_t overlap) {
    return infer_volume(
        [&gen](const Tensor<double>& tile) {
            Tape<double> tape;
            Var<double> out = gen.forward(tape, tape.leaf(tile));
            return out.value();
        },
        volume, patch, overlap);
}

// ---------------------------------------------------------------------------
// Evaluation and the training loop
// ---------------------------------------------------------------------------

namespace {

VolumePair val_pair(const TrainConfig& cfg, int64_t i) {
    PhantomSpec spec;
    spec.extent = cfg.volume_extent;
    spec.components = cfg.components;
    spec.seed = splitmix64(cfg.seed ^ (0xBEEF0000ULL + static_cast<uint64_t>(i)));
    return synth_phantom_pair(spec);
}

VolumePair train_pair(const TrainConfig& cfg, int64_t i) {
    PhantomSpec spec;
    spec.extent = cfg.volume_extent;
    spec.components = cfg.components;
    spec.seed = splitmix64(cfg.seed ^ (0xA11CE000ULL + static_cast<uint64_t>(i)));
    return synth_phantom_pair(spec);
}

EvalStat stat_of(const std::vector<double>& xs) {
    EvalStat st;
    if (xs.empty()) return st;
    for (const double v : xs) st.mean += v;
    st.mean /= static_cast<double>(xs.size());
    for (const double v : xs) st.sd += (v - st.mean) * (v - st.mean);
    st.sd = std::sqrt(st.sd / static_cast<double>(xs.size()));
    return st;
}

double mean_dice(const std::map<int, double>& d) {
    if (d.empty()) return 0;
    double acc = 0;
    for (const auto& [cls, v] : d) acc += v;
    return acc / static_cast<double>(d.size());
}

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

EvalSummary evaluate_generator(Generator<double>& gen, const TrainConfig& cfg) {
    EvalSummary sum;
    sum.n = cfg.n_val;
    std::vector<double> nr_p, nr_i, ps_p, ps_i, ss_p, ss_i, dc_p, dc_i;
    for (int64_t i = 0; i < cfg.n_val; ++i) {
        const VolumePair pair = val_pair(cfg, i);
        const Tensor<double> pred =
            infer_volume(gen, pair.ulf, cfg.gen.patch_size, cfg.infer_overlap);
        nr_p.push_back(nrmse(pred, pair.hf));
        nr_i.push_back(nrmse(pair.ulf, pair.hf));
        ps_p.push_back(psnr(pred, pair.hf));
        ps_i.push_back(psnr(pair.ulf, pair.hf));
        ss_p.push_back(ssim(pred, pair.hf));
        ss_i.push_back(ssim(pair.ulf, pair.hf));
        const auto seg_p = segment_by_intensity(pred, cfg.components);
        const auto seg_i = segment_by_intensity(pair.ulf, cfg.components);
        std::set<int> classes;
        for (int c = 1; c <= cfg.components; ++c) classes.insert(c);
        dc_p.push_back(mean_dice(dice(seg_p, pair.labels, classes)));
        dc_i.push_back(mean_dice(dice(seg_i, pair.labels, classes)));
    }
    sum.nrmse_pred = stat_of(nr_p);
    sum.nrmse_input = stat_of(nr_i);
    sum.psnr_pred = stat_of(ps_p);
    sum.psnr_input = stat_of(ps_i);
    sum.ssim_pred = stat_of(ss_p);
    sum.ssim_input = stat_of(ss_i);
    sum.dice_pred = stat_of(dc_p);
    sum.dice_input = stat_of(dc_i);
    return sum;
}

TrainResult train(const TrainConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    TrainSession session(cfg);
    if (!cfg.resume_from.empty()) session.load(cfg.resume_from);

    std::vector<VolumePair> pool;
    pool.reserve(cfg.n_train);
    for (int64_t i = 0; i < cfg.n_train; ++i) pool.push_back(train_pair(cfg, i));

    const std::string history_path = cfg.out_dir + "/history.csv";
    const bool resuming_file =
        session.gen_opt().steps_taken() > 0 && std::filesystem::exists(history_path);
    std::ofstream hist(history_path, resuming_file ? std::ios::app : std::ios::trunc);
    GB_CHECK(hist.good(), "cannot open history CSV: " + history_path);
    if (!resuming_file) hist << "step,d_loss,g_adv,g_l1,g_total,g_grad_norm,d_grad_norm\n";
    if (session.gen_opt().steps_taken() == 0) session.save(cfg.out_dir + "/ckpt_initial.gck");

    const Rng master(splitmix64(cfg.seed ^ 0x57e9a1ULL));
    TrainResult result;
    for (int64_t step = session.gen_opt().steps_taken(); step < cfg.steps; ++step) {
        Rng step_rng = master.child(static_cast<uint64_t>(step));
        const int64_t idx = step_rng.uniform_int(cfg.n_train);
        VolumePair pair = pool[idx];
        if (cfg.augment_enabled && cfg.aug.any()) pair = augment(pair, cfg.aug, step_rng);
        const VolumePair patch = extract_patch(pair, cfg.gen.patch_size, step_rng);
        const StepReport rep = session.train_step(patch.ulf, patch.hf);
        hist << step << ',' << fmt_g17(rep.d_loss) << ',' << fmt_g17(rep.g_adv) << ','
             << fmt_g17(rep.g_l1) << ',' << fmt_g17(rep.g_total) << ','
             << fmt_g17(rep.g_grad_norm) << ',' << fmt_g17(rep.d_grad_norm) << '\n';
        const int64_t done = step + 1;
        if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.steps)
            session.save(cfg.out_dir + "/ckpt_step" + std::to_string(done) + ".gck");
    }
    hist.close();

    const std::string final_ckpt = cfg.out_dir + "/ckpt_final.gck";
    session.save(final_ckpt);
    result.history_csv = history_path;
    result.final_checkpoint = final_ckpt;
    result.steps_run = session.gen_opt().steps_taken();
    result.eval = evaluate_generator(session.generator(), cfg);
    return result;
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, TrainConfig>> ablation_grid(const TrainConfig& base,
                                                               const std::string& which) {
    std::vector<std::pair<std::string, TrainConfig>> grid;
    auto push = [&](const std::string& name, auto&& mod) {
        TrainConfig c = base;
        mod(c);
        c.out_dir = base.out_dir + "/" + name;
        grid.emplace_back(name, std::move(c));
    };
    const bool t4 = which == "table4" || which == "all";
    const bool t5 = which == "table5" || which == "all";
    const bool t6 = which == "table6" || which == "all";
    GB_CHECK(t4 || t5 || t6, "unknown ablation grid '" + which +
                                 "' (expected table4, table5, table6 or all)");
    if (t4) {
        const std::vector<std::pair<std::string, std::set<int>>> placements = {
            {"placement_none", {}},
            {"placement_5", {5}},
            {"placement_1_5_9", {1, 5, 9}},
            {"placement_1_3_5_7_9", {1, 3, 5, 7, 9}},
            {"placement_all", {1, 2, 3, 4, 5, 6, 7, 8, 9}}};
        for (const auto& [name, p] : placements)
            push(name, [&p = p](TrainConfig& c) { c.gen.placement = p; });
    }
    if (t5) {
        push("trajectory_raster", [](TrainConfig& c) {
            c.gen.placement = {1, 5, 9};
            c.gen.trajectory = Trajectory::Raster;
        });
        push("trajectory_gilbert", [](TrainConfig& c) {
            c.gen.placement = {1, 5, 9};
            c.gen.trajectory = Trajectory::Gilbert;
        });
    }
    if (t6) {
        push("unidirectional", [](TrainConfig& c) {
            c.gen.placement = {1, 5, 9};
            c.gen.bidirectional = false;
        });
        push("bidirectional", [](TrainConfig& c) {
            c.gen.placement = {1, 5, 9};
            c.gen.bidirectional = true;
        });
    }
    return grid;
}

std::vector<AblateRow> ablate(const std::vector<std::pair<std::string, TrainConfig>>& grid,
                              const std::string& csv_path) {
    std::vector<AblateRow> rows;
    for (const auto& [name, cfg] : grid) {
        const TrainResult res = train(cfg);
        rows.push_back({name, res.eval});
    }
    std::ofstream csv(csv_path);
    GB_CHECK(csv.good(), "cannot open ablation CSV: " + csv_path);
    csv << "config,nrmse_mean,nrmse_sd,psnr_mean,psnr_sd,ssim_mean,ssim_sd,dice_mean,dice_sd\n";
    for (const auto& row : rows)
        csv << row.name << ',' << row.eval.nrmse_pred.mean << ',' << row.eval.nrmse_pred.sd << ','
            << row.eval.psnr_pred.mean << ',' << row.eval.psnr_pred.sd << ','
            << row.eval.ssim_pred.mean << ',' << row.eval.ssim_pred.sd << ','
            << row.eval.dice_pred.mean << ',' << row.eval.dice_pred.sd << '\n';
    return rows;
}

} // namespace gambas
