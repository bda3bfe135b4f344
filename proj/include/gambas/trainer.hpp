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

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gambas/losses.hpp"
#include "gambas/network.hpp"
#include "gambas/optim.hpp"
#include "gambas/phantom.hpp"

namespace gambas {

struct TrainConfig {
    GeneratorConfig gen;     // patch_size doubles as the training patch extent
    int64_t steps = 2000;
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    LossWeights weights;
    int64_t volume_extent = 48;
    int64_t n_train = 24;
    int64_t n_val = 20;
    int components = 5;
    bool augment_enabled = true;
    AugmentToggles aug;
    uint64_t seed = 0;
    int64_t checkpoint_every = 500;
    int64_t infer_overlap = 8;
    std::string out_dir = "out";
    std::string resume_from; // checkpoint path; empty = fresh start
};

/// Flat key=value config parsing: '#' comments, blank lines ignored.
/// Unknown keys are an error. Every key falls back to the documented
/// default in train_config_defaults().
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);
TrainConfig train_config_from_map(const std::map<std::string, std::string>& kv,
                                  TrainConfig base = {});
std::map<std::string, std::string> train_config_defaults();

struct StepReport {
    double d_loss = 0;
    double g_adv = 0;
    double g_l1 = 0;
    double g_total = 0;
    double g_grad_norm = 0;
    double d_grad_norm = 0;
};

/// Owns the adversarial pair and both optimizers; one call per step runs
/// the discriminator phase on (real, detached fake) followed by the
/// generator phase on lambda_adv * adv + lambda_l1 * L1.
class TrainSession {
public:
    explicit TrainSession(const TrainConfig& cfg);

    StepReport train_step(const Tensor<double>& ulf_patch, const Tensor<double>& hf_patch);

    Generator<double>& generator() { return gen_; }
    Discriminator<double>& discriminator() { return disc_; }
    Adam<double>& gen_opt() { return g_opt_; }
    Adam<double>& disc_opt() { return d_opt_; }
    const TrainConfig& config() const { return cfg_; }

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    TrainConfig cfg_;
    Generator<double> gen_;
    Discriminator<double> disc_;
    Adam<double> g_opt_, d_opt_;
};

struct EvalStat {
    double mean = 0, sd = 0;
};

struct EvalSummary {
    int64_t n = 0;
    EvalStat nrmse_pred, nrmse_input;
    EvalStat psnr_pred, psnr_input;
    EvalStat ssim_pred, ssim_input;
    EvalStat dice_pred, dice_input; // mean over classes, per volume
};

/// Sliding-window inference with Hann-weighted blending. `forward` maps a
/// [1,1,p,p,p] patch to an equally-shaped prediction. Volumes smaller than
/// the patch get one centered reflect-padded pass.
Tensor<double> infer_volume(const std::function<Tensor<double>(const Tensor<double>&)>& forward,
                            const Tensor<double>& volume, int64_t patch, int64_t overlap);

/// Convenience wrapper running the generator without gradient tracking.
Tensor<double> infer_volume(Generator<double>& gen, const Tensor<double>& volume, int64_t patch,
                            int64_t overlap);

/// Held-out synthetic evaluation (metrics of G(ulf) and of the raw ulf
/// against hf, plus intensity-segmentation Dice).
EvalSummary evaluate_generator(Generator<double>& gen, const TrainConfig& cfg);

struct TrainResult {
    EvalSummary eval;
    std::string history_csv;
    std::string final_checkpoint;
    int64_t steps_run = 0;
};

TrainResult train(const TrainConfig& cfg);

/// Named configs spanning the ablation axes: "table4" (placement),
/// "table5" (trajectory), "table6" (directionality) or "all".
std::vector<std::pair<std::string, TrainConfig>> ablation_grid(const TrainConfig& base,
                                                               const std::string& which);

struct AblateRow {
    std::string name;
    EvalSummary eval;
};

/// Trains and evaluates every config under the shared seed and writes a
/// CSV (rows = configs, columns = NRMSE/PSNR/SSIM/mean-Dice).
std::vector<AblateRow> ablate(const std::vector<std::pair<std::string, TrainConfig>>& grid,
                              const std::string& csv_path);

} // namespace gambas
