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

#include <map>
#include <string>

#include "gambas/optim.hpp"
#include "gambas/tape.hpp"

namespace gambas {

/// Checkpoint file ("GCK1"): u32 record count, then records sorted by
/// identifier, each [u32 name_len][name][u32 rank][u32 dims...][f64 values],
/// all little-endian. Optimizer moments ride along as records under the
/// reserved "__adam_m/", "__adam_v/" and "__step" identifiers so training
/// resumes bit-exactly.
void save_checkpoint(const std::string& path, const ParamStore<double>& params,
                     const Adam<double>* opt = nullptr);

/// Loads values (and moments/step when present) into matching parameters.
/// Throws on missing parameters or shape mismatches.
void load_checkpoint(const std::string& path, ParamStore<double>& params,
                     Adam<double>* opt = nullptr);

/// Raw record view, for tools that inspect checkpoints.
std::map<std::string, Tensor<double>> read_checkpoint_records(const std::string& path);

} // namespace gambas
