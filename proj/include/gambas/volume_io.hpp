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

#include <cstdint>
#include <string>

#include "gambas/tensor.hpp"

namespace gambas {

/// Volume file: magic "VOL1", u32 LE W,H,D, u8 dtype, then the payload
/// little-endian and x-fastest. dtype 0 = f32, 1 = f64, 2 = u16 labels.
enum class VolumeDtype : uint8_t { F32 = 0, F64 = 1, U16 = 2 };

/// vol may be [D,H,W] or [1,1,D,H,W]; stored with the W/H/D header order.
void write_volume(const std::string& path, const Tensor<double>& vol,
                  VolumeDtype dtype = VolumeDtype::F64);

void write_labels(const std::string& path, const Tensor<uint16_t>& labels);

/// Reads f32/f64 volumes as [1,1,D,H,W] doubles.
Tensor<double> read_volume(const std::string& path);

/// Reads dtype-2 label volumes as [1,1,D,H,W].
Tensor<uint16_t> read_labels(const std::string& path);

VolumeDtype peek_volume_dtype(const std::string& path);

} // namespace gambas
