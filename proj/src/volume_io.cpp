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

#include "gambas/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace gambas {

static_assert(std::endian::native == std::endian::little,
              "volume serialization assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'V', 'O', 'L', '1'};

struct Header {
    uint32_t w, h, d;
    VolumeDtype dtype;
};

Header read_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    GB_CHECK(is.good() && std::memcmp(magic, kMagic, 4) == 0, "bad volume magic in " + path);
    Header hd{};
    is.read(reinterpret_cast<char*>(&hd.w), 4);
    is.read(reinterpret_cast<char*>(&hd.h), 4);
    is.read(reinterpret_cast<char*>(&hd.d), 4);
    uint8_t dt = 0;
    is.read(reinterpret_cast<char*>(&dt), 1);
    GB_CHECK(is.good(), "volume header truncated in " + path);
    GB_CHECK(dt <= 2, "unknown volume dtype code " + std::to_string(dt) + " in " + path);
    GB_CHECK(hd.w > 0 && hd.h > 0 && hd.d > 0, "volume header has zero extent in " + path);
    hd.dtype = static_cast<VolumeDtype>(dt);
    return hd;
}

void write_header(std::ostream& os, uint32_t w, uint32_t h, uint32_t d, VolumeDtype dtype) {
    os.write(kMagic, 4);
    os.write(reinterpret_cast<const char*>(&w), 4);
    os.write(reinterpret_cast<const char*>(&h), 4);
    os.write(reinterpret_cast<const char*>(&d), 4);
    const uint8_t dt = static_cast<uint8_t>(dtype);
    os.write(reinterpret_cast<const char*>(&dt), 1);
}

template <typename S>
void spatial_dims(const Tensor<S>& vol, uint32_t& w, uint32_t& h, uint32_t& d) {
    const Shape& s = vol.shape();
    GB_CHECK(s.size() == 3 || (s.size() == 5 && s[0] == 1 && s[1] == 1),
             "volume must be [D,H,W] or [1,1,D,H,W], got " + shape_str(s));
    const size_t o = s.size() - 3;
    d = static_cast<uint32_t>(s[o]);
    h = static_cast<uint32_t>(s[o + 1]);
    w = static_cast<uint32_t>(s[o + 2]);
}

} // namespace

void write_volume(const std::string& path, const Tensor<double>& vol, VolumeDtype dtype) {
    GB_CHECK(dtype != VolumeDtype::U16, "use write_labels for label volumes");
    uint32_t w, h, d;
    spatial_dims(vol, w, h, d);
    std::ofstream os(path, std::ios::binary);
    GB_CHECK(os.good(), "cannot open volume for writing: " + path);
    write_header(os, w, h, d, dtype);
    if (dtype == VolumeDtype::F64) {
        os.write(reinterpret_cast<const char*>(vol.data()),
                 static_cast<std::streamsize>(vol.numel() * sizeof(double)));
    } else {
        std::vector<float> buf(vol.numel());
        for (int64_t i = 0; i < vol.numel(); ++i) buf[i] = static_cast<float>(vol[i]);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    GB_CHECK(os.good(), "volume write failed: " + path);
}

void write_labels(const std::string& path, const Tensor<uint16_t>& labels) {
    uint32_t w, h, d;
    spatial_dims(labels, w, h, d);
    std::ofstream os(path, std::ios::binary);
    GB_CHECK(os.good(), "cannot open volume for writing: " + path);
    write_header(os, w, h, d, VolumeDtype::U16);
    os.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.numel() * sizeof(uint16_t)));
    GB_CHECK(os.good(), "volume write failed: " + path);
}

Tensor<double> read_volume(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    GB_CHECK(is.good(), "cannot open volume: " + path);
    const Header hd = read_header(is, path);
    GB_CHECK(hd.dtype != VolumeDtype::U16, "volume " + path + " holds labels; use read_labels");
    Tensor<double> vol({1, 1, hd.d, hd.h, hd.w});
    if (hd.dtype == VolumeDtype::F64) {
        is.read(reinterpret_cast<char*>(vol.data()),
                static_cast<std::streamsize>(vol.numel() * sizeof(double)));
    } else {
        std::vector<float> buf(vol.numel());
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        for (int64_t i = 0; i < vol.numel(); ++i) vol[i] = buf[i];
    }
    GB_CHECK(is.good(), "volume payload truncated in " + path);
    return vol;
}

Tensor<uint16_t> read_labels(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    GB_CHECK(is.good(), "cannot open volume: " + path);
    const Header hd = read_header(is, path);
    GB_CHECK(hd.dtype == VolumeDtype::U16, "volume " + path + " is not a label volume");
    Tensor<uint16_t> labels({1, 1, hd.d, hd.h, hd.w});
    is.read(reinterpret_cast<char*>(labels.data()),
            static_cast<std::streamsize>(labels.numel() * sizeof(uint16_t)));
    GB_CHECK(is.good(), "volume payload truncated in " + path);
    return labels;
}

VolumeDtype peek_volume_dtype(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    GB_CHECK(is.good(), "cannot open volume: " + path);
    return read_header(is, path).dtype;
}

} // namespace gambas
