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

#include "gambas/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace gambas {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'C', 'K', '1'};

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    GB_CHECK(is.good(), "checkpoint truncated");
    return v;
}

void write_record(std::ostream& os, const std::string& name, const Tensor<double>& t) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

std::pair<std::string, Tensor<double>> read_record(std::istream& is) {
    const uint32_t len = read_u32(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    GB_CHECK(is.good(), "checkpoint truncated");
    const uint32_t rank = read_u32(is);
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = read_u32(is);
    Tensor<double> t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    GB_CHECK(is.good(), "checkpoint truncated");
    return {std::move(name), std::move(t)};
}

} // namespace

void save_checkpoint(const std::string& path, const ParamStore<double>& params,
                     const Adam<double>* opt) {
    std::vector<std::pair<std::string, const Tensor<double>*>> records;
    Tensor<double> step_t;
    for (const auto& p : params.items) {
        records.emplace_back(p->name, &p->value);
        if (opt) {
            records.emplace_back("__adam_m/" + p->name, &p->m);
            records.emplace_back("__adam_v/" + p->name, &p->v);
        }
    }
    if (opt) {
        step_t = Tensor<double>::scalar(static_cast<double>(opt->steps_taken()));
        records.emplace_back("__step", &step_t);
    }
    std::sort(records.begin(), records.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::ofstream os(path, std::ios::binary);
    GB_CHECK(os.good(), "cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, static_cast<uint32_t>(records.size()));
    for (const auto& [name, t] : records) write_record(os, name, *t);
    GB_CHECK(os.good(), "checkpoint write failed: " + path);
}

std::map<std::string, Tensor<double>> read_checkpoint_records(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    GB_CHECK(is.good(), "cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    GB_CHECK(is.good() && std::memcmp(magic, kMagic, 4) == 0,
             "bad checkpoint magic in " + path);
    const uint32_t count = read_u32(is);
    std::map<std::string, Tensor<double>> out;
    for (uint32_t i = 0; i < count; ++i) {
        auto [name, t] = read_record(is);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

void load_checkpoint(const std::string& path, ParamStore<double>& params, Adam<double>* opt) {
    auto records = read_checkpoint_records(path);
    auto require = [&](const std::string& name) -> Tensor<double>& {
        auto it = records.find(name);
        GB_CHECK(it != records.end(), "checkpoint missing record: " + name);
        return it->second;
    };
    auto copy_into = [](const Tensor<double>& src, Tensor<double>& dst, const std::string& name) {
        GB_CHECK(src.shape() == dst.shape(),
                 "checkpoint shape mismatch for " + name + ": file " + shape_str(src.shape()) +
                     " vs model " + shape_str(dst.shape()));
        std::copy(src.begin(), src.end(), dst.begin());
    };
    for (auto& p : params.items) {
        copy_into(require(p->name), p->value, p->name);
        if (opt) {
            copy_into(require("__adam_m/" + p->name), p->m, p->name);
            copy_into(require("__adam_v/" + p->name), p->v, p->name);
        }
    }
    if (opt) {
        const Tensor<double>& st = require("__step");
        opt->set_steps_taken(static_cast<int64_t>(st[0]));
    }
}

} // namespace gambas
