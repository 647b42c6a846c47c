// Copyright 2026 The lagdyna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Binary weight checkpoints. Layout (all integers u32, all reals f64,
// little-endian):
//
//   "LNN1" | role | activation | width_count | widths[width_count]
//          | weights[param_count] | extras_count | extras[extras_count]
//
// `extras` carries values that live outside the network proper, e.g. the
// policy log standard deviation.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "lagdyna/errors.hpp"
#include "lagdyna/nn.hpp"

namespace lagdyna {

enum class CheckpointRole : std::uint32_t {
  kLagrangian = 0,
  kPolicy = 1,
  kCritic = 2,
};

struct Checkpoint {
  CheckpointRole role = CheckpointRole::kLagrangian;
  ScalarNetwork net;
  std::vector<double> extras;
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

inline void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DomainError("truncated checkpoint");
  return v;
}
inline double get_f64(std::istream& is) {
  double v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DomainError("truncated checkpoint");
  return v;
}

}  // namespace detail

inline constexpr std::array<char, 4> kCheckpointMagic = {'L', 'N', 'N', '1'};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write(kCheckpointMagic.data(), 4);
  detail::put_u32(os, static_cast<std::uint32_t>(ck.role));
  detail::put_u32(os, static_cast<std::uint32_t>(ck.net.arch().activation));
  const auto& widths = ck.net.arch().widths;
  detail::put_u32(os, static_cast<std::uint32_t>(widths.size()));
  for (int w : widths) detail::put_u32(os, static_cast<std::uint32_t>(w));
  for (Eigen::Index i = 0; i < ck.net.weights().size(); ++i)
    detail::put_f64(os, ck.net.weights()[i]);
  detail::put_u32(os, static_cast<std::uint32_t>(ck.extras.size()));
  for (double e : ck.extras) detail::put_f64(os, e);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kCheckpointMagic)
    throw DomainError("not an LNN1 checkpoint");
  Checkpoint ck;
  ck.role = static_cast<CheckpointRole>(detail::get_u32(is));
  NetworkArch arch;
  const std::uint32_t act = detail::get_u32(is);
  if (act > static_cast<std::uint32_t>(Activation::kLinear))
    throw DomainError("unknown activation id in checkpoint");
  arch.activation = static_cast<Activation>(act);
  const std::uint32_t count = detail::get_u32(is);
  if (count < 2 || count > 64) throw DomainError("implausible layer count in checkpoint");
  for (std::uint32_t i = 0; i < count; ++i)
    arch.widths.push_back(static_cast<int>(detail::get_u32(is)));
  arch.validate();
  Eigen::VectorXd w(static_cast<Eigen::Index>(arch.param_count()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = detail::get_f64(is);
  ck.net = ScalarNetwork(arch, std::move(w));
  const std::uint32_t extras = detail::get_u32(is);
  for (std::uint32_t i = 0; i < extras; ++i) ck.extras.push_back(detail::get_f64(is));
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace lagdyna
