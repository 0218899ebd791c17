#pragma once

// Binary layout, little-endian throughout:
//   "VOGUE01"                         7 bytes
//   u32 version                       currently 1
//   u64 header length, header JSON    metadata + tensor manifest (name, dtype, shape)
//   raw tensor arrays                 in manifest order
//   u64 FNV-1a of every preceding byte

#include <cstdint>
#include <string>

#include "json.hpp"
#include "vogue/adamw.hpp"
#include "vogue/policy.hpp"

namespace vogue {

inline constexpr const char* kCheckpointMagic = "VOGUE01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class Real>
struct Checkpoint {
  PolicyConfig policy;
  PolicyParams<Real> params;
  AdamWState<Real> adam;
  nlohmann::json meta = nlohmann::json::object();  // free-form (step, run info)
};

template <class Real>
void save_checkpoint(const std::string& path, const Checkpoint<Real>& ckpt);

// Refuses bad magic (FormatError), checksum (ChecksumError), version
// (VersionError) and a dtype other than Real (FormatError).
template <class Real>
Checkpoint<Real> load_checkpoint(const std::string& path);

// "f32" or "f64", after the same integrity checks.
std::string checkpoint_precision(const std::string& path);

}  // namespace vogue
