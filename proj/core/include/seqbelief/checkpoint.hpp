#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seqbelief/features.hpp"
#include "seqbelief/genmodel.hpp"
#include "seqbelief/inference.hpp"
#include "seqbelief/train_config.hpp"

namespace seqbelief {

/// Binary container: "SQBLCKPT", u32 version, u64 header length, a JSON
/// header whose "tensors" array maps name -> shape/offset, then the tensor
/// payloads as little-endian float64.
inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  std::string header_json;  // header without the "tensors" index
  std::vector<std::pair<std::string, Tensor>> tensors;
};

std::string encode_container(const Container& c);
Container decode_container(std::string_view bytes);

struct Checkpoint {
  std::uint32_t version = kContainerVersion;
  TrainConfig config;
  ScalerManifest scaler;
  GenParams gen;
  InfParams inf;
  std::vector<HistoryRow> history;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Generator-only file used by the synthetic data tool.
void save_generator(const std::filesystem::path& path, const GenParams& gen);
GenParams load_generator(const std::filesystem::path& path);
std::string serialize_generator(const GenParams& gen);
GenParams deserialize_generator(std::string_view bytes);

}  // namespace seqbelief
