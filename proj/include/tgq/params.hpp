#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tgq/tensor.hpp"

namespace tgq {

struct Parameter {
  std::string name;  // dotted path, e.g. "hqc.layer0.cross_attn.wq"
  Tensor tensor;
};

/// Owns every trainable tensor of a model, keyed by a unique dotted name.
///
/// Initial values come from a per-name random stream, so adding or removing
/// a parameter never shifts the initialisation of any other one.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  /// uniform(-a, a) with a = 1/sqrt(fan_in).
  Tensor uniform(const std::string& name, Shape shape, std::size_t fan_in);
  Tensor constant(const std::string& name, Shape shape, double value);

  bool contains(std::string_view name) const;
  Tensor get(std::string_view name) const;
  const std::vector<Parameter>& params() const { return params_; }
  std::vector<std::string> names() const;
  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter> scope(std::string_view prefix) const;
  std::size_t scalar_count() const;
  std::uint64_t seed() const { return seed_; }

  void zero_grad();

 private:
  Tensor add(const std::string& name, Tensor t);

  std::uint64_t seed_;
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Checkpoint directory: manifest.tsv (name, file, shape) plus one TGQT blob
/// per parameter under params/.
void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& store);
/// Overwrites every parameter in `store` from `dir`. Names and shapes must
/// match the manifest exactly.
void load_checkpoint(const std::filesystem::path& dir, ParameterStore& store);

}  // namespace tgq
