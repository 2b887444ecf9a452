#include "tgq/params.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tgq/blob.hpp"
#include "tgq/errors.hpp"
#include "tgq/rng.hpp"

namespace tgq {

Tensor ParameterStore::add(const std::string& name, Tensor t) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  params_.push_back({name, t});
  return t;
}

Tensor ParameterStore::uniform(const std::string& name, Shape shape, std::size_t fan_in) {
  if (fan_in == 0) throw ConfigError("parameter " + name + ": fan_in must be positive");
  const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng rng = Rng::stream(seed_, name);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-a, a);
  return add(name, Tensor::from(std::move(shape), std::move(data), true));
}

Tensor ParameterStore::constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value, true));
}

bool ParameterStore::contains(std::string_view name) const { return index_.contains(name); }

Tensor ParameterStore::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("no parameter named " + std::string(name));
  return params_[it->second].tensor;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : index_) out.push_back(name);
  return out;
}

std::vector<Parameter> ParameterStore::scope(std::string_view prefix) const {
  std::vector<Parameter> out;
  for (const auto& p : params_)
    if (std::string_view(p.name).starts_with(prefix)) out.push_back(p);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& store) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "params", ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.tsv").string());
  for (const auto& name : store.names()) {
    const Tensor t = store.get(name);
    const std::string file = "params/" + name + ".tgqt";
    write_blob(dir / file, t);
    manifest << name << '\t' << file << '\t' << shape_str(t.shape()) << '\n';
  }
}

void load_checkpoint(const std::filesystem::path& dir, ParameterStore& store) {
  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IoError("missing checkpoint manifest: " + (dir / "manifest.tsv").string());
  std::map<std::string, std::string> files;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, file;
    std::getline(ls, name, '\t');
    std::getline(ls, file, '\t');
    files[name] = file;
  }
  for (const auto& p : store.params()) {
    auto it = files.find(p.name);
    if (it == files.end()) throw LookupError("checkpoint " + dir.string() + " lacks parameter " + p.name);
    const Tensor loaded = read_blob(dir / it->second);
    if (loaded.shape() != p.tensor.shape())
      throw DimensionError("checkpoint parameter " + p.name + " has shape " +
                           shape_str(loaded.shape()) + ", model expects " +
                           shape_str(p.tensor.shape()));
    Tensor dst = p.tensor;
    auto out = dst.mutable_data();
    std::copy(loaded.data().begin(), loaded.data().end(), out.begin());
  }
  if (files.size() != store.params().size())
    throw LookupError("checkpoint " + dir.string() + " has " + std::to_string(files.size()) +
                      " parameters, model has " + std::to_string(store.params().size()));
}

}  // namespace tgq
