#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>

#include "tgq/bench.hpp"
#include "tgq/errors.hpp"
#include "tgq/gradcheck.hpp"
#include "tgq/pipeline.hpp"
#include "tgq/regularizer.hpp"

namespace py = pybind11;
using namespace tgq;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Tensor::from({r, c}, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Tensor& t) {
  const auto shape = t.shape();
  std::vector<py::ssize_t> dims(shape.begin(), shape.end());
  Array out(dims);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Config make_config(const std::optional<std::filesystem::path>& path, const std::map<std::string, std::string>& overrides) {
  Config cfg = path ? load_config(*path) : Config{};
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

EmbeddingSet to_set(const std::vector<std::string>& ids, const Array& emb) {
  if (emb.ndim() != 2 || static_cast<std::size_t>(emb.shape(0)) != ids.size())
    throw DimensionError("embeddings must be len(ids) x dim");
  const auto dim = static_cast<std::size_t>(emb.shape(1));
  EmbeddingSet set(dim);
  for (std::size_t i = 0; i < ids.size(); ++i) set.add(ids[i], std::span<const double>(emb.data() + i * dim, dim));
  return set;
}

py::dict report_dict(const HitReport& r) {
  py::dict d;
  for (std::size_t i = 0; i < r.ks.size(); ++i) d[py::int_(r.ks[i])] = r.hit_rate[i];
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Connector training and evaluation core";

  auto base = py::register_exception<Error>(m, "TgqError");
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<LookupError>(m, "LookupError", base.ptr());

  m.def("config_entries",
        [](std::optional<std::filesystem::path> path, std::map<std::string, std::string> overrides) {
          return make_config(path, overrides).entries();
        },
        py::arg("path") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{},
        "Resolved config as a key -> value dict.");

  // losses and primitives
  m.def("info_nce", [](const Array& q, const Array& t, double tau) { return info_nce(to_tensor(q), to_tensor(t), tau).item(); },
        py::arg("queries"), py::arg("targets"), py::arg("tau") = 0.07);
  m.def("redundancy_loss",
        [](const Array& a, const Array& b, double eps) { return redundancy_loss(to_tensor(a), to_tensor(b), eps).item(); },
        py::arg("s_txt"), py::arg("s_rnd"), py::arg("eps") = 1e-5);
  m.def("centered_sigmoid", [](const Array& x) { return to_array(centered_sigmoid(to_tensor(x))); });
  m.def("t_g", [](std::size_t L, std::size_t kernel, std::size_t stride) {
    HqcConfig c;
    c.kernel = kernel;
    c.stride = stride;
    ParameterStore store(1);
    return Hqc(store, c, 2, true, false).t_g(L);
  }, py::arg("L"), py::arg("kernel"), py::arg("stride"));
  m.def("severity_spec", [](const std::string& name) {
    const auto s = severity_spec(parse_severity(name));
    return py::make_tuple(s.p_bg, s.p_overlay, s.n_overlays);
  }, "(p_bg, p_overlay, n_overlays) of a named severity");

  // retrieval
  m.def("evaluate",
        [](const std::vector<std::string>& ids, const Array& emb, const std::vector<std::pair<std::string, std::string>>& pairs,
           std::vector<std::size_t> ks) {
          std::vector<IdPair> p;
          for (const auto& [a, b] : pairs) p.push_back({a, b});
          return report_dict(evaluate(to_set(ids, emb), queries_from_pairs(p), ks));
        },
        py::arg("ids"), py::arg("embeddings"), py::arg("pairs"), py::arg("ks") = kDefaultKs,
        "Full-pool Hit Rate@K with self-exclusion; returns {K: rate}.");
  m.def("rank",
        [](const std::vector<std::string>& ids, const Array& emb, std::size_t query) {
          const EmbeddingSet set = to_set(ids, emb);
          if (query >= set.size()) throw LookupError("query index out of range");
          std::vector<std::string> out;
          for (std::size_t i : rank_naive(set, set.row(query), set.ids()[query])) out.push_back(set.ids()[i]);
          return out;
        },
        py::arg("ids"), py::arg("embeddings"), py::arg("query"), "Ranked ids for one pool row (itself excluded).");
  m.def("read_embeddings", [](const std::filesystem::path& prefix) {
    const EmbeddingSet set = read_embeddings(prefix);
    Array a(std::vector<py::ssize_t>{static_cast<py::ssize_t>(set.size()), static_cast<py::ssize_t>(set.dim())});
    for (std::size_t i = 0; i < set.size(); ++i) std::copy(set.row(i).begin(), set.row(i).end(), a.mutable_data() + i * set.dim());
    return py::make_tuple(set.ids(), a);
  });

  // pipeline
  m.def("gen_corpus",
        [](const std::filesystem::path& out, std::optional<std::filesystem::path> config,
           std::map<std::string, std::string> overrides, unsigned threads) {
          const Config cfg = make_config(config, overrides);
          py::gil_scoped_release release;
          generate_corpus_dir(cfg, out, threads);
        },
        py::arg("out"), py::arg("config") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{},
        py::arg("threads") = 1);
  m.def("corrupt_corpus",
        [](const std::filesystem::path& in, const std::filesystem::path& out, const std::string& severity,
           std::uint64_t seed, unsigned threads) {
          const auto spec = severity_spec(parse_severity(severity), seed);
          py::gil_scoped_release release;
          corrupt_corpus_dir(in, out / severity_name(spec.severity), spec, threads);
        },
        py::arg("input"), py::arg("out"), py::arg("severity"), py::arg("seed"), py::arg("threads") = 1,
        "Mirrors the corpus under out/<severity>/ like the CLI.");
  m.def("train",
        [](const std::filesystem::path& corpus, const std::filesystem::path& out, const std::string& variant,
           std::optional<std::filesystem::path> config, std::map<std::string, std::string> overrides) {
          Config cfg = make_config(config, overrides);
          cfg.train.variant = parse_variant(variant);
          py::gil_scoped_release release;
          const CorpusDir dir = read_corpus_dir(corpus);
          const Dataset data = encode_corpus_dir(dir, Encoder(cfg.encoder), cfg, true);
          TgqModel model(cfg, cfg.train.variant, cfg.train.seed);
          std::filesystem::create_directories(out);
          std::ofstream(out / "config.txt") << cfg.to_text();
          TrainOptions opt;
          opt.out_dir = out;
          const TrainResult r = train(model, data, dir.train_pairs, cfg.train, opt);
          std::vector<double> losses;
          for (const auto& s : r.log) losses.push_back(s.loss);
          return losses;
        },
        py::arg("corpus"), py::arg("out"), py::arg("variant") = "e", py::arg("config") = py::none(),
        py::arg("overrides") = std::map<std::string, std::string>{}, "Trains one variant; returns the per-step loss.");
  m.def("embed",
        [](const std::filesystem::path& ckpt, const std::filesystem::path& corpus, bool all) {
          const auto model = load_trained_model(ckpt);
          const CorpusDir dir = read_corpus_dir(corpus);
          const Dataset data = encode_corpus_dir(dir, Encoder(model->config().encoder), model->config(), false);
          std::vector<std::string> ids;
          if (all || dir.blocklist.empty())
            for (const auto& it : dir.items) ids.push_back(it.item_id);
          else
            ids.assign(dir.blocklist.begin(), dir.blocklist.end());
          const EmbeddingSet set = embed_dataset(*model, data, ids);
          Array a(std::vector<py::ssize_t>{static_cast<py::ssize_t>(set.size()), static_cast<py::ssize_t>(set.dim())});
          for (std::size_t i = 0; i < set.size(); ++i)
            std::copy(set.row(i).begin(), set.row(i).end(), a.mutable_data() + i * set.dim());
          return py::make_tuple(set.ids(), a);
        },
        py::arg("ckpt"), py::arg("corpus"), py::arg("all") = false, "Returns (ids, embeddings).");
  m.def("gradcheck", [](const std::string& scope) {
    std::vector<std::tuple<std::string, std::size_t, double>> out;
    for (const auto& g : gradcheck(gradcheck_config(), scope)) out.emplace_back(g.name, g.checked, g.max_rel_error);
    return out;
  }, py::arg("scope") = "all", "(group, coordinates, max relative error) per parameter group.");
  m.def("directory_hash", [](const std::filesystem::path& dir) { return directory_hash(dir); });
}
