#include "orseq/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace orseq {

const Tensor& Checkpoint::array(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return t;
  throw Error("checkpoint: no array named '" + name + "'");
}

bool Checkpoint::has_array(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return true;
  return false;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << kCheckpointHeader << '\n';
  out << "config " << ckpt.config.dump() << '\n';
  out << "arrays " << ckpt.arrays.size() << '\n';
  char buf[32];
  for (const auto& [name, t] : ckpt.arrays) {
    out << name << ' ' << t.rank();
    for (auto d : t.shape()) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", t[i]);
      if (i) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint '" + tmp + "'");
    write_checkpoint(out, ckpt);
    if (!out) throw Error("write failed for checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot move checkpoint into '" + path + "'");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader)
    throw Error("checkpoint: missing '" + std::string(kCheckpointHeader) + "' header");
  Checkpoint ckpt;
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0) throw Error("checkpoint: missing config line");
  try {
    ckpt.config = nlohmann::json::parse(line.substr(7));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: bad config: ") + e.what());
  }
  std::size_t count = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "arrays %zu", &count) != 1)
    throw Error("checkpoint: missing array count");
  for (std::size_t a = 0; a < count; ++a) {
    if (!std::getline(in, line)) throw Error("checkpoint: truncated before array " + std::to_string(a));
    std::istringstream head(line);
    std::string name;
    std::size_t rank = 0;
    head >> name >> rank;
    Shape shape(rank);
    for (auto& d : shape) head >> d;
    if (!head || rank == 0) throw Error("checkpoint: bad array header '" + line + "'");
    std::vector<double> values(shape_size(shape));
    if (!std::getline(in, line)) throw Error("checkpoint: missing values for '" + name + "'");
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (auto& v : values) {
      while (p < end && *p == ' ') ++p;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) throw Error("checkpoint: bad value in '" + name + "'");
      p = next;
    }
    ckpt.arrays.emplace_back(name, Tensor(shape, std::move(values)));
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint '" + path + "'");
  try {
    return read_checkpoint(in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

nlohmann::json dims_to_json(const ModelDims& d) {
  return {{"src_vocab", d.src_vocab}, {"tgt_vocab", d.tgt_vocab}, {"embed", d.embed}, {"hidden", d.hidden}};
}

ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  d.src_vocab = j.at("src_vocab").get<std::size_t>();
  d.tgt_vocab = j.at("tgt_vocab").get<std::size_t>();
  d.embed = j.at("embed").get<std::size_t>();
  d.hidden = j.at("hidden").get<std::size_t>();
  return d;
}

void add_params(Checkpoint& ckpt, const ModelParams& params, const std::string& prefix) {
  for (const auto& [name, t] : params.named()) ckpt.arrays.emplace_back(prefix + name, *t);
}

ModelParams read_params(const Checkpoint& ckpt, const ModelDims& dims, const std::string& prefix) {
  ModelParams m = ModelParams::zeros(dims);
  for (auto& [name, t] : m.named()) {
    const Tensor& stored = ckpt.array(prefix + name);
    if (stored.shape() != t->shape()) throw ShapeError("checkpoint array " + prefix + name, t->shape(), stored.shape());
    *t = stored;
  }
  return m;
}

}  // namespace orseq
