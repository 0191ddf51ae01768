#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "orseq/model.hpp"
#include "orseq/tensor.hpp"

namespace orseq {

/// Text container:
///
///   ORSEQ-CKPT v1
///   config <one-line JSON>
///   arrays <count>
///   <name> <rank> <extent>...     one header line per array, followed by
///   <value> <value> ...           one line of row-major values (%.17g)
///
/// Doubles are written with 17 significant digits, so a save/load cycle is
/// exact.
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

inline constexpr const char* kCheckpointHeader = "ORSEQ-CKPT v1";

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json dims_to_json(const ModelDims& dims);
ModelDims dims_from_json(const nlohmann::json& j);

/// Appends every model array under its ModelParams name.
void add_params(Checkpoint& ckpt, const ModelParams& params, const std::string& prefix = "");
/// Rebuilds parameters of the given dims from `prefix`-named arrays; a
/// missing array or a shape disagreement is an error.
ModelParams read_params(const Checkpoint& ckpt, const ModelDims& dims, const std::string& prefix = "");

}  // namespace orseq
