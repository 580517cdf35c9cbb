#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lcqp/types.hpp"

namespace lcqp {

enum class Family { generic, svm, portfolio };

const char* family_name(Family f);
Family family_from_name(const std::string& name);

struct GenConfig {
  Family family = Family::generic;
  int n = 8;
  int m = 4;
  double density_a = 0.5;   // keep-probability for A entries (svm: data sparsity tau)
  double density_q = 0.3;   // keep-probability for the quadratic factor entries
  int count = 1;
  std::uint64_t seed = 0;
  double svm_lambda = 1.0;  // hinge penalty weight, svm family only

  nlohmann::json to_json() const;
  static GenConfig from_json(const nlohmann::json& j);
};

// L L' + 1e-3 I, where L is unit-diagonal lower triangular and each
// off-diagonal entry (i > j, visited row-major) is kept with probability
// `density` and then drawn standard normal.  The shift keeps the smallest
// eigenvalue at or above 1e-3.  Returned with both triangles stored.
SparseMatrix make_sparse_spd(int n, double density, std::uint64_t seed);

// Families.  Dimensions in GenConfig are pre-conversion sizes; the returned
// instance is always in equality standard form:
//   generic:   A (m x n) with N(0,1) entries kept w.p. density_a (empty rows
//              redrawn), b, c ~ N(0,1), Q from make_sparse_spd; rows read as
//              Ax <= b and gain slack columns.
//   svm:       soft-margin classifier min w'w + lambda 1'xi over two
//              Gaussian point clouds (m points, n features, sparsity tau =
//              density_a, second parameter of the normal read as variance
//              1/(n tau)); variables (w+, w-, xi, surplus) give 2n + 2m
//              columns, m rows, and a purely diagonal Q.
//   portfolio: min x' Sigma x with budget 1'x = 1 and target return
//              mu'x = r, mu ~ N(0,1), r ~ U(0,1) redrawn until it lies
//              strictly inside (min mu, max mu); always m = 2 rows.
LcqpInstance gen_generic(const GenConfig& cfg, std::uint64_t seed);
LcqpInstance gen_svm(const GenConfig& cfg, std::uint64_t seed);
LcqpInstance gen_portfolio(const GenConfig& cfg, std::uint64_t seed);

// Instance `index` of a batch: family dispatch at stream cfg.seed + index,
// with a deterministic retry ladder when rank or feasibility checks fail.
LcqpInstance gen_instance(const GenConfig& cfg, int index);

// Writes instance_0000.json .. instance_NNNN.json plus manifest.json (config
// echo, per-file seeds); `extra` is merged into the manifest when given.
// Returns the instance file paths in index order.
std::vector<std::string> write_dataset(const std::string& dir, const GenConfig& cfg,
                                       const nlohmann::json& extra = nlohmann::json());

// Loads a dataset directory in manifest order (or sorted instance_*.json
// when no manifest is present).  Pairs are (filename, instance).
std::vector<std::pair<std::string, LcqpInstance>> load_dataset(const std::string& dir);

}  // namespace lcqp
