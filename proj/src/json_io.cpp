#include "lcqp/json_io.hpp"

#include <fstream>
#include <sstream>

namespace lcqp {

namespace {

nlohmann::json triplets_to_json(const SparseMatrix& mat) {
  nlohmann::json arr = nlohmann::json::array();
  SparseMatrix sorted = mat;
  sorted.sort_entries();
  for (const SparseEntry& e : sorted.entries)
    arr.push_back(nlohmann::json::array({e.row, e.col, e.value}));
  return arr;
}

SparseMatrix triplets_from_json(const nlohmann::json& arr, int rows, int cols,
                                bool symmetric, const char* name) {
  SparseMatrix mat;
  mat.rows = rows;
  mat.cols = cols;
  mat.symmetric = symmetric;
  if (!arr.is_array())
    throw ValidationError(std::string(name) + " must be an array of triplets");
  for (const auto& t : arr) {
    if (!t.is_array() || t.size() != 3)
      throw ValidationError(std::string(name) + " entry is not an [i, j, v] triplet");
    if (!t[0].is_number_integer() || !t[1].is_number_integer())
      throw ValidationError(std::string(name) + " indices must be integers");
    mat.add(t[0].get<int>(), t[1].get<int>(), t[2].get<double>());
  }
  mat.sort_entries();
  return mat;
}

std::vector<double> vector_from_json(const nlohmann::json& arr, const char* name) {
  if (!arr.is_array())
    throw ValidationError(std::string(name) + " must be an array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number())
      throw ValidationError(std::string(name) + " has a non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

nlohmann::json instance_to_json(const LcqpInstance& inst) {
  nlohmann::json j;
  j["n"] = inst.n;
  j["m"] = inst.m;
  j["q"] = triplets_to_json(inst.q);
  j["a"] = triplets_to_json(inst.a);
  j["b"] = inst.b;
  j["c"] = inst.c;
  if (!inst.x_star.empty()) j["x_star"] = inst.x_star;
  if (!inst.trajectory.empty()) j["trajectory"] = inst.trajectory;
  return j;
}

LcqpInstance instance_from_json(const nlohmann::json& j) {
  LcqpInstance inst;
  if (!j.is_object()) throw ValidationError("instance JSON must be an object");
  for (const char* key : {"n", "m", "q", "a", "b", "c"})
    if (!j.contains(key))
      throw ValidationError(std::string("instance JSON missing key '") + key + "'");
  inst.n = j.at("n").get<int>();
  inst.m = j.at("m").get<int>();
  inst.q = triplets_from_json(j.at("q"), inst.n, inst.n, /*symmetric=*/true, "q");
  inst.a = triplets_from_json(j.at("a"), inst.m, inst.n, /*symmetric=*/false, "a");
  inst.b = vector_from_json(j.at("b"), "b");
  inst.c = vector_from_json(j.at("c"), "c");
  if (j.contains("x_star")) inst.x_star = vector_from_json(j.at("x_star"), "x_star");
  if (j.contains("trajectory")) {
    for (const auto& row : j.at("trajectory"))
      inst.trajectory.push_back(vector_from_json(row, "trajectory"));
  }
  validate(inst);
  return inst;
}

void save_instance(const std::string& path, const LcqpInstance& inst) {
  save_json(path, instance_to_json(inst));
}

LcqpInstance load_instance(const std::string& path) {
  return instance_from_json(load_json(path));
}

nlohmann::json report_to_json(const SolveReport& report) {
  nlohmann::json j;
  j["x"] = report.x;
  j["objective"] = report.objective;
  j["iterations"] = report.iterations;
  j["kkt"] = {{"primal", report.kkt.primal},
              {"dual", report.kkt.dual},
              {"comp", report.kkt.comp}};
  j["wall_time_sec"] = report.wall_time_sec;
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SolveError(SolveError::Code::io, "cannot open for write: " + path);
  out << text;
  if (!out) throw SolveError(SolveError::Code::io, "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SolveError(SolveError::Code::io, "cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json load_json(const std::string& path) {
  return nlohmann::json::parse(read_text_file(path));
}

void save_json(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace lcqp
