#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcqp/graph.hpp"

namespace lcqp {

// Message-passing network over a ProblemGraph.  Two wirings share the code:
//
//   feas: bipartite graph, head reads a displacement per variable;
//   ipm:  tripartite graph (global node), head reads the next iterate.
//
// One round updates constraints, then the global node, then variables.  In
// the default async schedule each receiver consumes the freshest available
// source (constraints see layer l-1, the global node sees this round's
// constraints, variables see this round's constraints and global); the sync
// flag makes every receiver consume layer l-1.  A message is an affine map
// of [source embedding ; edge weight] and aggregation is a plain sum in
// sorted neighbour order (optionally a mean).  Every affine map is followed
// by a ReLU except the final head layer.  Layer parameters are shared across
// outer iterations; only x_prev changes between them.

enum class Mode { feas, ipm };
enum class SyncMode { async, sync };
enum class Aggregation { sum, mean };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& s);

struct MpnnConfig {
  Mode mode = Mode::feas;
  SyncMode sync = SyncMode::async;
  Aggregation agg = Aggregation::sum;
  int layers = 4;  // L
  int width = 32;  // d
};

struct Affine {
  int out = 0, in = 0;
  std::vector<double> w;  // row-major, out x in
  std::vector<double> b;  // out

  void resize(int out_, int in_) {
    out = out_;
    in = in_;
    w.assign(static_cast<std::size_t>(out_) * in_, 0.0);
    b.assign(static_cast<std::size_t>(out_), 0.0);
  }
};

struct LayerParams {
  Affine msg_v_to_c, msg_c_to_v, msg_v_to_v;
  Affine msg_g_to_c, msg_g_to_v, msg_v_to_g, msg_c_to_g;  // tripartite only
  Affine upd_c, upd_v, upd_g;                             // upd_g tripartite only
};

struct MpnnModel {
  MpnnConfig cfg;
  Affine embed_c;  // 1 -> d lift of b_i
  Affine embed_v;  // 2 -> d lift of [c_j, x_prev_j]
  std::vector<LayerParams> layers;
  Affine head1, head2;  // d -> d -> 1
};

// He-style normal init (std sqrt(2/fan_in)), zero biases, draws in the fixed
// parameter enumeration order from the given stream.
MpnnModel init_model(const MpnnConfig& cfg, std::uint64_t seed);

// Same-shape zeroed parameter container for gradients.
MpnnModel make_grads(const MpnnModel& model);
void zero_grads(MpnnModel& grads);

// Fixed enumeration order over parameter blocks (used by Adam, serialization
// and the finite-difference checks): embed_c, embed_v, per layer the message
// affines then the updates, then the two head layers.
void for_each_affine(MpnnModel& model, const std::function<void(Affine&)>& fn);
void for_each_affine(const MpnnModel& model, const std::function<void(const Affine&)>& fn);
std::size_t param_count(const MpnnModel& model);

// Scratch state of one forward pass, kept so backward never recomputes.
struct MpnnCache {
  std::vector<std::vector<double>> hc, hv, hg;  // embeddings per level 0..L
  std::vector<std::vector<double>> uc, uv, ug;  // update inputs per level 1..L
  std::vector<std::vector<double>> msg_vc, msg_cv, msg_vv;  // per level 1..L
  std::vector<std::vector<double>> msg_gc, msg_gv, msg_vg, msg_cg;
  std::vector<double> head_hidden;  // n x d
  std::vector<double> output;       // n
  std::vector<double> x_prev;
};

void forward(const MpnnModel& model, const ProblemGraph& graph,
             const std::vector<double>& x_prev, MpnnCache& cache);

std::vector<double> predict(const MpnnModel& model, const ProblemGraph& graph,
                            const std::vector<double>& x_prev);

// Reverse pass from d(loss)/d(output); accumulates into `grads`.
void backward(const MpnnModel& model, const ProblemGraph& graph,
              const MpnnCache& cache, const std::vector<double>& grad_out,
              MpnnModel& grads);

// Sum-of-squares loss of (output + offset) against target; offset may be
// empty (treated as zero).  Returns the loss and accumulates gradients.
double loss_and_grad(const MpnnModel& model, const ProblemGraph& graph,
                     const std::vector<double>& x_prev,
                     const std::vector<double>& target,
                     const std::vector<double>& offset, MpnnModel& grads,
                     MpnnCache& cache);

struct AdamState {
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;  // flat, parameter enumeration order
};

void adam_step(MpnnModel& model, const MpnnModel& grads, AdamState& state, double lr);

// On-disk schema: {"mode", "sync_mode", "aggregation", "L", "d",
// "embed": {...}, "layers": [{...}, ...], "head": [{"w", "b"}, {"w", "b"}]}
// with weights flattened row-major.
nlohmann::json model_to_json(const MpnnModel& model);
MpnnModel model_from_json(const nlohmann::json& j);
void save_model(const std::string& path, const MpnnModel& model);
MpnnModel load_model(const std::string& path);

}  // namespace lcqp
