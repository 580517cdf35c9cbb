#include "lcqp/mpnn.hpp"

#include <cmath>

#include "lcqp/json_io.hpp"
#include "lcqp/rng.hpp"

namespace lcqp {

const char* mode_name(Mode m) { return m == Mode::feas ? "feas" : "ipm"; }

Mode mode_from_name(const std::string& s) {
  if (s == "feas") return Mode::feas;
  if (s == "ipm") return Mode::ipm;
  throw ValidationError("unknown mode '" + s + "'");
}

namespace {

// y = relu(W [src ; wgt] + b) for a message; the edge weight is the last
// input column.
inline void message_forward(const Affine& f, const double* src, double wgt,
                            double* out) {
  const int d_in = f.in - 1;
  for (int r = 0; r < f.out; ++r) {
    const double* row = f.w.data() + static_cast<std::size_t>(r) * f.in;
    double acc = f.b[r] + row[d_in] * wgt;
    for (int k = 0; k < d_in; ++k) acc += row[k] * src[k];
    out[r] = acc > 0.0 ? acc : 0.0;
  }
}

// Reverse of message_forward.  `dmsg` is the gradient on the post-ReLU
// output; `msg` gates the ReLU.  Accumulates into the parameter gradient and
// the source embedding gradient.
inline void message_backward(const Affine& f, Affine& df, const double* src,
                             double wgt, const double* msg, const double* dmsg,
                             double* dsrc) {
  const int d_in = f.in - 1;
  for (int r = 0; r < f.out; ++r) {
    if (msg[r] <= 0.0) continue;
    const double g = dmsg[r];
    if (g == 0.0) continue;
    const double* row = f.w.data() + static_cast<std::size_t>(r) * f.in;
    double* drow = df.w.data() + static_cast<std::size_t>(r) * f.in;
    for (int k = 0; k < d_in; ++k) {
      drow[k] += g * src[k];
      dsrc[k] += g * row[k];
    }
    drow[d_in] += g * wgt;
    df.b[r] += g;
  }
}

// y = relu(W u + b) on a materialized concat input.
inline void update_forward(const Affine& f, const double* u, double* out) {
  for (int r = 0; r < f.out; ++r) {
    const double* row = f.w.data() + static_cast<std::size_t>(r) * f.in;
    double acc = f.b[r];
    for (int k = 0; k < f.in; ++k) acc += row[k] * u[k];
    out[r] = acc > 0.0 ? acc : 0.0;
  }
}

inline void update_backward(const Affine& f, Affine& df, const double* u,
                            const double* h, const double* dh, double* du) {
  for (int r = 0; r < f.out; ++r) {
    if (h[r] <= 0.0) continue;
    const double g = dh[r];
    if (g == 0.0) continue;
    const double* row = f.w.data() + static_cast<std::size_t>(r) * f.in;
    double* drow = df.w.data() + static_cast<std::size_t>(r) * f.in;
    for (int k = 0; k < f.in; ++k) {
      drow[k] += g * u[k];
      du[k] += g * row[k];
    }
    df.b[r] += g;
  }
}

void shape_model(MpnnModel& model) {
  const int d = model.cfg.width;
  const bool tri = model.cfg.mode == Mode::ipm;
  model.embed_c.resize(d, 1);
  model.embed_v.resize(d, 2);
  model.layers.resize(static_cast<std::size_t>(model.cfg.layers));
  for (LayerParams& layer : model.layers) {
    layer.msg_v_to_c.resize(d, d + 1);
    layer.msg_c_to_v.resize(d, d + 1);
    layer.msg_v_to_v.resize(d, d + 1);
    if (tri) {
      layer.msg_g_to_c.resize(d, d + 1);
      layer.msg_g_to_v.resize(d, d + 1);
      layer.msg_v_to_g.resize(d, d + 1);
      layer.msg_c_to_g.resize(d, d + 1);
      layer.upd_c.resize(d, 3 * d);
      layer.upd_g.resize(d, 3 * d);
      layer.upd_v.resize(d, 4 * d);
    } else {
      layer.upd_c.resize(d, 2 * d);
      layer.upd_v.resize(d, 3 * d);
    }
  }
  model.head1.resize(d, d);
  model.head2.resize(1, d);
}

}  // namespace

MpnnModel init_model(const MpnnConfig& cfg, std::uint64_t seed) {
  if (cfg.width < 1 || cfg.layers < 1)
    throw ValidationError("model needs width >= 1 and layers >= 1");
  MpnnModel model;
  model.cfg = cfg;
  shape_model(model);
  Rng rng(seed);
  for_each_affine(model, [&rng](Affine& f) {
    const double scale = std::sqrt(2.0 / static_cast<double>(f.in));
    for (double& w : f.w) w = scale * rng.normal();
  });
  return model;
}

MpnnModel make_grads(const MpnnModel& model) {
  MpnnModel grads;
  grads.cfg = model.cfg;
  shape_model(grads);
  return grads;
}

void zero_grads(MpnnModel& grads) {
  for_each_affine(grads, [](Affine& f) {
    std::fill(f.w.begin(), f.w.end(), 0.0);
    std::fill(f.b.begin(), f.b.end(), 0.0);
  });
}

void for_each_affine(MpnnModel& model, const std::function<void(Affine&)>& fn) {
  fn(model.embed_c);
  fn(model.embed_v);
  for (LayerParams& layer : model.layers) {
    fn(layer.msg_v_to_c);
    fn(layer.msg_c_to_v);
    fn(layer.msg_v_to_v);
    if (model.cfg.mode == Mode::ipm) {
      fn(layer.msg_g_to_c);
      fn(layer.msg_g_to_v);
      fn(layer.msg_v_to_g);
      fn(layer.msg_c_to_g);
    }
    fn(layer.upd_c);
    if (model.cfg.mode == Mode::ipm) fn(layer.upd_g);
    fn(layer.upd_v);
  }
  fn(model.head1);
  fn(model.head2);
}

void for_each_affine(const MpnnModel& model,
                     const std::function<void(const Affine&)>& fn) {
  for_each_affine(const_cast<MpnnModel&>(model),
                  [&fn](Affine& f) { fn(static_cast<const Affine&>(f)); });
}

std::size_t param_count(const MpnnModel& model) {
  std::size_t total = 0;
  for_each_affine(model, [&total](const Affine& f) { total += f.w.size() + f.b.size(); });
  return total;
}

namespace {

void ensure_cache(MpnnCache& cache, const MpnnModel& model, const ProblemGraph& g) {
  const int d = model.cfg.width;
  const int levels = model.cfg.layers + 1;
  const bool tri = model.cfg.mode == Mode::ipm;
  const std::size_t vc_slots = g.a_edges.size();
  std::size_t vv_slots = 0;
  for (const auto& lst : g.var_vars) vv_slots += lst.size();

  auto fit = [](std::vector<std::vector<double>>& buf, int lv, std::size_t sz) {
    buf.resize(static_cast<std::size_t>(lv));
    for (auto& v : buf) v.assign(sz, 0.0);
  };
  fit(cache.hc, levels, static_cast<std::size_t>(g.m) * d);
  fit(cache.hv, levels, static_cast<std::size_t>(g.n) * d);
  fit(cache.hg, levels, tri ? static_cast<std::size_t>(d) : 0);
  fit(cache.uc, levels, static_cast<std::size_t>(g.m) * (tri ? 3 : 2) * d);
  fit(cache.uv, levels, static_cast<std::size_t>(g.n) * (tri ? 4 : 3) * d);
  fit(cache.ug, levels, tri ? static_cast<std::size_t>(3) * d : 0);
  fit(cache.msg_vc, levels, vc_slots * d);
  fit(cache.msg_cv, levels, vc_slots * d);
  fit(cache.msg_vv, levels, vv_slots * d);
  fit(cache.msg_gc, levels, tri ? static_cast<std::size_t>(g.m) * d : 0);
  fit(cache.msg_gv, levels, tri ? static_cast<std::size_t>(g.n) * d : 0);
  fit(cache.msg_vg, levels, tri ? static_cast<std::size_t>(g.n) * d : 0);
  fit(cache.msg_cg, levels, tri ? static_cast<std::size_t>(g.m) * d : 0);
  cache.head_hidden.assign(static_cast<std::size_t>(g.n) * d, 0.0);
  cache.output.assign(static_cast<std::size_t>(g.n), 0.0);
}

}  // namespace

void forward(const MpnnModel& model, const ProblemGraph& graph,
             const std::vector<double>& x_prev, MpnnCache& cache) {
  const MpnnConfig& cfg = model.cfg;
  const int d = cfg.width;
  const int n = graph.n;
  const int m = graph.m;
  const bool tri = cfg.mode == Mode::ipm;
  if (tri && !graph.has_global)
    throw ValidationError("tripartite model needs a graph with a global node");
  if (static_cast<int>(x_prev.size()) != n)
    throw ValidationError("x_prev has wrong length");
  const bool mean_agg = cfg.agg == Aggregation::mean;

  ensure_cache(cache, model, graph);
  cache.x_prev = x_prev;

  // Level-0 embeddings: affine lifts of the raw node features.
  for (int i = 0; i < m; ++i) {
    const double u[1] = {graph.b_feat[i]};
    update_forward(model.embed_c, u, cache.hc[0].data() + static_cast<std::size_t>(i) * d);
  }
  for (int j = 0; j < n; ++j) {
    const double u[2] = {graph.c_feat[j], x_prev[j]};
    update_forward(model.embed_v, u, cache.hv[0].data() + static_cast<std::size_t>(j) * d);
  }
  // hg[0] stays zero.

  std::vector<double> scratch(static_cast<std::size_t>(d));
  for (int l = 1; l <= cfg.layers; ++l) {
    const LayerParams& layer = model.layers[static_cast<std::size_t>(l - 1)];
    const std::vector<double>& hv_src = cache.hv[static_cast<std::size_t>(l - 1)];
    const std::vector<double>& hc_prev = cache.hc[static_cast<std::size_t>(l - 1)];
    const std::vector<double>& hg_prev = cache.hg[static_cast<std::size_t>(l - 1)];

    // Constraint nodes (sources all at l-1).
    std::size_t slot_vc = 0;
    for (int i = 0; i < m; ++i) {
      double* u = cache.uc[l].data() + static_cast<std::size_t>(i) * (tri ? 3 : 2) * d;
      const double* h_prev = hc_prev.data() + static_cast<std::size_t>(i) * d;
      for (int k = 0; k < d; ++k) u[k] = h_prev[k];
      double* agg = u + d;
      const auto& nbrs = graph.cons_vars[i];
      for (const auto& [v, w] : nbrs) {
        double* msg = cache.msg_vc[l].data() + slot_vc * d;
        message_forward(layer.msg_v_to_c, hv_src.data() + static_cast<std::size_t>(v) * d, w, msg);
        for (int k = 0; k < d; ++k) agg[k] += msg[k];
        ++slot_vc;
      }
      if (mean_agg && !nbrs.empty())
        for (int k = 0; k < d; ++k) agg[k] /= static_cast<double>(nbrs.size());
      if (tri) {
        double* msg = cache.msg_gc[l].data() + static_cast<std::size_t>(i) * d;
        message_forward(layer.msg_g_to_c, hg_prev.data(), 1.0, msg);
        for (int k = 0; k < d; ++k) u[2 * d + k] = msg[k];
      }
      update_forward(layer.upd_c, u, cache.hc[l].data() + static_cast<std::size_t>(i) * d);
    }

    // Global node: variables at l-1, constraints at l (async) or l-1 (sync).
    if (tri) {
      const std::vector<double>& hc_for_g =
          cfg.sync == SyncMode::async ? cache.hc[l] : hc_prev;
      double* u = cache.ug[l].data();
      for (int k = 0; k < d; ++k) u[k] = hg_prev[k];
      double* agg_v = u + d;
      for (int j = 0; j < n; ++j) {
        double* msg = cache.msg_vg[l].data() + static_cast<std::size_t>(j) * d;
        message_forward(layer.msg_v_to_g, hv_src.data() + static_cast<std::size_t>(j) * d, 1.0, msg);
        for (int k = 0; k < d; ++k) agg_v[k] += msg[k];
      }
      if (mean_agg && n > 0)
        for (int k = 0; k < d; ++k) agg_v[k] /= static_cast<double>(n);
      double* agg_c = u + 2 * d;
      for (int i = 0; i < m; ++i) {
        double* msg = cache.msg_cg[l].data() + static_cast<std::size_t>(i) * d;
        message_forward(layer.msg_c_to_g, hc_for_g.data() + static_cast<std::size_t>(i) * d, 1.0, msg);
        for (int k = 0; k < d; ++k) agg_c[k] += msg[k];
      }
      if (mean_agg && m > 0)
        for (int k = 0; k < d; ++k) agg_c[k] /= static_cast<double>(m);
      update_forward(layer.upd_g, u, cache.hg[l].data());
    }

    // Variable nodes: Q neighbours at l-1, constraints and global fresh in
    // async mode.
    const std::vector<double>& hc_for_v =
        cfg.sync == SyncMode::async ? cache.hc[l] : hc_prev;
    const std::vector<double>& hg_for_v =
        (tri && cfg.sync == SyncMode::async) ? cache.hg[l] : hg_prev;
    std::size_t slot_vv = 0;
    std::size_t slot_cv = 0;
    for (int j = 0; j < n; ++j) {
      double* u = cache.uv[l].data() + static_cast<std::size_t>(j) * (tri ? 4 : 3) * d;
      const double* h_prev = hv_src.data() + static_cast<std::size_t>(j) * d;
      for (int k = 0; k < d; ++k) u[k] = h_prev[k];
      double* agg_q = u + d;
      const auto& qnbrs = graph.var_vars[j];
      for (const auto& [src, w] : qnbrs) {
        double* msg = cache.msg_vv[l].data() + slot_vv * d;
        message_forward(layer.msg_v_to_v, hv_src.data() + static_cast<std::size_t>(src) * d, w, msg);
        for (int k = 0; k < d; ++k) agg_q[k] += msg[k];
        ++slot_vv;
      }
      if (mean_agg && !qnbrs.empty())
        for (int k = 0; k < d; ++k) agg_q[k] /= static_cast<double>(qnbrs.size());
      double* agg_c = u + 2 * d;
      const auto& cnbrs = graph.var_cons[j];
      for (const auto& [src, w] : cnbrs) {
        double* msg = cache.msg_cv[l].data() + slot_cv * d;
        message_forward(layer.msg_c_to_v, hc_for_v.data() + static_cast<std::size_t>(src) * d, w, msg);
        for (int k = 0; k < d; ++k) agg_c[k] += msg[k];
        ++slot_cv;
      }
      if (mean_agg && !cnbrs.empty())
        for (int k = 0; k < d; ++k) agg_c[k] /= static_cast<double>(cnbrs.size());
      if (tri) {
        double* msg = cache.msg_gv[l].data() + static_cast<std::size_t>(j) * d;
        message_forward(layer.msg_g_to_v, hg_for_v.data(), 1.0, msg);
        for (int k = 0; k < d; ++k) u[3 * d + k] = msg[k];
      }
      update_forward(layer.upd_v, u, cache.hv[l].data() + static_cast<std::size_t>(j) * d);
    }
  }

  // Head: d -> d -> 1 per variable node, no activation on the last map.
  const std::vector<double>& hv_top = cache.hv[static_cast<std::size_t>(cfg.layers)];
  for (int j = 0; j < n; ++j) {
    double* hidden = cache.head_hidden.data() + static_cast<std::size_t>(j) * d;
    update_forward(model.head1, hv_top.data() + static_cast<std::size_t>(j) * d, hidden);
    double acc = model.head2.b[0];
    for (int k = 0; k < d; ++k) acc += model.head2.w[k] * hidden[k];
    cache.output[j] = acc;
  }
  (void)scratch;
}

std::vector<double> predict(const MpnnModel& model, const ProblemGraph& graph,
                            const std::vector<double>& x_prev) {
  MpnnCache cache;
  forward(model, graph, x_prev, cache);
  return cache.output;
}

void backward(const MpnnModel& model, const ProblemGraph& graph,
              const MpnnCache& cache, const std::vector<double>& grad_out,
              MpnnModel& grads) {
  const MpnnConfig& cfg = model.cfg;
  const int d = cfg.width;
  const int n = graph.n;
  const int m = graph.m;
  const bool tri = cfg.mode == Mode::ipm;
  const bool mean_agg = cfg.agg == Aggregation::mean;

  std::vector<std::vector<double>> dhc(static_cast<std::size_t>(cfg.layers) + 1),
      dhv(static_cast<std::size_t>(cfg.layers) + 1),
      dhg(static_cast<std::size_t>(cfg.layers) + 1);
  for (int l = 0; l <= cfg.layers; ++l) {
    dhc[l].assign(static_cast<std::size_t>(m) * d, 0.0);
    dhv[l].assign(static_cast<std::size_t>(n) * d, 0.0);
    dhg[l].assign(tri ? static_cast<std::size_t>(d) : 0, 0.0);
  }

  // Head.
  std::vector<double> dhidden(static_cast<std::size_t>(d));
  const std::vector<double>& hv_top = cache.hv[static_cast<std::size_t>(cfg.layers)];
  for (int j = 0; j < n; ++j) {
    const double g = grad_out[j];
    if (g == 0.0) continue;
    const double* hidden = cache.head_hidden.data() + static_cast<std::size_t>(j) * d;
    grads.head2.b[0] += g;
    for (int k = 0; k < d; ++k) {
      grads.head2.w[k] += g * hidden[k];
      dhidden[k] = g * model.head2.w[k];
    }
    update_backward(model.head1, grads.head1,
                    hv_top.data() + static_cast<std::size_t>(j) * d, hidden,
                    dhidden.data(),
                    dhv[cfg.layers].data() + static_cast<std::size_t>(j) * d);
  }

  std::vector<double> du(static_cast<std::size_t>(4) * d);
  std::vector<double> dmsg(static_cast<std::size_t>(d));
  for (int l = cfg.layers; l >= 1; --l) {
    const LayerParams& layer = model.layers[static_cast<std::size_t>(l - 1)];
    LayerParams& glayer = grads.layers[static_cast<std::size_t>(l - 1)];
    const std::vector<double>& hv_src = cache.hv[static_cast<std::size_t>(l - 1)];
    const std::vector<double>& hc_prev = cache.hc[static_cast<std::size_t>(l - 1)];
    const std::vector<double>& hg_prev = cache.hg[static_cast<std::size_t>(l - 1)];
    const bool fresh = cfg.sync == SyncMode::async;
    const std::vector<double>& hc_for_v = fresh ? cache.hc[l] : hc_prev;
    const std::vector<double>& hg_for_v = (tri && fresh) ? cache.hg[l] : hg_prev;
    std::vector<double>& dhc_for_v = fresh ? dhc[l] : dhc[l - 1];
    std::vector<double>& dhg_for_v = (tri && fresh) ? dhg[l] : dhg[l - 1];

    // Variables first: they consumed this round's constraint and global
    // embeddings, whose own reverse passes run afterwards.
    std::size_t slot_vv = 0;
    std::size_t slot_cv = 0;
    // Slots were assigned in forward receiver order, so recompute the same
    // running offsets.
    std::vector<std::size_t> vv_base(static_cast<std::size_t>(n)),
        cv_base(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      vv_base[j] = slot_vv;
      cv_base[j] = slot_cv;
      slot_vv += graph.var_vars[j].size();
      slot_cv += graph.var_cons[j].size();
    }
    const int uv_stride = (tri ? 4 : 3) * d;
    for (int j = 0; j < n; ++j) {
      const double* dh = dhv[l].data() + static_cast<std::size_t>(j) * d;
      const double* h = cache.hv[l].data() + static_cast<std::size_t>(j) * d;
      const double* u = cache.uv[l].data() + static_cast<std::size_t>(j) * uv_stride;
      std::fill(du.begin(), du.begin() + uv_stride, 0.0);
      update_backward(layer.upd_v, glayer.upd_v, u, h, dh, du.data());
      for (int k = 0; k < d; ++k)
        dhv[l - 1][static_cast<std::size_t>(j) * d + k] += du[k];

      const auto& qnbrs = graph.var_vars[j];
      const double qscale = (mean_agg && !qnbrs.empty())
                                ? 1.0 / static_cast<double>(qnbrs.size())
                                : 1.0;
      for (std::size_t e = 0; e < qnbrs.size(); ++e) {
        const auto& [src, w] = qnbrs[e];
        const double* msg = cache.msg_vv[l].data() + (vv_base[j] + e) * d;
        for (int k = 0; k < d; ++k) dmsg[k] = du[d + k] * qscale;
        message_backward(layer.msg_v_to_v, glayer.msg_v_to_v,
                         hv_src.data() + static_cast<std::size_t>(src) * d, w, msg,
                         dmsg.data(),
                         dhv[l - 1].data() + static_cast<std::size_t>(src) * d);
      }
      const auto& cnbrs = graph.var_cons[j];
      const double cscale = (mean_agg && !cnbrs.empty())
                                ? 1.0 / static_cast<double>(cnbrs.size())
                                : 1.0;
      for (std::size_t e = 0; e < cnbrs.size(); ++e) {
        const auto& [src, w] = cnbrs[e];
        const double* msg = cache.msg_cv[l].data() + (cv_base[j] + e) * d;
        for (int k = 0; k < d; ++k) dmsg[k] = du[2 * d + k] * cscale;
        message_backward(layer.msg_c_to_v, glayer.msg_c_to_v,
                         hc_for_v.data() + static_cast<std::size_t>(src) * d, w, msg,
                         dmsg.data(),
                         dhc_for_v.data() + static_cast<std::size_t>(src) * d);
      }
      if (tri) {
        const double* msg = cache.msg_gv[l].data() + static_cast<std::size_t>(j) * d;
        for (int k = 0; k < d; ++k) dmsg[k] = du[3 * d + k];
        message_backward(layer.msg_g_to_v, glayer.msg_g_to_v, hg_for_v.data(), 1.0,
                         msg, dmsg.data(), dhg_for_v.data());
      }
    }

    // Global node.
    if (tri) {
      const std::vector<double>& hc_for_g = fresh ? cache.hc[l] : hc_prev;
      std::vector<double>& dhc_for_g = fresh ? dhc[l] : dhc[l - 1];
      std::fill(du.begin(), du.begin() + 3 * d, 0.0);
      update_backward(layer.upd_g, glayer.upd_g, cache.ug[l].data(),
                      cache.hg[l].data(), dhg[l].data(), du.data());
      for (int k = 0; k < d; ++k) dhg[l - 1][k] += du[k];
      const double vscale = (mean_agg && n > 0) ? 1.0 / static_cast<double>(n) : 1.0;
      for (int j = 0; j < n; ++j) {
        const double* msg = cache.msg_vg[l].data() + static_cast<std::size_t>(j) * d;
        for (int k = 0; k < d; ++k) dmsg[k] = du[d + k] * vscale;
        message_backward(layer.msg_v_to_g, glayer.msg_v_to_g,
                         hv_src.data() + static_cast<std::size_t>(j) * d, 1.0, msg,
                         dmsg.data(),
                         dhv[l - 1].data() + static_cast<std::size_t>(j) * d);
      }
      const double cscale = (mean_agg && m > 0) ? 1.0 / static_cast<double>(m) : 1.0;
      for (int i = 0; i < m; ++i) {
        const double* msg = cache.msg_cg[l].data() + static_cast<std::size_t>(i) * d;
        for (int k = 0; k < d; ++k) dmsg[k] = du[2 * d + k] * cscale;
        message_backward(layer.msg_c_to_g, glayer.msg_c_to_g,
                         hc_for_g.data() + static_cast<std::size_t>(i) * d, 1.0, msg,
                         dmsg.data(),
                         dhc_for_g.data() + static_cast<std::size_t>(i) * d);
      }
    }

    // Constraint nodes.
    std::size_t slot = 0;
    const int uc_stride = (tri ? 3 : 2) * d;
    for (int i = 0; i < m; ++i) {
      const double* dh = dhc[l].data() + static_cast<std::size_t>(i) * d;
      const double* h = cache.hc[l].data() + static_cast<std::size_t>(i) * d;
      const double* u = cache.uc[l].data() + static_cast<std::size_t>(i) * uc_stride;
      std::fill(du.begin(), du.begin() + uc_stride, 0.0);
      update_backward(layer.upd_c, glayer.upd_c, u, h, dh, du.data());
      for (int k = 0; k < d; ++k)
        dhc[l - 1][static_cast<std::size_t>(i) * d + k] += du[k];
      const auto& nbrs = graph.cons_vars[i];
      const double scale = (mean_agg && !nbrs.empty())
                               ? 1.0 / static_cast<double>(nbrs.size())
                               : 1.0;
      for (const auto& [v, w] : nbrs) {
        const double* msg = cache.msg_vc[l].data() + slot * d;
        for (int k = 0; k < d; ++k) dmsg[k] = du[d + k] * scale;
        message_backward(layer.msg_v_to_c, glayer.msg_v_to_c,
                         hv_src.data() + static_cast<std::size_t>(v) * d, w, msg,
                         dmsg.data(), dhv[l - 1].data() + static_cast<std::size_t>(v) * d);
        ++slot;
      }
      if (tri) {
        const double* msg = cache.msg_gc[l].data() + static_cast<std::size_t>(i) * d;
        for (int k = 0; k < d; ++k) dmsg[k] = du[2 * d + k];
        message_backward(layer.msg_g_to_c, glayer.msg_g_to_c, hg_prev.data(), 1.0,
                         msg, dmsg.data(), dhg[l - 1].data());
      }
    }
  }

  // Embedding lifts.  The global start embedding is the constant zero, so
  // dhg[0] has nowhere to go.
  for (int i = 0; i < m; ++i) {
    const double u[1] = {graph.b_feat[i]};
    double dummy[1] = {0.0};
    update_backward(model.embed_c, grads.embed_c, u,
                    cache.hc[0].data() + static_cast<std::size_t>(i) * d,
                    dhc[0].data() + static_cast<std::size_t>(i) * d, dummy);
  }
  for (int j = 0; j < n; ++j) {
    const double u[2] = {graph.c_feat[j], cache.x_prev[j]};
    double dummy[2] = {0.0, 0.0};
    update_backward(model.embed_v, grads.embed_v, u,
                    cache.hv[0].data() + static_cast<std::size_t>(j) * d,
                    dhv[0].data() + static_cast<std::size_t>(j) * d, dummy);
  }
}

double loss_and_grad(const MpnnModel& model, const ProblemGraph& graph,
                     const std::vector<double>& x_prev,
                     const std::vector<double>& target,
                     const std::vector<double>& offset, MpnnModel& grads,
                     MpnnCache& cache) {
  forward(model, graph, x_prev, cache);
  const int n = graph.n;
  std::vector<double> grad_out(static_cast<std::size_t>(n));
  double loss = 0.0;
  for (int j = 0; j < n; ++j) {
    const double pred = cache.output[j] + (offset.empty() ? 0.0 : offset[j]);
    const double diff = pred - target[j];
    loss += diff * diff;
    grad_out[j] = 2.0 * diff;
  }
  backward(model, graph, cache, grad_out, grads);
  return loss;
}

void adam_step(MpnnModel& model, const MpnnModel& grads, AdamState& state, double lr) {
  const std::size_t total = param_count(model);
  if (state.m.size() != total) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
    state.step = 0;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  std::size_t off = 0;
  std::vector<Affine*> params;
  std::vector<const Affine*> gparams;
  for_each_affine(model, [&params](Affine& f) { params.push_back(&f); });
  for_each_affine(grads, [&gparams](const Affine& f) { gparams.push_back(&f); });
  for (std::size_t a = 0; a < params.size(); ++a) {
    auto update = [&](double& p, double g) {
      double& mm = state.m[off];
      double& vv = state.v[off];
      mm = state.beta1 * mm + (1.0 - state.beta1) * g;
      vv = state.beta2 * vv + (1.0 - state.beta2) * g * g;
      p -= lr * (mm / bc1) / (std::sqrt(vv / bc2) + state.eps);
      ++off;
    };
    for (std::size_t k = 0; k < params[a]->w.size(); ++k)
      update(params[a]->w[k], gparams[a]->w[k]);
    for (std::size_t k = 0; k < params[a]->b.size(); ++k)
      update(params[a]->b[k], gparams[a]->b[k]);
  }
}

namespace {

nlohmann::json affine_to_json(const Affine& f) {
  return {{"out", f.out}, {"in", f.in}, {"w", f.w}, {"b", f.b}};
}

void affine_from_json(const nlohmann::json& j, Affine& f) {
  f.out = j.at("out").get<int>();
  f.in = j.at("in").get<int>();
  f.w = j.at("w").get<std::vector<double>>();
  f.b = j.at("b").get<std::vector<double>>();
  if (f.w.size() != static_cast<std::size_t>(f.out) * f.in ||
      f.b.size() != static_cast<std::size_t>(f.out))
    throw ValidationError("affine block has inconsistent shapes");
}

}  // namespace

nlohmann::json model_to_json(const MpnnModel& model) {
  nlohmann::json j;
  j["mode"] = mode_name(model.cfg.mode);
  j["sync_mode"] = model.cfg.sync == SyncMode::async ? "async" : "sync";
  j["aggregation"] = model.cfg.agg == Aggregation::sum ? "sum" : "mean";
  j["L"] = model.cfg.layers;
  j["d"] = model.cfg.width;
  j["embed"] = {{"c", affine_to_json(model.embed_c)}, {"v", affine_to_json(model.embed_v)}};
  j["layers"] = nlohmann::json::array();
  const bool tri = model.cfg.mode == Mode::ipm;
  for (const LayerParams& layer : model.layers) {
    nlohmann::json jl;
    jl["msg_v_to_c"] = affine_to_json(layer.msg_v_to_c);
    jl["msg_c_to_v"] = affine_to_json(layer.msg_c_to_v);
    jl["msg_v_to_v"] = affine_to_json(layer.msg_v_to_v);
    if (tri) {
      jl["msg_g_to_c"] = affine_to_json(layer.msg_g_to_c);
      jl["msg_g_to_v"] = affine_to_json(layer.msg_g_to_v);
      jl["msg_v_to_g"] = affine_to_json(layer.msg_v_to_g);
      jl["msg_c_to_g"] = affine_to_json(layer.msg_c_to_g);
      jl["upd_g"] = affine_to_json(layer.upd_g);
    }
    jl["upd_c"] = affine_to_json(layer.upd_c);
    jl["upd_v"] = affine_to_json(layer.upd_v);
    j["layers"].push_back(jl);
  }
  j["head"] = nlohmann::json::array(
      {affine_to_json(model.head1), affine_to_json(model.head2)});
  return j;
}

MpnnModel model_from_json(const nlohmann::json& j) {
  MpnnModel model;
  model.cfg.mode = mode_from_name(j.at("mode").get<std::string>());
  const std::string sync = j.at("sync_mode").get<std::string>();
  if (sync != "async" && sync != "sync")
    throw ValidationError("unknown sync_mode '" + sync + "'");
  model.cfg.sync = sync == "async" ? SyncMode::async : SyncMode::sync;
  if (j.contains("aggregation")) {
    const std::string agg = j.at("aggregation").get<std::string>();
    if (agg != "sum" && agg != "mean")
      throw ValidationError("unknown aggregation '" + agg + "'");
    model.cfg.agg = agg == "sum" ? Aggregation::sum : Aggregation::mean;
  }
  model.cfg.layers = j.at("L").get<int>();
  model.cfg.width = j.at("d").get<int>();
  if (model.cfg.layers < 1 || model.cfg.width < 1)
    throw ValidationError("model needs L >= 1 and d >= 1");

  affine_from_json(j.at("embed").at("c"), model.embed_c);
  affine_from_json(j.at("embed").at("v"), model.embed_v);
  const bool tri = model.cfg.mode == Mode::ipm;
  if (static_cast<int>(j.at("layers").size()) != model.cfg.layers)
    throw ValidationError("layer array length disagrees with L");
  model.layers.resize(static_cast<std::size_t>(model.cfg.layers));
  for (int l = 0; l < model.cfg.layers; ++l) {
    const nlohmann::json& jl = j.at("layers").at(l);
    LayerParams& layer = model.layers[l];
    affine_from_json(jl.at("msg_v_to_c"), layer.msg_v_to_c);
    affine_from_json(jl.at("msg_c_to_v"), layer.msg_c_to_v);
    affine_from_json(jl.at("msg_v_to_v"), layer.msg_v_to_v);
    affine_from_json(jl.at("upd_c"), layer.upd_c);
    affine_from_json(jl.at("upd_v"), layer.upd_v);
    if (tri) {
      affine_from_json(jl.at("msg_g_to_c"), layer.msg_g_to_c);
      affine_from_json(jl.at("msg_g_to_v"), layer.msg_g_to_v);
      affine_from_json(jl.at("msg_v_to_g"), layer.msg_v_to_g);
      affine_from_json(jl.at("msg_c_to_g"), layer.msg_c_to_g);
      affine_from_json(jl.at("upd_g"), layer.upd_g);
    }
  }
  affine_from_json(j.at("head").at(0), model.head1);
  affine_from_json(j.at("head").at(1), model.head2);
  return model;
}

void save_model(const std::string& path, const MpnnModel& model) {
  save_json(path, model_to_json(model));
}

MpnnModel load_model(const std::string& path) {
  return model_from_json(load_json(path));
}

}  // namespace lcqp
