#pragma once

// Naive reference implementations used only by tests. Everything here works
// from raw triples and explicit loops and shares no code with the library's
// sparse and blocked kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "dacrs/trainer.hpp"

namespace oracle {

using dacrs::EntityId;
using dacrs::Kg;
using dacrs::ModelConfig;
using dacrs::ModelParams;
using dacrs::Rng;
using Mat = dacrs::Matrix<double>;
using Row = dacrs::RowVector<double>;

inline Kg random_kg(Rng& rng, int entities, int relations, int triples, double item_fraction = 0.4) {
  std::vector<dacrs::Entity> es;
  for (int i = 0; i < entities; ++i) {
    es.push_back({"e" + std::to_string(i), "entity " + std::to_string(i),
                  i == 0 || rng.bernoulli(item_fraction)});
  }
  std::vector<std::string> rs;
  for (int r = 0; r < relations; ++r) rs.push_back("r" + std::to_string(r));
  std::vector<dacrs::Triple> ts;
  for (int t = 0; t < triples; ++t) {
    ts.push_back({static_cast<EntityId>(rng.uniform_index(entities)),
                  static_cast<dacrs::RelationId>(rng.uniform_index(relations)),
                  static_cast<EntityId>(rng.uniform_index(entities))});
  }
  return Kg(std::move(es), std::move(rs), std::move(ts));
}

// rel[m][r] = undirected relation-r neighbors of m, self-loops dropped.
inline std::vector<std::vector<std::set<EntityId>>> relation_sets(const Kg& kg) {
  std::vector<std::vector<std::set<EntityId>>> rel(kg.num_entities(),
                                                   std::vector<std::set<EntityId>>(kg.num_relations()));
  for (const auto& t : kg.triples()) {
    if (t.head == t.tail) continue;
    rel[t.head][t.relation].insert(t.tail);
    rel[t.tail][t.relation].insert(t.head);
  }
  return rel;
}

inline std::vector<std::set<EntityId>> neighbor_sets(const Kg& kg) {
  std::vector<std::set<EntityId>> out(kg.num_entities());
  for (const auto& t : kg.triples()) {
    if (t.head == t.tail) continue;
    out[t.head].insert(t.tail);
    out[t.tail].insert(t.head);
  }
  return out;
}

inline double dot(const Mat& a, int i, const Mat& b, int j) {
  double s = 0.0;
  for (int c = 0; c < a.cols(); ++c) s += a(i, c) * b(j, c);
  return s;
}

// out = x W for a row vector stored as row i of x.
inline std::vector<double> row_times(const Mat& x, int i, const Mat& w) {
  std::vector<double> out(static_cast<std::size_t>(w.cols()), 0.0);
  for (int c = 0; c < w.cols(); ++c)
    for (int k = 0; k < w.rows(); ++k) out[c] += x(i, k) * w(k, c);
  return out;
}

inline Mat rgcn(const ModelParams<double>& p, const Kg& kg, const ModelConfig& config) {
  const auto rel = relation_sets(kg);
  Mat h = p.base;
  for (const auto& layer : p.layers) {
    Mat next(h.rows(), h.cols());
    for (int m = 0; m < h.rows(); ++m) {
      auto acc = row_times(h, m, layer.self);
      for (std::size_t r = 0; r < layer.relation.size(); ++r) {
        const auto& nbrs = rel[m][r];
        for (const auto j : nbrs) {
          const auto msg = row_times(h, j, layer.relation[r]);
          for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += msg[c] / static_cast<double>(nbrs.size());
        }
      }
      for (std::size_t c = 0; c < acc.size(); ++c) {
        next(m, static_cast<int>(c)) =
            config.activation == dacrs::Activation::relu ? std::max(0.0, acc[c]) : acc[c];
      }
    }
    h = next;
  }
  return h;
}

inline double log_sum_exp(const std::vector<double>& x) {
  const double peak = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (const auto v : x) s += std::exp(v - peak);
  return peak + std::log(s);
}

inline std::vector<double> entity_loss_terms(const Mat& h, const Kg& kg) {
  const auto nbrs = neighbor_sets(kg);
  std::vector<double> terms(static_cast<std::size_t>(h.rows()), 0.0);
  for (int m = 0; m < h.rows(); ++m) {
    std::vector<double> logits;
    for (int k = 0; k < h.rows(); ++k) logits.push_back(dot(h, m, h, k));
    const double lse = log_sum_exp(logits);
    for (const auto j : nbrs[m]) terms[m] += -(logits[j] - lse);
  }
  return terms;
}

inline double entity_loss(const Mat& h, const Kg& kg) {
  double s = 0.0;
  for (const auto t : entity_loss_terms(h, kg)) s += t;
  return s;
}

inline double rec_loss(const Mat& users, const std::vector<std::vector<EntityId>>& targets,
                       const Mat& entities) {
  double total = 0.0;
  for (int n = 0; n < users.rows(); ++n) {
    std::vector<double> logits;
    for (int k = 0; k < entities.rows(); ++k) logits.push_back(dot(users, n, entities, k));
    const double lse = log_sum_exp(logits);
    for (const auto j : targets[n]) total += -(logits[j] - lse);
  }
  return total;
}

inline Row attention(const Row& s, const Mat& rows, const ModelParams<double>& p, int heads,
                     std::vector<std::vector<double>>* weights = nullptr) {
  const int d = static_cast<int>(p.key.cols());
  const int width = d / heads;
  const int n = static_cast<int>(rows.rows());
  Mat sm(1, s.size());
  sm.row(0) = s;
  const auto q = row_times(sm, 0, p.query);
  std::vector<std::vector<double>> keys, values;
  for (int i = 0; i < n; ++i) {
    keys.push_back(row_times(rows, i, p.key));
    values.push_back(row_times(rows, i, p.value));
  }
  Row out = Row::Zero(d);
  if (weights) weights->clear();
  for (int h = 0; h < heads; ++h) {
    std::vector<double> logits(n, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int c = h * width; c < (h + 1) * width; ++c) logits[i] += q[c] * keys[i][c];
      logits[i] /= std::sqrt(static_cast<double>(width));
    }
    const double lse = log_sum_exp(logits);
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = std::exp(logits[i] - lse);
    for (int c = h * width; c < (h + 1) * width; ++c)
      for (int i = 0; i < n; ++i) out[c] += w[i] * values[i][c];
    if (weights) weights->push_back(w);
  }
  return out;
}

inline Row user_vector(const ModelParams<double>& p, const ModelConfig& config, const Mat& h,
                       const Row& s, const std::vector<EntityId>& entities) {
  Mat sm(1, s.size());
  sm.row(0) = s;
  const auto proj = row_times(sm, 0, p.dialogue_proj);
  Row u(proj.size());
  for (std::size_t c = 0; c < proj.size(); ++c) u[static_cast<int>(c)] = proj[c];
  if (entities.empty()) return u;
  Mat rows(static_cast<int>(entities.size()), h.cols());
  for (std::size_t i = 0; i < entities.size(); ++i) rows.row(static_cast<int>(i)) = h.row(entities[i]);
  const Row agg = attention(s, rows, p, config.heads);
  const double lambda = 1.0 / (1.0 + std::exp(-p.fusion_raw));
  return lambda * u + (1.0 - lambda) * agg;
}

inline double total_loss(const std::vector<dacrs::PreparedSample<double>>& batch,
                         const ModelParams<double>& p, const Kg& kg, const ModelConfig& config,
                         double alpha) {
  const Mat h = rgcn(p, kg, config);
  Mat users(static_cast<int>(batch.size()), h.cols());
  std::vector<std::vector<EntityId>> targets;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    users.row(static_cast<int>(i)) = user_vector(p, config, h, batch[i].dialogue, batch[i].context_entities);
    targets.push_back(batch[i].targets);
  }
  return rec_loss(users, targets, h) + alpha * entity_loss(h, kg);
}

// Central differences over every scalar of every tensor, in visit order.
inline ModelParams<double> finite_difference(const ModelParams<double>& p,
                                             const std::function<double(const ModelParams<double>&)>& f,
                                             double step = 1e-5) {
  ModelParams<double> work = p;
  ModelParams<double> grad = p.zeros_like();
  std::vector<Eigen::Map<dacrs::Vector<double>>> wv, gv;
  work.visit([&](const std::string&, auto m) { wv.push_back(m); });
  grad.visit([&](const std::string&, auto m) { gv.push_back(m); });
  for (std::size_t t = 0; t < wv.size(); ++t) {
    for (Eigen::Index i = 0; i < wv[t].size(); ++i) {
      const double orig = wv[t][i];
      wv[t][i] = orig + step;
      const double up = f(work);
      wv[t][i] = orig - step;
      const double down = f(work);
      wv[t][i] = orig;
      gv[t][i] = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

// Per-tensor relative error ||a - b|| / max(||a|| + ||b||, floor).
inline std::vector<std::pair<std::string, double>> relative_errors(const ModelParams<double>& a,
                                                                   const ModelParams<double>& b,
                                                                   double floor = 1e-8) {
  std::vector<std::pair<std::string, dacrs::Vector<double>>> av;
  a.visit([&](const std::string& name, auto m) { av.emplace_back(name, m); });
  std::vector<std::pair<std::string, double>> out;
  std::size_t i = 0;
  b.visit([&](const std::string&, auto m) {
    const auto& x = av[i++].second;
    const double denom = std::max(x.norm() + m.norm(), floor);
    out.emplace_back(av[i - 1].first, (x - m).norm() / denom);
  });
  return out;
}

inline double recall(const std::vector<EntityId>& ranked, const std::vector<EntityId>& targets,
                     std::size_t k) {
  std::set<EntityId> top(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked.size())));
  std::set<EntityId> want(targets.begin(), targets.end());
  std::size_t hits = 0;
  for (const auto t : want) hits += top.count(t);
  return static_cast<double>(hits) / static_cast<double>(want.size());
}

// A random micro-model with a random batch.
struct MicroInstance {
  Kg kg;
  dacrs::KgIndex index;
  ModelConfig config;
  ModelParams<double> params;
  std::vector<dacrs::PreparedSample<double>> batch;
  double alpha = 1.0;
};

inline MicroInstance random_micro(std::uint64_t seed, int max_entities = 8, int max_d = 4,
                                  int max_dllm = 5, int max_batch = 3) {
  Rng rng(seed);
  MicroInstance mi;
  const int n = 3 + static_cast<int>(rng.uniform_index(max_entities - 2));
  const int relations = 1 + static_cast<int>(rng.uniform_index(2));
  mi.kg = random_kg(rng, n, relations, 2 * n);
  mi.index = dacrs::KgIndex(mi.kg);
  mi.config.d = 1 + static_cast<int>(rng.uniform_index(max_d));
  mi.config.d_llm = 1 + static_cast<int>(rng.uniform_index(max_dllm));
  mi.config.rgcn_layers = 1 + static_cast<int>(rng.uniform_index(2));
  mi.config.heads = mi.config.d % 2 == 0 && rng.bernoulli(0.5) ? 2 : 1;
  mi.config.activation = rng.bernoulli(0.5) ? dacrs::Activation::relu : dacrs::Activation::identity;
  Rng init(seed ^ 0xabcdefULL);
  mi.params = dacrs::init_params(mi.config, mi.kg.num_entities(), mi.kg.num_relations(), init);
  // Larger than the default init so the softmaxes are far from uniform.
  mi.params.visit([&](const std::string&, auto m) { m *= 2.0; });
  mi.params.fusion_raw = rng.uniform(-1.5, 1.5);
  mi.alpha = rng.uniform(0.0, 2.0);
  const int b = 1 + static_cast<int>(rng.uniform_index(max_batch));
  for (int i = 0; i < b; ++i) {
    dacrs::PreparedSample<double> s;
    s.dialogue = Row(mi.config.d_llm);
    for (int c = 0; c < mi.config.d_llm; ++c) s.dialogue[c] = rng.uniform(-1.0, 1.0);
    const int ctx = static_cast<int>(rng.uniform_index(4));
    for (int c = 0; c < ctx; ++c) {
      const auto e = static_cast<EntityId>(rng.uniform_index(n));
      if (std::find(s.context_entities.begin(), s.context_entities.end(), e) == s.context_entities.end())
        s.context_entities.push_back(e);
    }
    const int tg = 1 + static_cast<int>(rng.uniform_index(2));
    for (int c = 0; c < tg; ++c) {
      const auto e = static_cast<EntityId>(rng.uniform_index(n));
      if (std::find(s.targets.begin(), s.targets.end(), e) == s.targets.end()) s.targets.push_back(e);
    }
    mi.batch.push_back(std::move(s));
  }
  return mi;
}

// Mean intra-cluster minus mean inter-cluster dot product over rows.
inline double cluster_gap(const Mat& h, const std::vector<int>& cluster_of) {
  double intra = 0.0, inter = 0.0;
  std::size_t ni = 0, no = 0;
  for (int a = 0; a < h.rows(); ++a) {
    for (int b = a + 1; b < h.rows(); ++b) {
      const double v = dot(h, a, h, b);
      if (cluster_of[a] == cluster_of[b]) {
        intra += v;
        ++ni;
      } else {
        inter += v;
        ++no;
      }
    }
  }
  return intra / static_cast<double>(std::max<std::size_t>(ni, 1)) -
         inter / static_cast<double>(std::max<std::size_t>(no, 1));
}

}  // namespace oracle
