#include "network_simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace biref::detail {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

NetworkSimplex::NetworkSimplex(std::vector<double> supply, std::vector<double> demand,
                               std::vector<double> cost)
    : n1_(supply.size()),
      n2_(demand.size()),
      node_num_(n1_ + n2_),
      arc_num_(n1_ * n2_),
      root_(node_num_),
      cost_(std::move(cost)) {
  double cmax = 0.0;
  double cmin = 0.0;
  if (!cost_.empty()) {
    auto [lo, hi] = std::minmax_element(cost_.begin(), cost_.end());
    cmin = *lo;
    cmax = *hi;
  }
  const double range = std::max(std::abs(cmax), std::abs(cmin));
  const double art_cost = 2.0 * range + 1.0;
  eps_ = 1e-12 * std::max(1.0, range);
  block_size_ = std::max<std::size_t>(
      10, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(arc_num_)))));

  supply_.assign(node_num_ + 1, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n1_; ++i) {
    supply_[i] = supply[i];
    sum += supply[i];
  }
  for (std::size_t j = 0; j < n2_; ++j) {
    supply_[n1_ + j] = -demand[j];
    sum -= demand[j];
  }
  supply_[root_] = -sum;

  const std::size_t total_nodes = node_num_ + 1;
  parent_.assign(total_nodes, -1);
  pred_.assign(total_nodes, -1);
  thread_.assign(total_nodes, 0);
  rev_thread_.assign(total_nodes, 0);
  succ_num_.assign(total_nodes, 0);
  last_succ_.assign(total_nodes, 0);
  pred_dir_.assign(total_nodes, 0);
  pi_.assign(total_nodes, 0.0);
  art_cost_.assign(node_num_, 0.0);
  art_source_.assign(node_num_, 0);
  art_target_.assign(node_num_, 0);
  flow_.assign(arc_num_ + node_num_, 0.0);
  state_.assign(arc_num_ + node_num_, kStateLower);

  const auto root = static_cast<long long>(root_);
  parent_[root_] = -1;
  pred_[root_] = -1;
  thread_[root_] = 0;
  rev_thread_[0] = root;
  succ_num_[root_] = static_cast<long long>(total_nodes);
  last_succ_[root_] = root - 1;
  pi_[root_] = 0.0;

  for (std::size_t u = 0; u < node_num_; ++u) {
    const std::size_t e = arc_num_ + u;
    const auto uu = static_cast<long long>(u);
    parent_[u] = root;
    pred_[u] = static_cast<long long>(e);
    thread_[u] = uu + 1;
    rev_thread_[u + 1] = uu;
    succ_num_[u] = 1;
    last_succ_[u] = uu;
    state_[e] = kStateTree;
    if (supply_[u] >= 0.0) {
      pred_dir_[u] = kDirUp;
      pi_[u] = 0.0;
      art_source_[u] = u;
      art_target_[u] = root_;
      flow_[e] = supply_[u];
      art_cost_[u] = 0.0;
    } else {
      pred_dir_[u] = kDirDown;
      pi_[u] = art_cost;
      art_source_[u] = root_;
      art_target_[u] = u;
      flow_[e] = -supply_[u];
      art_cost_[u] = art_cost;
    }
  }
}

std::size_t NetworkSimplex::arc_source(std::size_t e) const {
  return e < arc_num_ ? e / n2_ : art_source_[e - arc_num_];
}

std::size_t NetworkSimplex::arc_target(std::size_t e) const {
  return e < arc_num_ ? n1_ + e % n2_ : art_target_[e - arc_num_];
}

double NetworkSimplex::arc_cost(std::size_t e) const {
  return e < arc_num_ ? cost_[e] : art_cost_[e - arc_num_];
}

bool NetworkSimplex::find_entering_arc() {
  if (arc_num_ == 0) return false;
  double min = -eps_;
  bool found = false;
  std::size_t e = next_arc_;
  std::size_t i = e / n2_;
  std::size_t j = e % n2_;
  std::size_t count = block_size_;
  const double* pi_target = pi_.data() + n1_;
  for (std::size_t k = 0; k < arc_num_; ++k) {
    double c = state_[e] * (cost_[e] + pi_[i] - pi_target[j]);
    if (c < min) {
      min = c;
      in_arc_ = e;
      found = true;
    }
    ++e;
    if (++j == n2_) {
      j = 0;
      if (++i == n1_) {
        i = 0;
        e = 0;
      }
    }
    if (--count == 0) {
      if (found) break;
      count = block_size_;
    }
  }
  next_arc_ = e;
  return found;
}

void NetworkSimplex::find_join_node() {
  auto u = static_cast<long long>(arc_source(in_arc_));
  auto v = static_cast<long long>(arc_target(in_arc_));
  while (u != v) {
    if (succ_num_[u] < succ_num_[v]) {
      u = parent_[u];
    } else {
      v = parent_[v];
    }
  }
  join_ = u;
}

void NetworkSimplex::find_leaving_arc() {
  const auto first = static_cast<long long>(arc_source(in_arc_));
  const auto second = static_cast<long long>(arc_target(in_arc_));
  delta_ = kInf;
  int result = 0;
  for (long long u = first; u != join_; u = parent_[u]) {
    if (pred_dir_[u] != kDirUp) continue;
    double d = flow_[pred_[u]];
    if (d < delta_) {
      delta_ = d;
      u_out_ = u;
      result = 1;
    }
  }
  for (long long u = second; u != join_; u = parent_[u]) {
    if (pred_dir_[u] != kDirDown) continue;
    double d = flow_[pred_[u]];
    if (d <= delta_) {
      delta_ = d;
      u_out_ = u;
      result = 2;
    }
  }
  if (result == 1) {
    u_in_ = first;
    v_in_ = second;
  } else {
    u_in_ = second;
    v_in_ = first;
  }
}

void NetworkSimplex::change_flow() {
  const double val = delta_;
  if (val > 0.0) {
    flow_[in_arc_] += val;
    for (auto u = static_cast<long long>(arc_source(in_arc_)); u != join_; u = parent_[u]) {
      flow_[pred_[u]] -= pred_dir_[u] * val;
    }
    for (auto u = static_cast<long long>(arc_target(in_arc_)); u != join_; u = parent_[u]) {
      flow_[pred_[u]] += pred_dir_[u] * val;
    }
  } else {
    ++degenerate_;
  }
  state_[in_arc_] = kStateTree;
  state_[pred_[u_out_]] = kStateLower;
  flow_[pred_[u_out_]] = 0.0;
}

void NetworkSimplex::update_tree_structure() {
  const long long old_rev_thread = rev_thread_[u_out_];
  const long long old_succ_num = succ_num_[u_out_];
  const long long old_last_succ = last_succ_[u_out_];
  v_out_ = parent_[u_out_];
  const auto in_source = static_cast<long long>(arc_source(in_arc_));

  if (u_in_ == u_out_) {
    parent_[u_in_] = v_in_;
    pred_[u_in_] = static_cast<long long>(in_arc_);
    pred_dir_[u_in_] = u_in_ == in_source ? kDirUp : kDirDown;

    if (thread_[v_in_] != u_out_) {
      long long after = thread_[old_last_succ];
      thread_[old_rev_thread] = after;
      rev_thread_[after] = old_rev_thread;
      after = thread_[v_in_];
      thread_[v_in_] = u_out_;
      rev_thread_[u_out_] = v_in_;
      thread_[old_last_succ] = after;
      rev_thread_[after] = old_last_succ;
    }
  } else {
    // When old_rev_thread == v_in, join and v_out coincide.
    const long long thread_continue =
        old_rev_thread == v_in_ ? thread_[old_last_succ] : thread_[v_in_];

    // Re-hang the stem nodes between u_in and u_out.
    long long stem = u_in_;
    long long par_stem = v_in_;
    long long next_stem;
    long long last = last_succ_[u_in_];
    long long before;
    long long after = thread_[last];
    thread_[v_in_] = u_in_;
    dirty_revs_.clear();
    dirty_revs_.push_back(v_in_);
    while (stem != u_out_) {
      next_stem = parent_[stem];
      thread_[last] = next_stem;
      dirty_revs_.push_back(last);

      before = rev_thread_[stem];
      thread_[before] = after;
      rev_thread_[after] = before;

      parent_[stem] = par_stem;
      par_stem = stem;
      stem = next_stem;

      last = last_succ_[stem] == last_succ_[par_stem] ? rev_thread_[par_stem] : last_succ_[stem];
      after = thread_[last];
    }
    parent_[u_out_] = par_stem;
    thread_[last] = thread_continue;
    rev_thread_[thread_continue] = last;
    last_succ_[u_out_] = last;

    if (old_rev_thread != v_in_) {
      thread_[old_rev_thread] = after;
      rev_thread_[after] = old_rev_thread;
    }

    for (long long u : dirty_revs_) rev_thread_[thread_[u]] = u;

    long long tmp_sc = 0;
    const long long tmp_ls = last_succ_[u_out_];
    for (long long u = u_out_, p = parent_[u]; u != u_in_; u = p, p = parent_[u]) {
      pred_[u] = pred_[p];
      pred_dir_[u] = -pred_dir_[p];
      tmp_sc += succ_num_[u] - succ_num_[p];
      succ_num_[u] = tmp_sc;
      last_succ_[p] = tmp_ls;
    }
    pred_[u_in_] = static_cast<long long>(in_arc_);
    pred_dir_[u_in_] = u_in_ == in_source ? kDirUp : kDirDown;
    succ_num_[u_in_] = old_succ_num;
  }

  const long long up_limit_out = last_succ_[join_] == v_in_ ? join_ : -1;
  const long long last_succ_out = last_succ_[u_out_];
  for (long long u = v_in_; u != -1 && last_succ_[u] == v_in_; u = parent_[u]) {
    last_succ_[u] = last_succ_out;
  }

  if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
    for (long long u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ;
         u = parent_[u]) {
      last_succ_[u] = old_rev_thread;
    }
  } else if (last_succ_out != old_last_succ) {
    for (long long u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ;
         u = parent_[u]) {
      last_succ_[u] = last_succ_out;
    }
  }

  for (long long u = v_in_; u != join_; u = parent_[u]) succ_num_[u] += old_succ_num;
  for (long long u = v_out_; u != join_; u = parent_[u]) succ_num_[u] -= old_succ_num;
}

void NetworkSimplex::update_potential() {
  const double sigma = pi_[v_in_] - pi_[u_in_] - pred_dir_[u_in_] * arc_cost(in_arc_);
  const long long end = thread_[last_succ_[u_in_]];
  for (long long u = u_in_; u != end; u = thread_[u]) pi_[u] += sigma;
}

void NetworkSimplex::recompute_potentials() {
  pi_[root_] = 0.0;
  for (long long u = thread_[root_]; u != static_cast<long long>(root_); u = thread_[u]) {
    const auto e = static_cast<std::size_t>(pred_[u]);
    // Tree arcs have zero reduced cost: cost + pi_source - pi_target = 0.
    if (pred_dir_[u] == kDirUp) {
      pi_[u] = pi_[parent_[u]] - arc_cost(e);
    } else {
      pi_[u] = pi_[parent_[u]] + arc_cost(e);
    }
  }
}

void NetworkSimplex::recompute_flows() {
  std::vector<double> excess = supply_;
  for (long long u = rev_thread_[root_]; u != static_cast<long long>(root_); u = rev_thread_[u]) {
    const auto e = static_cast<std::size_t>(pred_[u]);
    const double f = pred_dir_[u] == kDirUp ? excess[u] : -excess[u];
    flow_[e] = std::max(0.0, f);
    excess[parent_[u]] += excess[u];
  }
}

NetworkSimplex::Status NetworkSimplex::run(long long max_pivots) {
  auto pivot = [this]() {
    find_join_node();
    find_leaving_arc();
    change_flow();
    update_tree_structure();
    update_potential();
    ++pivots_;
    if (debug_checks_ && debug_failure_.empty()) {
      std::string msg = check_tree();
      if (!msg.empty()) debug_failure_ = "after pivot " + std::to_string(pivots_) + ": " + msg;
    }
  };

  while (true) {
    while (find_entering_arc()) {
      if (pivots_ >= max_pivots) return Status::kPivotLimit;
      pivot();
      if (!debug_failure_.empty()) return Status::kPivotLimit;
    }
    recompute_flows();
    recompute_potentials();
    ++rounds_;
    if (!find_entering_arc()) return Status::kOptimal;
    if (pivots_ >= max_pivots) return Status::kPivotLimit;
    pivot();
    if (!debug_failure_.empty()) return Status::kPivotLimit;
  }
}

std::vector<NetworkSimplex::TreeArc> NetworkSimplex::tree_arcs() const {
  std::vector<TreeArc> out;
  for (std::size_t u = 0; u < node_num_; ++u) {
    const auto e = static_cast<std::size_t>(pred_[u]);
    if (e < arc_num_) out.push_back({e / n2_, e % n2_, flow_[e]});
  }
  std::sort(out.begin(), out.end(), [](const TreeArc& a, const TreeArc& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  return out;
}

std::string NetworkSimplex::check_tree() const {
  std::ostringstream err;
  const std::size_t total = node_num_ + 1;

  // Thread: a single cycle through every node, starting at the root.
  std::vector<char> seen(total, 0);
  long long u = static_cast<long long>(root_);
  for (std::size_t k = 0; k < total; ++k) {
    if (u < 0 || static_cast<std::size_t>(u) >= total || seen[u]) {
      err << "thread is not a permutation cycle";
      return err.str();
    }
    seen[u] = 1;
    if (rev_thread_[thread_[u]] != u) {
      err << "rev_thread mismatch at " << u;
      return err.str();
    }
    u = thread_[u];
  }
  if (u != static_cast<long long>(root_)) return "thread does not return to root";

  std::size_t tree_count = 0;
  for (std::size_t e = 0; e < arc_num_ + node_num_; ++e) tree_count += state_[e] == kStateTree;
  if (tree_count != node_num_) {
    err << "tree has " << tree_count << " arcs, expected " << node_num_;
    return err.str();
  }

  for (std::size_t v = 0; v < node_num_; ++v) {
    const long long p = parent_[v];
    const long long e = pred_[v];
    if (p < 0 || e < 0) return "missing parent";
    if (state_[e] != kStateTree) return "pred arc not in tree";
    const auto s = static_cast<long long>(arc_source(static_cast<std::size_t>(e)));
    const auto t = static_cast<long long>(arc_target(static_cast<std::size_t>(e)));
    if (pred_dir_[v] == kDirUp ? (s != static_cast<long long>(v) || t != p)
                               : (t != static_cast<long long>(v) || s != p)) {
      err << "pred arc of " << v << " does not join it to its parent";
      return err.str();
    }
    double reduced = arc_cost(static_cast<std::size_t>(e)) + pi_[s] - pi_[t];
    if (std::abs(reduced) > 1e-9 * std::max(1.0, std::abs(arc_cost(static_cast<std::size_t>(e))))) {
      err << "tree arc reduced cost " << reduced << " at node " << v;
      return err.str();
    }
  }

  // Subtree sizes and preorder contiguity.
  std::vector<long long> size(total, 0);
  for (std::size_t v = 0; v < total; ++v) {
    for (long long a = static_cast<long long>(v); a != -1; a = parent_[a]) ++size[a];
  }
  auto is_ancestor = [this](long long anc, long long v) {
    for (; v != -1; v = parent_[v]) {
      if (v == anc) return true;
    }
    return false;
  };
  for (std::size_t v = 0; v < total; ++v) {
    if (size[v] != succ_num_[v]) {
      err << "succ_num mismatch at " << v << ": " << succ_num_[v] << " vs " << size[v];
      return err.str();
    }
    long long w = static_cast<long long>(v);
    for (long long k = 1; k < size[v]; ++k) {
      w = thread_[w];
      if (!is_ancestor(static_cast<long long>(v), w)) {
        err << "subtree of " << v << " not contiguous in thread";
        return err.str();
      }
    }
    if (last_succ_[v] != w) {
      err << "last_succ mismatch at " << v;
      return err.str();
    }
  }

  // Flow conservation.
  std::vector<double> net(total, 0.0);
  double scale = 0.0;
  for (std::size_t e = 0; e < arc_num_ + node_num_; ++e) {
    if (flow_[e] < 0.0) return "negative flow";
    if (flow_[e] != 0.0) {
      net[arc_source(e)] += flow_[e];
      net[arc_target(e)] -= flow_[e];
      scale = std::max(scale, flow_[e]);
    }
  }
  for (std::size_t v = 0; v < total; ++v) {
    if (std::abs(net[v] - supply_[v]) > 1e-9 * std::max(1.0, scale)) {
      err << "conservation violated at node " << v;
      return err.str();
    }
  }
  return {};
}

}  // namespace biref::detail
