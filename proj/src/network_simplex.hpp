#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace biref::detail {

/// Primal network simplex for the uncapacitated transportation problem
///   min sum cost(i, j) f(i, j),  row sums = supply, column sums = demand,
/// on the complete bipartite graph. The spanning tree is kept strongly
/// feasible (Cunningham), stored with parent/thread/successor-count arrays,
/// and pivots use block search. A root node joins every node through an
/// artificial arc; because every source reaches every target directly, an
/// artificial cost just above the cost range keeps the artificial arcs empty
/// at the optimum.
class NetworkSimplex {
 public:
  enum class Status { kOptimal, kPivotLimit };

  struct TreeArc {
    std::size_t i;
    std::size_t j;
    double flow;
  };

  NetworkSimplex(std::vector<double> supply, std::vector<double> demand,
                 std::vector<double> cost);

  /// Runs pivots until no arc has reduced cost below -eps, then recomputes
  /// flows and potentials from the tree and repeats if that exposed new
  /// candidates. `max_pivots` bounds the total pivot count.
  Status run(long long max_pivots);

  /// Real arcs in the final spanning tree (flows may be zero for degenerate arcs).
  std::vector<TreeArc> tree_arcs() const;

  /// Node potentials with reduced costs cost(i, j) + pi_i - pi_j >= 0 on every
  /// real arc and equality on tree arcs.
  double source_potential(std::size_t i) const { return pi_[i]; }
  double target_potential(std::size_t j) const { return pi_[n1_ + j]; }

  long long pivots() const { return pivots_; }
  long long degenerate_pivots() const { return degenerate_; }
  int refinement_rounds() const { return rounds_; }

  /// Exhaustive structural check of the spanning tree; returns an empty
  /// string when consistent. Test-only, O(nodes^2).
  std::string check_tree() const;
  /// When set, check_tree runs after every pivot and the first failure aborts run().
  void set_debug_checks(bool on) { debug_checks_ = on; }
  const std::string& debug_failure() const { return debug_failure_; }

 private:
  static constexpr std::int8_t kStateTree = 0;
  static constexpr std::int8_t kStateLower = 1;
  static constexpr int kDirUp = 1;
  static constexpr int kDirDown = -1;

  std::size_t arc_source(std::size_t e) const;
  std::size_t arc_target(std::size_t e) const;
  double arc_cost(std::size_t e) const;

  bool find_entering_arc();
  void find_join_node();
  void find_leaving_arc();
  void change_flow();
  void update_tree_structure();
  void update_potential();
  void recompute_potentials();
  void recompute_flows();

  std::size_t n1_, n2_, node_num_, arc_num_, root_;
  std::vector<double> supply_;  // per node including root
  std::vector<double> cost_;    // real arcs
  std::vector<double> art_cost_;
  std::vector<std::size_t> art_source_, art_target_;
  std::vector<double> flow_;  // real arcs then artificial
  std::vector<std::int8_t> state_;

  std::vector<long long> parent_, pred_, thread_, rev_thread_, succ_num_, last_succ_;
  std::vector<int> pred_dir_;
  std::vector<long long> dirty_revs_;
  std::vector<double> pi_;

  std::size_t block_size_;
  std::size_t next_arc_ = 0;
  double eps_;

  // Pivot state.
  std::size_t in_arc_ = 0;
  long long join_ = 0, u_in_ = 0, v_in_ = 0, u_out_ = 0, v_out_ = 0;
  double delta_ = 0.0;

  long long pivots_ = 0;
  long long degenerate_ = 0;
  int rounds_ = 0;
  bool debug_checks_ = false;
  std::string debug_failure_;
};

}  // namespace biref::detail
