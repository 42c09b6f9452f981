#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qval/aq_point.hpp"

namespace qval {

// Uniform node grid over an axis-aligned box; node a is at
// origin[a] + i_a * h.  Node storage order is lexicographic over
// (i_0, ..., i_{n-1}) with the last axis varying fastest.
struct GridSpec {
  int n = 2;
  std::array<int, 3> dims = {0, 0, 1};
  std::array<double, 3> origin = {0.0, 0.0, 0.0};
  double h = 0.0;

  // Symmetric grid on [-extent, extent]^n with nodes_per_axis nodes per axis.
  static GridSpec centered_box(int n, int nodes_per_axis, double extent = 1.0);

  int64_t node_count() const;
  int64_t index(std::span<const int> idx) const;
  std::array<int, 3> unflatten(int64_t linear) const;
  std::array<double, 3> position(std::span<const int> idx) const;
  bool is_boundary(std::span<const int> idx) const;
  bool operator==(const GridSpec&) const = default;
};

struct BallSpec {
  std::array<double, 3> center = {0.0, 0.0, 0.0};
  double radius = 0.0;
};

class QField {
 public:
  QField(GridSpec grid, int q, int m);

  const GridSpec& grid() const { return grid_; }
  int q() const { return q_; }
  int m() const { return m_; }
  int64_t node_count() const { return grid_.node_count(); }

  std::span<const double> values(int64_t node) const {
    return {data_.data() + node * tuple_len(), static_cast<size_t>(tuple_len())};
  }
  std::span<double> mutable_values(int64_t node) {
    return {data_.data() + node * tuple_len(), static_cast<size_t>(tuple_len())};
  }
  AqPoint point(int64_t node) const;
  void set_point(int64_t node, const AqPoint& p);
  bool boundary(int64_t node) const { return boundary_[node] != 0; }
  int tuple_len() const { return q_ * m_; }
  const std::vector<double>& raw() const { return data_; }
  std::vector<double>& raw() { return data_; }

  double sup_norm() const;  // max over nodes of |u(node)|

  bool operator==(const QField&) const = default;

 private:
  GridSpec grid_;
  int q_, m_;
  std::vector<double> data_;
  std::vector<uint8_t> boundary_;
};

using FieldEvaluator = std::function<AqPoint(std::span<const double>)>;

QField sample_field(const FieldEvaluator& f, const GridSpec& grid, int q, int m);

// Raw-tuple helpers shared by the integrators (multisets as flat arrays).
double tuple_metric_sq(std::span<const double> a, std::span<const double> b,
                       int q, int m);
std::vector<int> tuple_matching(std::span<const double> a,
                                std::span<const double> b, int q, int m);

// Matched multilinear interpolation: corner tuples are matched to the base
// corner by optimal assignment, then blended per sheet.  Positions are
// clamped to the grid box.
void interpolate(const QField& u, std::span<const double> X,
                 std::vector<double>& out);
AqPoint interpolate_point(const QField& u, std::span<const double> X);

// Cell-weighted integrals over a ball (node-centered cells, partial-cell
// weights by 4^n subsampling).
double l2_sq_ball(const QField& u, const BallSpec& ball);
double dist_sq_ball(const QField& u, const QField& v, const BallSpec& ball);

// Per-cell energy density: sum over the n forward edges of
// G(u_node, u_neighbor)^2 / h^2, times h^n.  Cells are indexed by their
// lower-corner node.
std::vector<double> grad_energy_density(const QField& u);
double total_energy(const QField& u);
// Energy restricted to a ball (partial-cell weights on the forward cells).
double energy_in_ball(const QField& u, const BallSpec& ball);
// sum over cells of cell energy weighted by the mean of w(|x-center|^2)
// over the subsample points inside the ball.
double energy_radial_weighted(const QField& u, const BallSpec& ball,
                              const std::function<double(double)>& weight);

enum class ShellIntegrand {
  kAbsUSq,        // |u|^2
  kURadialDeriv,  // sum_j u_j . D_R u_j
  kRadialDerivSq  // |D_R u|^2
};

struct ShellOptions {
  int n_theta = 720;    // circle samples (n = 2)
  int n_sphere = 4000;  // Fibonacci sphere samples (n = 3)
  double fd_step = 0.0; // radial finite-difference step; 0 = grid h
};

// Surface integral over the sphere of the given ball; radial derivatives by
// centered differences per matched sheet along the ray.
double shell_integral(const QField& u, const BallSpec& ball,
                      ShellIntegrand integrand, const ShellOptions& opts = {});

struct BranchCluster {
  std::array<double, 3> centroid = {0.0, 0.0, 0.0};
  std::vector<int64_t> nodes;
};

// Nodes where separation < tau and the optimal-matching transport around the
// surrounding plaquette ring is a nontrivial permutation, grouped into
// connected clusters.  A diagnostic, not ground truth.
std::vector<BranchCluster> detect_branch_points(const QField& u, double tau);

// Default branch threshold 3 h^alpha (3 sqrt(h) when alpha is unknown).
double default_branch_threshold(double h, double alpha = 0.5);

// QFLD1 file format (bit-exact round trip).
void write_qfld(const QField& u, const std::string& path);
QField read_qfld(const std::string& path);
void write_qfld_stream(const QField& u, std::ostream& out);
QField read_qfld_stream(std::istream& in);

// CSV density map: x,y[,z],value rows, one per cell.
void write_density_csv(const QField& u, std::span<const double> cell_values,
                       std::ostream& out);

}  // namespace qval
