#pragma once

// Discrete weighted L2 spaces, grid functions and dense linear operators
// between them. Every Hilbert space of the toolkit is represented by a
// quadrature grid: nodes in R^d plus strictly positive weights, so that
// <f, g> = sum_i w_i f_i g_i.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace identikit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// One node per row; row-major so a node is a contiguous span.
using NodeMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::size_t kMaxNodesPerAxis = 4096;

class WeightedSpace {
 public:
  struct Options {
    // Tensor-grid extents (row-major, last axis fastest). Empty for
    // unstructured node sets.
    std::vector<std::size_t> shape;
    // Enforce sum(weights) == 1 within 1e-6.
    bool probability = false;
    // Mass of the underlying measure discarded when the support was
    // truncated to the grid. Carried into every report.
    double truncation_mass = 0.0;
  };

  WeightedSpace(NodeMat nodes, Vec weights, std::string label);
  WeightedSpace(NodeMat nodes, Vec weights, std::string label, Options options);

  std::size_t size() const { return static_cast<std::size_t>(weights_.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(nodes_.cols()); }
  const NodeMat& nodes() const { return nodes_; }
  const Vec& weights() const { return weights_; }
  const std::string& label() const { return label_; }
  const std::vector<std::size_t>& shape() const { return options_.shape; }
  bool is_probability() const { return options_.probability; }
  double truncation_mass() const { return options_.truncation_mass; }
  double total_mass() const { return weights_.sum(); }

  std::span<const double> node(std::size_t i) const;

 private:
  NodeMat nodes_;
  Vec weights_;
  std::string label_;
  Options options_;
};

using SpacePtr = std::shared_ptr<const WeightedSpace>;

SpacePtr make_space(NodeMat nodes, Vec weights, std::string label,
                    WeightedSpace::Options options = {});

// Pointer identity, or identical nodes and weights.
bool same_space(const WeightedSpace& a, const WeightedSpace& b);
bool same_space(const SpacePtr& a, const SpacePtr& b);

// Same nodes and shape, weights replaced by base_weight * density and
// normalized to a probability measure. Used to turn a quadrature grid for a
// reference measure into L2(G) for a distribution G with the given density.
SpacePtr reweight(const WeightedSpace& base, const Vec& density,
                  std::string label, double truncation_mass = 0.0);

struct GridFunction {
  SpacePtr space;
  Vec values;

  GridFunction() = default;
  GridFunction(SpacePtr s, Vec v);

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

using PointFunction = std::function<double(std::span<const double>)>;

GridFunction evaluate(const SpacePtr& space, const PointFunction& f);
GridFunction constant(const SpacePtr& space, double c);

double inner(const WeightedSpace& space, const GridFunction& f,
             const GridFunction& g);
double inner(const GridFunction& f, const GridFunction& g);
double norm(const GridFunction& f);
double weighted_mean(const GridFunction& f);
GridFunction centered(const GridFunction& f);

// Joint density of (Z, Z*) with respect to the product of the two base
// quadrature measures: sum_z sum_z* w_z w_z* f(z, z*) = 1.
struct JointDensity {
  SpacePtr obs_space;
  SpacePtr latent_space;
  Mat values;  // obs nodes x latent nodes

  void validate() const;
};

class LinOp {
 public:
  LinOp(SpacePtr domain, SpacePtr codomain, Mat matrix);

  const SpacePtr& domain() const { return domain_; }
  const SpacePtr& codomain() const { return codomain_; }
  const Mat& matrix() const { return matrix_; }
  std::size_t rows() const { return static_cast<std::size_t>(matrix_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(matrix_.cols()); }

  GridFunction apply(const GridFunction& b) const;
  Vec apply(const Vec& b) const { return matrix_ * b; }

 private:
  SpacePtr domain_;
  SpacePtr codomain_;
  Mat matrix_;
};

// Conditional-mean score (Sb)(z) = E[b(Z*) | Z = z]. The returned operator
// maps L2(G0) (latent nodes weighted by the latent marginal) into L2(P)
// (observation nodes weighted by the observation marginal), so that its
// adjoint is E[g(Z) | Z* = z*].
LinOp build_score_from_joint(const JointDensity& joint);

// Observation nodes whose marginal mass falls below rel_floor * max are
// removed. Returns the trimmed density and the dropped probability mass.
struct TrimmedJoint {
  JointDensity joint;
  double dropped_mass = 0.0;
  std::vector<std::size_t> kept_rows;
};
TrimmedJoint trim_observation_grid(const JointDensity& joint,
                                   double rel_floor = 1e-12);

LinOp adjoint(const LinOp& op);
LinOp information_operator(const LinOp& op);
LinOp compose(const LinOp& outer, const LinOp& inner);

// Restriction of an operator to span(basis). The basis is orthonormalized in
// the domain inner product (Cholesky of its Gram matrix); the returned
// operator acts on coordinates in that orthonormal basis, so the coefficient
// space carries the Gram-induced inner product as the identity.
struct TangentRestriction {
  LinOp op;
  SpacePtr original_domain;
  Mat basis;  // domain nodes x k, weighted-orthonormal columns
  double gram_condition = 1.0;

  GridFunction lift(const Vec& coefficients) const;
};

TangentRestriction restrict_tangent(const LinOp& op,
                                    const std::vector<GridFunction>& basis);

// n-1 functions e_i / w_i - e_n / w_n spanning the weighted mean-zero
// subspace of an n-node space.
std::vector<GridFunction> mean_zero_basis(const SpacePtr& space);

// Weighted operator norm (largest singular value in the weighted sense).
double operator_norm(const LinOp& op);

// Quadrature rules.
struct Axis {
  Vec nodes;
  Vec weights;
};

Axis trapezoid(double a, double b, std::size_t n);
Axis gauss_legendre(double a, double b, std::size_t n);
// Uniform periodic grid of n nodes starting at `offset` with weights
// period / n.
Axis periodic(double period, std::size_t n, double offset = 0.0);

// Tensor product of axes; the last axis varies fastest.
SpacePtr tensor_space(const std::vector<Axis>& axes, std::string label,
                      bool probability = false);

}  // namespace identikit
