#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "microrl/featurizer.h"
#include "microrl/rng.h"

namespace microrl {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

constexpr int kEmbeddingDim = 100;

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NetShape {
  int inputWidth = 0;
  int hidden = kEmbeddingDim; // width of every layer, and of the embedding
  int actWidth = kCandidateActWidth;

  int headInput() const {
    return 2 * hidden + actWidth;
  }
  bool operator==(const NetShape&) const = default;
};

/// Flat view of one named parameter array.
template <typename Scalar>
struct ArrayView {
  const char* name;
  Scalar* data;
  int rows;
  int cols;

  Eigen::Map<Vec<Scalar>> flat() const {
    return {data, static_cast<Eigen::Index>(rows) * cols};
  }
};

/// Embedding network weights (row network + scoring head) and the final
/// linear scorer w. Weight matrices are stored (out x in).
template <typename Scalar>
struct ParameterSet {
  Mat<Scalar> rowW1;
  Vec<Scalar> rowB1;
  Mat<Scalar> rowW2;
  Vec<Scalar> rowB2;
  Mat<Scalar> headW1;
  Vec<Scalar> headB1;
  Mat<Scalar> headW2;
  Vec<Scalar> headB2;
  Vec<Scalar> w;

  static ParameterSet zeros(const NetShape& shape);
  // Glorot-uniform weights, zero biases, w = 0.
  static ParameterSet initialize(const NetShape& shape, Rng& rng);

  NetShape shape() const {
    return {static_cast<int>(rowW1.cols()), static_cast<int>(rowW1.rows()),
            static_cast<int>(headW1.cols() - 2 * rowW1.rows())};
  }

  std::vector<ArrayView<Scalar>> arrays();
  std::vector<ArrayView<const Scalar>> arrays() const;

  void setZero();
  bool allFinite() const;
  std::size_t size() const;

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> o;
    o.rowW1 = rowW1.template cast<Other>();
    o.rowB1 = rowB1.template cast<Other>();
    o.rowW2 = rowW2.template cast<Other>();
    o.rowB2 = rowB2.template cast<Other>();
    o.headW1 = headW1.template cast<Other>();
    o.headB1 = headB1.template cast<Other>();
    o.headW2 = headW2.template cast<Other>();
    o.headB2 = headB2.template cast<Other>();
    o.w = w.template cast<Other>();
    return o;
  }
};

/// Rows [offset, offset + count) of a stacked input belong to one candidate.
struct Segment {
  int offset = 0;
  int count = 0;
};

/// Everything the backward pass needs. Reused across calls to avoid
/// reallocating.
template <typename Scalar>
struct ForwardCache {
  Mat<Scalar> input;  // stacked rows, N x in
  std::vector<Segment> segments;
  Mat<Scalar> z1, h1; // N x H
  Mat<Scalar> h2;     // N x H (tanh output)
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
      argmax;         // B x H, absolute row index of each column maximum
  Mat<Scalar> pooled; // B x (2H + act): mean | max | act one-hot
  Mat<Scalar> z3, h3; // B x H
  Mat<Scalar> z4;     // B x H
  Mat<Scalar> psi;    // B x H, ReLU(z4)

  int batch() const {
    return static_cast<int>(segments.size());
  }
};

/// Forward pass for a batch of candidates sharing one stacked input.
/// `input` is N x in; `acts` is B x actWidth.
template <typename Scalar>
void forwardBatch(const ParameterSet<Scalar>& params, const Mat<Scalar>& input,
                  const std::vector<Segment>& segments, const Mat<Scalar>& acts,
                  ForwardCache<Scalar>& cache);

/// Accumulates into `grads` the gradient of sum_b <gradPsi.row(b), psi_b>
/// with respect to every embedding parameter (w is untouched).
template <typename Scalar>
void backwardBatch(const ForwardCache<Scalar>& cache,
                   const Mat<Scalar>& gradPsi,
                   const ParameterSet<Scalar>& params,
                   ParameterSet<Scalar>& grads);

/// Single-candidate convenience: Ψ for one feature matrix.
template <typename Scalar>
Vec<Scalar> embed(const FeatureMatrix& m, const ParameterSet<Scalar>& params,
                  ForwardCache<Scalar>& cache);

template <typename Scalar>
void backward(const ForwardCache<Scalar>& cache, const Vec<Scalar>& gradPsi,
              const ParameterSet<Scalar>& params, ParameterSet<Scalar>& grads);

template <typename Scalar>
Scalar score(const Vec<Scalar>& psi, const Vec<Scalar>& w) {
  if (psi.size() != w.size()) throw NetError("score: dimension mismatch");
  return psi.dot(w);
}

template <typename Scalar>
Mat<Scalar> toMatrix(const FeatureMatrix& m) {
  Mat<Scalar> out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) out(r, c) = static_cast<Scalar>(m.at(r, c));
  }
  return out;
}

/// Stacked candidate inputs for batched scoring. Sized up front so the
/// buffers are reused between decisions.
class CandidateBatch {
 public:
  void reset(int cols, int totalRows, int candidates);
  // Appends the candidate completed from `features` and returns its index.
  int add(const GreedyFeatures& features, const Command& candidate);
  int add(const FeatureMatrix& m);

  int size() const {
    return static_cast<int>(segments_.size());
  }
  Mat<float>& input() {
    return input_;
  }
  const std::vector<Segment>& segments() const {
    return segments_;
  }
  const Mat<float>& acts() const {
    return acts_;
  }
 private:
  int cols_ = 0;
  int used_ = 0;
  Mat<float> input_;
  Mat<float> acts_;
  std::vector<Segment> segments_;
};

extern template struct ParameterSet<float>;
extern template struct ParameterSet<double>;
extern template void forwardBatch<float>(const ParameterSet<float>&,
                                         const Mat<float>&,
                                         const std::vector<Segment>&,
                                         const Mat<float>&, ForwardCache<float>&);
extern template void forwardBatch<double>(const ParameterSet<double>&,
                                          const Mat<double>&,
                                          const std::vector<Segment>&,
                                          const Mat<double>&,
                                          ForwardCache<double>&);
extern template void backwardBatch<float>(const ForwardCache<float>&,
                                          const Mat<float>&,
                                          const ParameterSet<float>&,
                                          ParameterSet<float>&);
extern template void backwardBatch<double>(const ForwardCache<double>&,
                                           const Mat<double>&,
                                           const ParameterSet<double>&,
                                           ParameterSet<double>&);

} // namespace microrl
