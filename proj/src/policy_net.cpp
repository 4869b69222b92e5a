#include "microrl/policy_net.h"

#include <algorithm>
#include <cstring>

namespace microrl {

namespace {

template <typename Scalar>
void glorot(Mat<Scalar>& m, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
  }
}

// ELU in place on a copy of the pre-activation.
template <typename Scalar>
void elu(const Mat<Scalar>& z, Mat<Scalar>& out) {
  out = (z.array() > Scalar(0))
            .select(z.array(), z.array().min(Scalar(0)).exp() - Scalar(1));
}

template <typename Scalar>
void checkFinite(const Mat<Scalar>& m, const char* what) {
  if (!m.allFinite()) {
    throw NetError(std::string("non-finite values in ") + what);
  }
}

} // namespace

template <typename Scalar>
ParameterSet<Scalar> ParameterSet<Scalar>::zeros(const NetShape& s) {
  ParameterSet p;
  p.rowW1 = Mat<Scalar>::Zero(s.hidden, s.inputWidth);
  p.rowB1 = Vec<Scalar>::Zero(s.hidden);
  p.rowW2 = Mat<Scalar>::Zero(s.hidden, s.hidden);
  p.rowB2 = Vec<Scalar>::Zero(s.hidden);
  p.headW1 = Mat<Scalar>::Zero(s.hidden, s.headInput());
  p.headB1 = Vec<Scalar>::Zero(s.hidden);
  p.headW2 = Mat<Scalar>::Zero(s.hidden, s.hidden);
  p.headB2 = Vec<Scalar>::Zero(s.hidden);
  p.w = Vec<Scalar>::Zero(s.hidden);
  return p;
}

template <typename Scalar>
ParameterSet<Scalar> ParameterSet<Scalar>::initialize(const NetShape& s,
                                                      Rng& rng) {
  ParameterSet p = zeros(s);
  glorot(p.rowW1, rng);
  glorot(p.rowW2, rng);
  glorot(p.headW1, rng);
  glorot(p.headW2, rng);
  return p;
}

template <typename Scalar>
std::vector<ArrayView<Scalar>> ParameterSet<Scalar>::arrays() {
  auto mat = [](const char* name, Mat<Scalar>& m) {
    return ArrayView<Scalar>{name, m.data(), static_cast<int>(m.rows()),
                             static_cast<int>(m.cols())};
  };
  auto vec = [](const char* name, Vec<Scalar>& v) {
    return ArrayView<Scalar>{name, v.data(), static_cast<int>(v.size()), 1};
  };
  return {mat("embed.row1.weight", rowW1), vec("embed.row1.bias", rowB1),
          mat("embed.row2.weight", rowW2), vec("embed.row2.bias", rowB2),
          mat("embed.head1.weight", headW1), vec("embed.head1.bias", headB1),
          mat("embed.head2.weight", headW2), vec("embed.head2.bias", headB2),
          vec("w", w)};
}

template <typename Scalar>
std::vector<ArrayView<const Scalar>> ParameterSet<Scalar>::arrays() const {
  auto views = const_cast<ParameterSet*>(this)->arrays();
  std::vector<ArrayView<const Scalar>> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back({v.name, v.data, v.rows, v.cols});
  return out;
}

template <typename Scalar>
void ParameterSet<Scalar>::setZero() {
  for (auto& a : arrays()) a.flat().setZero();
}

template <typename Scalar>
bool ParameterSet<Scalar>::allFinite() const {
  for (const auto& a : arrays()) {
    for (int i = 0; i < a.rows * a.cols; ++i) {
      if (!std::isfinite(static_cast<double>(a.data[i]))) return false;
    }
  }
  return true;
}

template <typename Scalar>
std::size_t ParameterSet<Scalar>::size() const {
  std::size_t n = 0;
  for (const auto& a : arrays()) n += static_cast<std::size_t>(a.rows) * a.cols;
  return n;
}

template <typename Scalar>
void forwardBatch(const ParameterSet<Scalar>& p, const Mat<Scalar>& input,
                  const std::vector<Segment>& segments, const Mat<Scalar>& acts,
                  ForwardCache<Scalar>& c) {
  const int hidden = static_cast<int>(p.rowW1.rows());
  const int batch = static_cast<int>(segments.size());
  if (input.cols() != p.rowW1.cols()) {
    throw NetError("input width " + std::to_string(input.cols()) +
                   " does not match network width " +
                   std::to_string(p.rowW1.cols()));
  }
  if (acts.rows() != batch ||
      acts.cols() != p.headW1.cols() - 2 * hidden) {
    throw NetError("candidate act-type block has the wrong shape");
  }
  checkFinite(input, "network input");

  c.input = input;
  c.segments = segments;

  // Stage 1: per-row network.
  c.z1.noalias() = input * p.rowW1.transpose();
  c.z1.rowwise() += p.rowB1.transpose();
  elu(c.z1, c.h1);
  c.h2.noalias() = c.h1 * p.rowW2.transpose();
  c.h2.rowwise() += p.rowB2.transpose();
  c.h2 = c.h2.array().tanh();

  // Mean and max pooling per candidate.
  c.pooled.resize(batch, p.headW1.cols());
  c.argmax.resize(batch, hidden);
  for (int b = 0; b < batch; ++b) {
    const Segment& s = segments[b];
    if (s.count <= 0) throw NetError("empty feature matrix");
    auto block = c.h2.middleRows(s.offset, s.count);
    c.pooled.row(b).head(hidden) =
        block.colwise().sum() / static_cast<Scalar>(s.count);
    for (int j = 0; j < hidden; ++j) {
      int best = 0;
      Scalar bestVal = block(0, j);
      for (int r = 1; r < s.count; ++r) {
        if (block(r, j) > bestVal) {
          bestVal = block(r, j);
          best = r;
        }
      }
      c.pooled(b, hidden + j) = bestVal;
      c.argmax(b, j) = s.offset + best;
    }
    c.pooled.row(b).tail(acts.cols()) = acts.row(b);
  }

  // Stage 2: scoring head.
  c.z3.noalias() = c.pooled * p.headW1.transpose();
  c.z3.rowwise() += p.headB1.transpose();
  elu(c.z3, c.h3);
  c.z4.noalias() = c.h3 * p.headW2.transpose();
  c.z4.rowwise() += p.headB2.transpose();
  c.psi = c.z4.cwiseMax(Scalar(0));
}

template <typename Scalar>
void backwardBatch(const ForwardCache<Scalar>& c, const Mat<Scalar>& gradPsi,
                   const ParameterSet<Scalar>& p, ParameterSet<Scalar>& g) {
  const int hidden = static_cast<int>(p.rowW1.rows());
  const int batch = c.batch();
  if (gradPsi.rows() != batch || gradPsi.cols() != hidden) {
    throw NetError("backward: gradient shape does not match the forward batch");
  }
  if (!(g.shape() == p.shape())) {
    throw NetError("backward: gradient buffers have the wrong shape");
  }

  Mat<Scalar> dz4 = (c.z4.array() > Scalar(0)).select(gradPsi.array(), Scalar(0));
  g.headW2.noalias() += dz4.transpose() * c.h3;
  g.headB2.noalias() += dz4.colwise().sum().transpose();
  Mat<Scalar> dz3 = dz4 * p.headW2;
  dz3 = (c.z3.array() > Scalar(0)).select(dz3.array(), dz3.array() * (c.h3.array() + Scalar(1)));
  g.headW1.noalias() += dz3.transpose() * c.pooled;
  g.headB1.noalias() += dz3.colwise().sum().transpose();
  Mat<Scalar> dPooled = dz3 * p.headW1;

  Mat<Scalar> dh2 = Mat<Scalar>::Zero(c.h2.rows(), hidden);
  for (int b = 0; b < batch; ++b) {
    const Segment& s = c.segments[b];
    auto meanGrad = dPooled.row(b).head(hidden) / static_cast<Scalar>(s.count);
    dh2.middleRows(s.offset, s.count).rowwise() += meanGrad;
    for (int j = 0; j < hidden; ++j) {
      dh2(c.argmax(b, j), j) += dPooled(b, hidden + j);
    }
  }

  Mat<Scalar> dz2 = dh2.array() * (Scalar(1) - c.h2.array().square());
  g.rowW2.noalias() += dz2.transpose() * c.h1;
  g.rowB2.noalias() += dz2.colwise().sum().transpose();
  Mat<Scalar> dz1 = dz2 * p.rowW2;
  dz1 = (c.z1.array() > Scalar(0)).select(dz1.array(), dz1.array() * (c.h1.array() + Scalar(1)));
  g.rowW1.noalias() += dz1.transpose() * c.input;
  g.rowB1.noalias() += dz1.colwise().sum().transpose();
}

template <typename Scalar>
Vec<Scalar> embed(const FeatureMatrix& m, const ParameterSet<Scalar>& params,
                  ForwardCache<Scalar>& cache) {
  if (m.rows <= 0) throw NetError("empty feature matrix");
  Mat<Scalar> acts(1, kCandidateActWidth);
  auto oh = m.candidateOneHot();
  for (int i = 0; i < kCandidateActWidth; ++i) acts(0, i) = oh[i];
  forwardBatch(params, toMatrix<Scalar>(m), {Segment{0, m.rows}}, acts, cache);
  return cache.psi.row(0).transpose();
}

template <typename Scalar>
void backward(const ForwardCache<Scalar>& cache, const Vec<Scalar>& gradPsi,
              const ParameterSet<Scalar>& params, ParameterSet<Scalar>& grads) {
  if (cache.batch() != 1) throw NetError("backward: expected a single candidate");
  Mat<Scalar> g = gradPsi.transpose();
  backwardBatch(cache, g, params, grads);
}

void CandidateBatch::reset(int cols, int totalRows, int candidates) {
  cols_ = cols;
  used_ = 0;
  if (input_.rows() != totalRows || input_.cols() != cols) {
    input_.resize(totalRows, cols);
  }
  if (acts_.rows() != candidates) acts_.resize(candidates, kCandidateActWidth);
  segments_.clear();
  segments_.reserve(candidates);
}

int CandidateBatch::add(const GreedyFeatures& features,
                        const Command& candidate) {
  int rows = features.rows();
  if (features.cols() != cols_ || used_ + rows > input_.rows() ||
      size() >= acts_.rows()) {
    throw NetError("candidate batch capacity exceeded");
  }
  features.completeInto(candidate, input_.data() + static_cast<std::size_t>(used_) * cols_);
  int idx = size();
  bool attack = candidate.type == ActType::Attack;
  acts_(idx, 0) = attack ? 1.0f : 0.0f;
  acts_(idx, 1) = attack ? 0.0f : 1.0f;
  segments_.push_back({used_, rows});
  used_ += rows;
  return idx;
}

int CandidateBatch::add(const FeatureMatrix& m) {
  if (m.cols != cols_ || used_ + m.rows > input_.rows() ||
      size() >= acts_.rows()) {
    throw NetError("candidate batch capacity exceeded");
  }
  std::memcpy(input_.data() + static_cast<std::size_t>(used_) * cols_,
              m.data.data(), m.data.size() * sizeof(float));
  int idx = size();
  auto oh = m.candidateOneHot();
  acts_(idx, 0) = oh[0];
  acts_(idx, 1) = oh[1];
  segments_.push_back({used_, m.rows});
  used_ += m.rows;
  return idx;
}

template struct ParameterSet<float>;
template struct ParameterSet<double>;
template void forwardBatch<float>(const ParameterSet<float>&, const Mat<float>&,
                                  const std::vector<Segment>&,
                                  const Mat<float>&, ForwardCache<float>&);
template void forwardBatch<double>(const ParameterSet<double>&,
                                   const Mat<double>&,
                                   const std::vector<Segment>&,
                                   const Mat<double>&, ForwardCache<double>&);
template void backwardBatch<float>(const ForwardCache<float>&,
                                   const Mat<float>&,
                                   const ParameterSet<float>&,
                                   ParameterSet<float>&);
template void backwardBatch<double>(const ForwardCache<double>&,
                                    const Mat<double>&,
                                    const ParameterSet<double>&,
                                    ParameterSet<double>&);
template Vec<float> embed<float>(const FeatureMatrix&, const ParameterSet<float>&,
                                 ForwardCache<float>&);
template Vec<double> embed<double>(const FeatureMatrix&,
                                   const ParameterSet<double>&,
                                   ForwardCache<double>&);
template void backward<float>(const ForwardCache<float>&, const Vec<float>&,
                              const ParameterSet<float>&, ParameterSet<float>&);
template void backward<double>(const ForwardCache<double>&, const Vec<double>&,
                               const ParameterSet<double>&,
                               ParameterSet<double>&);

} // namespace microrl
