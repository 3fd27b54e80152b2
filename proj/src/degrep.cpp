#include "blindsnf/degrep.hpp"

namespace blindsnf {

namespace {
constexpr Index kChannels[6] = {64, 64, 128, 128, 256, 256};
constexpr Index kStrides[6] = {1, 1, 2, 1, 2, 1};
constexpr double kSlope = 0.1;
}  // namespace

template <typename Scalar>
DegradationEncoder<Scalar>::DegradationEncoder(Rng& rng, Index proj_dim, int num_layers) {
  if (num_layers < 1 || num_layers > 6) throw ParameterError("degradation encoder has 1..6 layers");
  Index in = 3;
  for (int i = 0; i < num_layers; ++i) {
    convs_.emplace_back(in, kChannels[i], 3, kStrides[i], 1, rng);
    norms_.emplace_back(kChannels[i]);
    in = kChannels[i];
  }
  head_.emplace_back(in, in, rng);
  head_.emplace_back(in, in, rng);
  head_.emplace_back(in, proj_dim, rng);
}

template <typename Scalar>
Var<Scalar> DegradationEncoder<Scalar>::encode(const Var<Scalar>& x_lr, bool training) const {
  if (x_lr.value().rank() != 4 || x_lr.dim(1) != 3 || x_lr.dim(2) < 4 || x_lr.dim(3) < 4) {
    throw DimensionError("degradation encoder needs (N,3,h,w) with h,w >= 4, got " + shape_string(x_lr.shape()));
  }
  Var<Scalar> h = x_lr;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = leaky_relu(norms_[i](convs_[i](h), training), static_cast<Scalar>(kSlope));
  }
  return global_avg_pool(h);
}

template <typename Scalar>
Var<Scalar> DegradationEncoder<Scalar>::project(const Var<Scalar>& v) const {
  Var<Scalar> h = leaky_relu(head_[0](v), static_cast<Scalar>(kSlope));
  h = leaky_relu(head_[1](h), static_cast<Scalar>(kSlope));
  return head_[2](h);
}

template <typename Scalar>
void DegradationEncoder<Scalar>::collect(const std::string& prefix, nn::ParameterList<Scalar>& out) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
    norms_[i].collect(prefix + ".bn" + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < head_.size(); ++i) head_[i].collect(prefix + ".mlp" + std::to_string(i), out);
}

template <typename Scalar>
NegativeQueue<Scalar>::NegativeQueue(Index capacity, Index dim, Scalar temperature)
    : capacity_(capacity), dim_(dim), temperature_(temperature) {
  if (capacity <= 0 || dim <= 0) throw ParameterError("queue capacity and dimension must be positive");
  if (!(temperature > Scalar(0))) throw ParameterError("temperature must be positive");
}

template <typename Scalar>
void NegativeQueue<Scalar>::push(const Tensor<Scalar>& batch) {
  if (batch.empty()) return;
  if (batch.rank() != 2 || batch.dim(1) != dim_) {
    throw DimensionError("queue push expects (N," + std::to_string(dim_) + "), got " + shape_string(batch.shape()));
  }
  for (Index i = 0; i < batch.dim(0); ++i) {
    entries_.emplace_back(batch.matrix().row(i).transpose());
    if (static_cast<Index>(entries_.size()) > capacity_) entries_.pop_front();
  }
}

template <typename Scalar>
Tensor<Scalar> NegativeQueue<Scalar>::matrix() const {
  if (entries_.empty()) throw StateError("negative queue is empty");
  Tensor<Scalar> out(Shape{size(), dim_});
  for (Index i = 0; i < size(); ++i) out.matrix().row(i) = entries_[static_cast<std::size_t>(i)].transpose();
  return out;
}

template class DegradationEncoder<float>;
template class DegradationEncoder<double>;
template class NegativeQueue<float>;
template class NegativeQueue<double>;

}  // namespace blindsnf
