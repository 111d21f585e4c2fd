#include "igan/tensor.hpp"

namespace igan {

template class Tensor<float>;
template class Tensor<double>;

}  // namespace igan
