#include "iet/tensor.hpp"

#include <cmath>

namespace iet {

void Tensor::check_finite(const char* what) const {
  for (size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError(std::string("non-finite value in ") + what +
                         " at flat index " + std::to_string(i));
    }
  }
}

}  // namespace iet
