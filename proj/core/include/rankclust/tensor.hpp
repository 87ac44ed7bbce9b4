#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace rankclust {

enum class Role { q, k, v, o, gate, up, down, other };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

// D x O weight matrix, row-major. Row d holds the weights leaving input d,
// so y = matvec(W, x) computes y[o] = sum_d x[d] * W[d, o].
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<float> values,
              Role role = Role::other);

  static DenseMatrix zeros(std::size_t rows, std::size_t cols, Role role = Role::other);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  Role role() const noexcept { return role_; }

  std::span<const float> values() const noexcept { return values_; }
  std::span<const float> row(std::size_t d) const noexcept {
    return std::span<const float>(values_).subspan(d * cols_, cols_);
  }
  float operator()(std::size_t d, std::size_t o) const noexcept {
    return values_[d * cols_ + o];
  }

  DenseMatrix with_role(Role role) const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> values_;
  Role role_ = Role::other;
};

struct WeightStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

std::vector<float> matvec(const DenseMatrix& w, std::span<const float> x);

WeightStats stats(std::span<const float> values);
WeightStats stats(const DenseMatrix& w);

inline constexpr float kDefaultNormEps = 1e-5f;

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gain,
                              std::span<const float> bias, float eps = kDefaultNormEps);
std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain,
                            float eps = kDefaultNormEps);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace rankclust
