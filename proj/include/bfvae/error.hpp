#pragma once

#include <stdexcept>
#include <string>

namespace bfvae {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or input shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A loss, gradient or solver objective became NaN/Inf.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV/JSON input; message carries the line number when known.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint or run bundle failed validation.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Traversal range of zero width for sample i, dimension k.
class DegenerateRangeError : public Error {
 public:
  DegenerateRangeError(std::size_t sample, std::size_t dim)
      : Error("degenerate traversal range at sample " + std::to_string(sample) +
              ", latent dim " + std::to_string(dim)),
        sample_(sample),
        dim_(dim) {}

  std::size_t sample() const noexcept { return sample_; }
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t sample_;
  std::size_t dim_;
};

/// Operation needs ground-truth factor control that the dataset lacks.
class UnsupportedDatasetError : public Error {
 public:
  using Error::Error;
};

}  // namespace bfvae
