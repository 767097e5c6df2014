#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kpp {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can separate library failures from usage mistakes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KPP_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

KPP_DEFINE_ERROR(DimensionError);
KPP_DEFINE_ERROR(DomainError);
KPP_DEFINE_ERROR(ConfigError);
KPP_DEFINE_ERROR(IndexError);
KPP_DEFINE_ERROR(SizeLimitError);
KPP_DEFINE_ERROR(EmptyProblemError);
KPP_DEFINE_ERROR(EmptySampleError);
KPP_DEFINE_ERROR(EmptyBatchError);
KPP_DEFINE_ERROR(DivergenceError);
KPP_DEFINE_ERROR(KinkError);
KPP_DEFINE_ERROR(EncodingError);
KPP_DEFINE_ERROR(NetworkError);
KPP_DEFINE_ERROR(AuthError);
KPP_DEFINE_ERROR(RemoteJobError);
KPP_DEFINE_ERROR(TimeoutError);

#undef KPP_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace kpp
