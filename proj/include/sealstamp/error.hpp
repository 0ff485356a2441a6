#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sealstamp {

enum class ErrorCode {
  validation,
  io,
  format,
  authentication,  // AEAD tag mismatch: wrong password, wrong shares, tampering
  integrity,       // decryption succeeded but digests disagree with the record
  not_found,
  conflict,
  entropy,
  corruption,      // on-disk log or ledger fails replay
  unavailable,     // remote endpoint unreachable after retries
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace sealstamp
