#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lifereid {

enum class ErrorCode {
  ZeroVector,
  IndexOutOfRange,
  EmptyKeySet,
  LengthMismatch,
  DimensionMismatch,
  LayoutMismatch,
  NonSymmetricInput,
  EmptyCluster,
  NoisyLabelInBatch,
  IdentityWithSingleInstance,
  EmptyPrototypeStore,
  BatchTooSmall,
  BothEmpty,
  EmptyBuffer,
  InvalidSpec,
  MalformedRow,
  HeaderMismatch,
  NoClusters,
  EmptyGallery,
  NoValidQueries,
  DomainMismatch,
  NoValidTriplets,
  InvalidConfig,
  Io,
};

constexpr std::string_view to_string(ErrorCode c) noexcept {
  switch (c) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyKeySet: return "EmptyKeySet";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::NonSymmetricInput: return "NonSymmetricInput";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::NoisyLabelInBatch: return "NoisyLabelInBatch";
    case ErrorCode::IdentityWithSingleInstance: return "IdentityWithSingleInstance";
    case ErrorCode::EmptyPrototypeStore: return "EmptyPrototypeStore";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::BothEmpty: return "BothEmpty";
    case ErrorCode::EmptyBuffer: return "EmptyBuffer";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::NoClusters: return "NoClusters";
    case ErrorCode::EmptyGallery: return "EmptyGallery";
    case ErrorCode::NoValidQueries: return "NoValidQueries";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::NoValidTriplets: return "NoValidTriplets";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lifereid
