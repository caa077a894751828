#pragma once

#include <stdexcept>
#include <string>

// Error taxonomy shared across the library. Everything derives from
// ovgsr::Error so callers can catch the whole family at the CLI boundary.
namespace ovgsr {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data loading and validation.
struct MalformedAnnotation : Error { using Error::Error; };
struct UnknownSymbol : Error { using Error::Error; };
struct DegenerateBox : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct InsufficientVerbs : Error { using Error::Error; };

// Numerics.
struct ShapeMismatch : Error { using Error::Error; };
struct ZeroVector : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };

// Encoders.
struct EncoderUnavailable : Error { using Error::Error; };
struct DecodeError : Error { using Error::Error; };
struct EmptyText : Error { using Error::Error; };

// Rationale generation.
struct BackendError : Error { using Error::Error; };
struct InvalidScore : Error { using Error::Error; };
struct MissingRationale : Error { using Error::Error; };
struct NoSubstitutionAvailable : Error { using Error::Error; };
struct CacheCorrupt : Error { using Error::Error; };

// Evaluation and I/O.
struct MissingPrediction : Error { using Error::Error; };
struct InvalidConfig : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };

}  // namespace ovgsr
