#pragma once

#include <stdexcept>
#include <string>

namespace collafuse {

// Base for every error this library raises on a violated contract.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define COLLAFUSE_DEFINE_ERROR(NAME)                          \
  struct NAME : Error {                                       \
    explicit NAME(const std::string& msg) : Error(msg) {}     \
  }

// tensor core
COLLAFUSE_DEFINE_ERROR(ShapeMismatch);
COLLAFUSE_DEFINE_ERROR(NotScalar);
COLLAFUSE_DEFINE_ERROR(GraphConsumed);
COLLAFUSE_DEFINE_ERROR(MissingGrad);
COLLAFUSE_DEFINE_ERROR(NonFinite);

// diffusion math
COLLAFUSE_DEFINE_ERROR(BadRange);
COLLAFUSE_DEFINE_ERROR(TimestepOutOfRange);
COLLAFUSE_DEFINE_ERROR(TimestepOrder);
COLLAFUSE_DEFINE_ERROR(CutOutOfRange);

// denoiser
COLLAFUSE_DEFINE_ERROR(BadShape);
COLLAFUSE_DEFINE_ERROR(BadDim);
COLLAFUSE_DEFINE_ERROR(LabelRequired);

// protocol
COLLAFUSE_DEFINE_ERROR(InvariantViolation);
COLLAFUSE_DEFINE_ERROR(BadMagic);
COLLAFUSE_DEFINE_ERROR(BadTag);
COLLAFUSE_DEFINE_ERROR(Truncated);
COLLAFUSE_DEFINE_ERROR(ChannelClosed);

// nodes
COLLAFUSE_DEFINE_ERROR(EmptyBatch);
COLLAFUSE_DEFINE_ERROR(DegenerateCut);
COLLAFUSE_DEFINE_ERROR(TimestepLeak);
COLLAFUSE_DEFINE_ERROR(ConfigMismatch);

// metrics
COLLAFUSE_DEFINE_ERROR(DimMismatch);
COLLAFUSE_DEFINE_ERROR(NonPSD);
COLLAFUSE_DEFINE_ERROR(DegenerateLabels);

// data synthesis
COLLAFUSE_DEFINE_ERROR(BadParams);
COLLAFUSE_DEFINE_ERROR(TooFewSamples);

// experiments
COLLAFUSE_DEFINE_ERROR(ConfigError);
COLLAFUSE_DEFINE_ERROR(ResumeMismatch);
COLLAFUSE_DEFINE_ERROR(IoError);

#undef COLLAFUSE_DEFINE_ERROR

}  // namespace collafuse
