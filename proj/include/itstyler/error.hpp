#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace itstyler {

enum class Errc {
    MissingTensor,
    ShapeMismatch,
    UnreadableArchive,
    ImageTooSmall,
    EmptyPrompt,
    PromptTooLong,
    EmptyFeatureMap,
    ChannelMismatch,
    WeightsNotNormalized,
    TooManyStyles,
    DimensionMismatch,
    EmptyBatch,
    NonFiniteLoss,
    EmptyDataset,
    UndecodableImage,
    UnknownCodeId,
    InconsistentFrameSize,
    TooFewFrames,
    MissingCalibration,
    InvalidConfig,
    Io,
};

std::string_view errc_name(Errc code);

// Every recoverable failure in the library surfaces as this exception; `code()`
// is stable and is what the HTTP layer and CLI map to status/exit codes.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code), detail_(message) {}

    Errc code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

} // namespace itstyler
