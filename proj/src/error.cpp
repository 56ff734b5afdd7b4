#include "itstyler/error.hpp"

namespace itstyler {

std::string_view errc_name(Errc code) {
    switch (code) {
    case Errc::MissingTensor: return "MissingTensor";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::UnreadableArchive: return "UnreadableArchive";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::EmptyPrompt: return "EmptyPrompt";
    case Errc::PromptTooLong: return "PromptTooLong";
    case Errc::EmptyFeatureMap: return "EmptyFeatureMap";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::WeightsNotNormalized: return "WeightsNotNormalized";
    case Errc::TooManyStyles: return "TooManyStyles";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::UndecodableImage: return "UndecodableImage";
    case Errc::UnknownCodeId: return "UnknownCodeId";
    case Errc::InconsistentFrameSize: return "InconsistentFrameSize";
    case Errc::TooFewFrames: return "TooFewFrames";
    case Errc::MissingCalibration: return "MissingCalibration";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::Io: return "Io";
    }
    return "Unknown";
}

} // namespace itstyler
