#pragma once

// Versioned binary model envelope shared by every method.
//
// Layout (all integers and floats little-endian):
//   8 bytes   magic "TPMMODEL"
//   u32       format version
//   u64       header length, then a UTF-8 JSON header describing the method,
//             structure and array shapes
//   u64       number of f64 values, then the values as IEEE-754 binary64
//   u32       CRC-32 of every preceding byte

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "tpm/baselines.hpp"
#include "tpm/deconfound.hpp"
#include "tpm/progressive.hpp"

namespace tpm {

inline constexpr std::uint32_t kModelFormatVersion = 1;

enum class Method { kTpm, kTpmDeconfounded, kWlr, kD2q, kOr };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

struct DeconfoundedPredictor {
  DeconfoundedModel model;
  PredictMode mode = PredictMode::kConditional;

  friend bool operator==(const DeconfoundedPredictor&,
                         const DeconfoundedPredictor&) = default;
};

// Alternatives are in Method order.
using AnyModel =
    std::variant<TpmModel, DeconfoundedPredictor, WlrModel, D2qModel, OrModel>;

Method method_of(const AnyModel& model);

struct ModelFile {
  AnyModel model;
  // Free-form record of the run configuration that produced the model.
  nlohmann::ordered_json config = nlohmann::ordered_json::object();

  Method method() const { return method_of(model); }
};

std::string encode_model(const ModelFile& file);
// Throws Error(kModelFormat) on bad magic, unsupported version, checksum
// mismatch, truncation or inconsistent structure.
ModelFile decode_model(std::string_view bytes);

void save_model(const std::filesystem::path& path, const ModelFile& file);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace tpm
