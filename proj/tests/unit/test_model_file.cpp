#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "tpm/error.hpp"
#include "tpm/model_file.hpp"
#include "tpm/pipeline.hpp"
#include "tpm/synthetic.hpp"

namespace tpm {
namespace {

namespace fs = std::filesystem;

RunConfig quick_config(Method method) {
  RunConfig c;
  c.method = method;
  c.seed = 3;
  c.net.hidden_dims = {8};
  c.train.epochs = 1;
  c.train.batch_size = 64;
  c.num_leaves = 8;
  c.num_groups = 2;
  return c;
}

const Dataset& shared_data() {
  static const Dataset data = [] {
    SyntheticSpec spec;
    spec.rows = 300;
    spec.seed = 4;
    return generate_synthetic(spec).data;
  }();
  return data;
}

class RoundTrip : public ::testing::TestWithParam<Method> {};

TEST_P(RoundTrip, DecodedModelEqualsOriginal) {
  RunConfig c = quick_config(GetParam());
  if (GetParam() == Method::kTpmDeconfounded) {
    c.conditioning = Conditioning::kSeparateNets;
    c.predict_mode = PredictMode::kDo;
  }
  const ModelFile file = train_model(c, shared_data());
  const ModelFile back = decode_model(encode_model(file));
  EXPECT_EQ(back.method(), GetParam());
  EXPECT_EQ(back.model, file.model);
  EXPECT_EQ(back.config, file.config);

  const auto a = predict_all(file.model, shared_data());
  const auto b = predict_all(back.model, shared_data());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].value, b[i].value);
    EXPECT_EQ(a[i].std_dev, b[i].std_dev);
  }
  // Encoding is a pure function of the model.
  EXPECT_EQ(encode_model(back), encode_model(file));
}

INSTANTIATE_TEST_SUITE_P(Methods, RoundTrip,
                         ::testing::Values(Method::kTpm, Method::kTpmDeconfounded,
                                           Method::kWlr, Method::kD2q, Method::kOr),
                         [](const auto& info) {
                           std::string name(to_string(info.param));
                           std::erase(name, '-');
                           return name;
                         });

TEST(ModelFile, SaveAndLoad) {
  const fs::path dir = fs::path(TPM_TEST_TMPDIR) / "model_file";
  fs::create_directories(dir);
  const ModelFile file = train_model(quick_config(Method::kTpm), shared_data());
  save_model(dir / "m.tpm", file);
  EXPECT_EQ(load_model(dir / "m.tpm").model, file.model);
  EXPECT_THROW(load_model(dir / "missing.tpm"), Error);
}

ErrorKind decode_kind(std::string_view bytes) {
  try {
    decode_model(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return ErrorKind::kInvalidArgument;
}

std::string decode_message(std::string_view bytes) {
  try {
    decode_model(bytes);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

TEST(ModelFile, CorruptionIsDetected) {
  const std::string bytes = encode_model(train_model(quick_config(Method::kTpm), shared_data()));
  for (std::size_t pos : {std::size_t{20}, bytes.size() / 2, bytes.size() - 10}) {
    std::string bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x5A);
    EXPECT_EQ(decode_kind(bad), ErrorKind::kModelFormat);
    EXPECT_NE(decode_message(bad).find("checksum"), std::string::npos);
  }
}

TEST(ModelFile, BadMagicVersionAndTruncation) {
  const std::string bytes = encode_model(train_model(quick_config(Method::kWlr), shared_data()));
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(decode_kind(magic), ErrorKind::kModelFormat);
  EXPECT_NE(decode_message(magic).find("magic"), std::string::npos);

  std::string version = bytes;
  version[8] = static_cast<char>(kModelFormatVersion + 1);
  EXPECT_EQ(decode_kind(version), ErrorKind::kModelFormat);
  EXPECT_NE(decode_message(version).find("version 2"), std::string::npos);

  EXPECT_EQ(decode_kind(bytes.substr(0, bytes.size() - 1)), ErrorKind::kModelFormat);
  EXPECT_EQ(decode_kind(bytes.substr(0, 10)), ErrorKind::kModelFormat);
  EXPECT_EQ(decode_kind(""), ErrorKind::kModelFormat);
}

TEST(MethodNames, RoundTrip) {
  for (Method m : {Method::kTpm, Method::kTpmDeconfounded, Method::kWlr, Method::kD2q,
                   Method::kOr}) {
    EXPECT_EQ(method_from_string(to_string(m)), m);
  }
  EXPECT_EQ(to_string(Method::kTpmDeconfounded), "tpm-deconfounded");
  EXPECT_THROW(method_from_string("gbdt"), Error);
}

}  // namespace
}  // namespace tpm
