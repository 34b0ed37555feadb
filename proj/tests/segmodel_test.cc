#include "eendvc/segmodel.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "eendvc/error.h"
#include "eendvc/seqnet.h"
#include "gradcheck.h"
#include "oracles.h"

namespace eendvc {
namespace {

using testing::random_matrix;

ModelConfig tiny(Processing p, LossType l) {
  ModelConfig c;
  c.processing = p;
  c.loss_type = l;
  c.input_dim = 5;
  c.d_model = 6;
  c.n_blocks = 1;
  c.d_state = 3;
  c.lstm_layers = 1;
  c.lstm_hidden = 4;
  c.head_hidden = 7;
  c.seed = 3;
  return c;
}

TEST(ModelConfig, OutputWidthMatchesClassCount) {
  ModelConfig c;
  c.loss_type = LossType::kMultilabel;
  c.max_speakers = 4;
  EXPECT_EQ(build_model(c).num_classes(), 4);
  c.loss_type = LossType::kPowerset;
  c.max_simultaneous = 2;
  EXPECT_EQ(build_model(c).num_classes(), 11);
  for (int n = 1; n <= 6; ++n) {
    for (int k = 1; k <= std::min(n, 3); ++k) {
      ModelConfig e = tiny(Processing::kMamba, LossType::kPowerset);
      e.max_speakers = n;
      e.max_simultaneous = k;
      const SegmentationModel m = build_model(e);
      EXPECT_EQ(segment_forward(m, Matrix::Zero(3, 5)).cols(), powerset_size(n, k));
      e.loss_type = LossType::kMultilabel;
      EXPECT_EQ(segment_forward(build_model(e), Matrix::Zero(3, 5)).cols(), n);
    }
  }
}

TEST(ModelConfig, InconsistentConfigsAreRejected) {
  ModelConfig c;
  c.max_speakers = 2;
  c.max_simultaneous = 3;
  EXPECT_THROW(build_model(c), ConfigError);
  c = ModelConfig{};
  c.max_speakers = 9;
  EXPECT_THROW(build_model(c), ConfigError);
}

TEST(ModelConfig, LstmProcessingFeedsTwiceTheHiddenSizeToTheHead) {
  ModelConfig c = ModelConfig::full_lstm();
  c.input_dim = 8;
  const SegmentationModel m = build_model(c);
  const auto& store = m.params();
  EXPECT_EQ(store.value(store.index_of("head.0.weight")).rows(), 256);
}

TEST(ModelConfig, JsonRoundTripAndUnknownKeys) {
  ModelConfig c = tiny(Processing::kLstm, LossType::kMultilabel);
  c.window = 5.0;
  const ModelConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.processing, Processing::kLstm);
  EXPECT_THROW(config_from_json(R"({"windows": 3})"), ConfigError);
  EXPECT_THROW(config_from_json("[1, 2"), ParseError);
}

TEST(SegmentForward, TenSecondWindowAtFiftyFps) {
  ModelConfig c;
  c.max_speakers = 3;
  c.max_simultaneous = 2;
  const SegmentationModel m = build_model(c);
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(rng, 500, 40);
  const Matrix p = segment_forward(m, x);
  EXPECT_EQ(p.rows(), 500);
  EXPECT_EQ(p.cols(), 7);
  for (Index t = 0; t < p.rows(); ++t) EXPECT_NEAR(p.row(t).sum(), 1.0, 1e-12);
  EXPECT_EQ(segment_forward(m, x), p);
}

TEST(SegmentForward, MultilabelOutputsAreProbabilities) {
  const SegmentationModel m = build_model(tiny(Processing::kLstm, LossType::kMultilabel));
  std::mt19937_64 rng(2);
  const Matrix p = segment_forward(m, random_matrix(rng, 20, 5));
  EXPECT_GE(p.minCoeff(), 0.0);
  EXPECT_LE(p.maxCoeff(), 1.0);
}

TEST(SegmentForward, NonFiniteInputIsRejected) {
  const SegmentationModel m = build_model(tiny(Processing::kMamba, LossType::kPowerset));
  Matrix x = Matrix::Zero(4, 5);
  x(1, 2) = NAN;
  EXPECT_THROW(segment_forward(m, x), NumericalError);
}

double model_gradcheck(Processing p, LossType l) {
  SegmentationModel m = build_model(tiny(p, l));
  std::mt19937_64 rng(4);
  return testing::module_gradcheck(
      m.params(), random_matrix(rng, 6, 5), [&](ad::Graph& g, ad::Var x) { return m.logits(g, x.value()); }, 9, 40,
      false);
}

TEST(SegmentationModel, GradientsMatchFiniteDifferences) {
  EXPECT_LT(model_gradcheck(Processing::kMamba, LossType::kPowerset), 1e-4);
  EXPECT_LT(model_gradcheck(Processing::kLstm, LossType::kMultilabel), 1e-4);
}

TEST(Head, GradientsMatchFiniteDifferences) {
  ad::ParamStore store;
  Initializer init(5);
  const Linear l1(store, "h0", 6, 8, true, init), l2(store, "h1", 8, 8, true, init), l3(store, "c", 8, 4, true, init);
  std::mt19937_64 rng(6);
  auto head = [&](ad::Graph& g, ad::Var x) {
    return l3(g, ad::leaky_relu(l2(g, ad::leaky_relu(l1(g, x)))));
  };
  EXPECT_LT(testing::module_gradcheck(store, random_matrix(rng, 5, 6), head, 7, 0), 1e-4);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  SegmentationModel m = build_model(tiny(Processing::kMamba, LossType::kPowerset));
  m.params().round_to_f32();
  const auto path = (std::filesystem::temp_directory_path() / "eendvc_model_test.sdmd").string();
  save_model(path, m);
  const SegmentationModel back = load_model(path);
  ASSERT_EQ(back.params().size(), m.params().size());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    EXPECT_EQ(back.params()[i].name, m.params()[i].name);
    EXPECT_EQ(back.params()[i].value, m.params()[i].value);
  }
  EXPECT_EQ(config_to_json(back.config()), config_to_json(m.config()));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const SegmentationModel m = build_model(tiny(Processing::kLstm, LossType::kMultilabel));
  std::string bytes = encode_model(m);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_model(bad_magic), FormatError);
  EXPECT_THROW(decode_model(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(load_model("/nonexistent/model.sdmd"), FormatError);
}

}  // namespace
}  // namespace eendvc
