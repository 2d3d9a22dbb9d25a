#include <doctest.h>

#include "blinklight/dataset.hpp"

using namespace blinklight;
using namespace blinklight::dataset;

namespace {

pose::JointMatrix joints(std::size_t frames, const std::string& id = "c") {
  pose::JointMatrix j;
  j.clip_id = id;
  j.values = pose::RowMatrix(frames, kChannelCount);
  for (Eigen::Index r = 0; r < j.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < j.values.cols(); ++c) j.values(r, c) = static_cast<double>(r) + 0.01 * c;
  }
  return j;
}

blink::BlinkRateSeries rates(std::size_t frames) {
  blink::BlinkRateSeries s;
  s.clip_id = "c";
  for (std::size_t f = 0; f < frames; ++f) s.values.push_back(0.001 * static_cast<double>(f));
  return s;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("window counts and alignment") {
    const auto w = build_windows(joints(92), rates(92));
    REQUIRE(w.size() == 3);
    CHECK(w[0].end_frame == 89);
    CHECK(w[2].end_frame == 91);
    CHECK(w[2].target == doctest::Approx(0.091));
    CHECK(w[1].input(0, 0) == 1.0);    // first row is frame end - 89
    CHECK(w[1].input(89, 0) == 90.0);  // last row is the labelled frame
    CHECK(build_windows(joints(90), rates(90)).size() == 1);

    BuildStats st;
    CHECK(build_windows(joints(89), rates(89), 90, 1, &st).empty());
    CHECK(st.too_short);
  }

  TEST_CASE("stride") {
    const auto w = build_windows(joints(200), rates(200), 90, 10);
    CHECK(w.size() == 12);  // ends 89, 99, ..., 199
    CHECK(w.back().end_frame == 199);
  }

  TEST_CASE("length mismatch is rejected") {
    CHECK_THROWS_AS(build_windows(joints(100), rates(99)), ConfigError);
  }

  TEST_CASE("leave-one-out folds") {
    const std::vector<std::string> ids{"A", "B", "C"};
    const auto plan = loocv_splits(ids);
    REQUIRE(plan.folds.size() == 3);
    CHECK(plan.folds[0] == Fold{{"B", "C"}, "A"});
    CHECK(plan.folds[1] == Fold{{"A", "C"}, "B"});
    CHECK(plan.folds[2] == Fold{{"A", "B"}, "C"});
    std::vector<std::string> many;
    for (int i = 0; i < 48; ++i) many.push_back(std::to_string(i));
    const auto big = loocv_splits(many);
    CHECK(big.folds.size() == 48);
    CHECK(big.folds[17].train_clip_ids.size() == 47);
    CHECK_THROWS_AS(loocv_splits(std::vector<std::string>{"A"}), ConfigError);
  }

  TEST_CASE("container round-trip and corruption") {
    const auto w = build_windows(joints(95), rates(95));
    DatasetHeader h;
    const auto bytes = encode_dataset(h, w);
    DatasetHeader back_header;
    const auto back = decode_dataset(bytes, &back_header);
    REQUIRE(back.size() == w.size());
    CHECK(back[3].input == w[3].input);
    CHECK(back[3].clip_id == "c");
    CHECK(back_header.channel_order == "xy-interleaved-18");
    auto bad = bytes;
    bad[bad.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(decode_dataset(bad), ParseError);
    CHECK(dataset_to_csv(w).rfind("clip_id,end_frame,target,v0,", 0) == 0);
  }
}
