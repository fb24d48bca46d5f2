// Copyright 2026 The oadtr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "oadtr/data.hpp"
#include "support/tempdir.hpp"

using namespace oadtr;
using oadtr::testing::TempDir;

namespace {

FeatureTrack ramp(std::size_t n, std::size_t dim, std::string id = "v") {
  FeatureTrack f;
  f.video_id = std::move(id);
  f.chunks = n;
  f.dim = dim;
  for (std::size_t i = 0; i < n * dim; ++i) f.values.push_back(static_cast<float>(i) * 0.5f - 3.25f);
  return f;
}

LabelTrack cycle_labels(std::size_t n, std::uint32_t classes) {
  LabelTrack l;
  l.classes = classes;
  for (std::size_t i = 0; i < n; ++i) l.labels.push_back(static_cast<std::uint32_t>((i / 3) % (classes + 1)));
  return l;
}

}  // namespace

TEST(FeatureFile, RoundTripIsBitExact) {
  TempDir dir;
  FeatureTrack f = ramp(7, 3, "clip");
  f.values[4] = std::numeric_limits<float>::denorm_min();
  f.values[5] = -0.0f;
  f.chunk_duration = 0.125;
  write_feature_file(f, dir / "clip.oadf");
  const auto g = read_feature_file(dir / "clip.oadf");
  EXPECT_EQ(g.video_id, "clip");
  EXPECT_EQ(g.chunks, 7u);
  EXPECT_EQ(g.dim, 3u);
  EXPECT_EQ(g.chunk_duration, 0.125);
  ASSERT_EQ(g.values.size(), f.values.size());
  EXPECT_EQ(std::memcmp(g.values.data(), f.values.data(), f.values.size() * sizeof(float)), 0);
  EXPECT_EQ(encode_feature_track(g), encode_feature_track(f));
}

TEST(FeatureFile, LayoutAndSize) {
  const auto bytes = encode_feature_track(ramp(2, 3));
  EXPECT_EQ(bytes.size(), 48u);
  EXPECT_EQ(std::string(bytes.data(), 4), "OADF");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 3u);
  double duration = 0;
  std::memcpy(&duration, bytes.data() + 16, 8);
  EXPECT_EQ(duration, 0.25);
  float first = 0;
  std::memcpy(&first, bytes.data() + 24, 4);
  EXPECT_EQ(first, -3.25f);
}

TEST(FeatureFile, EmptyTrack) {
  const auto f = decode_feature_track(encode_feature_track(ramp(0, 4)));
  EXPECT_EQ(f.chunks, 0u);
  EXPECT_EQ(f.dim, 4u);
  EXPECT_TRUE(f.values.empty());
}

TEST(FeatureFile, MalformedInputsReportOffsets) {
  auto bytes = encode_feature_track(ramp(2, 3));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_feature_track(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  try {
    decode_feature_track(bad_version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  auto truncated = bytes;
  truncated.resize(45);
  try {
    decode_feature_track(truncated);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_GE(e.offset(), 24u);
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_feature_track(trailing), FormatError);
  auto nan_payload = bytes;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan_payload.data() + 28, &nan, 4);
  try {
    decode_feature_track(nan_payload);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 28u);
  }
}

TEST(FeatureFile, RefusesNonFiniteOnWrite) {
  auto f = ramp(2, 2);
  f.values[3] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(encode_feature_track(f), NumericError);
  f.values.pop_back();
  EXPECT_THROW(encode_feature_track(f), DimensionError);
}

TEST(LabelFile, RoundTripAndErrors) {
  const auto l = cycle_labels(11, 2);
  const auto bytes = encode_label_track(l);
  EXPECT_EQ(bytes.size(), 16u + 4u * 11u);
  EXPECT_EQ(std::string(bytes.data(), 4), "OADL");
  const auto back = decode_label_track(bytes);
  EXPECT_EQ(back.labels, l.labels);
  EXPECT_EQ(back.classes, 2u);
  EXPECT_EQ(encode_label_track(back), bytes);

  auto out_of_range = bytes;
  out_of_range[16 + 4 * 3] = 7;
  try {
    decode_label_track(out_of_range);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 28u);
  }
  auto truncated = bytes;
  truncated.resize(20);
  EXPECT_THROW(decode_label_track(truncated), FormatError);
  auto bad = l;
  bad.labels[0] = 3;
  EXPECT_THROW(encode_label_track(bad), LabelError);
}

TEST(Files, MissingFileIsIoError) {
  TempDir dir;
  EXPECT_THROW(read_feature_file(dir / "nope.oadf"), IoError);
  EXPECT_THROW(load_videos(dir / "missing"), IoError);
}

TEST(Files, LoadVideosSortedWithLabels) {
  TempDir dir;
  write_video({ramp(5, 2, "b"), cycle_labels(5, 1)}, dir.path());
  write_video({ramp(3, 2, "a"), cycle_labels(3, 1)}, dir.path());
  const auto videos = load_videos(dir.path());
  ASSERT_EQ(videos.size(), 2u);
  EXPECT_EQ(videos[0].features.video_id, "a");
  EXPECT_EQ(videos[1].labels.size(), 5u);
  write_label_file(cycle_labels(4, 1), dir / "a.oadl");
  EXPECT_THROW(load_videos(dir.path()), FormatError);
}

TEST(TextImport, ParsesRowsAndRejectsBadLines) {
  TempDir dir;
  {
    std::ofstream out(dir / "clip.csv");
    out << "# header\n1.5,2,0\n\n-1,0.25,2\n";
  }
  const auto v = import_text_track(dir / "clip.csv", 2);
  EXPECT_EQ(v.features.video_id, "clip");
  EXPECT_EQ(v.features.chunks, 2u);
  EXPECT_EQ(v.features.values, (std::vector<float>{1.5f, 2.0f, -1.0f, 0.25f}));
  EXPECT_EQ(v.labels.labels, (std::vector<std::uint32_t>{0, 2}));
  {
    std::ofstream out(dir / "bad.csv");
    out << "1,2,0\n1,2,3,0\n";
  }
  try {
    import_text_track(dir / "bad.csv", 2);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 6u);
  }
  {
    std::ofstream out(dir / "label.csv");
    out << "1,2,5\n";
  }
  EXPECT_THROW(import_text_track(dir / "label.csv", 2), FormatError);
}

TEST(Instances, DecompositionIsLossless) {
  LabelTrack l;
  l.classes = 3;
  l.labels = {0, 1, 1, 0, 2, 2, 2, 3, 3, 0, 0, 1};
  const auto inst = l.instances();
  ASSERT_EQ(inst.size(), 4u);
  EXPECT_EQ(inst[0], (ActionInstance{1, 2, 1}));
  EXPECT_EQ(inst[1], (ActionInstance{4, 6, 2}));
  EXPECT_EQ(inst[2], (ActionInstance{7, 8, 3}));
  EXPECT_EQ(inst[3], (ActionInstance{11, 11, 1}));
  EXPECT_EQ(LabelTrack::from_instances(inst, l.size(), 3).labels, l.labels);

  SeededRng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    LabelTrack r;
    r.classes = 4;
    const std::size_t n = rng.below(60);
    for (std::size_t i = 0; i < n; ++i) r.labels.push_back(static_cast<std::uint32_t>(rng.below(5)));
    EXPECT_EQ(LabelTrack::from_instances(r.instances(), n, 4).labels, r.labels);
  }
}

TEST(ColdStart, PaddingRule) {
  const auto f = ramp(6, 2);
  const auto zero = pad_cold_start(f, 0, 3);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(zero[r * 2], f.values[0]);
    EXPECT_EQ(zero[r * 2 + 1], f.values[1]);
  }
  const auto one = pad_cold_start(f, 1, 3);
  const std::vector<float> expect{f.values[0], f.values[1], f.values[0], f.values[1],
                                  f.values[0], f.values[1], f.values[2], f.values[3]};
  EXPECT_EQ(one, expect);
  const auto late = pad_cold_start(f, 5, 3);
  EXPECT_EQ(late, std::vector<float>(f.values.begin() + 4, f.values.end()));
  EXPECT_THROW(pad_cold_start(f, 6, 3), WindowError);
}

TEST(Windows, TrainingCounts) {
  const auto f = ramp(100, 1);
  const auto l = cycle_labels(100, 2);
  const auto w = make_windows(f, l, 63, 8);
  ASSERT_EQ(w.size(), 29u);
  EXPECT_EQ(w.front().chunk, 63u);
  EXPECT_EQ(w.back().chunk, 91u);
  for (const auto& s : w) {
    EXPECT_EQ(s.features.size(), 64u);
    ASSERT_EQ(s.future.size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(s.future[i], l.labels[s.chunk + 1 + i]);
    EXPECT_EQ(s.label, l.labels[s.chunk]);
    EXPECT_EQ(s.features.back(), f.values[s.chunk]);
  }
  EXPECT_EQ(make_windows(ramp(12, 1), cycle_labels(12, 2), 3, 8).size(), 1u);
  EXPECT_EQ(make_windows(ramp(11, 1), cycle_labels(11, 2), 3, 8).size(), 0u);
  WindowOptions strided;
  strided.stride = 5;
  EXPECT_EQ(make_windows(f, l, 63, 8, strided).size(), 6u);
  WindowOptions padded;
  padded.require_full_future = false;
  const auto all = make_windows(f, l, 63, 8, padded);
  EXPECT_EQ(all.size(), 37u);
  EXPECT_EQ(all.back().future, std::vector<std::uint32_t>(8, 0));
}

TEST(Windows, EvaluationCoversEveryChunkOnce) {
  const auto f = ramp(20, 2);
  WindowOptions eval;
  eval.mode = WindowMode::evaluation;
  const auto w = make_windows(f, cycle_labels(20, 2), 7, 4, eval);
  ASSERT_EQ(w.size(), 20u);
  for (std::size_t t = 0; t < 20; ++t) {
    EXPECT_EQ(w[t].chunk, t);
    EXPECT_EQ(w[t].future.size(), std::min<std::size_t>(4, 19 - t));
  }
  EXPECT_TRUE(make_windows(ramp(0, 2), cycle_labels(0, 2), 7, 4, eval).empty());
  EXPECT_THROW(make_windows(f, cycle_labels(19, 2), 7, 4), WindowError);
  WindowOptions bad;
  bad.stride = 0;
  EXPECT_THROW(make_windows(f, cycle_labels(20, 2), 7, 4, bad), ConfigError);
}

TEST(Batches, CountsAndReproducibility) {
  const auto b = batch_iterator(10, 4, 9, 0);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].size(), 4u);
  EXPECT_EQ(b[1].size(), 4u);
  EXPECT_EQ(b[2].size(), 2u);
  std::set<std::size_t> seen;
  for (const auto& batch : b) seen.insert(batch.begin(), batch.end());
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(batch_iterator(10, 4, 9, 0), b);
  EXPECT_NE(batch_iterator(100, 100, 9, 1), batch_iterator(100, 100, 9, 0));
  EXPECT_NE(batch_iterator(100, 100, 8, 0), batch_iterator(100, 100, 9, 0));
  EXPECT_THROW(batch_iterator(10, 0, 9, 0), ConfigError);
}

TEST(Batches, Collate) {
  const auto f = ramp(20, 2);
  const auto w = make_windows(f, cycle_labels(20, 2), 3, 2);
  const std::vector<std::size_t> idx{2, 0};
  const auto batch = collate<double>(w, idx, 4, 2, 2);
  EXPECT_EQ(batch.size, 2u);
  EXPECT_EQ(batch.features.shape(), (Shape{8, 2}));
  EXPECT_EQ(batch.features.at(0, 0), static_cast<double>(w[2].features[0]));
  EXPECT_EQ(batch.features.at(4, 1), static_cast<double>(w[0].features[1]));
  EXPECT_EQ(batch.labels, (std::vector<std::size_t>{w[2].label, w[0].label}));
  EXPECT_EQ(batch.future.size(), 4u);
  EXPECT_THROW(collate<double>(w, std::vector<std::size_t>{}, 4, 2, 2), ContractError);
  EXPECT_THROW(collate<double>(w, idx, 5, 2, 2), WindowError);
}

TEST(Synthetic, DeterministicAndSeedSensitive) {
  auto spec = make_synthetic_spec(3, 8, 1234);
  spec.total_chunks = 2000;
  spec.seed = 5;
  const auto a = generate_synthetic(spec), b = generate_synthetic(spec);
  EXPECT_EQ(encode_feature_track(a.video.features), encode_feature_track(b.video.features));
  EXPECT_EQ(a.video.labels.labels, b.video.labels.labels);
  spec.seed = 6;
  EXPECT_NE(generate_synthetic(spec).video.labels.labels, a.video.labels.labels);
  EXPECT_EQ(a.video.features.chunks, 2000u);
  EXPECT_EQ(a.video.labels.size(), 2000u);
}

TEST(Synthetic, SegmentLengthStatistic) {
  auto spec = make_synthetic_spec(3, 2, 1);
  spec.total_chunks = 100000;
  spec.mean_segment_length = 8;
  const auto track = generate_synthetic(spec);
  const double mean = std::accumulate(track.segment_lengths.begin(), track.segment_lengths.end(), 0.0) /
                      static_cast<double>(track.segment_lengths.size());
  EXPECT_NEAR(mean, 8.0, 0.8);
}

TEST(Synthetic, NearestMeanIsPerfectWithoutNoiseOrMixing) {
  auto spec = make_synthetic_spec(3, 8, 77);
  spec.noise = 1e-6;
  spec.total_chunks = 3000;
  const auto track = generate_synthetic(spec);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < track.video.features.chunks; ++t) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < spec.class_means.size(); ++k) {
      double d = 0;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        const double diff = track.video.features.row(t)[j] - spec.class_means[k][j];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    correct += best == track.video.labels.labels[t] ? 1 : 0;
  }
  EXPECT_EQ(correct, track.video.features.chunks);
}

TEST(Synthetic, TransitionsFollowTheCycle) {
  auto spec = make_synthetic_spec(3, 2, 1);
  spec.total_chunks = 20000;
  const auto labels = generate_synthetic(spec).video.labels.labels;
  for (std::size_t t = 1; t < labels.size(); ++t) {
    if (labels[t] == labels[t - 1]) continue;
    const auto step = (labels[t] + 4 - labels[t - 1]) % 4;
    EXPECT_TRUE(step == 1 || step == 2);
  }
}

TEST(Synthetic, InvalidSpecs) {
  auto spec = make_synthetic_spec(2, 4, 1);
  spec.transitions[1][0] += 0.1;
  EXPECT_THROW(generate_synthetic(spec), SpecError);
  spec = make_synthetic_spec(2, 4, 1);
  spec.noise = 0;
  EXPECT_THROW(generate_synthetic(spec), SpecError);
  spec = make_synthetic_spec(2, 4, 1);
  spec.class_means.pop_back();
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
  for (const auto& row : cyclic_transitions(5)) EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-15);
}
