// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "epr/io.hpp"
#include "support.hpp"

using namespace epr;

TEST_CASE("doubles round-trip through text") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, 0.0})
    CHECK(parse_double(format_double(v), "t") == v);
  CHECK_THROWS_AS(parse_double("1.5x", "t"), DataError);
  CHECK_THROWS_AS(parse_long("", "t"), DataError);
}

TEST_CASE("CSV reading") {
  testing::TempDir dir("csv");
  {
    std::ofstream os(dir / "a.csv");
    os << "x,y\r\n1,2\n\n3,4\n";
  }
  const auto t = read_csv(dir / "a.csv");
  CHECK(t.header == std::vector<std::string>{"x", "y"});
  CHECK(t.rows.size() == 2u);
  CHECK(t.column("y") == 1u);
  CHECK_THROWS_AS(t.column("z"), DataError);
  {
    std::ofstream os(dir / "b.csv");
    os << "x,y\n1\n";
  }
  CHECK_THROWS_AS(read_csv(dir / "b.csv"), DataError);
  CHECK_THROWS_AS(read_csv(dir / "none.csv"), DataError);
}

TEST_CASE("EP CSV round trip is exact") {
  testing::TempDir dir("ep");
  EpMap eps;
  eps["b"] = build_ep({EmotionDistribution({0.1, 0.2, 0.7}), EmotionDistribution({1.0 / 3, 1.0 / 3, 1.0 / 3})}, "b", 2);
  eps["a"] = build_ep({EmotionDistribution({0.5, 0.25, 0.25})}, "a", 2);
  const std::string text = ep_csv(eps);
  CHECK(text.rfind("utterance_id,segment_index,generation,p_1,p_2,p_3\n", 0) == 0);
  write_text_atomic(dir / "eps.csv", text);
  const auto back = read_ep_csv(dir / "eps.csv");
  REQUIRE(back.size() == 2u);
  CHECK(back.at("b").values == eps["b"].values);
  CHECK(back.at("a").generation == 2);
  CHECK(ep_csv(back) == text);
}

TEST_CASE("representation, predictions and confusion exports") {
  testing::TempDir dir("rep");
  std::vector<UtteranceRepresentation> reps{{{0.1, 0.2}, "u1", 1}, {{0.3, 0.4}, "u2", 1}};
  write_text_atomic(dir / "r.csv", representation_csv(reps));
  const auto back = read_representation_csv(dir / "r.csv");
  CHECK(back[1].features == reps[1].features);
  CHECK(representation_csv(reps).rfind("utterance_id,f_1,f_2\n", 0) == 0);
  CHECK(predictions_csv({"u1"}, {0}, {1}, {"ang", "hap"}) == "utterance_id,true,pred\nu1,ang,hap\n");
  const auto cm = ConfusionMatrix::from_rows({{2, 1}, {0, 3}});
  CHECK(confusion_csv(cm, {"ang", "hap"}) == "true\\pred,ang,hap\nang,2,1\nhap,0,3\n");
}

TEST_CASE("manifest round trip and validation") {
  testing::TempDir dir("manifest");
  CorpusManifest m;
  m.class_names = {"sad", "happy"};
  m.entries = {{"u1", "a.wav", "happy", "s1"}, {"u2", "b.wav", "sad", "s2"}};
  write_manifest(m, dir.str());
  const auto back = read_manifest(dir / "manifest.csv");
  CHECK(back.class_names == m.class_names);
  CHECK(back.entries.size() == 2u);
  CHECK(back.label_index("happy") == 1);
  CHECK(back.resolve(back.entries[0]) == dir / "a.wav");
  m.entries.push_back({"u1", "c.wav", "sad", "s1"});
  CHECK_THROWS_AS(m.validate(), DataError);
  m.entries.pop_back();
  m.entries.push_back({"u3", "c.wav", "angry", "s1"});
  CHECK_THROWS_AS(m.validate(), DataError);
  m.entries.back() = {"bad/id", "c.wav", "sad", "s1"};
  CHECK_THROWS_AS(m.validate(), DataError);
}

TEST_CASE("corpus file-name conventions") {
  const auto casia = parse_corpus_filename(CorpusConvention::kCasia, "/x/angry_liuchanhg_201.wav");
  CHECK(casia.label == "angry");
  CHECK(casia.speaker == "liuchanhg");
  CHECK(casia.utterance_id == "angry_liuchanhg_201");
  const auto emo = parse_corpus_filename(CorpusConvention::kEmoDb, "03a01Fa.wav");
  CHECK(emo.label == "happiness");
  CHECK(emo.speaker == "03");
  CHECK(parse_corpus_filename(CorpusConvention::kEmoDb, "16b10Wb.wav").label == "anger");
  CHECK(parse_corpus_filename(CorpusConvention::kEmoDb, "11a02Lc.wav").label == "boredom");
  const auto sav = parse_corpus_filename(CorpusConvention::kSavee, "DC_su03.wav");
  CHECK(sav.label == "surprise");
  CHECK(sav.speaker == "DC");
  const auto sav2 = parse_corpus_filename(CorpusConvention::kSavee, "/data/JK/sa12.wav");
  CHECK(sav2.label == "sadness");
  CHECK(sav2.speaker == "JK");
  CHECK(sav2.utterance_id == "JK_sa12");
  CHECK_THROWS_AS(parse_corpus_filename(CorpusConvention::kEmoDb, "03a01Xa.wav"), DataError);
  CHECK_THROWS_AS(parse_corpus_filename(CorpusConvention::kSavee, "DC_x01.wav"), DataError);
  CHECK_THROWS_AS(parse_corpus_filename(CorpusConvention::kCasia, "angry.wav"), DataError);
  CHECK_THROWS_AS(parse_convention("iemocap"), ConfigError);

  testing::TempDir dir("conv");
  std::filesystem::create_directories(dir / "DC");
  write_wav_pcm16(dir / "DC/a01.wav", std::vector<double>(800, 0.0), 16000);
  write_wav_pcm16(dir / "DC/n02.wav", std::vector<double>(800, 0.0), 16000);
  const auto m = build_manifest(CorpusConvention::kSavee, dir.str());
  CHECK(m.entries.size() == 2u);
  CHECK(m.entries[0].label == "anger");
  CHECK(m.entries[1].path == "DC/n02.wav");
}

TEST_CASE("spectrogram CSV keeps rows as mel bins") {
  testing::TempDir dir("spec");
  LogMelSpectrogram s;
  s.values = Matrix::Random(4, 6);
  write_spectrogram_csv(s, dir / "s.csv");
  const auto back = read_spectrogram_csv(dir / "s.csv", "u");
  CHECK(back.values == s.values);
  CHECK(read_csv(dir / "s.csv", false).rows.size() == 4u);
}
