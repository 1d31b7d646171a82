// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "cvrm/fusion/fusion.hpp"

using namespace cvrm;
using namespace cvrm::fusion;

namespace {

const data::AtcTable& atc() {
  static const auto t = data::AtcTable::load_bundled();
  return t;
}

Vec basis(std::size_t i, double scale = 1.0) {
  Vec v(kMedDim, 0.0);
  v[i] = scale;
  return v;
}

}  // namespace

TEST(Anthropometrics, NormalizedAgeAndOneHot) {
  const auto a = anthropometrics(83, data::Gender::female);
  EXPECT_NEAR(a.normalized_age, (83 - 74.5) / 9.3, 1e-12);
  EXPECT_EQ(a.values(), (Vec{(83 - 74.5) / 9.3, 0.0, 1.0}));
  const auto m = anthropometrics(65, data::Gender::male);
  EXPECT_EQ(m.gender_onehot[0], 1.0);
  EXPECT_EQ(m.gender_onehot[1], 0.0);
}

TEST(MedEmbedding, HashedIsUnitNormAndDeterministic) {
  const auto e = MedEmbedder::hashed(atc());
  const auto v = e.embed("C07AB02");
  ASSERT_EQ(v.size(), kMedDim);
  EXPECT_NEAR(l2_norm(v), 1.0, 1e-12);
  EXPECT_EQ(v, e.embed("C07AB02"));
  EXPECT_NE(v, e.embed("C07AB03"));
  EXPECT_EQ(l2_norm(hashed_fallback_embed("  123 ")), 0.0);
}

TEST(MedEmbedding, HashedDependsOnDecompressedDescription) {
  const auto v = MedEmbedder::hashed(atc()).embed("C07AB02");
  EXPECT_EQ(v, hashed_fallback_embed(atc().decompress("C07AB02")));
}

TEST(MedEmbedding, MeanOverMedications) {
  auto table = std::make_shared<EmbeddingMap>();
  (*table)["C07AB02"] = basis(0, 2.0);
  (*table)["C10AA05"] = basis(1, 4.0);
  const auto e = MedEmbedder::precomputed(table, &atc());
  const auto agg = aggregate_patient_meds({{"C07AB02", {}}, {"C10AA05", {}}}, e);
  EXPECT_EQ(agg.used, 2u);
  EXPECT_EQ(agg.source, EmbeddingSource::precomputed_file);
  EXPECT_DOUBLE_EQ(agg.vector[0], 1.0);
  EXPECT_DOUBLE_EQ(agg.vector[1], 2.0);
  const auto empty = aggregate_patient_meds({}, e);
  EXPECT_EQ(empty.used, 0u);
  EXPECT_EQ(l2_norm(empty.vector), 0.0);
}

TEST(MedEmbedding, UnknownCodePolicies) {
  const auto e = MedEmbedder::hashed(atc());
  const std::vector<data::MedicationEntry> meds = {{"C07AB02", {}}, {"Z99ZZ99", {}}};
  EXPECT_THROW(aggregate_patient_meds(meds, e), NotFoundError);
  const auto skipped = aggregate_patient_meds(meds, e, UnknownCodePolicy::skip);
  EXPECT_EQ(skipped.used, 1u);
  EXPECT_EQ(skipped.skipped, 1u);
  EXPECT_EQ(skipped.vector, e.embed("C07AB02"));
}

TEST(MedEmbedding, PrecomputedMissingCodeIsNotFound) {
  auto table = std::make_shared<EmbeddingMap>();
  const auto e = MedEmbedder::precomputed(table);
  EXPECT_THROW(e.embed("C07AB02"), NotFoundError);
}

TEST(EmbeddingFile, RoundTripAndErrors) {
  EmbeddingMap m;
  m["C07AB02"] = basis(5, 0.1);
  m["C03CA01"] = basis(6, -1.0 / 3.0);
  const auto path = std::filesystem::temp_directory_path() / "cvrm_test_emb.tsv";
  save_embedding_file(path, m);
  EXPECT_EQ(load_embedding_file(path), m);
  std::filesystem::remove(path);
  EXPECT_THROW(load_embedding_file(path), NotFoundError);

  std::istringstream short_row("C07\t1\t2\n");
  EXPECT_THROW(read_embeddings(short_row), ValidationError);
  std::istringstream bad_num("C07\t1\tx\n");
  EXPECT_THROW(read_embeddings(bad_num, 2), ParseError);
  std::istringstream dup("C07\t1\t2\nC07\t3\t4\n");
  EXPECT_THROW(read_embeddings(dup, 2), ValidationError);
}

TEST(Fusion, LateFusionLayoutAndExtraction) {
  Vec text(512);
  for (std::size_t i = 0; i < text.size(); ++i) text[i] = static_cast<double>(i);
  MedicationEmbedding meds;
  meds.vector = basis(3, 7.0);
  const auto anthro = anthropometrics(90, data::Gender::male);
  const auto f = late_fuse(text, meds, anthro);
  ASSERT_EQ(f.vector.size(), 512 + kStructuredDim);
  EXPECT_EQ(f.span(Modality::text).offset, 0u);
  EXPECT_EQ(f.span(Modality::meds).offset, 512u);
  EXPECT_EQ(f.span(Modality::anthro).offset, 512u + kMedDim);
  EXPECT_EQ(f.extract(Modality::text), text);
  EXPECT_EQ(f.extract(Modality::meds), meds.vector);
  EXPECT_EQ(f.extract(Modality::anthro), anthro.values());
}

TEST(Fusion, AssembleValidatesOrderAndWidths) {
  EXPECT_THROW(assemble({{Modality::meds, basis(0)}, {Modality::text, Vec(4)}}, 4), ValidationError);
  EXPECT_THROW(assemble({{Modality::text, Vec(5)}}, 4), ShapeError);
  EXPECT_THROW(assemble({{Modality::anthro, Vec(2)}}, 4), ShapeError);
  const auto f = assemble({{Modality::text, Vec(4)}, {Modality::anthro, Vec(3)}}, 4);
  EXPECT_THROW(f.span(Modality::meds), NotFoundError);
}

TEST(Fusion, StructuredBlockIsMedsThenAnthro) {
  data::PatientRecord r;
  r.age = 70;
  r.gender = data::Gender::female;
  r.medications = {{"C07AB02", {}}};
  const auto e = MedEmbedder::hashed(atc());
  const auto s = structured_features(r, e);
  ASSERT_EQ(s.size(), kStructuredDim);
  EXPECT_EQ(Vec(s.begin(), s.begin() + kMedDim), e.embed("C07AB02"));
  EXPECT_EQ(Vec(s.begin() + kMedDim, s.end()), anthropometrics(70, data::Gender::female).values());
}
