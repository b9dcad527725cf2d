#include <gtest/gtest.h>

#include <cmath>

#include "idrank/error.hpp"
#include "idrank/synthetic_gen.hpp"

namespace idrank {
namespace {

TEST(SyntheticGen, CountsFollowTheSpec) {
  SyntheticSpec spec{8, 10, 5, 1000, 0.1, 3};
  const auto data = generate(spec);
  EXPECT_EQ(data.gallery.count(), 1000u);
  EXPECT_EQ(data.probes.count(), 50u);
  EXPECT_EQ(data.probes.dim(), 8u);
  EXPECT_EQ(data.probes.identity_ids()[0], synthetic_identity_id(0));
  EXPECT_EQ(data.probes.identity_ids()[49], synthetic_identity_id(9));
}

TEST(SyntheticGen, ZeroSigmaGivesBitIdenticalImagesPerIdentity) {
  SyntheticSpec spec{16, 4, 6, 10, 0.0, 11};
  const auto data = generate(spec);
  for (std::size_t id = 0; id < 4; ++id) {
    const auto first = data.probes.row(id * 6);
    for (std::size_t img = 1; img < 6; ++img) {
      const auto r = data.probes.row(id * 6 + img);
      EXPECT_TRUE(std::equal(first.begin(), first.end(), r.begin()));
    }
  }
  EXPECT_FALSE(std::equal(data.probes.row(0).begin(), data.probes.row(0).end(), data.probes.row(6).begin()));
}

TEST(SyntheticGen, DeterministicInSeed) {
  SyntheticSpec spec{8, 6, 3, 20, 0.3, 5};
  const auto a = generate(spec), b = generate(spec);
  EXPECT_EQ(a.probes, b.probes);
  EXPECT_EQ(a.gallery, b.gallery);
  spec.seed = 6;
  EXPECT_FALSE(generate(spec).probes == a.probes);
}

TEST(SyntheticGen, LargerGalleryExtendsSmallerOne) {
  SyntheticSpec small{8, 4, 3, 50, 0.2, 9};
  SyntheticSpec big = small;
  big.n_distractors = 500;
  const auto a = generate(small), b = generate(big);
  EXPECT_EQ(a.probes, b.probes);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(a.gallery.image_ids()[i], b.gallery.image_ids()[i]);
    EXPECT_TRUE(std::equal(a.gallery.row(i).begin(), a.gallery.row(i).end(), b.gallery.row(i).begin()));
  }
}

TEST(SyntheticGen, NormalizeProjectsOntoUnitSphere) {
  SyntheticSpec spec{32, 3, 4, 25, 0.5, 1};
  spec.normalize = true;
  const auto data = generate(spec);
  for (const auto* set : {&data.probes, &data.gallery}) {
    for (std::size_t i = 0; i < set->count(); ++i) {
      double n2 = 0;
      for (float v : set->row(i)) n2 += double{v} * v;
      EXPECT_NEAR(n2, 1.0, 1e-5);
    }
  }
}

TEST(SyntheticGen, PureNoiseProbesIgnoreCentroids) {
  SyntheticSpec spec{4, 2, 3, 0, 0.0, 2};
  spec.pure_noise = true;
  const auto data = generate(spec);
  EXPECT_FALSE(std::equal(data.probes.row(0).begin(), data.probes.row(0).end(), data.probes.row(1).begin()));
}

TEST(SyntheticGen, ManifestAlternatesGendersAndValidates) {
  SyntheticSpec spec{4, 6, 3, 0, 0.1, 2};
  const auto data = generate(spec);
  const auto m = synthetic_manifest(spec, data.probes, DomainLabel::out_of_domain);
  EXPECT_EQ(m.identities_per_gender, 3u);
  EXPECT_EQ(m.entries[0].gender, Gender::male);
  EXPECT_EQ(m.entries[1].gender, Gender::female);
  EXPECT_EQ(m.entries[2].image_ids[1], data.probes.image_ids()[7]);
  spec.n_identities = 5;
  EXPECT_THROW(synthetic_manifest(spec, generate(spec).probes, DomainLabel::in_domain), Error);
}

TEST(SyntheticGen, SpecJsonAndValidation) {
  SyntheticSpec spec{12, 8, 4, 100, 0.25, 42, true, false};
  const auto back = synthetic_spec_from_json(nlohmann::json::parse(to_json(spec).dump()));
  EXPECT_EQ(back.dim, 12u);
  EXPECT_EQ(back.n_distractors, 100u);
  EXPECT_EQ(back.intra_class_sigma, 0.25);
  EXPECT_TRUE(back.normalize);
  spec.intra_class_sigma = -1;
  EXPECT_THROW(validate(spec), Error);
  spec.intra_class_sigma = 0;
  spec.dim = 0;
  EXPECT_THROW(validate(spec), Error);
  EXPECT_THROW(synthetic_spec_from_json(nlohmann::json{{"dim", 3}}), Error);
}

}  // namespace
}  // namespace idrank
