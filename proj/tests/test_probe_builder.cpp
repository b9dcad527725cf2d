#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "idrank/error.hpp"
#include "idrank/probe_builder.hpp"

namespace idrank {
namespace {

// Expected values produced by Python's unicodedata: NFD, drop category M*,
// str.lower(), collapse runs outside categories L*/N* to '_', strip '_'.
TEST(CanonicalizeName, MatchesUnicodeReference) {
  const std::pair<const char*, const char*> cases[] = {
      {"Aamir_Khan", "aamir_khan"},
      {"  Zoë  Saldaña ", "zoe_saldana"},
      {"???", ""},
      {"José María Aznar", "jose_maria_aznar"},
      {"Björk Guðmundsdóttir", "bjork_guðmundsdottir"},
      {"Ångström-Ñoño", "angstrom_nono"},
      {"O'Neal, Shaquille", "o_neal_shaquille"},
      {"Zoë Saldãna", "zoe_saldana"},
      {"Άλφα Βήτα", "αλφα_βητα"},
      {"Łukasz Żmuda", "łukasz_zmuda"},
      {"50 Cent", "50_cent"},
      {"Renée  Zellweger!!", "renee_zellweger"},
      {"Beyoncé Knowles-Carter", "beyonce_knowles_carter"},
      {"ＡＢＣ", "ａｂｃ"},
      {" Chloë Grace Moretz ", "chloe_grace_moretz"},
  };
  for (const auto& [raw, expected] : cases) {
    EXPECT_EQ(canonicalize_name(raw), expected) << raw;
  }
  EXPECT_EQ(canonicalize_name(""), "");
}

TEST(CanonicalizeName, IsIdempotent) {
  for (const char* raw : {"  Zoë  Saldaña ", "O'Neal, Shaquille", "___a__b___"}) {
    const auto once = canonicalize_name(raw);
    EXPECT_EQ(canonicalize_name(once), once);
  }
}

IdentityRecord person(std::string id, std::string name, Gender g = Gender::unknown,
                      std::uint64_t n = 0) {
  return {std::move(id), std::move(name), g, n};
}

TEST(MatchIdentities, CanonicalEquality) {
  const IdentityRecord src[] = {person("n1", "Aamir Khan")};
  const IdentityRecord ref[] = {person("m1", "aamir_khan")};
  const auto r = match_identities(src, ref);
  ASSERT_EQ(r.matched.size(), 1u);
  EXPECT_EQ(r.matched[0].source_identity_id, "n1");
  EXPECT_EQ(r.matched[0].reference_identity_id, "m1");
  EXPECT_EQ(r.matched[0].canonical_name, "aamir_khan");
  EXPECT_TRUE(r.unmatched.empty());
}

TEST(MatchIdentities, EmptyReference) {
  const IdentityRecord src[] = {person("n1", "John Smith")};
  const auto r = match_identities(src, {});
  EXPECT_TRUE(r.matched.empty());
  ASSERT_EQ(r.unmatched.size(), 1u);
  EXPECT_EQ(r.unmatched[0], "n1");
}

TEST(MatchIdentities, AmbiguousNamesAreExcluded) {
  const IdentityRecord src[] = {person("n1", "John Smith"), person("n2", "Jane Doe")};
  const IdentityRecord ref[] = {person("m1", "John_Smith"), person("m2", "john smith"),
                                person("m3", "Jane-Doe")};
  const auto r = match_identities(src, ref);
  ASSERT_EQ(r.matched.size(), 1u);
  EXPECT_EQ(r.matched[0].source_identity_id, "n2");
  EXPECT_TRUE(r.unmatched.empty());
  ASSERT_EQ(r.ambiguous.size(), 1u);
  EXPECT_EQ(r.ambiguous[0].source_identity_id, "n1");
  EXPECT_EQ(r.ambiguous[0].reference_identity_ids, (std::vector<std::string>{"m1", "m2"}));
}

TEST(MatchIdentities, EveryIdentityLandsInExactlyOneBucketAndMatchingIsSymmetric) {
  std::vector<IdentityRecord> a, b;
  const char* names[] = {"Ana López", "Bo Li", "Chen Wei", "Dana Scully", "Eve", "Fox"};
  for (int i = 0; i < 6; ++i) a.push_back(person("a" + std::to_string(i), names[i]));
  b.push_back(person("b0", "ana lopez"));
  b.push_back(person("b1", "CHEN-WEI"));
  b.push_back(person("b2", "Fox"));
  b.push_back(person("b3", "Zed"));
  const auto ab = match_identities(a, b);
  EXPECT_EQ(ab.matched.size() + ab.unmatched.size() + ab.ambiguous.size(), a.size());
  const auto ba = match_identities(b, a);
  std::set<std::pair<std::string, std::string>> forward, backward;
  for (const auto& m : ab.matched) forward.insert({m.source_identity_id, m.reference_identity_id});
  for (const auto& m : ba.matched) backward.insert({m.reference_identity_id, m.source_identity_id});
  EXPECT_EQ(forward, backward);
  EXPECT_EQ(forward.size(), 3u);
}

TEST(MatchIdentities, FallsBackToIdentityIdWithoutDisplayName) {
  const IdentityRecord src[] = {person("Aamir_Khan", "")};
  const IdentityRecord ref[] = {person("m.0abc", "Aamir Khan")};
  EXPECT_EQ(match_identities(src, ref).matched.size(), 1u);
}

// Candidates id_m000.., id_f000.. each with `images` rows in a dim-1 set.
struct Population {
  std::vector<IdentityRecord> candidates;
  EmbeddingSet embeddings;
};

Population population(std::size_t males, std::size_t females, std::size_t images,
                      const std::string& tag = "") {
  Population p;
  std::vector<float> v;
  std::vector<std::string> img_ids, ids;
  auto add = [&](const std::string& id, Gender g, std::size_t n) {
    p.candidates.push_back({id, id, g, n});
    for (std::size_t i = 0; i < n; ++i) {
      v.push_back(static_cast<float>(v.size()));
      img_ids.push_back(id + "/" + std::to_string(i));
      ids.push_back(id);
    }
  };
  char buf[32];
  for (std::size_t i = 0; i < males; ++i) {
    std::snprintf(buf, sizeof buf, "%sid_m%04zu", tag.c_str(), i);
    add(buf, Gender::male, images);
  }
  for (std::size_t i = 0; i < females; ++i) {
    std::snprintf(buf, sizeof buf, "%sid_f%04zu", tag.c_str(), i);
    add(buf, Gender::female, images);
  }
  p.embeddings = EmbeddingSet(1, std::move(v), std::move(img_ids), std::move(ids));
  return p;
}

TEST(BuildProbeManifest, FullPopulationIsSampledEntirely) {
  const auto pop = population(500, 500, 50);
  const auto build = build_probe_manifest(pop.candidates, pop.embeddings,
                                          {DomainLabel::in_domain, 123, 500, 50});
  const auto& m = build.manifest;
  validate_manifest(m);
  EXPECT_TRUE(build.excluded.empty());
  ASSERT_EQ(m.entries.size(), 1000u);
  std::set<std::string> ids, images;
  for (const auto& e : m.entries) {
    ids.insert(e.identity_id);
    images.insert(e.image_ids.begin(), e.image_ids.end());
  }
  EXPECT_EQ(ids.size(), 1000u);
  EXPECT_EQ(images.size(), 50000u);
  EXPECT_EQ(std::set<std::string>(pop.embeddings.image_ids().begin(), pop.embeddings.image_ids().end()),
            images);
}

TEST(BuildProbeManifest, SameSeedIsByteIdenticalDifferentSeedIsNot) {
  const auto pop = population(30, 30, 12);
  const ProbeSampling s{DomainLabel::out_of_domain, 99, 10, 5};
  const auto a = dump_manifest(build_probe_manifest(pop.candidates, pop.embeddings, s).manifest);
  const auto b = dump_manifest(build_probe_manifest(pop.candidates, pop.embeddings, s).manifest);
  EXPECT_EQ(a, b);
  auto s2 = s;
  s2.seed = 100;
  EXPECT_NE(a, dump_manifest(build_probe_manifest(pop.candidates, pop.embeddings, s2).manifest));
  // Candidate order is not an input to the draw.
  auto shuffled = pop.candidates;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(a, dump_manifest(build_probe_manifest(shuffled, pop.embeddings, s).manifest));
}

TEST(BuildProbeManifest, StratumShortfallNamesGender) {
  const auto pop = population(500, 499, 50);
  try {
    build_probe_manifest(pop.candidates, pop.embeddings, {DomainLabel::in_domain, 1, 500, 50});
    FAIL() << "expected shortfall";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::sampling);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'female' short by 1"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("'male'"), std::string::npos) << msg;
  }
}

TEST(BuildProbeManifest, IdentitiesWithTooFewImagesAreExcludedFirst) {
  auto pop = population(3, 3, 5);
  // Give one male only 4 usable rows by pointing the manifest at 5 images per identity
  // and adding a sixth candidate with 4 rows.
  std::vector<float> v(pop.embeddings.vectors().begin(), pop.embeddings.vectors().end());
  auto imgs = pop.embeddings.image_ids();
  auto ids = pop.embeddings.identity_ids();
  for (int i = 0; i < 4; ++i) {
    v.push_back(1000.0f + i);
    imgs.push_back("short/" + std::to_string(i));
    ids.push_back("short");
  }
  pop.candidates.push_back({"short", "short", Gender::male, 4});
  pop.candidates.push_back({"ghost", "ghost", Gender::female, 50});
  const EmbeddingSet emb(1, v, imgs, ids);
  const auto build = build_probe_manifest(pop.candidates, emb, {DomainLabel::in_domain, 5, 3, 5});
  ASSERT_EQ(build.excluded.size(), 2u);
  EXPECT_EQ(build.excluded[0].identity_id, "short");
  EXPECT_EQ(build.excluded[0].available_images, 4u);
  EXPECT_EQ(build.excluded[1].identity_id, "ghost");
  EXPECT_EQ(build.excluded[1].available_images, 0u);
  for (const auto& e : build.manifest.entries) EXPECT_NE(e.identity_id, "short");
}

TEST(BuildProbeManifest, SamplesAreSubsetsOfTheRightIdentity) {
  const auto pop = population(20, 20, 9);
  const auto m = build_probe_manifest(pop.candidates, pop.embeddings,
                                      {DomainLabel::in_domain, 7, 6, 4})
                     .manifest;
  validate_manifest(m);
  for (const auto& e : m.entries) {
    for (const auto& img : e.image_ids) EXPECT_EQ(img.substr(0, img.find('/')), e.identity_id);
  }
}

TEST(BuildProbeManifest, InAndOutOfDomainManifestsAreDisjoint) {
  auto in_pop = population(12, 12, 6, "in_");
  auto out_pop = population(12, 12, 6, "out_");
  std::vector<IdentityRecord> source = in_pop.candidates;
  source.insert(source.end(), out_pop.candidates.begin(), out_pop.candidates.end());
  std::vector<IdentityRecord> reference;
  for (const auto& c : in_pop.candidates) reference.push_back({"ref_" + c.identity_id, c.display_name, Gender::unknown, 0});
  const EmbeddingSet parts[] = {in_pop.embeddings, out_pop.embeddings};
  const auto emb = concat(parts);

  const auto match = match_identities(source, reference);
  std::set<std::string> matched_ids;
  for (const auto& m : match.matched) matched_ids.insert(m.source_identity_id);
  std::vector<IdentityRecord> in_c, out_c;
  for (const auto& s : source) (matched_ids.contains(s.identity_id) ? in_c : out_c).push_back(s);

  const auto in_m = build_probe_manifest(in_c, emb, {DomainLabel::in_domain, 1, 10, 5}).manifest;
  const auto out_m = build_probe_manifest(out_c, emb, {DomainLabel::out_of_domain, 1, 10, 5}).manifest;
  std::set<std::string> in_ids;
  for (const auto& e : in_m.entries) in_ids.insert(e.identity_id);
  for (const auto& e : out_m.entries) EXPECT_FALSE(in_ids.contains(e.identity_id)) << e.identity_id;
}

TEST(ProbeManifest, JsonRoundTripAndValidation) {
  const auto pop = population(4, 4, 3);
  auto m = build_probe_manifest(pop.candidates, pop.embeddings, {DomainLabel::out_of_domain, 77, 2, 3})
               .manifest;
  const auto j = nlohmann::json::parse(dump_manifest(m));
  EXPECT_EQ(j.at("domain_label"), "out_of_domain");
  EXPECT_EQ(j.at("seed"), 77);
  EXPECT_EQ(manifest_from_json(j), m);

  auto broken = j;
  broken["entries"][0]["image_ids"].push_back("extra");
  EXPECT_THROW(manifest_from_json(broken), Error);
  broken = j;
  broken["entries"][1]["identity_id"] = broken["entries"][0]["identity_id"];
  EXPECT_THROW(manifest_from_json(broken), Error);
  broken = j;
  broken["entries"].erase(0);
  EXPECT_THROW(manifest_from_json(broken), Error);
  broken = j;
  broken.erase("seed");
  try {
    manifest_from_json(broken);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
  }
}

TEST(IdentityCsv, ParsesQuotedFieldsAndRoundTrips) {
  std::istringstream in(
      "identity_id,display_name,gender,image_count\n"
      "n000001,\"Smith, John\",m,120\r\n"
      "n000002,\"The \"\"Rock\"\"\",F,87\n"
      "n000003,Nobody,,0\n");
  const auto recs = read_identity_csv(in);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].display_name, "Smith, John");
  EXPECT_EQ(recs[0].gender, Gender::male);
  EXPECT_EQ(recs[0].image_count, 120u);
  EXPECT_EQ(recs[1].display_name, "The \"Rock\"");
  EXPECT_EQ(recs[1].gender, Gender::female);
  EXPECT_EQ(recs[2].gender, Gender::unknown);

  std::ostringstream out;
  write_identity_csv(recs, out);
  std::istringstream again(out.str());
  const auto back = read_identity_csv(again);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].identity_id, recs[i].identity_id);
    EXPECT_EQ(back[i].display_name, recs[i].display_name);
    EXPECT_EQ(back[i].gender, recs[i].gender);
    EXPECT_EQ(back[i].image_count, recs[i].image_count);
  }
}

TEST(IdentityCsv, RejectsBadInput) {
  std::istringstream no_header("a,b,c,d\n");
  EXPECT_THROW(read_identity_csv(no_header), Error);
  std::istringstream bad_gender("identity_id,display_name,gender,image_count\nx,y,z,1\n");
  EXPECT_THROW(read_identity_csv(bad_gender), Error);
  std::istringstream bad_count("identity_id,display_name,gender,image_count\nx,y,m,1a\n");
  EXPECT_THROW(read_identity_csv(bad_count), Error);
  std::istringstream short_row("identity_id,display_name,gender,image_count\nx,y\n");
  EXPECT_THROW(read_identity_csv(short_row), Error);
}

}  // namespace
}  // namespace idrank
