#include <random>

#include <gtest/gtest.h>

#include "gema/scoring.hpp"
#include "support.hpp"

using namespace gema;
using test::ent;
using test::set_of;

namespace {

const ScoringConfig kDefault{};

PerAspect<std::size_t> counts(std::size_t f, std::size_t g, std::size_t t) {
  PerAspect<std::size_t> c = PerAspect<std::size_t>::filled(0);
  c[Aspect::fluency] = f;
  c[Aspect::grammar] = g;
  c[Aspect::terminology] = t;
  return c;
}

class StubJudge : public SubjectiveJudge {
 public:
  explicit StubJudge(PerAspect<std::size_t> n = PerAspect<std::size_t>::filled(0)) : n_(n) {}
  std::vector<std::string> issues(std::string_view, Aspect a) override {
    return std::vector<std::string>(n_[a], "issue");
  }
  std::string template_id() const override { return "stub"; }

 private:
  PerAspect<std::size_t> n_;
};

}  // namespace

TEST(ScoringConfig, Validation) {
  EXPECT_NO_THROW(validate(kDefault));
  ScoringConfig c;
  c.alpha = 1.5;
  EXPECT_THROW(validate(c), InvalidArgument);
  c = {};
  c.lambda_penalty = 0.0;
  EXPECT_THROW(validate(c), InvalidArgument);
  c = {};
  c.aspect_weights[Aspect::fluency] = 0.5;
  EXPECT_THROW(validate(c), InvalidArgument);
  c = {};
  c.dimension_weights[Dimension::disease] = -0.25;
  EXPECT_THROW(validate(c), InvalidArgument);
}

TEST(DirectionalScore, Examples) {
  MatchPolicy p;
  auto a = set_of({ent("a"), ent("b")});
  EXPECT_EQ(directional_score(a, a, Dimension::disease, p), 1.0);
  EXPECT_EQ(directional_score(set_of({ent("a")}), a, Dimension::disease, p), 0.5);
  EXPECT_EQ(directional_score(set_of({}), set_of({}), Dimension::disease, p), 1.0);
  EXPECT_EQ(directional_score(a, set_of({}), Dimension::disease, p), 0.0);
}

TEST(DirectionalScore, OverTargetEntitiesCarryingTheDimension) {
  MatchPolicy p;
  auto source = set_of({ent("a", "x")});
  auto target = set_of({ent("a", "x"), ent("b")});
  EXPECT_EQ(directional_score(source, target, Dimension::location, p), 1.0);
  EXPECT_EQ(directional_score(source, target, Dimension::disease, p), 0.5);
}

TEST(HarmonicMean, Values) {
  EXPECT_EQ(harmonic_mean(0.0, 0.0), 0.0);
  EXPECT_NEAR(harmonic_mean(0.5, 1.0), 2.0 / 3.0, 1e-12);
  for (double v : {0.1, 0.37, 0.5, 1.0}) EXPECT_DOUBLE_EQ(harmonic_mean(v, v), v);
}

TEST(ObjectiveScore, HandTraceOneOmissionOfTwo) {
  auto ref = set_of({ent("atelectasis"), ent("pleural effusion")});
  auto cand = set_of({ent("atelectasis")}, Role::candidate);
  auto o = objective_score(ref, cand, MatchPolicy{}, kDefault);
  EXPECT_EQ(o.precision[Dimension::disease], 1.0);
  EXPECT_EQ(o.recall[Dimension::disease], 0.5);
  EXPECT_NEAR(o.per_dimension[Dimension::disease], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(o.s_obj, 2.0 / 3.0, 1e-12);  // only disease is populated
}

TEST(ObjectiveScore, BothDirectionsZero) {
  auto o = objective_score(set_of({ent("a")}), set_of({ent("b")}), MatchPolicy{}, kDefault);
  EXPECT_EQ(o.per_dimension[Dimension::disease], 0.0);
  EXPECT_EQ(o.s_obj, 0.0);
}

TEST(ObjectiveScore, EmptyCandidateIsZero) {
  auto o = objective_score(set_of({ent("a", "x", "mild")}), set_of({}), MatchPolicy{}, kDefault);
  EXPECT_EQ(o.s_obj, 0.0);
}

TEST(ObjectiveScore, BothEmptyIsOne) {
  EXPECT_EQ(objective_score(set_of({}), set_of({}), MatchPolicy{}, kDefault).s_obj, 1.0);
}

TEST(ObjectiveScore, WeightedOverPopulatedDimensions) {
  auto ref = set_of({ent("a", "x", "mild", "possible")});
  auto cand = set_of({ent("a", "y", "mild", "possible")});
  auto o = objective_score(ref, cand, MatchPolicy::exact(), kDefault);
  EXPECT_NEAR(o.s_obj, 0.75, 1e-12);
  ScoringConfig c;
  c.dimension_weights = PerDimension<double>::filled(0.0);
  c.dimension_weights[Dimension::location] = 1.0;
  EXPECT_EQ(objective_score(ref, cand, MatchPolicy::exact(), c).s_obj, 0.0);
}

TEST(ObjectiveScoreProperty, SelfScoreAndSymmetry) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 2000; ++trial) {
    auto a = test::random_entity_set(rng, 6);
    auto b = test::random_entity_set(rng, 6);
    if (!a.empty()) ASSERT_DOUBLE_EQ(objective_score(a, a, MatchPolicy{}, kDefault).s_obj, 1.0);
    auto ab = objective_score(a, b, MatchPolicy{}, kDefault);
    auto ba = objective_score(b, a, MatchPolicy{}, kDefault);
    ASSERT_DOUBLE_EQ(ab.s_obj, ba.s_obj);
    ASSERT_GE(ab.s_obj, 0.0);
    ASSERT_LE(ab.s_obj, 1.0);
    for (auto d : kDimensions) {
      double p = ab.precision[d], r = ab.recall[d];
      ASSERT_LE(ab.per_dimension[d], (p + r) / 2.0 + 1e-15);
      if (p != r) ASSERT_LT(ab.per_dimension[d], (p + r) / 2.0);
    }
  }
}

TEST(RoundToGrid, NearestWithTiesUp) {
  const auto& g = kDefault.subjective_grid;
  EXPECT_EQ(round_to_grid(0.8333, g), 0.8);
  EXPECT_EQ(round_to_grid(0.1, g), 0.2);
  EXPECT_EQ(round_to_grid(0.3, g), 0.4);
  EXPECT_EQ(round_to_grid(0.5, g), 0.6);
  EXPECT_EQ(round_to_grid(0.7, g), 0.8);
  EXPECT_EQ(round_to_grid(0.09, g), 0.0);
  EXPECT_EQ(round_to_grid(-1.0, g), 0.0);
  EXPECT_EQ(round_to_grid(2.0, g), 1.0);
}

TEST(RoundToGrid, Idempotent) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    double once = round_to_grid(u(rng), kDefault.subjective_grid);
    ASSERT_EQ(round_to_grid(once, kDefault.subjective_grid), once);
  }
}

TEST(SubjectiveScore, Examples) {
  EXPECT_EQ(subjective_score(counts(0, 0, 0), kDefault), 1.0);
  auto ten = subjective_score_detailed(counts(10, 0, 0), kDefault);
  EXPECT_NEAR(ten.unrounded, 2.5 / 3.0, 1e-12);
  EXPECT_EQ(ten.s_sub, 0.8);
  EXPECT_EQ(ten.per_aspect[Aspect::fluency], 0.5);
  EXPECT_EQ(subjective_score(counts(30, 30, 30), kDefault), 0.0);
}

TEST(SubjectiveScoreProperty, OnGridAndMonotone) {
  for (std::size_t f = 0; f <= 25; ++f)
    for (std::size_t g = 0; g <= 25; g += 5)
      for (std::size_t t = 0; t <= 25; t += 5) {
        auto s = subjective_score_detailed(counts(f, g, t), kDefault);
        bool on_grid = false;
        for (double v : kDefault.subjective_grid) on_grid = on_grid || v == s.s_sub;
        ASSERT_TRUE(on_grid);
        auto more = subjective_score_detailed(counts(f + 1, g, t), kDefault);
        ASSERT_LE(more.unrounded, s.unrounded);
        ASSERT_LE(more.s_sub, s.s_sub);
      }
}

TEST(GemaScore, Examples) {
  EXPECT_EQ(gema_score(1.0, 1.0, kDefault), 1.0);
  EXPECT_NEAR(gema_score(0.5, 1.0, kDefault), 0.6, 1e-12);
  ScoringConfig c;
  c.alpha = 1.0;
  for (double v : {0.0, 0.123456789, 0.7, 1.0}) EXPECT_EQ(gema_score(v, 0.4, c), v);
  EXPECT_THROW(gema_score(1.1, 0.0, kDefault), InvalidArgument);
}

TEST(GemaScoreProperty, MonotoneAndMatchesGeneralForm) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    ScoringConfig c;
    c.alpha = u(rng);
    double o = u(rng), s = u(rng), d = u(rng) * 0.1;
    double base = gema_score(o, s, c);
    ASSERT_LE(base, gema_score(std::min(1.0, o + d), s, c) + 1e-15);
    ASSERT_LE(base, gema_score(o, std::min(1.0, s + d), c) + 1e-15);
    double ow[] = {c.alpha}, sw[] = {1.0 - c.alpha}, os[] = {o}, ss[] = {s};
    ASSERT_NEAR(overall_score(os, ow, ss, sw), base, 1e-15);
  }
}

TEST(SubjectiveErrors, MockIssueLists) {
  MockBackend mock;
  mock.add(build_subjective_prompt("Clean report.", Aspect::fluency), "[]");
  mock.add(build_subjective_prompt("Clean report.", Aspect::grammar),
           R"(```json
["missing article", "subject-verb agreement", {"issue": "dangling modifier"}]
```)");
  mock.add(build_subjective_prompt("Clean report.", Aspect::terminology), "no list here");
  Gateway gw(mock);
  EXPECT_EQ(count_subjective_errors("Clean report.", Aspect::fluency, gw), 0u);
  EXPECT_EQ(count_subjective_errors("Clean report.", Aspect::grammar, gw), 3u);
  EXPECT_THROW(count_subjective_errors("Clean report.", Aspect::terminology, gw), ExtractionParseError);
}

TEST(SubjectiveErrors, RuleCounter) {
  RuleBasedSubjectiveJudge judge;
  EXPECT_GE(count_subjective_errors("There is the the effusion.", Aspect::fluency, judge), 1u);
  EXPECT_EQ(count_subjective_errors("There is an effusion.", Aspect::fluency, judge), 0u);
  EXPECT_EQ(count_subjective_errors("Heart size normal. Lungs are clear.", Aspect::grammar, judge), 1u);
  EXPECT_EQ(count_subjective_errors("No pneumothorax. Lungs are clear.", Aspect::grammar, judge), 0u);
  EXPECT_EQ(count_subjective_errors("Big heart and a shadow in the base.", Aspect::terminology, judge), 2u);
  EXPECT_EQ(count_subjective_errors("Cardiomegaly is present.", Aspect::terminology, judge), 0u);
}

TEST(SubjectivePrompt, PerAspectTemplates) {
  auto f = build_subjective_prompt("text", Aspect::fluency);
  auto g = build_subjective_prompt("text", Aspect::grammar);
  EXPECT_NE(cache_key(f), cache_key(g));
  EXPECT_NE(f.user_prompt.find("text"), std::string::npos);
}

TEST(ScorePair, PerfectGeneration) {
  ReportPair pair{"s1", Modality::xray, "Mild LLL atelectasis.", "Mild LLL atelectasis."};
  ExtractionFixtures fx;
  fx[{"s1", Role::reference}] = set_of({ent("atelectasis", "lll", "mild")});
  fx[{"s1", Role::candidate}] = set_of({ent("atelectasis", "lll", "mild")}, Role::candidate);
  FixtureEntityExtractor extractor(fx);
  StubJudge judge;
  auto b = score_pair(pair, extractor, judge, MatchPolicy{}, kDefault);
  EXPECT_EQ(b.gema, 1.0);
  EXPECT_EQ(b.s_obj, 1.0);
  EXPECT_EQ(b.s_sub, 1.0);
  EXPECT_EQ(b.extraction_template_id, "offline-fixtures");
  EXPECT_EQ(b.subjective_template_id, "stub");
}

TEST(ScorePair, EmptyCandidate) {
  ReportPair pair{"s2", Modality::xray, "Effusion.", ""};
  ExtractionFixtures fx;
  fx[{"s2", Role::reference}] = set_of({ent("effusion")});
  fx[{"s2", Role::candidate}] = set_of({}, Role::candidate);
  FixtureEntityExtractor extractor(fx);
  StubJudge judge(counts(4, 0, 0));
  auto b = score_pair(pair, extractor, judge, MatchPolicy{}, kDefault);
  EXPECT_EQ(b.s_obj, 0.0);
  EXPECT_NEAR(b.gema, 0.2 * b.s_sub, 1e-12);
  EXPECT_EQ(b.explanation.omissions.size(), 1u);
}

TEST(ScorePair, OneOmissionOfTwo) {
  ReportPair pair{"s3", Modality::xray, "Atelectasis. Effusion.", "Atelectasis."};
  ExtractionFixtures fx;
  fx[{"s3", Role::reference}] = set_of({ent("atelectasis"), ent("pleural effusion")});
  fx[{"s3", Role::candidate}] = set_of({ent("atelectasis")}, Role::candidate);
  FixtureEntityExtractor extractor(fx);
  StubJudge judge;
  auto b = score_pair(pair, extractor, judge, MatchPolicy{}, kDefault);
  EXPECT_NEAR(b.s_obj_per_dimension[Dimension::disease], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(b.gema, 0.8 * b.s_obj + 0.2 * 1.0, 1e-12);
  EXPECT_EQ(b.counts[Dimension::disease].fn, 1u);
}

TEST(ScorePair, OverMockGateway) {
  ReportPair pair{"s4", Modality::ct, "Small right effusion.", "Small right effusion."};
  MockBackend mock;
  mock.add(build_extraction_prompt(pair.reference_text),
           R"([{"disease":"pleural effusion","location":"right","severity":"small"}])");
  for (auto a : kAspects) mock.add(build_subjective_prompt(pair.candidate_text, a), "[]");
  Gateway gw(mock);
  auto b = score_pair(pair, MatchPolicy{}, kDefault, gw);
  EXPECT_EQ(b.gema, 1.0);
  EXPECT_EQ(b.extraction_template_id, "gema-extraction/v1");
  EXPECT_EQ(mock.call_count(), 5u);
}

TEST(ScorePair, ErrorsTaggedWithStudyId) {
  ReportPair pair{"missing-study", Modality::xray, "x", "y"};
  FixtureEntityExtractor extractor({});
  StubJudge judge;
  try {
    score_pair(pair, extractor, judge, MatchPolicy{}, kDefault);
    FAIL() << "expected StudyError";
  } catch (const StudyError& e) {
    EXPECT_EQ(e.study_id(), "missing-study");
  }
}

TEST(ScoreBreakdownInvariants, RandomPairs) {
  std::mt19937_64 rng(44);
  std::uniform_int_distribution<std::size_t> errs(0, 12);
  for (int trial = 0; trial < 500; ++trial) {
    ExtractionFixtures fx;
    auto ref = test::random_entity_set(rng, 6);
    auto cand = test::random_entity_set(rng, 6, 4, Role::candidate);
    fx[{"s", Role::reference}] = ref;
    fx[{"s", Role::candidate}] = cand;
    FixtureEntityExtractor extractor(fx);
    StubJudge judge(counts(errs(rng), errs(rng), errs(rng)));
    auto b = score_pair({"s", Modality::other, "r", "c"}, extractor, judge, MatchPolicy{}, kDefault);
    ASSERT_NEAR(b.gema, 0.8 * b.s_obj + 0.2 * b.s_sub, 1e-12);
    ASSERT_EQ(b.explanation.false_predictions.size(), b.counts[Dimension::disease].fp);
    ASSERT_EQ(b.explanation.omissions.size(), b.counts[Dimension::disease].fn);
    for (auto d : kDimensions) {
      ASSERT_GE(b.s_obj_per_dimension[d], 0.0);
      ASSERT_LE(b.s_obj_per_dimension[d], 1.0);
    }
  }
}

TEST(Explanation, TextBlock) {
  ReportPair pair{"s5", Modality::xray, "r", "c"};
  ExtractionFixtures fx;
  fx[{"s5", Role::reference}] = set_of({ent("effusion", "left"), ent("nodule")});
  fx[{"s5", Role::candidate}] = set_of({ent("effusion", "right"), ent("mass")}, Role::candidate);
  FixtureEntityExtractor extractor(fx);
  StubJudge judge(counts(0, 1, 0));
  auto text = render_explanation_text(score_pair(pair, extractor, judge, MatchPolicy::exact(), kDefault));
  EXPECT_NE(text.find("Study s5"), std::string::npos);
  EXPECT_NE(text.find("Omissions (1)"), std::string::npos);
  EXPECT_NE(text.find("- nodule"), std::string::npos);
  EXPECT_NE(text.find("False predictions (1)"), std::string::npos);
  EXPECT_NE(text.find("reference location 'left' vs candidate 'right'"), std::string::npos);
  EXPECT_NE(text.find("grammar: 0.950 (1 issue)"), std::string::npos);
}
