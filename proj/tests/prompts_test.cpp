#include <gtest/gtest.h>

#include "gema/llm_gateway.hpp"
#include "gema/prompts.hpp"

using namespace gema;

namespace {

void expect_matches_asset(const PromptTemplate& t, const std::string& name) {
  auto dir = std::filesystem::path(GEMA_SOURCE_DIR) / "assets" / "prompts";
  EXPECT_EQ(read_file(dir / (name + ".system.txt")), t.system_prompt) << name;
  EXPECT_EQ(read_file(dir / (name + ".user.txt")), t.user_prompt_skeleton) << name;
}

}  // namespace

// The shipped text files are the reviewable copy of the compiled templates.
TEST(PromptAssets, MatchCompiledTemplates) {
  expect_matches_asset(default_extraction_template(), "extraction");
  expect_matches_asset(default_subjective_template(Aspect::fluency), "fluency");
  expect_matches_asset(default_subjective_template(Aspect::grammar), "grammar");
  expect_matches_asset(default_subjective_template(Aspect::terminology), "terminology");
}

TEST(PromptTemplates, SingleReportSlot) {
  EXPECT_EQ(render_template(default_extraction_template(), "XYZ").find("{{report}}"), std::string::npos);
  for (auto a : kAspects)
    EXPECT_NE(render_template(default_subjective_template(a), "XYZ").find("<<<\nXYZ\n>>>"), std::string::npos);
  PromptTemplate twice{"t", "", "{{report}} {{report}}", ""};
  EXPECT_THROW(render_template(twice, "x"), InvalidArgument);
  PromptTemplate none{"t", "", "nothing", ""};
  EXPECT_THROW(render_template(none, "x"), InvalidArgument);
}

TEST(PromptTemplates, DistinctIds) {
  std::set<std::string> ids = {default_extraction_template().template_id};
  for (auto a : kAspects) ids.insert(default_subjective_template(a).template_id);
  EXPECT_EQ(ids.size(), 4u);
}
