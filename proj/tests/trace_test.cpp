#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "sieves/trace.hpp"

namespace sieves {
namespace {

json minimal_record() {
  return json::parse(R"({
    "schema_version": 1,
    "question_id": "vstar_17",
    "repetition": 0,
    "question": "What is the color of the umbrella?",
    "image": {"ref": "images/vstar_17.jpg", "width": 2000, "height": 1000},
    "crops": [{"turn_index": 1, "box": [0.1, 0.2, 0.4, 0.6], "source": "tool_call"}],
    "last_message": "The umbrella in the crop is red. \\boxed{Red}",
    "gt_answers": ["red"],
    "gt_boxes": [[0.15, 0.25, 0.2, 0.3]]
  })");
}

std::vector<Trace> parse_string(const std::string& s) {
  std::istringstream in(s);
  return parse_traces(in);
}

TEST(ParseTraces, EmptyStreamYieldsNoTraces) {
  EXPECT_TRUE(parse_string("").empty());
  EXPECT_TRUE(parse_string("\n\n").empty());
}

TEST(ParseTraces, WellFormedRecord) {
  const auto traces = parse_string(minimal_record().dump() + "\n");
  ASSERT_EQ(traces.size(), 1u);
  const auto& t = traces[0];
  EXPECT_EQ(t.question_id, "vstar_17");
  ASSERT_EQ(t.crops.size(), 1u);
  EXPECT_EQ(t.crops[0].box, (BoundingBox{0.1, 0.2, 0.4, 0.6}));
  EXPECT_EQ(t.final_answer, "Red");
  EXPECT_TRUE(t.answerable);
  EXPECT_FALSE(t.confidences.has_value());
}

TEST(ParseTraces, InvertedBoxNamesTheField) {
  auto r = minimal_record();
  r["gt_boxes"][0] = {0.5, 0.1, 0.2, 0.3};
  try {
    parse_string(r.dump());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("gt_boxes[0]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("x_min > x_max"), std::string::npos) << e.what();
  }
}

TEST(ParseTraces, MalformedLineReportsLineNumber) {
  const std::string input = minimal_record().dump() + "\n{not json\n";
  try {
    parse_string(input);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseTraces, DuplicateKeyRejected) {
  const auto line = minimal_record().dump() + "\n";
  EXPECT_THROW(parse_string(line + line), ParseError);
  auto other = minimal_record();
  other["repetition"] = 1;
  EXPECT_EQ(parse_string(line + other.dump()).size(), 2u);
}

TEST(ParseTraces, InvariantViolations) {
  auto bad_version = minimal_record();
  bad_version["schema_version"] = 2;
  EXPECT_THROW(parse_string(bad_version.dump()), ParseError);

  auto no_answers = minimal_record();
  no_answers["gt_answers"] = json::array();
  EXPECT_THROW(parse_string(no_answers.dump()), ParseError);

  auto turns = minimal_record();
  turns["crops"].push_back({{"turn_index", 1}, {"box", {0, 0, 1, 1}}});
  EXPECT_THROW(parse_string(turns.dump()), ParseError);

  auto conf = minimal_record();
  conf["confidences"] = {{"c_corr", 1.2}, {"c_loc", 0.1}, {"c_coh", 0.1}};
  EXPECT_THROW(parse_string(conf.dump()), ParseError);

  auto neg_rep = minimal_record();
  neg_rep["repetition"] = -1;
  EXPECT_THROW(parse_string(neg_rep.dump()), ParseError);
}

TEST(ParseTraces, PixelSpaceBoxesAreNormalized) {
  auto r = minimal_record();
  r["coordinate_space"] = "pixel";
  r["crops"][0]["box"] = {2000, 1000, 0, 0};
  r["gt_boxes"][0] = {200, 100, 400, 300};
  const auto t = parse_string(r.dump()).at(0);
  EXPECT_EQ(t.crops[0].box, (BoundingBox{0, 0, 1, 1}));
  EXPECT_DOUBLE_EQ(t.gt_boxes[0].x_min, 0.1);
  EXPECT_DOUBLE_EQ(t.gt_boxes[0].y_max, 0.3);
}

TEST(FinalAnswer, LastBoxedSpanWins) {
  EXPECT_EQ(extract_final_answer("first \\boxed{a} then \\boxed{ b }"), "b");
  EXPECT_EQ(extract_final_answer("nested \\boxed{\\text{x}}"), "\\text{x}");
  EXPECT_EQ(extract_final_answer("  no box here \n"), "no box here");
  EXPECT_EQ(extract_final_answer("broken \\boxed{open"), "broken \\boxed{open");
}

TEST(NormalizeBox, Conventions) {
  EXPECT_EQ(normalize_box({0, 0, 640, 480}, 640, 480, CoordinateSpace::pixel), (BoundingBox{0, 0, 1, 1}));
  // 0-1000 annotator order is [top, left, bottom, right].
  EXPECT_EQ(from_box_2d({0, 0, 500, 1000}), (BoundingBox{0, 0, 1, 0.5}));
  EXPECT_EQ(normalize_box({300, 400, 100, 200}, 1000, 1000, CoordinateSpace::pixel),
            normalize_box({100, 200, 300, 400}, 1000, 1000, CoordinateSpace::pixel));
  EXPECT_THROW(normalize_box({0, 0, 1, 1}, 0, 10, CoordinateSpace::pixel), ValidationError);
  EXPECT_THROW(normalize_box({0, std::nan(""), 1, 1}, 10, 10, CoordinateSpace::pixel), ValidationError);
}

TEST(NormalizeBox, IdempotentOnNormalizedInput) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const RawRect raw{u(rng), u(rng), u(rng), u(rng)};
    const auto once = normalize_box(raw, 1, 1, CoordinateSpace::normalized);
    const auto twice = normalize_box({once.x_min, once.y_min, once.x_max, once.y_max}, 1, 1,
                                     CoordinateSpace::normalized);
    EXPECT_EQ(once, twice);
    EXPECT_FALSE(box_violation(once).has_value());
  }
}

// serialize -> parse is the identity on valid traces.
TEST(ParseTraces, RoundTripProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Trace> traces;
  for (int i = 0; i < 50; ++i) {
    Trace t;
    t.question_id = "q" + std::to_string(i / 3);
    t.repetition = i % 3;
    t.question = "what \"is\" {this}?";
    t.image = {"img/" + std::to_string(i) + ".png", 100 + i, 200 + i};
    const int crops = i % 4;
    for (int c = 0; c < crops; ++c) {
      const double a = u(rng), b = u(rng);
      t.crops.push_back({c * 2 + 1, {std::min(a, b), 0.1, std::max(a, b), 0.9},
                         c % 2 ? CropSource::annotation : CropSource::tool_call, c == 0 ? "crop.png" : ""});
    }
    t.last_message = "reasoning \\boxed{ans " + std::to_string(i) + "}";
    t.final_answer = extract_final_answer(t.last_message);
    t.gt_answers = {"ans", "answer"};
    if (i % 2) t.gt_boxes.push_back({0.2, 0.2, 0.3, 0.4});
    t.answerable = i % 5 != 0;
    t.multiple_choice = i % 7 == 0;
    if (i % 3 == 0) t.confidences = ConfidenceTriple{u(rng), u(rng), u(rng)};
    traces.push_back(std::move(t));
  }
  std::ostringstream out;
  write_traces(out, traces);
  EXPECT_EQ(parse_string(out.str()), traces);
}

}  // namespace
}  // namespace sieves
