#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gkt/domain.hpp"
#include "gkt/eval.hpp"

namespace gkt::testing {

// Comparison rows: `correct` of `n` examples right for the GKT run,
// the student-only accuracy (percent), the reference and GKT total times, and
// the expected delta-accuracy and speed-up columns at two decimals.
struct ComparisonRow {
  const char *label;
  int n;
  int correct;
  double student_only_pct;
  double reference_time_s;
  double run_time_s;
  const char *expected_delta;
  const char *expected_speed_up;
};

inline const std::vector<ComparisonRow> &comparison_rows() {
  static const std::vector<ComparisonRow> rows = {
      {"gsm8k 13b->7b 30->200", 1319, 233, 13.87, 9066.17, 7762.62, "3.79", "1.17"},
      {"gsm8k 13b->7b 30->300", 1319, 235, 14.40, 14215.12, 10793.34, "3.42", "1.32"},
      {"gsm8k 13b->7b 40->300", 1319, 253, 14.40, 14215.12, 10871.01, "4.78", "1.31"},
      {"gsm8k 13b->7b concise 40", 1319, 254, 14.40, 14215.12, 10707.43, "4.86", "1.33"},
      {"gsm8k 70b->7b", 1319, 377, 14.40, 144018.55, 13440.71, "14.18", "10.72"},
      {"gsm8k 70b->13b", 1319, 467, 23.65, 144018.55, 16250.34, "11.76", "8.86"},
      {"csqa 13b->7b 10->100", 1221, 745, 60.69, 4235.46, 3472.33, "0.33", "1.22"},
      {"csqa 13b->7b 20->100", 1221, 790, 60.69, 4235.46, 3656.64, "4.01", "1.16"},
      {"csqa 13b->7b 30->100", 1221, 853, 60.69, 4235.46, 3579.21, "9.17", "1.18"},
      {"csqa 13b->7b 40->300", 1221, 867, 60.61, 12128.50, 10068.97, "10.40", "1.20"},
      {"csqa 70b->7b", 1221, 912, 60.69, 43285.73, 5600.38, "14.00", "7.73"},
  };
  return rows;
}

/// Synthetic results and gold for one row: the first `correct` results end
/// with the gold answer, the rest with a wrong one. Times are spread evenly.
inline void build_row_fixture(const ComparisonRow &row, std::vector<CompletionResult> &results,
                              std::vector<DatasetRecord> &gold) {
  results.clear();
  gold.clear();
  const double per = row.run_time_s / row.n;
  for (int i = 0; i < row.n; ++i) {
    DatasetRecord g;
    g.id = "ex" + std::to_string(i);
    g.question = "question " + std::to_string(i);
    g.gold_answer = std::to_string(10 + i);
    gold.push_back(g);
    CompletionResult r;
    r.request_id = g.id;
    r.guidance.request_id = g.id;
    r.guidance.text = "Let us think";
    r.guidance.generation_time = per * 0.25;
    r.student_time = per * 0.75;
    r.full_response = r.guidance.text + " step by step. The answer is " +
                      (i < row.correct ? g.gold_answer : std::to_string(-1 - i)) + ".";
    results.push_back(r);
  }
}

struct ExtractionCase {
  std::string text;
  TaskKind task;
  std::optional<std::string> expected;
};

inline const std::vector<ExtractionCase> &extraction_cases() {
  using T = TaskKind;
  static const std::vector<ExtractionCase> cases = {
      {"Natalia sold 48+24 = 72 clips altogether in April and May. The answer is 72.", T::Numeric, "72"},
      {"The answer is -5.", T::Numeric, "-5"},
      {"The answer is 1,234.", T::Numeric, "1234"},
      {"So the answer is $18.", T::Numeric, "18"},
      {"the answer is 3.50", T::Numeric, "3.5"},
      {"THE ANSWER IS 42", T::Numeric, "42"},
      {"no conclusion reached", T::Numeric, std::nullopt},
      {"She has 5 apples and buys 3 more, so 8 in total.", T::Numeric, "8"},
      {"First the answer is 4. Wait, the answer is 6.", T::Numeric, "6"},
      {"The answer is: 12", T::Numeric, "12"},
      {"The temperature drops to -3 degrees.", T::Numeric, "-3"},
      {"", T::Numeric, std::nullopt},
      {"It costs 1,000,000 dollars.", T::Numeric, "1000000"},
      {"He came 3rd in the race", T::Numeric, std::nullopt},
      {"The answer is 07.", T::Numeric, "7"},
      {"Total = 24 + 48 = 72. The answer is 72.", T::Numeric, "72"},
      {"Each piece is 5.5.", T::Numeric, "5.5"},
      {"The answer is **15**", T::Numeric, "15"},
      {"The answer is 0.", T::Numeric, "0"},
      {"the answer is +7", T::Numeric, "7"},
      {"Values 1.5 and 2.25", T::Numeric, "2.25"},
      {"Answer pending", T::Numeric, std::nullopt},
      {"The answer is 10. Then 3 more arrive.", T::Numeric, "10"},
      {"The answer is (b).", T::MultipleChoice, "b"},
      {"So the answer is (E).", T::MultipleChoice, "e"},
      {"Answer: c", T::MultipleChoice, "c"},
      {"(a) is the answer.", T::MultipleChoice, "a"},
      {"The answer is d.", T::MultipleChoice, "d"},
      {"I think the answer is (c), not (a). Final: the answer is (e).", T::MultipleChoice, "e"},
      {"no answer here", T::MultipleChoice, std::nullopt},
      {"Options (a) and (b) look plausible.", T::MultipleChoice, std::nullopt},
      {"The answered question (b)", T::MultipleChoice, std::nullopt},
      {"The answer is (f).", T::MultipleChoice, std::nullopt},
      {"The answer is (B)", T::MultipleChoice, "b"},
      {"", T::MultipleChoice, std::nullopt},
  };
  return cases;
}

}  // namespace gkt::testing
