#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "bocpd/error.hpp"
#include "bocpd/evaluation.hpp"

using namespace bocpd;

TEST_CASE("scoring examples") {
  {
    const std::vector<Declaration> d{{179, 182}, {240, 241}};
    const SeriesScore s = score_series(d, 181, 5);
    CHECK(s.tp == 1);
    CHECK(s.fp == 1);
    CHECK(s.latency.value() == 3.0);
    CHECK(s.precision == 0.5);
    CHECK(s.recall == 1.0);
    CHECK(s.f_score == doctest::Approx(2.0 / 3.0));
  }
  {
    const SeriesScore s = score_series({}, 181, 5);
    CHECK(s.tp == 0);
    CHECK(s.fp == 0);
    CHECK_FALSE(s.latency);
    CHECK(s.f_score == 0.0);
  }
  {
    // a second hit inside the tolerance is neither a TP nor an FP
    const std::vector<Declaration> d{{180, 183}, {182, 185}};
    const SeriesScore s = score_series(d, 181, 5);
    CHECK(s.tp == 1);
    CHECK(s.fp == 0);
    CHECK(s.latency.value() == 3.0);
  }
  {
    const std::vector<Declaration> d{{100, 102}};
    const SeriesScore s = score_series(d, 181, 5);
    CHECK(s.tp == 0);
    CHECK(s.fp == 1);
    CHECK(s.precision == 0.0);
  }
}

TEST_CASE("tolerance edges") {
  const std::vector<Declaration> d{{186, 190}};
  CHECK(score_series(d, 181, 5).tp == 1);
  CHECK(score_series(d, 181, 4).tp == 0);
  CHECK(score_series(std::vector<Declaration>{{181, 181}}, 181, 0).tp == 1);
  CHECK(score_series(std::vector<Declaration>{{182, 183}}, 181, 0).fp == 1);
  CHECK(score_series(std::vector<Declaration>{{1, 5}, {270, 270}}, 181,
                     std::numeric_limits<long>::max() / 2)
            .fp == 0);
}

TEST_CASE("scores stay in bounds and F falls with false positives") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<long> at(1, 270), lag(0, 6), count(0, 6);
  for (int i = 0; i < 1000; ++i) {
    std::vector<Declaration> d;
    const long n = count(rng);
    for (long j = 0; j < n; ++j) {
      const long cp = at(rng);
      d.push_back({cp, cp + lag(rng)});
    }
    const SeriesScore s = score_series(d, 181, 5);
    CHECK(s.tp + s.fp <= static_cast<int>(d.size()));
    CHECK(s.f_score >= 0.0);
    CHECK(s.f_score <= 1.0);
    CHECK(s.precision <= 1.0);
    if (s.tp) {
      d.push_back({10, 12});
      CHECK(score_series(d, 181, 5).f_score < s.f_score);
    }
  }
}

TEST_CASE("aggregate") {
  std::vector<SeriesScore> one{score_series(std::vector<Declaration>{{181, 183}}, 181)};
  const ScoreReport r1 = aggregate(one);
  CHECK(r1.series == 1);
  CHECK(r1.tp.mean == 1.0);
  CHECK(r1.tp.se == 0.0);
  CHECK(r1.latency.mean == 2.0);
  CHECK(r1.step_ms.n == 0);

  std::vector<SeriesScore> two{one[0], score_series({}, 181)};
  two[0].step_ms = 0.2;
  two[1].step_ms = 0.4;
  const ScoreReport r2 = aggregate(two);
  CHECK(r2.tp.mean == 0.5);
  CHECK(r2.tp.se == doctest::Approx(0.5));  // sd √0.5 over √2
  CHECK(r2.latency.n == 1);
  CHECK(r2.step_ms.mean == doctest::Approx(0.3));
  CHECK_THROWS_AS(aggregate(std::vector<SeriesScore>{}), TooFewObservations);

  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const Metric m = summarize(v);
  CHECK(m.mean == 2.5);
  CHECK(m.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(summarize(std::vector<double>{}).n == 0);
}

TEST_CASE("report formatting") {
  std::vector<SeriesScore> scores{score_series({}, 181)};
  const std::vector<ReportRow> rows{{"case 4", aggregate(scores)}};
  const std::string csv = report_csv(rows);
  CHECK(csv.rfind("label,series,tp,tp_se,", 0) == 0);
  CHECK(csv.find("case 4,1,0.0000,0.0000,0.0000,0.0000,") != std::string::npos);
  CHECK(csv.find(",NA,NA,NA,NA\n") != std::string::npos);  // no latency, no timing

  const std::string text = report_text(rows);
  CHECK(text.rfind("label", 0) == 0);
  CHECK(text.find("0.000(0.000)") != std::string::npos);
  CHECK(text.find("NA") != std::string::npos);
}
