#include <cstdio>
#include <fstream>

#include "metakit/errors.h"
#include "support.h"

using metakit::ColType;
using metakit::Dataset;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = std::string("mk_test_") + name;
  std::ofstream f(path, std::ios::binary);
  f << content;
  return path;
}

}  // namespace

TEST_CASE("csv: quoted fields, doubled quotes, embedded newlines, crlf") {
  auto p = write_temp("quoted.csv",
                      "name,score,note\r\n"
                      "\"Smith, J\",1.5,\"says \"\"hi\"\"\"\r\n"
                      "Tan,2.0,\"line1\nline2\"\r\n");
  Dataset d = Dataset::load_csv(p, {{"name", ColType::text},
                                    {"note", ColType::text}});
  std::remove(p.c_str());
  CHECK(d.nrow() == 2);
  CHECK(d.column("name").txt[0] == "Smith, J");
  CHECK(d.column("note").txt[0] == "says \"hi\"");
  CHECK(d.column("note").txt[1] == "line1\nline2");
  CHECK(d.column("score").num[1] == 2.0);
}

TEST_CASE("csv: missing tokens and type inference") {
  auto p = write_temp("miss.csv",
                      "a,b,c\n"
                      "1,x,NA\n"
                      "2.5,y,3\n"
                      ",z,nan\n");
  Dataset d = Dataset::load_csv(p);
  std::remove(p.c_str());
  CHECK(d.column("a").type == ColType::real);
  CHECK(d.column("b").type == ColType::categorical);
  CHECK(d.column("c").type == ColType::real);
  CHECK(d.column("a").miss[2] == 1);
  CHECK(d.column("c").miss[0] == 1);
  CHECK(d.column("c").miss[2] == 1);
  CHECK(d.column("b").levels == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("csv: numeric-looking column forced categorical by hint") {
  auto p = write_temp("hint.csv", "g,y\n0,1.0\n1,2.0\n0,3.0\n");
  Dataset d = Dataset::load_csv(p, {{"g", ColType::categorical}});
  std::remove(p.c_str());
  CHECK(d.column("g").type == ColType::categorical);
  CHECK(d.column("g").levels == std::vector<std::string>{"0", "1"});
}

TEST_CASE("csv: structural errors carry line numbers") {
  auto p1 = write_temp("short.csv", "a,b\n1,2\n3\n");
  CHECK_THROWS_AS(Dataset::load_csv(p1), metakit::ParseError);
  std::remove(p1.c_str());

  auto p2 = write_temp("dup.csv", "a,a\n1,2\n");
  CHECK_THROWS_AS(Dataset::load_csv(p2), metakit::SchemaError);
  std::remove(p2.c_str());

  auto p3 = write_temp("badq.csv", "a,b\n\"open,2\n");
  CHECK_THROWS_AS(Dataset::load_csv(p3), metakit::ParseError);
  std::remove(p3.c_str());

  auto p4 = write_temp("badreal.csv", "a\n1\nfoo\n");
  CHECK_THROWS_AS(Dataset::load_csv(p4, {{"a", ColType::real}}),
                  metakit::SchemaError);
  std::remove(p4.c_str());
}

TEST_CASE("csv: trailing blank lines are not rows") {
  auto p = write_temp("blank.csv", "a\n1\n2\n\n\n");
  Dataset d = Dataset::load_csv(p);
  std::remove(p.c_str());
  CHECK(d.nrow() == 2);
}

TEST_CASE("subset and row-id preservation") {
  Dataset d = Dataset::load_csv(data_path("bcg.csv"));
  CHECK(d.nrow() == 13);
  Dataset sub = d.subset("alloc", {"random"});
  CHECK(sub.nrow() == 7);
  // Original positions survive into the view.
  for (int i : sub.row_ids()) {
    CHECK(d.column("alloc").txt.size() == 0);  // categorical, not text
    CHECK(d.column("alloc").levels[d.column("alloc").cat[i]] == "random");
  }
  Dataset one = d.subset("trial", {"4"});
  CHECK(one.nrow() == 1);
  CHECK(one.column("ablat").num[0] == 52.0);
}

TEST_CASE("complete cases on the writing corpus") {
  metakit::CompleteCaseReport rep;
  Dataset cc = load_writing_cc(&rep);
  CHECK(cc.nrow() == static_cast<int>(oracle::writing::cc_k));
  CHECK(rep.n_omitted == static_cast<int>(oracle::writing::cc_omitted));
  const auto& fb = cc.column("feedback");
  REQUIRE(fb.type == ColType::categorical);
  CHECK(static_cast<double>(fb.levels.size()) == oracle::writing::feedback_level_count);
  int n0 = 0, n1 = 0;
  for (int i = 0; i < cc.nrow(); ++i) (fb.cat[i] == 0 ? n0 : n1)++;
  CHECK(n0 == static_cast<int>(oracle::writing::feedback_n_lvl0));
  CHECK(n1 == static_cast<int>(oracle::writing::feedback_n_lvl1));
}

TEST_CASE("transforms: domain violations become missing") {
  auto p = write_temp("tr.csv", "x\n4\n-1\n0\n");
  Dataset d = Dataset::load_csv(p);
  std::remove(p.c_str());
  int bad = 0;
  Dataset s = d.with_transform("x", metakit::Transform::sqrt_t, "sx", &bad);
  CHECK(bad == 1);
  CHECK(s.column("sx").num[0] == 2.0);
  CHECK(s.column("sx").miss[1] == 1);
  CHECK(s.column("sx").miss[2] == 0);

  bad = 0;
  Dataset l = d.with_transform("x", metakit::Transform::log_t, "lx", &bad);
  CHECK(bad == 2);

  Dataset q = d.with_transform("x", metakit::Transform::square, "qx", &bad);
  CHECK(q.column("qx").num[1] == 1.0);
}

TEST_CASE("with_real_column maps NaN to missing") {
  auto p = write_temp("rc.csv", "x\n1\n2\n");
  Dataset d = Dataset::load_csv(p);
  std::remove(p.c_str());
  Dataset d2 = d.with_real_column("z", {0.5, std::nan("")});
  CHECK(d2.column("z").miss[1] == 1);
  CHECK(d2.column("z").num[0] == 0.5);
}
