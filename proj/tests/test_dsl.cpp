#include <doctest.h>

#include <random>
#include <string>

#include "csem/dsl.hpp"

using namespace csem;

namespace {

bool has_diag_at(const ParseResult& r, int line, const std::string& fragment) {
  for (const auto& d : r.diagnostics)
    if (d.line == line && d.message.find(fragment) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_SUITE("dsl") {

TEST_CASE("full program parses with all statement kinds") {
  const std::string src =
      "# model script\n"
      "set divisor = n\n"
      "set population.seed = 17\n"
      "\n"
      "composite A <~ average (a1, a2) using refined\n"
      "composite B <~ fixed(b1=0.25, b2=0.75) (b1, b2) using pseudo pseudo b1\n"
      "composite C <~ free(anchor=c2) (c1, c2) using phantom transmit full\n"
      "composite Y <~ sum (y1, y2) using blended transmit mimic\n"
      "Y ~ A + B + C\n"
      "A ~~ B\n";
  ParseResult r = parse(src);
  REQUIRE_MESSAGE(r.ok(), (r.diagnostics.empty() ? "" : r.diagnostics[0].message));

  REQUIRE(r.program.blocks.size() == 4);
  const auto& a = r.program.blocks[0];
  CHECK(a.name == "A");
  CHECK(a.components == std::vector<std::string>{"a1", "a2"});
  CHECK(a.weight_mode == WeightMode::average);
  CHECK(a.spec == SpecKind::ho_refined);
  CHECK(a.transmission == Transmission::mimic_two_step);  // fixed-weight default

  const auto& b = r.program.blocks[1];
  CHECK(b.weight_mode == WeightMode::fixed);
  CHECK(b.fixed_values == std::vector<double>{0.25, 0.75});
  CHECK(b.spec == SpecKind::pseudo_indicator);
  CHECK(b.pseudo_or_anchor == "b1");

  const auto& c = r.program.blocks[2];
  CHECK(c.weight_mode == WeightMode::free_);
  CHECK(c.pseudo_or_anchor == "c2");
  CHECK(c.spec == SpecKind::ho_phantom);
  CHECK(c.transmission == Transmission::full);

  REQUIRE(r.program.structural.regressions.size() == 1);
  CHECK(r.program.structural.regressions[0].outcome == "Y");
  CHECK(r.program.structural.regressions[0].predictors ==
        std::vector<std::string>{"A", "B", "C"});
  REQUIRE(r.program.structural.covariances.size() == 1);
  CHECK(r.program.structural.covariances[0] == std::pair<std::string, std::string>{"A", "B"});
  CHECK(r.program.options.at("divisor") == "n");
  CHECK(r.program.options.at("population.seed") == "17");
}

TEST_CASE("transmission defaults depend on the weight mode") {
  ParseResult r = parse(
      "composite A <~ free (a1, a2) using refined\n"
      "composite Y <~ average (y1, y2) using refined\n"
      "Y ~ A\n");
  REQUIRE(r.ok());
  CHECK(r.program.blocks[0].transmission == Transmission::full);
  CHECK(r.program.blocks[1].transmission == Transmission::mimic_two_step);
}

TEST_CASE("set values keep arbitrary text including separators") {
  ParseResult r = parse("set population.A.sigma = 1, 0.3; 0.3, 1  # within-block\n");
  REQUIRE(r.ok());
  CHECK(r.program.options.at("population.A.sigma") == "1, 0.3; 0.3, 1");
}

TEST_CASE("diagnostics carry 1-based position and expectations") {
  ParseResult r = parse(
      "composite A <~ average (a1, a2) using refined\n"
      "composite B <~ banana (b1, b2) using refined\n"
      "Y ~ A + B\n");
  REQUIRE(!r.ok());
  CHECK(has_diag_at(r, 2, "expected"));
  for (const auto& d : r.diagnostics) {
    CHECK(d.line >= 1);
    CHECK(d.col >= 1);
  }
}

TEST_CASE("several malformed lines surface in one pass") {
  ParseResult r = parse(
      "composite A <~\n"
      "composite B <~ average b1, b2) using refined\n"
      "composite C <~ average (c1, c2) using refined\n"
      "Z ~ C\n");
  CHECK(r.diagnostics.size() >= 2);
  // the well-formed composite still parsed
  bool found_c = false;
  for (const auto& b : r.program.blocks) found_c = found_c || b.name == "C";
  CHECK(found_c);
}

TEST_CASE("parse never throws on garbage") {
  const std::vector<std::string> inputs = {
      "\x01\x02\x03", "composite", "~~~", "composite A <~ fixed( (x) using pseudo",
      "set\n", "A ~\n", "((((", std::string(1, '\0')};
  for (const std::string& src : inputs) {
    ParseResult r = parse(src);
    CHECK(!r.ok());
  }
}

TEST_CASE("semantic validation") {
  SUBCASE("duplicate composite names") {
    ParseResult r = parse(
        "composite A <~ average (a1, a2) using refined\n"
        "composite A <~ average (b1, b2) using refined\n"
        "A ~ A\n");
    CHECK(!r.ok());
  }
  SUBCASE("duplicate components within a block") {
    ParseResult r = parse("composite A <~ average (a1, a1) using refined\nY ~ A\n");
    CHECK(!r.ok());
  }
  SUBCASE("pseudo must name a component") {
    ParseResult r = parse(
        "composite A <~ average (a1, a2) using pseudo pseudo zz\n"
        "composite Y <~ average (y1, y2) using pseudo\n"
        "Y ~ A\n");
    CHECK(!r.ok());
  }
  SUBCASE("undeclared names in the structural model") {
    ParseResult r = parse("composite A <~ average (a1, a2) using refined\nY ~ A + Q\n");
    CHECK(!r.ok());
  }
  SUBCASE("regression cycles") {
    ParseResult r = parse(
        "composite A <~ average (a1, a2) using refined\n"
        "composite B <~ average (b1, b2) using refined\n"
        "A ~ B\n"
        "B ~ A\n");
    CHECK(!r.ok());
  }
  SUBCASE("weight mode must suit the specification") {
    CHECK(!parse("composite A <~ free (a1, a2) using twostep\nY ~ A\n"
                 "composite Y <~ average (y1, y2) using twostep\n")
               .ok());
    CHECK(!parse("composite A <~ average (a1, a2) using original\n"
                 "composite Y <~ average (y1, y2) using original\nY ~ A\n")
               .ok());
    CHECK(!parse("composite A <~ fixed(a1=0.2, a2=0.8) (a1, a2) using refined\n"
                 "composite Y <~ average (y1, y2) using refined\nY ~ A\n")
               .ok());
  }
  SUBCASE("fixed values must cover exactly the components") {
    CHECK(!parse("composite A <~ fixed(a1=0.2) (a1, a2) using pseudo\n"
                 "composite Y <~ average (y1, y2) using pseudo\nY ~ A\n")
               .ok());
    CHECK(!parse("composite A <~ fixed(a1=0.2, zz=0.8) (a1, a2) using pseudo\n"
                 "composite Y <~ average (y1, y2) using pseudo\nY ~ A\n")
               .ok());
  }
}

TEST_CASE("render produces the canonical form") {
  ParseResult r = parse(
      "composite A <~ average (a1, a2) using refined\n"
      "Y ~ A\n"
      "set zeta = 1\n"
      "set alpha = 2\n"
      "composite Y <~ free (y1, y2) using blended\n");
  REQUIRE(r.ok());
  std::string text = render(r.program);

  // options first and alphabetical, transmit always explicit
  CHECK(text.find("set alpha = 2\nset zeta = 1\n") == 0);
  CHECK(text.find("composite A <~ average (a1, a2) using refined transmit mimic\n") !=
        std::string::npos);
  CHECK(text.find("composite Y <~ free (y1, y2) using blended transmit full\n") !=
        std::string::npos);
  CHECK(text.find("Y ~ A\n") != std::string::npos);
}

TEST_CASE("parse of render is the identity") {
  ModelProgram p;
  CompositeBlock a{"A", {"a1", "a2", "a3"}, WeightMode::fixed, {0.25, 0.5, 0.25},
                   SpecKind::pseudo_indicator, Transmission::mimic_two_step, "a2"};
  CompositeBlock b{"B", {"b1", "b2"}, WeightMode::free_, {}, SpecKind::ho_refined,
                   Transmission::full, "b1"};
  CompositeBlock y{"Y", {"y1", "y2"}, WeightMode::unit_sum, {}, SpecKind::ho_blended,
                   Transmission::mimic_two_step, ""};
  p.blocks = {a, b, y};
  p.structural.regressions = {{"Y", {"A", "B"}}};
  p.structural.covariances = {{"A", "B"}};
  p.options = {{"divisor", "n-1"}, {"population.seed", "3"}};

  ParseResult round = parse(render(p));
  REQUIRE_MESSAGE(round.ok(), (round.diagnostics.empty() ? "" : round.diagnostics[0].message));
  CHECK(round.program == p);
  CHECK(render(round.program) == render(p));
}

TEST_CASE("randomized round trips") {
  std::mt19937_64 rng(2026);
  auto pick = [&](int n) { return static_cast<int>(rng() % n); };
  const SpecKind comp_specs[] = {SpecKind::pseudo_indicator, SpecKind::ho_original,
                                 SpecKind::ho_refined, SpecKind::ho_phantom,
                                 SpecKind::ho_blended};

  for (int trial = 0; trial < 200; ++trial) {
    ModelProgram p;
    int n_blocks = 2 + pick(3);
    for (int i = 0; i < n_blocks; ++i) {
      CompositeBlock b;
      b.name = "C" + std::to_string(i);
      int k = 2 + pick(2);
      for (int j = 0; j < k; ++j) b.components.push_back(b.name + "x" + std::to_string(j));
      b.spec = comp_specs[pick(5)];
      switch (b.spec) {
        case SpecKind::ho_original:
          b.weight_mode = WeightMode::free_;
          break;
        case SpecKind::pseudo_indicator:
          b.weight_mode = static_cast<WeightMode>(pick(3));  // any fixed mode
          break;
        case SpecKind::ho_refined: {
          const WeightMode modes[] = {WeightMode::unit_sum, WeightMode::average,
                                      WeightMode::free_};
          b.weight_mode = modes[pick(3)];
          break;
        }
        default:
          b.weight_mode = static_cast<WeightMode>(pick(4));
      }
      if (b.weight_mode == WeightMode::fixed)
        for (int j = 0; j < k; ++j) b.fixed_values.push_back(0.25 * (1 + pick(4)));
      b.transmission = b.weight_mode == WeightMode::free_ || pick(2) == 0
                           ? Transmission::full
                           : Transmission::mimic_two_step;
      bool names_anchor = b.weight_mode == WeightMode::free_;
      bool names_pseudo = b.weight_mode != WeightMode::free_ &&
                          (b.spec == SpecKind::pseudo_indicator ||
                           b.spec == SpecKind::ho_blended);
      if ((names_anchor || names_pseudo) && pick(2) == 0)
        b.pseudo_or_anchor = b.components[pick(k)];
      p.blocks.push_back(b);
    }
    Regression reg;
    reg.outcome = p.blocks.back().name;
    for (int i = 0; i + 1 < n_blocks; ++i) reg.predictors.push_back(p.blocks[i].name);
    p.structural.regressions.push_back(reg);
    if (pick(2) == 0 && n_blocks > 2)
      p.structural.covariances.push_back({p.blocks[0].name, p.blocks[1].name});
    if (pick(2) == 0) p.options["population.seed"] = std::to_string(pick(1000));

    std::string text = render(p);
    ParseResult round = parse(text);
    REQUIRE_MESSAGE(round.ok(), text << "\n"
                                     << (round.diagnostics.empty()
                                             ? ""
                                             : round.diagnostics[0].message));
    CHECK(round.program == p);
    CHECK(render(round.program) == text);
  }
}

}  // TEST_SUITE
