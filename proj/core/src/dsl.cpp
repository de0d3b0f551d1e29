#include "csem/dsl.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace csem {

namespace {

struct Token {
  enum Kind { ident, number, punct, end };
  Kind kind = end;
  std::string text;
  double num = 0.0;
  int col = 0;   // 1-based start
  int after = 0; // 0-based offset just past the token
};

std::vector<Token> tokenize_line(const std::string& line, int line_no,
                                 std::vector<Diagnostic>& diags) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '#') break;
    int col = static_cast<int>(i) + 1;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i;
      while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) ||
                                 line[j] == '_' || line[j] == '.'))
        ++j;
      out.push_back({Token::ident, line.substr(i, j - i), 0.0, col, static_cast<int>(j)});
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
        ((c == '-' || c == '+') && i + 1 < line.size() &&
         (std::isdigit(static_cast<unsigned char>(line[i + 1])) || line[i + 1] == '.'))) {
      const char* start = line.c_str() + i;
      char* stop = nullptr;
      double v = std::strtod(start, &stop);
      size_t j = i + static_cast<size_t>(stop - start);
      out.push_back({Token::number, line.substr(i, j - i), v, col, static_cast<int>(j)});
      i = j;
      continue;
    }
    if (line.compare(i, 2, "<~") == 0 || line.compare(i, 2, "~~") == 0) {
      out.push_back({Token::punct, line.substr(i, 2), 0.0, col, static_cast<int>(i) + 2});
      i += 2;
      continue;
    }
    if (c == '~' || c == '(' || c == ')' || c == ',' || c == '=' || c == '+') {
      out.push_back({Token::punct, std::string(1, c), 0.0, col, static_cast<int>(i) + 1});
      ++i;
      continue;
    }
    diags.push_back({line_no, col, std::string("unexpected character '") + c +
                                       "'; expected a name, number or operator"});
    return {};
  }
  Token eol;
  eol.kind = Token::end;
  eol.col = static_cast<int>(line.size()) + 1;
  eol.after = static_cast<int>(line.size());
  out.push_back(eol);
  return out;
}

struct LineParser {
  const std::vector<Token>& toks;
  size_t pos = 0;
  int line_no;
  std::vector<Diagnostic>& diags;
  bool failed = false;

  const Token& peek() const { return toks[pos]; }
  const Token& take() { return toks[pos].kind == Token::end ? toks[pos] : toks[pos++]; }

  bool fail(const std::string& message) {
    if (!failed) diags.push_back({line_no, peek().col, message});
    failed = true;
    return false;
  }
  bool expect_punct(const std::string& p, const std::string& context) {
    if (peek().kind == Token::punct && peek().text == p) {
      ++pos;
      return true;
    }
    return fail("expected '" + p + "' " + context);
  }
  bool expect_ident(std::string& out, const std::string& context) {
    if (peek().kind == Token::ident) {
      out = take().text;
      return true;
    }
    return fail("expected a name " + context);
  }
  bool at_end() const { return peek().kind == Token::end; }
};

const std::map<std::string, SpecKind> kSpecNames = {
    {"twostep", SpecKind::two_step},      {"onestep", SpecKind::one_step_modified},
    {"pseudo", SpecKind::pseudo_indicator}, {"original", SpecKind::ho_original},
    {"refined", SpecKind::ho_refined},    {"phantom", SpecKind::ho_phantom},
    {"blended", SpecKind::ho_blended},
};

std::string spec_keyword(SpecKind spec) {
  for (const auto& [k, v] : kSpecNames)
    if (v == spec) return k;
  return "blended";
}

bool parse_composite(LineParser& p, CompositeBlock& blk, bool& transmit_given) {
  if (!p.expect_ident(blk.name, "after 'composite'")) return false;
  if (!p.expect_punct("<~", "after the composite name")) return false;

  std::map<std::string, double> fixed;
  std::string kw;
  if (!p.expect_ident(kw, "for the weight mode (sum, average, fixed or free)")) return false;
  if (kw == "sum") {
    blk.weight_mode = WeightMode::unit_sum;
  } else if (kw == "average") {
    blk.weight_mode = WeightMode::average;
  } else if (kw == "fixed") {
    blk.weight_mode = WeightMode::fixed;
    if (!p.expect_punct("(", "after 'fixed'")) return false;
    while (true) {
      std::string name;
      if (!p.expect_ident(name, "inside fixed(...)")) return false;
      if (!p.expect_punct("=", "after '" + name + "' inside fixed(...)")) return false;
      if (p.peek().kind != Token::number)
        return p.fail("expected a number after '" + name + " ='");
      fixed[name] = p.take().num;
      if (p.peek().kind == Token::punct && p.peek().text == ",") {
        p.take();
        continue;
      }
      break;
    }
    if (!p.expect_punct(")", "to close fixed(...)")) return false;
  } else if (kw == "free") {
    blk.weight_mode = WeightMode::free_;
    // bare `free` is followed directly by the component list; disambiguate
    // from free(anchor=...) by looking past the parenthesis
    bool anchor_clause = p.peek().kind == Token::punct && p.peek().text == "(" &&
                         p.pos + 2 < p.toks.size() &&
                         p.toks[p.pos + 1].kind == Token::ident &&
                         p.toks[p.pos + 1].text == "anchor" &&
                         p.toks[p.pos + 2].kind == Token::punct &&
                         p.toks[p.pos + 2].text == "=";
    if (anchor_clause) {
      p.take();
      std::string anchor_kw;
      if (!p.expect_ident(anchor_kw, "inside free(...)") || anchor_kw != "anchor")
        return p.fail("expected 'anchor' inside free(...)");
      if (!p.expect_punct("=", "after 'anchor'")) return false;
      if (!p.expect_ident(blk.pseudo_or_anchor, "after 'anchor ='")) return false;
      if (!p.expect_punct(")", "to close free(anchor=...)")) return false;
    }
  } else {
    return p.fail("unknown weight mode '" + kw +
                  "'; expected sum, average, fixed or free");
  }

  if (!p.expect_punct("(", "before the component list")) return false;
  while (true) {
    std::string name;
    if (!p.expect_ident(name, "in the component list")) return false;
    blk.components.push_back(name);
    if (p.peek().kind == Token::punct && p.peek().text == ",") {
      p.take();
      continue;
    }
    break;
  }
  if (!p.expect_punct(")", "to close the component list")) return false;

  std::string using_kw;
  if (!p.expect_ident(using_kw, "; expected 'using'") || using_kw != "using")
    return p.fail("expected 'using' after the component list");
  std::string spec_kw;
  if (!p.expect_ident(spec_kw, "after 'using'")) return false;
  auto it = kSpecNames.find(spec_kw);
  if (it == kSpecNames.end())
    return p.fail("unknown specification '" + spec_kw +
                  "'; expected twostep, onestep, pseudo, original, refined, phantom "
                  "or blended");
  blk.spec = it->second;

  transmit_given = false;
  while (p.peek().kind == Token::ident) {
    std::string clause = p.take().text;
    if (clause == "transmit") {
      std::string mode;
      if (!p.expect_ident(mode, "after 'transmit'")) return false;
      if (mode == "full")
        blk.transmission = Transmission::full;
      else if (mode == "mimic")
        blk.transmission = Transmission::mimic_two_step;
      else
        return p.fail("expected 'full' or 'mimic' after 'transmit'");
      transmit_given = true;
    } else if (clause == "pseudo") {
      std::string name;
      if (!p.expect_ident(name, "after 'pseudo'")) return false;
      if (!blk.pseudo_or_anchor.empty() && blk.pseudo_or_anchor != name)
        return p.fail("anchor and pseudo clauses name different components");
      blk.pseudo_or_anchor = name;
    } else {
      return p.fail("unknown clause '" + clause + "'; expected 'transmit' or 'pseudo'");
    }
  }
  if (!p.at_end()) return p.fail("unexpected trailing tokens; expected end of line");

  if (blk.weight_mode == WeightMode::fixed) {
    blk.fixed_values.clear();
    for (const auto& c : blk.components) {
      auto f = fixed.find(c);
      if (f == fixed.end())
        return p.fail("fixed(...) gives no weight for component " + c);
      blk.fixed_values.push_back(f->second);
      fixed.erase(f);
    }
    if (!fixed.empty())
      return p.fail("fixed(...) names " + fixed.begin()->first +
                    ", which is not in the component list");
  }
  return true;
}

void semantic_checks(ModelProgram& prog, const std::vector<int>& block_lines,
                     const std::vector<int>& reg_lines, const std::vector<int>& cov_lines,
                     std::vector<Diagnostic>& diags) {
  std::set<std::string> declared;
  std::set<std::string> block_names;
  for (size_t i = 0; i < prog.blocks.size(); ++i) {
    const CompositeBlock& b = prog.blocks[i];
    int line = block_lines[i];
    if (!block_names.insert(b.name).second)
      diags.push_back({line, 1, "duplicate composite name: " + b.name});
    declared.insert(b.name);
    std::set<std::string> comps;
    for (const auto& c : b.components) {
      declared.insert(c);
      if (!comps.insert(c).second)
        diags.push_back({line, 1, "component " + c + " listed twice in " + b.name});
    }
    if (!b.pseudo_or_anchor.empty() && !comps.count(b.pseudo_or_anchor))
      diags.push_back({line, 1, b.pseudo_or_anchor + " is not a component of " + b.name});

    bool fixed_mode = b.weight_mode != WeightMode::free_;
    switch (b.spec) {
      case SpecKind::two_step:
      case SpecKind::one_step_modified:
      case SpecKind::pseudo_indicator:
        if (!fixed_mode)
          diags.push_back({line, 1, "composite " + b.name + ": the " + spec_keyword(b.spec) +
                                        " specification supports fixed weights only"});
        break;
      case SpecKind::ho_original:
        if (fixed_mode)
          diags.push_back({line, 1, "composite " + b.name +
                                        ": the original specification estimates its "
                                        "weights; use free weights"});
        break;
      case SpecKind::ho_refined:
        if (b.weight_mode == WeightMode::fixed)
          diags.push_back({line, 1, "composite " + b.name +
                                        ": the refined specification supports sum, "
                                        "average or free weights"});
        break;
      default:
        break;
    }
  }

  auto check_name = [&](const std::string& name, int line) {
    if (!declared.count(name))
      diags.push_back({line, 1, "undeclared name: " + name});
  };
  for (size_t i = 0; i < prog.structural.regressions.size(); ++i) {
    check_name(prog.structural.regressions[i].outcome, reg_lines[i]);
    for (const auto& pred : prog.structural.regressions[i].predictors)
      check_name(pred, reg_lines[i]);
  }
  for (size_t i = 0; i < prog.structural.covariances.size(); ++i) {
    check_name(prog.structural.covariances[i].first, cov_lines[i]);
    check_name(prog.structural.covariances[i].second, cov_lines[i]);
  }

  // cycle detection over the regression graph
  std::map<std::string, std::vector<std::string>> edges;
  for (const auto& r : prog.structural.regressions)
    for (const auto& pred : r.predictors) edges[r.outcome].push_back(pred);
  std::map<std::string, int> state;  // 0 fresh, 1 visiting, 2 done
  std::function<bool(const std::string&)> cyclic = [&](const std::string& v) {
    int& st = state[v];
    if (st == 1) return true;
    if (st == 2) return false;
    st = 1;
    for (const auto& next : edges[v])
      if (cyclic(next)) return true;
    st = 2;
    return false;
  };
  for (size_t i = 0; i < prog.structural.regressions.size(); ++i)
    if (cyclic(prog.structural.regressions[i].outcome)) {
      diags.push_back({reg_lines[i], 1, "regressions form a cycle"});
      break;
    }
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

ParseResult parse(const std::string& source) {
  ParseResult out;
  std::vector<int> block_lines, reg_lines, cov_lines;

  std::istringstream in(source);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;

    // option values are free-form text, so 'set' lines bypass the tokenizer
    size_t ws = line.find_first_not_of(" \t");
    if (ws != std::string::npos && line.compare(ws, 3, "set") == 0 &&
        (ws + 3 == line.size() || line[ws + 3] == ' ' || line[ws + 3] == '\t')) {
      size_t i = ws + 3;
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      size_t key_start = i;
      while (i < line.size() && (std::isalnum(static_cast<unsigned char>(line[i])) ||
                                 line[i] == '_' || line[i] == '.'))
        ++i;
      std::string key = line.substr(key_start, i - key_start);
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (key.empty() || !(std::isalpha(static_cast<unsigned char>(key[0])) || key[0] == '_')) {
        out.diagnostics.push_back({line_no, static_cast<int>(key_start) + 1,
                                   "expected an option name after 'set'"});
        continue;
      }
      if (i >= line.size() || line[i] != '=') {
        out.diagnostics.push_back(
            {line_no, static_cast<int>(i) + 1, "expected '=' after the option name"});
        continue;
      }
      ++i;
      size_t stop = line.find('#', i);
      if (stop == std::string::npos) stop = line.size();
      std::string value = line.substr(i, stop - i);
      size_t b = value.find_first_not_of(" \t\r");
      size_t e = value.find_last_not_of(" \t\r");
      value = b == std::string::npos ? "" : value.substr(b, e - b + 1);
      if (value.empty()) {
        out.diagnostics.push_back(
            {line_no, static_cast<int>(i) + 1, "expected a value after '='"});
        continue;
      }
      out.program.options[key] = value;
      continue;
    }

    std::vector<Token> toks = tokenize_line(line, line_no, out.diagnostics);
    if (toks.empty()) continue;  // lexer error already reported
    if (toks.front().kind == Token::end) continue;

    LineParser p{toks, 0, line_no, out.diagnostics};
    const Token& first = p.peek();
    if (first.kind != Token::ident) {
      p.fail("expected a statement ('composite', 'set', a regression or a covariance)");
      continue;
    }
    if (first.text == "composite") {
      p.take();
      CompositeBlock blk;
      bool transmit_given = false;
      if (parse_composite(p, blk, transmit_given)) {
        if (!transmit_given)
          blk.transmission = blk.weight_mode == WeightMode::free_
                                 ? Transmission::full
                                 : Transmission::mimic_two_step;
        out.program.blocks.push_back(std::move(blk));
        block_lines.push_back(line_no);
      }
      continue;
    }
    std::string lhs = p.take().text;
    if (p.peek().kind == Token::punct && p.peek().text == "~~") {
      p.take();
      std::string rhs;
      if (!p.expect_ident(rhs, "after '~~'")) continue;
      if (!p.at_end()) {
        p.fail("unexpected trailing tokens; expected end of line");
        continue;
      }
      out.program.structural.covariances.push_back({lhs, rhs});
      cov_lines.push_back(line_no);
      continue;
    }
    if (p.peek().kind == Token::punct && p.peek().text == "~") {
      p.take();
      Regression reg;
      reg.outcome = lhs;
      std::string pred;
      if (!p.expect_ident(pred, "after '~'")) continue;
      reg.predictors.push_back(pred);
      bool bad = false;
      while (p.peek().kind == Token::punct && p.peek().text == "+") {
        p.take();
        if (!p.expect_ident(pred, "after '+'")) {
          bad = true;
          break;
        }
        reg.predictors.push_back(pred);
      }
      if (bad) continue;
      if (!p.at_end()) {
        p.fail("unexpected trailing tokens; expected end of line");
        continue;
      }
      out.program.structural.regressions.push_back(std::move(reg));
      reg_lines.push_back(line_no);
      continue;
    }
    p.fail("expected '~', '~~' or a statement keyword after '" + lhs + "'");
  }

  semantic_checks(out.program, block_lines, reg_lines, cov_lines, out.diagnostics);
  return out;
}

std::string render(const ModelProgram& program) {
  std::ostringstream out;
  for (const auto& [key, value] : program.options) out << "set " << key << " = " << value << "\n";

  for (const auto& b : program.blocks) {
    out << "composite " << b.name << " <~ ";
    switch (b.weight_mode) {
      case WeightMode::unit_sum:
        out << "sum";
        break;
      case WeightMode::average:
        out << "average";
        break;
      case WeightMode::fixed:
        out << "fixed(";
        for (size_t j = 0; j < b.components.size(); ++j) {
          if (j) out << ", ";
          out << b.components[j] << "="
              << fmt_double(j < b.fixed_values.size() ? b.fixed_values[j] : 0.0);
        }
        out << ")";
        break;
      case WeightMode::free_:
        out << "free";
        if (!b.pseudo_or_anchor.empty()) out << "(anchor=" << b.pseudo_or_anchor << ")";
        break;
    }
    out << " (";
    for (size_t j = 0; j < b.components.size(); ++j) {
      if (j) out << ", ";
      out << b.components[j];
    }
    out << ") using " << spec_keyword(b.spec) << " transmit "
        << (b.transmission == Transmission::full ? "full" : "mimic");
    if (b.weight_mode != WeightMode::free_ && !b.pseudo_or_anchor.empty())
      out << " pseudo " << b.pseudo_or_anchor;
    out << "\n";
  }

  for (const auto& r : program.structural.regressions) {
    out << r.outcome << " ~ ";
    for (size_t j = 0; j < r.predictors.size(); ++j) {
      if (j) out << " + ";
      out << r.predictors[j];
    }
    out << "\n";
  }
  for (const auto& [a, b] : program.structural.covariances) out << a << " ~~ " << b << "\n";
  return out.str();
}

}  // namespace csem
