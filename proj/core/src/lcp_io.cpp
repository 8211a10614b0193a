#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dsim/error.hpp"
#include "dsim/lcp.hpp"

namespace dsim {

namespace {

struct Line {
  int number;
  std::vector<std::string> tokens;
};

std::vector<Line> tokenize(std::string_view text) {
  std::vector<Line> lines;
  std::istringstream in{std::string(text)};
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream words(raw);
    Line line{number, {}};
    for (std::string w; words >> w;) line.tokens.push_back(w);
    if (!line.tokens.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + msg);
}

double to_double(const std::string& tok, int line) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0' || errno == ERANGE) fail(line, "bad number '" + tok + "'");
  return v;
}

int to_int(const std::string& tok, int line) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0' || errno == ERANGE) fail(line, "bad integer '" + tok + "'");
  return static_cast<int>(v);
}

}  // namespace

LcpProblem parse_lcp(std::string_view text) {
  const std::vector<Line> lines = tokenize(text);
  if (lines.empty()) throw Error(ErrorCode::ParseError, "empty LCP file");

  const Line& head = lines.front();
  if (head.tokens.size() != 1) fail(head.number, "expected the dimension alone on the first line");
  const int n = to_int(head.tokens[0], head.number);
  if (n < 0) fail(head.number, "dimension must be non-negative");
  if (static_cast<int>(lines.size()) < n + 2) {
    throw Error(ErrorCode::ParseError, "expected " + std::to_string(n) + " matrix rows and a b row");
  }

  LcpProblem p;
  p.A.resize(n, n);
  p.b.resize(n);
  for (int r = 0; r < n; ++r) {
    const Line& l = lines[static_cast<std::size_t>(1 + r)];
    if (static_cast<int>(l.tokens.size()) != n) {
      fail(l.number, "matrix row needs " + std::to_string(n) + " entries");
    }
    for (int c = 0; c < n; ++c) p.A(r, c) = to_double(l.tokens[static_cast<std::size_t>(c)], l.number);
  }
  const Line& bl = lines[static_cast<std::size_t>(1 + n)];
  if (static_cast<int>(bl.tokens.size()) != n) fail(bl.number, "b row needs " + std::to_string(n) + " entries");
  for (int c = 0; c < n; ++c) p.b[c] = to_double(bl.tokens[static_cast<std::size_t>(c)], bl.number);

  for (std::size_t k = static_cast<std::size_t>(n) + 2; k < lines.size(); ++k) {
    const Line& l = lines[k];
    if (l.tokens.size() != 4 || l.tokens[0] != "friction") {
      fail(l.number, "expected 'friction <i> <N(i)> <mu>'");
    }
    FrictionPair fp;
    fp.index = to_int(l.tokens[1], l.number);
    fp.normal = to_int(l.tokens[2], l.number);
    fp.mu = to_double(l.tokens[3], l.number);
    p.friction.push_back(fp);
  }
  try {
    FrictionMap validate(p);
    (void)validate;
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return p;
}

LcpProblem load_lcp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_lcp(buf.str());
}

std::string format_lcp(const LcpProblem& p) {
  std::ostringstream out;
  out << std::setprecision(17);
  const int n = p.dim();
  out << n << '\n';
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) out << (c ? " " : "") << p.A(r, c);
    out << '\n';
  }
  for (int c = 0; c < n; ++c) out << (c ? " " : "") << p.b[c];
  out << '\n';
  for (const FrictionPair& fp : p.friction) {
    out << "friction " << fp.index << ' ' << fp.normal << ' ' << fp.mu << '\n';
  }
  return out.str();
}

}  // namespace dsim
