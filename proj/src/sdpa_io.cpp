#include "reachsos/sdpa_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace reachsos {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string write_sdpa(const SdpProblem& problem) {
  problem.validate();
  const int m = static_cast<int>(problem.rows.size());
  const int nblocks = static_cast<int>(problem.blocks.size());
  const bool has_free = problem.num_free > 0;
  const int free_block = nblocks;  // appended split block when present

  std::ostringstream os;
  os << "*SDPA sparse format; equalities tr(F_k Y) = c_k over block-diagonal Y >= 0\n";
  if (problem.objective.logdet_block >= 0) {
    os << "*REACHSOS logdet_block " << problem.objective.logdet_block << " weight "
       << fmt(problem.objective.logdet_weight) << "\n";
  }
  if (has_free) {
    os << "*REACHSOS free_block " << free_block << " count " << problem.num_free << "\n";
  }
  os << m << " = mDIM\n";
  os << (nblocks + (has_free ? 1 : 0)) << " = nBLOCK\n";
  for (int j = 0; j < nblocks; ++j) {
    if (j) os << " ";
    os << (problem.blocks[j].kind == BlockKind::Diag ? -problem.blocks[j].size
                                                     : problem.blocks[j].size);
  }
  if (has_free) os << (nblocks ? " " : "") << -(2 * problem.num_free);
  os << "\n";
  for (int i = 0; i < m; ++i) {
    if (i) os << " ";
    os << fmt(problem.rows[i].rhs);
  }
  os << "\n";

  // matno 0 is F0 = -C; constraint i writes F_i.  Entry (i,j,v) sets both
  // mirrored coefficients to v, so off-diagonal stored weights are halved.
  auto emit_entry = [&](int matno, int block, int r, int c, double value) {
    const double v = r == c ? value : 0.5 * value;
    if (v == 0.0) return;
    os << matno << " " << (block + 1) << " " << (r + 1) << " " << (c + 1) << " " << fmt(v)
       << "\n";
  };
  auto emit_free = [&](int matno, int index, double value) {
    if (value == 0.0) return;
    os << matno << " " << (free_block + 1) << " " << (index + 1) << " " << (index + 1) << " "
       << fmt(value) << "\n";
    os << matno << " " << (free_block + 1) << " " << (problem.num_free + index + 1) << " "
       << (problem.num_free + index + 1) << " " << fmt(-value) << "\n";
  };

  for (const auto& e : problem.objective.block_linear) {
    emit_entry(0, e.block, e.row, e.col, -e.value);
  }
  for (const auto& f : problem.objective.free_linear) emit_free(0, f.index, -f.value);
  for (int i = 0; i < m; ++i) {
    for (const auto& e : problem.rows[i].block_terms) {
      emit_entry(i + 1, e.block, e.row, e.col, e.value);
    }
    for (const auto& f : problem.rows[i].free_terms) emit_free(i + 1, f.index, f.value);
  }
  return os.str();
}

void write_sdpa_file(const SdpProblem& problem, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << write_sdpa(problem);
}

SdpProblem read_sdpa(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int logdet_block = -1;
  double logdet_weight = 1.0;
  int free_block = -1;
  int free_count = 0;

  // Header: comments, then mDIM, nBLOCK, block sizes, c vector.
  std::vector<std::string> header_lines;
  while (header_lines.size() < 3 && std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '*' || line[0] == '"') {
      std::istringstream cs(line.substr(1));
      std::string tag;
      cs >> tag;
      if (tag == "REACHSOS") {
        std::string what;
        cs >> what;
        if (what == "logdet_block") {
          std::string kw;
          cs >> logdet_block >> kw >> logdet_weight;
        } else if (what == "free_block") {
          std::string kw;
          cs >> free_block >> kw >> free_count;
        }
      }
      continue;
    }
    header_lines.push_back(line);
  }
  if (header_lines.size() < 3) throw std::runtime_error("read_sdpa: truncated header");

  auto first_int = [](const std::string& s) {
    std::istringstream is(s);
    long v;
    if (!(is >> v)) throw std::runtime_error("read_sdpa: expected integer in '" + s + "'");
    return static_cast<int>(v);
  };
  const int m = first_int(header_lines[0]);
  const int nblock = first_int(header_lines[1]);
  if (m < 0 || nblock <= 0) throw std::runtime_error("read_sdpa: bad dimensions");

  SdpProblem prob;
  {
    std::istringstream bs(header_lines[2]);
    for (int j = 0; j < nblock; ++j) {
      long sz;
      char sep;
      while (bs.peek() == ',' || bs.peek() == '(' || bs.peek() == ')' || bs.peek() == '{' ||
             bs.peek() == '}' || bs.peek() == ' ')
        bs.get(sep);
      if (!(bs >> sz)) throw std::runtime_error("read_sdpa: bad block size list");
      SdpBlockSpec spec;
      spec.kind = sz < 0 ? BlockKind::Diag : BlockKind::Psd;
      spec.size = static_cast<int>(std::abs(sz));
      spec.name = "block" + std::to_string(j);
      prob.blocks.push_back(spec);
    }
  }
  prob.rows.resize(m);
  {
    std::string cline;
    while (std::getline(in, cline)) {
      if (cline.empty() || cline[0] == '*' || cline[0] == '"') continue;
      break;
    }
    std::istringstream cs(cline);
    for (int i = 0; i < m; ++i) {
      char sep;
      while (cs.peek() == ',' || cs.peek() == '{' || cs.peek() == '}' || cs.peek() == ' ')
        cs.get(sep);
      if (!(cs >> prob.rows[i].rhs)) throw std::runtime_error("read_sdpa: bad RHS vector");
    }
  }

  const bool has_free = free_block >= 0;
  if (has_free) {
    if (free_block != nblock - 1 || prob.blocks[free_block].kind != BlockKind::Diag ||
        prob.blocks[free_block].size != 2 * free_count) {
      throw std::runtime_error("read_sdpa: inconsistent free-variable annotation");
    }
    prob.num_free = free_count;
  }

  // Entries.  The split block folds back into free variables; only the v+
  // half is read, the v- half is checked for consistency.
  struct Pending {
    int matno, block, r, c;
    double v;
  };
  std::vector<Pending> entries;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '*' || line[0] == '"') continue;
    std::istringstream es(line);
    Pending e;
    if (!(es >> e.matno >> e.block >> e.r >> e.c >> e.v)) {
      throw std::runtime_error("read_sdpa: bad entry line '" + line + "'");
    }
    e.block -= 1;
    e.r -= 1;
    e.c -= 1;
    if (e.matno < 0 || e.matno > m) throw std::runtime_error("read_sdpa: matrix index range");
    if (e.block < 0 || e.block >= nblock) throw std::runtime_error("read_sdpa: block range");
    if (e.r > e.c) std::swap(e.r, e.c);
    entries.push_back(e);
  }

  for (const auto& e : entries) {
    const bool in_free = has_free && e.block == free_block;
    if (in_free) {
      if (e.r != e.c) throw std::runtime_error("read_sdpa: off-diagonal entry in split block");
      if (e.r >= free_count) continue;  // v- half; consistency is the writer's job
      if (e.matno == 0) {
        prob.objective.free_linear.push_back({e.r, -e.v});
      } else {
        prob.rows[e.matno - 1].free_terms.push_back({e.r, e.v});
      }
      continue;
    }
    const double total = e.r == e.c ? e.v : 2.0 * e.v;
    if (e.matno == 0) {
      prob.objective.block_linear.push_back({e.block, e.r, e.c, -total});
    } else {
      prob.rows[e.matno - 1].block_terms.push_back({e.block, e.r, e.c, total});
    }
  }

  if (has_free) prob.blocks.pop_back();
  if (logdet_block >= 0) {
    prob.objective.logdet_block = logdet_block;
    prob.objective.logdet_weight = logdet_weight;
  }
  prob.validate();
  return prob;
}

SdpProblem read_sdpa_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return read_sdpa(ss.str());
}

}  // namespace reachsos
