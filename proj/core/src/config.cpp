#include "qmvos/config.hpp"

#include <fstream>
#include <sstream>

#include "qmvos/error.hpp"

namespace qmvos {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw config_error(key + ": expected true or false, got '" + v + "'");
}

int64_t parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const int64_t n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw config_error(key + ": expected integer, got '" + v + "'");
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error(key + ": expected number, got '" + v + "'");
  }
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void RunConfig::validate() const {
  auto positive = [](int64_t v, const char* field) {
    if (v < 1) throw config_error(std::string(field) + " must be >= 1");
  };
  positive(ck, "ck");
  positive(cv, "cv");
  positive(cd, "cd");
  positive(c4, "c4");
  positive(c8, "c8");
  positive(c16, "c16");
  positive(mem_interval, "mem_interval");
  positive(seq_len, "seq_len");
  if (lr < 0.0) throw config_error("lr must be >= 0");
  if (weight_decay < 0.0) throw config_error("weight_decay must be >= 0");
  if (steps < 0) throw config_error("steps must be >= 0");
  if (qcim_cross_source == CrossSource::kF16 && c16 != cv) {
    throw config_error("qcim_cross_source = f16 requires c16 == cv");
  }
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw config_error("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key == "ck") cfg.ck = parse_int(val, key);
    else if (key == "cv") cfg.cv = parse_int(val, key);
    else if (key == "cd") cfg.cd = parse_int(val, key);
    else if (key == "c4") cfg.c4 = parse_int(val, key);
    else if (key == "c8") cfg.c8 = parse_int(val, key);
    else if (key == "c16") cfg.c16 = parse_int(val, key);
    else if (key == "mem_interval") cfg.mem_interval = parse_int(val, key);
    else if (key == "mem_similarity") {
      if (val == "dot") cfg.mem_similarity = MemSimilarity::kDot;
      else if (val == "l2") cfg.mem_similarity = MemSimilarity::kL2;
      else throw config_error("mem_similarity: expected dot or l2, got '" + val + "'");
    } else if (key == "sim_interaction") cfg.sim_interaction = parse_bool(val, key);
    else if (key == "qcim_cross_source") {
      if (val == "readout") cfg.qcim_cross_source = CrossSource::kReadout;
      else if (val == "f16") cfg.qcim_cross_source = CrossSource::kF16;
      else throw config_error("qcim_cross_source: expected readout or f16, got '" + val + "'");
    } else if (key == "query_propagation") cfg.query_propagation = parse_bool(val, key);
    else if (key == "qcim_attn_scale") cfg.qcim_attn_scale = parse_bool(val, key);
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_int(val, key));
    else if (key == "lr") cfg.lr = parse_double(val, key);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(val, key);
    else if (key == "steps") cfg.steps = parse_int(val, key);
    else if (key == "seq_len") cfg.seq_len = parse_int(val, key);
    else throw config_error("unknown key '" + key + "' at line " + std::to_string(lineno));
  }
  cfg.validate();
  return cfg;
}

std::string config_to_string(const RunConfig& cfg) {
  std::ostringstream os;
  os << "ck = " << cfg.ck << "\n";
  os << "cv = " << cfg.cv << "\n";
  os << "cd = " << cfg.cd << "\n";
  os << "c4 = " << cfg.c4 << "\n";
  os << "c8 = " << cfg.c8 << "\n";
  os << "c16 = " << cfg.c16 << "\n";
  os << "mem_interval = " << cfg.mem_interval << "\n";
  os << "mem_similarity = " << (cfg.mem_similarity == MemSimilarity::kDot ? "dot" : "l2") << "\n";
  os << "sim_interaction = " << (cfg.sim_interaction ? "true" : "false") << "\n";
  os << "qcim_cross_source = "
     << (cfg.qcim_cross_source == CrossSource::kReadout ? "readout" : "f16") << "\n";
  os << "query_propagation = " << (cfg.query_propagation ? "true" : "false") << "\n";
  os << "qcim_attn_scale = " << (cfg.qcim_attn_scale ? "true" : "false") << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "lr = " << fmt_double(cfg.lr) << "\n";
  os << "weight_decay = " << fmt_double(cfg.weight_decay) << "\n";
  os << "steps = " << cfg.steps << "\n";
  os << "seq_len = " << cfg.seq_len << "\n";
  return os.str();
}

RunConfig read_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open config file " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

void write_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open " + path + " for writing");
  os << config_to_string(cfg);
  if (!os) throw io_error("write failed for " + path);
}

}  // namespace qmvos
