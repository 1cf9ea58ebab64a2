#include "nvdd/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <vector>

#include "nvdd/io.hpp"

namespace nvdd::dsl {

using control::ControlSchedule;

namespace {

struct Token {
  std::string text;
  std::size_t column;  // 1-based over the whole input
};

struct Statement {
  Token kind;
  std::vector<Token> args;
};

std::vector<Statement> tokenize(const std::string& text) {
  std::vector<Statement> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(';', pos);
    if (end == std::string::npos) end = text.size();
    std::vector<Token> tokens;
    std::size_t i = pos;
    while (i < end) {
      while (i < end && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      std::size_t j = i;
      while (j < end && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j > i) tokens.push_back({text.substr(i, j - i), i + 1});
      i = j;
    }
    if (!tokens.empty()) {
      Statement st;
      st.kind = tokens.front();
      st.args.assign(tokens.begin() + 1, tokens.end());
      out.push_back(std::move(st));
    }
    pos = end + 1;
  }
  return out;
}

class Args {
 public:
  Args(const Statement& st) : kind_(st.kind) {
    for (const auto& tok : st.args) {
      const auto eq = tok.text.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ParseError("expected key=value, got '" + tok.text + "'",
                         tok.column);
      const std::string key = tok.text.substr(0, eq);
      if (values_.count(key))
        throw ParseError("duplicate key '" + key + "'", tok.column);
      values_[key] = {tok.text.substr(eq + 1), tok.column + eq + 1};
    }
  }

  double number(const std::string& key) {
    auto [raw, col] = take(key);
    const auto v = io::parse_double(raw);
    if (!v) throw ParseError("bad number for '" + key + "': '" + raw + "'", col);
    return *v;
  }
  long long integer(const std::string& key) {
    auto [raw, col] = take(key);
    const auto v = io::parse_int(raw);
    if (!v)
      throw ParseError("bad integer for '" + key + "': '" + raw + "'", col);
    return *v;
  }
  std::optional<double> opt_number(const std::string& key) {
    if (!values_.count(key)) return std::nullopt;
    return number(key);
  }
  std::optional<long long> opt_integer(const std::string& key) {
    if (!values_.count(key)) return std::nullopt;
    return integer(key);
  }
  std::optional<std::string> opt_string(const std::string& key) {
    if (!values_.count(key)) return std::nullopt;
    auto [raw, col] = take(key);
    (void)col;
    return raw;
  }

  void finish() const {
    if (values_.empty()) return;
    const auto& [key, entry] = *values_.begin();
    throw ParseError("unknown key '" + key + "' for '" + kind_.text + "'",
                     entry.second);
  }

 private:
  std::pair<std::string, std::size_t> take(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end())
      throw ParseError("missing key '" + key + "' for '" + kind_.text + "'",
                       kind_.column);
    auto out = it->second;
    values_.erase(it);
    return out;
  }

  Token kind_;
  std::map<std::string, std::pair<std::string, std::size_t>> values_;
};

ControlSchedule parse_preset(const Statement& st) {
  Args a(st);
  const std::string& kind = st.kind.text;
  ControlSchedule s;
  std::optional<long long> rand_seed;
  if (kind == "xy8" || kind == "cpmg" || kind == "axy8")
    rand_seed = a.opt_integer("rand");
  try {
    if (kind == "xy8") {
      const auto n = a.integer("n");
      const auto tau = a.number("tau");
      a.finish();
      s = control::make_xy8(static_cast<int>(n), tau);
    } else if (kind == "cpmg") {
      const auto n = a.integer("n");
      const auto tau = a.number("tau");
      a.finish();
      s = control::make_cpmg(static_cast<int>(n), tau);
    } else if (kind == "axy8") {
      const auto n = a.integer("n");
      const auto d1 = a.number("d1");
      const auto d2 = a.number("d2");
      const auto tb = a.number("T");
      a.finish();
      s = control::make_axy8(static_cast<int>(n), d1, d2, tb);
    } else if (kind == "ccd") {
      const auto w0 = a.number("w0");
      const auto o1 = a.number("W1");
      const auto o2 = a.number("W2");
      const auto phi = a.number("phi");
      const auto T = a.number("T");
      a.finish();
      s = control::make_ccd(w0, o1, o2, phi, T);
    } else if (kind == "mod") {
      const auto w0 = a.number("w0");
      const auto o1 = a.number("W1");
      const auto nu = a.number("nu");
      const auto T = a.number("T");
      const auto w = a.opt_number("w");
      a.finish();
      s = control::make_modulated_rabi(w0, o1, nu, w.value_or(0.0), T);
    } else if (kind == "hh") {
      const auto W = a.number("W");
      const auto phi = a.number("phi");
      const auto T = a.number("T");
      const auto w = a.opt_number("w");
      a.finish();
      s = control::make_continuous_drive(W, phi, T, w.value_or(0.0));
    } else if (kind == "sync") {
      const auto u = a.integer("u");
      const auto n = a.integer("n");
      const auto T = a.number("T");
      const auto w = a.opt_number("w");
      a.finish();
      s = control::make_sync_mw_rf(static_cast<int>(u), w.value_or(0.0),
                                   static_cast<int>(n), T);
    } else {
      throw ParseError("unknown statement '" + kind + "'", st.kind.column);
    }
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), st.kind.column);
  }
  if (rand_seed)
    s = control::randomize_phases(s, static_cast<std::uint64_t>(*rand_seed));
  return s;
}

bool is_primitive(const std::string& kind) {
  return kind == "pulse" || kind == "tone" || kind == "dur";
}

void parse_primitive(const Statement& st, ControlSchedule& s) {
  Args a(st);
  if (st.kind.text == "dur") {
    s.duration = a.number("T");
    a.finish();
    return;
  }
  if (st.kind.text == "pulse") {
    control::PulseEvent e;
    e.t_center = a.number("t");
    e.phase = a.number("phi");
    e.angle = a.number("a");
    if (const auto w = a.opt_number("width")) {
      e.width = *w;
      e.rabi = e.angle / e.width;
    }
    if (const auto u = a.opt_integer("u")) e.target = static_cast<int>(*u);
    if (const auto b = a.opt_integer("blk")) e.block = static_cast<int>(*b);
    a.finish();
    s.events.push_back(e);
    return;
  }
  control::DriveSegment seg;
  seg.t_start = a.number("t0");
  seg.t_end = a.number("t1");
  seg.amp = a.number("W");
  seg.phase = a.number("phi");
  seg.amp_mod_depth = a.opt_number("Wd").value_or(0.0);
  seg.amp_mod_freq = a.opt_number("Wf").value_or(0.0);
  seg.amp_mod_phase = a.opt_number("Wp").value_or(0.0);
  seg.envelope_freq = a.opt_number("ef").value_or(0.0);
  seg.envelope_phase = a.opt_number("ep").value_or(0.0);
  seg.carrier = a.opt_number("w").value_or(0.0);
  seg.tag = a.opt_string("tag").value_or("");
  a.finish();
  s.continuous.push_back(seg);
}

}  // namespace

ControlSchedule parse(const std::string& text) {
  const auto statements = tokenize(text);
  if (statements.empty()) throw ParseError("empty schedule text", 1);

  const bool primitive = is_primitive(statements.front().kind.text);
  ControlSchedule result;
  bool first = true;
  for (const auto& st : statements) {
    if (is_primitive(st.kind.text) != primitive)
      throw ParseError("cannot mix preset and primitive statements",
                       st.kind.column);
    if (primitive) {
      parse_primitive(st, result);
    } else {
      ControlSchedule s = parse_preset(st);
      result = first ? s : control::concat(result, s);
      first = false;
    }
  }
  if (primitive) {
    std::stable_sort(result.events.begin(), result.events.end(),
                     [](const auto& x, const auto& y) {
                       return x.t_center < y.t_center;
                     });
    if (result.duration == 0) {
      for (const auto& e : result.events)
        result.duration = std::max(result.duration, e.t_center + e.width / 2);
      for (const auto& seg : result.continuous)
        result.duration = std::max(result.duration, seg.t_end);
    }
  }
  try {
    result.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 1);
  }
  return result;
}

std::string serialize(const ControlSchedule& s) {
  if (!s.provenance.empty()) return s.provenance;
  std::string out = "dur T=" + io::format_double(s.duration);
  for (const auto& e : s.events) {
    out += "; pulse t=" + io::format_double(e.t_center) +
           " phi=" + io::format_double(e.phase) +
           " a=" + io::format_double(e.angle);
    if (e.width > 0) out += " width=" + io::format_double(e.width);
    if (e.target != control::PulseEvent::nv_target)
      out += " u=" + std::to_string(e.target);
    if (e.block != 0) out += " blk=" + std::to_string(e.block);
  }
  for (const auto& seg : s.continuous) {
    out += "; tone t0=" + io::format_double(seg.t_start) +
           " t1=" + io::format_double(seg.t_end) +
           " W=" + io::format_double(seg.amp) +
           " phi=" + io::format_double(seg.phase);
    if (seg.amp_mod_depth != 0 || seg.amp_mod_freq != 0 ||
        seg.amp_mod_phase != 0)
      out += " Wd=" + io::format_double(seg.amp_mod_depth) +
             " Wf=" + io::format_double(seg.amp_mod_freq) +
             " Wp=" + io::format_double(seg.amp_mod_phase);
    if (seg.envelope_freq != 0 || seg.envelope_phase != 0)
      out += " ef=" + io::format_double(seg.envelope_freq) +
             " ep=" + io::format_double(seg.envelope_phase);
    if (seg.carrier != 0) out += " w=" + io::format_double(seg.carrier);
    if (!seg.tag.empty()) out += " tag=" + seg.tag;
  }
  return out;
}

}  // namespace nvdd::dsl
