#include "calport/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "calport/approachability.hpp"
#include "calport/error.hpp"
#include "calport/forecaster.hpp"

namespace calport {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Config parsing

[[noreturn]] void ConfigFail(const std::string& where, const std::string& what) {
  Fail(ErrorCode::kConfigError, where.empty() ? what : where + ": " + what);
}

void CheckKeys(const json& obj, const std::string& where,
               std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) ConfigFail(where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) ConfigFail(where, "unknown key '" + key + "'");
  }
}

double GetNumber(const json& v, const std::string& where) {
  if (!v.is_number()) ConfigFail(where, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) ConfigFail(where, "expected a finite number");
  return d;
}

double GetPositive(const json& v, const std::string& where) {
  const double d = GetNumber(v, where);
  if (!(d > 0.0)) ConfigFail(where, "must be > 0");
  return d;
}

std::uint64_t GetCount(const json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    ConfigFail(where, "expected a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

std::string GetString(const json& v, const std::string& where) {
  if (!v.is_string()) ConfigFail(where, "expected a string");
  return v.get<std::string>();
}

bool GetBool(const json& v, const std::string& where) {
  if (!v.is_boolean()) ConfigFail(where, "expected true or false");
  return v.get<bool>();
}

std::vector<double> GetVector(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) ConfigFail(where, "expected a nonempty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(GetNumber(v[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

DiscreteReturnDist GetAtoms(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) ConfigFail(where, "expected a nonempty array of atoms");
  DiscreteReturnDist dist;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    CheckKeys(v[i], w, {"x", "p"});
    if (!v[i].contains("x") || !v[i].contains("p")) ConfigFail(w, "atom needs 'x' and 'p'");
    ReturnAtom a;
    a.x = GetVector(v[i]["x"], w + ".x");
    a.p = GetNumber(v[i]["p"], w + ".p");
    dist.atoms.push_back(std::move(a));
  }
  return dist;
}

const std::set<std::string>& MarketTypes() {
  static const std::set<std::string> types = {"iid", "regime", "adversary",
                                              "calibration_adversary", "csv"};
  return types;
}

void ParseMarket(const json& m, MarketConfig& out) {
  CheckKeys(m, "market",
            {"type", "k", "lambda1", "lambda2", "signal_lo", "signal_hi", "atoms", "signal",
             "regimes", "regime_mode", "csv_path", "signal_column"});
  if (m.contains("type")) out.type = GetString(m["type"], "market.type");
  if (!MarketTypes().count(out.type)) ConfigFail("market.type", "unknown market '" + out.type + "'");
  if (m.contains("k")) {
    const auto k = GetCount(m["k"], "market.k");
    if (k < 1 || k > 64) ConfigFail("market.k", "must be in [1, 64]");
    out.spec.k = static_cast<int>(k);
  }
  if (m.contains("lambda1")) out.spec.lambda1 = GetNumber(m["lambda1"], "market.lambda1");
  if (m.contains("lambda2")) out.spec.lambda2 = GetNumber(m["lambda2"], "market.lambda2");
  if (m.contains("signal_lo")) out.spec.signal_lo = GetNumber(m["signal_lo"], "market.signal_lo");
  if (m.contains("signal_hi")) out.spec.signal_hi = GetNumber(m["signal_hi"], "market.signal_hi");
  if (m.contains("atoms")) out.atoms = GetAtoms(m["atoms"], "market.atoms");
  if (m.contains("signal")) out.signal = GetNumber(m["signal"], "market.signal");
  if (m.contains("regimes")) {
    const json& r = m["regimes"];
    if (!r.is_array() || r.empty()) ConfigFail("market.regimes", "expected a nonempty array");
    out.regimes.clear();
    for (std::size_t i = 0; i < r.size(); ++i) {
      out.regimes.push_back(GetAtoms(r[i], "market.regimes[" + std::to_string(i) + "]"));
    }
  }
  if (m.contains("regime_mode")) {
    const std::string mode = GetString(m["regime_mode"], "market.regime_mode");
    if (mode == "cycle") {
      out.regime_mode = RegimeMarket::Mode::kCycle;
    } else if (mode == "random") {
      out.regime_mode = RegimeMarket::Mode::kRandom;
    } else {
      ConfigFail("market.regime_mode", "expected 'cycle' or 'random'");
    }
  }
  if (m.contains("csv_path")) out.csv_path = GetString(m["csv_path"], "market.csv_path");
  if (m.contains("signal_column")) {
    out.signal_column = GetString(m["signal_column"], "market.signal_column");
  }
}

void ParseSchedule(const json& s, ScheduleConfig& out) {
  CheckKeys(s, "schedule", {"stages", "span"});
  if (s.contains("span")) out.span = GetPositive(s["span"], "schedule.span");
  if (s.contains("stages")) {
    const json& st = s["stages"];
    if (!st.is_array() || st.empty()) ConfigFail("schedule.stages", "expected a nonempty array");
    for (std::size_t i = 0; i < st.size(); ++i) {
      const std::string w = "schedule.stages[" + std::to_string(i) + "]";
      CheckKeys(st[i], w, {"t_start", "K", "mu", "epsilon"});
      RefinementStage stage;
      if (st[i].contains("t_start")) stage.t_start = GetCount(st[i]["t_start"], w + ".t_start");
      if (st[i].contains("K")) {
        const auto K = GetCount(st[i]["K"], w + ".K");
        if (K < 1 || K > 1'000'000) ConfigFail(w + ".K", "must be in [1, 10^6]");
        stage.params.K = static_cast<int>(K);
      }
      if (st[i].contains("mu")) stage.params.mu = GetPositive(st[i]["mu"], w + ".mu");
      if (st[i].contains("epsilon")) {
        stage.params.epsilon = GetPositive(st[i]["epsilon"], w + ".epsilon");
      }
      out.stages.push_back(stage);
    }
  }
}

void ParseComparators(const json& c, ComparatorConfig& out) {
  CheckKeys(c, "comparators", {"cover", "cover_quad_points", "piecewise_bins", "stationary"});
  if (c.contains("cover")) out.cover = GetBool(c["cover"], "comparators.cover");
  if (c.contains("cover_quad_points")) {
    const auto q = GetCount(c["cover_quad_points"], "comparators.cover_quad_points");
    if (q < 1 || q > 10'000'000) {
      ConfigFail("comparators.cover_quad_points", "must be in [1, 10^7]");
    }
    out.cover_quad_points = static_cast<int>(q);
  }
  if (c.contains("piecewise_bins")) {
    out.piecewise_bins = GetCount(c["piecewise_bins"], "comparators.piecewise_bins");
  }
  if (c.contains("stationary")) {
    const json& t = c["stationary"];
    if (!t.is_array()) ConfigFail("comparators.stationary", "expected an array of portfolios");
    for (std::size_t i = 0; i < t.size(); ++i) {
      out.stationary_table.push_back(
          Portfolio{GetVector(t[i], "comparators.stationary[" + std::to_string(i) + "]")});
    }
  }
}

ordered_json AtomsToJson(const DiscreteReturnDist& d) {
  ordered_json a = ordered_json::array();
  for (const auto& atom : d.atoms) a.push_back({{"x", atom.x}, {"p", atom.p}});
  return a;
}

DiscreteReturnDist TwoPointDist(const MarketSpec& spec, double p_high) {
  const double rest = std::clamp(1.0, spec.lambda1, spec.lambda2);
  ReturnVector hi(spec.k, rest);
  ReturnVector lo(spec.k, rest);
  hi[0] = spec.lambda2;
  lo[0] = spec.lambda1;
  return DiscreteReturnDist{{{hi, p_high}, {lo, 1.0 - p_high}}};
}

}  // namespace

ExperimentConfig ParseConfig(const json& doc, const fs::path& base_dir) {
  CheckKeys(doc, "",
            {"market", "rounds", "seeds", "schedule", "forecast_cap", "return_grid",
             "comparators", "tolerances", "sample_every", "output"});
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  if (doc.contains("market")) ParseMarket(doc["market"], cfg.market);
  if (doc.contains("rounds")) cfg.rounds = GetCount(doc["rounds"], "rounds");
  if (doc.contains("seeds")) {
    const json& s = doc["seeds"];
    if (!s.is_array() || s.empty()) ConfigFail("seeds", "expected a nonempty array of integers");
    cfg.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      cfg.seeds.push_back(GetCount(s[i], "seeds[" + std::to_string(i) + "]"));
    }
  }
  if (doc.contains("schedule")) ParseSchedule(doc["schedule"], cfg.schedule);
  if (doc.contains("forecast_cap")) {
    cfg.forecast_cap = GetCount(doc["forecast_cap"], "forecast_cap");
    if (cfg.forecast_cap < 1) ConfigFail("forecast_cap", "must be >= 1");
  }
  if (doc.contains("return_grid")) {
    const json& g = doc["return_grid"];
    if (!g.is_array() || g.empty()) ConfigFail("return_grid", "expected a nonempty array");
    for (std::size_t i = 0; i < g.size(); ++i) {
      cfg.return_grid.push_back(GetVector(g[i], "return_grid[" + std::to_string(i) + "]"));
    }
  }
  if (doc.contains("comparators")) ParseComparators(doc["comparators"], cfg.comparators);
  if (doc.contains("tolerances")) {
    const json& t = doc["tolerances"];
    CheckKeys(t, "tolerances", {"game", "kelly"});
    if (t.contains("game")) cfg.game_tol = GetPositive(t["game"], "tolerances.game");
    if (t.contains("kelly")) cfg.kelly_tol = GetPositive(t["kelly"], "tolerances.kelly");
  }
  if (doc.contains("sample_every")) {
    cfg.sample_every = GetCount(doc["sample_every"], "sample_every");
    if (cfg.sample_every < 1) ConfigFail("sample_every", "must be >= 1");
  }
  if (doc.contains("output")) {
    const json& o = doc["output"];
    CheckKeys(o, "output", {"dir", "emit_plot_data"});
    if (o.contains("dir")) cfg.out_dir = GetString(o["dir"], "output.dir");
    if (o.contains("emit_plot_data")) {
      cfg.emit_plot_data = GetBool(o["emit_plot_data"], "output.emit_plot_data");
    }
  }
  return cfg;
}

ExperimentConfig LoadConfig(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kConfigError, "cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    Fail(ErrorCode::kConfigError,
         "config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return ParseConfig(doc, path.parent_path());
}

void FinalizeConfig(ExperimentConfig& cfg) {
  MarketConfig& m = cfg.market;
  try {
    m.spec.Validate();
  } catch (const Error& e) {
    ConfigFail("market", e.what());
  }
  if (!MarketTypes().count(m.type)) ConfigFail("market.type", "unknown market '" + m.type + "'");
  if (m.type == "iid" && m.atoms.atoms.empty()) m.atoms = TwoPointDist(m.spec, 0.5);
  if (m.type == "regime" && m.regimes.empty()) {
    m.regimes = {TwoPointDist(m.spec, 0.8), TwoPointDist(m.spec, 0.2)};
  }
  if (m.type == "csv" && m.csv_path.empty()) {
    ConfigFail("market.csv_path", "required for the csv market");
  }
  if (m.type == "adversary" && m.spec.k != 2) ConfigFail("market.k", "adversary needs k = 2");
  for (const auto& x : cfg.return_grid) {
    if (static_cast<int>(x.size()) != m.spec.k) {
      ConfigFail("return_grid", "points must have k coordinates");
    }
  }
  for (const auto& b : cfg.comparators.stationary_table) {
    if (static_cast<int>(b.size()) != m.spec.k) {
      ConfigFail("comparators.stationary", "portfolios must have k weights");
    }
    try {
      b.Validate();
    } catch (const Error& e) {
      ConfigFail("comparators.stationary", e.what());
    }
  }
}

ordered_json ConfigToJson(const ExperimentConfig& cfg) {
  const MarketConfig& m = cfg.market;
  ordered_json market;
  market["type"] = m.type;
  market["k"] = m.spec.k;
  market["lambda1"] = m.spec.lambda1;
  market["lambda2"] = m.spec.lambda2;
  market["signal_lo"] = m.spec.signal_lo;
  market["signal_hi"] = m.spec.signal_hi;
  if (m.type == "iid") market["atoms"] = AtomsToJson(m.atoms);
  if ((m.type == "iid" || m.type == "calibration_adversary") && m.signal) {
    market["signal"] = *m.signal;
  }
  if (m.type == "regime") {
    market["regimes"] = ordered_json::array();
    for (const auto& r : m.regimes) market["regimes"].push_back(AtomsToJson(r));
    market["regime_mode"] = m.regime_mode == RegimeMarket::Mode::kCycle ? "cycle" : "random";
  }
  if (m.type == "csv") {
    market["csv_path"] = m.csv_path;
    market["signal_column"] = m.signal_column;
  }

  ordered_json out;
  out["market"] = market;
  out["rounds"] = cfg.rounds ? ordered_json(*cfg.rounds) : ordered_json(nullptr);
  out["seeds"] = cfg.seeds;
  ordered_json sched;
  if (cfg.schedule.stages.empty()) {
    sched["mode"] = "default";
    sched["span"] = cfg.schedule.span > 0.0 ? cfg.schedule.span
                                            : m.spec.lambda2 - m.spec.lambda1;
  } else {
    sched["mode"] = "explicit";
    sched["stages"] = ordered_json::array();
    for (const auto& s : cfg.schedule.stages) {
      sched["stages"].push_back({{"t_start", s.t_start},
                                 {"K", s.params.K},
                                 {"mu", s.params.mu},
                                 {"epsilon", s.params.epsilon}});
    }
  }
  out["schedule"] = sched;
  out["forecast_cap"] = cfg.forecast_cap;
  out["return_grid"] = cfg.return_grid;
  ordered_json comp;
  comp["cover"] = cfg.comparators.cover;
  comp["cover_quad_points"] = cfg.comparators.cover_quad_points;
  comp["piecewise_bins"] = cfg.comparators.piecewise_bins;
  comp["stationary"] = ordered_json::array();
  for (const auto& b : cfg.comparators.stationary_table) comp["stationary"].push_back(b.weights);
  out["comparators"] = comp;
  out["tolerances"] = {{"game", cfg.game_tol}, {"kelly", cfg.kelly_tol}};
  out["sample_every"] = cfg.sample_every;
  return out;
}

// ---------------------------------------------------------------------------
// CSV market

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string_view rest(line);
  for (;;) {
    const auto pos = rest.find(',');
    out.emplace_back(Trim(rest.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  return out;
}

bool ParseDouble(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

std::vector<MarketRow> LoadMarketCsv(const fs::path& path, const MarketSpec& spec,
                                     const std::string& signal_column) {
  spec.Validate();
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIoError, "cannot open market file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) Fail(ErrorCode::kParseError, "market file is empty");
  const std::vector<std::string> header = SplitCsv(line);
  std::optional<std::size_t> signal_col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].empty()) {
      Fail(ErrorCode::kParseError, "header column " + std::to_string(c + 1) + " is empty");
    }
    if (header[c] == signal_column) {
      if (signal_col) Fail(ErrorCode::kParseError, "signal column appears twice");
      signal_col = c;
    }
  }
  const std::size_t assets = header.size() - (signal_col ? 1 : 0);
  if (assets != static_cast<std::size_t>(spec.k)) {
    std::ostringstream msg;
    msg << "header names " << assets << " asset columns, expected k = " << spec.k;
    Fail(ErrorCode::kParseError, msg.str());
  }

  std::vector<MarketRow> rows;
  std::vector<std::size_t> bad_rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (Trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = SplitCsv(line);
    if (cells.size() != header.size()) {
      std::ostringstream msg;
      msg << "row " << row << ": expected " << header.size() << " columns, found "
          << cells.size();
      Fail(ErrorCode::kParseError, msg.str());
    }
    MarketRow r;
    bool in_range = true;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!ParseDouble(cells[c], v)) {
        std::ostringstream msg;
        msg << "row " << row << ", column " << (c + 1) << " ('" << header[c]
            << "'): cannot parse '" << cells[c] << "' as a number";
        Fail(ErrorCode::kParseError, msg.str());
      }
      if (signal_col && c == *signal_col) {
        r.signal = v;
      } else {
        in_range = in_range && v >= spec.lambda1 && v <= spec.lambda2;
        r.x.push_back(v);
      }
    }
    if (!in_range) bad_rows.push_back(row);
    rows.push_back(std::move(r));
  }
  if (!bad_rows.empty()) {
    std::ostringstream msg;
    msg << "price relatives outside [" << spec.lambda1 << ", " << spec.lambda2 << "] in row";
    msg << (bad_rows.size() > 1 ? "s " : " ");
    for (std::size_t i = 0; i < bad_rows.size(); ++i) msg << (i ? ", " : "") << bad_rows[i];
    Fail(ErrorCode::kRangeError, msg.str());
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Running

std::unique_ptr<MarketModel> MakeMarket(const ExperimentConfig& cfg) {
  const MarketConfig& m = cfg.market;
  if (m.type == "iid") return std::make_unique<IidMarket>(m.spec, m.atoms, m.signal);
  if (m.type == "regime") {
    return std::make_unique<RegimeMarket>(m.spec, m.regimes, m.regime_mode);
  }
  if (m.type == "adversary") return std::make_unique<DiscontinuousAdversary>(m.spec);
  if (m.type == "calibration_adversary") {
    return std::make_unique<CalibrationAdversary>(m.spec, m.signal);
  }
  if (m.type == "csv") {
    fs::path p(m.csv_path);
    if (p.is_relative() && !cfg.base_dir.empty()) p = cfg.base_dir / p;
    return std::make_unique<ReplayMarket>(m.spec, LoadMarketCsv(p, m.spec, m.signal_column));
  }
  ConfigFail("market.type", "unknown market '" + m.type + "'");
}

std::uint64_t ResolveRounds(const ExperimentConfig& cfg, const MarketModel& market) {
  if (cfg.rounds) return *cfg.rounds;
  if (market.length()) return *market.length();
  ConfigFail("rounds", "required unless the market is replayed from a file");
}

RefinementSchedule MakeSchedule(const ExperimentConfig& cfg, std::uint64_t rounds) {
  RefinementSchedule s;
  if (cfg.schedule.stages.empty()) {
    const double span = cfg.schedule.span > 0.0
                            ? cfg.schedule.span
                            : cfg.market.spec.lambda2 - cfg.market.spec.lambda1;
    s = RefinementScheduleDefault(std::max<std::uint64_t>(rounds, 1), cfg.market.spec.k,
                                  cfg.forecast_cap, span);
  } else {
    s.stages = cfg.schedule.stages;
    for (auto& st : s.stages) st.params.max_forecast_points = cfg.forecast_cap;
  }
  s.Validate();
  // Fail early if any stage exceeds the cap.
  for (const auto& st : s.stages) (void)BuildGrids(cfg.market.spec, st.params, cfg.return_grid);
  return s;
}

EpisodeConfig MakeEpisodeConfig(const ExperimentConfig& cfg, std::uint64_t rounds,
                                std::uint64_t seed) {
  EpisodeConfig e;
  e.schedule = MakeSchedule(cfg, rounds);
  e.rounds = rounds;
  e.seed = seed;
  e.comparators = cfg.comparators;
  e.return_grid_points = cfg.return_grid;
  e.game_tol = cfg.game_tol;
  e.kelly_tol = cfg.kelly_tol;
  e.sample_every = cfg.sample_every;
  return e;
}

std::vector<Trajectory> RunExperiment(const ExperimentConfig& cfg) {
  const std::unique_ptr<MarketModel> proto = MakeMarket(cfg);
  const std::uint64_t rounds = ResolveRounds(cfg, *proto);
  std::vector<Trajectory> out;
  for (std::uint64_t seed : cfg.seeds) {
    const EpisodeConfig e = MakeEpisodeConfig(cfg, rounds, seed);
    auto market = proto->Clone();
    out.push_back(RunEpisode(cfg.market.spec, e, *market));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void WriteFile(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIoError, "cannot write '" + path.string() + "'");
  out << content;
  out.close();
  if (!out) Fail(ErrorCode::kIoError, "failed writing '" + path.string() + "'");
}

double PerRound(double total, std::uint64_t T) { return T == 0 ? 0.0 : total / double(T); }

ordered_json WealthObject(const Trajectory& tr, bool per_round) {
  const auto val = [&](double v) { return per_round ? PerRound(v, tr.T()) : v; };
  ordered_json w;
  w["investor"] = val(tr.log2_investor);
  for (std::size_t c = 0; c < kComparatorCount; ++c) {
    if (c == kCover && !tr.has_cover) {
      w[kComparatorNames[c]] = nullptr;
    } else {
      w[kComparatorNames[c]] = val(tr.log2_comparators[c]);
    }
  }
  return w;
}

struct Gaps {
  double per_round;      // (stationary - investor) / T
  double vs_piecewise;   // (investor - piecewise) / T
  double vs_bcrp;        // (investor - bcrp) / T
};

Gaps GapsOf(const Trajectory& tr) {
  return {PerRound(tr.log2_comparators[kStationary] - tr.log2_investor, tr.T()),
          PerRound(tr.log2_investor - tr.log2_comparators[kPiecewise], tr.T()),
          PerRound(tr.log2_investor - tr.log2_comparators[kBcrp], tr.T())};
}

ordered_json StageJson(const StageInfo& s) {
  ordered_json j;
  j["t_start"] = s.t_start;
  j["K"] = s.K;
  j["M"] = s.M;
  j["N"] = s.N;
  j["D"] = s.D;
  j["epsilon"] = s.epsilon;
  j["mu"] = s.mu;
  j["nu"] = s.nu;
  j["per_axis"] = s.per_axis;
  return j;
}

ordered_json MinMean(const std::vector<double>& v) {
  if (v.empty()) return {{"mean", nullptr}, {"min", nullptr}, {"max", nullptr}};
  double sum = 0.0;
  for (double x : v) sum += x;
  return {{"mean", sum / double(v.size())},
          {"min", *std::min_element(v.begin(), v.end())},
          {"max", *std::max_element(v.begin(), v.end())}};
}

ordered_json Aggregates(const ordered_json& seeds) {
  ordered_json agg;
  const std::vector<std::string> names = {"investor", "bcrp", "cover", "piecewise",
                                          "stationary"};
  ordered_json fw, gr;
  for (const auto& n : names) {
    std::vector<double> a, b;
    for (const auto& s : seeds) {
      if (s["final_log2_wealth"][n].is_null()) continue;
      a.push_back(s["final_log2_wealth"][n].get<double>());
      b.push_back(s["growth_rate_per_round"][n].get<double>());
    }
    fw[n] = MinMean(a);
    gr[n] = MinMean(b);
  }
  agg["seed_count"] = seeds.size();
  agg["final_log2_wealth"] = fw;
  agg["growth_rate_per_round"] = gr;
  for (const char* key : {"gap_per_round", "gap_vs_piecewise", "gap_vs_bcrp"}) {
    std::vector<double> v;
    for (const auto& s : seeds) v.push_back(s[key].get<double>());
    const ordered_json mm = MinMean(v);
    agg[std::string("mean_") + key] = mm["mean"];
    agg[std::string("min_") + key] = mm["min"];
  }
  std::vector<double> cal, dist;
  for (const auto& s : seeds) {
    if (!s["calibration_samples"].empty()) {
      cal.push_back(s["calibration_samples"].back()["score"].get<double>());
    }
    if (!s["approach_distance_samples"].empty()) {
      dist.push_back(s["approach_distance_samples"].back()["dist_l2"].get<double>());
    }
  }
  agg["max_final_calibration_score"] = MinMean(cal)["max"];
  agg["max_final_dist_l2"] = MinMean(dist)["max"];
  return agg;
}

}  // namespace

ordered_json BuildReport(const std::vector<Trajectory>& trajectories,
                         const ExperimentConfig& config) {
  if (trajectories.empty()) Fail(ErrorCode::kInvalidParams, "no trajectories to report");
  ordered_json r;
  r["schema"] = kReportSchemaId;
  r["config"] = ConfigToJson(config);
  r["market"] = trajectories.front().market;
  r["rounds"] = trajectories.front().T();
  r["stages"] = ordered_json::array();
  for (const auto& s : trajectories.front().stages) r["stages"].push_back(StageJson(s));

  ordered_json seeds = ordered_json::array();
  for (const auto& tr : trajectories) {
    ordered_json s;
    s["seed"] = tr.seed;
    s["rounds"] = tr.T();
    s["final_log2_wealth"] = WealthObject(tr, false);
    s["growth_rate_per_round"] = WealthObject(tr, true);
    const Gaps g = GapsOf(tr);
    s["gap_per_round"] = g.per_round;
    s["gap_vs_piecewise"] = g.vs_piecewise;
    s["gap_vs_bcrp"] = g.vs_bcrp;
    s["bcrp_portfolio"] = tr.bcrp.weights;
    s["piecewise_portfolios"] = ordered_json::array();
    for (const auto& b : tr.piecewise) s["piecewise_portfolios"].push_back(b.weights);
    s["calibration_samples"] = ordered_json::array();
    s["approach_distance_samples"] = ordered_json::array();
    for (const auto& d : tr.samples) {
      s["calibration_samples"].push_back(
          {{"t", d.t}, {"stage", d.stage}, {"score", d.calibration_score}});
      s["approach_distance_samples"].push_back(
          {{"t", d.t}, {"stage", d.stage}, {"dist_l2", d.dist_l2}, {"dist_l1", d.dist_l1}});
    }
    seeds.push_back(std::move(s));
  }
  r["aggregates"] = Aggregates(seeds);
  r["seeds"] = std::move(seeds);
  // Keep "aggregates" last for readability.
  ordered_json out;
  for (const char* key : {"schema", "config", "market", "rounds", "stages", "seeds",
                          "aggregates"}) {
    out[key] = r[key];
  }
  return out;
}

void WriteTrajectoryCsv(const std::vector<Trajectory>& trajectories, const fs::path& path) {
  std::ostringstream out;
  const std::size_t k =
      trajectories.empty() ? 0 : static_cast<std::size_t>(trajectories.front().spec.k);
  out << "seed,t,stage,signal,signal_bin";
  for (std::size_t c = 1; c <= k; ++c) out << ",x_" << c;
  out << ",return_bin,forecast_index,announced_support";
  for (std::size_t c = 1; c <= k; ++c) out << ",b_investor_" << c;
  for (const char* name : kComparatorNames) {
    for (std::size_t c = 1; c <= k; ++c) out << ",b_" << name << "_" << c;
  }
  out << ",log2_investor";
  for (const char* name : kComparatorNames) out << ",log2_" << name;
  out << "\n";

  for (const auto& tr : trajectories) {
    for (const auto& r : tr.rounds) {
      out << tr.seed << ',' << r.t << ',' << r.stage << ',' << Num(r.signal) << ','
          << r.signal_bin;
      for (double v : r.x) out << ',' << Num(v);
      out << ',' << r.return_bin << ',' << r.forecast_index << ',' << r.announced_support;
      for (double v : r.investor.weights) out << ',' << Num(v);
      for (std::size_t c = 0; c < kComparatorCount; ++c) {
        const bool absent = c == kCover && !tr.has_cover;
        for (std::size_t i = 0; i < k; ++i) {
          out << ',';
          if (!absent) out << Num(r.comparators[c].weights[i]);
        }
      }
      out << ',' << Num(r.log2_investor);
      for (std::size_t c = 0; c < kComparatorCount; ++c) {
        out << ',';
        if (!(c == kCover && !tr.has_cover)) out << Num(r.log2_comparators[c]);
      }
      out << '\n';
    }
  }
  WriteFile(path, out.str());
}

void WritePlotData(const std::vector<Trajectory>& trajectories, const fs::path& dir) {
  std::ostringstream w;
  w << "seed,t,investor";
  for (const char* name : kComparatorNames) w << ',' << name;
  w << '\n';
  for (const auto& tr : trajectories) {
    double inv = 0.0;
    std::vector<double> comp(kComparatorCount, 0.0);
    for (const auto& r : tr.rounds) {
      inv += r.log2_investor;
      w << tr.seed << ',' << r.t << ',' << Num(inv);
      for (std::size_t c = 0; c < kComparatorCount; ++c) {
        comp[c] += r.log2_comparators[c];
        w << ',';
        if (!(c == kCover && !tr.has_cover)) w << Num(comp[c]);
      }
      w << '\n';
    }
  }
  WriteFile(dir / "plot_wealth.csv", w.str());

  std::ostringstream d;
  d << "seed,t,stage,calibration_score,mean_l1,dist_l2,dist_l1\n";
  for (const auto& tr : trajectories) {
    for (const auto& s : tr.samples) {
      d << tr.seed << ',' << s.t << ',' << s.stage << ',' << Num(s.calibration_score) << ','
        << Num(s.mean_l1) << ',' << Num(s.dist_l2) << ',' << Num(s.dist_l1) << '\n';
    }
  }
  WriteFile(dir / "plot_diagnostics.csv", d.str());
}

void WriteReport(const std::vector<Trajectory>& trajectories, const ExperimentConfig& config,
                 const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) Fail(ErrorCode::kIoError, "cannot create '" + dir.string() + "': " + ec.message());
  WriteFile(dir / "report.json", BuildReport(trajectories, config).dump(2) + "\n");
  WriteTrajectoryCsv(trajectories, dir / "trajectory.csv");
  if (config.emit_plot_data) WritePlotData(trajectories, dir);
}

// ---------------------------------------------------------------------------
// Verification

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t Col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) Fail(ErrorCode::kParseError, "trajectory.csv lacks column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

CsvTable ReadCsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (std::getline(in, line)) t.header = SplitCsv(line);
  while (std::getline(in, line)) {
    if (Trim(line).empty()) continue;
    t.rows.push_back(SplitCsv(line));
    if (t.rows.back().size() != t.header.size()) {
      Fail(ErrorCode::kParseError,
           "trajectory.csv row " + std::to_string(t.rows.size()) + " has the wrong width");
    }
  }
  return t;
}

double Cell(const std::string& s) {
  double v = 0.0;
  if (!ParseDouble(s, v)) Fail(ErrorCode::kParseError, "bad number '" + s + "'");
  return v;
}

std::uint64_t CellInt(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    Fail(ErrorCode::kParseError, "bad integer '" + s + "'");
  }
  return v;
}

class Checker {
 public:
  explicit Checker(double tol) : tol_(tol) {}

  void Near(const std::string& what, double reported, double recomputed) {
    ++result.checks;
    const double scale = std::max(1.0, std::abs(recomputed));
    if (!(std::abs(reported - recomputed) <= tol_ * scale)) {
      std::ostringstream msg;
      msg << what << ": reported " << Num(reported) << ", recomputed " << Num(recomputed);
      result.failures.push_back(msg.str());
    }
  }
  void True(const std::string& what, bool ok) {
    ++result.checks;
    if (!ok) result.failures.push_back(what);
  }

  VerifyResult result;

 private:
  double tol_;
};

}  // namespace

VerifyResult VerifyOutputs(const fs::path& dir, double tol) {
  std::ifstream in(dir / "report.json");
  if (!in) Fail(ErrorCode::kIoError, "cannot open '" + (dir / "report.json").string() + "'");
  json report;
  try {
    report = json::parse(in);
  } catch (const json::parse_error& e) {
    Fail(ErrorCode::kParseError, std::string("report.json: ") + e.what());
  }
  const CsvTable table = ReadCsv(dir / "trajectory.csv");
  Checker chk(tol);

  // Rebuild the grids of every stage from the config echo.
  const json& cfg = report.at("config");
  const json& mk = cfg.at("market");
  MarketSpec spec;
  spec.k = mk.at("k").get<int>();
  spec.lambda1 = mk.at("lambda1").get<double>();
  spec.lambda2 = mk.at("lambda2").get<double>();
  spec.signal_lo = mk.at("signal_lo").get<double>();
  spec.signal_hi = mk.at("signal_hi").get<double>();
  std::vector<ReturnVector> explicit_returns =
      cfg.at("return_grid").get<std::vector<ReturnVector>>();
  const std::uint64_t cap = cfg.at("forecast_cap").get<std::uint64_t>();
  std::vector<std::shared_ptr<const GridSet>> grids;
  for (const auto& s : report.at("stages")) {
    GridStageParams p;
    p.K = s.at("K").get<int>();
    p.mu = s.at("mu").get<double>();
    p.epsilon = s.at("epsilon").get<double>();
    p.max_forecast_points = cap;
    grids.push_back(std::make_shared<const GridSet>(BuildGrids(spec, p, explicit_returns)));
    chk.True("stage grid size N matches", grids.back()->N() == s.at("N").get<std::size_t>());
    chk.True("stage grid size M matches", grids.back()->M() == s.at("M").get<std::size_t>());
  }

  const std::size_t k = static_cast<std::size_t>(spec.k);
  const std::size_t c_seed = table.Col("seed"), c_t = table.Col("t"),
                    c_stage = table.Col("stage"), c_sbin = table.Col("signal_bin"),
                    c_rbin = table.Col("return_bin"), c_fi = table.Col("forecast_index"),
                    c_x = table.Col("x_1"), c_inv = table.Col("log2_investor"),
                    c_binv = table.Col("b_investor_1");
  std::vector<std::size_t> c_b(kComparatorCount), c_log(kComparatorCount);
  for (std::size_t c = 0; c < kComparatorCount; ++c) {
    c_b[c] = table.Col(std::string("b_") + kComparatorNames[c] + "_1");
    c_log[c] = table.Col(std::string("log2_") + kComparatorNames[c]);
  }

  const auto dot = [&](const std::vector<std::string>& row, std::size_t b0) {
    std::vector<double> w(k), x(k);
    for (std::size_t i = 0; i < k; ++i) {
      w[i] = Cell(row[b0 + i]);
      x[i] = Cell(row[c_x + i]);
    }
    return Portfolio{w}.Dot(x);
  };

  std::size_t cursor = 0;
  std::vector<double> gap_pr, gap_pw, gap_bc;
  for (const auto& seed : report.at("seeds")) {
    const std::uint64_t sd = seed.at("seed").get<std::uint64_t>();
    const std::uint64_t T = seed.at("rounds").get<std::uint64_t>();
    const std::string tag = "seed " + std::to_string(sd);
    double inv = 0.0;
    std::vector<double> comp(kComparatorCount, 0.0);
    bool has_cover = !seed.at("final_log2_wealth").at("cover").is_null();

    auto cal = seed.at("calibration_samples").begin();
    auto dst = seed.at("approach_distance_samples").begin();
    std::optional<CalibratedForecaster> fc;
    std::size_t stage = std::numeric_limits<std::size_t>::max();
    MeanPayoff mean;
    CalibrationLedger ledger;

    for (std::uint64_t t = 1; t <= T; ++t, ++cursor) {
      if (cursor >= table.rows.size()) {
        chk.True(tag + ": trajectory.csv ends early", false);
        return chk.result;
      }
      const auto& row = table.rows[cursor];
      if (CellInt(row[c_seed]) != sd || CellInt(row[c_t]) != t) {
        chk.True(tag + ": trajectory.csv row order mismatch at t=" + std::to_string(t), false);
        return chk.result;
      }
      const std::size_t st = CellInt(row[c_stage]);
      if (st >= grids.size()) {
        chk.True(tag + ": stage index out of range", false);
        return chk.result;
      }
      if (st != stage) {
        stage = st;
        mean = MeanPayoff(grids[st]->M());
        ledger = CalibrationLedger{};
      }
      const std::size_t fi = CellInt(row[c_fi]);
      const std::size_t sb = CellInt(row[c_sbin]);
      const std::size_t rb = CellInt(row[c_rbin]);
      mean.Add(PayoffVector(fi, sb, rb, *grids[st]));
      ledger.Record(fi, rb, sb);

      const double li = Cell(row[c_inv]);
      chk.Near(tag + " t=" + std::to_string(t) + " investor increment", li,
               std::log2(dot(row, c_binv)));
      inv += li;
      for (std::size_t c = 0; c < kComparatorCount; ++c) {
        if (c == kCover && !has_cover) continue;
        const double lc = Cell(row[c_log[c]]);
        comp[c] += lc;
        if (t == 1 || t == T || t % 97 == 0) {
          chk.Near(tag + " t=" + std::to_string(t) + " " + kComparatorNames[c] + " increment",
                   lc, std::log2(dot(row, c_b[c])));
        }
      }

      if (cal != seed.at("calibration_samples").end() && cal->at("t").get<std::uint64_t>() == t) {
        const GridSet& g = *grids[st];
        chk.Near(tag + " calibration score at t=" + std::to_string(t),
                 cal->at("score").get<double>(), CalibrationScore(ledger, g));
        const Halfspace h = ComputeHalfspace(mean, TargetSet{g.params.epsilon});
        chk.Near(tag + " dist_l2 at t=" + std::to_string(t), dst->at("dist_l2").get<double>(),
                 h.dist_l2);
        chk.Near(tag + " dist_l1 at t=" + std::to_string(t), dst->at("dist_l1").get<double>(),
                 h.dist_l1);
        ++cal;
        ++dst;
      }
    }
    chk.True(tag + ": unmatched diagnostic samples",
             cal == seed.at("calibration_samples").end());

    const json& fw = seed.at("final_log2_wealth");
    chk.Near(tag + " final investor wealth", fw.at("investor").get<double>(), inv);
    for (std::size_t c = 0; c < kComparatorCount; ++c) {
      if (c == kCover && !has_cover) continue;
      chk.Near(tag + " final " + kComparatorNames[c] + " wealth",
               fw.at(kComparatorNames[c]).get<double>(), comp[c]);
    }
    const double pr = PerRound(comp[kStationary] - inv, T);
    const double pw = PerRound(inv - comp[kPiecewise], T);
    const double bc = PerRound(inv - comp[kBcrp], T);
    chk.Near(tag + " gap_per_round", seed.at("gap_per_round").get<double>(), pr);
    chk.Near(tag + " gap_vs_piecewise", seed.at("gap_vs_piecewise").get<double>(), pw);
    chk.Near(tag + " gap_vs_bcrp", seed.at("gap_vs_bcrp").get<double>(), bc);
    gap_pr.push_back(pr);
    gap_pw.push_back(pw);
    gap_bc.push_back(bc);
  }
  chk.True("trajectory.csv has extra rows", cursor == table.rows.size());

  const json& agg = report.at("aggregates");
  if (!gap_pw.empty()) {
    chk.Near("aggregates.min_gap_vs_piecewise", agg.at("min_gap_vs_piecewise").get<double>(),
             *std::min_element(gap_pw.begin(), gap_pw.end()));
    chk.Near("aggregates.min_gap_vs_bcrp", agg.at("min_gap_vs_bcrp").get<double>(),
             *std::min_element(gap_bc.begin(), gap_bc.end()));
    chk.Near("aggregates.min_gap_per_round", agg.at("min_gap_per_round").get<double>(),
             *std::min_element(gap_pr.begin(), gap_pr.end()));
    double s = 0.0;
    for (double v : gap_pr) s += v;
    chk.Near("aggregates.mean_gap_per_round", agg.at("mean_gap_per_round").get<double>(),
             s / double(gap_pr.size()));
  }
  for (const char* name : {"investor", "bcrp", "cover", "piecewise", "stationary"}) {
    std::vector<double> v;
    for (const auto& seed : report.at("seeds")) {
      const json& w = seed.at("final_log2_wealth").at(name);
      if (!w.is_null()) v.push_back(w.get<double>());
    }
    if (v.empty()) continue;
    double s = 0.0;
    for (double x : v) s += x;
    const json& a = agg.at("final_log2_wealth").at(name);
    chk.Near(std::string("aggregates.final_log2_wealth.") + name + ".mean",
             a.at("mean").get<double>(), s / double(v.size()));
    chk.Near(std::string("aggregates.final_log2_wealth.") + name + ".min",
             a.at("min").get<double>(), *std::min_element(v.begin(), v.end()));
  }
  return chk.result;
}

}  // namespace calport
