#include "stdde/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "stdde/error.hpp"

namespace stdde {

namespace {

constexpr const char* kMagic = "STDDE-CHECKPOINT 1";

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::istringstream line(const std::string& key) {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_no_;
      if (!text.empty()) break;
    }
    std::istringstream ss(text);
    std::string got;
    ss >> got;
    if (got != key) throw ParseError("expected '" + key + "', found '" + got + "'", line_no_);
    return ss;
  }
  template <typename T>
  T scalar(const std::string& key) {
    auto ss = line(key);
    T v{};
    if (!(ss >> v)) throw ParseError("bad value for '" + key + "'", line_no_);
    return v;
  }
  std::size_t line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

double read_real(std::istringstream& ss, std::size_t line) {
  std::string tok;
  if (!(ss >> tok)) throw ParseError("missing value", line);
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw ParseError("bad number '" + tok + "'", line);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("bad number '" + tok + "'", line);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  const ModelParams& p = ckpt.params;
  const TrainConfig& cfg = ckpt.config;
  out << kMagic << "\n";
  out << "dims " << p.dims.input_dim << " " << p.dims.hidden_dim << " " << p.dims.output_dim << "\n";
  out << "interval_minutes " << real(ckpt.interval_minutes) << "\n";
  out << "eta " << real(cfg.eta) << "\n";
  out << "frame_spacing " << real(cfg.frame_spacing) << "\n";
  out << "window " << cfg.window_in << " " << cfg.window_out << "\n";
  out << "scaler " << real(ckpt.scaler.mean) << " " << real(ckpt.scaler.std) << " " << (ckpt.scaler.zero_variance ? 1 : 0)
      << "\n";
  out << "nodes " << ckpt.graph.node_count() << "\n";
  out << "edges " << ckpt.graph.edge_count() << "\n";
  for (const Edge& e : ckpt.graph.edges()) out << e.src << " " << e.dst << " " << real(e.weight) << "\n";
  out << "tau_max " << real(p.delays.tau_max) << "\n";
  out << "learnable " << (p.delays.learnable ? 1 : 0) << "\n";
  out << "peak_windows " << p.delays.peak_windows.size();
  for (const PeakWindow& w : p.delays.peak_windows) out << " " << real(w.begin_minute) << " " << real(w.end_minute);
  out << "\n";
  // Const view of blocks: ModelParams::blocks() hands out mutable pointers.
  ModelParams copy = p;
  for (const ParamBlock& b : copy.blocks()) {
    out << "block " << b.name << " " << b.size << "\n";
    for (std::size_t i = 0; i < b.size; ++i) out << (i ? " " : "") << real(b.data[i]);
    out << "\n";
  }
  out << "end\n";
  if (!out) throw InputError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic) throw ParseError("not a checkpoint file", 1);
  Reader r(in);
  // Line counter starts after the magic line.
  auto ln = [&] { return r.line_no() + 1; };

  Checkpoint ck;
  int in_dim = 0, hidden = 0, out_dim = 0;
  {
    auto ss = r.line("dims");
    if (!(ss >> in_dim >> hidden >> out_dim) || in_dim < 1 || hidden < 1 || out_dim < 1)
      throw ParseError("bad dims", ln());
  }
  {
    auto ss = r.line("interval_minutes");
    ck.interval_minutes = read_real(ss, ln());
  }
  {
    auto ss = r.line("eta");
    ck.config.eta = read_real(ss, ln());
  }
  {
    auto ss = r.line("frame_spacing");
    ck.config.frame_spacing = read_real(ss, ln());
  }
  {
    auto ss = r.line("window");
    if (!(ss >> ck.config.window_in >> ck.config.window_out)) throw ParseError("bad window", ln());
  }
  {
    auto ss = r.line("scaler");
    ck.scaler.mean = read_real(ss, ln());
    ck.scaler.std = read_real(ss, ln());
    int zv = 0;
    ss >> zv;
    ck.scaler.zero_variance = zv != 0;
  }
  const int nodes = r.scalar<int>("nodes");
  const long edge_count = r.scalar<long>("edges");
  std::vector<Edge> edges;
  for (long e = 0; e < edge_count; ++e) {
    std::string text;
    if (!std::getline(in, text)) throw ParseError("truncated edge list", ln());
    std::istringstream ss(text);
    Edge edge;
    if (!(ss >> edge.src >> edge.dst)) throw ParseError("bad edge", ln() + static_cast<std::size_t>(e));
    edge.weight = read_real(ss, ln() + static_cast<std::size_t>(e));
    edges.push_back(edge);
  }
  ck.graph = build_graph(nodes, edges);

  DelayTable delays;
  {
    auto ss = r.line("tau_max");
    delays.tau_max = read_real(ss, ln());
  }
  const int learnable = r.scalar<int>("learnable");
  {
    auto ss = r.line("peak_windows");
    std::size_t n = 0;
    ss >> n;
    delays.peak_windows.clear();
    for (std::size_t k = 0; k < n; ++k) {
      PeakWindow w;
      w.begin_minute = read_real(ss, ln());
      w.end_minute = read_real(ss, ln());
      delays.peak_windows.push_back(w);
    }
  }
  ck.config.hidden_dim = hidden;
  ck.params = init_params(in_dim, hidden, out_dim, ck.graph, 0, delays.tau_max);
  ck.params.delays.peak_windows = delays.peak_windows;
  ck.params.delays.learnable = learnable != 0;
  ck.config.learnable_delays = learnable != 0;
  for (ParamBlock& b : ck.params.blocks()) {
    auto ss = r.line("block");
    std::string name;
    std::size_t size = 0;
    ss >> name >> size;
    if (name != b.name || size != b.size) throw ParseError("unexpected block '" + name + "'", r.line_no());
    std::string text;
    std::getline(in, text);
    std::istringstream vs(text);
    for (std::size_t i = 0; i < size; ++i) b.data[i] = read_real(vs, r.line_no() + 1);
  }
  r.line("end");
  return ck;
}

}  // namespace stdde
