#include "vidtr/cost_model.hpp"

#include <cstdio>
#include <sstream>

#include "vidtr/errors.hpp"

namespace vidtr {

namespace {

using u64 = std::uint64_t;

// One attention stage: `lines` independent sequences of `keys` rows whose
// affinity rows are pooled to `queries`.
struct Stage {
  u64 lines, keys, queries;
};

void add_stage(LayerCost& cost, const Stage& s, u64 width) {
  cost.affinity_per_head += s.lines * s.queries * s.keys;
  cost.qkv_macs += 3 * s.lines * s.keys * width * width;
  cost.score_macs += s.lines * s.keys * s.keys * width;
  cost.value_macs += s.lines * s.queries * s.keys * width;
  cost.output_macs += s.lines * s.queries * width * width;
}

std::vector<LayerCost> layer_costs(const ModelConfig& config) {
  config.validate();
  const auto lattice = config.lattice();
  const u64 C = config.embed_dim, heads = config.heads;
  const u64 T = lattice.frames, Wp = lattice.across_w, Hp = lattice.across_h;
  const u64 P = Wp * Hp;
  const auto extents = config.temporal_extents();

  std::vector<LayerCost> layers(config.depth);
  u64 t_in = T + 1;
  for (std::size_t l = 0; l < config.depth; ++l) {
    LayerCost& c = layers[l];
    c.index = l;
    u64 rows_out = 0;
    switch (config.factorization) {
      case Factorization::Joint: {
        const u64 L = T * P + 1;
        add_stage(c, {1, L, L}, C);
        c.t_in = c.t_out = T;
        rows_out = L;
        break;
      }
      case Factorization::SpatialOnly:
        add_stage(c, {T, P + 1, P + 1}, C);
        c.t_in = c.t_out = T;
        rows_out = T * (P + 1);
        break;
      case Factorization::Separable: {
        const u64 t_out = extents[l];
        add_stage(c, {P + 1, t_in, t_out}, C);
        add_stage(c, {t_out, P + 1, P + 1}, C);
        c.t_in = t_in;
        c.t_out = t_out;
        rows_out = t_out * (P + 1);
        t_in = t_out;
        break;
      }
      case Factorization::Axial: {
        const u64 t_out = extents[l];
        add_stage(c, {(Wp + 1) * (Hp + 1), t_in, t_out}, C);
        add_stage(c, {t_out * (Hp + 1), Wp + 1, Wp + 1}, C);
        add_stage(c, {t_out * (Wp + 1), Hp + 1, Hp + 1}, C);
        c.t_in = t_in;
        c.t_out = t_out;
        rows_out = t_out * (Wp + 1) * (Hp + 1);
        t_in = t_out;
        break;
      }
    }
    c.affinity = heads * c.affinity_per_head;
    c.ffn_macs = 2 * rows_out * C * config.mlp_hidden;
  }
  return layers;
}

}  // namespace

std::vector<std::uint64_t> affinity_counts(const ModelConfig& config) {
  std::vector<u64> out;
  for (const auto& l : layer_costs(config)) out.push_back(l.affinity);
  return out;
}

std::vector<std::uint64_t> affinity_counts_per_head(const ModelConfig& config) {
  std::vector<u64> out;
  for (const auto& l : layer_costs(config)) out.push_back(l.affinity_per_head);
  return out;
}

std::uint64_t parameter_count(const ModelConfig& config) {
  config.validate();
  const auto lattice = config.lattice();
  const u64 C = config.embed_dim, hidden = config.mlp_hidden;
  const auto layout = make_embed_layout(layout_for(config.factorization), lattice);
  u64 total = lattice.patch_dim * C + C + layout.class_count * C;
  for (auto rows : layout.pos_table_rows) total += rows * C;

  const u64 norms = 2 * 2 * C;
  const u64 attention = 4 * (C * C + C) + norms;
  const u64 ffn = C * hidden + hidden + hidden * C + C + norms;
  const u64 per_layer =
      attention * attention_axis_names(config.factorization).size() + ffn;
  for (std::size_t l = 0; l < config.depth; ++l) {
    total += per_layer;
    if (config.pool_at(l).kind == PoolKind::Conv1d) total += 3;
  }
  return total + C * config.class_count + config.class_count;
}

CostReport flops_estimate(const ModelConfig& config, const std::string& name) {
  CostReport r;
  r.name = name;
  r.config = config;
  r.layers = layer_costs(config);
  for (const auto& l : r.layers) {
    r.affinity += l.affinity;
    r.attention_macs += l.attention_macs();
    r.ffn_macs += l.ffn_macs;
  }
  const auto lattice = config.lattice();
  r.embed_macs = static_cast<u64>(lattice.total()) * lattice.patch_dim * config.embed_dim;
  r.head_macs = static_cast<u64>(config.embed_dim) * config.class_count;
  r.parameters = parameter_count(config);
  return r;
}

namespace {

std::string line(const char* fmt, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

constexpr char kFormulaHeader[] =
    "# counts are exact; MAC = multiply-accumulate, all heads\n"
    "# per attention stage over n sequences of k rows pooled to q rows, width C:\n"
    "#   affinity = heads*n*q*k   qkv = 3*n*k*C^2   scores = n*k^2*C\n"
    "#   value = n*q*k*C   output = n*q*C^2\n"
    "# feed-forward = 2*rows_out*C*hidden\n"
    "# joint: n=1, k=q=T*P+1; spatial_only: n=T, k=q=P+1\n"
    "# separable: temporal n=P+1, k=t_in, q=t_out; spatial n=t_out, k=q=P+1\n"
    "# axial: temporal n=(W+1)(H+1); width n=t_out*(H+1), k=W+1; height n=t_out*(W+1), k=H+1\n"
    "# t_in/t_out count the class row; memory covers affinity elements only\n";

}  // namespace

std::string report_text(const CostReport& r) {
  std::ostringstream out;
  out << kFormulaHeader;
  if (!r.name.empty()) out << "model " << r.name << "\n";
  out << line("%-5s %5s %5s %14s %16s %16s %16s\n", "layer", "t_in", "t_out",
              "affinity", "attention_macs", "ffn_macs", "total_macs");
  for (const auto& l : r.layers)
    out << line("%-5zu %5zu %5zu %14llu %16llu %16llu %16llu\n", l.index, l.t_in,
                l.t_out, (unsigned long long)l.affinity,
                (unsigned long long)l.attention_macs(),
                (unsigned long long)l.ffn_macs, (unsigned long long)l.total_macs());
  out << line("%-17s %14llu %16llu %16llu %16llu\n", "total",
              (unsigned long long)r.affinity, (unsigned long long)r.attention_macs,
              (unsigned long long)r.ffn_macs, (unsigned long long)r.encoder_macs());
  out << line("embed_macs %llu\nhead_macs %llu\nparameters %llu\n",
              (unsigned long long)r.embed_macs, (unsigned long long)r.head_macs,
              (unsigned long long)r.parameters);
  return out.str();
}

std::string report_csv(const CostReport& r) {
  std::ostringstream out;
  out << "layer,t_in,t_out,affinity_per_head,affinity,qkv_macs,score_macs,"
         "value_macs,output_macs,ffn_macs,total_macs\n";
  u64 per_head = 0, qkv = 0, score = 0, value = 0, output = 0;
  for (const auto& l : r.layers) {
    out << l.index << ',' << l.t_in << ',' << l.t_out << ',' << l.affinity_per_head
        << ',' << l.affinity << ',' << l.qkv_macs << ',' << l.score_macs << ','
        << l.value_macs << ',' << l.output_macs << ',' << l.ffn_macs << ','
        << l.total_macs() << '\n';
    per_head += l.affinity_per_head;
    qkv += l.qkv_macs;
    score += l.score_macs;
    value += l.value_macs;
    output += l.output_macs;
  }
  out << "total,,," << per_head << ',' << r.affinity << ',' << qkv << ',' << score
      << ',' << value << ',' << output << ',' << r.ffn_macs << ',' << r.encoder_macs()
      << '\n';
  return out.str();
}

double reduction(std::uint64_t baseline, std::uint64_t candidate) {
  if (baseline == 0) return 0.0;
  return 1.0 - static_cast<double>(candidate) / static_cast<double>(baseline);
}

Comparison compare_report(const std::vector<CostReport>& reports) {
  if (reports.size() < 2)
    throw ConfigError("compare_report needs at least two configs");
  const CostReport& base = reports.front();
  Comparison c;
  std::ostringstream text, csv;
  text << "# reductions are 1 - candidate/baseline against " <<
      (base.name.empty() ? std::string("config 0") : base.name) << "\n";
  text << "# affinity ratio is baseline/candidate affinity elements\n";
  text << line("%-12s %16s %18s %18s %10s %10s %14s\n", "model", "affinity",
               "encoder_macs", "total_macs", "enc_red%", "tot_red%", "affinity_ratio");
  csv << "model,affinity,attention_macs,ffn_macs,encoder_macs,total_macs,parameters,"
         "encoder_reduction,total_reduction,affinity_ratio\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const std::string name = r.name.empty() ? "config" + std::to_string(i) : r.name;
    const double enc = reduction(base.encoder_macs(), r.encoder_macs());
    const double tot = reduction(base.total_macs(), r.total_macs());
    const double ratio = r.affinity == 0 ? 0.0
                                         : static_cast<double>(base.affinity) /
                                               static_cast<double>(r.affinity);
    text << line("%-12s %16llu %18llu %18llu %10.2f %10.2f %14.4f\n", name.c_str(),
                 (unsigned long long)r.affinity, (unsigned long long)r.encoder_macs(),
                 (unsigned long long)r.total_macs(), 100.0 * enc, 100.0 * tot, ratio);
    csv << name << ',' << r.affinity << ',' << r.attention_macs << ',' << r.ffn_macs
        << ',' << r.encoder_macs() << ',' << r.total_macs() << ',' << r.parameters
        << ',' << line("%.6f", enc) << ',' << line("%.6f", tot) << ','
        << line("%.6f", ratio) << '\n';
  }
  c.text = text.str();
  c.csv = csv.str();
  return c;
}

}  // namespace vidtr
