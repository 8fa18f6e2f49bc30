#include "dsd/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "dsd/parallel.hpp"
#include "dsd/stats.hpp"
#include "dsd/theory.hpp"

namespace dsd {

double optimal_loss(const TaskSpec& spec, int n_test, Rng& rng) {
  validate(spec);
  ModelParams oracle;
  oracle.kind = ModelKind::Cnn;
  oracle.shape = spec.shape;
  oracle.weights = {spec.signal};
  double best = std::numeric_limits<double>::infinity();
  for (double bias : {0.0, 1e-4, 1e-3, 1e-2}) {
    oracle.bias = bias;
    const auto risk = risk_mc(oracle, spec, {BaseDistribution::dsd(), nullptr}, n_test, rng);
    best = std::min(best, risk.mean);
  }
  return best;
}

void validate(const SweepConfig& cfg) {
  if (cfg.kinds.empty() || cfg.k_values.empty() || cfg.d_values.empty() ||
      cfg.sample_sizes.empty() || cfg.weight_lrs.empty() || cfg.bias_grid.empty())
    throw std::invalid_argument("SweepConfig: all lists must be non-empty");
  if (cfg.replications < 1) throw std::invalid_argument("SweepConfig: replications must be >= 1");
  if (cfg.test_size < 1 || cfg.train_iterations < 1)
    throw std::invalid_argument("SweepConfig: test size and iterations must be >= 1");
}

namespace {

double cell_sigma(const SweepConfig& cfg, int k) {
  return cfg.sigma ? *cfg.sigma : 1.0 / std::sqrt(static_cast<double>(k));
}

std::uint64_t cell_key(int k, int d, int n, int rep) {
  return (static_cast<std::uint64_t>(k) << 40) ^ (static_cast<std::uint64_t>(d) << 24) ^
         (static_cast<std::uint64_t>(n) << 8) ^ static_cast<std::uint64_t>(rep);
}

}  // namespace

SweepReport run_test_error_sweep(const SweepConfig& cfg) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  struct Task {
    ModelKind kind;
    int k, d, n, rep;
  };
  std::vector<Task> tasks;
  for (ModelKind kind : cfg.kinds)
    for (int k : cfg.k_values)
      for (int d : cfg.d_values)
        for (int n : cfg.sample_sizes)
          for (int rep = 0; rep < cfg.replications; ++rep) tasks.push_back({kind, k, d, n, rep});

  SweepReport report;
  report.config = cfg;
  report.rows.resize(tasks.size());

  parallel_for(tasks.size(), cfg.jobs, [&](std::size_t idx) {
    const Task& task = tasks[idx];
    SweepRow row;
    row.kind = to_string(task.kind);
    row.k = task.k;
    row.d = task.d;
    row.n = task.n;
    row.replicate = task.rep;
    // Train data is shared across kinds at the same cell so the three
    // models see identical samples.
    row.seed = derive_seed(cfg.master_seed, "train", cell_key(task.k, task.d, task.n, task.rep));
    try {
      const TaskSpec spec =
          make_task_spec(task.k, task.d, cell_sigma(cfg, task.k),
                         derive_seed(cfg.master_seed, "spec", cell_key(task.k, task.d, 0, 0)));
      Rng rng_train(row.seed);
      const Dataset train = sample_dsd(spec, task.n, rng_train);
      Rng rng_test(derive_seed(cfg.master_seed, "test", cell_key(task.k, task.d, 0, task.rep)));
      const Dataset test = sample_dsd(spec, cfg.test_size, rng_test);
      const auto grid = grid_search_train(task.kind, spec, train, test, cfg.weight_lrs,
                                          cfg.bias_grid, cfg.train_iterations, row.seed);
      row.test_error = grid.best_test_error;
      row.selected_lr = grid.selected_lr;
      row.selected_bias = grid.selected_bias;
    } catch (const std::exception&) {
      row.failed = true;
      row.test_error = std::numeric_limits<double>::quiet_NaN();
    }
    report.rows[idx] = std::move(row);
  });

  std::sort(report.rows.begin(), report.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.kind, a.k, a.d, a.n, a.replicate) <
           std::tie(b.kind, b.k, b.d, b.n, b.replicate);
  });

  std::map<std::tuple<std::string, int, int, int>, std::vector<double>> cells;
  for (const auto& row : report.rows)
    if (!row.failed) cells[{row.kind, row.k, row.d, row.n}].push_back(row.test_error);
  for (const auto& [key, errors] : cells) {
    SweepCellAggregate agg;
    agg.kind = std::get<0>(key);
    agg.k = std::get<1>(key);
    agg.d = std::get<2>(key);
    agg.n = std::get<3>(key);
    agg.mean_test_error = stats::mean(errors);
    agg.std_test_error = stats::sample_std(errors);
    agg.successes = static_cast<int>(errors.size());
    report.aggregates.push_back(agg);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

SearchOutcome binary_search_min_n(const std::function<double(int n, int probe)>& eval,
                                  double target, int n_max) {
  if (n_max < 2) throw std::invalid_argument("binary_search_min_n: n_max must be >= 2");
  SearchOutcome out;
  std::vector<int> passed;  // probed n with eval <= target
  int lo = 1, hi = n_max;
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    const double err = eval(mid, out.probes++);
    if (err <= target) {
      passed.push_back(mid);
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  // Confirmation with a fresh probe index.
  if (eval(lo, out.probes++) <= target) {
    out.min_n = lo;
    return out;
  }
  if (lo >= n_max) {
    out.min_n = n_max;
    out.saturated = true;
    return out;
  }
  // The candidate was a seed-lucky undershoot; expand the lower bracket
  // once, to the next n that already passed during the search (or 2x the
  // candidate when the candidate was the only success).
  int next_passed = 0;  // smallest search-passed n above the candidate
  for (int n : passed)
    if (n > lo && (next_passed == 0 || n < next_passed)) next_passed = n;
  const int expanded =
      next_passed > 0 ? std::min(next_passed, std::min(2 * lo, n_max)) : std::min(2 * lo, n_max);
  out.bracket_expanded = true;
  if (eval(expanded, out.probes++) <= target) {
    out.min_n = expanded;
    return out;
  }
  // Expansion point flaked too. The smallest rung with a pass on record
  // stands as the estimate (one pass, at most one fail puts it in the
  // threshold zone); climbing the coarse upper bisection rungs would bias
  // the result up.
  if (next_passed > 0) {
    out.min_n = next_passed;
    return out;
  }
  out.min_n = n_max;
  out.saturated = true;
  return out;
}

ComplexityResult estimate_sample_complexity(ModelKind kind, const TaskSpec& spec,
                                            const ComplexityConfig& cfg, std::uint64_t seed) {
  if (cfg.tolerance <= 0.0) throw std::invalid_argument("complexity: tolerance must be > 0");
  if (cfg.n_max < 2) throw std::invalid_argument("complexity: n_max must be >= 2");
  if (cfg.replicates < 1) throw std::invalid_argument("complexity: replicates must be >= 1");
  if (cfg.weight_lrs.empty() || cfg.bias_grid.empty())
    throw std::invalid_argument("complexity: empty grid");

  ComplexityResult result;
  result.kind = to_string(kind);
  result.k = spec.shape.num_patches;
  result.d = spec.shape.patch_dim;
  result.tolerance = cfg.tolerance;
  result.n_max = cfg.n_max;
  result.replicates.resize(cfg.replicates);

  parallel_for(static_cast<std::size_t>(cfg.replicates), cfg.jobs, [&](std::size_t r) {
    ComplexityReplicate rep;
    rep.replicate = static_cast<int>(r);
    rep.seed = derive_seed(seed, "complexity", r);
    Rng rng_opt(derive_seed(rep.seed, "optimal"));
    rep.target_loss = optimal_loss(spec, cfg.optimal_loss_test_size, rng_opt) + cfg.tolerance;
    Rng rng_test(derive_seed(rep.seed, "test"));
    const Dataset test = sample_dsd(spec, cfg.test_size, rng_test);

    auto eval = [&](int n, int probe) {
      Rng rng_train(derive_seed(rep.seed, "probe", static_cast<std::uint64_t>(probe)));
      const Dataset train = sample_dsd(spec, n, rng_train);
      const auto grid =
          grid_search_train(kind, spec, train, test, cfg.weight_lrs, cfg.bias_grid,
                            cfg.train_iterations, derive_seed(rep.seed, "grid", probe));
      return grid.best_test_error;
    };
    const SearchOutcome outcome = binary_search_min_n(eval, rep.target_loss, cfg.n_max);
    rep.min_n = outcome.min_n;
    rep.saturated = outcome.saturated;
    result.replicates[r] = rep;
  });

  std::vector<double> ns;
  ns.reserve(result.replicates.size());
  for (const auto& rep : result.replicates) ns.push_back(static_cast<double>(rep.min_n));
  result.mean_min_n = stats::mean(ns);
  result.std_min_n = stats::sample_std(ns);
  return result;
}

void write_sweep_csv(const SweepReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_sweep_csv: cannot open " + path);
  out << "kind,k,d,n,replicate,seed,test_error,selected_lr,selected_bias\n";
  out.precision(17);
  for (const auto& row : report.rows) {
    out << row.kind << "," << row.k << "," << row.d << "," << row.n << "," << row.replicate << ","
        << row.seed << "," << row.test_error << "," << row.selected_lr << ","
        << row.selected_bias << "\n";
  }
}

std::vector<SweepRow> parse_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_sweep_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("parse_sweep_csv: empty file");
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    SweepRow row;
    std::getline(ss, row.kind, ',');
    auto next = [&]() {
      std::getline(ss, field, ',');
      return field;
    };
    row.k = std::stoi(next());
    row.d = std::stoi(next());
    row.n = std::stoi(next());
    row.replicate = std::stoi(next());
    row.seed = std::stoull(next());
    row.test_error = std::stod(next());
    row.selected_lr = std::stod(next());
    row.selected_bias = std::stod(next());
    row.failed = std::isnan(row.test_error);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_complexity_csv(const std::vector<ComplexityResult>& results, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_complexity_csv: cannot open " + path);
  out << "kind,k,d,replicate,seed,min_n,target_loss,saturated\n";
  out.precision(17);
  for (const auto& res : results)
    for (const auto& rep : res.replicates)
      out << res.kind << "," << res.k << "," << res.d << "," << rep.replicate << "," << rep.seed
          << "," << rep.min_n << "," << rep.target_loss << "," << (rep.saturated ? 1 : 0) << "\n";
}

void write_sweep_metadata(const SweepReport& report, const std::string& path) {
  nlohmann::json j;
  nlohmann::json cfg;
  std::vector<std::string> kinds;
  for (auto kind : report.config.kinds) kinds.push_back(to_string(kind));
  cfg["kinds"] = kinds;
  cfg["k_values"] = report.config.k_values;
  cfg["d_values"] = report.config.d_values;
  cfg["sample_sizes"] = report.config.sample_sizes;
  cfg["replications"] = report.config.replications;
  cfg["weight_lrs"] = report.config.weight_lrs;
  cfg["bias_grid"] = report.config.bias_grid;
  cfg["test_size"] = report.config.test_size;
  cfg["train_iterations"] = report.config.train_iterations;
  if (report.config.sigma) cfg["sigma"] = *report.config.sigma;
  cfg["master_seed"] = report.config.master_seed;
  j["config"] = cfg;
  j["artifact_version"] = "0.1.0";
  j["wall_seconds"] = report.wall_seconds;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_sweep_metadata: cannot open " + path);
  out << j.dump(2) << "\n";
}

namespace {

constexpr int kChartWidth = 720;
constexpr int kChartHeight = 480;
constexpr int kMarginLeft = 70, kMarginRight = 160, kMarginTop = 40, kMarginBottom = 55;

const char* series_color(std::size_t idx) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  return palette[idx % 5];
}

std::string format_tick(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

}  // namespace

void render_line_chart(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<PlotSeries>& series) {
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool have_point = false;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      if (!have_point) {
        xmin = xmax = p.x;
        ymin = p.y - p.yerr;
        ymax = p.y + p.yerr;
        have_point = true;
      } else {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y - p.yerr);
        ymax = std::max(ymax, p.y + p.yerr);
      }
    }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double xpad = 0.05 * (xmax - xmin);
  const double ypad = 0.08 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;

  const double plot_w = kChartWidth - kMarginLeft - kMarginRight;
  const double plot_h = kChartHeight - kMarginTop - kMarginBottom;
  auto sx = [&](double x) { return kMarginLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double y) { return kMarginTop + (ymax - y) / (ymax - ymin) * plot_h; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("render_line_chart: cannot open " + path);
  out.precision(6);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kChartWidth << "\" height=\""
      << kChartHeight << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << kChartWidth << "\" height=\"" << kChartHeight
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kChartWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";

  // Axes.
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\""
      << kMarginLeft + plot_w << "\" y2=\"" << kMarginTop + plot_h
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
      << "\" y2=\"" << kMarginTop + plot_h << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (int tick = 0; tick <= 5; ++tick) {
    const double fx = xmin + (xmax - xmin) * tick / 5.0;
    const double fy = ymin + (ymax - ymin) * tick / 5.0;
    out << "<line x1=\"" << sx(fx) << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\"" << sx(fx)
        << "\" y2=\"" << kMarginTop + plot_h + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << sx(fx) << "\" y=\"" << kMarginTop + plot_h + 20
        << "\" text-anchor=\"middle\" font-size=\"11\">" << format_tick(fx) << "</text>\n";
    out << "<line x1=\"" << kMarginLeft - 5 << "\" y1=\"" << sy(fy) << "\" x2=\"" << kMarginLeft
        << "\" y2=\"" << sy(fy) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << sy(fy) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << format_tick(fy) << "</text>\n";
  }
  out << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\"" << kChartHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
  out << "<text x=\"18\" y=\"" << kMarginTop + plot_h / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << kMarginTop + plot_h / 2 << ")\">" << y_label << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = series_color(si);
    if (!s.points.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (const auto& p : s.points) out << sx(p.x) << "," << sy(p.y) << " ";
      out << "\"/>\n";
    }
    for (const auto& p : s.points) {
      if (p.yerr > 0.0) {
        out << "<line x1=\"" << sx(p.x) << "\" y1=\"" << sy(p.y - p.yerr) << "\" x2=\"" << sx(p.x)
            << "\" y2=\"" << sy(p.y + p.yerr) << "\" stroke=\"" << color << "\"/>\n";
        out << "<line x1=\"" << sx(p.x) - 3 << "\" y1=\"" << sy(p.y - p.yerr) << "\" x2=\""
            << sx(p.x) + 3 << "\" y2=\"" << sy(p.y - p.yerr) << "\" stroke=\"" << color
            << "\"/>\n";
        out << "<line x1=\"" << sx(p.x) - 3 << "\" y1=\"" << sy(p.y + p.yerr) << "\" x2=\""
            << sx(p.x) + 3 << "\" y2=\"" << sy(p.y + p.yerr) << "\" stroke=\"" << color
            << "\"/>\n";
      }
      out << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    // Legend entry.
    const double ly = kMarginTop + 18.0 * static_cast<double>(si);
    out << "<line x1=\"" << kMarginLeft + plot_w + 14 << "\" y1=\"" << ly << "\" x2=\""
        << kMarginLeft + plot_w + 38 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kMarginLeft + plot_w + 44 << "\" y=\"" << ly + 4
        << "\" font-size=\"12\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

void render_sweep_plots(const SweepReport& report, const std::string& out_dir) {
  if (report.aggregates.empty()) return;
  std::filesystem::create_directories(out_dir);
  std::map<std::pair<int, int>, std::map<std::string, PlotSeries>> charts;
  for (const auto& agg : report.aggregates) {
    auto& series = charts[{agg.k, agg.d}][agg.kind];
    series.name = agg.kind;
    series.points.push_back({static_cast<double>(agg.n), agg.mean_test_error, agg.std_test_error});
  }
  for (auto& [kd, by_kind] : charts) {
    std::vector<PlotSeries> series;
    for (auto& [name, s] : by_kind) {
      std::sort(s.points.begin(), s.points.end(),
                [](const PlotPoint& a, const PlotPoint& b) { return a.x < b.x; });
      series.push_back(std::move(s));
    }
    std::ostringstream title, file;
    title << "Test error, k=" << kd.first << ", d=" << kd.second;
    file << out_dir << "/test_error_k" << kd.first << "_d" << kd.second << ".svg";
    render_line_chart(file.str(), title.str(), "training samples", "test error", series);
  }
}

void render_complexity_plot(const std::vector<ComplexityResult>& results,
                            const std::string& axis_label, const std::string& out_dir,
                            const std::string& file_stem) {
  if (results.empty()) return;
  std::filesystem::create_directories(out_dir);
  std::map<std::string, PlotSeries> by_kind;
  const bool vary_k = axis_label == "k";
  for (const auto& res : results) {
    auto& series = by_kind[res.kind];
    series.name = res.kind;
    series.points.push_back(
        {static_cast<double>(vary_k ? res.k : res.d), res.mean_min_n, res.std_min_n});
  }
  std::vector<PlotSeries> series;
  for (auto& [name, s] : by_kind) {
    std::sort(s.points.begin(), s.points.end(),
              [](const PlotPoint& a, const PlotPoint& b) { return a.x < b.x; });
    series.push_back(std::move(s));
  }
  render_line_chart(out_dir + "/" + file_stem + ".svg", "Sample complexity vs " + axis_label,
                    axis_label, "minimal n", series);
}

BoostingDemoReport run_boosting_demo(const TaskSpec& spec, int section_budget, int sections,
                                     std::uint64_t seed) {
  if (section_budget < 10) throw std::invalid_argument("boosting demo: budget must be >= 10");
  if (sections < 1) throw std::invalid_argument("boosting demo: need >= 1 section");
  const std::vector<double> target = mu_vector(spec, 0);
  const int val_size = std::max(20, section_budget / 5);

  BoostingDemoReport report;
  report.section_alignment.resize(sections, 0.0);
  std::vector<std::vector<double>> estimates(sections);
  std::vector<char> identified(sections, 0);
  const std::size_t dim = target.size();
  for (auto& est : estimates) est.assign(dim, 0.0);

  parallel_for(static_cast<std::size_t>(sections), 0, [&](std::size_t s) {
    Rng rng(derive_seed(seed, "boost-section", s));
    const Dataset train = sample_ssd(spec, 0, section_budget, rng);
    const Dataset val = sample_ssd(spec, 0, val_size, rng);
    const Dataset holdout = sample_ssd(spec, 0, 1, rng);
    const auto grid = grid_search_train(ModelKind::Fcn, spec, train, val, {1e-1, 1e-2, 1e-3},
                                        {1e-2, 1e-3, 1e-4}, 60, derive_seed(seed, "boost-train", s));
    const auto node = theory::identify_aligned_node(grid.best.params, holdout.samples.front());
    if (node) {
      identified[s] = 1;
      estimates[s] = grid.best.params.weights[static_cast<std::size_t>(*node)];
      double dot = 0.0, nrm = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        dot += estimates[s][c] * target[c];
        nrm += estimates[s][c] * estimates[s][c];
      }
      report.section_alignment[s] = nrm > 0.0 ? dot / std::sqrt(nrm) : 0.0;
    }
  });

  for (int s = 0; s < sections; ++s)
    if (!identified[s]) ++report.failed_sections;
  const auto boosted = theory::boost_mean(estimates);
  double dot = 0.0;
  for (std::size_t c = 0; c < dim; ++c) dot += boosted[c] * target[c];
  report.boosted_alignment = dot;
  report.best_single_alignment =
      *std::max_element(report.section_alignment.begin(), report.section_alignment.end());
  return report;
}

}  // namespace dsd
