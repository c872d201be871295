#include "chargecast/report.hpp"

#include "chargecast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace chargecast {

namespace {

double total_energy(std::span<const double> kw, int resolution_min) {
  double s = 0.0;
  for (double v : kw) s += v;
  return s * resolution_min / 60.0;
}

Aggregate aggregate(const std::vector<SampleMetrics>& rows, double SampleMetrics::*field) {
  Aggregate a;
  if (rows.empty()) return a;
  for (const auto& r : rows) a.mean += r.*field;
  a.mean /= static_cast<double>(rows.size());
  for (const auto& r : rows) a.std += (r.*field - a.mean) * (r.*field - a.mean);
  a.std = std::sqrt(a.std / static_cast<double>(rows.size()));
  return a;
}

std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  return out;
}

void write_row(std::ostream& out, const std::string& label, double mae, double crps, double c90, double c50,
               double w90, double w50, double cross, double energy) {
  out << label << ',' << mae << ',' << crps << ',' << c90 << ',' << c50 << ',' << w90 << ',' << w50 << ',' << cross
      << ',' << energy << '\n';
}

}  // namespace

SampleMetrics score_ensemble(const std::string& anchor, const ForecastEnsemble& ens, std::span<const double> truth,
                             int resolution_min) {
  SampleMetrics m;
  m.anchor = anchor;
  m.mae = mae(ens.median, truth);
  m.crps = crps_profile(ens.trajectories, truth);
  const IntervalScore i90 = coverage_and_width(ens, truth, 0.9);
  const IntervalScore i50 = coverage_and_width(ens, truth, 0.5);
  m.coverage_90 = i90.coverage;
  m.coverage_50 = i50.coverage;
  m.width_90 = i90.mean_width;
  m.width_50 = i50.mean_width;
  m.crossing_rate = crossing_rate(ens.quantiles);
  m.energy_kwh = ens.trajectories.sum() / static_cast<double>(ens.size()) * resolution_min / 60.0;
  return m;
}

SampleMetrics score_quantiles(const std::string& anchor, const nn::Matrix& quantiles, std::span<const double> truth,
                              int resolution_min) {
  SampleMetrics m;
  m.anchor = anchor;
  const nn::Matrix median = quantiles.row(2);
  const std::span<const double> med(median.data(), static_cast<std::size_t>(median.size()));
  m.mae = mae(med, truth);
  m.crps = quantile_crps(quantiles, truth);
  const IntervalScore i90 = coverage_and_width(quantiles, truth, 0.9);
  const IntervalScore i50 = coverage_and_width(quantiles, truth, 0.5);
  m.coverage_90 = i90.coverage;
  m.coverage_50 = i50.coverage;
  m.width_90 = i90.mean_width;
  m.width_50 = i50.mean_width;
  m.crossing_rate = crossing_rate(quantiles);
  m.energy_kwh = total_energy(med, resolution_min);
  return m;
}

SampleMetrics score_point(const std::string& anchor, std::span<const double> forecast, std::span<const double> truth,
                          int resolution_min) {
  nn::Matrix one = Eigen::Map<const nn::Matrix>(forecast.data(), 1, static_cast<Eigen::Index>(forecast.size()));
  return score_ensemble(anchor, ForecastEnsemble::from_trajectories(std::move(one)), truth, resolution_min);
}

EvalReport make_report(std::string name, std::vector<SampleMetrics> samples) {
  EvalReport r;
  r.name = std::move(name);
  r.samples = std::move(samples);
  r.mae = aggregate(r.samples, &SampleMetrics::mae);
  r.crps = aggregate(r.samples, &SampleMetrics::crps);
  r.coverage_90 = aggregate(r.samples, &SampleMetrics::coverage_90);
  r.coverage_50 = aggregate(r.samples, &SampleMetrics::coverage_50);
  r.width_90 = aggregate(r.samples, &SampleMetrics::width_90);
  r.width_50 = aggregate(r.samples, &SampleMetrics::width_50);
  r.crossing_rate = aggregate(r.samples, &SampleMetrics::crossing_rate);
  r.energy_kwh = aggregate(r.samples, &SampleMetrics::energy_kwh);
  return r;
}

nn::Matrix cumulative_rows(const nn::Matrix& rows, int resolution_min) {
  nn::Matrix out(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const std::vector<double> c =
        cumulative_energy(std::span<const double>(rows.row(i).data(), static_cast<std::size_t>(rows.cols())),
                          resolution_min);
    for (Eigen::Index j = 0; j < rows.cols(); ++j) out(i, j) = c[static_cast<std::size_t>(j)];
  }
  return out;
}

ForecastEnsemble cumulative_view(const ForecastEnsemble& ens, int resolution_min) {
  return ForecastEnsemble::from_trajectories(cumulative_rows(ens.trajectories, resolution_min));
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report, const nlohmann::json& config) {
  std::ofstream out = open_text(path);
  out << "# report=" << report.name << " config=" << config.dump() << '\n';
  out << "anchor,mae,crps,coverage_90,coverage_50,width_90,width_50,crossing_rate,energy_kwh\n";
  for (const SampleMetrics& s : report.samples) {
    write_row(out, s.anchor, s.mae, s.crps, s.coverage_90, s.coverage_50, s.width_90, s.width_50, s.crossing_rate,
              s.energy_kwh);
  }
  write_row(out, "mean", report.mae.mean, report.crps.mean, report.coverage_90.mean, report.coverage_50.mean,
            report.width_90.mean, report.width_50.mean, report.crossing_rate.mean, report.energy_kwh.mean);
  write_row(out, "std", report.mae.std, report.crps.std, report.coverage_90.std, report.coverage_50.std,
            report.width_90.std, report.width_50.std, report.crossing_rate.std, report.energy_kwh.std);
  if (!out) throw DataError("write failed: " + path.string());
}

std::string format_summary(std::span<const EvalReport> reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-36s %8s %17s %17s %7s %7s %9s %7s %10s\n", "model", "windows", "MAE (kW)",
                "CRPS (kW)", "cov90", "cov50", "width90", "cross", "energy");
  out << line;
  for (const EvalReport& r : reports) {
    std::snprintf(line, sizeof line, "%-36s %8zu %8.3f+-%-7.3f %8.3f+-%-7.3f %7.3f %7.3f %9.3f %7.3f %10.2f\n",
                  r.name.c_str(), r.samples.size(), r.mae.mean, r.mae.std, r.crps.mean, r.crps.std,
                  r.coverage_90.mean, r.coverage_50.mean, r.width_90.mean, r.crossing_rate.mean, r.energy_kwh.mean);
    out << line;
  }
  return out.str();
}

void write_band_svg(const std::filesystem::path& path, const nn::Matrix& quantiles, std::span<const double> truth,
                    const std::string& title) {
  const int w = 720, h = 360, pad = 40;
  const auto steps = static_cast<Eigen::Index>(truth.size());
  if (quantiles.rows() != 5 || quantiles.cols() != steps || steps < 2) {
    throw DomainError("band plot: need 5 quantile tracks matching the truth length");
  }
  double hi = std::max(quantiles.maxCoeff(), *std::max_element(truth.begin(), truth.end()));
  double lo = std::min(quantiles.minCoeff(), *std::min_element(truth.begin(), truth.end()));
  if (hi <= lo) hi = lo + 1.0;
  const auto px = [&](Eigen::Index j) { return pad + (w - 2.0 * pad) * static_cast<double>(j) / static_cast<double>(steps - 1); };
  const auto py = [&](double v) { return h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo); };
  const auto band = [&](Eigen::Index lo_row, Eigen::Index hi_row) {
    std::ostringstream pts;
    for (Eigen::Index j = 0; j < steps; ++j) pts << px(j) << ',' << py(quantiles(hi_row, j)) << ' ';
    for (Eigen::Index j = steps - 1; j >= 0; --j) pts << px(j) << ',' << py(quantiles(lo_row, j)) << ' ';
    return pts.str();
  };
  const auto line = [&](auto value_at) {
    std::ostringstream pts;
    for (Eigen::Index j = 0; j < steps; ++j) pts << px(j) << ',' << py(value_at(j)) << ' ';
    return pts.str();
  };

  std::ofstream out = open_text(path);
  out.precision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << pad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  out << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" points=\"" << band(0, 4) << "\"/>\n";
  out << "<polygon fill=\"#3182bd\" fill-opacity=\"0.5\" points=\"" << band(1, 3) << "\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\""
      << line([&](Eigen::Index j) { return quantiles(2, j); }) << "\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\" points=\""
      << line([&](Eigen::Index j) { return truth[static_cast<std::size_t>(j)]; }) << "\"/>\n";
  out << "<text x=\"" << pad << "\" y=\"" << h - 10 << "\" font-family=\"sans-serif\" font-size=\"11\">"
      << lo << " to " << hi << " kW; bands 90% / 50%, solid median, dashed truth</text>\n";
  out << "</svg>\n";
}

void write_ensemble_csv(const std::filesystem::path& path, const nn::Matrix& trajectories) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  for (Eigen::Index j = 0; j < trajectories.cols(); ++j) out << (j ? "," : "") << "step_" << j;
  out << '\n';
  for (Eigen::Index n = 0; n < trajectories.rows(); ++n) {
    for (Eigen::Index j = 0; j < trajectories.cols(); ++j) out << (j ? "," : "") << trajectories(n, j);
    out << '\n';
  }
}

}  // namespace chargecast
