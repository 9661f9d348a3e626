#include "tos/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tos {
namespace {

std::string opt_cell(const std::optional<double>& v) { return v ? csv_double(*v) : std::string(); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

struct MeanStd {
  double mean = 0, std = 0;
};

MeanStd aggregate(const std::vector<double>& xs) {
  MeanStd ms;
  const auto n = static_cast<double>(xs.size());
  for (const double x : xs) ms.mean += x;
  ms.mean /= n;
  if (xs.size() > 1) {
    double ss = 0;
    for (const double x : xs) ss += (x - ms.mean) * (x - ms.mean);
    ms.std = std::sqrt(ss / (n - 1));
  }
  return ms;
}

}  // namespace

std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // %.17g always round-trips; trim to the shortest digit count that does.
  for (int prec = 1; prec < 17; ++prec) {
    char probe[64];
    std::snprintf(probe, sizeof probe, "%.*g", prec, v);
    double back = 0;
    std::sscanf(probe, "%lf", &back);
    if (back == v) return probe;
  }
  return buf;
}

std::string format_run_csv(const RunRecord<double>& rec) {
  std::ostringstream os;
  os << "# algo=" << rec.algorithm << " seed=" << rec.seed << " config=" << rec.config_hash << "\n";
  os << "epoch,k,objective,gap,psnr,seconds\n";
  for (const auto& row : rec.rows) {
    os << row.epoch << ',' << row.k << ',' << csv_double(row.objective) << ',' << opt_cell(row.gap)
       << ',' << opt_cell(row.psnr) << ',' << csv_double(row.seconds) << "\n";
  }
  return os.str();
}

void write_run_csv(const std::filesystem::path& path, const RunRecord<double>& rec) {
  write_text(path, format_run_csv(rec));
}

std::string format_summary_csv(const std::vector<RunRecord<double>>& recs) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunRecord<double>*>> groups;
  for (const auto& rec : recs) {
    if (!groups.count(rec.algorithm)) order.push_back(rec.algorithm);
    groups[rec.algorithm].push_back(&rec);
  }

  std::ostringstream os;
  os << "algorithm,epoch,k,objective_mean,objective_std,gap_mean,gap_std,psnr_mean,psnr_std,"
        "seconds_mean,seconds_std\n";
  for (const auto& algo : order) {
    const auto& group = groups[algo];
    const size_t n_rows = group.front()->rows.size();
    for (const auto* rec : group)
      if (rec->rows.size() != n_rows)
        throw std::logic_error("summary: runs of '" + algo + "' disagree on checkpoint count");
    for (size_t r = 0; r < n_rows; ++r) {
      const auto& lead = group.front()->rows[r];
      std::vector<double> obj, gap, psnr, secs;
      bool all_gap = true, all_psnr = true;
      for (const auto* rec : group) {
        const auto& row = rec->rows[r];
        if (row.epoch != lead.epoch || row.k != lead.k)
          throw std::logic_error("summary: runs of '" + algo + "' disagree on checkpoint schedule");
        obj.push_back(row.objective);
        secs.push_back(row.seconds);
        if (row.gap) gap.push_back(*row.gap); else all_gap = false;
        if (row.psnr) psnr.push_back(*row.psnr); else all_psnr = false;
      }
      const auto o = aggregate(obj);
      const auto s = aggregate(secs);
      os << algo << ',' << lead.epoch << ',' << lead.k << ',' << csv_double(o.mean) << ','
         << csv_double(o.std) << ',';
      if (all_gap) {
        const auto g = aggregate(gap);
        os << csv_double(g.mean) << ',' << csv_double(g.std) << ',';
      } else {
        os << ",,";
      }
      if (all_psnr) {
        const auto p = aggregate(psnr);
        os << csv_double(p.mean) << ',' << csv_double(p.std) << ',';
      } else {
        os << ",,";
      }
      os << csv_double(s.mean) << ',' << csv_double(s.std) << "\n";
    }
  }
  return os.str();
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<RunRecord<double>>& recs) {
  write_text(path, format_summary_csv(recs));
}

}  // namespace tos
