#pragma once

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vawi/admm.hpp"
#include "vawi/grid.hpp"
#include "vawi/scenario.hpp"

namespace vawi {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are unsupported");

namespace fs = std::filesystem;
using nlohmann::json;

// write to a sibling temp file, then rename into place
inline void atomic_write(const fs::path& path,
                         const std::function<void(std::ostream&)>& writer) {
  fs::path tmp = path;
  tmp += ".tmp";
  try {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    writer(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  } catch (...) {
    std::error_code ignore;
    fs::remove(tmp, ignore);
    throw;
  }
  fs::rename(tmp, path);
}

/// ---- VAFLD/1: single-line JSON header + nx*nz float64, row-major, z fastest

inline void write_model_vafld(const fs::path& path, const RealField& f,
                              const std::string& quantity, const std::string& units) {
  const Grid2D& g = f.grid;
  json h = {{"format", "VAFLD/1"}, {"nx", g.nx},     {"nz", g.nz},
            {"dx", g.dx},          {"dz", g.dz},     {"npml", g.npml},
            {"x0", g.x0},          {"z0", g.z0},     {"quantity", quantity},
            {"units", units}};
  atomic_write(path, [&](std::ostream& out) {
    out << h.dump() << '\n';
    out.write(reinterpret_cast<const char*>(f.data.data()),
              static_cast<std::streamsize>(sizeof(double)) * g.n());
  });
}

struct ModelFile {
  RealField field;
  std::string quantity, units;
};

inline ModelFile read_model_vafld(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
  json h = json::parse(line, nullptr, false);
  if (h.is_discarded() || h.value("format", "") != "VAFLD/1")
    throw std::runtime_error(path.string() + ": not a VAFLD/1 file");
  Grid2D g = make_grid(h.at("nx").get<int>(), h.at("nz").get<int>(),
                       h.at("dx").get<double>(), h.at("dz").get<double>(),
                       h.at("npml").get<int>(), h.value("x0", 0.0), h.value("z0", 0.0));
  ModelFile mf{RealField(g), h.value("quantity", ""), h.value("units", "")};
  std::streamsize bytes = static_cast<std::streamsize>(sizeof(double)) * g.n();
  in.read(reinterpret_cast<char*>(mf.field.data.data()), bytes);
  if (in.gcount() != bytes)
    throw std::runtime_error(path.string() + ": truncated payload, expected " +
                             std::to_string(bytes) + " bytes");
  if (in.get() != std::char_traits<char>::eof())
    throw std::runtime_error(path.string() + ": trailing bytes after payload");
  return mf;
}

/// ---- VDATA/1: single-line JSON header + complex values as (re, im) float64
// pairs, ordered source-major, then frequency, then receiver

inline void write_survey_vdata(const fs::path& path, const SurveyData& survey) {
  validate_survey(survey);
  json h;
  h["format"] = "VDATA/1";
  h["sources"] = json::array();
  for (const auto& p : survey.acq.sources) h["sources"].push_back({p.x, p.z});
  h["receivers"] = json::array();
  for (const auto& p : survey.acq.receivers) h["receivers"].push_back({p.x, p.z});
  h["frequencies"] = survey.frequencies_hz;
  atomic_write(path, [&](std::ostream& out) {
    out << h.dump() << '\n';
    for (size_t s = 0; s < survey.acq.sources.size(); ++s)
      for (size_t f = 0; f < survey.frequencies_hz.size(); ++f)
        for (size_t r = 0; r < survey.acq.receivers.size(); ++r) {
          double pair[2] = {survey.data[f](r, s).real(), survey.data[f](r, s).imag()};
          out.write(reinterpret_cast<const char*>(pair), sizeof pair);
        }
  });
}

inline SurveyData read_survey_vdata(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
  json h = json::parse(line, nullptr, false);
  if (h.is_discarded() || h.value("format", "") != "VDATA/1")
    throw std::runtime_error(path.string() + ": not a VDATA/1 file");
  SurveyData survey;
  for (const auto& p : h.at("sources"))
    survey.acq.sources.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (const auto& p : h.at("receivers"))
    survey.acq.receivers.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  survey.frequencies_hz = h.at("frequencies").get<std::vector<double>>();
  const size_t ns = survey.acq.sources.size(), nf = survey.frequencies_hz.size(),
               nr = survey.acq.receivers.size();
  if (ns == 0 || nf == 0 || nr == 0)
    throw std::runtime_error(path.string() + ": empty acquisition or frequency list");
  survey.data.assign(nf, Eigen::MatrixXcd(nr, ns));
  for (size_t s = 0; s < ns; ++s)
    for (size_t f = 0; f < nf; ++f)
      for (size_t r = 0; r < nr; ++r) {
        double pair[2];
        in.read(reinterpret_cast<char*>(pair), sizeof pair);
        if (in.gcount() != sizeof pair)
          throw std::runtime_error(path.string() + ": truncated payload, expected " +
                                   std::to_string(16 * ns * nf * nr) + " payload bytes");
        survey.data[f](r, s) = cplx(pair[0], pair[1]);
      }
  if (in.get() != std::char_traits<char>::eof())
    throw std::runtime_error(path.string() + ": trailing bytes after payload");
  return survey;
}

// ---- CSV and JSON side files

namespace detail {
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline void write_history_csv(const fs::path& path, const std::vector<HistoryRow>& rows) {
  atomic_write(path, [&](std::ostream& out) {
    out << "k,batch,sum_src_residual_sq,sum_data_residual_sq,tv_m,tv_alpha\n";
    for (const auto& r : rows)
      out << r.k << ',' << r.batch << ',' << detail::num(r.sum_src_residual_sq) << ','
          << detail::num(r.sum_data_residual_sq) << ',' << detail::num(r.tv_m) << ','
          << detail::num(r.tv_alpha) << '\n';
  });
}

inline void write_scan_csv(const fs::path& path, const ScanResult& sc) {
  atomic_write(path, [&](std::ostream& out) {
    out << "a,b,fwi,wri\n";
    for (size_t ia = 0; ia < sc.a_values.size(); ++ia)
      for (size_t ib = 0; ib < sc.b_values.size(); ++ib)
        out << detail::num(sc.a_values[ia]) << ',' << detail::num(sc.b_values[ib]) << ','
            << detail::num(sc.fwi(ia, ib)) << ',' << detail::num(sc.wri(ia, ib)) << '\n';
  });
}

// one column of reduced time, then one column per receiver; metadata goes to
// a JSON sidecar next to the CSV
inline void write_traces_csv(const fs::path& path, const SeismogramResult& r) {
  atomic_write(path, [&](std::ostream& out) {
    out << "t";
    for (Eigen::Index i = 0; i < r.traces.rows(); ++i) out << ",trace" << i;
    out << '\n';
    for (Eigen::Index k = 0; k < r.traces.cols(); ++k) {
      out << detail::num(k * r.dt);
      for (Eigen::Index i = 0; i < r.traces.rows(); ++i)
        out << ',' << detail::num(r.traces(i, k));
      out << '\n';
    }
  });
  json meta = {{"dt", r.dt},
               {"t0", 0.0},
               {"reduction_velocity", r.v_reduction},
               {"offsets", r.offsets}};
  fs::path side = path;
  side += ".json";
  atomic_write(side, [&](std::ostream& out) { out << meta.dump(2) << '\n'; });
}

inline void write_acquisition_json(const fs::path& path, const Acquisition& acq) {
  json j;
  j["sources"] = json::array();
  for (const auto& p : acq.sources) j["sources"].push_back({p.x, p.z});
  j["receivers"] = json::array();
  for (const auto& p : acq.receivers) j["receivers"].push_back({p.x, p.z});
  atomic_write(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

inline Acquisition read_acquisition_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j = json::parse(in);
  Acquisition acq;
  for (const auto& p : j.at("sources"))
    acq.sources.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (const auto& p : j.at("receivers"))
    acq.receivers.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return acq;
}

inline void write_frequencies_json(const fs::path& path, const std::vector<double>& f) {
  json j = {{"frequencies_hz", f}};
  atomic_write(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

inline std::vector<double> read_frequencies_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j = json::parse(in);
  return j.at("frequencies_hz").get<std::vector<double>>();
}

inline void write_run_summary_json(const fs::path& path, const InversionResult& res) {
  json batches = json::array();
  for (const auto& r : res.reports)
    batches.push_back({{"batch", r.batch},
                       {"iterations", r.iterations},
                       {"hit_thresholds", r.hit_thresholds},
                       {"final_src_residual_sq", r.final_src_residual_sq},
                       {"final_data_residual_sq", r.final_data_residual_sq},
                       {"gamma", r.gamma},
                       {"threshold_m", r.threshold_m},
                       {"threshold_alpha", r.threshold_alpha}});
  bool all_hit = !res.reports.empty();
  for (const auto& r : res.reports) all_hit = all_hit && r.hit_thresholds;
  json j = {{"batches", batches},
            {"stopped_by", all_hit ? "residual_thresholds" : "max_iterations"}};
  atomic_write(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

}  // namespace vawi
