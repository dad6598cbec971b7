#include "uavsim/report.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <system_error>

#include "uavsim/config.hpp"
#include "uavsim/text.hpp"

namespace uavsim {

namespace {

void header(std::ostream& out, std::string_view table, std::string_view tool_version, const EpisodeResult& r) {
  out << "# uavsim " << tool_version << ' ' << table << " v" << kCsvSchemaVersion << " seed=" << r.seed
      << " policy=" << r.policy << " gain_threshold_db=" << format_double(r.gain_threshold_db) << '\n';
}

}  // namespace

void write_episode_csv(std::ostream& out, const EpisodeResult& r, std::string_view tool_version) {
  header(out, "episode", tool_version, r);
  const std::size_t n_uavs = r.velocity_trace.empty() ? 0 : r.velocity_trace.front().size();
  out << "step,f_events,g_events,f_packets,g_packets,generated,delivered,lost_overflow,lost_comm";
  for (std::size_t u = 0; u < n_uavs; ++u) out << ",uav" << u << "_sensor,uav" << u << "_velocity";
  out << '\n';
  for (std::size_t t = 0; t < r.step_losses.size(); ++t) {
    const StepLoss& l = r.step_losses[t];
    const PacketLedger& g = r.ledger_trace[t];
    out << t << ',' << l.f_events << ',' << l.g_events << ',' << l.f_packets << ',' << l.g_packets << ','
        << g.generated << ',' << g.delivered << ',' << g.lost_overflow << ',' << g.lost_comm;
    for (std::size_t u = 0; u < n_uavs; ++u) {
      const DecisionRecord& d = r.decisions_log[t * n_uavs + u];
      out << ',' << d.sensor_id << ',' << format_double(r.velocity_trace[t][u]);
    }
    out << '\n';
  }
}

void write_sensor_csv(std::ostream& out, const EpisodeResult& r, std::string_view tool_version) {
  header(out, "sensors", tool_version, r);
  out << "sensor,lost_packets\n";
  for (std::size_t j = 0; j < r.per_sensor_loss.size(); ++j) out << j << ',' << r.per_sensor_loss[j] << '\n';
}

void write_trace_jsonl(std::ostream& out, const EpisodeResult& r) {
  const std::size_t n_uavs = r.velocity_trace.empty() ? 0 : r.velocity_trace.front().size();
  for (std::size_t i = 0; i < r.decisions_log.size(); ++i) {
    const DecisionRecord& d = r.decisions_log[i];
    const StepLoss& l = r.step_losses[static_cast<std::size_t>(d.step)];
    nlohmann::ordered_json j;
    j["step"] = d.step;
    j["uav"] = d.uav_id;
    j["phase"] = d.phase_path;
    j["decision"] = {{"sensor", d.sensor_id}, {"velocity", d.velocity}, {"source", d.source}, {"pruned", d.pruned_ids}};
    j["contact"] = {{"executed", d.executed},
                    {"attempted", d.attempted},
                    {"delivered", d.delivered},
                    {"comm_failed", d.comm_failed}};
    // Step-level losses are attached to the last UAV of the step.
    if (n_uavs != 0 && (i + 1) % n_uavs == 0) {
      j["losses"] = {{"f_events", l.f_events},
                     {"g_events", l.g_events},
                     {"f_packets", l.f_packets},
                     {"g_packets", l.g_packets}};
    }
    if (!d.note.empty()) j["note"] = d.note;
    out << j.dump() << '\n';
  }
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f << content;
    f.flush();
    if (!f) {
      std::error_code ignored;
      fs::remove(tmp, ignored);
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

}  // namespace uavsim
