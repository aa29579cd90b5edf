#include "ranids/messages.hpp"

#include "ranids/error.hpp"

namespace ranids {

using nlohmann::json;

namespace {

template <typename T>
T get_field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) fail(ErrorKind::Protocol, std::string("payload is missing '") + name + "'");
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw std::invalid_argument("not a boolean");
      return it->get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw std::invalid_argument("not an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned() && it->get<std::int64_t>() < 0) throw std::invalid_argument("negative");
        const auto v = it->get<std::uint64_t>();
        if (v > std::numeric_limits<T>::max()) throw std::invalid_argument("out of range");
        return static_cast<T>(v);
      } else {
        const auto v = it->get<std::int64_t>();
        if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) {
          throw std::invalid_argument("out of range");
        }
        return static_cast<T>(v);
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw std::invalid_argument("not a number");
      return it->get<T>();
    } else {
      return it->get<T>();
    }
  } catch (const std::exception& e) {
    fail(ErrorKind::Protocol, std::string("payload field '") + name + "': " + e.what());
  }
}

template <typename E>
E parse_enum(const json& j, const char* name, std::initializer_list<E> values) {
  const auto s = get_field<std::string>(j, name);
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  fail(ErrorKind::Protocol, std::string("payload field '") + name + "': unknown value '" + s + "'");
}

} // namespace

json to_json(const KpmSample& s) {
  return {{"timestamp_ms", s.timestamp_ms}, {"bs_id", s.bs_id},
          {"ue_id", s.ue_id},               {"cqi", s.cqi},
          {"dl_mcs", s.dl_mcs},             {"ul_mcs", s.ul_mcs},
          {"pusch_sinr_db", s.pusch_sinr_db}, {"pucch_sinr_db", s.pucch_sinr_db},
          {"dl_brate_bps", s.dl_brate_bps}, {"ul_brate_bps", s.ul_brate_bps},
          {"ul_pkts_ok", s.ul_pkts_ok},     {"ul_pkts_nok", s.ul_pkts_nok}};
}

KpmSample kpm_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::Protocol, "measurement payload is not an object");
  KpmSample s;
  s.timestamp_ms = get_field<std::int64_t>(j, "timestamp_ms");
  s.bs_id = get_field<std::uint16_t>(j, "bs_id");
  s.ue_id = get_field<std::uint16_t>(j, "ue_id");
  s.cqi = get_field<int>(j, "cqi");
  s.dl_mcs = get_field<int>(j, "dl_mcs");
  s.ul_mcs = get_field<int>(j, "ul_mcs");
  s.pusch_sinr_db = get_field<double>(j, "pusch_sinr_db");
  s.pucch_sinr_db = get_field<double>(j, "pucch_sinr_db");
  s.dl_brate_bps = get_field<double>(j, "dl_brate_bps");
  s.ul_brate_bps = get_field<double>(j, "ul_brate_bps");
  s.ul_pkts_ok = get_field<std::int64_t>(j, "ul_pkts_ok");
  s.ul_pkts_nok = get_field<std::int64_t>(j, "ul_pkts_nok");
  if (auto err = validate(s)) fail(ErrorKind::Protocol, "measurement payload: " + *err);
  return s;
}

std::string_view to_string(RrcState s) noexcept {
  return s == RrcState::Connected ? "connected" : "idle";
}

std::string_view to_string(UePolicy p) noexcept {
  switch (p) {
  case UePolicy::Forward: return "forward";
  case UePolicy::Prioritize: return "prioritize";
  case UePolicy::Drop: return "drop";
  }
  return "?";
}

std::string_view to_string(CommandAction a) noexcept {
  switch (a) {
  case CommandAction::Forward: return "forward";
  case CommandAction::Prioritize: return "prioritize";
  case CommandAction::Drop: return "drop";
  case CommandAction::RrcRelease: return "rrc_release";
  }
  return "?";
}

std::optional<CommandAction> parse_action(std::string_view s) noexcept {
  for (auto a : {CommandAction::Forward, CommandAction::Prioritize, CommandAction::Drop,
                 CommandAction::RrcRelease}) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

json to_json(const RicCommand& c) {
  return {{"ue_id", c.ue_id},
          {"action", std::string(to_string(c.action))},
          {"issued_at_us", c.issued_at_us},
          {"command_id", c.command_id},
          {"decision_ts_ms", c.decision_ts_ms}};
}

RicCommand command_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::Protocol, "command payload is not an object");
  RicCommand c;
  c.ue_id = get_field<std::uint16_t>(j, "ue_id");
  c.action = parse_enum(j, "action", {CommandAction::Forward, CommandAction::Prioritize,
                                      CommandAction::Drop, CommandAction::RrcRelease});
  c.issued_at_us = get_field<std::uint64_t>(j, "issued_at_us");
  c.command_id = get_field<std::uint64_t>(j, "command_id");
  c.decision_ts_ms = get_field<std::int64_t>(j, "decision_ts_ms");
  return c;
}

bus::Frame make_measurement_frame(const KpmSample& s, std::optional<TrafficClass> truth,
                                  std::uint64_t t_sent_us) {
  bus::Frame f;
  f.kind = bus::FrameKind::Measurement;
  f.topic = bus::topic_for("kpm", s.bs_id);
  f.t_sent_us = t_sent_us;
  f.payload = to_json(s);
  if (truth) f.payload["label"] = std::string(to_string(*truth));
  return f;
}

std::optional<TrafficClass> measurement_truth(const bus::Frame& f) {
  auto it = f.payload.find("label");
  if (it == f.payload.end() || !it->is_string()) return std::nullopt;
  return parse_traffic_class(it->get<std::string>());
}

bus::Frame make_command_frame(std::uint16_t bs_id, const RicCommand& c, std::uint64_t t_sent_us) {
  bus::Frame f;
  f.kind = bus::FrameKind::Command;
  f.topic = bus::topic_for("ctrl", bs_id);
  f.t_sent_us = t_sent_us;
  f.payload = to_json(c);
  return f;
}

json to_json(const CommandEvent& e) {
  json j = {{"bs_id", e.bs_id},
            {"ue_id", e.ue_id},
            {"command_id", e.command_id},
            {"action", std::string(to_string(e.action))},
            {"ok", e.ok},
            {"rrc_before", std::string(to_string(e.rrc_before))},
            {"rrc_after", std::string(to_string(e.rrc_after))},
            {"policy_before", std::string(to_string(e.policy_before))},
            {"policy_after", std::string(to_string(e.policy_after))},
            {"t_cmd_sent_us", e.t_cmd_sent_us},
            {"t_cmd_bus_in_us", e.t_cmd_bus_in_us},
            {"t_cmd_bus_out_us", e.t_cmd_bus_out_us},
            {"t_cmd_applied_us", e.t_cmd_applied_us},
            {"applied_at_ms", e.applied_at_ms}};
  if (!e.error.empty()) j["error"] = e.error;
  return j;
}

CommandEvent event_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::Protocol, "event payload is not an object");
  CommandEvent e;
  e.bs_id = get_field<std::uint16_t>(j, "bs_id");
  e.ue_id = get_field<std::uint16_t>(j, "ue_id");
  e.command_id = get_field<std::uint64_t>(j, "command_id");
  e.action = parse_enum(j, "action", {CommandAction::Forward, CommandAction::Prioritize,
                                      CommandAction::Drop, CommandAction::RrcRelease});
  e.ok = get_field<bool>(j, "ok");
  if (auto it = j.find("error"); it != j.end() && it->is_string()) e.error = it->get<std::string>();
  e.rrc_before = parse_enum(j, "rrc_before", {RrcState::Connected, RrcState::Idle});
  e.rrc_after = parse_enum(j, "rrc_after", {RrcState::Connected, RrcState::Idle});
  e.policy_before = parse_enum(j, "policy_before", {UePolicy::Forward, UePolicy::Prioritize, UePolicy::Drop});
  e.policy_after = parse_enum(j, "policy_after", {UePolicy::Forward, UePolicy::Prioritize, UePolicy::Drop});
  e.t_cmd_sent_us = get_field<std::uint64_t>(j, "t_cmd_sent_us");
  e.t_cmd_bus_in_us = get_field<std::uint64_t>(j, "t_cmd_bus_in_us");
  e.t_cmd_bus_out_us = get_field<std::uint64_t>(j, "t_cmd_bus_out_us");
  e.t_cmd_applied_us = get_field<std::uint64_t>(j, "t_cmd_applied_us");
  e.applied_at_ms = get_field<std::int64_t>(j, "applied_at_ms");
  return e;
}

bus::Frame make_event_frame(const CommandEvent& e, std::uint64_t t_sent_us) {
  bus::Frame f;
  f.kind = bus::FrameKind::Event;
  f.topic = bus::topic_for("event", e.bs_id);
  f.t_sent_us = t_sent_us;
  f.payload = to_json(e);
  return f;
}

} // namespace ranids
