#pragma once

#include "ranids/databus.hpp"
#include "ranids/kpm.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace ranids {

// Payload codecs for the frames exchanged between the base station, the
// broker and the xApp.

nlohmann::json to_json(const KpmSample& s);
// Throws Error(Protocol) if a field is missing, mistyped or out of range.
KpmSample kpm_from_json(const nlohmann::json& j);

enum class RrcState : std::uint8_t { Connected, Idle };
enum class UePolicy : std::uint8_t { Forward, Prioritize, Drop };
enum class CommandAction : std::uint8_t { Forward, Prioritize, Drop, RrcRelease };

std::string_view to_string(RrcState s) noexcept;
std::string_view to_string(UePolicy p) noexcept;
std::string_view to_string(CommandAction a) noexcept;
std::optional<CommandAction> parse_action(std::string_view s) noexcept;

struct RicCommand {
  std::uint16_t ue_id = 0;
  CommandAction action = CommandAction::Forward;
  std::uint64_t issued_at_us = 0;
  std::uint64_t command_id = 0;
  std::int64_t decision_ts_ms = 0; // measurement interval that triggered it

  bool operator==(const RicCommand&) const = default;
};

nlohmann::json to_json(const RicCommand& c);
RicCommand command_from_json(const nlohmann::json& j);

// Measurement frame: KPM fields plus an optional ground-truth label that only
// the simulator knows. Classifiers never read it; loggers and the dataset
// collector do.
bus::Frame make_measurement_frame(const KpmSample& s, std::optional<TrafficClass> truth,
                                  std::uint64_t t_sent_us);
std::optional<TrafficClass> measurement_truth(const bus::Frame& f);

bus::Frame make_command_frame(std::uint16_t bs_id, const RicCommand& c, std::uint64_t t_sent_us);

// State-transition record published on `event.<bs_id>` after a command.
struct CommandEvent {
  std::uint16_t bs_id = 0;
  std::uint16_t ue_id = 0;
  std::uint64_t command_id = 0;
  CommandAction action = CommandAction::Forward;
  bool ok = true;
  std::string error;
  RrcState rrc_before = RrcState::Connected;
  RrcState rrc_after = RrcState::Connected;
  UePolicy policy_before = UePolicy::Forward;
  UePolicy policy_after = UePolicy::Forward;
  // Command leg timestamps, copied from the command frame as received.
  std::uint64_t t_cmd_sent_us = 0;
  std::uint64_t t_cmd_bus_in_us = 0;
  std::uint64_t t_cmd_bus_out_us = 0;
  std::uint64_t t_cmd_applied_us = 0;
  std::int64_t applied_at_ms = 0;

  bool operator==(const CommandEvent&) const = default;
};

nlohmann::json to_json(const CommandEvent& e);
CommandEvent event_from_json(const nlohmann::json& j);
bus::Frame make_event_frame(const CommandEvent& e, std::uint64_t t_sent_us);

} // namespace ranids
