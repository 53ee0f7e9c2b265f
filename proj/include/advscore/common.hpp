#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace advscore {

/// Caller violated a precondition (bad shape, bad argument, unknown flag).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data could not be parsed or failed validation.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class App { Cloud, Bank };

namespace cloud {
enum Action : int { kAsk = 0, kDeploy = 1, kWait = 2 };
enum Module : int { kAskFactor = 0, kDeployFactor, kUtilization, kAskFrequency, kDeployFrequency };
inline constexpr int kActionCount = 3;
inline constexpr int kModuleCount = 5;
}  // namespace cloud

namespace bank {
enum Action : int { kRepay = 0, kConsume = 1, kInOut = 2, kInactive = 3 };
enum Module : int { kRepayFactor = 0, kConsumeFactor, kTradeOff, kWaitFactor };
inline constexpr int kActionCount = 4;
inline constexpr int kModuleCount = 4;
/// Extra continuous slot carrying the consume half of an in-out action.
inline constexpr int kInOutConsumeSlot = 4;
}  // namespace bank

inline constexpr int module_count(App app) {
  return app == App::Cloud ? cloud::kModuleCount : bank::kModuleCount;
}

inline constexpr int action_count(App app) {
  return app == App::Cloud ? cloud::kActionCount : bank::kActionCount;
}

/// Width of the continuous head and of the action encoding: one slot per
/// discrete action, plus the in-out consume slot for bank.
inline constexpr int slot_count(App app) {
  return app == App::Cloud ? cloud::kActionCount : bank::kActionCount + 1;
}

/// Actions that carry no continuous magnitude.
inline constexpr bool is_idle_action(App app, int action) {
  return app == App::Cloud ? action == cloud::kWait : action == bank::kInactive;
}

inline std::string_view app_name(App app) { return app == App::Cloud ? "cloud" : "bank"; }

inline App parse_app(std::string_view name) {
  if (name == "cloud") return App::Cloud;
  if (name == "bank") return App::Bank;
  throw DataError("unknown app '" + std::string(name) + "' (expected cloud or bank)");
}

inline std::string_view action_name(App app, int action) {
  static constexpr std::string_view kCloud[] = {"ask", "deploy", "wait"};
  static constexpr std::string_view kBank[] = {"repay", "consume", "in-out", "inactive"};
  if (action < 0 || action >= action_count(app)) {
    throw UsageError("action code " + std::to_string(action) + " is out of range for " +
                     std::string(app_name(app)));
  }
  return app == App::Cloud ? kCloud[action] : kBank[action];
}

inline int parse_action(App app, std::string_view name) {
  for (int a = 0; a < action_count(app); ++a) {
    if (action_name(app, a) == name) return a;
  }
  throw DataError("unknown " + std::string(app_name(app)) + " action '" + std::string(name) + "'");
}

inline std::string_view module_name(App app, int module) {
  static constexpr std::string_view kCloud[] = {"ask", "dep", "uti", "af", "df"};
  static constexpr std::string_view kBank[] = {"rep", "con", "tra", "wai"};
  if (module < 0 || module >= module_count(app)) {
    throw UsageError("module id " + std::to_string(module) + " is out of range for " +
                     std::string(app_name(app)));
  }
  return app == App::Cloud ? kCloud[module] : kBank[module];
}

}  // namespace advscore
