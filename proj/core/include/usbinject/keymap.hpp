#pragma once

// HID boot-protocol keyboard reports. Only the keys needed for typed payloads:
// letters, digits, Enter, space, a little punctuation, Shift and GUI.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace usbinject {

using BootReport = std::array<std::uint8_t, 8>;  // modifiers, reserved, keys[6]

inline constexpr std::size_t kRolloverLimit = 6;
inline constexpr std::uint8_t kModLeftShift = 0x02;
inline constexpr std::uint8_t kModLeftGui = 0x08;

/// Throws UsbError(RolloverExceeded) for more than six keys.
BootReport make_report(std::uint8_t modifiers, std::span<const std::uint8_t> keys);

/// One press report and one all-zero release report per character. "<GUI+r>"
/// is a chord token. Throws UsbError(SchemaViolation) for unmapped characters.
std::vector<BootReport> reports_for_text(std::string_view text);

/// Host-side decoding: emits text for keys that are newly pressed relative to
/// the previous report.
class KeystrokeDecoder {
 public:
  std::string feed(const BootReport& report);

 private:
  BootReport previous_{};
};

}  // namespace usbinject
