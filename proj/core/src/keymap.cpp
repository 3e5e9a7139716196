#include "usbinject/keymap.hpp"

#include <algorithm>
#include <optional>

#include "usbinject/error.hpp"

namespace usbinject {
namespace {

struct KeyFor {
  std::uint8_t usage;
  bool shift;
};

std::optional<KeyFor> key_for(char c) {
  if (c >= 'a' && c <= 'z') return KeyFor{static_cast<std::uint8_t>(0x04 + (c - 'a')), false};
  if (c >= 'A' && c <= 'Z') return KeyFor{static_cast<std::uint8_t>(0x04 + (c - 'A')), true};
  if (c >= '1' && c <= '9') return KeyFor{static_cast<std::uint8_t>(0x1E + (c - '1')), false};
  switch (c) {
    case '0': return KeyFor{0x27, false};
    case '\n': return KeyFor{0x28, false};
    case '\t': return KeyFor{0x2B, false};
    case ' ': return KeyFor{0x2C, false};
    case '-': return KeyFor{0x2D, false};
    case '=': return KeyFor{0x2E, false};
    case '\\': return KeyFor{0x31, false};
    case ';': return KeyFor{0x33, false};
    case ':': return KeyFor{0x33, true};
    case ',': return KeyFor{0x36, false};
    case '.': return KeyFor{0x37, false};
    case '/': return KeyFor{0x38, false};
    default: return std::nullopt;
  }
}

std::string text_for(std::uint8_t usage, std::uint8_t modifiers) {
  const bool shift = (modifiers & (kModLeftShift | 0x20)) != 0;
  char c = 0;
  if (usage >= 0x04 && usage <= 0x1D) {
    c = static_cast<char>((shift ? 'A' : 'a') + (usage - 0x04));
  } else if (usage >= 0x1E && usage <= 0x26) {
    c = static_cast<char>('1' + (usage - 0x1E));
  } else {
    switch (usage) {
      case 0x27: c = '0'; break;
      case 0x28: c = '\n'; break;
      case 0x2B: c = '\t'; break;
      case 0x2C: c = ' '; break;
      case 0x2D: c = '-'; break;
      case 0x2E: c = '='; break;
      case 0x31: c = '\\'; break;
      case 0x33: c = shift ? ':' : ';'; break;
      case 0x36: c = ','; break;
      case 0x37: c = '.'; break;
      case 0x38: c = '/'; break;
      default: return "<" + std::to_string(usage) + ">";
    }
  }
  if (modifiers & (kModLeftGui | 0x80)) return std::string("<GUI+") + c + ">";
  return std::string(1, c);
}

}  // namespace

BootReport make_report(std::uint8_t modifiers, std::span<const std::uint8_t> keys) {
  if (keys.size() > kRolloverLimit) {
    throw UsbError(Errc::RolloverExceeded, std::to_string(keys.size()) + " keys held");
  }
  BootReport r{};
  r[0] = modifiers;
  std::copy(keys.begin(), keys.end(), r.begin() + 2);
  return r;
}

std::vector<BootReport> reports_for_text(std::string_view text) {
  static constexpr std::string_view kGuiChord = "<GUI+";
  std::vector<BootReport> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    std::uint8_t modifiers = 0;
    char c = text[i];
    if (text.substr(i, kGuiChord.size()) == kGuiChord && i + kGuiChord.size() + 1 < text.size() &&
        text[i + kGuiChord.size() + 1] == '>') {
      modifiers = kModLeftGui;
      c = text[i + kGuiChord.size()];
      i += kGuiChord.size() + 1;
    }
    auto key = key_for(c);
    if (!key) {
      throw UsbError(Errc::SchemaViolation,
                     "no key mapping for character code " + std::to_string(static_cast<int>(c)));
    }
    if (key->shift) modifiers |= kModLeftShift;
    const std::uint8_t usage = key->usage;
    out.push_back(make_report(modifiers, std::span(&usage, 1)));
    out.push_back(BootReport{});
  }
  return out;
}

std::string KeystrokeDecoder::feed(const BootReport& report) {
  std::string out;
  for (std::size_t i = 2; i < report.size(); ++i) {
    const std::uint8_t usage = report[i];
    if (usage == 0) continue;
    if (std::find(previous_.begin() + 2, previous_.end(), usage) != previous_.end()) continue;
    out += text_for(usage, report[0]);
  }
  previous_ = report;
  return out;
}

}  // namespace usbinject
