#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "usbinject/packet.hpp"
#include "usbinject/sim.hpp"

namespace usbinject {

enum class DeviceClass : std::uint8_t { HidKeyboard, HidMouse, MassStorage, SerialComm, Hub };

std::string_view device_class_name(DeviceClass cls);
std::optional<DeviceClass> parse_device_class(std::string_view text);

enum class TransferDir : std::uint8_t { In, Out };

struct EndpointInfo {
  std::uint8_t number = 1;
  TransferDir dir = TransferDir::In;
  EndpointType type = EndpointType::Interrupt;
  SimTime poll_interval{0};  // interrupt endpoints only
  bool operator==(const EndpointInfo&) const = default;
};

/// Self-reported and never authenticated.
struct DeviceDescriptor {
  std::uint16_t vendor_id = 0;
  std::uint16_t product_id = 0;
  std::uint16_t bcd_device = 0;
  DeviceClass device_class = DeviceClass::HidKeyboard;
  std::vector<EndpointInfo> endpoints;
  Speed speed = Speed::Full;
  bool operator==(const DeviceDescriptor&) const = default;
};

namespace descriptors {

// Dell QuietKey, low speed, 10 ms interrupt poll.
DeviceDescriptor dell_keyboard();
// Corsair gaming keyboard, full speed, 1 kHz poll.
DeviceDescriptor corsair_keyboard();
// SanDisk flash drive, high speed bulk-only transport.
DeviceDescriptor sandisk_flash();
DeviceDescriptor generic_mouse(Speed speed);
DeviceDescriptor serial_comm();
DeviceDescriptor generic_hub(Speed speed);

}  // namespace descriptors

}  // namespace usbinject
