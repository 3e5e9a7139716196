#include "usbinject/descriptor.hpp"

namespace usbinject {

using namespace std::chrono_literals;

std::string_view device_class_name(DeviceClass cls) {
  switch (cls) {
    case DeviceClass::HidKeyboard: return "HidKeyboard";
    case DeviceClass::HidMouse: return "HidMouse";
    case DeviceClass::MassStorage: return "MassStorage";
    case DeviceClass::SerialComm: return "SerialComm";
    case DeviceClass::Hub: return "Hub";
  }
  return "?";
}

std::optional<DeviceClass> parse_device_class(std::string_view text) {
  for (DeviceClass c : {DeviceClass::HidKeyboard, DeviceClass::HidMouse, DeviceClass::MassStorage,
                        DeviceClass::SerialComm, DeviceClass::Hub}) {
    if (device_class_name(c) == text) return c;
  }
  return std::nullopt;
}

namespace descriptors {

DeviceDescriptor dell_keyboard() {
  return {0x413C, 0x2106, 0x0101, DeviceClass::HidKeyboard,
          {{1, TransferDir::In, EndpointType::Interrupt, 10ms}}, Speed::Low};
}

DeviceDescriptor corsair_keyboard() {
  return {0x1B1C, 0x1BA4, 0x0101, DeviceClass::HidKeyboard,
          {{1, TransferDir::In, EndpointType::Interrupt, 1ms}}, Speed::Full};
}

DeviceDescriptor sandisk_flash() {
  return {0x0781,
          0x5567,
          0x0100,
          DeviceClass::MassStorage,
          {{1, TransferDir::In, EndpointType::Bulk, 0ms}, {2, TransferDir::Out, EndpointType::Bulk, 0ms}},
          Speed::High};
}

DeviceDescriptor generic_mouse(Speed speed) {
  return {0x046D, 0xC077, 0x7200, DeviceClass::HidMouse,
          {{1, TransferDir::In, EndpointType::Interrupt, 10ms}}, speed};
}

DeviceDescriptor serial_comm() {
  return {0x0403, 0x6014, 0x0900, DeviceClass::SerialComm,
          {{1, TransferDir::In, EndpointType::Interrupt, 8ms}}, Speed::High};
}

DeviceDescriptor generic_hub(Speed speed) {
  return {0x05E3, speed == Speed::High ? std::uint16_t{0x0610} : std::uint16_t{0x0608}, 0x6070,
          DeviceClass::Hub, {}, speed};
}

}  // namespace descriptors
}  // namespace usbinject
