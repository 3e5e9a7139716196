#include <benchmark/benchmark.h>

#include <random>

#include "usbinject/packet.hpp"

using namespace usbinject;

namespace {

std::vector<std::uint8_t> payload(std::size_t n) {
  std::mt19937 rng(1);
  std::vector<std::uint8_t> p(n);
  for (auto& b : p) b = static_cast<std::uint8_t>(rng());
  return p;
}

void BM_Crc5Token(benchmark::State& state) {
  std::uint16_t v = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(crc5(v));
    v = (v + 1) & 0x7FF;
  }
}
BENCHMARK(BM_Crc5Token);

void BM_Crc16(benchmark::State& state) {
  const auto p = payload(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(crc16(p));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_Crc16)->Arg(8)->Arg(64)->Arg(512)->Arg(1024);

void BM_EncodeData(benchmark::State& state) {
  const PacketBody body = DataPacket::make(PidKind::Data1, payload(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(encode(body));
}
BENCHMARK(BM_EncodeData)->Arg(8)->Arg(512);

void BM_DecodeData(benchmark::State& state) {
  const auto bytes = encode(DataPacket::make(PidKind::Data1, payload(static_cast<std::size_t>(state.range(0)))));
  for (auto _ : state) benchmark::DoNotOptimize(decode(bytes));
}
BENCHMARK(BM_DecodeData)->Arg(8)->Arg(512);

void BM_DecodeToken(benchmark::State& state) {
  const auto bytes = encode(TokenPacket::make(PidKind::In, 3, 1));
  for (auto _ : state) benchmark::DoNotOptimize(decode(bytes));
}
BENCHMARK(BM_DecodeToken);

}  // namespace
