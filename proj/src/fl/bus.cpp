// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/fl/bus.hpp"

#include <cstring>

#include "hefl/error.hpp"

namespace hefl::fl {

std::string_view kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::kOffloadData: return "offload_data";
    case MessageKind::kDistributeGlobal: return "distribute_global";
    case MessageKind::kSubmitLocalParams: return "submit_local_params";
    case MessageKind::kRefreshRequest: return "refresh_request";
    case MessageKind::kRefreshResponse: return "refresh_response";
    case MessageKind::kGlobalUpdate: return "global_update";
  }
  return "unknown";
}

std::string Endpoint::name() const { return role == Role::kServer ? "server" : "vu" + std::to_string(id); }

std::uint64_t Traffic::total_bytes() const {
  std::uint64_t t = 0;
  for (auto b : bytes) t += b;
  return t;
}

Traffic Traffic::operator-(const Traffic& earlier) const {
  Traffic d = *this;
  for (std::size_t k = 0; k < kMessageKinds; ++k) {
    d.bytes[k] -= earlier.bytes[k];
    d.messages[k] -= earlier.messages[k];
  }
  for (std::size_t r = 0; r < d.rsu_bytes.size() && r < earlier.rsu_bytes.size(); ++r) d.rsu_bytes[r] -= earlier.rsu_bytes[r];
  return d;
}

Bus::Bus(std::size_t vus, std::size_t rsus) : vus_(vus), rsus_(rsus) {
  if (vus == 0) throw ConfigError("bus: need at least one VU");
  if (rsus == 0) throw ConfigError("bus: need at least one RSU");
  traffic_.rsu_bytes.assign(rsus, 0);
}

void Bus::send(Message m) {
  const bool vu_to_server = m.sender.role == Endpoint::Role::kVu && m.receiver.role == Endpoint::Role::kServer;
  const bool server_to_vu = m.sender.role == Endpoint::Role::kServer && m.receiver.role == Endpoint::Role::kVu;
  if (!vu_to_server && !server_to_vu) throw ProtocolError("bus: only VU <-> server traffic is routed");
  const std::size_t vu = vu_to_server ? m.sender.id : m.receiver.id;
  if (vu >= vus_) throw ProtocolError("bus: unknown " + Endpoint::vu(vu).name());
  m.rsu = rsu_of(vu);
  {
    std::lock_guard lock(mu_);
    const auto k = static_cast<std::size_t>(m.kind);
    traffic_.bytes[k] += m.payload.size();
    traffic_.messages[k] += 1;
    traffic_.rsu_bytes[*m.rsu] += m.payload.size();
    if (observer_) observer_(m);
    queues_[m.receiver].push_back(std::move(m));
  }
  cv_.notify_all();
}

std::optional<Message> Bus::try_receive(Endpoint who, MessageKind kind) {
  std::lock_guard lock(mu_);
  auto& q = queues_[who];
  for (auto it = q.begin(); it != q.end(); ++it) {
    if (it->kind == kind) {
      Message m = std::move(*it);
      q.erase(it);
      return m;
    }
  }
  return std::nullopt;
}

Message Bus::receive(Endpoint who, MessageKind kind) {
  std::unique_lock lock(mu_);
  for (;;) {
    auto& q = queues_[who];
    for (auto it = q.begin(); it != q.end(); ++it) {
      if (it->kind == kind) {
        Message m = std::move(*it);
        q.erase(it);
        return m;
      }
    }
    cv_.wait(lock);
  }
}

Traffic Bus::traffic() const {
  std::lock_guard lock(mu_);
  return traffic_;
}

// ---- ByteScanner ------------------------------------------------------------

namespace {

constexpr std::size_t kFilterBits = std::size_t{1} << 24;

std::uint64_t load64(const std::uint8_t* p) {
  std::uint64_t v;
  std::memcpy(&v, p, 8);
  return v;
}

std::size_t filter_slot(std::uint64_t key) { return static_cast<std::size_t>((key * 0x9E3779B97F4A7C15ULL) >> 40); }

}  // namespace

void ByteScanner::add(std::span<const std::uint8_t> pattern) {
  if (pattern.size() != kWindow) throw Error("ByteScanner: patterns are 16 bytes");
  if (filter_.empty()) filter_.assign(kFilterBits / 64, 0);
  std::array<std::uint8_t, kWindow> p;
  std::memcpy(p.data(), pattern.data(), kWindow);
  const auto idx = static_cast<std::uint32_t>(patterns_.size());
  patterns_.push_back(p);
  for (std::uint8_t k = 0; k <= kWindow - 8; ++k) {
    const std::uint64_t key = load64(p.data() + k);
    index_.emplace(key, std::make_pair(idx, k));
    const std::size_t slot = filter_slot(key);
    filter_[slot / 64] |= std::uint64_t{1} << (slot % 64);
  }
}

bool ByteScanner::contains_any(std::span<const std::uint8_t> payload) const {
  if (patterns_.empty() || payload.size() < kWindow) return false;
  const std::uint8_t* base = payload.data();
  for (std::size_t a = 0; a + 8 <= payload.size(); a += 8) {
    const std::uint64_t key = load64(base + a);
    const std::size_t slot = filter_slot(key);
    if ((filter_[slot / 64] >> (slot % 64) & 1) == 0) continue;
    const auto [lo, hi] = index_.equal_range(key);
    for (auto it = lo; it != hi; ++it) {
      const auto [i, k] = it->second;
      if (a < k) continue;
      const std::size_t o = a - k;
      if (o + kWindow <= payload.size() && std::memcmp(base + o, patterns_[i].data(), kWindow) == 0) return true;
    }
  }
  return false;
}

}  // namespace hefl::fl
