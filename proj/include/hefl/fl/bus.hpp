// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hefl/bytes.hpp"

namespace hefl::fl {

enum class MessageKind : std::uint8_t {
  kOffloadData,
  kDistributeGlobal,
  kSubmitLocalParams,
  kRefreshRequest,
  kRefreshResponse,
  kGlobalUpdate,
};
inline constexpr std::size_t kMessageKinds = 6;

std::string_view kind_name(MessageKind k);

struct Endpoint {
  enum class Role : std::uint8_t { kVu, kServer };
  Role role = Role::kServer;
  std::size_t id = 0;

  static Endpoint vu(std::size_t n) { return {Role::kVu, n}; }
  static Endpoint server() { return {Role::kServer, 0}; }
  std::string name() const;

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

struct Message {
  MessageKind kind = MessageKind::kOffloadData;
  Endpoint sender;
  Endpoint receiver;
  Bytes payload;
  std::uint64_t round = 0;
  /// Stamped by the relaying RSU.
  std::optional<std::size_t> rsu;
};

struct Traffic {
  std::array<std::uint64_t, kMessageKinds> bytes{};
  std::array<std::uint64_t, kMessageKinds> messages{};
  std::vector<std::uint64_t> rsu_bytes;

  std::uint64_t total_bytes() const;
  Traffic operator-(const Traffic& earlier) const;
};

/// In-process, reliable, ordered message delivery. Every message between a VU and the server
/// passes through RSU (vu id mod M), which stamps it and counts its bytes; RSUs do nothing
/// else. Safe to use from several threads.
class Bus {
 public:
  Bus(std::size_t vus, std::size_t rsus);

  void send(Message m);
  /// Oldest queued message of `kind` for `who`, if any.
  std::optional<Message> try_receive(Endpoint who, MessageKind kind);
  /// Blocks until a message of `kind` for `who` arrives.
  Message receive(Endpoint who, MessageKind kind);

  /// Called with every message as it is delivered, before it is queued. Must be set before
  /// traffic starts.
  void set_observer(std::function<void(const Message&)> observer) { observer_ = std::move(observer); }

  Traffic traffic() const;
  std::size_t rsu_of(std::size_t vu) const { return vu % rsus_; }
  std::size_t vus() const { return vus_; }
  std::size_t rsus() const { return rsus_; }

 private:
  std::size_t vus_;
  std::size_t rsus_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<Endpoint, std::deque<Message>> queues_;
  Traffic traffic_;
  std::function<void(const Message&)> observer_;
};

/// Scans payloads for forbidden byte strings (secret-key material, raw feature vectors).
/// Patterns are 16 bytes; any occurrence at any byte offset is found.
class ByteScanner {
 public:
  static constexpr std::size_t kWindow = 16;

  void add(std::span<const std::uint8_t> pattern);
  bool contains_any(std::span<const std::uint8_t> payload) const;
  std::size_t size() const { return patterns_.size(); }

 private:
  // Every 8-byte substring of every pattern, keyed to candidate (pattern, offset) pairs. Any
  // 16-byte occurrence covers an 8-aligned 8-byte block of the payload, so only aligned
  // positions need probing.
  std::vector<std::array<std::uint8_t, kWindow>> patterns_;
  std::unordered_multimap<std::uint64_t, std::pair<std::uint32_t, std::uint8_t>> index_;
  std::vector<std::uint64_t> filter_;  // bitset over a hash of the 8-byte keys
};

}  // namespace hefl::fl
