// Copyright 2026 The direct-store Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <vector>

#include "direct/bytes.hpp"
#include "direct/rng.hpp"

namespace direct {

// Single-threaded virtual-time event loop. Events at equal times run in
// schedule order, so a fixed seed replays the exact same interleaving.
class EventLoop {
 public:
  uint64_t now_us() const { return now_us_; }

  void ScheduleAt(uint64_t at_us, std::function<void()> fn) {
    queue_.push(Event{std::max(at_us, now_us_), next_seq_++, std::move(fn)});
  }

  void Schedule(uint64_t delay_us, std::function<void()> fn) {
    ScheduleAt(now_us_ + delay_us, std::move(fn));
  }

  bool RunOne() {
    if (queue_.empty()) return false;
    Event ev = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    now_us_ = ev.at_us;
    ev.fn();
    return true;
  }

  void RunUntilIdle() {
    while (RunOne()) {
    }
  }

  // Runs until `done` returns true. Returns false if the queue drained or
  // the virtual deadline passed first.
  bool RunUntil(const std::function<bool()>& done,
                uint64_t deadline_us = UINT64_MAX) {
    while (!done()) {
      if (queue_.empty() || queue_.top().at_us > deadline_us) return false;
      RunOne();
    }
    return true;
  }

  size_t pending() const { return queue_.size(); }

 private:
  struct Event {
    uint64_t at_us;
    uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Event& other) const {
      if (at_us != other.at_us) return at_us > other.at_us;
      return seq > other.seq;
    }
  };

  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  uint64_t now_us_ = 0;
  uint64_t next_seq_ = 0;
};

// In-process network with seeded latency, drops and duplicates. Delivery is
// at-least-once: a dropped attempt is retried until one lands, so handlers
// must be idempotent.
class SimTransport {
 public:
  struct Params {
    uint64_t min_latency_us = 100;
    uint64_t max_latency_us = 1200;
    double drop_prob = 0.0;
    double dup_prob = 0.0;
    uint64_t seed = 0;
  };

  using Handler = std::function<void(uint32_t from, const Bytes& frame)>;

  SimTransport(EventLoop* loop, Params params)
      : loop_(loop), params_(params), rng_(MixSeed(params.seed, 0x7ea11)) {}

  void Register(uint32_t node, Handler handler) {
    handlers_[node] = std::move(handler);
  }

  void Send(uint32_t from, uint32_t to, Bytes frame) {
    messages_sent_++;
    bytes_sent_ += frame.size();
    Attempt(from, to, std::move(frame));
  }

  uint64_t messages_sent() const { return messages_sent_; }
  uint64_t messages_delivered() const { return messages_delivered_; }
  uint64_t bytes_sent() const { return bytes_sent_; }

 private:
  void Attempt(uint32_t from, uint32_t to, Bytes frame) {
    const uint64_t latency = Latency();
    if (rng_.Bernoulli(params_.drop_prob)) {
      // retry after the lost attempt's worth of silence
      loop_->Schedule(latency + params_.max_latency_us,
                      [this, from, to, frame = std::move(frame)]() mutable {
                        Attempt(from, to, std::move(frame));
                      });
      return;
    }
    if (rng_.Bernoulli(params_.dup_prob)) {
      Deliver(from, to, frame, Latency());
    }
    Deliver(from, to, std::move(frame), latency);
  }

  void Deliver(uint32_t from, uint32_t to, Bytes frame, uint64_t latency) {
    loop_->Schedule(latency, [this, from, to, frame = std::move(frame)] {
      auto it = handlers_.find(to);
      if (it == handlers_.end()) return;
      messages_delivered_++;
      it->second(from, frame);
    });
  }

  uint64_t Latency() {
    const uint64_t spread = params_.max_latency_us - params_.min_latency_us;
    return params_.min_latency_us + (spread ? rng_.NextBelow(spread) : 0);
  }

  EventLoop* loop_;
  Params params_;
  CounterRng rng_;
  std::map<uint32_t, Handler> handlers_;
  uint64_t messages_sent_ = 0;
  uint64_t messages_delivered_ = 0;
  uint64_t bytes_sent_ = 0;
};

}  // namespace direct
