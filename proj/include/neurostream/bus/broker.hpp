#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "neurostream/io/wire.hpp"

namespace neurostream::bus {

struct SchemaMismatch : Error {
  using Error::Error;
};
struct QueueOverflow : Error {
  using Error::Error;
};

enum class OverflowPolicy { drop_oldest, error };

inline constexpr std::size_t kDefaultQueueDepth = 8;

// Messages are immutable once published and handed between threads by
// shared pointer; no subscriber can mutate another's view.
using MessagePtr = std::shared_ptr<const io::Message>;

// One subscriber's bounded mailbox. Created via Broker::subscribe.
class Subscription {
 public:
  Subscription(std::string topic, std::size_t depth, OverflowPolicy policy)
      : topic_(std::move(topic)), depth_(depth), policy_(policy) {}

  // Blocks until a message arrives, the timeout lapses, or the queue is
  // closed and drained. nullopt means "nothing now"; check closed().
  std::optional<MessagePtr> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    MessagePtr m = std::move(q_.front());
    q_.pop_front();
    return m;
  }

  std::optional<MessagePtr> try_pop() {
    std::lock_guard lock(mu_);
    if (q_.empty()) return std::nullopt;
    MessagePtr m = std::move(q_.front());
    q_.pop_front();
    return m;
  }

  const std::string& topic() const { return topic_; }
  std::size_t depth() const { return depth_; }

  std::size_t dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }
  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }
  std::size_t pending() const {
    std::lock_guard lock(mu_);
    return q_.size();
  }

 private:
  friend class Broker;

  void push(MessagePtr m) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      if (q_.size() >= depth_) {
        if (policy_ == OverflowPolicy::error)
          throw QueueOverflow("subscription on " + topic_ + " exceeded depth " +
                              std::to_string(depth_));
        q_.pop_front();  // freshness over completeness
        ++dropped_;
      }
      q_.push_back(std::move(m));
    }
    cv_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  const std::string topic_;
  const std::size_t depth_;
  const OverflowPolicy policy_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<MessagePtr> q_;
  std::size_t dropped_ = 0;
  bool closed_ = false;
};

// Topic-based publish-subscribe within one process. A topic's schema is
// locked by whichever publish or subscribe touches it first; later uses must
// agree. Delivery to each subscriber follows publish order.
class Broker {
 public:
  std::shared_ptr<Subscription> subscribe(const std::string& topic, io::Schema schema,
                                          std::size_t depth = kDefaultQueueDepth,
                                          OverflowPolicy policy = OverflowPolicy::drop_oldest) {
    std::lock_guard lock(mu_);
    TopicState& state = touch(topic, schema);
    auto sub = std::make_shared<Subscription>(topic, depth, policy);
    state.subs.push_back(sub);
    return sub;
  }

  // Succeeds with no subscribers (the message is dropped).
  void publish(const std::string& topic, io::Message message) {
    const auto msg = std::make_shared<const io::Message>(std::move(message));
    std::lock_guard lock(mu_);
    TopicState& state = touch(topic, io::message_schema(*msg));
    std::size_t live = 0;
    for (auto& weak : state.subs)
      if (auto sub = weak.lock()) {
        sub->push(msg);
        state.subs[live++] = std::move(weak);
      }
    state.subs.resize(live);  // prune dead subscribers
  }

  // Wakes and closes every subscription; publishes after close are dropped.
  void close() {
    std::lock_guard lock(mu_);
    for (auto& [name, state] : topics_)
      for (auto& weak : state.subs)
        if (auto sub = weak.lock()) sub->close();
  }

  std::size_t subscriber_count(const std::string& topic) const {
    std::lock_guard lock(mu_);
    const auto it = topics_.find(topic);
    if (it == topics_.end()) return 0;
    std::size_t live = 0;
    for (const auto& weak : it->second.subs)
      if (!weak.expired()) ++live;
    return live;
  }

  std::optional<io::Schema> topic_schema(const std::string& topic) const {
    std::lock_guard lock(mu_);
    const auto it = topics_.find(topic);
    if (it == topics_.end()) return std::nullopt;
    return it->second.schema;
  }

 private:
  struct TopicState {
    io::Schema schema{};
    std::vector<std::weak_ptr<Subscription>> subs;
  };

  TopicState& touch(const std::string& topic, io::Schema schema) {
    auto [it, inserted] = topics_.try_emplace(topic);
    if (inserted) {
      it->second.schema = schema;
    } else if (it->second.schema != schema) {
      throw SchemaMismatch("topic " + topic + " carries schema tag " +
                           std::to_string(static_cast<int>(it->second.schema)) +
                           ", not " + std::to_string(static_cast<int>(schema)));
    }
    return it->second;
  }

  mutable std::mutex mu_;
  std::map<std::string, TopicState> topics_;
};

}  // namespace neurostream::bus
