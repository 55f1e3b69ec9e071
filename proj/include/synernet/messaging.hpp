#pragma once

#include <deque>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "synernet/encoders.hpp"

namespace synernet {

enum class AgentId { Visual, Linguistic, Nominal, Coordinator };

const char* agent_name(AgentId id);
AgentId agent_from_name(const std::string& name);

enum class StrategyTag { Standard, Robust, RobustAugmented };

const char* strategy_name(StrategyTag s);
StrategyTag strategy_from_name(const std::string& name);

struct FeaturesPayload {
    std::vector<Embedding> features;
};

struct StrategyPayload {
    StrategyTag strategy = StrategyTag::Standard;
    double difficulty = 0.0;
};

struct ContextPayload {
    Embedding context;
};

struct MetadataPayload {
    std::map<std::string, std::string> entries;
};

using PayloadVariant = std::variant<FeaturesPayload, StrategyPayload, ContextPayload, MetadataPayload>;

struct Message {
    AgentId sender = AgentId::Coordinator;
    AgentId receiver = AgentId::Coordinator;
    PayloadVariant payload;
    int step_index = 0;
};

// Synchronous single-threaded bus: FIFO queue per registered receiver plus an
// append-only trace of everything posted.
class MessageBus {
  public:
    void register_agent(AgentId id);
    bool is_registered(AgentId id) const;

    void post(const Message& msg);
    std::vector<Message> drain(AgentId receiver);

    const std::vector<Message>& trace() const { return trace_; }
    size_t posted_count() const { return posted_; }
    size_t drained_count() const { return drained_; }

  private:
    std::map<AgentId, std::deque<Message>> queues_;
    std::vector<Message> trace_;
    size_t posted_ = 0;
    size_t drained_ = 0;
    int last_step_index_ = -1;
};

// JSON Lines serialization, one message per line; embeddings as float arrays.
std::string trace_to_jsonl(const std::vector<Message>& trace);
std::vector<Message> trace_from_jsonl(const std::string& jsonl);
void save_trace(const std::vector<Message>& trace, const std::string& path);
std::vector<Message> load_trace(const std::string& path);

bool payload_equal(const PayloadVariant& a, const PayloadVariant& b);

}  // namespace synernet
