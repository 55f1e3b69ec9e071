#include "synernet/messaging.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace synernet {

using nlohmann::json;

const char* agent_name(AgentId id) {
    switch (id) {
        case AgentId::Visual:      return "visual";
        case AgentId::Linguistic:  return "linguistic";
        case AgentId::Nominal:     return "nominal";
        case AgentId::Coordinator: return "coordinator";
    }
    return "?";
}

AgentId agent_from_name(const std::string& name) {
    if (name == "visual") return AgentId::Visual;
    if (name == "linguistic") return AgentId::Linguistic;
    if (name == "nominal") return AgentId::Nominal;
    if (name == "coordinator") return AgentId::Coordinator;
    fail(Errc::invalid_argument, "unknown agent: " + name);
}

const char* strategy_name(StrategyTag s) {
    switch (s) {
        case StrategyTag::Standard:        return "standard";
        case StrategyTag::Robust:          return "robust";
        case StrategyTag::RobustAugmented: return "robust_augmented";
    }
    return "?";
}

StrategyTag strategy_from_name(const std::string& name) {
    if (name == "standard") return StrategyTag::Standard;
    if (name == "robust") return StrategyTag::Robust;
    if (name == "robust_augmented") return StrategyTag::RobustAugmented;
    fail(Errc::invalid_argument, "unknown strategy: " + name);
}

// ---------------------------------------------------------------------------
// MessageBus
// ---------------------------------------------------------------------------

void MessageBus::register_agent(AgentId id) { queues_.emplace(id, std::deque<Message>{}); }

bool MessageBus::is_registered(AgentId id) const { return queues_.count(id) != 0; }

void MessageBus::post(const Message& msg) {
    if (msg.sender == msg.receiver) fail(Errc::invalid_argument, "message sender equals receiver");
    auto it = queues_.find(msg.receiver);
    if (it == queues_.end())
        fail(Errc::routing, std::string("unregistered receiver: ") + agent_name(msg.receiver));
    if (msg.step_index < last_step_index_)
        fail(Errc::protocol, "step_index decreased in trace");
    last_step_index_ = msg.step_index;
    it->second.push_back(msg);
    trace_.push_back(msg);
    ++posted_;
}

std::vector<Message> MessageBus::drain(AgentId receiver) {
    auto it = queues_.find(receiver);
    if (it == queues_.end())
        fail(Errc::routing, std::string("unregistered receiver: ") + agent_name(receiver));
    std::vector<Message> out(it->second.begin(), it->second.end());
    drained_ += out.size();
    it->second.clear();
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

static json embedding_to_json(const Embedding& e) {
    return json{{"values", e.values},
                {"modality", e.modality == Modality::Visual ? "visual" : "text"},
                {"normalized", e.normalized}};
}

static Embedding embedding_from_json(const json& j) {
    Embedding e;
    e.values = j.at("values").get<Vec>();
    e.modality = j.at("modality").get<std::string>() == "visual" ? Modality::Visual : Modality::Text;
    e.normalized = j.at("normalized").get<bool>();
    return e;
}

static json message_to_json(const Message& m) {
    json j;
    j["sender"] = agent_name(m.sender);
    j["receiver"] = agent_name(m.receiver);
    j["step_index"] = m.step_index;
    if (const auto* f = std::get_if<FeaturesPayload>(&m.payload)) {
        json arr = json::array();
        for (const auto& e : f->features) arr.push_back(embedding_to_json(e));
        j["payload"] = {{"kind", "features"}, {"features", arr}};
    } else if (const auto* s = std::get_if<StrategyPayload>(&m.payload)) {
        j["payload"] = {{"kind", "strategy"},
                        {"strategy", strategy_name(s->strategy)},
                        {"difficulty", s->difficulty}};
    } else if (const auto* c = std::get_if<ContextPayload>(&m.payload)) {
        j["payload"] = {{"kind", "context"}, {"context", embedding_to_json(c->context)}};
    } else if (const auto* md = std::get_if<MetadataPayload>(&m.payload)) {
        j["payload"] = {{"kind", "metadata"}, {"entries", md->entries}};
    }
    return j;
}

static Message message_from_json(const json& j) {
    Message m;
    m.sender = agent_from_name(j.at("sender").get<std::string>());
    m.receiver = agent_from_name(j.at("receiver").get<std::string>());
    m.step_index = j.at("step_index").get<int>();
    const auto& p = j.at("payload");
    const std::string kind = p.at("kind").get<std::string>();
    if (kind == "features") {
        FeaturesPayload f;
        for (const auto& e : p.at("features")) f.features.push_back(embedding_from_json(e));
        m.payload = std::move(f);
    } else if (kind == "strategy") {
        m.payload = StrategyPayload{strategy_from_name(p.at("strategy").get<std::string>()),
                                    p.at("difficulty").get<double>()};
    } else if (kind == "context") {
        m.payload = ContextPayload{embedding_from_json(p.at("context"))};
    } else if (kind == "metadata") {
        m.payload = MetadataPayload{p.at("entries").get<std::map<std::string, std::string>>()};
    } else {
        fail(Errc::io, "unknown payload kind: " + kind);
    }
    return m;
}

std::string trace_to_jsonl(const std::vector<Message>& trace) {
    std::ostringstream out;
    for (const auto& m : trace) out << message_to_json(m).dump() << "\n";
    return out.str();
}

std::vector<Message> trace_from_jsonl(const std::string& jsonl) {
    std::vector<Message> out;
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) fail(Errc::io, "invalid trace line");
        out.push_back(message_from_json(j));
    }
    return out;
}

void save_trace(const std::vector<Message>& trace, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(Errc::io, "cannot write " + path);
    f << trace_to_jsonl(trace);
}

std::vector<Message> load_trace(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(Errc::io, "cannot open " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return trace_from_jsonl(buf.str());
}

bool payload_equal(const PayloadVariant& a, const PayloadVariant& b) {
    if (a.index() != b.index()) return false;
    if (const auto* fa = std::get_if<FeaturesPayload>(&a)) {
        const auto& fb = std::get<FeaturesPayload>(b);
        if (fa->features.size() != fb.features.size()) return false;
        for (size_t i = 0; i < fa->features.size(); ++i) {
            const auto& ea = fa->features[i];
            const auto& eb = fb.features[i];
            if (ea.values != eb.values || ea.modality != eb.modality || ea.normalized != eb.normalized)
                return false;
        }
        return true;
    }
    if (const auto* sa = std::get_if<StrategyPayload>(&a)) {
        const auto& sb = std::get<StrategyPayload>(b);
        return sa->strategy == sb.strategy && sa->difficulty == sb.difficulty;
    }
    if (const auto* ca = std::get_if<ContextPayload>(&a)) {
        const auto& cb = std::get<ContextPayload>(b);
        return ca->context.values == cb.context.values && ca->context.modality == cb.context.modality &&
               ca->context.normalized == cb.context.normalized;
    }
    const auto& ma = std::get<MetadataPayload>(a);
    const auto& mb = std::get<MetadataPayload>(b);
    return ma.entries == mb.entries;
}

}  // namespace synernet
