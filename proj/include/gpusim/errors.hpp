#pragma once

#include <stdexcept>
#include <string>

namespace gpusim {

// Input/validation errors carry the offending key or field in the message.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& msg) : std::runtime_error("schema error: " + msg) {}
};

struct SchemaMismatch : std::runtime_error {
    explicit SchemaMismatch(const std::string& msg) : std::runtime_error("schema mismatch: " + msg) {}
};

struct MixedSkuInRack : std::runtime_error {
    explicit MixedSkuInRack(const std::string& msg) : std::runtime_error("mixed SKU in rack: " + msg) {}
};

struct EmptyTopology : std::runtime_error {
    EmptyTopology() : std::runtime_error("topology has no racks or servers") {}
};

struct SlotBusy : std::runtime_error {
    explicit SlotBusy(const std::string& msg) : std::runtime_error("slot busy: " + msg) {}
};

struct PastEvent : std::runtime_error {
    explicit PastEvent(const std::string& msg) : std::runtime_error("event scheduled in the past: " + msg) {}
};

struct UnknownVC : std::runtime_error {
    explicit UnknownVC(const std::string& vc) : std::runtime_error("unknown virtual cluster: " + vc) {}
};

struct InvalidDistribution : std::runtime_error {
    explicit InvalidDistribution(const std::string& msg) : std::runtime_error("invalid distribution: " + msg) {}
};

struct LivelockGuard : std::runtime_error {
    explicit LivelockGuard(const std::string& msg) : std::runtime_error("livelock guard tripped: " + msg) {}
};

struct EmptyCurve : std::runtime_error {
    EmptyCurve() : std::runtime_error("loss curve is empty") {}
};

} // namespace gpusim
