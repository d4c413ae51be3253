#include "gpusim/engine.hpp"

#include <cmath>

namespace gpusim {

const char* event_kind_name(EventKind kind) {
    switch (kind) {
        case EventKind::JobArrival:         return "JobArrival";
        case EventKind::SchedAttempt:       return "SchedAttempt";
        case EventKind::AcquisitionTimeout: return "AcquisitionTimeout";
        case EventKind::BackoffExpired:     return "BackoffExpired";
        case EventKind::JobFinish:          return "JobFinish";
        case EventKind::FailureFired:       return "FailureFired";
        case EventKind::PreemptCheck:       return "PreemptCheck";
        case EventKind::UtilizationSample:  return "UtilizationSample";
        case EventKind::MigrationCheck:     return "MigrationCheck";
    }
    return "?";
}

void EventQueue::schedule(SimEvent ev) {
    if (ev.time < now_) {
        throw PastEvent("t=" + std::to_string(ev.time) + " < now=" + std::to_string(now_) +
                        " (" + event_kind_name(ev.kind) + ")");
    }
    ev.seq = next_seq_++;
    heap_.push(ev);
}

SimEvent EventQueue::pop() {
    SimEvent ev = heap_.top();
    heap_.pop();
    now_ = ev.time;
    ++popped_;
    return ev;
}

uint64_t RngStream::mix(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {
uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}
} // namespace

RngStream RngStream::from_master(uint64_t master_seed, const std::string& concern) {
    return RngStream(mix(master_seed) ^ fnv1a64(concern));
}

RngStream RngStream::from_master(uint64_t master_seed, const std::string& concern, uint64_t id) {
    return RngStream(mix(master_seed) ^ fnv1a64(concern) ^ mix(id * 0xd6e8feb86659fd93ULL + 1));
}

uint64_t RngStream::next_u64() {
    // xorshift64*, seeded through splitmix
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545f4914f6cdd1dULL;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

uint64_t RngStream::uniform_index(uint64_t n) {
    return n == 0 ? 0 : next_u64() % n;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double RngStream::normal(double mean, double sigma) {
    return mean + sigma * normal();
}

double RngStream::exponential(double mean) {
    double u = uniform();
    if (u >= 1.0) u = std::nextafter(1.0, 0.0);
    return -mean * std::log1p(-u);
}

std::size_t RngStream::weighted_index(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double x = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (x < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
}

} // namespace gpusim
