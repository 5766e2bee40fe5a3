#include "sad/events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "sad/rng.hpp"

namespace sad {

void EventStream::validate() const {
    double prev_t = -1.0;
    for (size_t i = 0; i < events.size(); ++i) {
        const Event& e = events[i];
        if (!std::isfinite(e.t) || e.t < 0.0) {
            throw std::invalid_argument("EventStream: bad timestamp at event " + std::to_string(i));
        }
        if (e.t < prev_t) throw std::invalid_argument("EventStream: not sorted at event " + std::to_string(i));
        prev_t = e.t;
        if (e.src >= num_nodes || e.dst >= num_nodes) {
            throw std::invalid_argument("EventStream: node id out of range at event " + std::to_string(i));
        }
        if (e.features.size() != edge_feature_dim) {
            throw std::invalid_argument("EventStream: feature dim mismatch at event " + std::to_string(i));
        }
        if (e.label < -1 || e.label > 1) {
            throw std::invalid_argument("EventStream: bad label at event " + std::to_string(i));
        }
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    for (;;) {
        const size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

[[noreturn]] void reject_row(size_t line_no, const std::string& why) {
    throw std::invalid_argument("ingest_csv: line " + std::to_string(line_no) + ": " + why);
}

int64_t parse_int(const std::string& s, size_t line_no, const char* what) {
    int64_t v = 0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e) reject_row(line_no, std::string("unparsable ") + what + " '" + s + "'");
    return v;
}

double parse_double(const std::string& s, size_t line_no, const char* what) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e || !std::isfinite(v)) {
        reject_row(line_no, std::string("unparsable ") + what + " '" + s + "'");
    }
    return v;
}

}  // namespace

EventStream ingest_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("ingest_csv: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("ingest_csv: " + path + " is empty (no header)");

    EventStream stream;
    int64_t max_user = -1, max_item = -1;
    size_t line_no = 1;
    bool first_row = true;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line.back() == '\r') line.pop_back();
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() < 4) reject_row(line_no, "expected at least 4 fields, got " + std::to_string(fields.size()));
        const size_t feat_count = fields.size() - 4;
        if (first_row) {
            stream.edge_feature_dim = feat_count;
            first_row = false;
        } else if (feat_count != stream.edge_feature_dim) {
            reject_row(line_no, "ragged row: " + std::to_string(feat_count) + " features, expected " +
                                    std::to_string(stream.edge_feature_dim));
        }
        const int64_t user = parse_int(fields[0], line_no, "user id");
        const int64_t item = parse_int(fields[1], line_no, "item id");
        if (user < 0 || item < 0) reject_row(line_no, "negative id");
        const double t = parse_double(fields[2], line_no, "timestamp");
        if (t < 0.0) reject_row(line_no, "negative timestamp");
        const int64_t state = parse_int(fields[3], line_no, "state label");
        if (state != 0 && state != 1) reject_row(line_no, "state label must be 0 or 1, got " + fields[3]);
        Event e;
        e.src = static_cast<uint32_t>(user);
        e.dst = static_cast<uint32_t>(item);  // offset applied after user count is known
        e.t = t;
        e.label = static_cast<int>(state);
        e.features.reserve(feat_count);
        for (size_t f = 0; f < feat_count; ++f) e.features.push_back(parse_double(fields[4 + f], line_no, "feature"));
        stream.events.push_back(std::move(e));
        max_user = std::max(max_user, user);
        max_item = std::max(max_item, item);
    }
    if (stream.events.empty()) throw std::invalid_argument("ingest_csv: " + path + " has no data rows");
    stream.num_users = static_cast<size_t>(max_user + 1);
    stream.num_nodes = stream.num_users + static_cast<size_t>(max_item + 1);
    for (Event& e : stream.events) e.dst += static_cast<uint32_t>(stream.num_users);
    std::stable_sort(stream.events.begin(), stream.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    stream.validate();
    return stream;
}

void write_csv(const EventStream& stream, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_csv: cannot open " + path + " for writing");
    os << "user_id,item_id,timestamp,state_label";
    for (size_t f = 0; f < stream.edge_feature_dim; ++f) os << ",f" << f;
    os << '\n';
    char buf[64];
    for (const Event& e : stream.events) {
        if (e.dst < stream.num_users) throw std::invalid_argument("write_csv: dst is not an item node");
        if (e.label < 0) throw std::invalid_argument("write_csv: stream contains unlabeled events");
        os << e.src << ',' << (e.dst - stream.num_users) << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", e.t);
        os << buf << ',' << e.label;
        for (double v : e.features) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            os << ',' << buf;
        }
        os << '\n';
    }
    if (!os) throw std::runtime_error("write_csv: write failed for " + path);
}

SplitResult chronological_split(const EventStream& stream, std::array<double, 3> fractions) {
    if (stream.events.empty()) throw std::invalid_argument("chronological_split: empty stream");
    const double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("chronological_split: fractions must sum to 1");
    const size_t m = stream.events.size();
    const size_t b1 = static_cast<size_t>(std::floor(fractions[0] * static_cast<double>(m)));
    const size_t b2 = static_cast<size_t>(std::floor((fractions[0] + fractions[1]) * static_cast<double>(m)));
    SplitResult r;
    auto carve = [&](size_t lo, size_t hi) {
        EventStream s;
        s.num_nodes = stream.num_nodes;
        s.num_users = stream.num_users;
        s.edge_feature_dim = stream.edge_feature_dim;
        s.events.assign(stream.events.begin() + static_cast<long>(lo), stream.events.begin() + static_cast<long>(hi));
        return s;
    };
    r.train = carve(0, b1);
    r.val = carve(b1, b2);
    r.test = carve(b2, m);
    return r;
}

EventStream drop_labels(const EventStream& stream, double p, uint64_t seed) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("drop_labels: p must be in [0,1]");
    EventStream out = stream;
    std::vector<size_t> labeled;
    for (size_t i = 0; i < out.events.size(); ++i) {
        if (out.events[i].label != -1) labeled.push_back(i);
    }
    const size_t n_drop = static_cast<size_t>(std::floor(p * static_cast<double>(labeled.size())));
    Rng rng(seed);
    rng.shuffle(labeled);
    for (size_t i = 0; i < n_drop; ++i) out.events[labeled[i]].label = -1;
    return out;
}

}  // namespace sad
