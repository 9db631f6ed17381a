#include "fedunlearn/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace fedunlearn {

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

/// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_string && c == '\\') {
            ++i;
        } else if (c == '"') {
            in_string = !in_string;
        } else if (c == '#' && !in_string) {
            return line.substr(0, i);
        }
    }
    return line;
}

class ValueParser {
 public:
    ValueParser(std::string_view text, std::string where) : text_(text), where_(std::move(where)) {}

    ConfigValue parse() {
        ConfigValue out;
        skip_space();
        if (peek() == '[') {
            ++pos_;
            std::vector<ConfigValue::Scalar> items;
            skip_space();
            if (peek() == ']') {
                ++pos_;
            } else {
                while (true) {
                    items.push_back(scalar());
                    skip_space();
                    if (peek() == ',') {
                        ++pos_;
                        skip_space();
                        if (peek() == ']') {
                            ++pos_;
                            break;
                        }
                        continue;
                    }
                    if (peek() == ']') {
                        ++pos_;
                        break;
                    }
                    fail("expected ',' or ']' in array");
                }
            }
            out.value = std::move(items);
        } else {
            out.value = scalar();
        }
        skip_space();
        if (pos_ != text_.size()) fail("unexpected trailing characters");
        return out;
    }

 private:
    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(where_ + ": " + what); }

    ConfigValue::Scalar scalar() {
        skip_space();
        if (peek() == '"') return string_literal();
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' &&
               !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
        const std::string_view tok = text_.substr(start, pos_ - start);
        if (tok.empty()) fail("missing value");
        if (tok == "true") return true;
        if (tok == "false") return false;
        const char* first = tok.data();
        const char* last = tok.data() + tok.size();
        if (*first == '+') ++first;
        std::int64_t i = 0;
        auto ir = std::from_chars(first, last, i);
        if (ir.ec == std::errc() && ir.ptr == last) return i;
        double d = 0.0;
        auto dr = std::from_chars(first, last, d);
        if (dr.ec == std::errc() && dr.ptr == last) return d;
        fail("cannot parse value '" + std::string(tok) + "' (strings need double quotes)");
    }

    std::string string_literal() {
        ++pos_;
        std::string out;
        while (pos_ < text_.size()) {
            const char c = text_[pos_++];
            if (c == '"') return out;
            if (c == '\\') {
                if (pos_ >= text_.size()) break;
                const char e = text_[pos_++];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: fail(std::string("unknown escape \\") + e);
                }
            } else {
                out += c;
            }
        }
        fail("unterminated string");
    }

    std::string_view text_;
    std::string where_;
    std::size_t pos_ = 0;
};

bool valid_name(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    });
}

}  // namespace

ConfigDocument ConfigDocument::parse(const std::string& text, const std::string& source) {
    ConfigDocument doc;
    doc.source_ = source;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (!valid_name(section)) throw ConfigError(where + ": bad section name '" + section + "'");
            if (doc.sections_.count(section)) {
                throw ConfigError(where + ": section [" + section + "] appears twice");
            }
            doc.sections_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        if (!valid_name(key)) throw ConfigError(where + ": bad key '" + key + "'");
        if (section.empty()) throw ConfigError(where + ": " + key + ": key outside any [section]");
        auto& table = doc.sections_[section];
        if (table.count(key)) throw ConfigError(where + ": " + key + ": duplicate key");
        ConfigValue v = ValueParser(std::string_view(line).substr(eq + 1), where + ": " + key).parse();
        v.line = line_no;
        table.emplace(key, std::move(v));
    }
    return doc;
}

ConfigDocument ConfigDocument::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

const ConfigValue* ConfigDocument::find(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

void ConfigDocument::set(const std::string& section, const std::string& key, const std::string& text) {
    ConfigValue v = ValueParser(text, "override " + section + "." + key).parse();
    sections_[section][key] = std::move(v);
}

namespace {

/// Typed, tracked access to a document; leftover keys are reported as unknown.
class Reader {
 public:
    explicit Reader(const ConfigDocument& doc) : doc_(doc) {}

    template <typename T>
    void scalar(const std::string& section, const std::string& key, T& out) {
        const ConfigValue* v = take(section, key);
        if (!v) return;
        const auto* s = std::get_if<ConfigValue::Scalar>(&v->value);
        if (!s) fail(*v, section, key, "expected a single value, got an array");
        out = convert<T>(*s, *v, section, key);
    }

    template <typename T>
    void list(const std::string& section, const std::string& key, std::vector<T>& out) {
        const ConfigValue* v = take(section, key);
        if (!v) return;
        out.clear();
        if (const auto* s = std::get_if<ConfigValue::Scalar>(&v->value)) {
            out.push_back(convert<T>(*s, *v, section, key));
        } else {
            for (const auto& item : std::get<std::vector<ConfigValue::Scalar>>(v->value)) {
                out.push_back(convert<T>(item, *v, section, key));
            }
        }
    }

    /// Parses each string of a list through `fn`, reporting failures at the key.
    template <typename T, typename Fn>
    void mapped_list(const std::string& section, const std::string& key, std::vector<T>& out, Fn fn) {
        const ConfigValue* v = doc_.find(section, key);
        std::vector<std::string> names;
        list(section, key, names);
        if (!v) return;
        out.clear();
        for (const auto& name : names) {
            try {
                out.push_back(fn(name));
            } catch (const std::exception& e) {
                fail(*v, section, key, e.what());
            }
        }
    }

    template <typename T, typename Fn>
    void mapped(const std::string& section, const std::string& key, T& out, Fn fn) {
        const ConfigValue* v = doc_.find(section, key);
        std::string name;
        scalar(section, key, name);
        if (!v) return;
        try {
            out = fn(name);
        } catch (const std::exception& e) {
            fail(*v, section, key, e.what());
        }
    }

    void reject_unknown() const {
        for (const auto& [section, table] : doc_.sections()) {
            for (const auto& [key, value] : table) {
                if (!used_.count(section + "." + key)) {
                    fail(value, section, key,
                         known_sections().count(section) ? "unknown key" : "unknown section");
                }
            }
        }
    }

 private:
    static const std::set<std::string>& known_sections() {
        static const std::set<std::string> s{"task", "federation", "attack", "unlearn", "run"};
        return s;
    }

    const ConfigValue* take(const std::string& section, const std::string& key) {
        used_.insert(section + "." + key);
        return doc_.find(section, key);
    }

    [[noreturn]] void fail(const ConfigValue& v, const std::string& section, const std::string& key,
                           const std::string& what) const {
        throw ConfigError(doc_.source() + ":" + std::to_string(v.line) + ": " + section + "." + key +
                          ": " + what);
    }

    template <typename T>
    T convert(const ConfigValue::Scalar& s, const ConfigValue& v, const std::string& section,
              const std::string& key) const {
        if constexpr (std::is_same_v<T, bool>) {
            if (const auto* b = std::get_if<bool>(&s)) return *b;
            fail(v, section, key, "expected true or false");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (const auto* str = std::get_if<std::string>(&s)) return *str;
            fail(v, section, key, "expected a quoted string");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (const auto* d = std::get_if<double>(&s)) return *d;
            if (const auto* i = std::get_if<std::int64_t>(&s)) return static_cast<double>(*i);
            fail(v, section, key, "expected a number");
        } else {
            const auto* i = std::get_if<std::int64_t>(&s);
            if (!i) fail(v, section, key, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (*i < 0) fail(v, section, key, "expected a non-negative integer");
            }
            return static_cast<T>(*i);
        }
    }

    const ConfigDocument& doc_;
    std::set<std::string> used_;
};

[[noreturn]] void invalid(const std::string& key, const std::string& what) {
    throw ConfigError(key + ": " + what);
}

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_document(const ConfigDocument& doc) {
    ExperimentConfig c;
    Reader rd(doc);

    auto& t = c.task;
    rd.scalar("task", "source", t.source);
    rd.mapped("task", "model", t.model, model_kind_from_string);
    rd.scalar("task", "classes", t.classes);
    rd.scalar("task", "dim", t.dim);
    rd.scalar("task", "train_per_class", t.train_per_class);
    rd.scalar("task", "test_per_class", t.test_per_class);
    rd.scalar("task", "spread", t.spread);
    rd.scalar("task", "l2_lambda", t.l2_lambda);
    rd.scalar("task", "hidden", t.hidden);
    rd.scalar("task", "probe_h_min", t.probe_h_min);
    rd.scalar("task", "probe_h_max", t.probe_h_max);
    rd.scalar("task", "idx_train_images", t.idx_train_images);
    rd.scalar("task", "idx_train_labels", t.idx_train_labels);
    rd.scalar("task", "idx_test_images", t.idx_test_images);
    rd.scalar("task", "idx_test_labels", t.idx_test_labels);
    rd.scalar("task", "trigger_size", t.trigger_size);
    rd.scalar("task", "trigger_value", t.trigger_value);
    rd.scalar("task", "trigger_target", t.trigger_target);
    rd.scalar("task", "poison_fraction", t.poison_fraction);

    auto& f = c.federation;
    rd.scalar("federation", "clients", f.clients);
    rd.scalar("federation", "noniid_q", f.noniid_q);
    rd.scalar("federation", "learning_rate", f.learning_rate);
    rd.scalar("federation", "rounds", f.rounds);
    rd.scalar("federation", "batch_size", f.batch_size);
    rd.scalar("federation", "malicious_fraction", f.malicious_fraction);
    rd.scalar("federation", "fu_malicious_fraction", f.fu_malicious_fraction);
    rd.mapped_list("federation", "aggregators", f.aggregators, AggregatorKind::parse);
    rd.mapped("federation", "detection", f.detection, detection_mode_from_string);
    rd.list("federation", "detected_ids", f.detected_ids);
    rd.scalar("federation", "threads", f.threads);
    rd.scalar("federation", "history_budget_mb", f.history_budget_mb);

    auto& a = c.attack;
    rd.mapped_list("attack", "fl", a.fl, attack_kind_from_string);
    rd.mapped_list("attack", "fu", a.fu, attack_kind_from_string);
    rd.mapped_list("attack", "knowledge", a.knowledge, knowledge_from_string);
    rd.scalar("attack", "trim_b", a.trim_b);
    rd.scalar("attack", "lie_z", a.lie_z);
    rd.scalar("attack", "backdoor_scale", a.backdoor_scale);
    rd.scalar("attack", "eps_lo", a.eps_grid.lo);
    rd.scalar("attack", "eps_hi", a.eps_grid.hi);
    rd.scalar("attack", "eps_points", a.eps_grid.points);
    rd.scalar("attack", "eps_refine", a.eps_grid.refine_points);
    rd.mapped("attack", "anchor", a.anchor, anchor_from_string);

    auto& u = c.unlearn;
    rd.mapped_list("unlearn", "methods", u.methods, unlearn_method_from_string);
    rd.scalar("unlearn", "buffer_r", u.options.buffer_r);
    rd.scalar("unlearn", "lbfgs_s", u.options.lbfgs_s);
    rd.scalar("unlearn", "sigma_min", u.options.sigma_min);
    rd.scalar("unlearn", "rcond_floor", u.options.rcond_floor);
    rd.scalar("unlearn", "dir_filter_flipped", u.options.dir_filter_flipped);
    rd.scalar("unlearn", "rescale_exact", u.options.rescale_exact);
    rd.scalar("unlearn", "rescale_warmup", u.options.rescale_warmup);
    rd.scalar("unlearn", "fedrecover_warmup", u.options.fedrecover.warmup);
    rd.scalar("unlearn", "fedrecover_correction", u.options.fedrecover.correction_period);
    rd.scalar("unlearn", "fedrecover_final", u.options.fedrecover.final_exact);
    rd.scalar("unlearn", "fedrecover_tau", u.options.fedrecover.tau_factor);
    rd.scalar("unlearn", "shared_init", u.shared_init);
    rd.scalar("unlearn", "scratch_attackers_active", u.scratch_attackers_active);
    rd.scalar("unlearn", "check_bound", u.check_bound);

    auto& r = c.run;
    rd.list("run", "seeds", r.seeds);
    rd.scalar("run", "output", r.output);
    rd.scalar("run", "cell_threads", r.cell_threads);

    rd.reject_unknown();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        // prefix the location of the offending key when the document sets it
        const std::string msg = e.what();
        const auto colon = msg.find(':');
        const auto dot = msg.find('.');
        std::string where = doc.source();
        if (dot != std::string::npos && dot < colon) {
            if (const auto* v = doc.find(msg.substr(0, dot), msg.substr(dot + 1, colon - dot - 1))) {
                where += ":" + std::to_string(v->line);
            }
        }
        throw ConfigError(where + ": " + msg);
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    return from_document(ConfigDocument::load(path));
}

void ExperimentConfig::validate() const {
    const auto& t = task;
    if (t.source != "synthetic" && t.source != "idx") invalid("task.source", "expected synthetic or idx");
    if (t.classes < 2) invalid("task.classes", "need at least two classes");
    if (t.dim == 0) invalid("task.dim", "must be positive");
    if (t.source == "synthetic") {
        if (t.train_per_class == 0) invalid("task.train_per_class", "must be positive");
        if (t.test_per_class == 0) invalid("task.test_per_class", "must be positive");
        if (!(t.spread > 0.0)) invalid("task.spread", "must be positive");
    } else if (t.idx_train_images.empty() || t.idx_train_labels.empty() || t.idx_test_images.empty() ||
               t.idx_test_labels.empty()) {
        invalid("task.idx_*", "idx source needs train/test image and label paths");
    }
    if (t.l2_lambda < 0.0) invalid("task.l2_lambda", "must be non-negative");
    if (t.model == ModelKind::mlp2 && t.hidden == 0) invalid("task.hidden", "must be positive");
    if (t.model == ModelKind::quadratic_probe && !(t.probe_h_min > 0.0 && t.probe_h_max >= t.probe_h_min)) {
        invalid("task.probe_h_min", "need 0 < probe_h_min <= probe_h_max");
    }
    if (t.source == "synthetic" && t.trigger_size > t.dim) invalid("task.trigger_size", "exceeds dim");
    if (t.trigger_target < 0 || static_cast<std::size_t>(t.trigger_target) >= t.classes) {
        invalid("task.trigger_target", "not a class id");
    }
    if (!(t.poison_fraction >= 0.0 && t.poison_fraction <= 1.0)) {
        invalid("task.poison_fraction", "must lie in [0, 1]");
    }

    const auto& f = federation;
    if (f.clients == 0) invalid("federation.clients", "must be positive");
    if (!(f.noniid_q >= 1.0 / static_cast<double>(t.classes) - 1e-12 && f.noniid_q <= 1.0)) {
        invalid("federation.noniid_q", "must lie in [1/classes, 1]");
    }
    if (!(f.learning_rate > 0.0)) invalid("federation.learning_rate", "must be positive");
    if (f.rounds == 0) invalid("federation.rounds", "must be positive");
    if (!(f.malicious_fraction >= 0.0 && f.malicious_fraction < 1.0)) {
        invalid("federation.malicious_fraction", "must lie in [0, 1)");
    }
    if (!(f.fu_malicious_fraction >= 0.0 && f.fu_malicious_fraction < 1.0)) {
        invalid("federation.fu_malicious_fraction", "must lie in [0, 1)");
    }
    if (f.aggregators.empty()) invalid("federation.aggregators", "must not be empty");
    if (f.detection == DetectionMode::subset) {
        for (auto id : f.detected_ids) {
            if (id >= f.clients) invalid("federation.detected_ids", "id " + std::to_string(id) + " out of range");
        }
    }
    if (f.threads == 0) invalid("federation.threads", "must be positive");

    const auto& a = attack;
    if (a.fl.empty()) invalid("attack.fl", "must not be empty");
    if (a.fu.empty()) invalid("attack.fu", "must not be empty");
    if (a.knowledge.empty()) invalid("attack.knowledge", "must not be empty");
    for (auto k : a.fl) {
        if (k == AttackKind::bad_unlearn || k == AttackKind::adaptive) {
            invalid("attack.fl", std::string(to_string(k)) + " is an unlearning-phase attack");
        }
    }
    if (!(a.trim_b >= 1.0)) invalid("attack.trim_b", "must be at least 1");
    if (!(a.eps_grid.lo > 0.0 && a.eps_grid.hi >= a.eps_grid.lo)) invalid("attack.eps_lo", "need 0 < eps_lo <= eps_hi");
    if (a.eps_grid.points == 0) invalid("attack.eps_points", "must be positive");

    const auto& u = unlearn;
    if (u.methods.empty()) invalid("unlearn.methods", "must not be empty");
    if (u.options.buffer_r == 0) invalid("unlearn.buffer_r", "must be positive");
    if (u.options.lbfgs_s == 0) invalid("unlearn.lbfgs_s", "must be positive");
    if (!(u.options.sigma_min > 0.0)) invalid("unlearn.sigma_min", "must be positive");
    if (u.options.fedrecover.correction_period == 0) invalid("unlearn.fedrecover_correction", "must be positive");
    if (!(u.options.fedrecover.tau_factor > 0.0)) invalid("unlearn.fedrecover_tau", "must be positive");

    if (run.seeds.empty()) invalid("run.seeds", "must not be empty");
    if (run.cell_threads == 0) invalid("run.cell_threads", "must be positive");
}

std::string ExperimentConfig::canonical() const {
    std::ostringstream o;
    auto line = [&](const char* key, const std::string& v) { o << key << '=' << v << '\n'; };
    auto num = [](double x) { return fmt_double(x); };
    auto cnt = [](std::size_t x) { return std::to_string(x); };
    auto join = [](const auto& xs, auto fn) {
        std::string s;
        for (const auto& x : xs) {
            if (!s.empty()) s += ',';
            s += fn(x);
        }
        return s;
    };
    const auto& t = task;
    line("task.source", t.source);
    line("task.model", to_string(t.model));
    line("task.classes", cnt(t.classes));
    line("task.dim", cnt(t.dim));
    line("task.train_per_class", cnt(t.train_per_class));
    line("task.test_per_class", cnt(t.test_per_class));
    line("task.spread", num(t.spread));
    line("task.l2_lambda", num(t.l2_lambda));
    line("task.hidden", cnt(t.hidden));
    line("task.probe_h", num(t.probe_h_min) + ":" + num(t.probe_h_max));
    line("task.idx", t.idx_train_images + "|" + t.idx_train_labels + "|" + t.idx_test_images + "|" +
                         t.idx_test_labels);
    line("task.trigger", cnt(t.trigger_size) + ":" + num(t.trigger_value) + ":" +
                             std::to_string(t.trigger_target) + ":" + num(t.poison_fraction));
    const auto& f = federation;
    line("federation.clients", cnt(f.clients));
    line("federation.noniid_q", num(f.noniid_q));
    line("federation.learning_rate", num(f.learning_rate));
    line("federation.rounds", cnt(f.rounds));
    line("federation.batch_size", cnt(f.batch_size));
    line("federation.malicious_fraction", num(f.malicious_fraction));
    line("federation.fu_malicious_fraction", num(f.fu_malicious_fraction));
    line("federation.aggregators", join(f.aggregators, [](const AggregatorKind& k) { return k.name(); }));
    line("federation.detection", to_string(f.detection));
    line("federation.detected_ids", join(f.detected_ids, [](std::size_t x) { return std::to_string(x); }));
    const auto& a = attack;
    line("attack.fl", join(a.fl, [](AttackKind k) { return std::string(to_string(k)); }));
    line("attack.fu", join(a.fu, [](AttackKind k) { return std::string(to_string(k)); }));
    line("attack.knowledge", join(a.knowledge, [](Knowledge k) { return std::string(to_string(k)); }));
    line("attack.trim_b", num(a.trim_b));
    line("attack.lie_z", num(a.lie_z));
    line("attack.backdoor_scale", num(a.backdoor_scale));
    line("attack.eps", num(a.eps_grid.lo) + ":" + num(a.eps_grid.hi) + ":" + cnt(a.eps_grid.points) +
                           ":" + cnt(a.eps_grid.refine_points));
    line("attack.anchor", to_string(a.anchor));
    const auto& u = unlearn;
    line("unlearn.methods", join(u.methods, [](UnlearnMethod m) { return std::string(to_string(m)); }));
    line("unlearn.buffer_r", cnt(u.options.buffer_r));
    line("unlearn.lbfgs_s", cnt(u.options.lbfgs_s));
    line("unlearn.sigma_min", num(u.options.sigma_min));
    line("unlearn.rcond_floor", num(u.options.rcond_floor));
    line("unlearn.dir_filter_flipped", u.options.dir_filter_flipped ? "true" : "false");
    line("unlearn.rescale_exact", u.options.rescale_exact ? "true" : "false");
    line("unlearn.rescale_warmup", u.options.rescale_warmup ? "true" : "false");
    const auto& s = u.options.fedrecover;
    line("unlearn.fedrecover", cnt(s.warmup) + ":" + cnt(s.correction_period) + ":" + cnt(s.final_exact) +
                                   ":" + num(s.tau_factor));
    line("unlearn.shared_init", u.shared_init ? "true" : "false");
    line("unlearn.scratch_attackers_active", u.scratch_attackers_active ? "true" : "false");
    return o.str();
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string ExperimentConfig::digest() const { return fnv1a_hex(canonical()); }

}  // namespace fedunlearn
