#include "fedunlearn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "fedunlearn/fl_engine.hpp"
#include "fedunlearn/parallel.hpp"
#include "fedunlearn/report_json.hpp"
#include "fedunlearn/rng.hpp"
#include "fedunlearn/unlearn.hpp"

namespace fedunlearn {

namespace {

std::string fixed4(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", x);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::optional<double> parse_opt_double(const std::string& s) {
    if (s == "NA" || s.empty()) return std::nullopt;
    return std::stod(s);
}

std::string file_safe(std::string s) {
    for (char& c : s) {
        if (c == ':' || c == '/' || c == ' ') c = '-';
    }
    return s;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

const std::string& csv_header() {
    static const std::string h =
        "digest,axis,value,method,arr,fl_attack,fu_attack,knowledge,seed,ter,asr,bound_holds,exact_requests";
    return h;
}

std::string csv_line(const ResultRow& r) {
    std::ostringstream o;
    o << r.digest << ',' << r.axis << ',' << r.value << ',' << r.method << ',' << r.arr << ','
      << r.fl_attack << ',' << r.fu_attack << ',' << r.knowledge << ',' << r.seed << ','
      << (r.ter ? fixed4(*r.ter) : "NA") << ',' << (r.asr ? fixed4(*r.asr) : "NA") << ','
      << (r.bound_holds ? (*r.bound_holds ? "1" : "0") : "NA") << ','
      << (r.exact_requests ? std::to_string(*r.exact_requests) : "NA");
    return o.str();
}

std::vector<ResultRow> read_rows_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != csv_header()) throw std::runtime_error(path.string() + ": unexpected header");
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 13) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 13 fields");
        }
        ResultRow r;
        r.digest = f[0];
        r.axis = f[1];
        r.value = f[2];
        r.method = f[3];
        r.arr = f[4];
        r.fl_attack = f[5];
        r.fu_attack = f[6];
        r.knowledge = f[7];
        r.seed = std::stoull(f[8]);
        r.ter = parse_opt_double(f[9]);
        r.asr = parse_opt_double(f[10]);
        if (f[11] != "NA") r.bound_holds = f[11] == "1";
        if (f[12] != "NA") r.exact_requests = std::stoull(f[12]);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_rows_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << csv_header() << '\n';
    for (const auto& r : rows) out << csv_line(r) << '\n';
}

Task build_task(const ExperimentConfig& config, std::uint64_t seed) {
    const auto& tc = config.task;
    Task task;
    if (tc.source == "synthetic") {
        task.data = make_synthetic_task(tc.classes, tc.dim, tc.train_per_class, tc.test_per_class,
                                        tc.spread, derive_seed(seed, {seed_tag::task}));
    } else {
        task.data.train = load_idx(tc.idx_train_images, tc.idx_train_labels, tc.classes);
        task.data.test = load_idx(tc.idx_test_images, tc.idx_test_labels, tc.classes);
    }
    const std::size_t d = task.data.train.dim();
    task.model.kind = tc.model;
    task.model.input_dim = d;
    task.model.num_classes = tc.classes;
    task.model.hidden = tc.hidden;
    task.model.l2_lambda = tc.l2_lambda;
    if (tc.model == ModelKind::quadratic_probe) {
        task.model.probe_hessian.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double frac = d == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(d - 1);
            task.model.probe_hessian[j] = tc.probe_h_min * std::pow(tc.probe_h_max / tc.probe_h_min, frac);
        }
    }
    task.model.validate();
    task.trigger.value = tc.trigger_value;
    task.trigger.target_label = tc.trigger_target;
    task.trigger.poison_fraction = tc.poison_fraction;
    const std::size_t size = std::min(tc.trigger_size, d);
    for (std::size_t j = d - size; j < d; ++j) task.trigger.coordinates.push_back(j);
    if (tc.model != ModelKind::quadratic_probe && !task.trigger.coordinates.empty()) {
        task.asr_set = make_asr_set(task.data.test, task.trigger);
    }
    return task;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config) {
    std::filesystem::path out = config.run.output;
    if (out.is_relative()) {
        if (const char* root = std::getenv(kOutputRootEnv); root && *root) out = std::filesystem::path(root) / out;
    }
    return out;
}

namespace {

AttackSpec make_attack_spec(const ExperimentConfig& c, AttackKind kind, Knowledge knowledge,
                            const TriggerSpec& trigger) {
    AttackSpec s;
    s.kind = kind;
    s.knowledge = knowledge;
    s.trim_b = c.attack.trim_b;
    s.lie_z = c.attack.lie_z;
    s.trigger = trigger;
    s.backdoor_scale = c.attack.backdoor_scale;
    s.eps_grid = c.attack.eps_grid;
    s.anchor = c.attack.anchor;
    return s;
}

}  // namespace

Federation build_federation(const ExperimentConfig& config, const Task& task, std::uint64_t seed,
                            const AggregatorKind& arr, AttackKind fl_attack) {
    const auto& fc = config.federation;
    const std::size_t n = fc.clients;
    const auto m_fl = static_cast<std::size_t>(std::floor(fc.malicious_fraction * static_cast<double>(n) + 1e-9));
    const auto m_fu = static_cast<std::size_t>(
        std::floor(fc.fu_malicious_fraction * static_cast<double>(n - m_fl) + 1e-9));
    Federation fed;
    fed.model = task.model;
    fed.shards = partition_noniid(task.data.train, n, fc.noniid_q, derive_seed(seed, {seed_tag::partition}));
    fed.roster = ClientRoster::assign(n, m_fl, m_fu, make_attack_spec(config, fl_attack, Knowledge::full, task.trigger),
                                      AttackSpec{}, seed);
    fed.arr = arr;
    fed.learning_rate = fc.learning_rate;
    fed.rounds = fc.rounds;
    fed.batch_size = fc.batch_size;
    fed.seed = seed;
    fed.threads = fc.threads;
    fed.prepare_triggers();
    return fed;
}

namespace {

bool has_method(const ExperimentConfig& c, UnlearnMethod m) {
    return std::find(c.unlearn.methods.begin(), c.unlearn.methods.end(), m) != c.unlearn.methods.end();
}

struct Metrics {
    std::optional<double> ter;
    std::optional<double> asr;
};

Metrics evaluate(const Task& task, const ParamVector& w) {
    if (task.model.kind == ModelKind::quadratic_probe) return {};
    Metrics m;
    m.ter = test_error_rate(task.model, w, task.data.test);
    if (task.asr_set.size() > 0) {
        m.asr = attack_success_rate(task.model, w, task.asr_set, task.trigger.target_label);
    }
    return m;
}

struct GroupOutput {
    std::vector<ResultRow> rows;
    std::vector<std::string> failures;
    std::vector<std::pair<std::string, std::string>> reports;  // file name, JSON text
};

/// One (seed, ARR, FL attack) group: a single FL run shared by all its FU cells.
GroupOutput run_group(const ExperimentConfig& cfg, const Task& task, const std::string& digest,
                      const RunLabels& labels, std::uint64_t seed, const AggregatorKind& arr,
                      AttackKind fl_kind, const std::filesystem::path& out_dir, bool write_artifacts) {
    GroupOutput out;
    const auto& fc = cfg.federation;
    const std::size_t n = fc.clients;
    Federation fed = build_federation(cfg, task, seed, arr, fl_kind);

    auto make_row = [&](const std::string& method, AttackKind fu, Knowledge kn) {
        ResultRow r;
        r.digest = digest;
        r.axis = labels.axis;
        r.value = labels.value;
        r.method = method;
        r.arr = arr.name();
        r.fl_attack = to_string(fl_kind);
        r.fu_attack = to_string(fu);
        r.knowledge = to_string(kn);
        r.seed = seed;
        return r;
    };
    const std::string group_tag = digest + "_" + file_safe(arr.name()) + "_" + to_string(fl_kind) + "_s" +
                                  std::to_string(seed);

    // training phase
    auto start = std::chrono::steady_clock::now();
    FlOptions fl_opt;
    const double bytes = 8.0 * static_cast<double>(task.model.param_count()) * static_cast<double>(n + 1) *
                         static_cast<double>(fc.rounds + 1);
    if (bytes > fc.history_budget_mb * 1024.0 * 1024.0) {
        fl_opt.history_file = out_dir / "history" / (group_tag + ".bin");
    }
    const FlResult fl = run_fl(fed, fl_opt);
    const double fl_seconds = seconds_since(start);
    const Metrics learned = evaluate(task, fl.learned_model);

    // detection
    const auto removed = detection_oracle(fed.roster, fc.detection, fc.detected_ids);
    Federation fed_rem = fed;
    apply_detection(fed_rem.roster, removed);
    const auto remaining = fed_rem.roster.remaining();
    if (remaining.empty()) {
        out.failures.push_back(group_tag + ": detection removed every client");
        return out;
    }

    const bool want_ug = has_method(cfg, UnlearnMethod::unlearnguard_dist) ||
                         has_method(cfg, UnlearnMethod::unlearnguard_dir);
    std::optional<FlResult> scratch;
    double scratch_seconds = 0.0;
    if (has_method(cfg, UnlearnMethod::scratch) || (want_ug && cfg.unlearn.check_bound)) {
        start = std::chrono::steady_clock::now();
        std::optional<ParamVector> init;
        if (cfg.unlearn.shared_init) init = fl.history->global_model(0);
        scratch = train_from_scratch(fed_rem, init, cfg.unlearn.scratch_attackers_active);
        scratch_seconds = seconds_since(start);
    }
    std::optional<ParamVector> historical;
    double historical_seconds = 0.0;
    if (has_method(cfg, UnlearnMethod::historical)) {
        start = std::chrono::steady_clock::now();
        historical = historical_only(fed_rem, *fl.history);
        historical_seconds = seconds_since(start);
    }
    const Metrics scratch_m = scratch ? evaluate(task, scratch->learned_model) : Metrics{};
    const Metrics hist_m = historical ? evaluate(task, *historical) : Metrics{};

    std::optional<ConvexityProfile> profile;
    const bool convex = task.model.kind == ModelKind::quadratic_probe ||
                        (task.model.kind == ModelKind::softmax_regression && task.model.l2_lambda > 0.0);
    if (convex) {
        std::vector<std::size_t> rows;
        for (std::size_t id : remaining) {
            const auto& src = fed.shards.source_rows[id];
            rows.insert(rows.end(), src.begin(), src.end());
        }
        profile = convexity_profile(task.model, task.data.train.subset(rows));
    }

    const std::vector<UnlearnMethod> fu_methods{UnlearnMethod::fedrecover, UnlearnMethod::unlearnguard_dist,
                                                UnlearnMethod::unlearnguard_dir};
    // FU runs without an FU attack do not depend on the knowledge setting
    std::map<std::string, std::pair<UnlearnReport, double>> fu_cache;

    for (AttackKind fu_kind : cfg.attack.fu) {
        for (Knowledge kn : cfg.attack.knowledge) {
            for (UnlearnMethod method : cfg.unlearn.methods) {
                ResultRow row = make_row(to_string(method), fu_kind, kn);
                switch (method) {
                    case UnlearnMethod::learned:
                        row.ter = learned.ter;
                        row.asr = learned.asr;
                        row.wall_seconds = fl_seconds;
                        out.rows.push_back(row);
                        continue;
                    case UnlearnMethod::scratch:
                        row.ter = scratch_m.ter;
                        row.asr = scratch_m.asr;
                        row.wall_seconds = scratch_seconds;
                        out.rows.push_back(row);
                        continue;
                    case UnlearnMethod::historical:
                        row.ter = hist_m.ter;
                        row.asr = hist_m.asr;
                        row.wall_seconds = historical_seconds;
                        out.rows.push_back(row);
                        continue;
                    default: break;
                }
                const Knowledge eff_kn = fu_kind == AttackKind::none ? Knowledge::full : kn;
                const std::string key = std::string(to_string(fu_kind)) + "/" + to_string(eff_kn) + "/" +
                                        to_string(method);
                auto it = fu_cache.find(key);
                if (it == fu_cache.end()) {
                    Federation fed_fu = fed_rem;
                    const AttackSpec fu_spec = make_attack_spec(cfg, fu_kind, eff_kn, task.trigger);
                    for (auto& c : fed_fu.roster.clients) {
                        if (c.role == Role::malicious) c.fu_attack = fu_spec;
                    }
                    if (fu_kind == AttackKind::backdoor) fed_fu.prepare_triggers();

                    UnlearnOptions opt = cfg.unlearn.options;
                    const bool premises = arr.rule == AggregatorRule::fedavg && fu_kind == AttackKind::none &&
                                          convex && removed == detection_oracle(fed.roster, DetectionMode::perfect);
                    opt.measure_error = cfg.unlearn.check_bound && premises && scratch.has_value();
                    if (scratch) opt.reference = &scratch->trajectory;
                    start = std::chrono::steady_clock::now();
                    UnlearnReport rep;
                    if (method == UnlearnMethod::fedrecover) {
                        rep = fedrecover_baseline(fed_fu, *fl.history, fl.learned_model, opt);
                    } else {
                        rep = unlearnguard(fed_fu, *fl.history, fl.learned_model,
                                           method == UnlearnMethod::unlearnguard_dist ? FilterVariant::dist
                                                                                      : FilterVariant::dir,
                                           opt);
                    }
                    const double secs = seconds_since(start);
                    rep.profile = profile;
                    const Metrics m = evaluate(task, rep.unlearned_model);
                    rep.ter = m.ter.value_or(std::nan(""));
                    rep.asr = m.asr.value_or(std::nan(""));
                    it = fu_cache.emplace(key, std::make_pair(std::move(rep), secs)).first;
                }
                const UnlearnReport& rep = it->second.first;
                const std::string cell = group_tag + "_" + to_string(fu_kind) + "_" + to_string(kn) + "_" +
                                         to_string(method);

                // runtime invariants
                const std::size_t expected = rep.remaining.size() * (rep.rounds - rep.warmup_rounds);
                if (rep.estimated_count + rep.exact_count != expected) {
                    out.failures.push_back(cell + ": estimate/exact counts do not sum to (n-m)(T-warmup)");
                }
                if (rep.exact_count < rep.filter_rejections) {
                    out.failures.push_back(cell + ": fewer exact requests than filter rejections");
                }
                if (!rep.unlearned_model.is_finite()) out.failures.push_back(cell + ": non-finite model");

                if (rep.ter == rep.ter) row.ter = rep.ter;
                if (rep.asr == rep.asr) row.asr = rep.asr;
                row.exact_requests = rep.exact_count;
                row.wall_seconds = it->second.second;
                if (method != UnlearnMethod::fedrecover && rep.error_measured) {
                    const auto check = theorem_bound(rep);
                    if (check.preconditions_ok) {
                        row.bound_holds = check.all_hold();
                        if (!check.all_hold()) out.failures.push_back(cell + ": convergence bound violated");
                    }
                }
                out.rows.push_back(row);

                if (write_artifacts) {
                    nlohmann::json echo = {{"digest", digest},       {"arr", arr.name()},
                                           {"fl_attack", to_string(fl_kind)},
                                           {"fu_attack", to_string(fu_kind)},
                                           {"knowledge", to_string(kn)}, {"seed", seed},
                                           {"axis", labels.axis},   {"value", labels.value}};
                    out.reports.emplace_back(cell + ".json", report_to_json(rep, echo).dump(1));
                }
            }
        }
    }
    return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const RunLabels& labels, bool write_artifacts) {
    config.validate();
    ExperimentResult result;
    result.output_dir = resolve_output_dir(config);
    const std::string digest = config.digest();

    struct Group {
        std::size_t seed_index;
        AggregatorKind arr;
        AttackKind fl;
    };
    std::vector<Group> groups;
    for (std::size_t s = 0; s < config.run.seeds.size(); ++s) {
        for (const auto& arr : config.federation.aggregators) {
            for (AttackKind fl : config.attack.fl) groups.push_back({s, arr, fl});
        }
    }
    std::vector<std::optional<Task>> tasks(config.run.seeds.size());
    for (std::size_t s = 0; s < tasks.size(); ++s) tasks[s] = build_task(config, config.run.seeds[s]);

    std::vector<GroupOutput> outputs(groups.size());
    parallel_for(groups.size(), config.run.cell_threads, [&](std::size_t g) {
        const auto& grp = groups[g];
        outputs[g] = run_group(config, *tasks[grp.seed_index], digest, labels, config.run.seeds[grp.seed_index],
                               grp.arr, grp.fl, result.output_dir, write_artifacts);
    });

    for (auto& o : outputs) {
        result.rows.insert(result.rows.end(), o.rows.begin(), o.rows.end());
        result.invariant_failures.insert(result.invariant_failures.end(), o.failures.begin(), o.failures.end());
    }
    if (write_artifacts) {
        const auto dir = result.output_dir;
        std::filesystem::create_directories(dir / "reports");
        write_rows_csv(dir / "rows.csv", result.rows);
        std::ofstream timings(dir / "timings.csv", std::ios::binary | std::ios::trunc);
        timings << "digest,axis,value,method,arr,fl_attack,fu_attack,knowledge,seed,seconds\n";
        for (const auto& r : result.rows) {
            timings << r.digest << ',' << r.axis << ',' << r.value << ',' << r.method << ',' << r.arr << ','
                    << r.fl_attack << ',' << r.fu_attack << ',' << r.knowledge << ',' << r.seed << ','
                    << fixed4(r.wall_seconds) << '\n';
        }
        for (const auto& o : outputs) {
            for (const auto& [name, text] : o.reports) {
                std::ofstream f(dir / "reports" / name, std::ios::binary | std::ios::trunc);
                f << text << '\n';
            }
        }
        std::ofstream canon(dir / "config.canonical.txt", std::ios::binary | std::ios::trunc);
        canon << config.canonical();
    }
    return result;
}

ExperimentResult run_experiment(const std::filesystem::path& config_path) {
    return run_experiment(ExperimentConfig::load(config_path));
}

TableTemplate table_template_from_string(const std::string& name) {
    if (name == "t1") return TableTemplate::t1;
    if (name == "t2") return TableTemplate::t2;
    if (name == "t3") return TableTemplate::t3;
    if (name == "t4") return TableTemplate::t4;
    if (name == "ablation") return TableTemplate::ablation;
    throw std::invalid_argument("unknown table template '" + name + "' (t1, t2, t3, t4, ablation)");
}

namespace {

std::size_t display_width(const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0U) != 0x80U) ++w;
    }
    return w;
}

template <typename T>
void push_unique(std::vector<T>& v, const T& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

struct Accum {
    double ter = 0.0;
    double asr = 0.0;
    std::size_t n_ter = 0;
    std::size_t n_asr = 0;
    bool backdoor = false;
};

}  // namespace

RenderedTable emit_table(const std::vector<ResultRow>& rows, TableTemplate tmpl) {
    std::vector<std::string> row_keys;
    std::vector<std::string> col_keys;
    std::map<std::pair<std::string, std::string>, Accum> cells;
    std::string corner;
    const std::vector<std::string> fu_cols{"learned", "scratch", "historical", "fedrecover", "ug_dist", "ug_dir"};

    for (const auto& r : rows) {
        std::string rk;
        std::string ck;
        switch (tmpl) {
            case TableTemplate::t1:
                if (r.method != "learned") continue;
                corner = "FL attack";
                rk = r.fl_attack;
                ck = r.arr;
                break;
            case TableTemplate::t2:
                if (r.method != "scratch" && r.method != "historical") continue;
                corner = "ARR / FL attack";
                rk = r.arr + " / " + r.fl_attack;
                ck = r.method;
                break;
            case TableTemplate::t3:
                if (r.knowledge != "full") continue;
                corner = "ARR / FL -> FU";
                rk = r.arr + " / " + r.fl_attack + " -> " + r.fu_attack;
                ck = r.method;
                break;
            case TableTemplate::t4:
                if (r.fu_attack == "none") continue;
                if (r.method != "fedrecover" && r.method != "ug_dist" && r.method != "ug_dir") continue;
                corner = "ARR / knowledge";
                rk = r.arr + " / " + r.knowledge;
                ck = r.method;
                break;
            case TableTemplate::ablation:
                corner = r.axis;
                rk = r.value;
                ck = r.method;
                break;
        }
        push_unique(row_keys, rk);
        push_unique(col_keys, ck);
        auto& a = cells[{rk, ck}];
        if (r.ter) {
            a.ter += *r.ter;
            ++a.n_ter;
        }
        if (r.asr) {
            a.asr += *r.asr;
            ++a.n_asr;
        }
        if (r.fl_attack == "backdoor" || r.fu_attack == "backdoor") a.backdoor = true;
    }
    if (tmpl != TableTemplate::t1) {
        // keep method columns in pipeline order
        std::vector<std::string> ordered;
        for (const auto& c : fu_cols) {
            if (std::find(col_keys.begin(), col_keys.end(), c) != col_keys.end()) ordered.push_back(c);
        }
        for (const auto& c : col_keys) push_unique(ordered, c);
        col_keys = std::move(ordered);
    }

    std::vector<std::vector<std::string>> grid;
    grid.push_back({corner.empty() ? "-" : corner});
    for (const auto& c : col_keys) grid.front().push_back(c);
    for (const auto& rk : row_keys) {
        std::vector<std::string> line{rk};
        for (const auto& ck : col_keys) {
            const auto it = cells.find({rk, ck});
            if (it == cells.end() || it->second.n_ter == 0) {
                line.push_back("—");
                continue;
            }
            const auto& a = it->second;
            std::string cell = fixed4(a.ter / static_cast<double>(a.n_ter));
            if (a.backdoor) {
                cell += " / " + (a.n_asr ? fixed4(a.asr / static_cast<double>(a.n_asr)) : std::string("—"));
            }
            line.push_back(cell);
        }
        grid.push_back(std::move(line));
    }

    std::vector<std::size_t> widths(grid.front().size(), 0);
    for (const auto& line : grid) {
        for (std::size_t j = 0; j < line.size(); ++j) widths[j] = std::max(widths[j], display_width(line[j]));
    }
    RenderedTable out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::string text_line;
        std::string csv_row;
        for (std::size_t j = 0; j < grid[i].size(); ++j) {
            const auto& s = grid[i][j];
            if (j) {
                text_line += "  ";
                csv_row += ',';
            }
            text_line += s + std::string(widths[j] - display_width(s), ' ');
            csv_row += s;
        }
        while (!text_line.empty() && text_line.back() == ' ') text_line.pop_back();
        out.text += text_line + '\n';
        out.csv += csv_row + '\n';
        if (i == 0) {
            std::size_t total = 0;
            for (auto w : widths) total += w;
            out.text += std::string(total + 2 * (widths.size() - 1), '-') + '\n';
        }
    }
    return out;
}

SweepAxis sweep_axis_from_string(const std::string& name) {
    if (name == "noniid_q") return SweepAxis::noniid_q;
    if (name == "malicious_fraction") return SweepAxis::malicious_fraction;
    if (name == "buffer_r") return SweepAxis::buffer_r;
    throw std::invalid_argument("unknown sweep axis '" + name + "' (noniid_q, malicious_fraction, buffer_r)");
}

const char* to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::noniid_q: return "noniid_q";
        case SweepAxis::malicious_fraction: return "malicious_fraction";
        case SweepAxis::buffer_r: return "buffer_r";
    }
    return "?";
}

SweepResult ablation_sweep(const ConfigDocument& doc, SweepAxis axis, const std::vector<std::string>& values,
                           bool write_artifacts) {
    if (values.empty()) throw std::invalid_argument("sweep: no values given");
    SweepResult result;
    std::filesystem::path base_dir;
    std::vector<std::string> order;
    std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> means;
    std::vector<std::string> methods;
    for (const auto& value : values) {
        ConfigDocument d = doc;
        switch (axis) {
            case SweepAxis::noniid_q: d.set("federation", "noniid_q", value); break;
            case SweepAxis::malicious_fraction: d.set("federation", "malicious_fraction", value); break;
            case SweepAxis::buffer_r: d.set("unlearn", "buffer_r", value); break;
        }
        ExperimentConfig cfg = ExperimentConfig::from_document(d);
        if (base_dir.empty()) base_dir = resolve_output_dir(cfg) / (std::string("sweep_") + to_string(axis));
        cfg.run.output = (base_dir / file_safe(value)).string();
        auto res = run_experiment(cfg, RunLabels{to_string(axis), value}, write_artifacts);
        for (const auto& r : res.rows) {
            push_unique(methods, r.method);
            if (!r.ter) continue;
            auto& m = means[{value, r.method}];
            m.first += *r.ter;
            ++m.second;
        }
        order.push_back(value);
        result.rows.insert(result.rows.end(), res.rows.begin(), res.rows.end());
        result.invariant_failures.insert(result.invariant_failures.end(), res.invariant_failures.begin(),
                                         res.invariant_failures.end());
    }
    std::ostringstream plot;
    plot << "x,method,ter\n";
    for (const auto& x : order) {
        for (const auto& m : methods) {
            const auto it = means.find({x, m});
            plot << x << ',' << m << ','
                 << (it == means.end() || it->second.second == 0
                         ? std::string("NA")
                         : fixed4(it->second.first / static_cast<double>(it->second.second)))
                 << '\n';
        }
    }
    result.plot_csv = plot.str();
    if (write_artifacts) {
        write_rows_csv(base_dir / "rows.csv", result.rows);
        std::ofstream f(base_dir / "plot.csv", std::ios::binary | std::ios::trunc);
        f << result.plot_csv;
    }
    return result;
}

}  // namespace fedunlearn
