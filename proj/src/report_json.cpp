#include "fedunlearn/report_json.hpp"

#include <fstream>

namespace fedunlearn {

using nlohmann::json;

json report_to_json(const UnlearnReport& report, const json& config_echo) {
    json doc;
    doc["method"] = report.method;
    doc["config"] = config_echo;
    doc["metrics"] = {
        {"ter", report.ter},
        {"asr", report.asr},
        {"rounds", report.rounds},
        {"warmup_rounds", report.warmup_rounds},
        {"estimated_count", report.estimated_count},
        {"exact_count", report.exact_count},
        {"warmup_exact_count", report.warmup_exact_count},
        {"filter_rejections", report.filter_rejections},
        {"hvp_failures", report.hvp_failures},
        {"measured_M", report.measured_M},
        {"error_measured", report.error_measured},
        {"remaining", report.remaining},
        {"removed", report.removed},
    };
    doc["traces"] = {
        {"distance", report.distance_trace},
        {"estimated_per_round", report.estimated_per_round},
        {"exact_per_round", report.exact_per_round},
        {"rejections_per_client", report.rejections_per_client},
    };
    json bound;
    bound["learning_rate"] = report.learning_rate;
    bound["premises"] = {
        {"fedavg", report.premises.fedavg},
        {"perfect_detection", report.premises.perfect_detection},
        {"no_fu_attack", report.premises.no_fu_attack},
        {"convex_task", report.premises.convex_task},
    };
    if (report.profile) {
        bound["mu"] = report.profile->mu;
        bound["L"] = report.profile->lipschitz_L;
    } else {
        bound["mu"] = nullptr;
        bound["L"] = nullptr;
    }
    const auto check = theorem_bound(report);
    bound["evaluated"] = check.preconditions_ok;
    bound["holds"] = check.all_hold();
    bound["violation"] = check.violation;
    bound["rhs"] = check.rhs;
    doc["bound"] = std::move(bound);
    doc["unlearned_model"] = report.unlearned_model.values();
    return doc;
}

UnlearnReport report_from_json(const json& doc) {
    UnlearnReport r;
    r.method = doc.at("method").get<std::string>();
    const auto& m = doc.at("metrics");
    r.ter = m.at("ter").is_null() ? 0.0 : m.at("ter").get<double>();
    r.asr = m.at("asr").is_null() ? 0.0 : m.at("asr").get<double>();
    r.rounds = m.at("rounds").get<std::size_t>();
    r.warmup_rounds = m.at("warmup_rounds").get<std::size_t>();
    r.estimated_count = m.at("estimated_count").get<std::size_t>();
    r.exact_count = m.at("exact_count").get<std::size_t>();
    r.warmup_exact_count = m.at("warmup_exact_count").get<std::size_t>();
    r.filter_rejections = m.at("filter_rejections").get<std::size_t>();
    r.hvp_failures = m.at("hvp_failures").get<std::size_t>();
    r.measured_M = m.at("measured_M").get<double>();
    r.error_measured = m.at("error_measured").get<bool>();
    r.remaining = m.at("remaining").get<std::vector<std::size_t>>();
    r.removed = m.at("removed").get<std::vector<std::size_t>>();
    const auto& t = doc.at("traces");
    r.distance_trace = t.at("distance").get<std::vector<double>>();
    r.estimated_per_round = t.at("estimated_per_round").get<std::vector<std::size_t>>();
    r.exact_per_round = t.at("exact_per_round").get<std::vector<std::size_t>>();
    r.rejections_per_client = t.at("rejections_per_client").get<std::vector<std::size_t>>();
    const auto& b = doc.at("bound");
    r.learning_rate = b.at("learning_rate").get<double>();
    const auto& p = b.at("premises");
    r.premises.fedavg = p.at("fedavg").get<bool>();
    r.premises.perfect_detection = p.at("perfect_detection").get<bool>();
    r.premises.no_fu_attack = p.at("no_fu_attack").get<bool>();
    r.premises.convex_task = p.at("convex_task").get<bool>();
    if (!b.at("mu").is_null() && !b.at("L").is_null()) {
        r.profile = ConvexityProfile{b.at("mu").get<double>(), b.at("L").get<double>(), r.measured_M};
    }
    if (doc.contains("unlearned_model")) {
        r.unlearned_model = ParamVector(doc.at("unlearned_model").get<std::vector<double>>());
    }
    return r;
}

UnlearnReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report " + path.string());
    return report_from_json(json::parse(in));
}

}  // namespace fedunlearn
