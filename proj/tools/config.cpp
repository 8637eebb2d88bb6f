#include "config.hpp"

#include <charconv>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "motionsurv/errors.hpp"
#include "motionsurv/io.hpp"

namespace motionsurv::cli {
namespace {

namespace pt = boost::property_tree;

std::string strip(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    s = s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
        s = s.substr(1, s.size() - 2);
    }
    return s;
}

class Reader {
public:
    Reader(pt::ptree tree, std::map<std::string, std::string>& resolved) : tree_(std::move(tree)), resolved_(resolved) {}

    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (!v) return std::nullopt;
        return strip(*v);
    }

    void number(const std::string& key, double& value) {
        if (auto s = raw(key)) value = parse_double(*s, "config key '" + key + "'");
        resolved_[key] = format_double(value);
    }

    template <class Int>
    void integer(const std::string& key, Int& value) {
        if (auto s = raw(key)) {
            Int parsed{};
            const auto [end, ec] = std::from_chars(s->data(), s->data() + s->size(), parsed);
            if (ec != std::errc{} || end != s->data() + s->size()) {
                throw InputError("config key '" + key + "': expected a non-negative integer, got '" + *s + "'");
            }
            value = parsed;
        }
        resolved_[key] = std::to_string(value);
    }

    void flag(const std::string& key, bool& value) {
        if (auto s = raw(key)) {
            if (*s == "true" || *s == "1" || *s == "yes") {
                value = true;
            } else if (*s == "false" || *s == "0" || *s == "no") {
                value = false;
            } else {
                throw InputError("config key '" + key + "': expected true or false, got '" + *s + "'");
            }
        }
        resolved_[key] = value ? "true" : "false";
    }

    void path(const std::string& key, std::filesystem::path& value) {
        if (auto s = raw(key)) value = *s;
        resolved_[key] = value.string();
    }

    void list(const std::string& key, std::vector<std::string>& value) {
        if (auto s = raw(key)) {
            value.clear();
            std::stringstream ss(*s);
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = strip(item);
                if (!item.empty()) value.push_back(item);
            }
        }
        std::string joined;
        for (const auto& v : value) joined += (joined.empty() ? "" : ",") + v;
        resolved_[key] = joined;
    }

    void reject_unknown() const {
        for (const auto& [section, child] : tree_) {
            if (child.empty()) {
                if (!used_.count(section)) throw InputError("config: unknown key '" + section + "'");
                continue;
            }
            for (const auto& [key, _] : child) {
                const std::string full = section + "." + key;
                if (!used_.count(full)) throw InputError("config: unknown key '" + full + "'");
            }
        }
    }

private:
    pt::ptree tree_;
    std::map<std::string, std::string>& resolved_;
    std::set<std::string> used_;
};

void apply_assignment(pt::ptree& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw InputError("override '" + assignment + "': expected section.key=value");
    }
    tree.put(pt::ptree::path_type(strip(assignment.substr(0, eq)), '.'), assignment.substr(eq + 1));
}

}  // namespace

std::string ExperimentConfig::canonical_text() const {
    std::string out;
    for (const auto& [k, v] : resolved) out += k + "=" + v + "\n";
    return out;
}

std::uint64_t ExperimentConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_text()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
    pt::ptree tree;
    if (!path.empty()) {
        try {
            pt::read_ini(path.string(), tree);
        } catch (const pt::ini_parser_error& e) {
            throw InputError("config '" + path.string() + "': " + e.what());
        }
    }
    for (const auto& a : overrides.assignments) apply_assignment(tree, a);

    ExperimentConfig c;
    Reader r(std::move(tree), c.resolved);

    r.integer("seed", c.seed);
    if (overrides.seed) c.seed = *overrides.seed;
    c.resolved["seed"] = std::to_string(c.seed);
    r.integer("jobs", c.jobs);
    if (overrides.jobs) c.jobs = *overrides.jobs;
    c.resolved.erase("jobs");  // worker count never changes results
    r.flag("strict", c.strict);
    c.strict = c.strict || overrides.strict;
    c.resolved["strict"] = c.strict ? "true" : "false";

    auto& p = c.paths;
    r.path("paths.output_dir", p.output_dir);
    const auto under = [&](const char* key, std::filesystem::path& field, const char* name) {
        r.path(key, field);
        if (field.empty()) field = p.output_dir / name;
        c.resolved[key] = field.string();
    };
    r.flag("generate.binary", c.binary_motion);
    under("paths.motion_file", p.motion_file, c.binary_motion ? "motion.bin" : "motion.csv");
    under("paths.survival_file", p.survival_file, "survival.csv");
    under("paths.covariate_file", p.covariate_file, "covariates.csv");
    under("paths.model_file", p.model_file, "model.json");
    under("paths.risk_file", p.risk_file, "risks.csv");
    under("paths.tune_result", p.tune_result, "tune_best.json");

    auto& g = c.generate;
    r.integer("generate.n_subjects", g.n_subjects);
    r.integer("generate.vertex_count", g.vertex_count);
    r.integer("generate.frame_count", g.frame_count);
    r.number("generate.event_fraction_target", g.event_fraction_target);
    r.number("generate.signal_strength", g.signal_strength);
    r.number("generate.noise_sd", g.noise_sd);
    r.number("generate.signal_vertex_fraction", g.signal_vertex_fraction);
    r.number("generate.motion_coupling", g.motion_coupling);
    r.number("generate.base_amplitude", g.base_amplitude);
    r.number("generate.volumetric_correlation", g.volumetric_correlation);
    r.number("generate.baseline_hazard_per_day", g.baseline_hazard_per_day);

    auto& n = c.network;
    r.integer("train.hidden_units", n.hidden_units);
    r.integer("train.latent_dim", n.latent_dim);
    r.number("train.dropout_rate", n.dropout_rate);
    r.number("train.alpha", n.alpha);
    r.number("train.l1_penalty", n.l1_penalty);
    r.number("train.learning_rate", n.learning_rate);
    r.integer("train.epochs", c.training.epochs);
    r.integer("train.batch_size", c.training.batch_size);

    auto& s = c.swarm;
    r.integer("tune.n_particles", s.n_particles);
    r.integer("tune.n_iterations", s.n_iterations);
    r.number("tune.inertia", s.inertia);
    r.number("tune.cognitive", s.cognitive);
    r.number("tune.social", s.social);
    r.integer("tune.cv_folds", s.cv_folds);
    r.integer("tune.epochs", c.tune_training.epochs);
    r.integer("tune.batch_size", c.tune_training.batch_size);
    for (auto& axis : c.search.axes) {
        r.number("tune." + axis.name + "_lower", axis.lower);
        r.number("tune." + axis.name + "_upper", axis.upper);
    }

    r.integer("validate.replicates", c.validate.replicates);
    r.flag("validate.fast_validation", c.validate.fast_validation);
    c.validate.fast_validation = c.validate.fast_validation || overrides.fast_validation;
    c.resolved["validate.fast_validation"] = c.validate.fast_validation ? "true" : "false";
    r.list("validate.covariates", c.validate.covariates);
    r.integer("validate.permutations", c.validate.permutations);

    r.integer("interpret.neighbors", c.interpret.neighbors);
    r.flag("interpret.log_display", c.interpret.log_display);

    r.reject_unknown();

    if (c.jobs < 1) throw InputError("config key 'jobs': must be at least 1");
    if (c.validate.replicates < 1) throw InputError("config key 'validate.replicates': must be at least 1");
    if (c.interpret.neighbors < 1) throw InputError("config key 'interpret.neighbors': must be at least 1");
    g.validate();
    c.training.validate();
    c.tune_training.validate();
    c.search.validate();
    s.jobs = c.jobs;
    s.validate();
    return c;
}

}  // namespace motionsurv::cli
