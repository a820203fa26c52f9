#include "icda/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "icda/check.hpp"

namespace icda {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        int x = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad integer value for " + key + ": '" + v + "'");
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) parts.push_back(cur);
    }
    return parts;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (const auto& p : split_list(v)) out.push_back(parse_int(key, p));
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& v) {
    std::vector<std::uint64_t> out;
    for (const auto& p : split_list(v)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(p, &used));
            if (used != p.size()) throw std::invalid_argument(p);
        } catch (const std::exception&) {
            throw ConfigError("bad seed value for " + key + ": '" + p + "'");
        }
    }
    return out;
}

// "1200:0.1,1600:0.1"; empty or "none" clears the schedule.
std::vector<std::pair<int, double>> parse_schedule(const std::string& key, const std::string& v) {
    std::vector<std::pair<int, double>> out;
    if (v.empty() || v == "none") return out;
    for (const auto& p : split_list(v)) {
        std::size_t colon = p.find(':');
        if (colon == std::string::npos)
            throw ConfigError("schedule entries are iteration:factor; got '" + p + "'");
        out.emplace_back(parse_int(key, trim(p.substr(0, colon))),
                         parse_double(key, trim(p.substr(colon + 1))));
    }
    return out;
}

void set_value(ExperimentConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value) {
    const std::string full = section + "." + key;
    if (section == "dataset") {
        auto& d = cfg.dataset;
        if (key == "kind") d.kind = value;
        else if (key == "classes") d.classes = parse_int(full, value);
        else if (key == "dim") d.dim = parse_int(full, value);
        else if (key == "separation") d.separation = parse_double(full, value);
        else if (key == "n_per_class") d.n_per_class = parse_int(full, value);
        else if (key == "test_per_class") d.test_per_class = parse_int(full, value);
        else if (key == "imbalance_ratio") d.imbalance_ratio = parse_double(full, value);
        else if (key == "noise_kind") d.noise_kind = value;
        else if (key == "noise_rate") d.noise_rate = parse_double(full, value);
        else if (key == "d_signal") d.d_signal = parse_int(full, value);
        else if (key == "d_spur") d.d_spur = parse_int(full, value);
        else if (key == "train_group_ratio") d.train_group_ratio = parse_double(full, value);
        else if (key == "test_group_ratio") d.test_group_ratio = parse_double(full, value);
        else if (key == "label_flip") d.label_flip = parse_double(full, value);
        else if (key == "n_train") d.n_train = parse_int(full, value);
        else if (key == "n_test") d.n_test = parse_int(full, value);
        else if (key == "signal_scale") d.signal_scale = parse_double(full, value);
        else if (key == "spur_scale") d.spur_scale = parse_double(full, value);
        else throw ConfigError("unknown key " + full);
        return;
    }
    if (section == "model") {
        if (key == "widths") cfg.train.widths = parse_int_list(full, value);
        else throw ConfigError("unknown key " + full);
        return;
    }
    if (section == "optim") {
        auto& s = cfg.train.sgd;
        if (key == "lr") s.learning_rate = parse_double(full, value);
        else if (key == "momentum") s.momentum = parse_double(full, value);
        else if (key == "weight_decay") s.weight_decay = parse_double(full, value);
        else if (key == "schedule") s.schedule = parse_schedule(full, value);
        else throw ConfigError("unknown key " + full);
        return;
    }
    if (section == "train") {
        auto& t = cfg.train;
        if (key == "method") t.method = value;
        else if (key == "iterations") t.iterations = parse_int(full, value);
        else if (key == "batch_size") t.batch_size = parse_int(full, value);
        else if (key == "eval_every") t.eval_every = parse_int(full, value);
        else if (key == "tail_k") t.tail_k = parse_int(full, value);
        else if (key == "seeds") cfg.seeds = parse_seed_list(full, value);
        else throw ConfigError("unknown key " + full);
        return;
    }
    if (section == "icda") {
        auto& c = cfg.train.icda;
        if (key == "lambda0") c.lambda0 = parse_double(full, value);
        else if (key == "beta") c.beta = parse_double(full, value);
        else if (key == "tau") c.tau = parse_double(full, value);
        else if (key == "cov_mode") {
            if (value == "full") c.cov_mode = CovMode::full;
            else if (value == "diagonal") c.cov_mode = CovMode::diagonal;
            else throw ConfigError("icda.cov_mode must be full or diagonal; got '" + value + "'");
        } else if (key == "alpha_mode") cfg.train.alpha_mode = value;
        else if (key == "fixed_alpha") cfg.train.fixed_alpha = parse_double(full, value);
        else if (key == "noise_mode") {
            if (value == "true") c.noise_mode = true;
            else if (value == "false") c.noise_mode = false;
            else throw ConfigError("icda.noise_mode must be true or false; got '" + value + "'");
        } else throw ConfigError("unknown key " + full);
        return;
    }
    if (section == "risda") {
        if (key == "alpha_r") cfg.train.risda_alpha = parse_double(full, value);
        else if (key == "beta_r") cfg.train.risda_beta = parse_double(full, value);
        else if (key == "confusion_decay") cfg.train.confusion_decay = parse_double(full, value);
        else throw ConfigError("unknown key " + full);
        return;
    }
    if (section == "meta") {
        if (key == "eta2") cfg.train.eta2 = parse_double(full, value);
        else if (key == "meta_batch") cfg.train.meta_batch_size = parse_int(full, value);
        else if (key == "meta_per_class") cfg.meta_per_class = parse_int(full, value);
        else if (key == "net_init") cfg.train.net_init = value;
        else throw ConfigError("unknown key " + full);
        return;
    }
    if (section == "output") {
        if (key == "dir") cfg.out_dir = value;
        else throw ConfigError("unknown key " + full);
        return;
    }
    throw ConfigError("unknown section [" + section + "]");
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value; got '" +
                              line + "'");
        if (section.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": key before any [section]");
        set_value(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be section.key=value; got '" + assignment + "'");
    std::string path = trim(assignment.substr(0, eq));
    std::string value = trim(assignment.substr(eq + 1));
    std::size_t dot = path.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == path.size())
        throw ConfigError("override key must be section.key; got '" + path + "'");
    set_value(cfg, path.substr(0, dot), path.substr(dot + 1), value);
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::ostringstream os;
    const auto& d = cfg.dataset;
    os << "[dataset]\n";
    os << "kind = " << d.kind << "\n";
    os << "classes = " << d.classes << "\n";
    os << "dim = " << d.dim << "\n";
    os << "separation = " << fmt(d.separation) << "\n";
    os << "n_per_class = " << d.n_per_class << "\n";
    os << "test_per_class = " << d.test_per_class << "\n";
    os << "imbalance_ratio = " << fmt(d.imbalance_ratio) << "\n";
    os << "noise_kind = " << d.noise_kind << "\n";
    os << "noise_rate = " << fmt(d.noise_rate) << "\n";
    os << "d_signal = " << d.d_signal << "\n";
    os << "d_spur = " << d.d_spur << "\n";
    os << "train_group_ratio = " << fmt(d.train_group_ratio) << "\n";
    os << "test_group_ratio = " << fmt(d.test_group_ratio) << "\n";
    os << "label_flip = " << fmt(d.label_flip) << "\n";
    os << "n_train = " << d.n_train << "\n";
    os << "n_test = " << d.n_test << "\n";
    os << "signal_scale = " << fmt(d.signal_scale) << "\n";
    os << "spur_scale = " << fmt(d.spur_scale) << "\n";

    os << "[model]\n";
    os << "widths = ";
    for (std::size_t i = 0; i < cfg.train.widths.size(); ++i)
        os << (i ? "," : "") << cfg.train.widths[i];
    os << "\n";

    const auto& s = cfg.train.sgd;
    os << "[optim]\n";
    os << "lr = " << fmt(s.learning_rate) << "\n";
    os << "momentum = " << fmt(s.momentum) << "\n";
    os << "weight_decay = " << fmt(s.weight_decay) << "\n";
    os << "schedule = ";
    if (s.schedule.empty()) os << "none";
    for (std::size_t i = 0; i < s.schedule.size(); ++i)
        os << (i ? "," : "") << s.schedule[i].first << ":" << fmt(s.schedule[i].second);
    os << "\n";

    const auto& t = cfg.train;
    os << "[train]\n";
    os << "method = " << t.method << "\n";
    os << "iterations = " << t.iterations << "\n";
    os << "batch_size = " << t.batch_size << "\n";
    os << "eval_every = " << t.eval_every << "\n";
    os << "tail_k = " << t.tail_k << "\n";
    os << "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? "," : "") << cfg.seeds[i];
    os << "\n";

    os << "[icda]\n";
    os << "lambda0 = " << fmt(t.icda.lambda0) << "\n";
    os << "beta = " << fmt(t.icda.beta) << "\n";
    os << "tau = " << fmt(t.icda.tau) << "\n";
    os << "cov_mode = " << (t.icda.cov_mode == CovMode::full ? "full" : "diagonal") << "\n";
    os << "alpha_mode = " << t.alpha_mode << "\n";
    os << "fixed_alpha = " << fmt(t.fixed_alpha) << "\n";
    os << "noise_mode = " << (t.icda.noise_mode ? "true" : "false") << "\n";

    os << "[risda]\n";
    os << "alpha_r = " << fmt(t.risda_alpha) << "\n";
    os << "beta_r = " << fmt(t.risda_beta) << "\n";
    os << "confusion_decay = " << fmt(t.confusion_decay) << "\n";

    os << "[meta]\n";
    os << "eta2 = " << fmt(t.eta2) << "\n";
    os << "meta_batch = " << t.meta_batch_size << "\n";
    os << "meta_per_class = " << cfg.meta_per_class << "\n";
    os << "net_init = " << t.net_init << "\n";

    os << "[output]\n";
    os << "dir = " << cfg.out_dir << "\n";
    return os.str();
}

void validate_config(const ExperimentConfig& cfg) {
    const auto& t = cfg.train;
    if (t.method != "ce" && t.method != "la" && t.method != "isda" && t.method != "risda" &&
        t.method != "icda" && t.method != "meta_icda")
        throw ConfigError("train.method must be one of ce/la/isda/risda/icda/meta_icda; got '" +
                          t.method + "'");
    if (cfg.dataset.kind != "gaussian" && cfg.dataset.kind != "spurious")
        throw ConfigError("dataset.kind must be gaussian or spurious; got '" + cfg.dataset.kind +
                          "'");
    if (cfg.dataset.noise_kind != "none" && cfg.dataset.noise_kind != "uniform" &&
        cfg.dataset.noise_kind != "pair_flip")
        throw ConfigError("dataset.noise_kind must be none, uniform, or pair_flip; got '" +
                          cfg.dataset.noise_kind + "'");
    if (t.alpha_mode != "direct" && t.alpha_mode != "noisy" && t.alpha_mode != "fixed")
        throw ConfigError("icda.alpha_mode must be direct, noisy, or fixed; got '" + t.alpha_mode +
                          "'");
    if (t.net_init != "zeros" && t.net_init != "random")
        throw ConfigError("meta.net_init must be zeros or random; got '" + t.net_init + "'");
    if (cfg.seeds.empty()) throw ConfigError("train.seeds must list at least one seed");
    if (t.iterations < 1) throw ConfigError("train.iterations must be positive");
    if (t.batch_size < 1) throw ConfigError("train.batch_size must be positive");
    if (t.eval_every < 1) throw ConfigError("train.eval_every must be positive");
    if (t.widths.empty()) throw ConfigError("model.widths must list at least one layer");
    for (int w : t.widths)
        if (w < 1) throw ConfigError("model.widths entries must be positive");
    if (cfg.dataset.classes < 2) throw ConfigError("dataset.classes must be at least 2");
    if (t.method == "meta_icda") {
        if (cfg.meta_per_class < 1)
            throw ConfigError("meta.meta_per_class must be positive for meta_icda");
        if (t.meta_batch_size < 1)
            throw ConfigError("meta.meta_batch must be positive for meta_icda");
        if (t.meta_batch_size > cfg.meta_per_class * cfg.dataset.classes)
            throw ConfigError("meta.meta_batch exceeds the meta split size");
    }
}

}  // namespace icda
