#include "ldd/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ldd {

namespace {

enum class KeyType { integer, real, boolean, text, choice };

struct KeyDef {
    const char* key;
    KeyType type;
    const char* def;
    const char* choices;  // comma-separated, for KeyType::choice
};

// Registry of every accepted key with its default.
const KeyDef kKeys[] = {
    {"env.grid", KeyType::integer, "8", nullptr},
    {"env.max_steps", KeyType::integer, "64", nullptr},
    {"env.step_penalty", KeyType::real, "0.01", nullptr},
    {"env.gamma", KeyType::real, "0.99", nullptr},
    {"env.n_classes", KeyType::integer, "12", nullptr},
    {"env.holdout_fraction", KeyType::real, "0.25", nullptr},
    {"env.split_seed", KeyType::integer, "0", nullptr},
    {"env.manual", KeyType::boolean, "true", nullptr},
    {"env.message", KeyType::boolean, "true", nullptr},

    {"model.d_tok", KeyType::integer, "64", nullptr},
    {"model.d_sym", KeyType::integer, "8", nullptr},
    {"model.d_key", KeyType::integer, "16", nullptr},
    {"model.d_val", KeyType::integer, "8", nullptr},
    {"model.hidden", KeyType::integer, "64", nullptr},
    {"model.repr", KeyType::integer, "128", nullptr},
    {"model.frame_stack", KeyType::integer, "1", nullptr},

    {"demos.policy", KeyType::choice, "expert", "expert,random,checkpoint"},
    {"demos.n", KeyType::integer, "1000", nullptr},
    {"demos.seed", KeyType::integer, "1", nullptr},
    {"demos.strip_actions", KeyType::boolean, "true", nullptr},

    {"pretrain.epochs", KeyType::integer, "20", nullptr},
    {"pretrain.batch", KeyType::integer, "64", nullptr},
    {"pretrain.eval_fraction", KeyType::real, "0.1", nullptr},
    {"pretrain.patience", KeyType::integer, "5", nullptr},
    {"pretrain.seed", KeyType::integer, "1", nullptr},
    {"pretrain.optimizer", KeyType::choice, "adam", "adam,rmsprop"},
    {"pretrain.lr", KeyType::real, "0.0001", nullptr},
    {"pretrain.beta1", KeyType::real, "0.99", nullptr},
    {"pretrain.beta2", KeyType::real, "0.999", nullptr},
    {"pretrain.eps", KeyType::real, "1e-06", nullptr},
    {"pretrain.alpha", KeyType::real, "0.99", nullptr},
    {"pretrain.epoch_cap", KeyType::integer, "12000", nullptr},

    {"vae.epochs", KeyType::integer, "10", nullptr},
    {"vae.batch", KeyType::integer, "64", nullptr},
    {"vae.beta", KeyType::real, "1", nullptr},
    {"vae.epoch_cap", KeyType::integer, "12000", nullptr},

    {"rl.variant", KeyType::choice, "scratch", "scratch,vae,ldd,ldd_minus_init,ldd_minus_distill,reward_shaping,inverse"},
    {"rl.total_frames", KeyType::integer, "2000000", nullptr},
    {"rl.n_actors", KeyType::integer, "4", nullptr},
    {"rl.unroll", KeyType::integer, "16", nullptr},
    {"rl.seed", KeyType::integer, "1", nullptr},
    {"rl.optimizer", KeyType::choice, "adam", "adam,rmsprop"},
    {"rl.lr", KeyType::real, "0.0001", nullptr},
    {"rl.beta1", KeyType::real, "0.99", nullptr},
    {"rl.beta2", KeyType::real, "0.999", nullptr},
    {"rl.eps", KeyType::real, "1e-06", nullptr},
    {"rl.alpha", KeyType::real, "0.99", nullptr},
    {"rl.alpha_v", KeyType::real, "0.5", nullptr},
    {"rl.alpha_d", KeyType::real, "1", nullptr},
    {"rl.entropy_cost", KeyType::real, "0.05", nullptr},
    {"rl.eval_cadence", KeyType::integer, "50000", nullptr},
    {"rl.eval_episodes", KeyType::integer, "100", nullptr},
    {"rl.checkpoint_cadence", KeyType::integer, "500000", nullptr},
    {"rl.shaping_lambda", KeyType::real, "0.1", nullptr},
    {"rl.alpha_d_anneal", KeyType::choice, "none", "none,linear"},
    {"rl.distill_norm", KeyType::choice, "mean_sq", "mean_sq,l2"},

    {"inverse.pretrain_frames", KeyType::integer, "100000", nullptr},
    {"inverse.rollouts", KeyType::integer, "500", nullptr},
    {"inverse.epochs", KeyType::integer, "10", nullptr},
    {"inverse.batch", KeyType::integer, "64", nullptr},
    {"inverse.holdout_fraction", KeyType::real, "0.1", nullptr},
    {"inverse.seed", KeyType::integer, "1", nullptr},
    {"inverse.lr", KeyType::real, "0.001", nullptr},
    {"inverse.epoch_cap", KeyType::integer, "20000", nullptr},

    {"bc.epochs", KeyType::integer, "5", nullptr},
    {"bc.batch", KeyType::integer, "64", nullptr},
    {"bc.seed", KeyType::integer, "1", nullptr},
    {"bc.lr", KeyType::real, "0.001", nullptr},
    {"bc.epoch_cap", KeyType::integer, "20000", nullptr},

    {"matrix.variants", KeyType::text, "ldd,scratch", nullptr},
    {"matrix.seeds", KeyType::text, "1,2,3", nullptr},
    {"matrix.demo_source", KeyType::choice, "expert", "expert,random"},
    {"matrix.message", KeyType::choice, "on", "on,off"},
    {"matrix.jobs", KeyType::integer, "1", nullptr},

    {"eval.episodes", KeyType::integer, "100", nullptr},
    {"eval.split", KeyType::choice, "eval", "train,eval"},
    {"eval.seed", KeyType::integer, "7", nullptr},

    {"plot.column", KeyType::choice, "eval_win_rate",
     "train_win_rate,eval_win_rate,mean_return,J_pi,J_V,entropy,J_d,shaped_penalty_mean"},
};

const KeyDef* find_key(const std::string& key) {
    for (const auto& k : kKeys)
        if (key == k.key) return &k;
    return nullptr;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& v, const std::string& where) {
    int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError(where + ": expected an integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& v, const std::string& where) {
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const std::string& where) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(where + ": expected true or false, got '" + v + "'");
}

bool choice_ok(const std::string& v, const char* choices) {
    std::string all(choices);
    size_t pos = 0;
    while (pos <= all.size()) {
        size_t next = all.find(',', pos);
        std::string c = all.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (c == v) return true;
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return false;
}

std::string canonical(const KeyDef& def, const std::string& raw, const std::string& where) {
    switch (def.type) {
        case KeyType::integer:
            return std::to_string(parse_int(raw, where));
        case KeyType::real:
            return format_double(parse_real(raw, where));
        case KeyType::boolean:
            return parse_bool(raw, where) ? "true" : "false";
        case KeyType::choice:
            if (!choice_ok(raw, def.choices))
                throw ConfigError(where + ": '" + raw + "' is not one of {" + def.choices + "} for " + def.key);
            return raw;
        case KeyType::text:
            return raw;
    }
    return raw;
}

}  // namespace

Config Config::defaults() {
    Config c;
    for (const auto& k : kKeys) c.values_[k.key] = canonical(k, k.def, k.key);
    return c;
}

void Config::set(const std::string& key, const std::string& value) {
    const KeyDef* def = find_key(key);
    if (!def) throw ConfigError("unknown key '" + key + "'");
    values_[key] = canonical(*def, value, key);
}

void Config::set_line(const std::string& raw, const std::string& origin, int lineno) {
    std::string where = origin + ":" + std::to_string(lineno);
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') return;
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const KeyDef* def = find_key(key);
    if (!def) throw ConfigError(where + ": unknown key '" + key + "'");
    values_[key] = canonical(*def, value, where);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
    Config c = defaults();
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) c.set_line(line, origin, ++lineno);
    return c;
}

Config Config::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path.filename().string());
}

int64_t Config::geti(const std::string& key) const { return parse_int(values_.at(key), key); }
double Config::getd(const std::string& key) const { return parse_real(values_.at(key), key); }
bool Config::getb(const std::string& key) const { return values_.at(key) == "true"; }
const std::string& Config::gets(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    return it->second;
}

std::string Config::serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
    return os.str();
}

EpisodeConfig Config::episode_config() const {
    EpisodeConfig e;
    e.grid = static_cast<int>(geti("env.grid"));
    e.max_steps = static_cast<int>(geti("env.max_steps"));
    e.step_penalty = getd("env.step_penalty");
    e.gamma = getd("env.gamma");
    e.n_classes = static_cast<int>(geti("env.n_classes"));
    e.holdout_fraction = getd("env.holdout_fraction");
    e.split_seed = static_cast<uint64_t>(geti("env.split_seed"));
    e.manual_on = getb("env.manual");
    e.message_on = getb("env.message");
    e.validate();
    return e;
}

ModelConfig Config::model_config() const {
    ModelConfig m;
    m.grid = static_cast<int>(geti("env.grid"));
    m.d_tok = static_cast<int>(geti("model.d_tok"));
    m.d_sym = static_cast<int>(geti("model.d_sym"));
    m.d_key = static_cast<int>(geti("model.d_key"));
    m.d_val = static_cast<int>(geti("model.d_val"));
    m.hidden = static_cast<int>(geti("model.hidden"));
    m.repr = static_cast<int>(geti("model.repr"));
    m.frame_stack = static_cast<int>(geti("model.frame_stack"));
    m.distill_norm = gets("rl.distill_norm");
    m.n_tokens = Vocab::instance().n_tokens();
    m.validate();
    return m;
}

OptimConfig Config::optim_config(const std::string& prefix) const {
    OptimConfig o;
    o.kind = optim_kind_from_string(gets(prefix + ".optimizer"));
    o.lr = getd(prefix + ".lr");
    o.beta1 = getd(prefix + ".beta1");
    o.beta2 = getd(prefix + ".beta2");
    o.eps = getd(prefix + ".eps");
    o.alpha = getd(prefix + ".alpha");
    return o;
}

PretrainConfig Config::pretrain_config() const {
    PretrainConfig p;
    p.epochs = static_cast<int>(geti("pretrain.epochs"));
    p.batch = static_cast<int>(geti("pretrain.batch"));
    p.eval_fraction = getd("pretrain.eval_fraction");
    p.patience = static_cast<int>(geti("pretrain.patience"));
    p.seed = static_cast<uint64_t>(geti("pretrain.seed"));
    p.optim = optim_config("pretrain");
    p.epoch_transition_cap = geti("pretrain.epoch_cap");
    p.validate();
    return p;
}

VaeConfig Config::vae_config() const {
    VaeConfig v;
    v.epochs = static_cast<int>(geti("vae.epochs"));
    v.batch = static_cast<int>(geti("vae.batch"));
    v.beta = getd("vae.beta");
    v.seed = static_cast<uint64_t>(geti("pretrain.seed"));
    v.optim = optim_config("pretrain");
    v.epoch_obs_cap = geti("vae.epoch_cap");
    v.validate();
    return v;
}

TrainConfig Config::train_config() const {
    TrainConfig t;
    t.variant = variant_from_string(gets("rl.variant"));
    t.total_frames = geti("rl.total_frames");
    t.n_actors = static_cast<int>(geti("rl.n_actors"));
    t.unroll = static_cast<int>(geti("rl.unroll"));
    t.seed = static_cast<uint64_t>(geti("rl.seed"));
    t.optim = optim_config("rl");
    t.weights.alpha_v = getd("rl.alpha_v");
    t.weights.alpha_d = getd("rl.alpha_d");
    t.weights.entropy = getd("rl.entropy_cost");
    t.eval_cadence = geti("rl.eval_cadence");
    t.eval_episodes = static_cast<int>(geti("rl.eval_episodes"));
    t.checkpoint_cadence = geti("rl.checkpoint_cadence");
    t.shaping_lambda = getd("rl.shaping_lambda");
    t.alpha_d_anneal = gets("rl.alpha_d_anneal");
    t.distill_norm = gets("rl.distill_norm");
    t.validate();
    return t;
}

InverseConfig Config::inverse_config() const {
    InverseConfig i;
    i.epochs = static_cast<int>(geti("inverse.epochs"));
    i.batch = static_cast<int>(geti("inverse.batch"));
    i.holdout_fraction = getd("inverse.holdout_fraction");
    i.seed = static_cast<uint64_t>(geti("inverse.seed"));
    i.optim = optim_config("rl");
    i.optim.lr = getd("inverse.lr");
    i.epoch_transition_cap = geti("inverse.epoch_cap");
    return i;
}

BcConfig Config::bc_config() const {
    BcConfig b;
    b.epochs = static_cast<int>(geti("bc.epochs"));
    b.batch = static_cast<int>(geti("bc.batch"));
    b.seed = static_cast<uint64_t>(geti("bc.seed"));
    b.optim = optim_config("rl");
    b.optim.lr = getd("bc.lr");
    b.epoch_transition_cap = geti("bc.epoch_cap");
    return b;
}

}  // namespace ldd
