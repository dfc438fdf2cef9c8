#include "ldd/model.hpp"

#include <cmath>

namespace ldd {

void ModelConfig::validate() const {
    if (grid < 2 || n_symbols < 2 || n_actions < 2) throw ConfigError("model: degenerate dimensions");
    if (d_tok < 1 || d_sym < 1 || d_key < 1 || d_val < 1 || hidden < 1 || repr < 1)
        throw ConfigError("model: embedding widths must be positive");
    if (frame_stack < 1) throw ConfigError("model.frame_stack must be >= 1");
    if (repr <= relational_dim() + line_block_dim())
        throw ConfigError("model.repr must exceed the relational + line feature width " + std::to_string(relational_dim() + line_block_dim()));
    if (distill_norm != "mean_sq" && distill_norm != "l2")
        throw ConfigError("model.distill_norm must be mean_sq or l2");
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_metadata() const {
    auto s = [](int v) { return std::to_string(v); };
    return {
        {"cfg.grid", s(grid)},         {"cfg.n_symbols", s(n_symbols)},
        {"cfg.n_tokens", s(n_tokens)}, {"cfg.n_actions", s(n_actions)},
        {"cfg.d_tok", s(d_tok)},       {"cfg.d_sym", s(d_sym)},
        {"cfg.d_key", s(d_key)},       {"cfg.d_val", s(d_val)},
        {"cfg.hidden", s(hidden)},     {"cfg.repr", s(repr)},
        {"cfg.d_dec", s(d_dec)},
        {"cfg.frame_stack", s(frame_stack)}, {"cfg.distill_norm", distill_norm},
    };
}

ModelConfig ModelConfig::from_metadata(const Checkpoint& ckpt) {
    ModelConfig cfg;
    auto geti = [&](const char* key, int& out) {
        const std::string* v = ckpt.meta(key);
        if (!v) throw IoError(IoError::Code::malformed, std::string("checkpoint missing ") + key);
        out = std::stoi(*v);
    };
    geti("cfg.grid", cfg.grid);
    geti("cfg.n_symbols", cfg.n_symbols);
    geti("cfg.n_tokens", cfg.n_tokens);
    geti("cfg.n_actions", cfg.n_actions);
    geti("cfg.d_tok", cfg.d_tok);
    geti("cfg.d_sym", cfg.d_sym);
    geti("cfg.d_key", cfg.d_key);
    geti("cfg.d_val", cfg.d_val);
    geti("cfg.hidden", cfg.hidden);
    geti("cfg.repr", cfg.repr);
    geti("cfg.d_dec", cfg.d_dec);
    geti("cfg.frame_stack", cfg.frame_stack);
    if (const std::string* v = ckpt.meta("cfg.distill_norm")) cfg.distill_norm = *v;
    return cfg;
}

int Model::add_param(const std::string& name, ParamGroup g, Tensor t) {
    params_.push_back({name, g, std::move(t)});
    return static_cast<int>(params_.size() - 1);
}

static Tensor uniform_init(Rng& rng, std::vector<int> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// LeCun uniform: U(+-sqrt(3)/sqrt(fan_in)) has standard deviation exactly
// 1/sqrt(fan_in), which keeps tanh pre-activations near unit scale
static Tensor fanin_init(Rng& rng, int in, int out) {
    double b = std::sqrt(3.0) / std::sqrt(static_cast<double>(in));
    return uniform_init(rng, {in, out}, -b, b);
}

Model::Model(ModelConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    if (cfg_.n_tokens == 0) cfg_.n_tokens = Vocab::instance().n_tokens();
    cfg_.validate();
    Rng rng(mix_seed(init_seed, 0x90de1));

    // representation: embeddings uniform(-0.5, 0.5), LeCun-uniform trunk and
    // projections, biases zero
    idx_.tok_emb = add_param("rep.tok_emb", ParamGroup::rep, uniform_init(rng, {cfg_.n_tokens, cfg_.d_tok}, -0.5, 0.5));
    idx_.sym_emb = add_param("rep.sym_emb", ParamGroup::rep, uniform_init(rng, {cfg_.n_symbols, cfg_.d_sym}, -0.5, 0.5));
    idx_.wq = add_param("rep.attn_wq", ParamGroup::rep, fanin_init(rng, cfg_.d_sym, cfg_.d_key));
    idx_.wk = add_param("rep.attn_wk", ParamGroup::rep, fanin_init(rng, cfg_.d_tok, cfg_.d_key));
    idx_.wv = add_param("rep.attn_wv", ParamGroup::rep, fanin_init(rng, cfg_.d_tok, cfg_.d_val));
    idx_.wq2 = add_param("rep.lattn_wq", ParamGroup::rep, fanin_init(rng, cfg_.d_tok, cfg_.d_key));
    idx_.wk2 = add_param("rep.lattn_wk", ParamGroup::rep, fanin_init(rng, cfg_.d_sym, cfg_.d_key));
    idx_.wl = add_param("rep.line_proj", ParamGroup::rep, fanin_init(rng, cfg_.d_tok, cfg_.d_line_proj));
    idx_.w1 = add_param("rep.trunk_w1", ParamGroup::rep, fanin_init(rng, cfg_.trunk_in(), cfg_.hidden));
    idx_.b1 = add_param("rep.trunk_b1", ParamGroup::rep, Tensor({cfg_.hidden}));
    idx_.w2 = add_param("rep.trunk_w2", ParamGroup::rep, fanin_init(rng, cfg_.hidden, cfg_.trunk_out()));
    idx_.b2 = add_param("rep.trunk_b2", ParamGroup::rep, Tensor({cfg_.trunk_out()}));

    // heads zero-initialized: uniform initial policy, zero initial value
    idx_.pi_w = add_param("pi.w", ParamGroup::pi, Tensor({cfg_.repr, cfg_.n_actions}));
    idx_.pi_b = add_param("pi.b", ParamGroup::pi, Tensor({cfg_.n_actions}));
    idx_.v_w = add_param("value.w", ParamGroup::value, Tensor({cfg_.repr, 1}));
    idx_.v_b = add_param("value.b", ParamGroup::value, Tensor({1}));
    int cells = cfg_.grid * cfg_.grid;
    idx_.d_lin = add_param("delta.w_local", ParamGroup::delta, Tensor({cfg_.delta_local_in(), cfg_.n_symbols}));
    idx_.d_w1 = add_param("delta.w1", ParamGroup::delta, fanin_init(rng, cfg_.delta_mlp_in(), cfg_.d_dec));
    idx_.d_b1 = add_param("delta.b1", ParamGroup::delta, Tensor({cfg_.d_dec}));
    idx_.d_w2 = add_param("delta.w2", ParamGroup::delta, Tensor({cfg_.d_dec, cfg_.n_symbols}));
    idx_.d_b = add_param("delta.b", ParamGroup::delta, Tensor({cells * cfg_.n_symbols}));
}

std::vector<Tensor*> Model::param_tensors(std::optional<std::vector<ParamGroup>> groups) {
    std::vector<Tensor*> out;
    for (auto& p : params_) {
        if (groups && std::find(groups->begin(), groups->end(), p.group) == groups->end()) continue;
        out.push_back(&p.value);
    }
    return out;
}

std::vector<const Tensor*> Model::param_tensors_const(std::optional<std::vector<ParamGroup>> groups) const {
    std::vector<const Tensor*> out;
    for (const auto& p : params_) {
        if (groups && std::find(groups->begin(), groups->end(), p.group) == groups->end()) continue;
        out.push_back(&p.value);
    }
    return out;
}

uint64_t Model::param_hash(std::optional<std::vector<ParamGroup>> groups) const {
    Fnv1a h;
    for (const auto& p : params_) {
        if (groups && std::find(groups->begin(), groups->end(), p.group) == groups->end()) continue;
        h.update(p.name);
        uint64_t ch = p.value.content_hash();
        h.update_pod(ch);
    }
    return h.digest();
}

void Model::copy_group_from(const Model& src, ParamGroup group) {
    if (src.params_.size() != params_.size())
        throw ShapeError("copy_group_from: parameter lists differ");
    for (size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].group != group) continue;
        if (!params_[i].value.same_shape(src.params_[i].value))
            throw ShapeError("copy_group_from: shape mismatch on " + params_[i].name);
        params_[i].value = src.params_[i].value;
    }
}

Checkpoint Model::to_checkpoint(std::vector<std::pair<std::string, std::string>> extra_meta) const {
    Checkpoint ckpt;
    ckpt.metadata = cfg_.to_metadata();
    for (auto& kv : extra_meta) ckpt.metadata.push_back(std::move(kv));
    for (const auto& p : params_) ckpt.params.push_back({p.name, p.value});
    return ckpt;
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
    Model m(ModelConfig::from_metadata(ckpt), 0);
    for (auto& p : m.params_) {
        const Tensor* t = ckpt.find(p.name);
        if (!t) throw IoError(IoError::Code::malformed, "checkpoint missing parameter " + p.name);
        if (!t->same_shape(p.value))
            throw IoError(IoError::Code::malformed, "checkpoint shape mismatch on " + p.name);
        p.value = *t;
    }
    return m;
}

Model::Bound Model::bind(Tape& tape, bool trainable) const {
    Bound b;
    b.vars.reserve(params_.size());
    for (const auto& p : params_) b.vars.push_back(tape.leaf_ref(&p.value, trainable));
    return b;
}

Model::Bound Model::bind_group(Tape& tape, const std::vector<ParamGroup>& trainable_groups) const {
    Bound b;
    b.vars.reserve(params_.size());
    for (const auto& p : params_) {
        bool tr = std::find(trainable_groups.begin(), trainable_groups.end(), p.group) != trainable_groups.end();
        b.vars.push_back(tape.leaf_ref(&p.value, tr));
    }
    return b;
}

Var Model::encode(Tape& tape, const Bound& b, const Observation& obs) const {
    ObsWindow w{&obs};
    return encode(tape, b, w);
}

Var Model::encode(Tape& tape, const Bound& b, const ObsWindow& window) const {
    return encode_full(tape, b, window).rep;
}

std::vector<int> Model::egocentric_order(const Observation& ref) const {
    int g = cfg_.grid;
    int cells = g * g;
    if (static_cast<int>(ref.grid.size()) != cells)
        throw ShapeError("egocentric_order: grid size " + std::to_string(ref.grid.size()) + ", expected " + std::to_string(cells));
    int ar = 0, ac = 0;
    for (int i = 0; i < cells; ++i) {
        if (ref.grid[static_cast<size_t>(i)] == kSymAgent) {
            ar = i / g;
            ac = i % g;
            break;
        }
    }
    std::vector<int> order(static_cast<size_t>(cells));
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j)
            order[static_cast<size_t>(i) * g + j] = ((ar + i) % g) * g + ((ac + j) % g);
    return order;
}

std::vector<int> Model::egocentric_targets(const Observation& ref, const Observation& next) const {
    std::vector<int> order = egocentric_order(ref);
    std::vector<int> targets(order.size());
    for (size_t s = 0; s < order.size(); ++s)
        targets[s] = next.grid[static_cast<size_t>(order[s])];
    return targets;
}

Model::Encoded Model::encode_full(Tape& tape, const Bound& b, const ObsWindow& window) const {
    if (window.empty()) throw ContractError("encode: empty observation window");
    const Observation& cur = *window.back();
    int g = cfg_.grid;
    int cells = g * g;
    if (static_cast<int>(cur.grid.size()) != cells)
        throw ShapeError("encode: grid size " + std::to_string(cur.grid.size()) + ", expected " + std::to_string(cells));

    // per-cell symbol embeddings in egocentric slot order (reference frame:
    // the current observation), most recent frame last; short windows repeat
    // the oldest frame
    std::vector<int> order = egocentric_order(cur);
    std::vector<Var> frame_embs;
    for (int f = 0; f < cfg_.frame_stack; ++f) {
        int widx = static_cast<int>(window.size()) - cfg_.frame_stack + f;
        const Observation& frame = *window[static_cast<size_t>(std::max(widx, 0))];
        std::vector<int> ids(static_cast<size_t>(cells));
        for (int s = 0; s < cells; ++s) {
            int id = frame.grid[static_cast<size_t>(order[static_cast<size_t>(s)])];
            if (id >= cfg_.n_symbols) throw ContractError("encode: symbol id " + std::to_string(id) + " outside vocabulary");
            ids[static_cast<size_t>(s)] = id;
        }
        frame_embs.push_back(tape.embedding_lookup(b.vars[static_cast<size_t>(idx_.sym_emb)], ids));
    }
    Var sym_cat = frame_embs.back();
    for (int f = static_cast<int>(frame_embs.size()) - 2; f >= 0; --f)
        sym_cat = tape.concat_cols(sym_cat, frame_embs[static_cast<size_t>(f)]);

    // signed offset of each slot's absolute cell from the agent, scaled
    int ar = order[0] / g, ac = order[0] % g;
    Tensor offsets({cells, 2});
    double inv = 1.0 / static_cast<double>(g - 1);
    for (int s = 0; s < cells; ++s) {
        int cell = order[static_cast<size_t>(s)];
        offsets.at(s, 0) = static_cast<double>(cell / g - ar) * inv;
        offsets.at(s, 1) = static_cast<double>(cell % g - ac) * inv;
    }
    Var offs = tape.constant(std::move(offsets));

    // manual lines: mean of token embeddings, then attention from each cell
    Var attended;
    Var lines = -1;
    bool has_manual = !cur.manual.empty();
    if (has_manual) {
        std::vector<Var> line_vecs;
        for (const auto& line : cur.manual) {
            if (line.empty()) throw ContractError("encode: empty manual line");
            std::vector<int> ids(line.begin(), line.end());
            line_vecs.push_back(tape.mean_rows(tape.embedding_lookup(b.vars[static_cast<size_t>(idx_.tok_emb)], ids)));
        }
        lines = tape.stack_rows(line_vecs);                                      // [L x d_tok]
        Var q = tape.matmul(frame_embs.back(), b.vars[static_cast<size_t>(idx_.wq)]);  // [HW x d_key]
        Var k = tape.matmul(lines, b.vars[static_cast<size_t>(idx_.wk)]);              // [L x d_key]
        Var vv = tape.matmul(lines, b.vars[static_cast<size_t>(idx_.wv)]);             // [L x d_val]
        Var scores = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg_.d_key)));
        Var attn = tape.softmax(scores);  // [HW x L]
        attended = tape.matmul(attn, vv); // [HW x d_val]
    } else {
        attended = tape.constant(Tensor({cells, cfg_.d_val}));
    }

    Var cell_feat = tape.concat_cols(tape.concat_cols(sym_cat, attended), offs);
    Var flat = tape.flatten(cell_feat);

    // relational pooling: offset-weighted sums of each content channel give
    // the trunk a direct "which direction is this channel's mass" signal
    Tensor offs_t({2, cells});
    for (int s = 0; s < cells; ++s) {
        int cell = order[static_cast<size_t>(s)];
        offs_t.at(0, s) = static_cast<double>(cell / g - ar) * inv;
        offs_t.at(1, s) = static_cast<double>(cell % g - ac) * inv;
    }
    Var relational = tape.flatten(tape.matmul(tape.constant(std::move(offs_t)), tape.concat_cols(sym_cat, attended)));

    // line-to-grid attention: each manual line locates its entity; the block
    // pairs the line's text content with the attended cell content + offset
    Var line_block;
    if (has_manual) {
        Var q2 = tape.matmul(lines, b.vars[static_cast<size_t>(idx_.wq2)]);                 // [L x d_key]
        Var k2 = tape.matmul(frame_embs.back(), b.vars[static_cast<size_t>(idx_.wk2)]);     // [HW x d_key]
        Var scores2 = tape.scale(tape.matmul_nt(q2, k2), 1.0 / std::sqrt(static_cast<double>(cfg_.d_key)));
        Var attn2 = tape.softmax(scores2);  // [L x HW]
        Var located = tape.matmul(attn2, tape.concat_cols(frame_embs.back(), offs));        // [L x (d_sym+2)]
        Var lproj = tape.matmul(lines, b.vars[static_cast<size_t>(idx_.wl)]);               // [L x d_line_proj]
        line_block = tape.flatten(tape.matmul(tape.transpose(lproj), located));
    } else {
        line_block = tape.constant(Tensor({cfg_.line_block_dim()}));
    }

    // message: mean-pooled token embeddings; the empty sequence embeds to zero
    Var msg;
    if (!cur.message.empty()) {
        std::vector<int> ids(cur.message.begin(), cur.message.end());
        msg = tape.mean_rows(tape.embedding_lookup(b.vars[static_cast<size_t>(idx_.tok_emb)], ids));
    } else {
        msg = tape.constant(Tensor({cfg_.d_tok}));
    }

    Var x = tape.concat({flat, msg, relational});
    Var h = tape.tanh_op(tape.add(tape.matmul(x, b.vars[static_cast<size_t>(idx_.w1)]), b.vars[static_cast<size_t>(idx_.b1)]));
    Var trunk = tape.tanh_op(tape.add(tape.matmul(h, b.vars[static_cast<size_t>(idx_.w2)]), b.vars[static_cast<size_t>(idx_.b2)]));
    // the relational and line blocks ride along unsquashed so linear heads
    // (and the distillation target) see the grounded channels directly
    Var rep = tape.concat({trunk, relational, line_block});
    return {rep, cell_feat};
}

static Var linear(Tape& tape, Var x, Var w, Var bias) {
    Var y = tape.matmul(x, w);
    if (tape.val(y).rank() == 2) return tape.add_rowvec(y, bias);
    return tape.add(y, bias);
}

Var Model::policy_logits(Tape& tape, const Bound& b, Var rep) const {
    return linear(tape, rep, b.vars[static_cast<size_t>(idx_.pi_w)], b.vars[static_cast<size_t>(idx_.pi_b)]);
}

Var Model::value_out(Tape& tape, const Bound& b, Var rep) const {
    return linear(tape, rep, b.vars[static_cast<size_t>(idx_.v_w)], b.vars[static_cast<size_t>(idx_.v_b)]);
}

Var Model::dynamics_logits(Tape& tape, const Bound& b, const Encoded& enc, const Observation& ref) const {
    int g = cfg_.grid;
    int cells = g * g;
    std::vector<int> order = egocentric_order(ref);
    std::vector<int> inverse(static_cast<size_t>(cells));
    for (int s = 0; s < cells; ++s) inverse[static_cast<size_t>(order[static_cast<size_t>(s)])] = s;

    // neighbor slots in absolute space; off-grid neighbors are zero rows
    static const int kNDr[4] = {-1, 1, 0, 0};
    static const int kNDc[4] = {0, 0, -1, 1};
    Var local = enc.cell_feat;
    for (int k = 0; k < 4; ++k) {
        std::vector<int> ids(static_cast<size_t>(cells));
        for (int s = 0; s < cells; ++s) {
            int abs = order[static_cast<size_t>(s)];
            int r = abs / g + kNDr[k], c = abs % g + kNDc[k];
            ids[static_cast<size_t>(s)] = (r < 0 || r >= g || c < 0 || c >= g) ? -1 : inverse[static_cast<size_t>(r * g + c)];
        }
        local = tape.concat_cols(local, tape.gather_rows(enc.cell_feat, ids));
    }
    Var local_logits = tape.matmul(local, b.vars[static_cast<size_t>(idx_.d_lin)]);

    Var mlp_in = tape.concat_cols(enc.cell_feat, tape.tile_rows(enc.rep, cells));
    Var h = tape.tanh_op(tape.add_rowvec(tape.matmul(mlp_in, b.vars[static_cast<size_t>(idx_.d_w1)]),
                                         b.vars[static_cast<size_t>(idx_.d_b1)]));
    Var mlp_logits = tape.matmul(h, b.vars[static_cast<size_t>(idx_.d_w2)]);

    Var bias = tape.reshape(b.vars[static_cast<size_t>(idx_.d_b)], {cells, cfg_.n_symbols});
    return tape.add(tape.add(local_logits, mlp_logits), bias);
}

// --- no-grad helpers ---------------------------------------------------------

static thread_local Tape g_scratch;

Tensor Model::encode_value(const ObsWindow& window) const {
    g_scratch.clear();
    Bound b = bind(g_scratch, false);
    Var rep = encode(g_scratch, b, window);
    return g_scratch.val(rep);
}

std::vector<double> Model::policy_probs(const ObsWindow& window) const {
    g_scratch.clear();
    Bound b = bind(g_scratch, false);
    Var rep = encode(g_scratch, b, window);
    Var logits = policy_logits(g_scratch, b, rep);
    const Tensor& z = g_scratch.val(logits);
    double m = z[0];
    for (int64_t i = 1; i < z.size(); ++i) m = std::max(m, z[i]);
    std::vector<double> p(static_cast<size_t>(z.size()));
    double s = 0.0;
    for (int64_t i = 0; i < z.size(); ++i) {
        p[static_cast<size_t>(i)] = std::exp(z[i] - m);
        s += p[static_cast<size_t>(i)];
    }
    for (double& v : p) v /= s;
    return p;
}

double Model::state_value(const ObsWindow& window) const {
    g_scratch.clear();
    Bound b = bind(g_scratch, false);
    Var rep = encode(g_scratch, b, window);
    Var v = value_out(g_scratch, b, rep);
    return g_scratch.val(v)[0];
}

std::vector<uint8_t> Model::predict_next_grid(const ObsWindow& window) const {
    g_scratch.clear();
    Bound b = bind(g_scratch, false);
    Encoded enc = encode_full(g_scratch, b, window);
    Var logits = dynamics_logits(g_scratch, b, enc, *window.back());
    const Tensor& z = g_scratch.val(logits);
    int cells = z.rows(), syms = z.cols();
    // head slots are egocentric; map back to absolute cells
    std::vector<int> order = egocentric_order(*window.back());
    std::vector<uint8_t> grid(static_cast<size_t>(cells));
    for (int i = 0; i < cells; ++i) {
        int best = 0;
        for (int s = 1; s < syms; ++s)
            if (z.at(i, s) > z.at(i, best)) best = s;
        grid[static_cast<size_t>(order[static_cast<size_t>(i)])] = static_cast<uint8_t>(best);
    }
    return grid;
}

// --- teacher -----------------------------------------------------------------

TeacherSnapshot::TeacherSnapshot(const Model& pretrained, std::vector<std::pair<std::string, std::string>> provenance)
    : model_(pretrained.config(), 0), provenance_(std::move(provenance)) {
    model_.copy_group_from(pretrained, ParamGroup::rep);
    model_.copy_group_from(pretrained, ParamGroup::delta);
    // pi/value heads stay zero; the teacher only serves encode + dynamics
}

uint64_t TeacherSnapshot::param_hash() const {
    return model_.param_hash(std::vector<ParamGroup>{ParamGroup::rep, ParamGroup::delta});
}

void TeacherSnapshot::save(const std::filesystem::path& path) const {
    Checkpoint ckpt;
    ckpt.metadata = model_.config().to_metadata();
    ckpt.metadata.emplace_back("kind", "teacher");
    for (const auto& kv : provenance_) ckpt.metadata.push_back(kv);
    for (const auto& p : model_.params())
        if (p.group == ParamGroup::rep || p.group == ParamGroup::delta)
            ckpt.params.push_back({p.name, p.value});
    save_checkpoint(ckpt, path);
}

TeacherSnapshot TeacherSnapshot::load(const std::filesystem::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    const std::string* kind = ckpt.meta("kind");
    if (!kind || *kind != "teacher")
        throw IoError(IoError::Code::malformed, "not a teacher snapshot: " + path.string());
    TeacherSnapshot snap;
    snap.model_ = Model(ModelConfig::from_metadata(ckpt), 0);
    for (auto& p : snap.model_.params()) {
        if (p.group != ParamGroup::rep && p.group != ParamGroup::delta) continue;
        const Tensor* t = ckpt.find(p.name);
        if (!t) throw IoError(IoError::Code::malformed, "teacher snapshot missing " + p.name);
        p.value = *t;
    }
    for (const auto& [k, v] : ckpt.metadata)
        if (k.rfind("cfg.", 0) != 0 && k != "kind") snap.provenance_.emplace_back(k, v);
    return snap;
}

// --- distillation ------------------------------------------------------------

Var distill_loss_from_reps(Tape& tape, const std::vector<Var>& student_reps,
                           const std::vector<Tensor>& teacher_reps, const std::string& norm) {
    if (student_reps.empty() || student_reps.size() != teacher_reps.size())
        throw ShapeError("distill_loss: batch size mismatch");
    int64_t r = tape.val(student_reps[0]).size();
    for (const Tensor& t : teacher_reps)
        if (t.size() != r)
            throw ShapeError("distill_loss: representation width mismatch " + std::to_string(t.size()) + " vs " + std::to_string(r));

    size_t batch = student_reps.size();
    if (norm == "mean_sq") {
        Var s = tape.stack_rows(student_reps);
        Tensor tgt({static_cast<int>(batch), static_cast<int>(r)});
        for (size_t i = 0; i < batch; ++i)
            for (int64_t j = 0; j < r; ++j) tgt.at(static_cast<int>(i), static_cast<int>(j)) = teacher_reps[i][j];
        Var t = tape.constant(std::move(tgt));
        return tape.scale(tape.squared_l2(s, t), 1.0 / (static_cast<double>(batch) * static_cast<double>(r)));
    }
    if (norm == "l2") {
        std::vector<Var> norms;
        for (size_t i = 0; i < batch; ++i) {
            Var t = tape.constant(teacher_reps[i]);
            norms.push_back(tape.sqrt_op(tape.squared_l2(student_reps[i], t)));
        }
        return tape.mean_all(tape.concat(norms));
    }
    throw ConfigError("distill_loss: unknown norm '" + norm + "'");
}

Var distill_loss(Tape& tape, const Model& student, const Model::Bound& bound,
                 const TeacherSnapshot& teacher, const std::vector<Model::ObsWindow>& batch,
                 const std::string& norm) {
    if (teacher.model().config().repr != student.config().repr)
        throw ShapeError("distill_loss: teacher repr width " + std::to_string(teacher.model().config().repr) + " vs student " + std::to_string(student.config().repr));
    std::vector<Var> reps;
    std::vector<Tensor> targets;
    reps.reserve(batch.size());
    targets.reserve(batch.size());
    for (const auto& w : batch) {
        reps.push_back(student.encode(tape, bound, w));
        targets.push_back(teacher.model().encode_value(w));
    }
    return distill_loss_from_reps(tape, reps, targets, norm);
}

}  // namespace ldd
