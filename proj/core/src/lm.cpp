#include "kgtod/lm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "kgtod/text.hpp"

namespace kgtod::lm {

// ---------------------------------------------------------------- Vocab

void Vocab::push(const std::string& token) {
    if (ids_.count(token)) return;
    ids_[token] = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::string>& texts) {
    Vocab v;
    v.push(seq::kPadTag);
    v.push(seq::kBosTag);
    v.push(seq::kEosTag);
    v.push(seq::kUnkTag);
    for (const auto& s : seq::special_tokens()) v.push(s);
    std::set<std::string> words;
    for (const auto& text : texts) {
        std::istringstream is(text);
        std::string tok;
        while (is >> tok) {
            if (!v.ids_.count(tok)) words.insert(tok);
        }
    }
    for (const auto& w : words) v.push(w);
    return v;
}

int Vocab::id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? unk_id() : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw ContractError("Vocab::token: id out of range");
    return tokens_[id];
}

std::vector<int> Vocab::encode(const std::string& text, bool add_bos, bool add_eos) const {
    std::vector<int> out;
    if (add_bos) out.push_back(bos_id());
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(id(tok));
    if (add_eos) out.push_back(eos_id());
    return out;
}

std::string Vocab::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id == pad_id() || id == bos_id() || id == eos_id()) continue;
        if (!out.empty()) out += ' ';
        out += token(id);
    }
    return out;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write vocab file: " + path);
    for (const auto& t : tokens_) out << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open vocab file: " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) v.push(line);
    }
    if (v.size() < 4 || v.tokens_[0] != seq::kPadTag) {
        throw ValidationError("vocab file missing special tokens: " + path);
    }
    return v;
}

// ---------------------------------------------------------------- config

void LmConfig::validate() const {
    if (n_layers < 1) throw ConfigError("LmConfig: n_layers must be >= 1");
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
        throw ConfigError("LmConfig: d_model must be a positive multiple of n_heads");
    }
    if (ctx_len < 2) throw ConfigError("LmConfig: ctx_len must be >= 2");
    if (batch_size < 1) throw ConfigError("LmConfig: batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("LmConfig: epochs must be >= 0");
    if (!(learning_rate > 0)) throw ConfigError("LmConfig: learning_rate must be > 0");
}

// ---------------------------------------------------------------- params

template <typename T>
std::vector<nn::Mat<T>*> tensor_list(Params<T>& p) {
    std::vector<nn::Mat<T>*> out;
    out.push_back(&p.tok_emb);
    out.push_back(&p.pos_emb);
    for (auto& b : p.blocks) {
        for (auto* m : {&b.ln1_g, &b.ln1_b, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_g, &b.ln2_b, &b.w1,
                        &b.b1, &b.w2, &b.b2}) {
            out.push_back(m);
        }
    }
    out.push_back(&p.lnf_g);
    out.push_back(&p.lnf_b);
    out.push_back(&p.w_out);
    out.push_back(&p.b_out);
    return out;
}

template <typename T>
std::vector<const nn::Mat<T>*> tensor_list(const Params<T>& p) {
    auto mutable_list = tensor_list(const_cast<Params<T>&>(p));
    return {mutable_list.begin(), mutable_list.end()};
}

template std::vector<nn::Mat<float>*> tensor_list(Params<float>&);
template std::vector<nn::Mat<double>*> tensor_list(Params<double>&);
template std::vector<const nn::Mat<float>*> tensor_list(const Params<float>&);
template std::vector<const nn::Mat<double>*> tensor_list(const Params<double>&);

template <typename T>
std::size_t Params<T>::count() const {
    std::size_t n = 0;
    for (const auto* m : tensor_list(*this)) n += m->size();
    return n;
}

template struct Params<float>;
template struct Params<double>;

template <typename T>
Params<T> init_params(const LmConfig& config, int vocab_size, Rng& rng) {
    const int d = config.d_model;
    Params<T> p;
    auto gauss = [&](nn::Mat<T>& m, int rows, int cols, double scale) {
        m = nn::Mat<T>(rows, cols);
        for (auto& v : m.d) v = static_cast<T>(rng.gaussian() * scale);
    };
    auto fill = [&](nn::Mat<T>& m, int rows, int cols, double value) {
        m = nn::Mat<T>(rows, cols);
        std::fill(m.d.begin(), m.d.end(), static_cast<T>(value));
    };
    gauss(p.tok_emb, vocab_size, d, 0.02);
    gauss(p.pos_emb, config.ctx_len, d, 0.02);
    p.blocks.resize(config.n_layers);
    for (auto& b : p.blocks) {
        fill(b.ln1_g, 1, d, 1.0);
        fill(b.ln1_b, 1, d, 0.0);
        gauss(b.wq, d, d, 0.02);
        gauss(b.wk, d, d, 0.02);
        gauss(b.wv, d, d, 0.02);
        gauss(b.wo, d, d, 0.02 / std::sqrt(2.0 * config.n_layers));
        fill(b.ln2_g, 1, d, 1.0);
        fill(b.ln2_b, 1, d, 0.0);
        gauss(b.w1, d, config.d_ff(), 0.02);
        fill(b.b1, 1, config.d_ff(), 0.0);
        gauss(b.w2, config.d_ff(), d, 0.02 / std::sqrt(2.0 * config.n_layers));
        fill(b.b2, 1, d, 0.0);
    }
    fill(p.lnf_g, 1, d, 1.0);
    fill(p.lnf_b, 1, d, 0.0);
    gauss(p.w_out, d, vocab_size, 0.02);
    fill(p.b_out, 1, vocab_size, 0.0);
    return p;
}

template Params<float> init_params(const LmConfig&, int, Rng&);
template Params<double> init_params(const LmConfig&, int, Rng&);

// ------------------------------------------------------- forward/backward

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
void layernorm_forward(const nn::Mat<T>& x, const nn::Mat<T>& g, const nn::Mat<T>& b,
                       nn::Mat<T>& y, std::vector<T>& mean, std::vector<T>& rstd) {
    const int rows = x.rows, d = x.cols;
    y = nn::Mat<T>(rows, d);
    mean.resize(rows);
    rstd.resize(rows);
    for (int r = 0; r < rows; ++r) {
        const T* xr = &x.d[static_cast<std::size_t>(r) * d];
        T mu = 0;
        for (int c = 0; c < d; ++c) mu += xr[c];
        mu /= static_cast<T>(d);
        T var = 0;
        for (int c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= static_cast<T>(d);
        const T rs = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + kLnEps));
        mean[r] = mu;
        rstd[r] = rs;
        T* yr = &y.d[static_cast<std::size_t>(r) * d];
        for (int c = 0; c < d; ++c) yr[c] = (xr[c] - mu) * rs * g.d[c] + b.d[c];
    }
}

template <typename T>
void layernorm_backward(const nn::Mat<T>& x, const nn::Mat<T>& g, const std::vector<T>& mean,
                        const std::vector<T>& rstd, const nn::Mat<T>& dy, nn::Mat<T>& dx,
                        nn::Mat<T>& dg, nn::Mat<T>& db) {
    const int rows = x.rows, d = x.cols;
    dx = nn::Mat<T>(rows, d);
    for (int r = 0; r < rows; ++r) {
        const T* xr = &x.d[static_cast<std::size_t>(r) * d];
        const T* dyr = &dy.d[static_cast<std::size_t>(r) * d];
        T* dxr = &dx.d[static_cast<std::size_t>(r) * d];
        const T mu = mean[r], rs = rstd[r];
        T sum_dyg = 0, sum_dyg_xhat = 0;
        for (int c = 0; c < d; ++c) {
            const T xhat = (xr[c] - mu) * rs;
            const T dyg = dyr[c] * g.d[c];
            sum_dyg += dyg;
            sum_dyg_xhat += dyg * xhat;
            dg.d[c] += dyr[c] * xhat;
            db.d[c] += dyr[c];
        }
        const T inv_d = static_cast<T>(1) / static_cast<T>(d);
        for (int c = 0; c < d; ++c) {
            const T xhat = (xr[c] - mu) * rs;
            dxr[c] = rs * (dyr[c] * g.d[c] - sum_dyg * inv_d - xhat * sum_dyg_xhat * inv_d);
        }
    }
}

template <typename T>
T gelu(T x) {
    return static_cast<T>(0.5 * static_cast<double>(x) *
                          (1.0 + std::erf(static_cast<double>(x) / 1.4142135623730951)));
}

template <typename T>
T gelu_grad(T x) {
    const double xd = static_cast<double>(x);
    const double phi = 0.5 * (1.0 + std::erf(xd / 1.4142135623730951));
    const double pdf = std::exp(-0.5 * xd * xd) / 2.5066282746310002;
    return static_cast<T>(phi + xd * pdf);
}

// row-wise softmax in place, numerically stable
template <typename T>
void softmax_rows(nn::Mat<T>& m, int valid_cols_for_row_offset = -1) {
    for (int r = 0; r < m.rows; ++r) {
        T* row = &m.d[static_cast<std::size_t>(r) * m.cols];
        const int valid = valid_cols_for_row_offset < 0
                              ? m.cols
                              : std::min(m.cols, r + 1 + valid_cols_for_row_offset);
        T mx = row[0];
        for (int c = 1; c < valid; ++c) mx = std::max(mx, row[c]);
        T sum = 0;
        for (int c = 0; c < valid; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (int c = 0; c < valid; ++c) row[c] /= sum;
        for (int c = valid; c < m.cols; ++c) row[c] = 0;
    }
}

template <typename T>
struct BlockActs {
    nn::Mat<T> x_in;                    // residual input
    nn::Mat<T> ln1_out;
    std::vector<T> ln1_mean, ln1_rstd;
    nn::Mat<T> q, k, v;                 // (B*T) x D
    std::vector<nn::Mat<T>> attn_p;     // per (b*h): T x T softmax rows
    nn::Mat<T> attn_concat;             // (B*T) x D, heads concatenated
    nn::Mat<T> x_mid;                   // after attention residual
    nn::Mat<T> ln2_out;
    std::vector<T> ln2_mean, ln2_rstd;
    nn::Mat<T> mlp_pre;                 // (B*T) x d_ff, pre-activation
    nn::Mat<T> mlp_act;                 // gelu(mlp_pre)
};

template <typename T>
struct ForwardState {
    int batch = 0, t_max = 0;
    std::vector<int> ids_flat;          // (B*T)
    std::vector<int> lens;
    nn::Mat<T> x0;
    std::vector<BlockActs<T>> blocks;
    nn::Mat<T> lnf_out;
    std::vector<T> lnf_mean, lnf_rstd;
    nn::Mat<T> logits;                  // (B*T) x V, becomes probs after softmax
};

template <typename T>
void forward_pass(const LmConfig& config, const Params<T>& params, const Batch& batch,
                  ForwardState<T>& st) {
    nn::use_single_thread_blas();
    const int b_n = static_cast<int>(batch.seqs.size());
    int t_max = 0;
    for (const auto& s : batch.seqs) t_max = std::max(t_max, static_cast<int>(s.size()));
    if (t_max > config.ctx_len) throw ContractError("forward: sequence exceeds context length");
    const int d = config.d_model;
    const int rows = b_n * t_max;
    st.batch = b_n;
    st.t_max = t_max;
    st.lens.resize(b_n);
    st.ids_flat.assign(static_cast<std::size_t>(rows), 0);  // pad id 0
    for (int b = 0; b < b_n; ++b) {
        st.lens[b] = static_cast<int>(batch.seqs[b].size());
        for (int t = 0; t < st.lens[b]; ++t) {
            st.ids_flat[static_cast<std::size_t>(b) * t_max + t] = batch.seqs[b][t];
        }
    }

    st.x0 = nn::Mat<T>(rows, d);
    for (int r = 0; r < rows; ++r) {
        const int tok = st.ids_flat[r];
        const int pos = r % t_max;
        const T* te = &params.tok_emb.d[static_cast<std::size_t>(tok) * d];
        const T* pe = &params.pos_emb.d[static_cast<std::size_t>(pos) * d];
        T* xr = &st.x0.d[static_cast<std::size_t>(r) * d];
        for (int c = 0; c < d; ++c) xr[c] = te[c] + pe[c];
    }

    const int h_n = config.n_heads;
    const int dh = config.d_head();
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    st.blocks.assign(config.n_layers, {});
    nn::Mat<T> x = st.x0;
    for (int l = 0; l < config.n_layers; ++l) {
        auto& bp = params.blocks[l];
        auto& ba = st.blocks[l];
        ba.x_in = x;
        layernorm_forward(ba.x_in, bp.ln1_g, bp.ln1_b, ba.ln1_out, ba.ln1_mean, ba.ln1_rstd);
        ba.q = nn::Mat<T>(rows, d);
        ba.k = nn::Mat<T>(rows, d);
        ba.v = nn::Mat<T>(rows, d);
        nn::gemm(false, false, rows, d, d, T(1), ba.ln1_out.data(), d, bp.wq.data(), d, T(0),
                 ba.q.data(), d);
        nn::gemm(false, false, rows, d, d, T(1), ba.ln1_out.data(), d, bp.wk.data(), d, T(0),
                 ba.k.data(), d);
        nn::gemm(false, false, rows, d, d, T(1), ba.ln1_out.data(), d, bp.wv.data(), d, T(0),
                 ba.v.data(), d);

        ba.attn_concat = nn::Mat<T>(rows, d);
        ba.attn_p.assign(static_cast<std::size_t>(b_n) * h_n, {});
        for (int b = 0; b < b_n; ++b) {
            const int base = b * t_max;
            const int len = st.lens[b];
            for (int h = 0; h < h_n; ++h) {
                nn::Mat<T>& p = ba.attn_p[static_cast<std::size_t>(b) * h_n + h];
                p = nn::Mat<T>(t_max, t_max);
                // scores for the first `len` rows only; pad rows stay zero
                nn::gemm(false, true, len, len, dh, scale,
                         ba.q.data() + static_cast<std::size_t>(base) * d + h * dh, d,
                         ba.k.data() + static_cast<std::size_t>(base) * d + h * dh, d, T(0),
                         p.data(), t_max);
                softmax_rows(p, 0);  // causal: row i sees columns 0..i only
                // zero out pad-query rows so backward stays clean
                for (int i = len; i < t_max; ++i) {
                    T* row = &p.d[static_cast<std::size_t>(i) * t_max];
                    std::fill(row, row + t_max, T(0));
                }
                nn::gemm(false, false, len, dh, len, T(1), p.data(), t_max,
                         ba.v.data() + static_cast<std::size_t>(base) * d + h * dh, d, T(0),
                         ba.attn_concat.data() + static_cast<std::size_t>(base) * d + h * dh, d);
            }
        }
        // attention output projection + residual
        ba.x_mid = ba.x_in;
        nn::gemm(false, false, rows, d, d, T(1), ba.attn_concat.data(), d, bp.wo.data(), d, T(1),
                 ba.x_mid.data(), d);

        layernorm_forward(ba.x_mid, bp.ln2_g, bp.ln2_b, ba.ln2_out, ba.ln2_mean, ba.ln2_rstd);
        const int dff = config.d_ff();
        ba.mlp_pre = nn::Mat<T>(rows, dff);
        for (int r = 0; r < rows; ++r) {
            std::memcpy(&ba.mlp_pre.d[static_cast<std::size_t>(r) * dff], bp.b1.data(),
                        sizeof(T) * dff);
        }
        nn::gemm(false, false, rows, dff, d, T(1), ba.ln2_out.data(), d, bp.w1.data(), dff, T(1),
                 ba.mlp_pre.data(), dff);
        ba.mlp_act = nn::Mat<T>(rows, dff);
        for (std::size_t i = 0; i < ba.mlp_pre.d.size(); ++i) {
            ba.mlp_act.d[i] = gelu(ba.mlp_pre.d[i]);
        }
        x = ba.x_mid;
        for (int r = 0; r < rows; ++r) {
            T* xr = &x.d[static_cast<std::size_t>(r) * d];
            for (int c = 0; c < d; ++c) xr[c] += bp.b2.d[c];
        }
        nn::gemm(false, false, rows, d, dff, T(1), ba.mlp_act.data(), dff, bp.w2.data(), d, T(1),
                 x.data(), d);
    }

    layernorm_forward(x, params.lnf_g, params.lnf_b, st.lnf_out, st.lnf_mean, st.lnf_rstd);
    const int v_n = params.w_out.cols;
    st.logits = nn::Mat<T>(rows, v_n);
    for (int r = 0; r < rows; ++r) {
        std::memcpy(&st.logits.d[static_cast<std::size_t>(r) * v_n], params.b_out.data(),
                    sizeof(T) * v_n);
    }
    nn::gemm(false, false, rows, v_n, d, T(1), st.lnf_out.data(), d, params.w_out.data(), v_n,
             T(1), st.logits.data(), v_n);
}

}  // namespace

template <typename T>
double loss_and_grad(const LmConfig& config, const Params<T>& params, const Batch& batch,
                     Params<T>& grads) {
    ForwardState<T> st;
    forward_pass(config, params, batch, st);
    const int rows = st.batch * st.t_max;
    const int v_n = params.w_out.cols;
    const int d = config.d_model;

    // softmax + cross entropy on target positions
    softmax_rows(st.logits);
    std::vector<int> targets(static_cast<std::size_t>(rows), -1);
    int n_loss = 0;
    for (int b = 0; b < st.batch; ++b) {
        for (int t = 0; t + 1 < st.lens[b]; ++t) {
            targets[static_cast<std::size_t>(b) * st.t_max + t] = batch.seqs[b][t + 1];
            ++n_loss;
        }
    }
    if (n_loss == 0) throw TrainingError("loss_and_grad: batch has no target positions");
    double loss = 0.0;
    for (int r = 0; r < rows; ++r) {
        if (targets[r] < 0) continue;
        const T p = st.logits.d[static_cast<std::size_t>(r) * v_n + targets[r]];
        loss -= std::log(std::max(static_cast<double>(p), 1e-300));
    }
    loss /= n_loss;
    if (!std::isfinite(loss)) throw TrainingError("loss_and_grad: non-finite loss");

    // dlogits in place: (probs - onehot) / n_loss on target rows, 0 elsewhere
    const T inv_n = static_cast<T>(1.0 / n_loss);
    for (int r = 0; r < rows; ++r) {
        T* row = &st.logits.d[static_cast<std::size_t>(r) * v_n];
        if (targets[r] < 0) {
            std::fill(row, row + v_n, T(0));
        } else {
            for (int c = 0; c < v_n; ++c) row[c] *= inv_n;
            row[targets[r]] -= inv_n;
        }
    }

    // ---- backward ----
    auto ensure_like = [](nn::Mat<T>& g, const nn::Mat<T>& p) {
        if (g.rows != p.rows || g.cols != p.cols) g = nn::Mat<T>(p.rows, p.cols);
    };
    ensure_like(grads.tok_emb, params.tok_emb);
    ensure_like(grads.pos_emb, params.pos_emb);
    grads.blocks.resize(params.blocks.size());
    for (std::size_t l = 0; l < params.blocks.size(); ++l) {
        auto& gb = grads.blocks[l];
        auto& pb = params.blocks[l];
        ensure_like(gb.ln1_g, pb.ln1_g);
        ensure_like(gb.ln1_b, pb.ln1_b);
        ensure_like(gb.wq, pb.wq);
        ensure_like(gb.wk, pb.wk);
        ensure_like(gb.wv, pb.wv);
        ensure_like(gb.wo, pb.wo);
        ensure_like(gb.ln2_g, pb.ln2_g);
        ensure_like(gb.ln2_b, pb.ln2_b);
        ensure_like(gb.w1, pb.w1);
        ensure_like(gb.b1, pb.b1);
        ensure_like(gb.w2, pb.w2);
        ensure_like(gb.b2, pb.b2);
    }
    ensure_like(grads.lnf_g, params.lnf_g);
    ensure_like(grads.lnf_b, params.lnf_b);
    ensure_like(grads.w_out, params.w_out);
    ensure_like(grads.b_out, params.b_out);
    for (auto* g : tensor_list(grads)) g->zero();

    // output head
    nn::gemm(true, false, d, v_n, rows, T(1), st.lnf_out.data(), d, st.logits.data(), v_n, T(1),
             grads.w_out.data(), v_n);
    for (int r = 0; r < rows; ++r) {
        const T* row = &st.logits.d[static_cast<std::size_t>(r) * v_n];
        for (int c = 0; c < v_n; ++c) grads.b_out.d[c] += row[c];
    }
    nn::Mat<T> dx(rows, d);
    nn::gemm(false, true, rows, d, v_n, T(1), st.logits.data(), v_n, params.w_out.data(), v_n,
             T(0), dx.data(), d);

    // final layernorm: x at input was blocks.back() output
    {
        // recompute the final block output as x_mid + mlp path (stored implicitly):
        // the lnf forward consumed x = last block output; rebuild it
        // cheaply from cached pieces.
        const auto& last = st.blocks.back();
        nn::Mat<T> x_final = last.x_mid;
        const auto& bp = params.blocks.back();
        const int dff = config.d_ff();
        for (int r = 0; r < rows; ++r) {
            T* xr = &x_final.d[static_cast<std::size_t>(r) * d];
            for (int c = 0; c < d; ++c) xr[c] += bp.b2.d[c];
        }
        nn::gemm(false, false, rows, d, dff, T(1), last.mlp_act.data(), dff, bp.w2.data(), d, T(1),
                 x_final.data(), d);
        nn::Mat<T> dx_ln;
        layernorm_backward(x_final, params.lnf_g, st.lnf_mean, st.lnf_rstd, dx, dx_ln,
                           grads.lnf_g, grads.lnf_b);
        dx = std::move(dx_ln);
    }

    const int h_n = config.n_heads;
    const int dh = config.d_head();
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const int dff = config.d_ff();

    for (int l = config.n_layers - 1; l >= 0; --l) {
        const auto& bp = params.blocks[l];
        auto& gb = grads.blocks[l];
        const auto& ba = st.blocks[l];

        // MLP backward: x_out = x_mid + gelu(ln2(x_mid) W1 + b1) W2 + b2
        nn::Mat<T> d_act(rows, dff);
        nn::gemm(false, true, rows, dff, d, T(1), dx.data(), d, bp.w2.data(), d, T(0),
                 d_act.data(), dff);
        nn::gemm(true, false, dff, d, rows, T(1), ba.mlp_act.data(), dff, dx.data(), d, T(1),
                 gb.w2.data(), d);
        for (int r = 0; r < rows; ++r) {
            const T* row = &dx.d[static_cast<std::size_t>(r) * d];
            for (int c = 0; c < d; ++c) gb.b2.d[c] += row[c];
        }
        for (std::size_t i = 0; i < d_act.d.size(); ++i) {
            d_act.d[i] *= gelu_grad(ba.mlp_pre.d[i]);
        }
        nn::gemm(true, false, d, dff, rows, T(1), ba.ln2_out.data(), d, d_act.data(), dff, T(1),
                 gb.w1.data(), dff);
        for (int r = 0; r < rows; ++r) {
            const T* row = &d_act.d[static_cast<std::size_t>(r) * dff];
            for (int c = 0; c < dff; ++c) gb.b1.d[c] += row[c];
        }
        nn::Mat<T> d_ln2_out(rows, d);
        nn::gemm(false, true, rows, d, dff, T(1), d_act.data(), dff, bp.w1.data(), dff, T(0),
                 d_ln2_out.data(), d);
        nn::Mat<T> dx_mid;
        layernorm_backward(ba.x_mid, bp.ln2_g, ba.ln2_mean, ba.ln2_rstd, d_ln2_out, dx_mid,
                           gb.ln2_g, gb.ln2_b);
        // residual: gradient w.r.t. x_mid = dx (through skip) + dx_mid
        for (std::size_t i = 0; i < dx.d.size(); ++i) dx.d[i] += dx_mid.d[i];

        // attention backward: x_mid = x_in + concat(heads) Wo
        nn::Mat<T> d_concat(rows, d);
        nn::gemm(false, true, rows, d, d, T(1), dx.data(), d, bp.wo.data(), d, T(0),
                 d_concat.data(), d);
        nn::gemm(true, false, d, d, rows, T(1), ba.attn_concat.data(), d, dx.data(), d, T(1),
                 gb.wo.data(), d);

        nn::Mat<T> dq(rows, d), dk(rows, d), dv(rows, d);
        for (int b = 0; b < st.batch; ++b) {
            const int base = b * st.t_max;
            const int len = st.lens[b];
            if (len == 0) continue;
            for (int h = 0; h < h_n; ++h) {
                const nn::Mat<T>& p = ba.attn_p[static_cast<std::size_t>(b) * h_n + h];
                // dV_h = P^T dO_h
                nn::gemm(true, false, len, dh, len, T(1), p.data(), st.t_max,
                         d_concat.data() + static_cast<std::size_t>(base) * d + h * dh, d, T(0),
                         dv.data() + static_cast<std::size_t>(base) * d + h * dh, d);
                // dP = dO_h V_h^T
                nn::Mat<T> dp(len, len);
                nn::gemm(false, true, len, len, dh, T(1),
                         d_concat.data() + static_cast<std::size_t>(base) * d + h * dh, d,
                         ba.v.data() + static_cast<std::size_t>(base) * d + h * dh, d, T(0),
                         dp.data(), len);
                // dS = P * (dP - rowsum(dP * P))
                for (int i = 0; i < len; ++i) {
                    const T* prow = &p.d[static_cast<std::size_t>(i) * st.t_max];
                    T* dprow = &dp.d[static_cast<std::size_t>(i) * len];
                    T dot = 0;
                    for (int j = 0; j <= i; ++j) dot += dprow[j] * prow[j];
                    for (int j = 0; j <= i; ++j) dprow[j] = prow[j] * (dprow[j] - dot);
                    for (int j = i + 1; j < len; ++j) dprow[j] = 0;
                }
                // dQ_h = dS K_h * scale ; dK_h = dS^T Q_h * scale
                nn::gemm(false, false, len, dh, len, scale, dp.data(), len,
                         ba.k.data() + static_cast<std::size_t>(base) * d + h * dh, d, T(0),
                         dq.data() + static_cast<std::size_t>(base) * d + h * dh, d);
                nn::gemm(true, false, len, dh, len, scale, dp.data(), len,
                         ba.q.data() + static_cast<std::size_t>(base) * d + h * dh, d, T(0),
                         dk.data() + static_cast<std::size_t>(base) * d + h * dh, d);
            }
        }
        // project back through Wq/Wk/Wv
        nn::Mat<T> d_ln1_out(rows, d);
        nn::gemm(false, true, rows, d, d, T(1), dq.data(), d, bp.wq.data(), d, T(0),
                 d_ln1_out.data(), d);
        nn::gemm(false, true, rows, d, d, T(1), dk.data(), d, bp.wk.data(), d, T(1),
                 d_ln1_out.data(), d);
        nn::gemm(false, true, rows, d, d, T(1), dv.data(), d, bp.wv.data(), d, T(1),
                 d_ln1_out.data(), d);
        nn::gemm(true, false, d, d, rows, T(1), ba.ln1_out.data(), d, dq.data(), d, T(1),
                 gb.wq.data(), d);
        nn::gemm(true, false, d, d, rows, T(1), ba.ln1_out.data(), d, dk.data(), d, T(1),
                 gb.wk.data(), d);
        nn::gemm(true, false, d, d, rows, T(1), ba.ln1_out.data(), d, dv.data(), d, T(1),
                 gb.wv.data(), d);
        nn::Mat<T> dx_in;
        layernorm_backward(ba.x_in, bp.ln1_g, ba.ln1_mean, ba.ln1_rstd, d_ln1_out, dx_in,
                           gb.ln1_g, gb.ln1_b);
        for (std::size_t i = 0; i < dx.d.size(); ++i) dx.d[i] += dx_in.d[i];
    }

    // embeddings
    for (int r = 0; r < rows; ++r) {
        const int b = r / st.t_max;
        const int t = r % st.t_max;
        if (t >= st.lens[b]) continue;  // pad positions receive no gradient
        const int tok = st.ids_flat[r];
        const T* dxr = &dx.d[static_cast<std::size_t>(r) * d];
        T* te = &grads.tok_emb.d[static_cast<std::size_t>(tok) * d];
        T* pe = &grads.pos_emb.d[static_cast<std::size_t>(t) * d];
        for (int c = 0; c < d; ++c) {
            te[c] += dxr[c];
            pe[c] += dxr[c];
        }
    }
    return loss;
}

template double loss_and_grad(const LmConfig&, const Params<float>&, const Batch&,
                              Params<float>&);
template double loss_and_grad(const LmConfig&, const Params<double>&, const Batch&,
                              Params<double>&);

template <typename T>
std::vector<std::vector<T>> forward_probs(const LmConfig& config, const Params<T>& params,
                                          const std::vector<int>& ids) {
    Batch batch;
    batch.seqs.push_back(ids);
    ForwardState<T> st;
    forward_pass(config, params, batch, st);
    softmax_rows(st.logits);
    std::vector<std::vector<T>> out;
    const int v_n = params.w_out.cols;
    out.reserve(ids.size());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        const T* row = &st.logits.d[t * v_n];
        out.emplace_back(row, row + v_n);
    }
    return out;
}

template std::vector<std::vector<float>> forward_probs(const LmConfig&, const Params<float>&,
                                                       const std::vector<int>&);
template std::vector<std::vector<double>> forward_probs(const LmConfig&, const Params<double>&,
                                                        const std::vector<int>&);

template <typename T>
std::vector<std::vector<std::vector<T>>> forward_probs_batch(const LmConfig& config,
                                                             const Params<T>& params,
                                                             const Batch& batch) {
    ForwardState<T> st;
    forward_pass(config, params, batch, st);
    softmax_rows(st.logits);
    const int v_n = params.w_out.cols;
    std::vector<std::vector<std::vector<T>>> out(batch.seqs.size());
    for (std::size_t b = 0; b < batch.seqs.size(); ++b) {
        out[b].reserve(batch.seqs[b].size());
        for (std::size_t t = 0; t < batch.seqs[b].size(); ++t) {
            const T* row = &st.logits.d[(b * st.t_max + t) * static_cast<std::size_t>(v_n)];
            out[b].emplace_back(row, row + v_n);
        }
    }
    return out;
}

template std::vector<std::vector<std::vector<float>>> forward_probs_batch(
    const LmConfig&, const Params<float>&, const Batch&);
template std::vector<std::vector<std::vector<double>>> forward_probs_batch(
    const LmConfig&, const Params<double>&, const Batch&);

// ---------------------------------------------------------------- training

namespace {

struct AdamState {
    ParamsF m, v;
    long step = 0;
};

void adam_step(ParamsF& params, const ParamsF& grads, AdamState& state, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++state.step;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    auto ps = tensor_list(params);
    auto gs = tensor_list(const_cast<ParamsF&>(grads));
    auto ms = tensor_list(state.m);
    auto vs = tensor_list(state.v);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        float* p = ps[i]->data();
        const float* g = gs[i]->data();
        float* m = ms[i]->data();
        float* v = vs[i]->data();
        const std::size_t n = ps[i]->size();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * g[j]);
            v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * static_cast<double>(g[j]) * g[j]);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

double clip_gradients(ParamsF& grads, double max_norm) {
    double norm_sq = 0.0;
    for (auto* g : tensor_list(grads)) {
        for (float x : g->d) norm_sq += static_cast<double>(x) * x;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > max_norm && norm > 0.0) {
        const float s = static_cast<float>(max_norm / norm);
        for (auto* g : tensor_list(grads)) {
            for (float& x : g->d) x *= s;
        }
    }
    return norm;
}

}  // namespace

TrainResult train_lm(const std::vector<seq::TrainingSequence>& sequences, LmConfig config,
                     const ProgressFn& progress) {
    if (sequences.empty()) throw ConfigError("train_lm: empty training corpus");
    config.validate();
    nn::use_single_thread_blas();

    std::vector<std::string> texts;
    texts.reserve(sequences.size());
    for (const auto& s : sequences) texts.push_back(s.text);
    Vocab vocab = Vocab::build(texts);

    std::vector<std::vector<int>> encoded;
    encoded.reserve(sequences.size());
    for (const auto& s : sequences) {
        std::vector<int> ids = vocab.encode(s.text, true, true);
        if (static_cast<int>(ids.size()) > config.ctx_len) {
            if (!config.truncate_long) {
                throw ConfigError("train_lm: sequence longer than context (" +
                                  std::to_string(ids.size()) + " > " +
                                  std::to_string(config.ctx_len) + ") for dialogue '" +
                                  s.dialogue_id + "'");
            }
            ids.erase(ids.begin() + 1, ids.begin() + 1 + (static_cast<int>(ids.size()) -
                                                          config.ctx_len));
        }
        encoded.push_back(std::move(ids));
    }

    // length-bucketed batches to limit padding waste
    std::vector<int> order(encoded.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (encoded[a].size() != encoded[b].size()) return encoded[a].size() < encoded[b].size();
        return a < b;
    });
    std::vector<std::vector<int>> batches;  // indices into encoded
    for (std::size_t i = 0; i < order.size(); i += config.batch_size) {
        std::vector<int> batch;
        for (std::size_t j = i; j < std::min(order.size(), i + config.batch_size); ++j) {
            batch.push_back(order[j]);
        }
        batches.push_back(std::move(batch));
    }

    Rng rng(config.seed);
    ParamsF params = init_params<float>(config, vocab.size(), rng);
    AdamState adam;
    adam.m = init_params<float>(config, vocab.size(), rng);
    adam.v = init_params<float>(config, vocab.size(), rng);
    for (auto* t : tensor_list(adam.m)) t->zero();
    for (auto* t : tensor_list(adam.v)) t->zero();

    TrainResult result;
    result.config = config;
    result.vocab = std::move(vocab);

    ParamsF grads;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<int> batch_order(batches.size());
        for (std::size_t i = 0; i < batches.size(); ++i) batch_order[i] = static_cast<int>(i);
        rng.shuffle(batch_order);

        double loss_sum = 0.0;
        std::int64_t target_sum = 0;
        for (std::size_t step = 0; step < batch_order.size(); ++step) {
            const auto& idxs = batches[batch_order[step]];
            Batch batch;
            std::int64_t n_targets = 0;
            for (int i : idxs) {
                batch.seqs.push_back(encoded[i]);
                n_targets += static_cast<std::int64_t>(encoded[i].size()) - 1;
            }
            double loss;
            try {
                loss = loss_and_grad(config, params, batch, grads);
            } catch (const TrainingError& e) {
                throw TrainingError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batch_order[step]) + ")");
            }
            clip_gradients(grads, 1.0);
            adam_step(params, grads, adam, config.learning_rate);
            loss_sum += loss * static_cast<double>(n_targets);
            target_sum += n_targets;
        }
        const double epoch_loss = loss_sum / static_cast<double>(target_sum);
        result.epoch_losses.push_back(epoch_loss);
        if (progress) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            progress(epoch, epoch_loss, secs);
        }
    }
    result.params = std::move(params);
    return result;
}

double grad_check(const LmConfig& tiny_config, std::uint64_t seed) {
    LmConfig config = tiny_config;
    config.validate();
    Rng rng(seed);
    const int vocab_size = 24;
    ParamsD params = init_params<double>(config, vocab_size, rng);
    if (params.count() > 200000) {
        throw ConfigError("grad_check: model too large for finite differences");
    }

    Batch batch;
    for (int s = 0; s < 2; ++s) {
        const int len = 4 + static_cast<int>(rng.uniform(
                                std::min(config.ctx_len - 4, 6)));
        std::vector<int> ids;
        ids.push_back(1);  // bos
        for (int i = 1; i < len; ++i) {
            ids.push_back(4 + static_cast<int>(rng.uniform(vocab_size - 4)));
        }
        batch.seqs.push_back(std::move(ids));
    }

    ParamsD grads;
    loss_and_grad(config, params, batch, grads);

    const double h = 1e-5;
    double max_rel = 0.0;
    auto ps = tensor_list(params);
    auto gs = tensor_list(grads);
    ParamsD scratch_grads;
    for (std::size_t ti = 0; ti < ps.size(); ++ti) {
        nn::Mat<double>& pm = *ps[ti];
        for (std::size_t j = 0; j < pm.size(); ++j) {
            const double orig = pm.d[j];
            pm.d[j] = orig + h;
            const double lp = loss_and_grad(config, params, batch, scratch_grads);
            pm.d[j] = orig - h;
            const double lm = loss_and_grad(config, params, batch, scratch_grads);
            pm.d[j] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = gs[ti]->d[j];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            const double rel = std::abs(numeric - analytic) / denom;
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

// ---------------------------------------------------------------- decoding

DecodeSession::DecodeSession(const LmConfig& config, const ParamsF& params, const Vocab& vocab)
    : config_(config), params_(params), vocab_(vocab) {
    nn::use_single_thread_blas();
    k_cache_.assign(config.n_layers, nn::Mat<float>(config.ctx_len, config.d_model));
    v_cache_.assign(config.n_layers, nn::Mat<float>(config.ctx_len, config.d_model));
    logits_.assign(params.w_out.cols, 0.0f);
}

void DecodeSession::step(int token_id) {
    if (n_ >= config_.ctx_len) throw ContractError("DecodeSession: context window exhausted");
    const int d = config_.d_model;
    const int h_n = config_.n_heads;
    const int dh = config_.d_head();
    const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));

    std::vector<float> x(d);
    {
        const float* te = &params_.tok_emb.d[static_cast<std::size_t>(token_id) * d];
        const float* pe = &params_.pos_emb.d[static_cast<std::size_t>(n_) * d];
        for (int c = 0; c < d; ++c) x[c] = te[c] + pe[c];
    }
    std::vector<float> a(d), q(d), scores, attn(d), m(d), h_buf(config_.d_ff());
    for (int l = 0; l < config_.n_layers; ++l) {
        const auto& bp = params_.blocks[l];
        // ln1
        {
            double mu = 0;
            for (int c = 0; c < d; ++c) mu += x[c];
            mu /= d;
            double var = 0;
            for (int c = 0; c < d; ++c) var += (x[c] - mu) * (x[c] - mu);
            var /= d;
            const double rs = 1.0 / std::sqrt(var + kLnEps);
            for (int c = 0; c < d; ++c) {
                a[c] = static_cast<float>((x[c] - mu) * rs) * bp.ln1_g.d[c] + bp.ln1_b.d[c];
            }
        }
        float* krow = &k_cache_[l].d[static_cast<std::size_t>(n_) * d];
        float* vrow = &v_cache_[l].d[static_cast<std::size_t>(n_) * d];
        nn::gemm(false, false, 1, d, d, 1.0f, a.data(), d, bp.wq.data(), d, 0.0f, q.data(), d);
        nn::gemm(false, false, 1, d, d, 1.0f, a.data(), d, bp.wk.data(), d, 0.0f, krow, d);
        nn::gemm(false, false, 1, d, d, 1.0f, a.data(), d, bp.wv.data(), d, 0.0f, vrow, d);

        const int t_len = n_ + 1;
        scores.assign(t_len, 0.0f);
        for (int h = 0; h < h_n; ++h) {
            const float* qh = q.data() + h * dh;
            double mx = -1e300;
            for (int j = 0; j < t_len; ++j) {
                const float* kh = &k_cache_[l].d[static_cast<std::size_t>(j) * d + h * dh];
                double s = 0;
                for (int c = 0; c < dh; ++c) s += static_cast<double>(qh[c]) * kh[c];
                scores[j] = static_cast<float>(s * scale);
                mx = std::max(mx, static_cast<double>(scores[j]));
            }
            double sum = 0;
            for (int j = 0; j < t_len; ++j) {
                scores[j] = static_cast<float>(std::exp(scores[j] - mx));
                sum += scores[j];
            }
            float* oh = attn.data() + h * dh;
            std::fill(oh, oh + dh, 0.0f);
            for (int j = 0; j < t_len; ++j) {
                const float w = static_cast<float>(scores[j] / sum);
                const float* vh = &v_cache_[l].d[static_cast<std::size_t>(j) * d + h * dh];
                for (int c = 0; c < dh; ++c) oh[c] += w * vh[c];
            }
        }
        // x += attn Wo
        nn::gemm(false, false, 1, d, d, 1.0f, attn.data(), d, bp.wo.data(), d, 1.0f, x.data(), d);
        // ln2 + mlp
        {
            double mu = 0;
            for (int c = 0; c < d; ++c) mu += x[c];
            mu /= d;
            double var = 0;
            for (int c = 0; c < d; ++c) var += (x[c] - mu) * (x[c] - mu);
            var /= d;
            const double rs = 1.0 / std::sqrt(var + kLnEps);
            for (int c = 0; c < d; ++c) {
                m[c] = static_cast<float>((x[c] - mu) * rs) * bp.ln2_g.d[c] + bp.ln2_b.d[c];
            }
        }
        std::memcpy(h_buf.data(), bp.b1.data(), sizeof(float) * config_.d_ff());
        nn::gemm(false, false, 1, config_.d_ff(), d, 1.0f, m.data(), d, bp.w1.data(),
                 config_.d_ff(), 1.0f, h_buf.data(), config_.d_ff());
        for (auto& v : h_buf) v = gelu(v);
        for (int c = 0; c < d; ++c) x[c] += bp.b2.d[c];
        nn::gemm(false, false, 1, d, config_.d_ff(), 1.0f, h_buf.data(), config_.d_ff(),
                 bp.w2.data(), d, 1.0f, x.data(), d);
    }
    // final ln + head
    {
        double mu = 0;
        for (int c = 0; c < d; ++c) mu += x[c];
        mu /= d;
        double var = 0;
        for (int c = 0; c < d; ++c) var += (x[c] - mu) * (x[c] - mu);
        var /= d;
        const double rs = 1.0 / std::sqrt(var + kLnEps);
        for (int c = 0; c < d; ++c) {
            a[c] = static_cast<float>((x[c] - mu) * rs) * params_.lnf_g.d[c] + params_.lnf_b.d[c];
        }
    }
    std::memcpy(logits_.data(), params_.b_out.data(), sizeof(float) * logits_.size());
    nn::gemm(false, false, 1, static_cast<int>(logits_.size()), d, 1.0f, a.data(), d,
             params_.w_out.data(), static_cast<int>(logits_.size()), 1.0f, logits_.data(),
             static_cast<int>(logits_.size()));
    has_logits_ = true;
    ++n_;
}

int DecodeSession::argmax_logits() const {
    int best = 0;
    float best_v = logits_[0];
    for (std::size_t i = 1; i < logits_.size(); ++i) {
        if (logits_[i] > best_v) {  // strict: ties keep the lowest id
            best_v = logits_[i];
            best = static_cast<int>(i);
        }
    }
    return best;
}

void DecodeSession::feed(std::span<const int> ids) {
    if (n_ + static_cast<int>(ids.size()) > config_.ctx_len) {
        throw ContractError("DecodeSession::feed: prompt exceeds context length");
    }
    for (int id : ids) step(id);
}

void DecodeSession::feed_text(const std::string& text) {
    feed(vocab_.encode(text));
}

std::vector<int> DecodeSession::generate_until(int stop_id, int max_new) {
    if (!has_logits_) throw ContractError("DecodeSession::generate_until: nothing fed yet");
    std::vector<int> out;
    for (int i = 0; i < max_new && n_ < config_.ctx_len; ++i) {
        const int next = argmax_logits();
        out.push_back(next);
        if (next == stop_id || next == vocab_.eos_id()) break;
        step(next);
    }
    // the stop token itself is appended to the stream only if room remains
    if (!out.empty() && (out.back() == stop_id || out.back() == vocab_.eos_id()) &&
        n_ < config_.ctx_len) {
        step(out.back());
    }
    return out;
}

std::vector<int> decode_greedy(const LmConfig& config, const ParamsF& params,
                               const std::vector<int>& prompt, int stop_id, int max_new) {
    if (static_cast<int>(prompt.size()) >= config.ctx_len) {
        throw ContractError("decode_greedy: prompt does not fit the context window");
    }
    if (prompt.empty()) throw ContractError("decode_greedy: empty prompt");
    // a session needs a vocab only for feed_text/eos; fabricate eos = 2
    static const Vocab dummy = Vocab::build({});
    DecodeSession session(config, params, dummy);
    session.feed(prompt);
    return session.generate_until(stop_id, max_new);
}

// ------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'K', 'G', 'L', 'M', '0', '0', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_checkpoint(const std::string& path, const LmConfig& config, const ParamsF& params,
                     const Vocab& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, static_cast<std::int32_t>(config.n_layers));
    write_pod(out, static_cast<std::int32_t>(config.d_model));
    write_pod(out, static_cast<std::int32_t>(config.n_heads));
    write_pod(out, static_cast<std::int32_t>(config.ctx_len));
    write_pod(out, static_cast<std::int32_t>(vocab.size()));
    write_pod(out, config.learning_rate);
    write_pod(out, static_cast<std::int32_t>(config.batch_size));
    write_pod(out, static_cast<std::int32_t>(config.epochs));
    write_pod(out, static_cast<std::uint64_t>(config.seed));
    for (const auto* t : tensor_list(params)) {
        write_pod(out, static_cast<std::int32_t>(t->rows));
        write_pod(out, static_cast<std::int32_t>(t->cols));
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->size() * sizeof(float)));
    }
    if (!out) throw ValidationError("checkpoint write failed: " + path);
    vocab.save(path + ".vocab");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError("not a model checkpoint (bad magic): " + path);
    }
    Checkpoint ck;
    std::int32_t n_layers, d_model, n_heads, ctx_len, vocab_size, batch_size, epochs;
    std::uint64_t seed;
    read_pod(in, n_layers);
    read_pod(in, d_model);
    read_pod(in, n_heads);
    read_pod(in, ctx_len);
    read_pod(in, vocab_size);
    read_pod(in, ck.config.learning_rate);
    read_pod(in, batch_size);
    read_pod(in, epochs);
    read_pod(in, seed);
    ck.config.n_layers = n_layers;
    ck.config.d_model = d_model;
    ck.config.n_heads = n_heads;
    ck.config.ctx_len = ctx_len;
    ck.config.batch_size = batch_size;
    ck.config.epochs = epochs;
    ck.config.seed = seed;
    ck.config.validate();

    Rng rng(0);
    ck.params = init_params<float>(ck.config, vocab_size, rng);
    for (auto* t : tensor_list(ck.params)) {
        std::int32_t rows, cols;
        read_pod(in, rows);
        read_pod(in, cols);
        if (!in || rows != t->rows || cols != t->cols) {
            throw ParseError("checkpoint tensor shape mismatch in " + path);
        }
        in.read(reinterpret_cast<char*>(t->data()),
                static_cast<std::streamsize>(t->size() * sizeof(float)));
    }
    if (!in) throw ParseError("truncated checkpoint: " + path);
    for (const auto* t : tensor_list(ck.params)) {
        for (float v : t->d) {
            if (!std::isfinite(v)) throw ValidationError("non-finite weight in " + path);
        }
    }
    ck.vocab = Vocab::load(path + ".vocab");
    if (ck.vocab.size() != vocab_size) {
        throw ValidationError("vocab sidecar size mismatch for " + path);
    }
    return ck;
}

}  // namespace kgtod::lm
