#pragma once
// From-scratch autoregressive language model: a small pre-LN decoder-only
// transformer with word-level vocabulary, Adam training, greedy decoding
// with a KV cache, and a finite-difference gradient check.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgtod/common.hpp"
#include "kgtod/nn.hpp"
#include "kgtod/seqfmt.hpp"

namespace kgtod::lm {

// Word-level token <-> id bijection. Ids 0..3 are <pad>/<bos>/<eos>/<unk>;
// the remaining grammar specials follow, then corpus tokens sorted
// lexicographically. Unknown tokens encode to <unk>.
class Vocab {
public:
    Vocab() = default;
    static Vocab build(const std::vector<std::string>& texts);

    int id(const std::string& token) const;      // <unk> id when missing
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }
    bool contains(const std::string& token) const { return ids_.count(token) > 0; }

    int pad_id() const { return 0; }
    int bos_id() const { return 1; }
    int eos_id() const { return 2; }
    int unk_id() const { return 3; }

    std::vector<int> encode(const std::string& text, bool add_bos = false,
                            bool add_eos = false) const;
    std::string decode(std::span<const int> ids) const;  // skips pad/bos/eos

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    void push(const std::string& token);
};

struct LmConfig {
    int n_layers = 4;
    int d_model = 128;
    int n_heads = 4;
    int ctx_len = 512;
    double learning_rate = 1e-3;
    int batch_size = 16;
    int epochs = 10;
    std::uint64_t seed = 1;
    // over-long sequences are front-truncated when true, rejected otherwise
    bool truncate_long = true;

    int d_ff() const { return 4 * d_model; }
    int d_head() const { return d_model / n_heads; }
    void validate() const;
};

template <typename T>
struct BlockParams {
    nn::Mat<T> ln1_g, ln1_b;
    nn::Mat<T> wq, wk, wv, wo;        // d_model x d_model
    nn::Mat<T> ln2_g, ln2_b;
    nn::Mat<T> w1, b1;                // d_model x d_ff, 1 x d_ff
    nn::Mat<T> w2, b2;                // d_ff x d_model, 1 x d_model
};

template <typename T>
struct Params {
    nn::Mat<T> tok_emb;               // vocab x d_model
    nn::Mat<T> pos_emb;               // ctx_len x d_model
    std::vector<BlockParams<T>> blocks;
    nn::Mat<T> lnf_g, lnf_b;
    nn::Mat<T> w_out, b_out;          // d_model x vocab, 1 x vocab

    std::size_t count() const;
};

// Every tensor of the model in a fixed canonical order (the checkpoint and
// optimizer-state order).
template <typename T>
std::vector<nn::Mat<T>*> tensor_list(Params<T>& p);
template <typename T>
std::vector<const nn::Mat<T>*> tensor_list(const Params<T>& p);

using ParamsF = Params<float>;
using ParamsD = Params<double>;

template <typename T>
Params<T> init_params(const LmConfig& config, int vocab_size, Rng& rng);

// One right-padded training batch.
struct Batch {
    std::vector<std::vector<int>> seqs;  // each starts with bos, ends with eos
};

// Mean next-token cross-entropy over non-pad targets; fills `grads`
// (same shapes as params). Throws TrainingError on non-finite loss.
template <typename T>
double loss_and_grad(const LmConfig& config, const Params<T>& params, const Batch& batch,
                     Params<T>& grads);

// Forward only: per-position next-token probability rows for one sequence.
template <typename T>
std::vector<std::vector<T>> forward_probs(const LmConfig& config, const Params<T>& params,
                                          const std::vector<int>& ids);

// Batched variant: [lane][position][vocab] with right padding.
template <typename T>
std::vector<std::vector<std::vector<T>>> forward_probs_batch(const LmConfig& config,
                                                             const Params<T>& params,
                                                             const Batch& batch);

struct TrainResult {
    LmConfig config;
    ParamsF params;
    Vocab vocab;
    std::vector<double> epoch_losses;
};

using ProgressFn = std::function<void(int epoch, double loss, double seconds)>;

// Builds the vocabulary from the sequences plus grammar specials, then
// trains with Adam. Deterministic given config.seed.
TrainResult train_lm(const std::vector<seq::TrainingSequence>& sequences, LmConfig config,
                     const ProgressFn& progress = nullptr);

// Max relative error between analytic gradients and central finite
// differences (64-bit, step 1e-5) on a random batch for a tiny model.
double grad_check(const LmConfig& tiny_config, std::uint64_t seed);

// Greedy argmax decoding, ties broken by lowest token id. Stops after
// emitting `stop_id` or eos, or at max_new tokens. Throws ContractError
// when the prompt does not fit the context window.
std::vector<int> decode_greedy(const LmConfig& config, const ParamsF& params,
                               const std::vector<int>& prompt, int stop_id, int max_new);

// Incremental greedy decoding with a KV cache; lets callers interleave
// forced (spliced) segments with generated ones.
class DecodeSession {
public:
    DecodeSession(const LmConfig& config, const ParamsF& params, const Vocab& vocab);

    void feed(std::span<const int> ids);
    void feed_text(const std::string& text);
    // Generates until stop_id or eos (consumed, included in the return) or
    // max_new tokens; returns the newly generated ids.
    std::vector<int> generate_until(int stop_id, int max_new);
    int position() const { return n_; }
    bool full() const { return n_ >= config_.ctx_len; }

private:
    void step(int token_id);  // advance one position, refresh logits
    int argmax_logits() const;

    const LmConfig& config_;
    const ParamsF& params_;
    const Vocab& vocab_;
    int n_ = 0;
    std::vector<nn::Mat<float>> k_cache_, v_cache_;  // per layer: ctx x d_model
    std::vector<float> logits_;
    bool has_logits_ = false;
};

// Versioned binary checkpoint (config header + raw float32 tensors) with a
// text vocabulary sidecar at <path>.vocab.
void save_checkpoint(const std::string& path, const LmConfig& config, const ParamsF& params,
                     const Vocab& vocab);
struct Checkpoint {
    LmConfig config;
    ParamsF params;
    Vocab vocab;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace kgtod::lm
