#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lsnpipe::corpus {

// Shared symbol table over all language alphabets plus specials. Id 0 is
// reserved for padding; ids are dense and bijective with symbols.
struct Tokenizer {
    static constexpr int kPad = 0;
    static constexpr int kSep = 1;
    static constexpr int kBos = 2;

    std::vector<std::string> id_to_symbol{"<pad>", "<sep>", "<bos>"};
    std::map<std::string, int> symbol_to_id{{"<pad>", 0}, {"<sep>", 1}, {"<bos>", 2}};

    int add_symbol(const std::string& symbol);
    int id_of(const std::string& symbol) const;
    int size() const { return static_cast<int>(id_to_symbol.size()); }

    void save(const std::filesystem::path& path) const;  // one "symbol\tid" per line
    static Tokenizer load(const std::filesystem::path& path);
};

// A synthetic language: a disjoint (unless overlapped) alphabet slice and an
// order-1 Markov chain over alphabet + separator (state 0).
struct LangSpec {
    std::string lang_tag;
    std::vector<std::string> alphabet;
    std::vector<std::vector<double>> transition;  // (A+1) x (A+1), rows sum to 1
    uint64_t seed = 0;

    int n_states() const { return static_cast<int>(alphabet.size()) + 1; }
    void save(const std::filesystem::path& path) const;
    static LangSpec load(const std::filesystem::path& path);
};

struct LangCorpus {
    std::string lang_tag;
    std::vector<std::vector<int>> samples;  // token ids under the shared tokenizer
    uint64_t seed = 0;

    int64_t total_tokens() const;
    void save(const std::filesystem::path& path) const;  // space-separated ids per line
    static LangCorpus load(const std::filesystem::path& path, const std::string& lang_tag);
};

// Hands out symbols from a finite pool; throws once the pool is exhausted.
// rewind() re-exposes the most recently taken symbols so adjacent languages
// can share a configured overlap.
class SymbolPool {
public:
    SymbolPool();
    std::vector<std::string> take(int count);
    void rewind(int count);
    int remaining() const { return static_cast<int>(pool_.size()) - next_; }

private:
    std::vector<std::string> pool_;
    int next_ = 0;
};

LangSpec gen_language_spec(SymbolPool& pool, const std::string& lang_tag, int alphabet_size,
                           uint64_t seed);

// Convenience: k languages drawn from one pool; languages after the first
// reuse floor(overlap_fraction * alphabet_size) symbols of their predecessor.
std::vector<LangSpec> gen_language_family(std::span<const std::string> tags, int alphabet_size,
                                          double overlap_fraction, uint64_t seed);

// Markov-chain sampling; each sample restarts from the separator state. Total
// token count lands within one sample of n_tokens.
LangCorpus sample_corpus(const LangSpec& spec, const Tokenizer& tokenizer, int64_t n_tokens,
                         int sample_len, uint64_t seed);

// Uniform subset of samples without replacement, original order kept.
// fraction = 1 returns the input unchanged.
LangCorpus downsample(const LangCorpus& corpus, double fraction, uint64_t seed);

// Greedy in-order packing with a separator between samples. A sample that
// would overflow starts a new pack; samples longer than max_len are split.
std::vector<std::vector<int>> pack(std::span<const std::vector<int>> samples, int max_len,
                                   int separator_id = Tokenizer::kSep);

// Stationary distribution of a spec's chain by power iteration (test oracle
// and reporting helper).
std::vector<double> stationary_distribution(const LangSpec& spec, int iterations = 1000);

}  // namespace lsnpipe::corpus
