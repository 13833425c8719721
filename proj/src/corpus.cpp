#include "lsnpipe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lsnpipe/rng.hpp"
#include "lsnpipe/util.hpp"

namespace lsnpipe::corpus {

int Tokenizer::add_symbol(const std::string& symbol) {
    auto it = symbol_to_id.find(symbol);
    if (it != symbol_to_id.end()) return it->second;
    int id = size();
    id_to_symbol.push_back(symbol);
    symbol_to_id.emplace(symbol, id);
    return id;
}

int Tokenizer::id_of(const std::string& symbol) const {
    auto it = symbol_to_id.find(symbol);
    require(it != symbol_to_id.end(), "tokenizer: unknown symbol '" + symbol + "'");
    return it->second;
}

void Tokenizer::save(const std::filesystem::path& path) const {
    std::string out;
    for (int id = 0; id < size(); ++id)
        out += id_to_symbol[static_cast<size_t>(id)] + "\t" + std::to_string(id) + "\n";
    write_file(path, out);
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
    Tokenizer tok;
    tok.id_to_symbol.clear();
    tok.symbol_to_id.clear();
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        require(fields.size() == 2, "tokenizer file: expected 'symbol<TAB>id'");
        int id = std::stoi(fields[1]);
        require(id == static_cast<int>(tok.id_to_symbol.size()),
                "tokenizer file: ids must be dense and ascending");
        tok.id_to_symbol.push_back(fields[0]);
        tok.symbol_to_id.emplace(fields[0], id);
    }
    require(tok.size() > 3 && tok.id_to_symbol[0] == "<pad>" && tok.id_to_symbol[1] == "<sep>" &&
                tok.id_to_symbol[2] == "<bos>",
            "tokenizer file: missing reserved specials");
    return tok;
}

void LangSpec::save(const std::filesystem::path& path) const {
    std::ostringstream out;
    out.precision(17);
    out << "lang_tag\t" << lang_tag << "\n";
    out << "seed\t" << seed << "\n";
    out << "alphabet";
    for (const auto& s : alphabet) out << "\t" << s;
    out << "\n";
    for (const auto& row : transition) {
        out << "row";
        for (double v : row) out << "\t" << v;
        out << "\n";
    }
    write_file(path, out.str());
}

LangSpec LangSpec::load(const std::filesystem::path& path) {
    LangSpec spec;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields[0] == "lang_tag") {
            require(fields.size() == 2, "spec file: bad lang_tag line");
            spec.lang_tag = fields[1];
        } else if (fields[0] == "seed") {
            spec.seed = std::stoull(fields[1]);
        } else if (fields[0] == "alphabet") {
            spec.alphabet.assign(fields.begin() + 1, fields.end());
        } else if (fields[0] == "row") {
            std::vector<double> row;
            for (size_t i = 1; i < fields.size(); ++i) row.push_back(std::stod(fields[i]));
            spec.transition.push_back(std::move(row));
        } else {
            throw ConfigError("spec file: unknown line '" + fields[0] + "'");
        }
    }
    require(static_cast<int>(spec.transition.size()) == spec.n_states(),
            "spec file: transition size mismatch");
    return spec;
}

int64_t LangCorpus::total_tokens() const {
    int64_t n = 0;
    for (const auto& s : samples) n += static_cast<int64_t>(s.size());
    return n;
}

void LangCorpus::save(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& sample : samples) {
        for (size_t i = 0; i < sample.size(); ++i) {
            if (i) out += ' ';
            out += std::to_string(sample[i]);
        }
        out += '\n';
    }
    write_file(path, out);
}

LangCorpus LangCorpus::load(const std::filesystem::path& path, const std::string& lang_tag) {
    LangCorpus corpus;
    corpus.lang_tag = lang_tag;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<int> sample;
        std::istringstream ls(line);
        int id;
        while (ls >> id) sample.push_back(id);
        require(!sample.empty(), "corpus file: empty sample line");
        corpus.samples.push_back(std::move(sample));
    }
    return corpus;
}

SymbolPool::SymbolPool() {
    // Single printable characters; enough for dozens of toy languages.
    for (char c = 'a'; c <= 'z'; ++c) pool_.push_back(std::string(1, c));
    for (char c = 'A'; c <= 'Z'; ++c) pool_.push_back(std::string(1, c));
    for (char c = '0'; c <= '9'; ++c) pool_.push_back(std::string(1, c));
}

std::vector<std::string> SymbolPool::take(int count) {
    require(count > 0, "symbol pool: count must be positive");
    if (next_ + count > static_cast<int>(pool_.size()))
        throw ConfigError("symbol pool exhausted: too many languages/symbols requested");
    std::vector<std::string> out(pool_.begin() + next_, pool_.begin() + next_ + count);
    next_ += count;
    return out;
}

void SymbolPool::rewind(int count) {
    require(count >= 0 && count <= next_, "symbol pool: invalid rewind");
    next_ -= count;
}

LangSpec gen_language_spec(SymbolPool& pool, const std::string& lang_tag, int alphabet_size,
                           uint64_t seed) {
    require(alphabet_size >= 4, "gen_language_spec: alphabet_size must be >= 4");
    LangSpec spec;
    spec.lang_tag = lang_tag;
    spec.seed = seed;
    spec.alphabet = pool.take(alphabet_size);
    int n = spec.n_states();
    Rng rng(mix_seed(seed, fnv1a(lang_tag)));
    spec.transition.assign(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n)));
    for (auto& row : spec.transition) {
        double total = 0.0;
        for (double& v : row) {
            v = 0.05 + rng.uniform();  // floor keeps every transition reachable
            total += v;
        }
        for (double& v : row) v /= total;
    }
    // Keep separators sparse so samples are mostly in-language text.
    for (auto& row : spec.transition) {
        double sep = row[0];
        double shrunk = sep * 0.25;
        double redistribute = (sep - shrunk) / (n - 1);
        row[0] = shrunk;
        for (int j = 1; j < n; ++j) row[static_cast<size_t>(j)] += redistribute;
        double total = std::accumulate(row.begin(), row.end(), 0.0);
        for (double& v : row) v /= total;
    }
    return spec;
}

std::vector<LangSpec> gen_language_family(std::span<const std::string> tags, int alphabet_size,
                                          double overlap_fraction, uint64_t seed) {
    require(overlap_fraction >= 0.0 && overlap_fraction < 1.0,
            "gen_language_family: overlap_fraction must be in [0,1)");
    SymbolPool pool;
    std::vector<LangSpec> specs;
    int overlap = static_cast<int>(std::floor(overlap_fraction * alphabet_size));
    for (size_t i = 0; i < tags.size(); ++i) {
        if (i > 0 && overlap > 0) pool.rewind(overlap);
        specs.push_back(gen_language_spec(pool, tags[i], alphabet_size, mix_seed(seed, i)));
    }
    return specs;
}

LangCorpus sample_corpus(const LangSpec& spec, const Tokenizer& tokenizer, int64_t n_tokens,
                         int sample_len, uint64_t seed) {
    require(sample_len >= 2, "sample_corpus: sample_len must be >= 2");
    require(n_tokens >= sample_len, "sample_corpus: n_tokens must be >= sample_len");
    std::vector<int> state_to_id(static_cast<size_t>(spec.n_states()));
    state_to_id[0] = Tokenizer::kSep;
    for (size_t i = 0; i < spec.alphabet.size(); ++i)
        state_to_id[i + 1] = tokenizer.id_of(spec.alphabet[i]);

    LangCorpus corpus;
    corpus.lang_tag = spec.lang_tag;
    corpus.seed = seed;
    Rng rng(mix_seed(seed, fnv1a(spec.lang_tag)));
    int64_t total = 0;
    while (total < n_tokens) {
        std::vector<int> sample;
        sample.reserve(static_cast<size_t>(sample_len));
        int state = 0;  // separator state starts each sample
        for (int k = 0; k < sample_len; ++k) {
            const auto& row = spec.transition[static_cast<size_t>(state)];
            double u = rng.uniform();
            double acc = 0.0;
            int next = spec.n_states() - 1;
            for (int j = 0; j < spec.n_states(); ++j) {
                acc += row[static_cast<size_t>(j)];
                if (u < acc) {
                    next = j;
                    break;
                }
            }
            sample.push_back(state_to_id[static_cast<size_t>(next)]);
            state = next;
        }
        total += sample_len;
        corpus.samples.push_back(std::move(sample));
    }
    return corpus;
}

LangCorpus downsample(const LangCorpus& corpus, double fraction, uint64_t seed) {
    require(fraction > 0.0 && fraction <= 1.0, "downsample: fraction must be in (0,1]");
    if (fraction == 1.0) return corpus;
    size_t n = corpus.samples.size();
    require(n > 0, "downsample: empty corpus");
    size_t keep = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
    keep = std::min(n, std::max<size_t>(1, keep));

    // Partial Fisher-Yates picks `keep` distinct indices; sorting keeps the
    // subset in the original sample order.
    std::vector<size_t> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    Rng rng(mix_seed(seed, fnv1a(corpus.lang_tag)));
    for (size_t i = 0; i < keep; ++i) {
        size_t j = i + static_cast<size_t>(rng.below(n - i));
        std::swap(indices[i], indices[j]);
    }
    indices.resize(keep);
    std::sort(indices.begin(), indices.end());

    LangCorpus out;
    out.lang_tag = corpus.lang_tag;
    out.seed = seed;
    out.samples.reserve(keep);
    for (size_t idx : indices) out.samples.push_back(corpus.samples[idx]);
    return out;
}

std::vector<std::vector<int>> pack(std::span<const std::vector<int>> samples, int max_len,
                                   int separator_id) {
    require(max_len >= 2, "pack: max_len must be >= 2");
    std::vector<std::vector<int>> packs;
    std::vector<int> current;
    auto flush = [&] {
        if (!current.empty()) {
            packs.push_back(std::move(current));
            current.clear();
        }
    };
    for (const auto& sample : samples) {
        std::span<const int> rest(sample);
        if (!current.empty()) {
            if (static_cast<int>(current.size()) + 1 + static_cast<int>(rest.size()) <= max_len) {
                current.push_back(separator_id);
                current.insert(current.end(), rest.begin(), rest.end());
                continue;
            }
            flush();
        }
        // current is empty here; oversized samples are split into full packs
        while (static_cast<int>(rest.size()) > max_len) {
            packs.emplace_back(rest.begin(), rest.begin() + max_len);
            rest = rest.subspan(static_cast<size_t>(max_len));
        }
        current.assign(rest.begin(), rest.end());
    }
    flush();
    return packs;
}

std::vector<double> stationary_distribution(const LangSpec& spec, int iterations) {
    int n = spec.n_states();
    std::vector<double> pi(static_cast<size_t>(n), 1.0 / n);
    std::vector<double> next(static_cast<size_t>(n));
    for (int it = 0; it < iterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                next[static_cast<size_t>(j)] +=
                    pi[static_cast<size_t>(i)] * spec.transition[static_cast<size_t>(i)][static_cast<size_t>(j)];
        std::swap(pi, next);
    }
    return pi;
}

}  // namespace lsnpipe::corpus
