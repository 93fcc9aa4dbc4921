#include "cqe/sparse_index.hpp"

#include <cmath>
#include <numeric>
#include <unordered_map>

#include "binary_io.hpp"
#include "cqe/common.hpp"

namespace cqe {

namespace {

constexpr std::string_view kMagic = "CQESPIDX";
constexpr std::uint32_t kVersion = 1;

const std::vector<Posting> kNoPostings;

}  // namespace

void BM25Config::validate() const {
    if (!(k1 >= 0.0) || !std::isfinite(k1)) throw InvalidArgument("BM25 k1 must be a finite value >= 0");
    if (!(b >= 0.0 && b <= 1.0)) throw InvalidArgument("BM25 b must lie in [0, 1]");
}

std::vector<std::pair<std::string, std::uint32_t>> term_multiplicities(const std::vector<std::string>& tokens) {
    std::vector<std::pair<std::string, std::uint32_t>> out;
    std::unordered_map<std::string_view, std::size_t> slot;
    for (const auto& t : tokens) {
        auto [it, inserted] = slot.emplace(t, out.size());
        if (inserted) {
            out.emplace_back(t, 1);
        } else {
            ++out[it->second].second;
        }
    }
    return out;
}

InvertedIndex InvertedIndex::build(const Corpus& corpus, BM25Config config) {
    config.validate();
    if (corpus.empty()) throw InvalidArgument("cannot build a sparse index over an empty corpus");

    InvertedIndex index;
    index.config_ = config;
    index.ids_.reserve(corpus.count());
    index.doc_lengths_.reserve(corpus.count());

    for (std::size_t ord = 0; ord < corpus.count(); ++ord) {
        const auto& passage = corpus[ord];
        auto tokens = tokenize(passage.text);
        index.ids_.push_back(passage.id);
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        // Ordinals are visited in increasing order, so each posting list stays sorted.
        for (const auto& [term, tf] : term_multiplicities(tokens)) {
            index.postings_[term].push_back({static_cast<std::uint32_t>(ord), tf});
        }
    }
    index.finalize();
    return index;
}

void InvertedIndex::finalize() {
    ordinals_.clear();
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!ordinals_.emplace(ids_[i], static_cast<std::uint32_t>(i)).second) {
            throw IoError("duplicate passage id '" + ids_[i] + "' in sparse index");
        }
    }
    std::uint64_t total = std::accumulate(doc_lengths_.begin(), doc_lengths_.end(), std::uint64_t{0});
    avg_doc_length_ = ids_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(ids_.size());
}

const std::vector<Posting>& InvertedIndex::postings(std::string_view term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? kNoPostings : it->second;
}

double InvertedIndex::idf(std::string_view term) const {
    auto n = static_cast<double>(doc_count());
    auto df = static_cast<double>(document_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double InvertedIndex::term_weight(std::size_t df, std::uint32_t tf, std::uint32_t doc_len) const {
    const double n = static_cast<double>(doc_count());
    const double dfd = static_cast<double>(df);
    const double idf = std::log(1.0 + (n - dfd + 0.5) / (dfd + 0.5));
    const double tfd = static_cast<double>(tf);
    const double norm = config_.k1 * (1.0 - config_.b + config_.b * static_cast<double>(doc_len) / avg_doc_length_);
    return idf * (tfd * (config_.k1 + 1.0)) / (tfd + norm);
}

std::uint32_t InvertedIndex::ordinal_of(std::string_view passage_id) const {
    auto it = ordinals_.find(passage_id);
    if (it == ordinals_.end()) throw InvalidArgument("unknown passage id '" + std::string(passage_id) + "'");
    return it->second;
}

double InvertedIndex::score(const std::vector<std::string>& query_tokens, std::string_view passage_id) const {
    const auto ord = ordinal_of(passage_id);
    double total = 0.0;
    for (const auto& [term, mult] : term_multiplicities(query_tokens)) {
        const auto& plist = postings(term);
        auto it = std::lower_bound(plist.begin(), plist.end(), ord,
                                   [](const Posting& p, std::uint32_t o) { return p.ordinal < o; });
        if (it == plist.end() || it->ordinal != ord) continue;
        total += static_cast<double>(mult) * term_weight(plist.size(), it->tf, doc_lengths_[ord]);
    }
    return total;
}

RankedList InvertedIndex::search(const std::vector<std::string>& query_tokens, std::size_t k,
                                 std::string tag) const {
    if (k == 0) throw InvalidArgument("search depth k must be >= 1");
    std::vector<double> acc(doc_count(), 0.0);
    std::vector<char> touched(doc_count(), 0);
    std::vector<std::uint32_t> hits;
    // Term-at-a-time accumulation in the same term order as score(), so both
    // paths produce bit-identical values.
    for (const auto& [term, mult] : term_multiplicities(query_tokens)) {
        const auto& plist = postings(term);
        for (const auto& p : plist) {
            acc[p.ordinal] += static_cast<double>(mult) * term_weight(plist.size(), p.tf, doc_lengths_[p.ordinal]);
            if (!touched[p.ordinal]) {
                touched[p.ordinal] = 1;
                hits.push_back(p.ordinal);
            }
        }
    }
    std::vector<std::pair<std::string, double>> candidates;
    candidates.reserve(hits.size());
    for (auto ord : hits) {
        if (acc[ord] > 0.0) candidates.emplace_back(ids_[ord], acc[ord]);
    }
    return make_ranked_list(std::move(candidates), k, std::move(tag));
}

// Layout (all integers little-endian):
//   "CQESPIDX" | u32 version | u32 section count | sections...
//   section  = 4-byte tag | u64 payload length | payload
//   "CONF"   = f64 k1 | f64 b
//   "IDMP"   = u64 n | n x (u32 len | bytes)
//   "DLEN"   = u64 n | n x u32
//   "POST"   = u64 terms | terms x (u32 len | bytes | u64 m | m x (u32 ordinal | u32 tf))
// Unknown sections are skipped on load.
void InvertedIndex::save(const std::filesystem::path& path) const {
    auto section = [](std::string& out, std::string_view tag, const std::string& payload) {
        out.append(tag);
        binary::put_u64(out, payload.size());
        out += payload;
    };

    std::string conf;
    binary::put_f64(conf, config_.k1);
    binary::put_f64(conf, config_.b);

    std::string idmp;
    binary::put_u64(idmp, ids_.size());
    for (const auto& id : ids_) binary::put_str(idmp, id);

    std::string dlen;
    binary::put_u64(dlen, doc_lengths_.size());
    for (auto len : doc_lengths_) binary::put_u32(dlen, len);

    std::string post;
    binary::put_u64(post, postings_.size());
    for (const auto& [term, plist] : postings_) {
        binary::put_str(post, term);
        binary::put_u64(post, plist.size());
        for (const auto& p : plist) {
            binary::put_u32(post, p.ordinal);
            binary::put_u32(post, p.tf);
        }
    }

    std::string out(kMagic);
    binary::put_u32(out, kVersion);
    binary::put_u32(out, 4);
    section(out, "CONF", conf);
    section(out, "IDMP", idmp);
    section(out, "DLEN", dlen);
    section(out, "POST", post);
    binary::write_file(path.string(), out);
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
    const auto data = binary::read_file(path.string());
    binary::Reader r(data, path.string());
    if (r.bytes(kMagic.size()) != kMagic) throw IoError(path.string() + ": not a sparse index (bad magic)");
    if (auto v = r.u32(); v != kVersion) {
        throw IoError(path.string() + ": unsupported sparse index version " + std::to_string(v));
    }
    const auto sections = r.u32();

    InvertedIndex index;
    bool have_conf = false, have_ids = false, have_lens = false, have_post = false;
    for (std::uint32_t s = 0; s < sections; ++s) {
        const auto tag = std::string(r.bytes(4));
        const auto len = r.u64();
        binary::Reader sec(r.bytes(len), path.string() + " section " + tag);
        if (tag == "CONF") {
            index.config_.k1 = sec.f64();
            index.config_.b = sec.f64();
            have_conf = true;
        } else if (tag == "IDMP") {
            const auto n = sec.u64();
            index.ids_.reserve(n);
            for (std::uint64_t i = 0; i < n; ++i) index.ids_.push_back(sec.str());
            have_ids = true;
        } else if (tag == "DLEN") {
            const auto n = sec.u64();
            index.doc_lengths_.reserve(n);
            for (std::uint64_t i = 0; i < n; ++i) index.doc_lengths_.push_back(sec.u32());
            have_lens = true;
        } else if (tag == "POST") {
            const auto terms = sec.u64();
            for (std::uint64_t t = 0; t < terms; ++t) {
                auto term = sec.str();
                const auto m = sec.u64();
                std::vector<Posting> plist;
                plist.reserve(m);
                for (std::uint64_t i = 0; i < m; ++i) {
                    const auto ord = sec.u32();
                    const auto tf = sec.u32();
                    plist.push_back({ord, tf});
                }
                index.postings_.emplace(std::move(term), std::move(plist));
            }
            have_post = true;
        } else {
            continue;
        }
        if (!sec.done()) throw IoError(sec.context() + ": trailing bytes");
    }
    if (!(have_conf && have_ids && have_lens && have_post)) {
        throw IoError(path.string() + ": sparse index is missing a required section");
    }
    index.config_.validate();
    if (index.ids_.size() != index.doc_lengths_.size()) {
        throw IoError(path.string() + ": id count does not match doc-length count");
    }
    for (const auto& [term, plist] : index.postings_) {
        for (std::size_t i = 0; i < plist.size(); ++i) {
            if (plist[i].ordinal >= index.ids_.size() || plist[i].tf == 0 ||
                (i > 0 && plist[i].ordinal <= plist[i - 1].ordinal)) {
                throw IoError(path.string() + ": corrupt posting list for term '" + term + "'");
            }
        }
    }
    index.finalize();
    return index;
}

bool InvertedIndex::operator==(const InvertedIndex& other) const {
    return config_.k1 == other.config_.k1 && config_.b == other.config_.b && ids_ == other.ids_ &&
           doc_lengths_ == other.doc_lengths_ && postings_ == other.postings_;
}

}  // namespace cqe
