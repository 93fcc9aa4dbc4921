#include "cqe/synthetic.hpp"

#include <array>
#include <cstdio>

#include "binary_io.hpp"
#include "cqe/common.hpp"
#include "cqe/trainer.hpp"

namespace cqe {

namespace {

constexpr std::array kTopics = {"neolithic", "baroque",   "photosynthesis", "volcano", "glacier",  "tsunami",
                                "pyramid",   "satellite", "vaccine",        "enzyme",  "monsoon",  "quasar",
                                "cathedral", "telegraph", "coral",          "mammoth", "aqueduct", "comet"};
constexpr std::array kAspects = {"start", "end", "cause", "effect", "origin", "impact", "size", "location", "age",
                                 "spread"};
constexpr std::array kFillers = {"people", "world",  "time",  "area",  "system", "study",   "process",
                                 "form",   "level",  "water", "earth", "light",  "history", "region"};

std::string pick(std::mt19937_64& rng, const auto& words) { return words[uniform_index(rng, words.size())]; }

}  // namespace

SyntheticDataset make_synthetic_dataset(const SyntheticConfig& config) {
    if (config.topics == 0 || config.topics > kTopics.size()) {
        throw InvalidArgument("synthetic topic count must be in 1.." + std::to_string(kTopics.size()));
    }
    if (config.passages_per_topic < 3) throw InvalidArgument("need at least 3 passages per topic");

    SyntheticDataset data;
    data.config = config;
    data.distractor_term = "what";
    std::mt19937_64 rng(config.seed);

    // passage aspects, per topic, for qrels
    std::vector<std::vector<std::pair<std::string, std::vector<std::string>>>> by_topic(config.topics);
    std::vector<Passage> passages;
    for (std::size_t s = 0; s < config.topics; ++s) {
        const std::string topic = kTopics[s];
        data.topic_terms.push_back(topic);
        for (std::size_t m = 0; m < config.passages_per_topic; ++m) {
            const std::string a1 = kAspects[m % kAspects.size()];
            std::string a2 = pick(rng, kAspects);
            while (a2 == a1) a2 = pick(rng, kAspects);
            char id[32];
            std::snprintf(id, sizeof id, "P%03zu", s * config.passages_per_topic + m);
            const std::string text = topic + " " + a1 + ", " + pick(rng, kFillers) + " " + a2 + "; " +
                                     pick(rng, kFillers) + " " + pick(rng, kFillers) + ".";
            passages.push_back({id, text});
            by_topic[s].push_back({id, {a1, a2}});
        }
    }
    data.corpus = Corpus(std::move(passages));
    data.passages = ReferenceEmbedder(config.dim, config.seed).embed_corpus(data.corpus);

    for (std::size_t s = 0; s < config.topics; ++s) {
        const std::string topic = kTopics[s];
        const std::string x = pick(rng, kAspects);
        std::string y = pick(rng, kAspects);
        while (y == x) y = pick(rng, kAspects);

        Session session;
        session.session_id = "S" + std::to_string(s + 1);
        session.turns.push_back({"What is the " + topic + "?", "what is the " + topic});
        session.turns.push_back({"How did it " + x + "?", "how did the " + topic + " " + x});
        session.turns.push_back({"Why did it " + y + "?", "why did the " + topic + " " + y});

        const std::array<std::string, 3> asked = {"", x, y};
        for (std::size_t t = 0; t < session.turns.size(); ++t) {
            auto& judged = data.qrels[session.qid(t)];
            for (const auto& [id, aspects] : by_topic[s]) {
                if (asked[t].empty()) {
                    judged[id] = 2;
                } else {
                    const bool names_aspect = aspects[0] == asked[t] || aspects[1] == asked[t];
                    judged[id] = names_aspect ? 3 : 2;
                }
            }
        }
        data.heldout_qids.insert(session.qid(session.turns.size() - 1));
        data.sessions.push_back(std::move(session));
    }
    return data;
}

void save_synthetic_dataset(const SyntheticDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_corpus(data.corpus, dir / "corpus.jsonl");
    save_sessions(data.sessions, dir / "sessions.jsonl");
    data.passages.save(dir / "passages.json");
    save_qrels(data.qrels, dir / "qrels.txt");
    std::string heldout;
    for (const auto& q : data.heldout_qids) heldout += q + "\n";
    binary::write_file((dir / "heldout.txt").string(), heldout);
}

}  // namespace cqe
