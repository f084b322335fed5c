#include "adarank/core.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace adarank {

using nlohmann::json;

void CandidateSet::validate(int max_passages) const {
    if (query.id.empty()) throw std::invalid_argument("query id is empty");
    if (query.text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw std::invalid_argument("query text is empty: " + query.id);
    if (passages.empty()) throw std::invalid_argument("candidate set has no passages: " + query.id);
    if (m() > max_passages)
        throw std::invalid_argument("candidate set exceeds max passages: " + query.id);
    for (int i = 0; i < m(); ++i) {
        if (passages[i].ordinal != i + 1)
            throw std::invalid_argument("non-contiguous ordinals in candidate set: " + query.id);
        if (passages[i].text.empty())
            throw std::invalid_argument("empty passage text in candidate set: " + query.id);
    }
}

std::string_view to_string(GoldKind k) {
    switch (k) {
        case GoldKind::short_answers: return "short_answers";
        case GoldKind::list_answers: return "list_answers";
        case GoldKind::claims: return "claims";
    }
    return "short_answers";
}

GoldKind gold_kind_from_string(std::string_view s) {
    if (s == "short_answers") return GoldKind::short_answers;
    if (s == "list_answers") return GoldKind::list_answers;
    if (s == "claims") return GoldKind::claims;
    throw std::invalid_argument("unknown gold kind: " + std::string(s));
}

const std::vector<std::string> GoldLabels::claims() const {
    std::vector<std::string> out;
    out.reserve(items.size());
    for (const auto& set : items)
        if (!set.empty()) out.push_back(set.front());
    return out;
}

namespace {

std::string where(const std::filesystem::path& path, int line) {
    std::ostringstream os;
    os << path.string() << ":" << line;
    return os.str();
}

GoldLabels gold_from_json(const json& g, const std::string& loc) {
    GoldLabels gold;
    if (!g.contains("kind") || !g["kind"].is_string())
        throw DatasetError(loc + ": gold.kind missing or not a string");
    gold.kind = gold_kind_from_string(g["kind"].get<std::string>());
    if (!g.contains("items") || !g["items"].is_array())
        throw DatasetError(loc + ": gold.items missing or not an array");
    for (const auto& set : g["items"]) {
        if (!set.is_array() || set.empty())
            throw DatasetError(loc + ": gold alias set must be a non-empty array");
        std::vector<std::string> aliases;
        for (const auto& a : set) {
            if (!a.is_string()) throw DatasetError(loc + ": gold alias is not a string");
            aliases.push_back(a.get<std::string>());
        }
        if (gold.kind == GoldKind::claims && aliases.size() != 1)
            throw DatasetError(loc + ": claims items must be single-element lists");
        gold.items.push_back(std::move(aliases));
    }
    return gold;
}

// Builds one EvalInstance from already-extracted pieces, enforcing
// truncation and ordinal re-assignment.
EvalInstance make_instance(Query query, std::vector<Passage> passages, GoldLabels gold,
                           int max_passages, int* truncated, const std::string& loc) {
    if (query.id.empty()) throw DatasetError(loc + ": field query.id is empty");
    if (query.text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw DatasetError(loc + ": field query.text is empty");
    if (passages.empty()) throw DatasetError(loc + ": record has no passages");
    if (static_cast<int>(passages.size()) > max_passages) {
        passages.resize(max_passages);
        ++*truncated;
    }
    for (std::size_t i = 0; i < passages.size(); ++i) {
        passages[i].ordinal = static_cast<int>(i) + 1;
        if (passages[i].text.empty())
            throw DatasetError(loc + ": field passages[" + std::to_string(i) + "].text is empty");
    }
    EvalInstance inst;
    inst.candidate_set.query = std::move(query);
    inst.candidate_set.passages = std::move(passages);
    inst.gold = std::move(gold);
    return inst;
}

EvalInstance parse_native_record(const json& rec, int max_passages, int* truncated,
                                 const std::string& loc) {
    if (!rec.is_object()) throw DatasetError(loc + ": record is not an object");
    if (!rec.contains("query") || !rec["query"].is_object())
        throw DatasetError(loc + ": field query missing");
    Query q;
    q.id = rec["query"].value("id", "");
    q.text = rec["query"].value("text", "");
    if (!rec.contains("passages") || !rec["passages"].is_array())
        throw DatasetError(loc + ": field passages missing or not an array");
    std::vector<Passage> passages;
    for (const auto& p : rec["passages"]) {
        Passage pass;
        pass.doc_id = p.value("doc_id", "");
        if (p.contains("title") && p["title"].is_string())
            pass.title = p["title"].get<std::string>();
        pass.text = p.value("text", "");
        passages.push_back(std::move(pass));
    }
    if (!rec.contains("gold")) throw DatasetError(loc + ": field gold missing");
    return make_instance(std::move(q), std::move(passages), gold_from_json(rec["gold"], loc),
                         max_passages, truncated, loc);
}

// ALCE import: published field names question / docs[].title / docs[].text,
// gold from qa_pairs (alias sets of short answers), answers (list alias
// sets) or claims.
EvalInstance parse_alce_record(const json& rec, int index, int max_passages, int* truncated,
                               const std::string& loc) {
    if (!rec.is_object()) throw DatasetError(loc + ": record is not an object");
    Query q;
    if (rec.contains("id") && rec["id"].is_string())
        q.id = rec["id"].get<std::string>();
    else if (rec.contains("sample_id"))
        q.id = rec["sample_id"].is_string() ? rec["sample_id"].get<std::string>()
                                            : rec["sample_id"].dump();
    else
        q.id = "q" + std::to_string(index);
    q.text = rec.value("question", "");

    if (!rec.contains("docs") || !rec["docs"].is_array())
        throw DatasetError(loc + ": field docs missing or not an array");
    std::vector<Passage> passages;
    int di = 0;
    for (const auto& d : rec["docs"]) {
        Passage p;
        if (d.contains("id") && d["id"].is_string())
            p.doc_id = d["id"].get<std::string>();
        else
            p.doc_id = q.id + "-d" + std::to_string(di);
        if (d.contains("title") && d["title"].is_string())
            p.title = d["title"].get<std::string>();
        p.text = d.value("text", "");
        passages.push_back(std::move(p));
        ++di;
    }

    GoldLabels gold;
    if (rec.contains("qa_pairs") && rec["qa_pairs"].is_array()) {
        gold.kind = GoldKind::short_answers;
        for (const auto& pair : rec["qa_pairs"]) {
            if (!pair.contains("short_answers") || !pair["short_answers"].is_array() ||
                pair["short_answers"].empty())
                throw DatasetError(loc + ": qa_pairs entry lacks short_answers");
            std::vector<std::string> aliases;
            for (const auto& a : pair["short_answers"]) aliases.push_back(a.get<std::string>());
            gold.items.push_back(std::move(aliases));
        }
    } else if (rec.contains("answers") && rec["answers"].is_array()) {
        gold.kind = GoldKind::list_answers;
        for (const auto& set : rec["answers"]) {
            std::vector<std::string> aliases;
            if (set.is_array())
                for (const auto& a : set) aliases.push_back(a.get<std::string>());
            else if (set.is_string())
                aliases.push_back(set.get<std::string>());
            if (aliases.empty()) throw DatasetError(loc + ": empty answers alias set");
            gold.items.push_back(std::move(aliases));
        }
    } else if (rec.contains("claims") && rec["claims"].is_array()) {
        gold.kind = GoldKind::claims;
        for (const auto& c : rec["claims"]) gold.items.push_back({c.get<std::string>()});
    } else {
        throw DatasetError(loc + ": record has none of qa_pairs / answers / claims");
    }
    if (gold.items.empty()) throw DatasetError(loc + ": record has empty gold");
    return make_instance(std::move(q), std::move(passages), std::move(gold), max_passages,
                         truncated, loc);
}

}  // namespace

LoadResult load_dataset(const std::filesystem::path& path, DatasetFormat format,
                        int max_passages) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset file: " + path.string());
    if (max_passages < 1) throw DatasetError("max_passages must be >= 1");

    LoadResult result;
    std::unordered_set<std::string> seen_ids;
    bool kind_set = false;

    auto add = [&](EvalInstance inst, const std::string& loc) {
        if (!seen_ids.insert(inst.candidate_set.query.id).second)
            throw DatasetError(loc + ": duplicate query id " + inst.candidate_set.query.id);
        if (!kind_set) {
            result.kind = inst.gold.kind;
            kind_set = true;
        } else if (inst.gold.kind != result.kind) {
            throw DatasetError(loc + ": gold kind " + std::string(to_string(inst.gold.kind)) +
                               " mixes with " + std::string(to_string(result.kind)));
        }
        inst.candidate_set.validate(max_passages);
        result.instances.push_back(std::move(inst));
    };

    if (format == DatasetFormat::native_jsonl) {
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json rec;
            try {
                rec = json::parse(line);
            } catch (const json::exception& e) {
                throw DatasetError(where(path, lineno) + ": invalid JSON: " + e.what());
            }
            add(parse_native_record(rec, max_passages, &result.truncated_count,
                                    where(path, lineno)),
                where(path, lineno));
        }
    } else {
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw DatasetError(path.string() + ": invalid JSON: " + e.what());
        }
        if (!doc.is_array()) throw DatasetError(path.string() + ": ALCE file must be a JSON array");
        int index = 0;
        for (const auto& rec : doc) {
            std::string loc = path.string() + " record " + std::to_string(index);
            add(parse_alce_record(rec, index, max_passages, &result.truncated_count, loc), loc);
            ++index;
        }
    }

    if (result.instances.empty()) throw DatasetError(path.string() + ": dataset is empty");
    return result;
}

void save_dataset_native(const std::vector<EvalInstance>& instances,
                         const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot open output file: " + path.string());
    for (const auto& inst : instances) {
        json passages = json::array();
        for (const auto& p : inst.candidate_set.passages) {
            json jp{{"doc_id", p.doc_id}, {"text", p.text}};
            jp["title"] = p.title ? json(*p.title) : json(nullptr);
            passages.push_back(std::move(jp));
        }
        json rec{
            {"query", {{"id", inst.candidate_set.query.id}, {"text", inst.candidate_set.query.text}}},
            {"passages", std::move(passages)},
            {"gold", {{"kind", std::string(to_string(inst.gold.kind))}, {"items", inst.gold.items}}}};
        out << rec.dump() << '\n';
    }
}

std::string normalize_answer(std::string_view text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (unsigned char c : text) {
        if (std::ispunct(c)) continue;
        lowered.push_back(static_cast<char>(std::tolower(c)));
    }
    std::istringstream iss(lowered);
    std::string word;
    std::string out;
    while (iss >> word) {
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += word;
    }
    return out;
}

std::vector<std::string> content_words(std::string_view normalized) {
    static const std::set<std::string, std::less<>> kStopwords = {
        "about", "after",  "all",   "also",  "am",    "and",   "any",   "are",  "as",
        "at",    "be",     "been",  "before", "being", "but",   "by",    "can",  "could",
        "did",   "do",     "does",  "for",   "from",  "had",   "has",   "have", "he",
        "her",   "here",   "him",   "his",   "how",   "i",     "if",    "in",   "into",
        "is",    "it",     "its",   "just",  "may",   "me",    "more",  "most", "my",
        "no",    "not",    "of",    "on",    "only",  "or",    "other", "our",  "out",
        "over",  "she",    "should", "so",   "some",  "such",  "than",  "that", "their",
        "them",  "then",   "there", "these", "they",  "this",  "those", "to",   "under",
        "up",    "was",    "we",    "were",  "what",  "when",  "where", "which", "while",
        "who",   "why",    "will",  "with",  "would", "you",   "your"};
    std::istringstream iss{std::string(normalized)};
    std::string word;
    std::vector<std::string> out;
    while (iss >> word)
        if (!kStopwords.count(word)) out.push_back(word);
    return out;
}

}  // namespace adarank
