#include "adarank/protocol.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adarank/rng.hpp"

namespace adarank::protocol {

using nlohmann::json;

namespace {

// Replaces every occurrence of `slot` in `text` with `value`.
std::string fill_slot(std::string text, std::string_view slot, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(slot, pos)) != std::string::npos) {
        text.replace(pos, slot.size(), value);
        pos += value.size();
    }
    return text;
}

}  // namespace

PromptTemplate PromptTemplate::default_template() {
    PromptTemplate tpl;
    tpl.system_text =
        "You are an intelligent assistant that selects and ranks passages by how well "
        "they help answer a search query.";
    tpl.per_passage_format = "[{ordinal}] {title}: {text}";
    tpl.instruction_text =
        "Search Query: {query}\n\n"
        "From the {m} passages above, select only the passages that contribute to "
        "answering the query and rank them in descending order of relevance, using "
        "the format \"[2] > [1]\". Omit every passage that is irrelevant to the "
        "query. If none of the passages are relevant, output \"[0]\".";
    tpl.per_passage_char_budget = 1000;
    return tpl;
}

void PromptTemplate::validate() const {
    if (instruction_text.find("[0]") == std::string::npos)
        throw std::invalid_argument("instruction_text must mention the termination token [0]");
    if (instruction_text.find(" > ") == std::string::npos)
        throw std::invalid_argument("instruction_text must mention the output separator \" > \"");
    if (per_passage_format.find("{ordinal}") == std::string::npos)
        throw std::invalid_argument("per_passage_format must contain the {ordinal} slot");
    if (per_passage_char_budget < 1)
        throw std::invalid_argument("per_passage_char_budget must be positive");
}

PromptTemplate PromptTemplate::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open template file: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid template JSON in " + path.string() + ": " + e.what());
    }
    PromptTemplate tpl = default_template();
    tpl.system_text = doc.value("system_text", tpl.system_text);
    tpl.per_passage_format = doc.value("per_passage_format", tpl.per_passage_format);
    tpl.instruction_text = doc.value("instruction_text", tpl.instruction_text);
    tpl.per_passage_char_budget = doc.value("per_passage_char_budget", tpl.per_passage_char_budget);
    tpl.validate();
    return tpl;
}

std::string PromptTemplate::to_json_string() const {
    json doc{{"system_text", system_text},
             {"per_passage_format", per_passage_format},
             {"instruction_text", instruction_text},
             {"per_passage_char_budget", per_passage_char_budget}};
    return doc.dump(2);
}

std::string template_hash(const PromptTemplate& tpl) {
    std::uint64_t h = fnv1a64(tpl.to_json_string());
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::string truncate_at_word(std::string_view text, int budget) {
    if (budget <= 0 || static_cast<int>(text.size()) <= budget) return std::string(text);
    std::string_view window = text.substr(0, static_cast<std::size_t>(budget) + 1);
    std::size_t cut = window.find_last_of(" \t\n");
    if (cut == std::string_view::npos) cut = static_cast<std::size_t>(budget);
    std::string out(text.substr(0, cut));
    while (!out.empty() && (out.back() == ' ' || out.back() == '\t' || out.back() == '\n'))
        out.pop_back();
    return out;
}

std::vector<Message> build_rank_prompt(const CandidateSet& cs, const PromptTemplate& tpl) {
    tpl.validate();
    std::ostringstream user;
    for (const auto& p : cs.passages) {
        std::string line = tpl.per_passage_format;
        line = fill_slot(std::move(line), "{ordinal}", std::to_string(p.ordinal));
        line = fill_slot(std::move(line), "{title}", p.title.value_or(p.doc_id));
        line = fill_slot(std::move(line), "{text}", truncate_at_word(p.text, tpl.per_passage_char_budget));
        user << line << "\n";
    }
    std::string instruction = tpl.instruction_text;
    instruction = fill_slot(std::move(instruction), "{query}", cs.query.text);
    instruction = fill_slot(std::move(instruction), "{m}", std::to_string(cs.m()));
    user << "\n" << instruction;
    return {{"system", tpl.system_text}, {"user", user.str()}};
}

std::vector<Message> build_answer_prompt(const Query& query,
                                         const std::vector<Passage>& passages_in_order,
                                         GoldKind kind) {
    std::ostringstream user;
    int renumber = 0;
    for (const auto& p : passages_in_order) {
        user << "Document [" << ++renumber << "] (" << p.title.value_or(p.doc_id)
             << "): " << p.text << "\n";
    }
    if (renumber > 0) user << "\n";
    user << "Question: " << query.text << "\n\n";
    switch (kind) {
        case GoldKind::short_answers:
            user << "Answer the question with a short phrase.";
            break;
        case GoldKind::list_answers:
            user << "List every correct answer to the question, separated by commas.";
            break;
        case GoldKind::claims:
            user << "Write a complete answer of a few sentences covering all the relevant facts.";
            break;
    }
    return {{"system",
             "You are a helpful assistant that answers questions accurately and concisely."},
            {"user", user.str()}};
}

MalformedPolicy policy_from_string(std::string_view s) {
    if (s == "error") return MalformedPolicy::error;
    if (s == "fallback" || s == "fallback_original_order")
        return MalformedPolicy::fallback_original_order;
    if (s == "empty") return MalformedPolicy::empty;
    throw std::invalid_argument("unknown malformed policy: " + std::string(s));
}

Selection parse_selection(std::string_view raw, int m, MalformedPolicy policy) {
    if (m < 1) throw std::invalid_argument("parse_selection requires m >= 1");
    Selection sel;
    sel.raw_output = std::string(raw);

    std::set<int> seen;
    bool any_identifier = false;
    bool terminated = false;

    std::size_t i = 0;
    while (i < raw.size()) {
        if (raw[i] != '[') {
            ++i;
            continue;
        }
        std::size_t digits_begin = i + 1;
        std::size_t j = digits_begin;
        while (j < raw.size() && raw[j] >= '0' && raw[j] <= '9') ++j;
        if (j == digits_begin || j >= raw.size() || raw[j] != ']') {
            ++i;
            continue;
        }
        std::string digits(raw.substr(digits_begin, j - digits_begin));
        long long value = -1;
        if (digits.size() <= 9) std::from_chars(digits.data(), digits.data() + digits.size(), value);
        i = j + 1;

        if (value == 0) {
            if (!any_identifier) {
                // Termination token first: the empty selection.
                return sel;
            }
            if (!sel.ordinals.empty())
                sel.repair_notes.push_back("termination token [0] after " +
                                           std::to_string(sel.ordinals.size()) +
                                           " identifier(s); list truncated there");
            terminated = true;
            break;
        }
        any_identifier = true;
        if (value < 1 || value > m) {
            sel.repair_notes.push_back("dropped out-of-range identifier [" + digits +
                                       "] (m=" + std::to_string(m) + ")");
            continue;
        }
        int ord = static_cast<int>(value);
        if (!seen.insert(ord).second) {
            sel.repair_notes.push_back("dropped duplicate identifier [" + std::to_string(ord) + "]");
            continue;
        }
        sel.ordinals.push_back(ord);
    }

    if (sel.ordinals.empty() && !terminated) {
        switch (policy) {
            case MalformedPolicy::error:
                throw ParseFailure("no valid identifier in ranker output", std::string(raw));
            case MalformedPolicy::fallback_original_order:
                for (int k = 1; k <= m; ++k) sel.ordinals.push_back(k);
                sel.repair_notes.push_back("no valid identifiers; fell back to original order");
                break;
            case MalformedPolicy::empty:
                sel.repair_notes.push_back("no valid identifiers; treated as empty selection");
                break;
        }
    }
    return sel;
}

std::string render_selection(const std::vector<int>& ordinals) {
    if (ordinals.empty()) return "[0]";
    std::set<int> seen;
    std::ostringstream os;
    for (std::size_t i = 0; i < ordinals.size(); ++i) {
        if (ordinals[i] < 1)
            throw std::invalid_argument("render_selection: non-positive ordinal " +
                                        std::to_string(ordinals[i]));
        if (!seen.insert(ordinals[i]).second)
            throw std::invalid_argument("render_selection: duplicate ordinal " +
                                        std::to_string(ordinals[i]));
        if (i) os << " > ";
        os << "[" << ordinals[i] << "]";
    }
    return os.str();
}

}  // namespace adarank::protocol
