#include "ldd/vocab.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

namespace ldd {

namespace {

const char* kSynonyms[kNumEntityClasses][kSynonymsPerClass] = {
    {"wolf", "hound", "lobo"},      {"ghoul", "wraith", "shade"},
    {"eagle", "hawk", "falcon"},    {"crab", "lobster", "pincer"},
    {"viper", "serpent", "adder"},  {"troll", "ogre", "brute"},
    {"fox", "vixen", "trickster"},  {"bear", "grizzly", "bruin"},
    {"wasp", "hornet", "stinger"},  {"toad", "frog", "croaker"},
    {"moth", "duskwing", "flutter"}, {"rat", "rodent", "vermin"},
};

}  // namespace

const Vocab& Vocab::instance() {
    static Vocab v;
    return v;
}

uint16_t Vocab::add_token(const std::string& surface) {
    tokens_.push_back(surface);
    return static_cast<uint16_t>(tokens_.size() - 1);
}

Vocab::Vocab() {
    // symbols: background, agent, then one per entity class
    symbols_.push_back(".");
    symbols_.push_back("@");
    for (int i = 0; i < kNumEntityClasses; ++i)
        symbols_.push_back("s" + std::to_string(2 + i));

    tok_the = add_token("the");
    tok_is = add_token("is");
    tok_your = add_token("your");
    tok_goal = add_token("goal");
    tok_it = add_token("it");
    tok_dangerous = add_token("dangerous");
    tok_harmless = add_token("harmless");
    tok_stays = add_token("stays");
    tok_still = add_token("still");
    tok_chases = add_token("chases");
    tok_you = add_token("you");
    tok_runs = add_token("runs");
    tok_away = add_token("away");
    tok_beside = add_token("beside");
    tok_reached = add_token("reached");
    tok_caught = add_token("caught");

    for (int i = 0; i < kNumEntityClasses; ++i) {
        EntityClass ec;
        ec.class_id = static_cast<uint8_t>(2 + i);
        for (int s = 0; s < kSynonymsPerClass; ++s)
            ec.synonym_tokens[static_cast<size_t>(s)] = add_token(kSynonyms[i][s]);
        classes_.push_back(ec);
    }

    hash_ = fnv1a(to_tsv());
}

uint16_t Vocab::token_id(const std::string& surface) const {
    for (size_t i = 0; i < tokens_.size(); ++i)
        if (tokens_[i] == surface) return static_cast<uint16_t>(i);
    throw ContractError("unknown token surface '" + surface + "'");
}

const EntityClass& Vocab::entity_class(uint8_t class_id) const {
    if (class_id < 2 || class_id >= kNumSymbols)
        throw ContractError("symbol id " + std::to_string(class_id) + " is not an entity class");
    return classes_[static_cast<size_t>(class_id - 2)];
}

std::string Vocab::to_tsv() const {
    std::ostringstream os;
    os << "# vocab v1\n";
    os << "id\tkind\tsurface\n";
    for (size_t i = 0; i < symbols_.size(); ++i)
        os << i << "\tsymbol\t" << symbols_[i] << "\n";
    for (size_t i = 0; i < tokens_.size(); ++i)
        os << i << "\ttoken\t" << tokens_[i] << "\n";
    return os.str();
}

std::string Vocab::detokenize(const std::vector<uint16_t>& ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += token_surface(ids[i]);
    }
    return out;
}

void write_vocab_tsv(const std::filesystem::path& path) {
    write_file_atomic(path, Vocab::instance().to_tsv());
}

uint64_t read_vocab_tsv_hash(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(IoError::Code::truncated, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string content = ss.str();
    if (content.rfind("# vocab v1\n", 0) != 0)
        throw IoError(IoError::Code::version_mismatch, "unrecognized vocab file " + path.string());
    return fnv1a(content);
}

}  // namespace ldd
