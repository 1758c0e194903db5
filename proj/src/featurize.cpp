#include "cmr/featurize.hpp"

#include "cmr/io.hpp"

#include <cctype>
#include <sstream>

namespace cmr {

std::string render_query_template(const std::string& head_name, const std::string& head_desc,
                                  const std::string& relation_desc) {
    if (head_name.empty()) throw InvariantError("query template: empty head entity name");
    std::string out;
    out.reserve(32 + head_name.size() + relation_desc.size() + head_desc.size());
    out += "[CLS] A photo of ";
    out += head_name;
    out += "'s ";
    out += relation_desc;
    out += "? [SEP] ";
    out += head_desc;
    return out;
}

std::vector<std::int32_t> hash_bow_counts(const std::string& text, const FeaturizerConfig& cfg) {
    cfg.validate();
    std::vector<std::int32_t> counts(static_cast<std::size_t>(cfg.hash_dim), 0);
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        const std::uint64_t h = mix64(fnv1a64(token.data(), token.size(), cfg.seed));
        const auto bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(cfg.hash_dim));
        counts[bucket] += (h >> 63) ? -1 : 1;
        token.clear();
    };
    for (const char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            flush();
        } else {
            token.push_back(cfg.lowercase ? static_cast<char>(std::tolower(c)) : raw);
        }
    }
    flush();
    return counts;
}

namespace {
constexpr char kFeatureMagic[4] = {'C', 'M', 'R', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;
}  // namespace

void save_feature_file(const std::string& path, const std::vector<std::string>& names,
                       const MatrixF& rows) {
    if (static_cast<Index>(names.size()) != rows.rows()) {
        throw InvariantError("feature file: name count " + std::to_string(names.size()) +
                             " != row count " + std::to_string(rows.rows()));
    }
    ByteWriter w;
    w.magic(kFeatureMagic);
    w.u32(kFeatureVersion);
    w.u64(static_cast<std::uint64_t>(rows.rows()));
    w.u32(static_cast<std::uint32_t>(rows.cols()));
    for (Index i = 0; i < rows.rows(); ++i)
        for (Index j = 0; j < rows.cols(); ++j) w.f32(rows(i, j));
    write_file_bytes(path, w.take());

    std::ostringstream sidecar;
    for (const auto& name : names) sidecar << name << '\n';
    write_text_file(path + ".names", sidecar.str());
}

RawFeatureFile load_feature_file_raw(const std::string& path, int expected_dim) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes, path);
    r.expect_magic(kFeatureMagic);
    const std::uint32_t version = r.u32();
    if (version != kFeatureVersion) {
        throw FormatError(path + ": unsupported feature file version " + std::to_string(version));
    }
    const std::uint64_t count = r.u64();
    const std::uint32_t dim = r.u32();
    if (expected_dim > 0 && dim != static_cast<std::uint32_t>(expected_dim)) {
        throw FormatError(path + ": feature dimension " + std::to_string(dim) + ", expected " +
                          std::to_string(expected_dim));
    }
    RawFeatureFile out;
    out.rows.resize(static_cast<Index>(count), static_cast<Index>(dim));
    for (std::uint64_t i = 0; i < count; ++i)
        for (std::uint32_t j = 0; j < dim; ++j)
            out.rows(static_cast<Index>(i), static_cast<Index>(j)) = r.f32();
    r.expect_end();

    const std::string text = read_text_file(path + ".names");
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.names.push_back(line);
    }
    if (out.names.size() != count) {
        throw FormatError(path + ".names: " + std::to_string(out.names.size()) +
                          " names for " + std::to_string(count) + " feature rows");
    }
    return out;
}

std::string PromptFeaturizer::truncated_desc(const std::string& desc) const {
    if (cfg_.max_desc_chars == 0 || desc.size() <= cfg_.max_desc_chars) return desc;
    return desc.substr(0, cfg_.max_desc_chars);
}

std::string PromptFeaturizer::relation_text(RelationId relation) const {
    const bool reversed = is_reversed_relation(relation, num_base_relations_);
    const RelationId base = base_relation(relation, num_base_relations_);
    const RelationInfo& info = vocab_->relation(base);
    const std::string& desc = info.description.empty() ? info.name : info.description;
    return reversed ? cfg_.inverse_prefix + desc : desc;
}

std::string PromptFeaturizer::query_prompt(EntityId head, RelationId relation) const {
    const EntityInfo& e = vocab_->entity(head);
    return render_query_template(e.name, truncated_desc(e.description), relation_text(relation));
}

std::string PromptFeaturizer::entity_text(EntityId entity) const {
    const EntityInfo& e = vocab_->entity(entity);
    if (e.description.empty()) return e.name;
    return e.name + " " + truncated_desc(e.description);
}

}  // namespace cmr
