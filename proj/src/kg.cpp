#include "cmr/kg.hpp"

#include "cmr/io.hpp"
#include "cmr/log.hpp"

#include <algorithm>
#include <sstream>

namespace cmr {

EntityId Vocabulary::add_entity(const std::string& name) {
    auto it = entity_ids_.find(name);
    if (it != entity_ids_.end()) return it->second;
    const auto id = static_cast<EntityId>(entities_.size());
    entities_.push_back(EntityInfo{name, "", false});
    entity_ids_.emplace(name, id);
    return id;
}

RelationId Vocabulary::add_relation(const std::string& name) {
    auto it = relation_ids_.find(name);
    if (it != relation_ids_.end()) return it->second;
    const auto id = static_cast<RelationId>(relations_.size());
    relations_.push_back(RelationInfo{name, ""});
    relation_ids_.emplace(name, id);
    return id;
}

EntityId Vocabulary::entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    if (it == entity_ids_.end()) throw InvariantError("unknown entity name: " + name);
    return it->second;
}

RelationId Vocabulary::relation_id(const std::string& name) const {
    auto it = relation_ids_.find(name);
    if (it == relation_ids_.end()) throw InvariantError("unknown relation name: " + name);
    return it->second;
}

bool GraphSplit::is_seen(EntityId e) const {
    return std::binary_search(seen_entities.begin(), seen_entities.end(), e);
}

FilterIndex FilterIndex::from_triples(const TripleSet& triples) {
    FilterIndex index;
    for (const Triple& t : triples) {
        index.tails_[key(t.head, t.relation)].push_back(t.tail);
    }
    for (auto& [k, tails] : index.tails_) {
        std::sort(tails.begin(), tails.end());
        tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
    }
    return index;
}

FilterIndex FilterIndex::from_splits(const GraphSplit& splits) {
    TripleSet all;
    all.reserve(splits.train.size() + splits.valid.size() + splits.test.size());
    all.insert(all.end(), splits.train.begin(), splits.train.end());
    all.insert(all.end(), splits.valid.begin(), splits.valid.end());
    all.insert(all.end(), splits.test.begin(), splits.test.end());
    return from_triples(all);
}

const std::vector<EntityId>& FilterIndex::lookup(EntityId head, RelationId relation) const {
    static const std::vector<EntityId> empty;
    auto it = tails_.find(key(head, relation));
    return it == tails_.end() ? empty : it->second;
}

bool FilterIndex::contains(EntityId head, RelationId relation, EntityId tail) const {
    const auto& tails = lookup(head, relation);
    return std::binary_search(tails.begin(), tails.end(), tail);
}

namespace {

// Splits a line on TAB without tokenizing the fields themselves; free text
// in the last field may contain anything but TAB and newline.
std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace

TripleSet parse_triples(const std::string& text, Vocabulary& vocab, const std::string& context) {
    TripleSet triples;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
            throw ParseError(context + ": line " + std::to_string(line_no) +
                             ": expected head<TAB>relation<TAB>tail, got " +
                             std::to_string(fields.size()) + " field(s)");
        }
        Triple t;
        t.head = vocab.add_entity(fields[0]);
        t.relation = vocab.add_relation(fields[1]);
        t.tail = vocab.add_entity(fields[2]);
        triples.push_back(t);
    }
    return triples;
}

TripleSet ingest_triples(const std::string& path, Vocabulary& vocab) {
    return parse_triples(read_text_file(path), vocab, path);
}

TripleSet add_reversed(const TripleSet& triples, std::size_t num_relations) {
    TripleSet out;
    out.reserve(triples.size() * 2);
    for (const Triple& t : triples) {
        if (t.relation >= num_relations) {
            throw InvariantError("add_reversed: relation id " + std::to_string(t.relation) +
                                 " out of range (num_relations=" + std::to_string(num_relations) + ")");
        }
        out.push_back(t);
    }
    for (const Triple& t : triples) {
        Triple rev;
        rev.head = t.tail;
        rev.relation = static_cast<RelationId>(t.relation + num_relations);
        rev.tail = t.head;
        rev.reversed = true;
        out.push_back(rev);
    }
    return out;
}

TripleSet strip_reversed(const TripleSet& triples) {
    TripleSet out;
    out.reserve(triples.size() / 2);
    for (const Triple& t : triples) {
        if (!t.reversed) out.push_back(t);
    }
    return out;
}

bool is_reversed_relation(RelationId relation, std::size_t num_relations) {
    return relation >= num_relations;
}

RelationId base_relation(RelationId relation, std::size_t num_relations) {
    return is_reversed_relation(relation, num_relations)
               ? static_cast<RelationId>(relation - num_relations)
               : relation;
}

GraphSplit build_splits(TripleSet train, TripleSet valid, TripleSet test, SplitMode mode,
                        std::size_t num_entities) {
    GraphSplit splits;
    splits.mode = mode;
    splits.num_entities = num_entities;

    std::vector<bool> seen(num_entities, false);
    for (const Triple& t : train) {
        seen.at(t.head) = true;
        seen.at(t.tail) = true;
    }
    for (EntityId e = 0; e < num_entities; ++e) {
        (seen[e] ? splits.seen_entities : splits.unseen_entities).push_back(e);
    }

    auto touches_unseen = [&](const Triple& t) { return !seen[t.head] || !seen[t.tail]; };

    if (mode == SplitMode::transductive) {
        for (const TripleSet* set : {&valid, &test}) {
            for (const Triple& t : *set) {
                if (touches_unseen(t)) {
                    const EntityId bad = seen[t.head] ? t.tail : t.head;
                    throw InvariantError("transductive split: entity id " + std::to_string(bad) +
                                         " does not appear in the train graph");
                }
            }
        }
    } else {
        std::size_t all_seen_test = 0;
        for (const Triple& t : test) {
            if (!touches_unseen(t)) ++all_seen_test;
        }
        if (all_seen_test > 0) {
            std::ostringstream msg;
            msg << "inductive split: " << all_seen_test
                << " test triple(s) touch only train-graph entities";
            splits.warnings.push_back(msg.str());
            log_warn(msg.str());
        }
    }

    splits.train = std::move(train);
    splits.valid = std::move(valid);
    splits.test = std::move(test);
    return splits;
}

void parse_description_lines(const std::string& text, const std::string& context,
                             const std::function<bool(const std::string&, const std::string&)>& set_fn,
                             const std::function<void(const std::string&)>& on_unknown) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::size_t pos = line.find('\t');
        if (pos == std::string::npos || pos == 0) {
            throw ParseError(context + ": line " + std::to_string(line_no) +
                             ": expected name<TAB>description");
        }
        const std::string name = line.substr(0, pos);
        const std::string desc = line.substr(pos + 1);
        if (!set_fn(name, desc)) on_unknown(name);
    }
}

}  // namespace cmr
