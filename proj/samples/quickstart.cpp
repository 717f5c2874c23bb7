// Tags two sentences from a one-shot support set, with and without the
// transition model. Run from anywhere; all data is inline.

#include <iostream>

#include "structshot/structshot.hpp"

using namespace structshot;

int main() {
    const Corpus source = parse_conll(
        "John\tI-PER\nSmith\tI-PER\nvisited\tO\nBerlin\tI-LOC\n.\tO\n\n"
        "The\tO\nbank\tO\nopened\tO\nin\tO\nParis\tI-LOC\n\n"
        "Mary\tI-PER\nsaid\tO\nno\tO\n.\tO\n");
    const Corpus support = parse_conll(
        "Ada\tI-PER\nLovelace\tI-PER\nlived\tO\nin\tO\nLondon\tI-LOC\n.\tO\n");
    const Corpus test = parse_conll(
        "Alan\tI-PER\nTuring\tI-PER\nlived\tO\nin\tO\nLondon\tI-LOC\n\n"
        "Ada\tI-PER\nvisited\tO\nLondon\tI-LOC\n.\tO\n");

    const std::vector<std::string> classes = compute_tag_set(support).classes;
    auto support_vecs = hash_featurize(support, 256, 1);
    auto test_vecs = hash_featurize(test, 256, 1);
    auto index = SupportIndex::build(support, support_vecs, classes);

    Warnings warnings;
    auto trans = apply_temperature(expand(estimate_abstract(count_abstract(source)), classes, &warnings), 0.01);

    std::vector<std::vector<TagLabel>> nn, structured;
    for (std::size_t i = 0; i < test.size(); ++i) {
        auto vecs = token_vectors(test_vecs, i);
        nn.push_back(nnshot_predict(vecs, index));
        structured.push_back(viterbi(sentence_emissions(vecs, index), trans, &warnings));
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
        for (std::size_t t = 0; t < test[i].size(); ++t)
            std::cout << test[i].tokens[t] << "\t" << test[i].tags[t].str() << "\t" << nn[i][t].str() << "\t"
                      << structured[i][t].str() << "\n";
        std::cout << "\n";
    }
    std::cout << "NNShot F1     " << span_micro_f1(test, nn).micro.f1 << "\n";
    std::cout << "StructShot F1 " << span_micro_f1(test, structured).micro.f1 << "\n";
    for (const auto& w : warnings.messages) std::cerr << "warning: " << w << "\n";
}
