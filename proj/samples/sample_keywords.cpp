// Prints the top keywords per class and a few drop probabilities for a
// synthetic corpus.

#include <iomanip>
#include <iostream>

#include <gidropout/gidropout.hpp>

int main() {
  using namespace gidropout;
  auto [train, test] = SynthCorpus(SynthConfig{}).generate();
  const auto table = build_table(train, ScoringConfig{1.0, 1e-12});

  for (std::size_t c = 0; c < train.num_classes(); ++c) {
    std::cout << "class " << train.label_names[c] << ":";
    for (const auto& w : top_keywords(table, c, 8)) std::cout << ' ' << w;
    std::cout << '\n';
  }
  std::cout << std::fixed << std::setprecision(4);
  for (const char* w : {"strong0_0", "weak0_0", "bg0", "bg100"})
    std::cout << w << "\tp=" << table.prob(w) << '\n';

  const auto fit = zipf_diagnostic(table);
  std::cout << "zipf slope " << fit.slope << ", r^2 " << fit.r_squared << '\n';
}
