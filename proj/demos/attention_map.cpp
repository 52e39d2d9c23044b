// Prints the layer-0 attention of an untrained text encoder for one caption,
// averaged over heads, with the mask applied. Corner rows attend only to text.
//
//   demo_attention_map ["caption text"] [corners]
#include "lotlip/text_encoder.hpp"

#include <cstdio>
#include <cstdlib>
#include <string>

int main(int argc, char** argv) {
  using namespace lotlip;
  const std::string text = argc > 1 ? argv[1] : "a red cube. it is small. it sits on the left.";
  TextEncoderConfig c;
  c.limit = 20;
  c.corners = argc > 2 ? std::atoi(argv[2]) : 2;
  c.depth = 1;

  const auto words = split_words(text);
  const Vocabulary vocab = Vocabulary::from_words(std::set<std::string>(words.begin(), words.end()));
  c.vocab_size = static_cast<int>(vocab.size());
  const TokenSequence seq = tokenize(text, c.limit, c.corners, vocab);
  const ParameterSet params = init_text_params(c, 7);
  const auto heads = dump_attention(seq, params, c, 0);

  Matrix avg = Matrix::Zero(c.limit, c.limit);
  for (const auto& h : heads) avg += h / static_cast<double>(heads.size());

  std::printf("%-8s", "");
  for (int k = 0; k < c.limit; ++k) std::printf("%5.4s", vocab.token_of(seq.ids[static_cast<std::size_t>(k)]).c_str());
  std::printf("\n");
  for (int q = 0; q < c.limit; ++q) {
    std::printf("%-8.8s", vocab.token_of(seq.ids[static_cast<std::size_t>(q)]).c_str());
    for (int k = 0; k < c.limit; ++k) {
      const double a = avg(q, k);
      if (a == 0.0) {
        std::printf("%5s", ".");
      } else {
        std::printf("%5.2f", a);
      }
    }
    std::printf("\n");
  }
}
