#ifndef DIAMOND_EMBEDDED_DATA_HPP
#define DIAMOND_EMBEDDED_DATA_HPP

#include <string_view>

// Contents of data/ compiled into the library.
namespace diamond::embedded {

std::string_view lexicon_tsv();
std::string_view minicorpus_txt();

} // namespace diamond::embedded

#endif // DIAMOND_EMBEDDED_DATA_HPP
