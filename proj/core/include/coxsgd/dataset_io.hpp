#ifndef COXSGD_DATASET_IO_HPP
#define COXSGD_DATASET_IO_HPP

#include "coxsgd/survival.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace coxsgd {

// CSV layout: optional '#' comment lines, then a header `x1,...,xp,time,event`,
// then one record per line. event is 0 or 1; '.' is the decimal separator.

Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv(const std::filesystem::path& path);

/// `comment` lines (without the leading '#') are written before the header.
void write_dataset_csv(std::ostream& out, const Dataset& data, std::string_view comment = {});
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data, std::string_view comment = {});

/// 64-bit FNV-1a, used to tag outputs with the configuration that made them.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// "config_hash=<16 hex digits> seed=<seed>".
std::string provenance_line(std::string_view resolved_config, std::uint64_t seed);

}  // namespace coxsgd

#endif  // COXSGD_DATASET_IO_HPP
