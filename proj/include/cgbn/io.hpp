#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "cgbn/inference.hpp"
#include "cgbn/mixture.hpp"
#include "cgbn/model.hpp"

namespace cgbn {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Parses a network document. Schema problems (missing fields, wrong types)
/// raise FormatError; semantic problems are left for validate().
Network network_from_json(const Json& j);
Json network_to_json(const Network& net);

/// Flat object: discrete nodes map to a state label, continuous nodes to a number.
Evidence evidence_from_json(const Network& net, const Json& j);
Json evidence_to_json(const Network& net, const Evidence& e);

Json mixture_to_json(const Network& net, const GaussianMixture& m);
Json clique_tree_to_json(const CliqueTree& tree);

/// Serializes with every floating-point number at 17 significant digits.
std::string dump_json(const Json& j, int indent = 2);

/// Shortest text that reads back to the same double; infinities as "inf" / "-inf".
std::string format_double(double x);
/// Inverse of format_double.
double parse_double(std::string_view s);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t h);

/// Hashes of the canonical serialization; used to detect stale artifacts.
std::uint64_t network_hash(const Network& net);
std::uint64_t evidence_hash(const Network& net, const Evidence& e);

Json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

Network load_network(const std::filesystem::path& path);
Evidence load_evidence(const Network& net, const std::filesystem::path& path);

}  // namespace cgbn
