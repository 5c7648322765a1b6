// io.hpp: small file helpers shared by the exporters

#pragma once

#include <string>

namespace qmem::io {

// Writes to a sibling temporary file and renames it over `path`.
void write_text_atomic(const std::string& path, const std::string& content);

std::string read_text(const std::string& path);

// Round-trippable decimal form.
std::string format_double(double x);

// 64-bit FNV-1a.
unsigned long long fnv1a(const std::string& data);

std::string hex64(unsigned long long x);

}  // namespace qmem::io
