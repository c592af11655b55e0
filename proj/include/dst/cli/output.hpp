#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dst/common.hpp"

namespace dst::cli {

class IoError : public Error {
public:
    using Error::Error;
};

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    explicit Table(std::vector<std::string> cols) : columns(std::move(cols)) {}
    void add(std::vector<Cell> row);
};

// 17 significant digits, locale independent.
std::string format_number(double v);

std::string to_csv(const Table& table);
nlohmann::json to_json(const Table& table);

// Writes to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

std::string sha256_hex(const std::string& content);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace dst::cli
