#pragma once

// Deterministic file output: fixed 17-significant-digit float formatting, no
// timestamps, `#`-prefixed header comments carrying the tool version and the
// tolerance set in effect.

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tscope/errors.hpp"
#include "tscope/version.hpp"

namespace tscope {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns,
              const std::map<std::string, std::string>& header_info) {
        out_.open(path);
        if (!out_) throw ConfigError("cannot open output file " + path);
        out_ << "# " << kToolName << " " << kToolVersion << "\n";
        for (const auto& [k, v] : header_info) out_ << "# " << k << " = " << v << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i)
            out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }

    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out_ << (i ? "," : "") << fmt17(values[i]);
        out_ << "\n";
    }

    void comment(const std::string& text) { out_ << "# " << text << "\n"; }

private:
    std::ofstream out_;
};

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open output file " + path);
    out << content;
}

}  // namespace tscope
