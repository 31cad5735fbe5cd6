#include "paracycle/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "paracycle/errors.hpp"

namespace paracycle::io {

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw IoError("rename failed: " + tmp + " -> " + path);
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string series_csv(const std::string& index_name, const std::string& value_name,
                       const std::vector<std::pair<int, double>>& rows) {
    std::string out = index_name + "," + value_name + "\n";
    for (const auto& [i, v] : rows) {
        out += std::to_string(i);
        out += ',';
        out += format_fixed6(v);
        out += '\n';
    }
    return out;
}

}  // namespace paracycle::io
