#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "iar/molecule.hpp"

namespace iar {

// XYZ text format: atom count, comment line, then "symbol x y z" per atom.
// A comment of the form "class <k>" carries the optional class label.
inline Molecule parse_xyz(const std::string& text, const ElementTable& table) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("xyz: empty input");
    int count = 0;
    try {
        std::size_t pos = 0;
        count = std::stoi(line, &pos);
        while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
        if (pos != line.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw std::runtime_error("xyz: invalid atom count line: '" + line + "'");
    }
    if (count < 1) throw std::runtime_error("xyz: atom count must be >= 1");

    if (!std::getline(in, line)) throw std::runtime_error("xyz: missing comment line");
    Molecule mol;
    {
        std::istringstream cs(line);
        std::string tag;
        int k;
        if ((cs >> tag >> k) && tag == "class") mol.class_id = k;
    }

    for (int i = 0; i < count; ++i) {
        if (!std::getline(in, line)) {
            throw std::runtime_error("xyz: expected " + std::to_string(count) + " atoms, got " +
                                     std::to_string(i));
        }
        std::istringstream as(line);
        std::string symbol;
        double x, y, z;
        if (!(as >> symbol >> x >> y >> z)) {
            throw std::runtime_error("xyz: malformed atom line: '" + line + "'");
        }
        mol.atom_types.push_back(table.charge_of(symbol));
        mol.coords.emplace_back(x, y, z);
    }
    while (std::getline(in, line)) {
        for (char c : line) {
            if (!std::isspace(static_cast<unsigned char>(c))) {
                throw std::runtime_error("xyz: trailing data after atom records");
            }
        }
    }
    validate_molecule(mol, table);
    return mol;
}

inline std::string write_xyz(const Molecule& mol, const ElementTable& table) {
    validate_molecule(mol, table);
    std::ostringstream out;
    out << mol.size() << "\n";
    if (mol.class_id) out << "class " << *mol.class_id;
    for (std::size_t i = 0; i < mol.size(); ++i) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s %.6f %.6f %.6f", table.symbol_of(mol.atom_types[i]).c_str(),
                      mol.coords[i].x(), mol.coords[i].y(), mol.coords[i].z());
        out << "\n" << buf;
    }
    return out.str();
}

inline Molecule read_xyz_file(const std::string& path, const ElementTable& table) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("xyz: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_xyz(ss.str(), table);
}

inline void write_xyz_file(const std::string& path, const Molecule& mol, const ElementTable& table) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("xyz: cannot open " + path + " for writing");
    f << write_xyz(mol, table) << "\n";
}

}  // namespace iar
