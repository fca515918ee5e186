#pragma once

// Versioned column-table text format for sampled forms and fields:
//
//   # weinfib-form-table v1
//   degree,backend,base_index,cell_index,value
//   1,cochain,0,0,0.098017140329560604
//
// Values use 17 significant digits, so cochains round-trip bit-exactly.
// Field samples use cell_index = point_index * component_count + component.

#include "weinfib/fibred_forms.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

namespace weinfib {

inline constexpr const char* kFormTableMagic = "# weinfib-form-table v1";

class FormTableError : public Error {
public:
    using Error::Error;
};

struct FormTableRow {
    int degree;
    Backend backend;
    int base_index;
    long cell_index;
    double value;
};

namespace detail {
inline std::string format17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace detail

inline void write_form_header(std::ostream& os)
{
    os << kFormTableMagic << '\n' << "degree,backend,base_index,cell_index,value\n";
}

inline void write_form_table(std::ostream& os, const FibredForm& a)
{
    const auto& c = a.cochain_data();
    write_form_header(os);
    for (std::size_t i = 0; i < c.slices.size(); ++i)
        for (Eigen::Index j = 0; j < c.slices[i].size(); ++j)
            os << c.degree << ",cochain," << i << ',' << j << ',' << detail::format17(c.slices[i][j]) << '\n';
}

/// Samples a field form at base samples x points and writes the rows.
inline void write_field_samples(std::ostream& os, const FibredForm& a, const std::vector<Vec>& points)
{
    const auto& f = a.field_data();
    write_form_header(os);
    for (int i = 0; i < a.base().size(); ++i) {
        const double b = a.base().sample(i);
        for (std::size_t p = 0; p < points.size(); ++p) {
            const Vec v = f(b, points[p]);
            for (Eigen::Index c = 0; c < v.size(); ++c)
                os << f.degree() << ",field," << i << ',' << static_cast<long>(p) * v.size() + c << ','
                   << detail::format17(v[c]) << '\n';
        }
    }
}

inline std::vector<FormTableRow> read_form_rows(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line != kFormTableMagic) throw FormTableError("missing or unknown form-table version line");
    if (!std::getline(is, line) || line != "degree,backend,base_index,cell_index,value")
        throw FormTableError("unexpected form-table header row");
    std::vector<FormTableRow> rows;
    long lineno = 2;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string deg, backend, bi, ci, val;
        if (!std::getline(ss, deg, ',') || !std::getline(ss, backend, ',') || !std::getline(ss, bi, ',')
            || !std::getline(ss, ci, ',') || !std::getline(ss, val))
            throw FormTableError("malformed row at line " + std::to_string(lineno));
        FormTableRow r{};
        try {
            r.degree = std::stoi(deg);
            r.base_index = std::stoi(bi);
            r.cell_index = std::stol(ci);
            // strtod, unlike stod, accepts subnormals.
            char* end = nullptr;
            r.value = std::strtod(val.c_str(), &end);
            if (end == val.c_str() || *end != '\0') throw std::invalid_argument(val);
        } catch (const std::exception&) {
            throw FormTableError("non-numeric field at line " + std::to_string(lineno));
        }
        if (backend == "cochain")
            r.backend = Backend::cochain;
        else if (backend == "field")
            r.backend = Backend::field;
        else
            throw FormTableError("unknown backend '" + backend + "' at line " + std::to_string(lineno));
        rows.push_back(r);
    }
    return rows;
}

/// Reads a cochain table back onto a known base grid and complex.
inline FibredForm read_form_table(std::istream& is, BaseGridPtr base, FibreComplexPtr complex)
{
    const auto rows = read_form_rows(is);
    if (rows.empty()) throw FormTableError("empty form table");
    const int k = rows.front().degree;
    const auto cells = static_cast<Eigen::Index>(complex->cell_count(k));
    std::vector<Vec> slices(static_cast<std::size_t>(base->size()), Vec::Constant(cells, std::nan("")));
    for (const auto& r : rows) {
        if (r.backend != Backend::cochain || r.degree != k) throw FormTableError("mixed degrees or backends in table");
        if (r.base_index < 0 || r.base_index >= base->size() || r.cell_index < 0 || r.cell_index >= cells)
            throw FormTableError("row index out of range");
        slices[static_cast<std::size_t>(r.base_index)][r.cell_index] = r.value;
    }
    for (const auto& s : slices)
        if (s.hasNaN()) throw FormTableError("table does not cover every cell");
    return FibredForm::cochain(std::move(base), std::move(complex), k, std::move(slices));
}

} // namespace weinfib
