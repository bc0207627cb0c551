#include "raingraph/time_axis.hpp"

#include <cstdio>

#include "raingraph/csv.hpp"

namespace raingraph {

std::string YearMonth::str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
    return buf;
}

YearMonth YearMonth::parse(const std::string& s) {
    auto dash = s.find('-');
    if (dash == std::string::npos) throw std::invalid_argument("expected YYYY-MM, got: " + s);
    auto y = csv::parse_long(s.substr(0, dash));
    auto m = csv::parse_long(s.substr(dash + 1));
    if (!y || !m || !valid_month(static_cast<int>(*m))) throw std::invalid_argument("expected YYYY-MM, got: " + s);
    return {static_cast<int>(*y), static_cast<int>(*m)};
}

}  // namespace raingraph
